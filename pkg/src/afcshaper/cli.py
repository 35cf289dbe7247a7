"""Command-line entry point.

Every subcommand reads a JSON config (defaults when omitted), writes its
outputs under ``--out`` together with ``manifest.json``, and exits with
0 on success, 2 on a config or input-file error, 3 on a numerical failure
and 4 when a tolerance check was flagged.
"""

import argparse
import json
import logging
import platform
import sys
import warnings
from importlib import metadata
from pathlib import Path

import numpy as np

from . import __version__
from . import config as config_mod
from ._validation import ConfigError, NumericalError

log = logging.getLogger("afcshaper")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_TOLERANCE = 0, 2, 3, 4
PANEL_SCENARIOS = {"standard": "a", "plain": "b", "cropped": "c"}
SCENARIOS = (*PANEL_SCENARIOS, "ion-hom", "all")


def versions():
    out = {"python": platform.python_version(), "afcshaper": __version__}
    for dist in ("numpy", "scipy", "numba", "scikit-learn"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = None
    return out


def write_manifest(out_dir, command, cfg, flags=()):
    manifest = {
        "command": command,
        "config": cfg,
        "config_sha256": config_mod.config_hash(cfg),
        "seed": cfg["run"]["seed"],
        "versions": versions(),
        "flags": list(flags),
    }
    with open(Path(out_dir) / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def _print(summary):
    for key, value in summary.items():
        if key == "_" or isinstance(value, (dict, list)):
            continue
        print(f"{key:>28}: {value}")


def cmd_simulate(cfg, out_dir, args):
    from .scenarios import ScenarioConfig, run_memory

    res = run_memory(ScenarioConfig.from_config(cfg), None, out_dir)
    _print(res)
    return res["flags"]


def cmd_shape(cfg, out_dir, args):
    from .scenarios import ScenarioConfig, design
    from .shaper import piecewise_output
    from .waveform import save_csv

    mode = cfg["shaping"]["mode"]
    if mode == "none":
        raise ConfigError("shape needs shaping.mode 'plain' or 'cropped'")
    d = design(ScenarioConfig.from_config(cfg), mode)
    d["plan"].save_json(out_dir / "plan.json")
    with open(out_dir / "schedule.json", "w") as fh:
        json.dump(d["schedule"].to_dict(), fh, indent=2)
    save_csv(piecewise_output(d["plan"], d["h_in"], d["target"].grid), out_dir / "predicted.csv")
    save_csv(d["target"], out_dir / "target.csv")
    print(f"predicted overlap R = {d['plan'].R:.6f} with {d['layout'].n_shape} bins")
    return []


def _photon(h, side):
    from .hom import MixedPhoton, load_mixture_json
    from .waveform import load_csv

    csv, mix = h[f"photon_{side}_csv"], h[f"photon_{side}_mixture_json"]
    if (csv is None) == (mix is None):
        raise ConfigError(f"set exactly one of hom.photon_{side}_csv and hom.photon_{side}_mixture_json")
    if csv is not None:
        return MixedPhoton.pure(load_csv(csv).normalized())
    return load_mixture_json(mix)


def cmd_hom(cfg, out_dir, args):
    from .hom import optimize_offset, visibility_mixed_mixed_asymptotic, visibility_windowed

    h = cfg["hom"]
    a, b = _photon(h, "a"), _photon(h, "b")
    search = h["offset_search_us"] * 1e-6
    offset, v_inf = optimize_offset(a, b, (-search, search))
    b = b.shifted(offset)
    v_inf = visibility_mixed_mixed_asymptotic(a, b)
    tol = cfg["run"]["hom_stderr_tolerance"]
    rows, flags = [], []
    for T in h["windows_us"]:
        r = visibility_windowed(a, b, T * 1e-6, h["samples"], h["scrambles"], cfg["run"]["seed"], tol)
        rows.append((T * 1e-6, r.value, r.stderr))
        if r.flagged:
            flags.append(f"T={T} us: stderr {r.stderr:.3g} > {tol:g}")
        print(f"T = {T:8.3f} us   V = {r.value:.5f} ± {r.stderr:.1e}")
    np.savetxt(out_dir / "visibility.csv", np.array(rows), delimiter=",",
               header="T_s,visibility,stderr", comments="", fmt="%.17g")
    with open(out_dir / "summary.json", "w") as fh:
        json.dump({"offset_s": offset, "asymptotic_visibility": v_inf, "flags": flags}, fh,
                  indent=2, sort_keys=True)
    print(f"asymptotic V = {v_inf:.5f} at offset {offset * 1e6:.4f} us")
    return flags


def cmd_network(cfg, out_dir, args):
    from .network import Efficiencies, format_report, save_report, scenario_report

    n = cfg["network"]
    rows = {}
    for name, vkey, fkey in (("baseline", "visibility_baseline", None),
                             ("filtered_only", "visibility_filtered", "memory_factor_filtered"),
                             ("shaped_filtered", "visibility_shaped_filtered",
                              "memory_factor_shaped_filtered")):
        if n[vkey] is not None:
            rows[name] = {"visibility": n[vkey], "memory_factor": n[fkey] if fkey else 1.0}
    if not rows:
        rows["ideal"] = {"visibility": 1.0, "memory_factor": 1.0}
    report = scenario_report(Efficiencies(n["eta_det"], n["eta_ion"], n["eta_mem"]), rows,
                             n["infidelity"])
    save_report(report, out_dir / "report.json")
    print(format_report(report))
    return []


def cmd_params(cfg, out_dir, args):
    from .comb import ShapeKind
    from .params import CavityGeometry, CrystalAbsorption, derivation_table

    m, c = cfg["memory"], cfg["comb"]
    cav = CavityGeometry(m["cavity_r1"], m["cavity_length_mm"] * 1e-3, m["cavity_r2"])
    crys = CrystalAbsorption(m["mean_depth"], m["crystal_length_mm"] * 1e-3)
    env = ShapeKind(c["envelope"], config_mod.mhz(c["envelope_width_mhz"]))
    ref = (m["rabi_reference_w_cm2"], config_mod.mhz(m["rabi_reference_mhz"]))
    rows = derivation_table(cav, crys, env, cfg["shaping"]["pulse_duration_us"] * 1e-6,
                            m["beam_diameter_um"] * 1e-6, ref)
    with open(out_dir / "params.csv", "w") as fh:
        fh.write("quantity,value,unit,formula\n")
        for name, value, unit, formula in rows:
            fh.write(f"{name},{value:.17g},{unit},\"{formula}\"\n")
    for name, value, unit, formula in rows:
        print(f"{name:>22} = {value:<12.6g} {unit:<8} {formula}")
    return []


def cmd_scenario(cfg, out_dir, args):
    from .scenarios import run_shaping_panel, run_ion_hom

    names = SCENARIOS[:-1] if args.name == "all" else (args.name,)
    flags, panels = [], {}
    for name in names:
        if name in PANEL_SCENARIOS:
            panel = PANEL_SCENARIOS[name]
            res = run_shaping_panel(panel, cfg, out_dir / name)
            panels[panel] = res
        else:
            res = run_ion_hom(cfg, out_dir / name, panels, threads=cfg["run"]["threads"])
            print(json.dumps(res["report"], indent=2, sort_keys=True))
        print(f"[{name}]")
        _print(res)
        flags += [f"{name}: {f}" for f in res["flags"]]
    return flags


COMMANDS = {
    "simulate": (cmd_simulate, "run the memory with the configured shaping mode"),
    "shape": (cmd_shape, "compute a shaping plan and its pulse schedule"),
    "hom": (cmd_hom, "HOM visibility between two photons from files"),
    "network": (cmd_network, "heralding probability and fidelity table"),
    "params": (cmd_params, "derive model rates from laboratory parameters"),
    "scenario": (cmd_scenario, "end-to-end reproduction runs"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="afcshaper", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        if name == "scenario":
            p.add_argument("name", choices=SCENARIOS)
        p.add_argument("--config", type=Path, default=None,
                       help="JSON config or a previous manifest.json")
        p.add_argument("--seed", type=int, default=None, help="overrides run.seed")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--threads", type=int, default=None, help="overrides run.threads")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_mod.load(args.config) if args.config else config_mod.resolve()
        if args.seed is not None:
            cfg["run"]["seed"] = args.seed
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be at least 1")
            cfg["run"]["threads"] = args.threads
        out_dir = args.out or Path("runs") / args.command
        out_dir.mkdir(parents=True, exist_ok=True)
        func = COMMANDS[args.command][0]
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            flags = func(cfg, out_dir, args)
        write_manifest(out_dir, args.command if args.command != "scenario" else f"scenario {args.name}",
                       cfg, flags)
    except (ConfigError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for f in flags:
        print(f"tolerance flag: {f}", file=sys.stderr)
    return EXIT_TOLERANCE if flags else EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())

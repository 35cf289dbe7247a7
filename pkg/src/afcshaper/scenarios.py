"""End-to-end pipelines: memory run with shaping and filtering, and the ion-memory HOM study.

Every pipeline takes a resolved configuration dict (see :mod:`afcshaper.config`)
and returns a plain summary dict. When ``out_dir`` is given the waveforms are
written as CSV and the summary as JSON.
"""

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._validation import ConfigError
from .comb import CombSpec, ShapeKind, build_comb
from .config import khz, mhz
from .dynamics import MemoryParams, energy_budget, make_grid, simulate, window_efficiency
from .hom import (MixedPhoton, build_mixture, load_mixture_json, optimize_offset,
                  visibility_mixed_mixed_asymptotic, visibility_pure_mixed,
                  visibility_pure_pure, visibility_windowed)
from .network import Efficiencies, scenario_report
from .shaper import (BinLayout, best_target_shift, build_readout_schedule, make_plan,
                     optimize_crop, readout_window_start, stored_photon)
from .waveform import (Envelope, ExtrapolationWarning, SpectralBoxFilter, TimeGrid,
                       box_filter, crop_to, decimate, gaussian_sigma, load_csv, make_asymmetric_ion_like,
                       make_exponential, make_gaussian, overlap, pad_for_filter, pad_to,
                       resample, save_csv)

PANEL_MODES = {"a": "none", "b": "plain", "c": "cropped"}
TARGET_DT = 1e-9
ION_DT = 5e-9
FILTER_DT = 4e-9
FILTER_GUARD = 2e-6
FILTER_RESOLUTION = 400.0


class ProvenanceWarning(UserWarning):
    """A synthetic stand-in replaced a waveform that should come from a file."""


@dataclass(frozen=True)
class ScenarioConfig:
    """Resolved configuration plus the pieces every pipeline needs.

    Build with :meth:`from_config`; ``cfg`` keeps the raw dict for manifests.
    """

    cfg: dict
    spec: CombSpec
    params: MemoryParams
    tau: float

    @classmethod
    def from_config(cls, cfg):
        c = cfg["comb"]
        spec = CombSpec(
            ShapeKind(c["envelope"], mhz(c["envelope_width_mhz"])),
            ShapeKind(c["tooth"], khz(c["tooth_width_khz"]) if c["tooth"] != "dirac" else 0.0),
            c["n_teeth"],
            delta=None if c["period_khz"] is None else khz(c["period_khz"]),
            classes_per_tooth=c["classes_per_tooth"],
        )
        m = cfg["memory"]
        params = MemoryParams(mhz(m["kappa_mhz"]), mhz(m["g_sqrt_n_mhz"]), build_comb(spec),
                              khz(m["gamma_p_khz"]), khz(m["gamma_s_khz"]))
        return cls(cfg, spec, params, cfg["shaping"]["pulse_duration_us"] * 1e-6)


def _input(cfg):
    """Input photon, its centre time and its FWHM."""
    i = cfg["input"]
    if i["shape"] == "csv" or i["waveform_csv"] is not None:
        if i["waveform_csv"] is None:
            raise ConfigError("input.shape='csv' needs input.waveform_csv")
        env = load_csv(i["waveform_csv"]).normalized()
        return env, env.centroid(), env.fwhm()
    center = i["center_us"] * 1e-6
    if i["shape"] == "gaussian":
        fwhm = i["fwhm_ns"] * 1e-9
        grid = TimeGrid(0.0, 1e-9, int(round((center + 8 * fwhm) / 1e-9)) + 1)
        return make_gaussian(grid, center, fwhm), center, fwhm
    decay = i["decay_ns"] * 1e-9
    grid = TimeGrid(0.0, 1e-9, int(round((center + 20 * decay) / 1e-9)) + 1)
    env = make_exponential(grid, center, decay)
    return env, env.centroid(), env.fwhm()


def _stored_shape(env, center, fwhm, cfg):
    """Shape the echo copies into each bin, centred on zero."""
    if cfg["input"]["shape"] == "gaussian" and cfg["input"]["waveform_csv"] is None:
        return stored_photon(env.grid.dt, fwhm)
    g = env.grid
    return Envelope(TimeGrid(g.t0 - center, g.dt, g.n), env.samples)


def _target_factory(cfg, a, span):
    """Callable ``shift -> target`` placing the target peak at ``a + shift``."""
    s = cfg["shaping"]
    if s["target_csv"] is not None:
        env = load_csv(s["target_csv"]).normalized()
        peak = env.times[int(np.argmax(env.intensity))]

        def from_file(shift):
            return Envelope(TimeGrid(env.grid.t0 - peak + a + shift, env.grid.dt, env.grid.n),
                            env.samples)
        return from_file
    grid = TimeGrid(a - 10e-6, TARGET_DT, int(round((span + 20e-6) / TARGET_DT)))

    def synthetic(shift):
        return make_asymmetric_ion_like(grid, s["target_rise"], s["target_fall"],
                                        s["target_fwhm_us"] * 1e-6, center=a + shift)
    return synthetic


def design(sc, mode=None):
    """Bin layout, shaping plan, target and pulse schedule for one memory run.

    Args:
        sc: ScenarioConfig.
        mode: ``"none"`` (single readout), ``"plain"`` or ``"cropped"``;
            defaults to ``shaping.mode``.

    Returns:
        Dict with ``layout``, ``plan``, ``target``, ``schedule``, ``input``
        and timing fields.
    """
    cfg = sc.cfg
    s = cfg["shaping"]
    mode = mode or s["mode"]
    inp, t_in, fwhm = _input(cfg)
    sigma = gaussian_sigma(fwhm)
    h = _stored_shape(inp, t_in, fwhm, cfg)
    sync = s["sync"] if s["sync"] is not None else mode != "none"
    tau = sc.tau
    margin = (3 * fwhm + tau / 2) if s["storage_margin_us"] is None else s["storage_margin_us"] * 1e-6
    gap = None if s["gap_us"] is None else s["gap_us"] * 1e-6
    crop = None
    if mode == "none":
        n, w = 1, s["plain_bin_sigmas"] * sigma
    elif mode == "plain":
        n, w = s["n_shape"], s["plain_bin_sigmas"] * sigma
    else:
        crop = optimize_crop("gaussian")["M"] if s["crop_factor"] is None else s["crop_factor"]
        n, w = s["n_shape"], 2 * crop * sigma
    T = sc.spec.rephasing_time
    a = readout_window_start(t_in, T, tau, w, sync, margin, gap) + s["bin_offset_us"] * 1e-6
    layout = BinLayout.starting_at(a, w, n)
    target_fn = _target_factory(cfg, a, n * w)
    if n == 1:
        # a single readout releases the echo unchanged: the natural target is the input itself
        tg = TimeGrid(a - 5 * w, h.grid.dt, int(round(11 * w / h.grid.dt)))
        target = Envelope(tg, make_gaussian(tg, a + w / 2, fwhm).samples) \
            if cfg["input"]["shape"] == "gaussian" else Envelope(
                TimeGrid(h.grid.t0 + a + w / 2, h.grid.dt, h.grid.n), h.samples).normalized()
        shift = w / 2
    else:
        shift, _ = best_target_shift(target_fn, h, layout, np.linspace(0, n * w, 25),
                                     crop=mode == "cropped")
        target = target_fn(shift)
    plan = make_plan(target, h, layout, crop=mode == "cropped")
    schedule = build_readout_schedule(
        plan, tau, "cropped" if mode == "cropped" else "plain", sync, input_center=t_in,
        rephasing_time=T, storage_margin=margin, gap=gap, sigma=sigma,
    )
    return {
        "mode": mode, "sync": sync, "layout": layout, "plan": plan, "target": target,
        "target_shift": shift, "schedule": schedule, "input": inp, "input_center": t_in,
        "input_fwhm": fwhm, "h_in": h, "crop_factor": crop, "storage_margin": margin,
    }


def _filter(cfg):
    f = cfg["filter"]
    return SpectralBoxFilter(mhz(f["half_width_mhz"]), mhz(f["center_mhz"]))


def filtered_photon(e_window, filt, target=None, pad=10e-6):
    """Box-filter a windowed output.

    The field is first reduced to a ``FILTER_DT`` step (the filter band is
    far below that Nyquist frequency) so the spectral grid can be made
    ``FILTER_RESOLUTION`` times finer than the band without huge transforms.

    Returns:
        ``(photon, retained, overlap)``: the filtered field cropped to the window
        ±``pad`` and normalised, the retained energy fraction and, if a
        window-normalised ``target`` is given, the amplitude overlap with it.
    """
    guarded = pad_to(e_window, e_window.grid.t0 - FILTER_GUARD, e_window.grid.t_end + FILTER_GUARD)
    coarse = decimate(guarded, FILTER_DT)
    padded = pad_for_filter(coarse, filt.half_width, FILTER_RESOLUTION)
    filtered, retained = box_filter(padded, filt)
    retained *= coarse.energy() / e_window.energy()
    ov = None
    if target is not None:
        with warnings.catch_warnings():
            # the target is already cut to the window, its edges are meant to be zero-filled
            warnings.simplefilter("ignore", ExtrapolationWarning)
            tp = resample(target, padded.grid)
        ov = abs(overlap(tp, filtered)) / math.sqrt(filtered.energy())
    lo = e_window.grid.t0 - pad
    hi = e_window.grid.t_end + pad
    photon = crop_to(filtered, lo, hi).normalized()
    return photon, retained, ov


def run_memory(sc, mode=None, out_dir=None):
    """Simulate one shaped (or unshaped) memory run and score its output.

    The efficiency is the output energy inside the shaping window over the
    input energy. The conditional overlap is the amplitude
    ``|⟨target, E_out⟩| / √η_out`` with the target and the output both
    restricted to the window and the target normalised there. The filtered
    variants apply the spectral box filter to the windowed output.

    Returns:
        Summary dict (plain numbers) with extra in-memory entries under ``"_"``.
    """
    cfg = sc.cfg
    d = design(sc, mode)
    lay = d["layout"]
    run = cfg["run"]
    t_end = lay.b + 0.5e-6 if run["t_end_us"] is None else run["t_end_us"] * 1e-6
    dt = None if run["dt_ns"] is None else run["dt_ns"] * 1e-9
    grid = make_grid(sc.params, 0.0, t_end, d["schedule"], dt)
    out = simulate(sc.params, d["input"], d["schedule"], grid)
    window = (lay.a, lay.b)
    eff = window_efficiency(out, window)
    e_win = out.e_out.masked(*window)
    eta_out = e_win.energy()
    with warnings.catch_warnings():
        # only the part inside the window is used
        warnings.simplefilter("ignore", ExtrapolationWarning)
        target_w = resample(d["target"], grid, method=run["resample"]).masked(*window).normalized()
    cond = abs(overlap(target_w, e_win)) / math.sqrt(eta_out)
    photon, retained, f_ov = filtered_photon(crop_to(e_win, *window), _filter(cfg),
                                             crop_to(target_w, *window))
    deviation = energy_budget(out) if out.lossless else None
    flags = []
    if deviation is not None and deviation > run["budget_tolerance"]:
        flags.append(f"energy budget deviation {deviation:.3g} > {run['budget_tolerance']:g}")
    summary = {
        "mode": d["mode"],
        "sync": d["sync"],
        "n_shape": lay.n_shape,
        "bin_width_s": lay.bin_width,
        "window_s": [lay.a, lay.b],
        "crop_factor": d["crop_factor"],
        "target_shift_s": d["target_shift"],
        "predicted_overlap": d["plan"].R,
        "efficiency": eff,
        "conditional_overlap": cond,
        "conditional_overlap_squared": cond**2,
        "filter_retained": retained,
        "filtered_efficiency": eff * retained,
        "filtered_overlap": f_ov,
        "budget_deviation": deviation,
        "dt_s": grid.dt,
        "n_steps": grid.n - 1,
        "flags": flags,
    }
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        out.save(out_dir, "output", {"shaping_window": window})
        save_csv(crop_to(e_win, *window), out_dir / "window.csv")
        save_csv(photon, out_dir / "filtered.csv")
        save_csv(crop_to(target_w, *window), out_dir / "target.csv")
        d["plan"].save_json(out_dir / "plan.json")
        _dump(summary, out_dir / "summary.json")
    summary["_"] = {"output": out, "design": d, "window_photon": crop_to(e_win, *window).normalized(),
                    "filtered_photon": photon, "target": target_w}
    return summary


def run_shaping_panel(panel, cfg, out_dir=None):
    """One panel of the shaping comparison.

    Args:
        panel: ``"a"`` (standard single readout), ``"b"`` (plain 20-bin shaping)
            or ``"c"`` (cropped 20-bin shaping).
        cfg: Resolved configuration dict (its ``shaping.mode`` is overridden).
        out_dir: Optional output directory.
    """
    if panel not in PANEL_MODES:
        raise ConfigError(f"panel must be one of {sorted(PANEL_MODES)}, got {panel!r}")
    res = run_memory(ScenarioConfig.from_config(cfg), PANEL_MODES[panel], out_dir)
    res["panel"] = panel
    return res


def ion_photons(cfg):
    """Pure and mixed ion photons from files or, failing that, a synthetic stand-in.

    The synthetic pure photon is the ion-like target family emitted at ``t = 0``.
    The mixed photon delays it by an exponentially distributed time (mean
    ``hom.ion_shift_mean_us``) and adds a vacuum weight ``hom.ion_p0``.

    Returns:
        ``(pure Envelope, MixedPhoton, provenance dict)``.
    """
    h = cfg["hom"]
    s = cfg["shaping"]
    prov = {}
    if h["ion_pure_csv"] is not None:
        pure = load_csv(h["ion_pure_csv"]).normalized()
        prov["pure"] = h["ion_pure_csv"]
    else:
        warnings.warn("no ion waveform file given: using the SYNTHETIC ion-like photon",
                      ProvenanceWarning, stacklevel=2)
        fwhm = s["target_fwhm_us"] * 1e-6
        grid = TimeGrid(0.0, ION_DT, int(round(12 * fwhm / ION_DT)) + 1)
        pure = make_asymmetric_ion_like(grid, s["target_rise"], s["target_fall"], fwhm,
                                        center=2 * fwhm, start=0.0)
        prov["pure"] = "synthetic"
    if h["ion_mixture_json"] is not None:
        mixed = load_mixture_json(h["ion_mixture_json"])
        prov["mixed"] = h["ion_mixture_json"]
    else:
        if h["ion_pure_csv"] is not None:
            warnings.warn("no ion mixture file given: using a SYNTHETIC delay mixture",
                          ProvenanceWarning, stacklevel=2)
        mean = h["ion_shift_mean_us"] * 1e-6
        shifts = np.linspace(0.0, h["ion_shift_span_us"] * 1e-6, h["ion_shift_points"])
        masses = np.exp(-shifts / mean)
        mixed = build_mixture(pure, h["ion_p0"], (shifts, masses))
        prov["mixed"] = "synthetic"
    return pure, mixed, prov


def _aligned(afc, ion, search):
    """Delay of the ion photon that best matches ``afc`` and the visibility there."""
    mean = sum(c.weight * (c.psi.centroid() + c.shift) for c in ion.components)
    guess = afc.centroid() - mean / sum(c.weight for c in ion.components)
    return optimize_offset(afc, ion, (guess - search, guess + search))


def run_ion_hom(cfg, out_dir=None, panels=None, threads=1):
    """HOM visibility between memory photons and ion photons versus coincidence window.

    Args:
        cfg: Resolved configuration dict.
        out_dir: Optional output directory.
        panels: Optional ``{"a": result, "c": result}`` from :func:`run_shaping_panel`
            to avoid re-simulating.
        threads: Worker threads for the window sweep.

    Returns:
        Summary with the visibility curves, asymptotic visibilities, offsets and
        the network report rows ``baseline``, ``filtered_only`` and ``shaped_filtered``.
    """
    panels = dict(panels or {})
    for p in ("a", "c"):
        if p not in panels:
            panels[p] = run_shaping_panel(p, cfg)
    h = cfg["hom"]
    seed = cfg["run"]["seed"]
    tol = cfg["run"]["hom_stderr_tolerance"]
    search = h["offset_search_us"] * 1e-6
    pure, mixed, prov = ion_photons(cfg)
    filt = _filter(cfg)

    unshaped = panels["a"]["_"]["window_photon"]
    unshaped_f, ret_a, _ = filtered_photon(unshaped, filt)
    shaped_f = panels["c"]["_"]["filtered_photon"]
    memory = {"unshaped": unshaped, "unshaped_filtered": unshaped_f, "shaped_filtered": shaped_f}

    offsets, asym = {}, {}
    for name, photon in memory.items():
        for kind, ion in (("pure", pure), ("mixed", mixed)):
            off, _ = _aligned(photon, MixedPhoton.pure(ion) if kind == "pure" else ion, search)
            offsets[f"{name}/{kind}"] = off
            if kind == "pure":
                asym[f"{name}/{kind}"] = visibility_pure_pure(photon, _shift(ion, off))
            else:
                asym[f"{name}/{kind}"] = visibility_pure_mixed(photon, ion.shifted(off))

    windows = [w * 1e-6 for w in h["windows_us"]]
    curves = {}
    flags = []
    jobs = []
    for name in ("unshaped", "shaped_filtered"):
        for kind, ion in (("pure", MixedPhoton.pure(pure)), ("mixed", mixed)):
            key = f"{name}/{kind}"
            partner = ion.shifted(offsets[key])
            for T in windows:
                jobs.append((key, T, memory[name], partner))

    def work(job):
        key, T, a, b = job
        return visibility_windowed(a, b, T, h["samples"], h["scrambles"], seed, tol)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(work, jobs))
    else:
        results = [work(j) for j in jobs]
    for (key, T, _, _), r in zip(jobs, results):
        curves.setdefault(key, []).append({"T_s": T, "value": r.value, "stderr": r.stderr})
        if r.flagged:
            flags.append(f"{key} at T={T:g} s: stderr {r.stderr:.3g} > {tol:g}")

    n = cfg["network"]
    eff = Efficiencies(n["eta_det"], n["eta_ion"], n["eta_mem"])
    eff_a = panels["a"]["efficiency"]
    rows = {
        "baseline": {"visibility": asym["unshaped/mixed"], "memory_factor": 1.0},
        "filtered_only": {"visibility": asym["unshaped_filtered/mixed"], "memory_factor": ret_a},
        "shaped_filtered": {
            "visibility": asym["shaped_filtered/mixed"],
            "memory_factor": min(1.0, panels["c"]["filtered_efficiency"] / eff_a),
        },
    }
    report = scenario_report(eff, rows, n["infidelity"])
    summary = {
        "provenance": prov,
        "ion_pure_fwhm_s": pure.fwhm(),
        "offsets_s": offsets,
        "asymptotic_visibility": asym,
        "curves": curves,
        "report": report,
        "flags": flags,
    }
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, photon in memory.items():
            save_csv(photon, out_dir / f"memory_{name}.csv")
        save_csv(pure, out_dir / "ion_pure.csv")
        mixed.save_json(out_dir / "ion_mixed.json")
        _save_curves(curves, windows, out_dir / "visibility_curves.csv")
        _dump(summary, out_dir / "summary.json")
    summary["_"] = {"memory": memory, "ion_pure": pure, "ion_mixed": mixed}
    return summary


def _shift(env, offset):
    g = env.grid
    return Envelope(TimeGrid(g.t0 + offset, g.dt, g.n), env.samples)


def _save_curves(curves, windows, path):
    keys = sorted(curves)
    cols = ["T_s"] + [f"{k.replace('/', '_')}{s}" for k in keys for s in ("", "_stderr")]
    rows = []
    for i, T in enumerate(windows):
        row = [T]
        for k in keys:
            row += [curves[k][i]["value"], curves[k][i]["stderr"]]
        rows.append(row)
    np.savetxt(path, np.array(rows), delimiter=",", header=",".join(cols), comments="",
               fmt="%.17g")


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items() if k != "_"}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _dump(summary, path):
    with open(path, "w") as fh:
        json.dump(_clean(summary), fh, indent=2, sort_keys=True)

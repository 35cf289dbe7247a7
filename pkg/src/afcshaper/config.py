"""JSON run configuration with unit-suffixed keys.

Frequencies are given in Hz multiples (``*_mhz``, ``*_khz``) and converted
to angular frequency (×2π) once, here. Times carry ``*_us`` / ``*_ns``.
"""

import copy
import hashlib
import json
import math
from pathlib import Path

from ._validation import ConfigError

DEFAULTS = {
    "memory": {
        "kappa_mhz": 55.0,
        "g_sqrt_n_mhz": 8.4,
        "gamma_p_khz": 0.0,
        "gamma_s_khz": 0.0,
        "cavity_r1": 0.4,
        "cavity_r2": 1.0,
        "cavity_length_mm": 208.0,
        "mean_depth": 0.48,
        "crystal_length_mm": 5.0,
        "beam_diameter_um": 50.0,
        "rabi_reference_w_cm2": 250.0,
        "rabi_reference_mhz": 1.6,
    },
    "comb": {
        "envelope": "rectangular",
        "envelope_width_mhz": 4.0,
        "tooth": "gaussian",
        "tooth_width_khz": 1.0,
        "n_teeth": 67,
        "period_khz": None,
        "classes_per_tooth": 21,
    },
    "input": {
        "shape": "gaussian",
        "fwhm_ns": 330.0,
        "center_us": 1.5,
        "decay_ns": 200.0,
        "waveform_csv": None,
    },
    "shaping": {
        "mode": "none",
        "n_shape": 20,
        "pulse_duration_us": 0.07,
        "storage_margin_us": None,
        "plain_bin_sigmas": 6.0,
        "crop_factor": None,
        "sync": None,
        "gap_us": None,
        "bin_offset_us": 0.0,
        "target_csv": None,
        "target_rise": 0.3,
        "target_fall": 1.0,
        "target_fwhm_us": 6.0,
    },
    "filter": {
        "half_width_mhz": 0.15,
        "center_mhz": 0.0,
    },
    "hom": {
        "windows_us": [0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 40.0],
        "samples": 4096,
        "scrambles": 32,
        "photon_a_csv": None,
        "photon_a_mixture_json": None,
        "photon_b_csv": None,
        "photon_b_mixture_json": None,
        "ion_pure_csv": None,
        "ion_mixture_json": None,
        "ion_p0": 0.0,
        "ion_shift_mean_us": 5.5,
        "ion_shift_span_us": 25.0,
        "ion_shift_points": 40,
        "offset_search_us": 10.0,
    },
    "network": {
        "eta_det": 0.9,
        "eta_ion": 0.1,
        "eta_mem": 0.5,
        "infidelity": 0.0,
        "visibility_baseline": None,
        "visibility_filtered": None,
        "visibility_shaped_filtered": None,
        "memory_factor_filtered": 1.0,
        "memory_factor_shaped_filtered": 1.0,
    },
    "run": {
        "seed": 0,
        "t_end_us": None,
        "dt_ns": None,
        "resample": "linear",
        "threads": 1,
        "budget_tolerance": 1e-6,
        "hom_stderr_tolerance": 0.02,
    },
}

CHOICES = {
    ("comb", "envelope"): ("rectangular", "gaussian", "lorentzian"),
    ("comb", "tooth"): ("dirac", "rectangular", "gaussian", "lorentzian"),
    ("input", "shape"): ("gaussian", "exponential", "csv"),
    ("shaping", "mode"): ("none", "plain", "cropped"),
    ("run", "resample"): ("linear", "bandlimited"),
}

LIST_KEYS = {("hom", "windows_us")}
PATH_KEYS = {k for s in DEFAULTS.values() for k in s if k.endswith(("_csv", "_json"))}
BOOL_KEYS = {("shaping", "sync")}
INT_KEYS = {("comb", "n_teeth"), ("comb", "classes_per_tooth"), ("shaping", "n_shape"),
            ("hom", "samples"), ("hom", "scrambles"), ("hom", "ion_shift_points"),
            ("run", "seed"), ("run", "threads")}


def _check_value(section, key, value):
    where = f"{section}.{key}"
    default = DEFAULTS[section][key]
    if value is None:
        return None
    if (section, key) in CHOICES:
        if value not in CHOICES[(section, key)]:
            raise ConfigError(f"{where} must be one of {list(CHOICES[(section, key)])}, got {value!r}")
        return value
    if (section, key) in LIST_KEYS:
        if not isinstance(value, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0 for v in value
        ):
            raise ConfigError(f"{where} must be a list of positive numbers (microseconds)")
        return [float(v) for v in value]
    if key in PATH_KEYS:
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a file path string")
        return value
    if (section, key) in BOOL_KEYS:
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be true, false or null")
        return value
    if (section, key) in INT_KEYS:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
        return value
    if isinstance(default, str):
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        unit = key.rsplit("_", 1)[-1] if "_" in key else "dimensionless"
        raise ConfigError(f"{where} must be a finite number (unit: {unit}), got {value!r}")
    return float(value)


def _unknown_key(section, key):
    stem = key.rsplit("_", 1)[0]
    near = [k for k in DEFAULTS[section] if k.rsplit("_", 1)[0] == stem]
    if near:
        unit = near[0].rsplit("_", 1)[-1]
        return f"unknown key '{section}.{key}': expected '{section}.{near[0]}' (unit: {unit})"
    return f"unknown key '{section}.{key}' (allowed: {sorted(DEFAULTS[section])})"


def resolve(doc=None):
    """Merge a user document into the defaults, rejecting unknown sections and keys.

    Args:
        doc: Parsed JSON mapping (sections to key/value mappings).

    Returns:
        Fully populated configuration dict.
    """
    cfg = copy.deepcopy(DEFAULTS)
    for section, values in (doc or {}).items():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown config section '{section}' (allowed: {sorted(DEFAULTS)})")
        if not isinstance(values, dict):
            raise ConfigError(f"config section '{section}' must be a mapping")
        for key, value in values.items():
            if key not in DEFAULTS[section]:
                raise ConfigError(_unknown_key(section, key))
            cfg[section][key] = _check_value(section, key, value)
    return cfg


def load(path):
    """Read a config file, or the ``config`` block of a run manifest."""
    path = Path(path)
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if isinstance(doc, dict) and "config_sha256" in doc and "config" in doc:
        doc = doc["config"]
    cfg = resolve(doc)
    base = path.parent
    for section in cfg.values():
        for key, value in section.items():
            if key in PATH_KEYS and value is not None and not Path(value).is_absolute():
                section[key] = str((base / value).resolve())
    return cfg


def config_hash(cfg):
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def mhz(x):
    """MHz to rad/s."""
    return 2 * math.pi * 1e6 * x


def khz(x):
    """kHz to rad/s."""
    return 2 * math.pi * 1e3 * x

"""Conversions between laboratory quantities and model rates."""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._validation import ConfigError, check_positive
from .comb import d_comb

C_LIGHT = 299_792_458.0
TWO_PI = 2 * math.pi
RABI_REFERENCE = (250.0, TWO_PI * 1.6e6)  # (W/cm², rad/s)


def hz_to_rad(f):
    """Frequency in Hz to angular frequency in rad/s."""
    return TWO_PI * f


def rad_to_hz(w):
    return w / TWO_PI


@dataclass(frozen=True)
class CavityGeometry:
    """One-sided cavity: input mirror ``R1``, back mirror ``R2``, length ``L_cav`` (m)."""

    R1: float
    L_cav: float
    R2: float = 1.0

    def __post_init__(self):
        if not 0 < self.R1 < 1:
            raise ConfigError(f"R1 must lie in (0, 1), got {self.R1!r}")
        if not 0 < self.R2 <= 1:
            raise ConfigError(f"R2 must lie in (0, 1], got {self.R2!r}")
        check_positive("L_cav", self.L_cav)

    @property
    def round_trip_reflectivity(self):
        return self.R1 * self.R2


@dataclass(frozen=True)
class CrystalAbsorption:
    """Mean optical depth ``d_tilde`` of a crystal of length ``L_crys`` (m)."""

    d_tilde: float
    L_crys: float
    d_max: Optional[float] = None

    def __post_init__(self):
        check_positive("d_tilde", self.d_tilde, allow_zero=True)
        check_positive("L_crys", self.L_crys)


def kappa_from_cavity(c):
    """Field decay rate ``-c·ln(R1·R2)/(4L)`` (rad/s); ``R2 = 1`` for a one-sided cavity."""
    return -C_LIGHT * math.log(c.round_trip_reflectivity) / (4 * c.L_cav)


def kappa_linear(c):
    """Small-loss form ``c(1-R1·R2)/(4L)``."""
    return C_LIGHT * (1 - c.round_trip_reflectivity) / (4 * c.L_cav)


def finesse(c):
    """Cavity finesse.

    Returns:
        Dict with the ``exact`` value ``(π/2)/arcsin((1-√R)/(2R^{1/4}))`` for the
        round-trip reflectivity ``R = R1·R2`` and the ``approx`` value ``πc/(2Lκ)``.
    """
    r = c.round_trip_reflectivity
    exact = (math.pi / 2) / math.asin((1 - math.sqrt(r)) / (2 * r**0.25))
    approx = math.pi * C_LIGHT / (2 * c.L_cav * kappa_from_cavity(c))
    return {"exact": exact, "approx": approx}


def kappa_from_finesse(F, L_cav):
    """Inverse of the approximate finesse relation."""
    return math.pi * C_LIGHT / (2 * L_cav * F)


def g_sqrt_N_from_depth(a, envelope, L_cav):
    """Cavity coupling ``√(d̃·c/(D_comb·L_cav))`` (rad/s)."""
    check_positive("L_cav", L_cav)
    return math.sqrt(a.d_tilde * C_LIGHT / (d_comb(envelope) * L_cav))


def rescale_coupling(g_sqrt_N_free, L_crys, L_cav):
    """Free-space coupling rescaled to the cavity mode: ``g√N·√(L_crys/L_cav)``."""
    return g_sqrt_N_free * math.sqrt(L_crys / L_cav)


def impedance_match_check(c, a):
    """``F·d̃ - π`` with the exact finesse (zero when matched, negative when under-absorbing)."""
    return finesse(c)["exact"] * a.d_tilde - math.pi


def rabi_from_intensity(intensity, reference=RABI_REFERENCE):
    """``Ω = Ω0·√(I/I0)`` with intensity in W/cm²."""
    check_positive("intensity", intensity, allow_zero=True)
    i0, om0 = reference
    return om0 * math.sqrt(intensity / i0)


def intensity_for_rabi(rabi, reference=RABI_REFERENCE):
    i0, om0 = reference
    return i0 * (rabi / om0) ** 2


def pi_pulse_power(tau, beam_diameter, reference=RABI_REFERENCE):
    """Peak power (W) of a rectangular π-pulse of length ``tau``.

    Returns:
        Dict with ``rabi`` (rad/s), ``intensity`` (W/cm²) and ``power`` (W).
    """
    check_positive("tau", tau)
    check_positive("beam_diameter", beam_diameter)
    rabi = math.pi / tau
    intensity = intensity_for_rabi(rabi, reference)
    area_cm2 = math.pi * (100 * beam_diameter) ** 2 / 4
    return {"rabi": rabi, "intensity": intensity, "power": intensity * area_cm2}


def optical_depth_profile(comb, g_sqrt_N_free, L_crys, bin_width=None):
    """Optical depth ``(2π g²N/c)·n(ω)·L_crys`` of the discretised comb.

    ``n(ω)`` is the class weight divided by ``bin_width`` (the class spacing by default).

    Returns:
        ``(omegas, depth)`` arrays.
    """
    om = comb.omegas
    if bin_width is None:
        gaps = np.diff(om)
        bin_width = float(np.median(gaps[gaps > 0])) if gaps.size else 1.0
    density = comb.weights / bin_width
    return om, 2 * math.pi * g_sqrt_N_free**2 / C_LIGHT * density * L_crys


def mean_depth(g_sqrt_N_free, envelope, L_crys):
    """Comb-averaged optical depth ``g²N·D_comb·L/c``."""
    return g_sqrt_N_free**2 * d_comb(envelope) * L_crys / C_LIGHT


def peak_to_mean_depth(tooth, comb_finesse):
    """``d_max/d̃`` for a tooth shape at a given comb finesse."""
    factor = {
        "rectangular": 1.0,
        "gaussian": 2 * math.sqrt(math.log(2) / math.pi),
        "lorentzian": 2 / math.pi,
    }
    if tooth.kind not in factor:
        raise ConfigError("peak depth needs a finite-width tooth")
    return comb_finesse * factor[tooth.kind]


def derivation_table(c, a, envelope, tau, beam_diameter, reference=RABI_REFERENCE):
    """Rows ``(quantity, value, unit, formula)`` from lab inputs to model parameters."""
    kap = kappa_from_cavity(c)
    fin = finesse(c)
    g = g_sqrt_N_from_depth(a, envelope, c.L_cav)
    pulse = pi_pulse_power(tau, beam_diameter, reference)
    return [
        ("R1", c.R1, "", "input"),
        ("R2", c.R2, "", "input"),
        ("L_cav", c.L_cav, "m", "input"),
        ("d_tilde", a.d_tilde, "", "input"),
        ("kappa/2pi", rad_to_hz(kap) / 1e6, "MHz", "-c ln(R1 R2)/(4 L_cav)"),
        ("kappa_linear/2pi", rad_to_hz(kappa_linear(c)) / 1e6, "MHz", "c (1-R1 R2)/(4 L_cav)"),
        ("finesse_exact", fin["exact"], "", "(pi/2)/arcsin((1-sqrt R)/(2 R^(1/4))), R=R1 R2"),
        ("finesse_approx", fin["approx"], "", "pi c/(2 L_cav kappa)"),
        ("g_sqrt_N/2pi", rad_to_hz(g) / 1e6, "MHz", "sqrt(d_tilde c/(D_comb L_cav))"),
        ("impedance_residual", impedance_match_check(c, a), "", "F d_tilde - pi"),
        ("pi_pulse_rabi/2pi", rad_to_hz(pulse["rabi"]) / 1e6, "MHz", "pi/tau"),
        ("pi_pulse_intensity", pulse["intensity"] / 1e3, "kW/cm^2", "I0 (Omega/Omega0)^2"),
        ("pi_pulse_power", pulse["power"] * 1e3, "mW", "I * pi d^2/4"),
    ]

"""Atomic frequency comb distributions and the constants derived from them.

Shapes ``u(ω)`` with width parameter ``γ``:

* dirac: ``δ(ω)``
* rectangular: indicator of ``[-γ/2, γ/2]``
* gaussian: ``exp(-ω²/(2γ²))``
* lorentzian: ``1/(1 + ω²/γ²)``
"""

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._validation import ConfigError, check_choice, check_positive, frozen

SHAPES = ("dirac", "rectangular", "gaussian", "lorentzian")
GAUSSIAN_TRUNCATION = 4.0


@dataclass(frozen=True)
class ShapeKind:
    """A line shape and its width parameter (rad/s; ignored for ``dirac``)."""

    kind: str
    width: float = 0.0

    def __post_init__(self):
        check_choice("shape kind", self.kind, SHAPES)
        if self.kind != "dirac":
            check_positive(f"{self.kind} width", self.width)

    def value(self, omega):
        """Unnormalised shape ``u(ω)`` (dirac returns 1 at 0, else 0)."""
        omega = np.asarray(omega, dtype=float)
        g = self.width
        if self.kind == "dirac":
            return (omega == 0).astype(float)
        if self.kind == "rectangular":
            return (np.abs(omega) <= 0.5 * g * (1 + 1e-12)).astype(float)
        if self.kind == "gaussian":
            return np.exp(-0.5 * (omega / g) ** 2)
        return 1.0 / (1.0 + (omega / g) ** 2)

    def fourier(self, t):
        """Fourier transform ``ũ(t) = ∫u(ω)e^{-iωt}dω`` (real and even for these shapes)."""
        t = np.asarray(t, dtype=float)
        g = self.width
        if self.kind == "dirac":
            return np.ones_like(t)
        if self.kind == "rectangular":
            return g * np.sinc(g * t / (2 * np.pi))
        if self.kind == "gaussian":
            return math.sqrt(2 * np.pi) * g * np.exp(-0.5 * (g * t) ** 2)
        return np.pi * g * np.exp(-g * np.abs(t))

    def fwhm(self):
        if self.kind == "dirac":
            return 0.0
        if self.kind == "rectangular":
            return self.width
        if self.kind == "gaussian":
            return 2 * math.sqrt(2 * math.log(2)) * self.width
        return 2 * self.width


@dataclass(frozen=True)
class CombSpec:
    """Comb layout: envelope ``v`` of width Γ, teeth ``w`` of width γ, period Δ.

    When ``delta`` is omitted it is set to ``Γ/(n_teeth - 1)`` so that the
    teeth span the envelope width.
    """

    envelope: ShapeKind
    tooth: ShapeKind
    n_teeth: int
    delta: Optional[float] = None
    classes_per_tooth: int = 21

    def __post_init__(self):
        if self.envelope.kind == "dirac":
            raise ConfigError("the comb envelope cannot be a dirac shape")
        if self.n_teeth < 3:
            raise ConfigError(f"n_teeth must be >= 3, got {self.n_teeth}")
        cpt = self.classes_per_tooth
        if cpt < 1 or cpt % 2 == 0:
            raise ConfigError(f"classes_per_tooth must be odd and >= 1, got {cpt}")
        if self.delta is None:
            object.__setattr__(self, "delta", self.envelope.width / (self.n_teeth - 1))
        check_positive("delta", self.delta)
        if self.envelope.width / self.delta < 4:
            warnings.warn("comb envelope is less than 4 periods wide", stacklevel=2)
        if self.tooth.kind != "dirac" and self.delta / self.tooth.fwhm() < 2:
            warnings.warn("comb teeth are wider than half a period", stacklevel=2)

    @property
    def Gamma(self):
        return self.envelope.width

    @property
    def rephasing_time(self):
        """First echo delay ``2π/Δ``."""
        return 2 * np.pi / self.delta


@dataclass(frozen=True, eq=False)
class CombGrid:
    """Discrete frequency classes ``ω_k`` with populations ``n_k`` summing to one."""

    omegas: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        om = np.asarray(self.omegas, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if om.shape != w.shape or om.ndim != 1 or om.size == 0:
            raise ConfigError("omegas and weights must be equal-length 1-d arrays")
        if np.any(w < 0):
            raise ConfigError("class weights must be non-negative")
        if abs(w.sum() - 1) > 1e-9:
            raise ConfigError(f"class weights sum to {w.sum()!r}, expected 1")
        object.__setattr__(self, "omegas", frozen(om))
        object.__setattr__(self, "weights", frozen(w))

    @property
    def n_classes(self):
        return self.omegas.size

    def response(self, t):
        """``Σ n_k e^{-iω_k t}`` at times ``t``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.exp(-1j * np.outer(t, self.omegas)) @ self.weights


def _tooth_offsets(tooth, cpt, delta):
    if tooth.kind == "dirac":
        return np.zeros(1), np.ones(1)
    if cpt < 3:
        raise ConfigError(
            f"a {tooth.kind} tooth needs at least 3 classes, got classes_per_tooth={cpt}"
        )
    g = tooth.width
    if tooth.kind == "gaussian":
        offsets = np.linspace(-GAUSSIAN_TRUNCATION * g, GAUSSIAN_TRUNCATION * g, cpt)
    elif tooth.kind == "rectangular":
        offsets = -0.5 * g + (np.arange(cpt) + 0.5) * g / cpt
    else:
        # lorentzian tails are cut at the half period
        offsets = -0.5 * delta + (np.arange(cpt) + 0.5) * delta / cpt
    return offsets, tooth.value(offsets)


def tooth_centers(spec):
    """Centres of the teeth kept by :func:`build_comb`."""
    m = np.arange(spec.n_teeth) - 0.5 * (spec.n_teeth - 1)
    centers = m * spec.delta
    if spec.envelope.kind == "rectangular":
        centers = centers[np.abs(centers) <= 0.5 * spec.Gamma * (1 + 1e-9)]
    return centers


def build_comb(spec):
    """Discretise the comb into frequency classes.

    Each tooth is sampled on a uniform grid, weighted by the envelope value at
    the tooth centre, and all weights are normalised to one.

    Args:
        spec: Comb layout.

    Returns:
        CombGrid sorted by detuning.
    """
    centers = tooth_centers(spec)
    if centers.size == 0:
        raise ConfigError("no tooth centre falls inside the comb envelope")
    offsets, shape = _tooth_offsets(spec.tooth, spec.classes_per_tooth, spec.delta)
    env = spec.envelope.value(centers)
    if spec.envelope.kind == "rectangular":
        env = np.ones_like(centers)
    omegas = (centers[:, None] + offsets[None, :]).ravel()
    weights = (env[:, None] * shape[None, :]).ravel()
    weights = weights / weights.sum()
    order = np.argsort(omegas, kind="stable")
    return CombGrid(omegas[order], weights[order])


def d_comb(envelope):
    """Area of the central peak of the comb's Fourier transform (s)."""
    if envelope.kind == "dirac":
        raise ConfigError("d_comb is undefined for a dirac envelope")
    g = envelope.width
    return {
        "rectangular": 2 * np.pi / g,
        "gaussian": math.sqrt(2 * np.pi) / g,
        "lorentzian": 2.0 / g,
    }[envelope.kind]


def c_opt(envelope):
    """Impedance-matching cooperativity ``2/(Γ D_comb)``."""
    return 2.0 / (envelope.width * d_comb(envelope))


def cooperativity(g_sqrt_N, kappa, Gamma):
    """Memory cooperativity ``(g√N)²/(κΓ)``."""
    check_positive("g_sqrt_N", g_sqrt_N, allow_zero=True)
    check_positive("kappa", kappa)
    check_positive("Gamma", Gamma)
    return g_sqrt_N**2 / (kappa * Gamma)


def matched_coupling(kappa, envelope, c_over_copt=1.0):
    """Coupling ``g√N`` that puts the memory at ``C = c_over_copt · C_opt``."""
    return math.sqrt(c_over_copt * c_opt(envelope) * kappa * envelope.width)


def eta_F(tooth, Delta):
    """Echo factor from the finite tooth width, ``(w̃(2π/Δ)/w̃(0))²``."""
    check_positive("Delta", Delta)
    if tooth.kind == "dirac":
        return 1.0
    if tooth.width >= Delta:
        raise ConfigError("tooth width must be smaller than the comb period")
    t = 2 * np.pi / Delta
    return float((tooth.fourier(t) / tooth.fourier(0.0)) ** 2)


def comb_finesse(spec):
    """Comb period over tooth FWHM."""
    if spec.tooth.kind == "dirac":
        raise ConfigError("comb finesse is undefined for dirac teeth")
    return spec.delta / spec.tooth.fwhm()

"""Hong-Ou-Mandel visibilities between pure and mixed single photons.

A mixed photon is ``p0|0⟩⟨0| + Σ_k w_k |Ψ_k(·-s_k)⟩⟨Ψ_k(·-s_k)|``: vacuum plus
time-shifted pure components. Both polarisations are assumed to carry the
same wavepackets, so only the temporal modes enter.
"""

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.stats import qmc

from ._validation import ConfigError, check_fraction
from .waveform import Envelope, cumulative_trapezoid, load_csv, save_csv, trapezoid


@dataclass(frozen=True, eq=False)
class Component:
    weight: float
    shift: float
    psi: Envelope


@dataclass(frozen=True, eq=False)
class MixedPhoton:
    """Vacuum probability plus weighted, time-shifted pure components.

    A component's waveform is ``psi(t - shift)``; it vanishes before
    ``shift + psi.grid.t0``, so a psi sampled from ``t = 0`` is causal with
    respect to its emission time.
    """

    p0: float
    components: tuple

    def __post_init__(self):
        check_fraction("p0", self.p0)
        comps = tuple(self.components)
        object.__setattr__(self, "components", comps)
        total = self.p0 + sum(c.weight for c in comps)
        if abs(total - 1) > 1e-9:
            raise ConfigError(f"p0 + Σ weights = {total!r}, expected 1")
        for c in comps:
            if c.weight < 0:
                raise ConfigError("component weights must be non-negative")
            if abs(c.psi.energy() - 1) > 1e-6:
                raise ConfigError("mixture components must be normalised")

    @classmethod
    def pure(cls, psi, shift=0.0):
        return cls(0.0, (Component(1.0, float(shift), psi),))

    @property
    def photon_probability(self):
        return 1.0 - self.p0

    def shifted(self, offset):
        """Same mixture delayed by ``offset``."""
        return MixedPhoton(
            self.p0, tuple(Component(c.weight, c.shift + offset, c.psi) for c in self.components)
        )

    def support(self):
        lo = min(c.shift + c.psi.grid.t0 for c in self.components)
        hi = max(c.shift + c.psi.grid.t_end for c in self.components)
        return lo, hi

    def save_json(self, path, waveform_dir=None):
        """Write the mixture JSON plus one CSV per distinct waveform."""
        path = Path(path)
        waveform_dir = Path(waveform_dir) if waveform_dir else path.parent
        waveform_dir.mkdir(parents=True, exist_ok=True)
        names = {}
        comps = []
        for c in self.components:
            key = id(c.psi)
            if key not in names:
                names[key] = waveform_dir / f"{path.stem}_psi{len(names)}.csv"
                save_csv(c.psi, names[key])
            comps.append({"weight": c.weight, "shift_s": c.shift,
                          "waveform_csv_path": str(names[key])})
        with open(path, "w") as fh:
            json.dump({"p0": self.p0, "components": comps}, fh, indent=2)


def load_mixture_json(path):
    """Read a mixture file ``{p0, components: [{weight, shift_s, waveform_csv_path}]}``."""
    path = Path(path)
    with open(path) as fh:
        doc = json.load(fh)
    unknown = set(doc) - {"p0", "components"}
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    cache = {}
    comps = []
    for i, c in enumerate(doc.get("components", [])):
        missing = {"weight", "shift_s", "waveform_csv_path"} - set(c)
        if missing:
            raise ConfigError(f"{path}: component {i} lacks {sorted(missing)}")
        wf = Path(c["waveform_csv_path"])
        if not wf.is_absolute():
            wf = path.parent / wf
        if wf not in cache:
            cache[wf] = load_csv(wf).normalized()
        comps.append(Component(float(c["weight"]), float(c["shift_s"]), cache[wf]))
    return MixedPhoton(float(doc["p0"]), tuple(comps))


def build_mixture(psi, p0=0.0, shift_distribution=None):
    """Mixture of delayed copies of ``psi``.

    Args:
        psi: Normalised pure waveform (emission starting at its grid origin).
        p0: Vacuum probability.
        shift_distribution: ``(shifts, masses)`` point masses of the delay
            distribution; masses are rescaled to ``1 - p0``. ``None`` or empty
            gives a single undelayed component.

    Returns:
        MixedPhoton.
    """
    check_fraction("p0", p0)
    psi = psi.normalized()
    if shift_distribution is None or len(shift_distribution[0]) == 0:
        if p0 >= 1:
            raise ConfigError("a mixture needs p0 < 1")
        return MixedPhoton(p0, (Component(1.0 - p0, 0.0, psi),))
    shifts, masses = (np.asarray(x, dtype=float) for x in shift_distribution)
    if shifts.shape != masses.shape:
        raise ConfigError("shifts and masses must have the same length")
    if np.any(masses < 0):
        raise ConfigError("shift masses must be non-negative")
    total = masses.sum()
    if total == 0:
        if p0 < 1:
            raise ConfigError("all-zero shift distribution with p0 < 1")
        return MixedPhoton(1.0, ())
    weights = masses / total * (1.0 - p0)
    comps = tuple(Component(float(w), float(s), psi) for w, s in zip(weights, shifts) if w > 0)
    fix = 1.0 - p0 - sum(c.weight for c in comps)
    last = comps[-1]
    comps = comps[:-1] + (Component(last.weight + fix, last.shift, last.psi),)
    return MixedPhoton(p0, comps)


def _interp(env, t):
    tt = env.times
    return np.interp(t, tt, env.samples.real, left=0.0, right=0.0) + 1j * np.interp(
        t, tt, env.samples.imag, left=0.0, right=0.0
    )


def shifted_overlap(a, shift_a, b, shift_b):
    """``⟨b(·-shift_b) | a(·-shift_a)⟩ = ∫ b*(t-s_b) a(t-s_a) dt`` on ``b``'s grid."""
    u = b.times
    vals = np.conj(b.samples) * _interp(a, u + shift_b - shift_a)
    return complex(trapezoid(vals, b.grid.dt))


def _cross_sum(a, b):
    total = 0.0
    for ca in a.components:
        for cb in b.components:
            total += ca.weight * cb.weight * abs(shifted_overlap(ca.psi, ca.shift, cb.psi, cb.shift)) ** 2
    return total


def visibility_pure_pure(a, b):
    """``|⟨b|a⟩|²`` (``a`` is interpolated onto ``b``'s grid if needed)."""
    return float(min(1.0, abs(shifted_overlap(a, 0.0, b, 0.0)) ** 2))


def _as_mixture(x):
    return x if isinstance(x, MixedPhoton) else MixedPhoton.pure(x)


def visibility_pure_mixed(pure, mixed):
    """Emission-conditioned mean of ``|⟨pure|Ψ(·-s)⟩|²`` over the mixture."""
    if mixed.p0 >= 1:
        raise ConfigError("the mixed photon is pure vacuum")
    return float(_cross_sum(MixedPhoton.pure(pure), mixed) / (1 - mixed.p0))


def visibility_mixed_mixed_asymptotic(a, b):
    """Visibility for an unbounded coincidence window.

    Args:
        a: MixedPhoton (or Envelope for a pure photon).
        b: MixedPhoton (or Envelope).

    Returns:
        ``ΣΣ w_a w_b |⟨Ψ_b(·-s_b)|Ψ_a(·-s_a)⟩|² / ((1-p0a)(1-p0b))``.
    """
    a, b = _as_mixture(a), _as_mixture(b)
    if a.p0 >= 1 or b.p0 >= 1:
        raise ConfigError("a photon with p0 = 1 has no visibility")
    return float(min(1.0, _cross_sum(a, b) / ((1 - a.p0) * (1 - b.p0))))


class WindowedVisibility(NamedTuple):
    value: float
    stderr: float
    flagged: bool


def _coherence(mix, t1, t2):
    """``Γ(t1,t2) = Σ w Ψ(t1-s) Ψ*(t2-s)`` and ``ρ(t1)``, ``ρ(t2)``."""
    g = np.zeros(t1.shape, complex)
    r1 = np.zeros(t1.shape)
    r2 = np.zeros(t1.shape)
    for c in mix.components:
        x1 = _interp(c.psi, t1 - c.shift)
        x2 = _interp(c.psi, t2 - c.shift)
        g += c.weight * x1 * np.conj(x2)
        r1 += c.weight * np.abs(x1) ** 2
        r2 += c.weight * np.abs(x2) ** 2
    return g, r1, r2


def _cumulative_intensity(mix, x):
    """``∫_{-∞}^{x} ρ(t) dt`` of a mixture, from each component's own grid."""
    out = np.zeros(np.shape(x))
    for c in mix.components:
        cum = cumulative_trapezoid(c.psi.intensity, c.psi.grid.dt)
        out += c.weight * np.interp(x - c.shift, c.psi.times, cum, left=0.0, right=cum[-1])
    return out


def visibility_windowed(a, b, window, samples=1024, scrambles=32, seed=0, tol=None):
    """HOM visibility restricted to coincidences with ``|t1 - t2| <= window``.

    Let ``S`` be the support of the photon with the shorter support. The
    interference term vanishes unless both times lie in ``S``; that square
    (cut to the strip) is integrated with scrambled Sobol points. Outside it
    only the product of intensities survives, whose inner integral follows
    from cumulative intensities. The value is the ratio of pooled means and the
    error bar comes from the spread of the per-scramble ratios.

    Args:
        a: First photon (MixedPhoton or Envelope).
        b: Second photon.
        window: Coincidence window ``T`` in seconds (``inf`` allowed).
        samples: Points per scramble (rounded up to a power of two).
        scrambles: Number of independent scrambles.
        seed: Seed of the scrambling.
        tol: Flag the result when the standard error exceeds this.

    Returns:
        WindowedVisibility(value, stderr, flagged).
    """
    a, b = _as_mixture(a), _as_mixture(b)
    if not window > 0:
        raise ConfigError("coincidence window must be positive")
    if a.p0 >= 1 or b.p0 >= 1:
        raise ConfigError("a photon with p0 = 1 has no visibility")
    lo_a, hi_a = a.support()
    lo_b, hi_b = b.support()
    if hi_b - lo_b < hi_a - lo_a:
        a, b = b, a
        lo_a, hi_a, lo_b, hi_b = lo_b, hi_b, lo_a, hi_a
    lo, hi = lo_a, hi_a
    span = hi - lo
    T = min(float(window), max(hi_a, hi_b) - min(lo_a, lo_b))
    m = max(1, int(math.ceil(math.log2(max(samples, 2)))))
    seeds = np.random.SeedSequence(seed).spawn(scrambles)
    num = np.empty(scrambles)
    den = np.empty(scrambles)
    for k, ss in enumerate(seeds):
        pts = qmc.Sobol(d=2, scramble=True, seed=np.random.default_rng(ss)).random_base2(m)
        t1 = lo + span * pts[:, 0]
        lo2 = np.maximum(lo, t1 - T)
        len2 = np.minimum(hi, t1 + T) - lo2
        t2 = lo2 + len2 * pts[:, 1]
        ga, ra1, ra2 = _coherence(a, t1, t2)
        gb, rb1, rb2 = _coherence(b, t1, t2)
        inside_n = len2 * 2 * np.real(ga * np.conj(gb))
        inside_d = len2 * (ra1 * rb2 + ra2 * rb1)
        # t1 in S, t2 in the strip but outside S (and the mirror image)
        ra = _coherence(a, t1, t1)[1]
        strip = _cumulative_intensity(b, t1 + T) - _cumulative_intensity(b, t1 - T)
        in_s = _cumulative_intensity(b, lo2 + len2) - _cumulative_intensity(b, lo2)
        outside_d = 2 * ra * (strip - in_s)
        num[k] = span * np.mean(inside_n)
        den[k] = span * np.mean(inside_d + outside_d)
    if den.sum() <= 0:
        raise ConfigError("no coincidences inside the window")
    value = float(num.sum() / den.sum())
    ratios = num / np.where(den > 0, den, np.nan)
    ratios = ratios[np.isfinite(ratios)]
    stderr = float(np.std(ratios, ddof=1) / math.sqrt(len(ratios))) if len(ratios) > 1 else math.inf
    flagged = tol is not None and stderr > tol
    return WindowedVisibility(value, stderr, flagged)


def fidelity_from_visibility(v):
    """Heralded-state fidelity ``(1 + V²)/2`` for equal visibilities on both sides."""
    return 0.5 * (1 + v * v)


def optimize_offset(a, b, bounds, n_scan=41, visibility=None):
    """Delay of ``b`` that maximises the asymptotic visibility with ``a``.

    Args:
        a: First photon.
        b: Second photon (delayed).
        bounds: ``(lo, hi)`` search interval for the delay.
        n_scan: Coarse grid size before the bounded refinement.
        visibility: Optional callable ``(a, b) -> value``.

    Returns:
        ``(offset, visibility)``.
    """
    a, b = _as_mixture(a), _as_mixture(b)
    vis = visibility or visibility_mixed_mixed_asymptotic

    def neg(x):
        return -vis(a, b.shifted(x))

    grid = np.linspace(bounds[0], bounds[1], n_scan)
    vals = [neg(x) for x in grid]
    k = int(np.argmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, n_scan - 1)]
    res = minimize_scalar(neg, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-4 * (bounds[1] - bounds[0])})
    if res.fun < vals[k]:
        return float(res.x), float(-res.fun)
    return float(grid[k]), float(-vals[k])

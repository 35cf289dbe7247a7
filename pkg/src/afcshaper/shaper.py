"""Piecewise single-photon waveform shaping with partial readout pulses.

The output is built from ``N`` copies of the stored photon ``h_in`` released
in consecutive time bins. Bin ``j`` carries amplitude ``p_j`` and phase
``θ_j``. The weights that maximise the overlap with a target ``f`` follow
from Cauchy-Schwarz: ``p_j ∝ |J_j|`` and ``θ_j = -arg J_j``, where
``J_j = ∫_bin f*(t) h_in(t - c_j) dt``.
"""

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import erf
from sklearn.base import BaseEstimator

from ._validation import ConfigError, check_choice, check_positive
from .dynamics import ControlPulse, PulseSchedule
from .waveform import Envelope, gaussian_sigma

PI_QUARTER = math.pi**0.25


@dataclass(frozen=True)
class BinLayout:
    """``n_shape`` equal bins tiling ``[a, b]``; ``offset`` shifts every centre."""

    a: float
    b: float
    n_shape: int
    offset: float = 0.0

    def __post_init__(self):
        if not self.b > self.a:
            raise ConfigError(f"bin layout needs b > a, got a={self.a!r}, b={self.b!r}")
        if self.n_shape < 1:
            raise ConfigError(f"n_shape must be >= 1, got {self.n_shape}")

    @property
    def bin_width(self):
        return (self.b - self.a) / self.n_shape

    @property
    def centers(self):
        w = self.bin_width
        return self.a + 0.5 * w + w * np.arange(self.n_shape) + self.offset

    def edges(self, j):
        c = self.centers[j]
        return c - 0.5 * self.bin_width, c + 0.5 * self.bin_width

    @classmethod
    def starting_at(cls, a, bin_width, n_shape):
        return cls(a, a + n_shape * bin_width, n_shape)


@dataclass(frozen=True)
class CropSpec:
    """Crop bounds ``[alpha, beta]`` of the stored photon, with crop factor ``M``."""

    M: float
    alpha: float
    beta: float

    def __post_init__(self):
        if not self.beta > self.alpha:
            raise ConfigError("crop bounds need beta > alpha")

    @classmethod
    def gaussian(cls, M, sigma):
        """Symmetric ``±M·σ`` bounds for a Gaussian of amplitude std ``σ``."""
        return cls(M, -M * sigma, M * sigma)

    @classmethod
    def exponential(cls, M, decay, start=0.0):
        """One-sided ``[start, start + M·decay]`` bounds for an exponential."""
        return cls(M, start, start + M * decay)


@dataclass(frozen=True, eq=False)
class ShapingPlan:
    """Optimal piecewise weights for a bin layout.

    Attributes:
        layout: Bin layout.
        J: Bin overlaps.
        p: Absolute amplitudes (unit 2-norm).
        theta: Phases.
        q: Relative amplitudes, i.e. the fraction of the stored amplitude released by each pulse.
        areas: Pulse areas ``2·arcsin(q)``.
        R: Predicted overlap.
    """

    layout: BinLayout
    J: np.ndarray
    p: np.ndarray
    theta: np.ndarray
    q: np.ndarray
    areas: np.ndarray
    R: float

    def to_dict(self):
        return {
            "a_s": self.layout.a,
            "b_s": self.layout.b,
            "n_shape": self.layout.n_shape,
            "offset_s": self.layout.offset,
            "bin_width_s": self.layout.bin_width,
            "centers_s": self.layout.centers.tolist(),
            "p": self.p.tolist(),
            "theta_rad": self.theta.tolist(),
            "q": self.q.tolist(),
            "areas_rad": self.areas.tolist(),
            "R": self.R,
        }

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)


def _interp_complex(x, xp, fp):
    return np.interp(x, xp, fp.real, left=0.0, right=0.0) + 1j * np.interp(
        x, xp, fp.imag, left=0.0, right=0.0
    )


def _integrate_interval(t, values, lo, hi):
    """Trapezoidal integral of sampled ``values`` over ``[lo, hi]`` with interpolated ends."""
    inner = (t > lo) & (t < hi)
    ts = np.concatenate(([lo], t[inner], [hi]))
    vs = np.concatenate(([_interp_complex(lo, t, values)], values[inner], [_interp_complex(hi, t, values)]))
    return complex(np.sum(0.5 * (vs[1:] + vs[:-1]) * np.diff(ts)))


def _outside_energy(h_in, lo, hi):
    t = h_in.times
    inten = h_in.intensity
    total = h_in.energy()
    if total == 0:
        return 0.0
    inside = _integrate_interval(t, inten.astype(complex), lo, hi).real
    return 1.0 - inside / total


def bin_overlaps(target, h_in, layout, crop=False, tol=1e-3):
    """Overlaps ``J_j = ∫_bin target*(t)·h_in(t - c_j) dt``.

    Args:
        target: Target envelope (absolute time).
        h_in: Stored photon, centred on ``t = 0`` on its own grid.
        layout: Bin layout.
        crop: Allow ``h_in`` to extend beyond a bin (it is then truncated).
        tol: Energy fraction of ``h_in`` allowed outside a bin when ``crop`` is False.

    Returns:
        Complex array of length ``n_shape``.
    """
    w = layout.bin_width
    if not crop:
        lost = _outside_energy(h_in, -0.5 * w, 0.5 * w)
        if lost > tol:
            raise ConfigError(
                f"h_in is wider than a bin ({lost:.2%} of its energy falls outside "
                f"width {w:.4g} s); enable crop mode or widen the bins"
            )
    t = target.times
    J = np.empty(layout.n_shape, complex)
    for j, c in enumerate(layout.centers):
        lo, hi = c - 0.5 * w, c + 0.5 * w
        inner = (t > lo) & (t < hi)
        ts = np.concatenate(([lo], t[inner], [hi]))
        f = _interp_complex(ts, t, target.samples)
        h = _interp_complex(ts - c, h_in.times, h_in.samples)
        vals = np.conj(f) * h
        J[j] = np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(ts))
    return J


def optimal_weights(J):
    """Closed-form optimum ``(p, θ, R)`` for bin overlaps ``J``."""
    J = np.asarray(J, dtype=complex)
    R = float(np.sqrt(np.sum(np.abs(J) ** 2)))
    if R == 0:
        raise ConfigError("the target is orthogonal to every bin translate of h_in")
    return np.abs(J) / R, -np.angle(J), R


def overlap_functional(J, p, theta):
    """``|Σ p_j e^{iθ_j} J_j|``, the overlap reached by given weights."""
    return float(np.abs(np.sum(np.asarray(p) * np.exp(1j * np.asarray(theta)) * J)))


def absolute_to_relative(p, tol=1e-12):
    """Convert absolute amplitudes into the per-pulse release fractions ``q``.

    ``q_0² = p_0²`` and ``q_i² = p_i²/(1 - Σ_{j<i} p_j²)``; the last bin that
    carries weight releases everything that is left (``q = 1``).
    """
    p = np.asarray(p, dtype=float)
    if np.any(p < 0):
        raise ConfigError("absolute amplitudes must be non-negative")
    p2 = p**2
    if abs(p2.sum() - 1) > 1e-9:
        raise ConfigError(f"absolute weights must satisfy Σp² = 1, got {p2.sum()!r}")
    p2 = p2 / p2.sum()
    nz = np.flatnonzero(p2 > 0)
    last = nz[-1]
    q = np.zeros_like(p)
    used = 0.0
    for i in range(last + 1):
        remaining = 1.0 - used
        if remaining <= tol:
            raise ConfigError(f"relative chain is exhausted before bin {i} (infeasible weights)")
        q[i] = 1.0 if i == last else min(1.0, math.sqrt(p2[i] / remaining))
        used += p2[i]
    return q


def relative_to_absolute(q):
    """Inverse of :func:`absolute_to_relative`: ``p_j² = q_j² Π_{k<j}(1 - q_k²)``."""
    q = np.asarray(q, dtype=float)
    left = np.concatenate(([1.0], np.cumprod(1 - q**2)[:-1]))
    return q * np.sqrt(np.clip(left, 0.0, None))


def relative_to_areas(q):
    """Pulse areas ``2·arcsin(q)`` (π for a full transfer)."""
    q = np.asarray(q, dtype=float)
    if np.any((q < 0) | (q > 1 + 1e-12)):
        raise ConfigError("relative amplitudes must lie in [0, 1]")
    return 2 * np.arcsin(np.clip(q, 0.0, 1.0))


def make_plan(target, h_in, layout, crop=False):
    """Bin overlaps, optimal weights and pulse areas in one step."""
    J = bin_overlaps(target, h_in, layout, crop=crop)
    p, theta, R = optimal_weights(J)
    q = absolute_to_relative(p)
    return ShapingPlan(layout, J, p, theta, q, relative_to_areas(q), R)


def piecewise_output(plan, h_in, grid):
    """The ideal shaped photon ``Σ p_j e^{iθ_j} h_in(t - c_j)`` restricted to each bin."""
    t = grid.times
    out = np.zeros(grid.n, complex)
    w = plan.layout.bin_width
    for j, c in enumerate(plan.layout.centers):
        inside = (t >= c - 0.5 * w) & (t < c + 0.5 * w)
        out[inside] += plan.p[j] * np.exp(1j * plan.theta[j]) * _interp_complex(
            t[inside] - c, h_in.times, h_in.samples
        )
    return Envelope(grid, out)


def asymptotic_overlap(h_in, crop):
    """Large-``N`` overlap limit ``(1/√(β-α)) ∫_α^β h_in dt``.

    The limit is proven for real, single-signed inputs; other inputs are
    evaluated anyway with a warning.
    """
    t = h_in.times
    s = h_in.samples
    seg = (t >= crop.alpha) & (t <= crop.beta)
    vals = s[seg]
    if np.any(np.abs(vals.imag) > 1e-12 * max(1e-300, np.abs(vals).max())) or (
        vals.real.max() > 0 and vals.real.min() < 0
    ):
        warnings.warn("h_in is not real and single-signed on the crop interval", stacklevel=2)
    integral = _integrate_interval(t, s, crop.alpha, crop.beta)
    return float(abs(integral) / math.sqrt(crop.beta - crop.alpha))


def gaussian_limit(M):
    """Asymptotic overlap of a Gaussian cropped at ``±M·σ``: ``π^{1/4} erf(M/√2)/√M``."""
    return PI_QUARTER * erf(M / math.sqrt(2)) / math.sqrt(M)


def exponential_limit(M):
    """Asymptotic overlap of ``√2 e^{-t}`` cropped to ``[0, M]``: ``√(2/M)(1 - e^{-M})``."""
    return math.sqrt(2 / M) * (1 - math.exp(-M))


def gaussian_remaining_energy(M):
    """Energy of a normalised Gaussian amplitude inside ``±M·σ``."""
    return float(erf(M))


def renormalized_asymptotic_overlap(M):
    """Gaussian limit after renormalising the cropped piece: ``π^{1/4} erf(M/√2)/√(M·erf M)``."""
    check_positive("M", M)
    return PI_QUARTER * erf(M / math.sqrt(2)) / math.sqrt(M * erf(M))


def optimize_crop(kind="gaussian"):
    """Crop factor maximising the asymptotic overlap (golden-section search).

    Args:
        kind: ``"gaussian"`` or ``"exponential"``.

    Returns:
        Dict with ``M``, ``value``, and for the Gaussian the ``remaining_energy``
        and ``renormalized`` overlap at the optimum.
    """
    check_choice("kind", kind, ("gaussian", "exponential"))
    f = gaussian_limit if kind == "gaussian" else exponential_limit
    res = minimize_scalar(lambda m: -f(m), bracket=(0.2, 1.0, 10.0), method="golden",
                          options={"xtol": 1e-5})
    M = float(res.x)
    out = {"M": M, "value": float(f(M))}
    if kind == "gaussian":
        out["remaining_energy"] = gaussian_remaining_energy(M)
        out["renormalized"] = float(renormalized_asymptotic_overlap(M))
    return out


def readout_window_start(input_center, rephasing_time, tau, bin_width, sync=False,
                         storage_margin=None, gap=None):
    """Earliest start ``a`` of the shaped output window for a given timeline.

    See :func:`build_readout_schedule` for the meaning of the arguments.
    """
    times = _timeline(input_center, rephasing_time, tau, bin_width, 1, sync, storage_margin, gap)
    return times["window_start"]


def _timeline(input_center, rephasing_time, tau, bin_width, n_shape, sync, storage_margin, gap):
    gap = tau if gap is None else gap
    release = 0.5 * bin_width + 0.5 * tau
    if storage_margin is None:
        storage_margin = release
    if not sync and n_shape > 1 and storage_margin > release * (1 + 1e-9):
        raise ConfigError(
            f"storage_margin={storage_margin:.4g} s exceeds half a bin plus half a pulse "
            f"({release:.4g} s); later readouts would catch unreleased echoes, use sync pulses"
        )
    storage = input_center + rephasing_time - storage_margin
    out = {"storage": storage, "sync": ()}
    last = storage
    if sync:
        delay = storage_margin - release
        s1 = storage + tau + gap
        s2 = s1 + delay
        if delay < tau:
            raise ConfigError(
                f"synchronization pulses would overlap: separation {delay:.4g} s < tau; "
                "increase storage_margin"
            )
        out["sync"] = (s1, s2)
        last = s2
        first_readout = last + tau + gap
        offset_after = release
    else:
        first_readout = last + tau + gap
        offset_after = storage_margin
    out["first_readout"] = first_readout
    out["release"] = offset_after
    out["window_start"] = first_readout + offset_after - 0.5 * bin_width
    return out


def build_readout_schedule(plan, tau, mode="plain", sync=False, *, input_center,
                           rephasing_time, storage_margin=None, gap=None, sigma=None,
                           phase_offset=0.0):
    """Control pulses that realise a shaping plan.

    A storage π-pulse moves the absorbed photon to the spin coherence before
    its echo. Optional synchronization π-pulses (two, separated by the storage
    margin minus half a bin) leave exactly half a bin of dephasing time, so
    each readout releases its piece right after the pulse. Readout ``j`` has
    area ``areas[j]`` and phase ``θ_j + phase_offset``; readouts are spaced by
    one bin width and centred so that piece ``j`` is centred on ``c_j``.

    Args:
        plan: Shaping plan whose layout is given in absolute output time.
        tau: Duration of every control pulse (s).
        mode: ``"plain"`` or ``"cropped"``.
        sync: Insert the two synchronization pulses.
        input_center: Arrival time of the input photon's centre.
        rephasing_time: Echo delay ``2π/Δ``.
        storage_margin: Dephasing time left at the storage pulse. Defaults to
            half a bin plus half a pulse (storage just before the echo).
        gap: Idle time between consecutive non-readout pulses (defaults to ``tau``).
        sigma: Amplitude std of the stored photon, checked against the cropped spacing.
        phase_offset: Common phase added to every readout pulse.

    Returns:
        PulseSchedule.
    """
    check_choice("mode", mode, ("plain", "cropped"))
    check_positive("tau", tau)
    layout = plan.layout
    w = layout.bin_width
    if tau > w / 10:
        warnings.warn(f"pulse duration {tau:.3g} s exceeds a tenth of the bin width", stacklevel=2)
    if mode == "cropped" and not sync:
        raise ConfigError("the cropped mode needs synchronization pulses to trim the echo front")
    if mode == "cropped" and sigma is not None and w > 6 * sigma:
        warnings.warn("cropped spacing is wider than ±3σ; nothing is cropped", stacklevel=2)
    times = _timeline(input_center, rephasing_time, tau, w, layout.n_shape, sync,
                      storage_margin, gap)
    pulses = [ControlPulse.with_area(times["storage"], tau, math.pi, 0.0, "storage")]
    for s in times["sync"]:
        pulses.append(ControlPulse.with_area(s, tau, math.pi, 0.0, "synchronization"))
    release = times["release"]
    for j, c in enumerate(layout.centers):
        centre = c - release
        pulses.append(ControlPulse.with_area(centre, tau, float(plan.areas[j]),
                                             float(plan.theta[j] + phase_offset), "readout"))
    first = pulses[len(times["sync"]) + 1]
    prev = pulses[len(times["sync"])]
    if first.start < prev.end:
        raise ConfigError(
            f"readout window starts too early: first readout at {first.start:.6g} s overlaps "
            f"the {prev.kind} pulse ending at {prev.end:.6g} s"
        )
    return PulseSchedule(tuple(pulses))


class PulseShaper(BaseEstimator):
    """Estimator-style front end for the piecewise shaper.

    ``fit(target, h_in)`` computes the bin overlaps and the optimal plan,
    ``predict(grid)`` returns the ideal piecewise output and ``score`` the
    predicted overlap.

    Args:
        n_shape: Number of bins/readout pulses.
        a: Start of the output window (s).
        bin_width: Bin width (s).
        mode: ``"plain"`` (h_in must fit a bin) or ``"cropped"``.
        offset: Manual shift of all bin centres (s).
    """

    def __init__(self, n_shape=20, a=0.0, bin_width=1e-6, mode="plain", offset=0.0):
        self.n_shape = n_shape
        self.a = a
        self.bin_width = bin_width
        self.mode = mode
        self.offset = offset

    def fit(self, target, h_in):
        check_choice("mode", self.mode, ("plain", "cropped"))
        check_positive("bin_width", self.bin_width)
        self.layout_ = BinLayout(self.a, self.a + self.n_shape * self.bin_width, self.n_shape,
                                 self.offset)
        self.h_in_ = h_in
        self.plan_ = make_plan(target, h_in, self.layout_, crop=self.mode == "cropped")
        return self

    def predict(self, grid):
        return piecewise_output(self.plan_, self.h_in_, grid)

    def score(self, target=None, h_in=None):
        if target is None:
            return self.plan_.R
        J = bin_overlaps(target, h_in if h_in is not None else self.h_in_, self.layout_,
                         crop=self.mode == "cropped")
        return overlap_functional(J, self.plan_.p, self.plan_.theta)

    def schedule(self, tau, sync=False, **timeline):
        return build_readout_schedule(self.plan_, tau, self.mode, sync, **timeline)


def stored_photon(grid_dt, intensity_fwhm, span_sigmas=6.0):
    """Normalised Gaussian ``h_in`` centred on zero, sampled on ``±span_sigmas·σ``."""
    from .waveform import TimeGrid, make_gaussian

    sigma = gaussian_sigma(intensity_fwhm)
    half = span_sigmas * sigma
    grid = TimeGrid.from_span(-half, half, grid_dt)
    grid = TimeGrid(-0.5 * (grid.n - 1) * grid_dt, grid_dt, grid.n)
    return make_gaussian(grid, 0.0, intensity_fwhm)


def best_target_shift(target_fn, h_in, layout, shifts, crop=False):
    """Target placement maximising the predicted overlap.

    Args:
        target_fn: Callable ``shift -> Envelope``.
        h_in: Stored photon.
        layout: Bin layout.
        shifts: Candidate shifts scanned before a bounded refinement.
        crop: Passed to :func:`bin_overlaps`.

    Returns:
        ``(best shift, R)``.
    """
    def neg(s):
        return -optimal_weights(bin_overlaps(target_fn(s), h_in, layout, crop=crop))[2]

    values = [neg(s) for s in shifts]
    k = int(np.argmin(values))
    lo = shifts[max(k - 1, 0)]
    hi = shifts[min(k + 1, len(shifts) - 1)]
    if hi > lo:
        res = minimize_scalar(neg, bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-3 * (hi - lo)})
        if res.fun < values[k]:
            return float(res.x), float(-res.fun)
    return float(shifts[k]), float(-values[k])


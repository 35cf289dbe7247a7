"""Complex single-photon envelopes on uniform time grids.

An :class:`Envelope` holds complex samples ``E(t)`` in units of s^-1/2 so that
``∫|E|² dt`` is a probability. All integrals use the trapezoidal rule on the
uniform grid.
"""

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from ._validation import ConfigError, check_positive, frozen

SQRT_LN2 = math.sqrt(math.log(2.0))


class ExtrapolationWarning(UserWarning):
    """A resampled envelope was zero-filled where the source was not negligible."""


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid ``t0 + k*dt`` for ``k = 0 .. n-1``."""

    t0: float
    dt: float
    n: int

    def __post_init__(self):
        check_positive("dt", self.dt)
        if not isinstance(self.n, (int, np.integer)) or self.n < 2:
            raise ConfigError(f"grid needs n >= 2 samples, got {self.n!r}")
        if not math.isfinite(self.t0 + (self.n - 1) * self.dt):
            raise ConfigError("grid span is not finite")
        object.__setattr__(self, "n", int(self.n))

    @classmethod
    def from_span(cls, t0, t1, dt):
        """Grid starting at ``t0`` with step ``dt`` that reaches at least ``t1``."""
        n = int(math.ceil((t1 - t0) / dt - 1e-9)) + 1
        return cls(float(t0), float(dt), max(n, 2))

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(self.n)

    @property
    def t_end(self):
        return self.t0 + (self.n - 1) * self.dt

    def same_as(self, other, rtol=1e-9):
        return (
            self.n == other.n
            and abs(self.dt - other.dt) <= rtol * self.dt
            and abs(self.t0 - other.t0) <= rtol * self.dt * max(1, self.n)
        )

    def index_of(self, t):
        """Nearest grid index of time ``t`` (clipped to the grid)."""
        return int(np.clip(round((t - self.t0) / self.dt), 0, self.n - 1))


def trapezoid(values, dt):
    """Trapezoidal integral of uniformly spaced samples."""
    values = np.asarray(values)
    if values.size < 2:
        return values.sum() * 0.0
    return dt * (values.sum() - 0.5 * (values[0] + values[-1]))


def cumulative_trapezoid(values, dt):
    """Running trapezoidal integral, starting at zero."""
    values = np.asarray(values)
    out = np.zeros(values.shape, dtype=values.dtype)
    out[1:] = np.cumsum(0.5 * dt * (values[1:] + values[:-1]))
    return out


@dataclass(frozen=True, eq=False)
class Envelope:
    """Complex amplitude sampled on a :class:`TimeGrid` (read-only)."""

    grid: TimeGrid
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=complex)
        if samples.shape != (self.grid.n,):
            raise ConfigError(
                f"expected {self.grid.n} samples for the grid, got shape {samples.shape}"
            )
        object.__setattr__(self, "samples", frozen(samples))

    @property
    def times(self):
        return self.grid.times

    @property
    def intensity(self):
        return np.abs(self.samples) ** 2

    def energy(self):
        """Squared L2 norm ``∫|E|² dt``."""
        return float(trapezoid(self.intensity, self.grid.dt))

    def normalized(self):
        e = self.energy()
        if e <= 0:
            raise ConfigError("cannot normalise an envelope with zero energy")
        return Envelope(self.grid, self.samples / math.sqrt(e))

    def scaled(self, factor):
        return Envelope(self.grid, self.samples * factor)

    def allclose(self, other, atol=1e-12):
        return self.grid.same_as(other.grid) and np.allclose(
            self.samples, other.samples, rtol=0, atol=atol
        )

    def window_energy(self, t1, t2):
        """Energy inside ``[t1, t2]`` using the samples whose times fall in it."""
        t = self.times
        mask = (t >= t1 - 1e-9 * self.grid.dt) & (t <= t2 + 1e-9 * self.grid.dt)
        return float(trapezoid(self.intensity[mask], self.grid.dt)) if mask.sum() > 1 else 0.0

    def masked(self, t1, t2):
        """Copy with samples outside ``[t1, t2]`` set to zero."""
        t = self.times
        keep = (t >= t1 - 1e-9 * self.grid.dt) & (t <= t2 + 1e-9 * self.grid.dt)
        return Envelope(self.grid, np.where(keep, self.samples, 0.0))

    def centroid(self):
        """Intensity-weighted mean time."""
        w = self.intensity
        return float(trapezoid(w * self.times, self.grid.dt) / trapezoid(w, self.grid.dt))

    def fwhm(self):
        """Full width at half maximum of ``|E|²`` (outermost half-max crossings)."""
        return intensity_fwhm(self.times, self.intensity)


def intensity_fwhm(t, y):
    """FWHM of a sampled single-peaked profile, with linear edge interpolation."""
    y = np.asarray(y, dtype=float)
    half = 0.5 * y.max()
    above = np.flatnonzero(y >= half)
    i, j = above[0], above[-1]
    left = t[i] if i == 0 else t[i - 1] + (half - y[i - 1]) / (y[i] - y[i - 1]) * (t[i] - t[i - 1])
    if j == len(y) - 1:
        right = t[j]
    else:
        right = t[j] + (y[j] - half) / (y[j] - y[j + 1]) * (t[j + 1] - t[j])
    return float(right - left)


def gaussian_sigma(intensity_fwhm):
    """Amplitude standard deviation of a Gaussian with the given intensity FWHM."""
    return intensity_fwhm / (2.0 * SQRT_LN2)


def _normalized_on(grid, samples, what):
    env = Envelope(grid, samples)
    if env.energy() <= 0:
        raise ConfigError(f"{what} has no support on the grid")
    return env.normalized()


def make_gaussian(grid, center, intensity_fwhm):
    """Normalised Gaussian wavepacket.

    Args:
        grid: Sampling grid.
        center: Peak time (s).
        intensity_fwhm: FWHM of ``|E|²`` (s).

    Returns:
        Envelope with amplitude ``exp(-(t-center)²/(2σ²))``, ``σ = fwhm/(2√ln2)``.
    """
    check_positive("intensity_fwhm", intensity_fwhm)
    if intensity_fwhm <= 4 * grid.dt:
        raise ConfigError(
            f"intensity_fwhm={intensity_fwhm:g} s is not resolved by dt={grid.dt:g} s "
            "(needs fwhm > 4*dt)"
        )
    sigma = gaussian_sigma(intensity_fwhm)
    x = (grid.times - center) / sigma
    return _normalized_on(grid, np.exp(-0.5 * x * x), "gaussian")


def make_exponential(grid, start, decay):
    """Normalised one-sided exponential ``√2 e^{-(t-start)/decay}`` for t >= start."""
    check_positive("decay", decay)
    if decay <= grid.dt:
        raise ConfigError(f"decay={decay:g} s must exceed dt={grid.dt:g} s")
    t = grid.times
    x = (t - start) / decay
    samples = np.where(x >= 0, np.exp(-np.clip(x, 0, None)), 0.0)
    return _normalized_on(grid, samples, "exponential")


def _ion_profile(x, rise, fall):
    # smooth exponential rise joined to an exponential fall
    a = np.clip(-x / rise, -700, 700)
    b = np.clip(x / fall, -700, 700)
    return 1.0 / (np.exp(a) + np.exp(b))


def _ion_peak(rise, fall):
    return math.log(fall / rise) * rise * fall / (rise + fall)


def _ion_fwhm(rise, fall):
    x0 = _ion_peak(rise, fall)
    peak2 = _ion_profile(x0, rise, fall) ** 2

    def g(x):
        return _ion_profile(x, rise, fall) ** 2 - 0.5 * peak2

    left = brentq(g, x0 - 60 * rise, x0)
    right = brentq(g, x0, x0 + 60 * fall)
    return right - left


def make_asymmetric_ion_like(grid, rise, fall, fwhm, center=None, start=None):
    """Synthetic emitter-like photon with a fast rise and a slower tail.

    The amplitude is ``1/(exp(-x/r) + exp(x/f))``. The two time constants are
    rescaled together so that ``|E|²`` has the requested FWHM. Equal constants
    give a symmetric sech-like profile.

    Args:
        grid: Sampling grid.
        rise: Rise time constant (relative scale, s).
        fall: Fall time constant (relative scale, s).
        fwhm: Target FWHM of the intensity (s).
        center: Time of the intensity peak. Defaults to the grid midpoint.
        start: Optional time before which the envelope is forced to zero.

    Returns:
        Normalised envelope.
    """
    check_positive("rise", rise)
    check_positive("fall", fall)
    check_positive("fwhm", fwhm)
    if rise > fall:
        raise ConfigError(f"rise ({rise:g}) must not exceed fall ({fall:g})")
    if fwhm <= 4 * grid.dt:
        raise ConfigError(f"fwhm={fwhm:g} s is not resolved by dt={grid.dt:g} s")
    scale = fwhm / _ion_fwhm(rise, fall)
    r, f = rise * scale, fall * scale
    if center is None:
        center = 0.5 * (grid.t0 + grid.t_end)
    x = grid.times - center + _ion_peak(r, f)
    samples = _ion_profile(x, r, f)
    if start is not None:
        samples = np.where(grid.times >= start, samples, 0.0)
    return _normalized_on(grid, samples, "ion-like profile")


def _check_same_grid(a, b):
    if not a.grid.same_as(b.grid):
        raise ConfigError(
            "envelopes live on different grids; resample one of them explicitly "
            f"({a.grid} vs {b.grid})"
        )


def overlap(a, b, resample_b=False):
    """Inner product ``∫ a*(t) b(t) dt``.

    Args:
        a: First envelope (conjugated).
        b: Second envelope.
        resample_b: Linearly resample ``b`` onto ``a``'s grid if they differ.

    Returns:
        Complex overlap.
    """
    if resample_b and not a.grid.same_as(b.grid):
        b = resample(b, a.grid)
    _check_same_grid(a, b)
    return complex(trapezoid(np.conj(a.samples) * b.samples, a.grid.dt))


@dataclass(frozen=True)
class SpectralBoxFilter:
    """Ideal band-pass on angular frequency: keeps ``|ω - center| <= half_width``."""

    half_width: float
    center: float = 0.0

    def __post_init__(self):
        check_positive("half_width", self.half_width)

    def __call__(self, e):
        return box_filter(e, self)


def angular_frequencies(grid):
    return 2 * np.pi * np.fft.fftfreq(grid.n, grid.dt)


def box_filter(e, f):
    """Apply a sharp spectral box filter.

    Args:
        e: Input envelope.
        f: Filter. The component ``exp(iωt)`` is kept when ``|ω - center| <= half_width``.

    Returns:
        Tuple ``(filtered envelope, retained energy fraction)``.
    """
    resolution = 2 * np.pi / (e.grid.n * e.grid.dt)
    if resolution >= f.half_width / 10:
        raise ConfigError(
            f"spectral resolution {resolution:.4g} rad/s is too coarse for half_width "
            f"{f.half_width:.4g} rad/s; pad the envelope to at least "
            f"{20 * np.pi / f.half_width:.4g} s (see pad_for_filter)"
        )
    spec = np.fft.fft(e.samples)
    keep = np.abs(angular_frequencies(e.grid) - f.center) <= f.half_width
    out = Envelope(e.grid, np.fft.ifft(np.where(keep, spec, 0.0)))
    e_in = e.energy()
    retained = out.energy() / e_in if e_in > 0 else 0.0
    return out, float(retained)


def pad_for_filter(e, half_width, factor=10.0):
    """Zero-pad ``e`` symmetrically until a box filter of ``half_width`` is resolved."""
    needed = int(math.ceil(2 * np.pi * factor / (half_width * e.grid.dt))) + 2
    if needed <= e.grid.n:
        return e
    extra = needed - e.grid.n
    left = extra // 2
    grid = TimeGrid(e.grid.t0 - left * e.grid.dt, e.grid.dt, needed)
    samples = np.zeros(needed, dtype=complex)
    samples[left : left + e.grid.n] = e.samples
    return Envelope(grid, samples)


def pad_to(e, t1, t2):
    """Zero-extend ``e`` on its own grid so it covers ``[t1, t2]``."""
    left = max(0, int(math.ceil((e.grid.t0 - t1) / e.grid.dt)))
    right = max(0, int(math.ceil((t2 - e.grid.t_end) / e.grid.dt)))
    samples = np.concatenate([np.zeros(left, complex), e.samples, np.zeros(right, complex)])
    return Envelope(TimeGrid(e.grid.t0 - left * e.grid.dt, e.grid.dt, samples.size), samples)


def decimate(e, dt):
    """Fourier down-sampling to a step close to ``dt``.

    Unlike :func:`resample`, content above the new Nyquist frequency is
    discarded rather than refused, so this is meant for a following narrow
    filter. The spectrum is treated as periodic: leave zero margins around the
    signal (see :func:`pad_to`) so the wrap-around is harmless.

    Returns:
        Envelope on a grid with the same start and span and ``n·dt_old/dt`` points.
    """
    from scipy.signal import resample as fft_resample

    check_positive("dt", dt)
    n_new = int(round(e.grid.n * e.grid.dt / dt))
    if n_new >= e.grid.n:
        return e
    if n_new < 2:
        raise ConfigError(f"dt={dt:g} s leaves fewer than two samples")
    samples = fft_resample(e.samples, n_new)
    return Envelope(TimeGrid(e.grid.t0, e.grid.n * e.grid.dt / n_new, n_new), samples)


def crop_to(e, t1, t2):
    """Restrict ``e`` to the grid points inside ``[t1, t2]`` (new, shorter grid)."""
    i = max(0, int(math.ceil((t1 - e.grid.t0) / e.grid.dt - 1e-9)))
    j = min(e.grid.n - 1, int(math.floor((t2 - e.grid.t0) / e.grid.dt + 1e-9)))
    if j - i < 1:
        raise ConfigError(f"interval [{t1:g}, {t2:g}] holds fewer than two samples")
    return Envelope(TimeGrid(e.grid.t0 + i * e.grid.dt, e.grid.dt, j - i + 1), e.samples[i : j + 1])


def _spectral_tail(e, omega_max):
    power = np.abs(np.fft.fft(e.samples)) ** 2
    total = power.sum()
    if total == 0:
        return 0.0
    return float(power[np.abs(angular_frequencies(e.grid)) > omega_max].sum() / total)


def resample(e, grid, method="linear", alias_tol=1e-6):
    """Interpolate ``e`` onto another grid.

    Args:
        e: Source envelope.
        grid: Target grid.
        method: ``"linear"`` or ``"bandlimited"`` (FFT zero-padding, then cubic).
        alias_tol: Largest spectral energy fraction allowed above the new Nyquist frequency.

    Returns:
        Envelope on ``grid``. Points outside the source span are zero; an
        :class:`ExtrapolationWarning` is emitted if that drops a non-negligible edge.
    """
    if grid.same_as(e.grid):
        return e
    if grid.t_end < e.grid.t0 or grid.t0 > e.grid.t_end:
        raise ConfigError("target grid does not overlap the source support")
    if grid.dt > e.grid.dt * (1 + 1e-12):
        tail = _spectral_tail(e, np.pi / grid.dt)
        if tail > alias_tol:
            raise ConfigError(
                f"downsampling to dt={grid.dt:g} s would alias {tail:.2e} of the energy"
            )
    peak = np.abs(e.samples).max()
    t = grid.times
    outside = (t < e.grid.t0 - 1e-9 * e.grid.dt) | (t > e.grid.t_end + 1e-9 * e.grid.dt)
    if outside.any() and peak > 0:
        edge = max(abs(e.samples[0]), abs(e.samples[-1]))
        if edge > 1e-6 * peak:
            warnings.warn(
                "resample zero-filled beyond a source edge that is not negligible",
                ExtrapolationWarning,
                stacklevel=2,
            )
    src_t = e.times
    if method == "linear":
        re = np.interp(t, src_t, e.samples.real, left=0.0, right=0.0)
        im = np.interp(t, src_t, e.samples.imag, left=0.0, right=0.0)
        samples = re + 1j * im
    elif method == "bandlimited":
        from scipy.interpolate import CubicSpline
        from scipy.signal import resample as fft_resample

        up = max(1, int(math.ceil(4 * e.grid.dt / grid.dt)))
        fine = fft_resample(e.samples, e.grid.n * up)
        fine_t = e.grid.t0 + (e.grid.dt / up) * np.arange(e.grid.n * up)
        samples = CubicSpline(fine_t, fine)(np.clip(t, fine_t[0], fine_t[-1]))
        samples = np.asarray(samples, dtype=complex)
    else:
        raise ConfigError(f"unknown resampling method {method!r}")
    samples = np.where(outside, 0.0, samples)
    return Envelope(grid, samples)


def save_csv(e, path):
    """Write ``e`` as ``t,re,im`` rows (17 significant digits, deterministic)."""
    t = e.times
    with open(path, "w", newline="") as fh:
        fh.write("t,re,im\n")
        for ti, z in zip(t, e.samples):
            fh.write(f"{ti:.17g},{z.real:.17g},{z.imag:.17g}\n")


def load_csv(path, rtol=1e-6):
    """Read an envelope written by :func:`save_csv` (or any ``t,re,im`` CSV).

    Args:
        path: File path.
        rtol: Allowed relative jitter of the time step.

    Returns:
        Envelope on the uniform grid implied by the file.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ConfigError(f"{path}: empty file") from None
        for col in ("t", "re", "im"):
            if col not in header:
                raise ConfigError(f"{path}: missing column '{col}'")
        it, ir, ii = header.index("t"), header.index("re"), header.index("im")
        rows = [r for r in reader if r and any(c.strip() for c in r)]
    try:
        data = np.array([[float(r[it]), float(r[ir]), float(r[ii])] for r in rows])
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"{path}: malformed row ({exc})") from None
    if len(data) < 2:
        raise ConfigError(f"{path}: need at least two rows")
    t = data[:, 0]
    steps = np.diff(t)
    dt = (t[-1] - t[0]) / (len(t) - 1)
    # compare every step with the first one so the report points at the first odd row
    bad = np.flatnonzero((steps <= 0) | (np.abs(steps - steps[0]) > rtol * abs(steps[0])))
    if bad.size:
        raise ConfigError(
            f"{path}: time column is not uniform/increasing at data row {bad[0] + 2} "
            "(rows counted from 1 after the header)"
        )
    return Envelope(TimeGrid(float(t[0]), float(dt), len(t)), data[:, 1] + 1j * data[:, 2])

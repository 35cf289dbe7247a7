"""Time integration of the cavity-enhanced AFC memory with control pulses.

Scalar model (one excitation, zero initial state)::

    dE/dt   = -κE + i g√N Σ √n_k P_k + √(2κ) E_in
    dP_k/dt = -(γ_P + iω_k) P_k + i g√N √n_k E + (i/2) Ω(t) S_k
    dS_k/dt = -γ_S S_k + (i/2) Ω*(t) P_k
    E_out   = √(2κ) E - E_in
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline
from sklearn.base import BaseEstimator

from . import _rk8
from ._validation import ConfigError, NumericalError, check_choice, check_positive
from .comb import CombGrid, CombSpec, build_comb
from .waveform import Envelope, TimeGrid, cumulative_trapezoid, save_csv, trapezoid

PULSE_KINDS = ("storage", "synchronization", "readout")
STEP_FACTOR = 20.0


@dataclass(frozen=True)
class MemoryParams:
    """Rates in rad/s (κ, g√N) and 1/s (decays), plus the discretised comb."""

    kappa: float
    g_sqrt_N: float
    comb: CombGrid
    gamma_P: float = 0.0
    gamma_S: float = 0.0

    def __post_init__(self):
        check_positive("kappa", self.kappa)
        check_positive("g_sqrt_N", self.g_sqrt_N, allow_zero=True)
        check_positive("gamma_P", self.gamma_P, allow_zero=True)
        check_positive("gamma_S", self.gamma_S, allow_zero=True)


@dataclass(frozen=True)
class ControlPulse:
    """Rectangular control pulse with constant Rabi frequency ``rabi·e^{i·phase}``."""

    start: float
    duration: float
    rabi: float
    phase: float = 0.0
    kind: str = "readout"

    def __post_init__(self):
        check_positive("pulse duration", self.duration)
        check_positive("pulse rabi", self.rabi, allow_zero=True)
        check_choice("pulse kind", self.kind, PULSE_KINDS)

    @property
    def end(self):
        return self.start + self.duration

    @property
    def center(self):
        return self.start + 0.5 * self.duration

    @property
    def area(self):
        return self.rabi * self.duration

    @classmethod
    def with_area(cls, center, duration, area, phase=0.0, kind="readout"):
        return cls(center - 0.5 * duration, duration, area / duration, phase, kind)


@dataclass(frozen=True)
class PulseSchedule:
    """Time-ordered, non-overlapping control pulses."""

    pulses: tuple = ()

    def __post_init__(self):
        pulses = tuple(self.pulses)
        object.__setattr__(self, "pulses", pulses)
        for i in range(1, len(pulses)):
            a, b = pulses[i - 1], pulses[i]
            if b.start <= a.start:
                raise ConfigError(f"pulse {i} does not start after pulse {i - 1}")
            if b.start < a.end - 1e-15:
                raise ConfigError(
                    f"pulses {i - 1} ({a.kind} at {a.start:.6g} s) and {i} "
                    f"({b.kind} at {b.start:.6g} s) overlap"
                )

    def __len__(self):
        return len(self.pulses)

    def __iter__(self):
        return iter(self.pulses)

    @property
    def min_duration(self):
        return min((p.duration for p in self.pulses), default=math.inf)

    def rabi_per_step(self, grid):
        """Complex Rabi frequency averaged over each step ``[t_n, t_n + dt)``."""
        out = np.zeros(grid.n - 1, dtype=complex)
        h = grid.dt
        for p in self.pulses:
            i0 = max(0, int(math.floor((p.start - grid.t0) / h)))
            i1 = min(grid.n - 1, int(math.ceil((p.end - grid.t0) / h)))
            if i1 <= i0:
                continue
            t = grid.t0 + h * np.arange(i0, i1)
            frac = (np.minimum(t + h, p.end) - np.maximum(t, p.start)) / h
            out[i0:i1] += np.clip(frac, 0.0, 1.0) * p.rabi * np.exp(1j * p.phase)
        return out

    def to_dict(self):
        return {
            "pulses": [
                {
                    "kind": p.kind,
                    "start_s": p.start,
                    "duration_s": p.duration,
                    "rabi_rad_s": p.rabi,
                    "phase_rad": p.phase,
                }
                for p in self.pulses
            ]
        }


@dataclass(frozen=True, eq=False)
class SimOutput:
    """Result of :func:`simulate`.

    Attributes:
        e_out: Output field on the simulation grid.
        e_in: Input field sampled on the same grid.
        cavity: Intracavity field ``E`` at each grid point.
        budget: Per-point conservation terms ``cavity``, ``polarization``,
            ``spin``, ``emitted`` and ``future_input``.
        input_energy: ``∫|E_in|²`` on the simulation grid.
        state_trace: Optional dict with ``times``, ``P`` and ``S`` snapshots.
        lossless: Whether both decay rates were zero.
    """

    e_out: Envelope
    e_in: Envelope
    cavity: np.ndarray
    budget: dict
    input_energy: float
    lossless: bool
    state_trace: Optional[dict] = None
    schedule: PulseSchedule = field(default_factory=PulseSchedule)

    @property
    def grid(self):
        return self.e_out.grid

    def save(self, out_dir, stem="output", windows=None):
        """Write ``<stem>.csv`` (output field) and ``<stem>.json`` (budget, efficiencies)."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        save_csv(self.e_out, out_dir / f"{stem}.csv")
        summary = {
            "input_energy": self.input_energy,
            "output_energy": self.e_out.energy(),
            "final_budget": {k: float(v[-1]) for k, v in self.budget.items()},
            "max_budget_deviation": energy_budget(self) if self.lossless else None,
            "windows": {
                name: {"t1_s": w[0], "t2_s": w[1], "efficiency": window_efficiency(self, w)}
                for name, w in (windows or {}).items()
            },
            "schedule": self.schedule.to_dict(),
        }
        with open(out_dir / f"{stem}.json", "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)
        return summary


def max_step(params, schedule=None):
    """Largest admissible step and the name of the scale that sets it."""
    scales = {"cavity decay 1/(20κ)": 1.0 / (STEP_FACTOR * params.kappa)}
    if schedule is not None and len(schedule):
        scales["control pulse τ/20"] = schedule.min_duration / STEP_FACTOR
    wmax = float(np.abs(params.comb.omegas).max())
    if wmax > 0:
        scales["detuning 2π/(20·max|ω|)"] = 2 * np.pi / (STEP_FACTOR * wmax)
    name = min(scales, key=scales.get)
    return scales[name], name


def make_grid(params, t0, t_end, schedule=None, dt=None):
    """Simulation grid from ``t0`` to at least ``t_end`` at the admissible step."""
    limit, _ = max_step(params, schedule)
    return TimeGrid.from_span(t0, t_end, limit if dt is None else dt)


def _forcing(params, input_env, grid):
    """Input on the grid and the drive at every RK stage time."""
    src = input_env
    mag = np.abs(src.samples)
    peak = mag.max() if mag.size else 0.0
    t = grid.times
    if peak == 0:
        return np.zeros(grid.n, complex), np.zeros((0, _rk8.N_STAGES), complex)
    nz = np.flatnonzero(mag > 1e-13 * peak)
    lo, hi = nz[0], nz[-1]
    t_lo, t_hi = src.times[lo], src.times[hi]
    k0, k1 = max(0, lo - 2), min(src.grid.n, hi + 3)
    spline = CubicSpline(src.times[k0:k1], src.samples[k0:k1])

    def sample(tt):
        inside = (tt >= t_lo) & (tt <= t_hi)
        out = np.zeros(tt.shape, complex)
        out[inside] = spline(tt[inside])
        return out

    e_in = sample(t)
    n_force = min(grid.n - 1, int(math.ceil((t_hi - grid.t0) / grid.dt)) + 1)
    stage_t = t[:n_force, None] + grid.dt * _rk8.C[None, :]
    drive = math.sqrt(2 * params.kappa) * sample(stage_t)
    return e_in, np.ascontiguousarray(drive)


def simulate(params, input_env, schedule=None, grid=None, record_every=None, check_step=True):
    """Integrate the memory equations on a fixed grid.

    Args:
        params: Memory parameters.
        input_env: Incoming photon envelope (any grid, zero at the start of ``grid``).
        schedule: Control pulses; empty by default.
        grid: Simulation grid. Its step must resolve the cavity, pulse and detuning scales.
        record_every: Store the full ``P`` and ``S`` vectors every this many steps.
        check_step: Enforce the step-size rule.

    Returns:
        SimOutput.
    """
    schedule = schedule if schedule is not None else PulseSchedule()
    if grid is None:
        raise ConfigError("simulate needs a grid (see make_grid)")
    if check_step:
        limit, name = max_step(params, schedule)
        if grid.dt > limit * (1 + 1e-9):
            raise ConfigError(
                f"dt={grid.dt:.4g} s exceeds the {name} limit {limit:.4g} s"
            )
    e_in, drive = _forcing(params, input_env, grid)
    peak = np.abs(e_in).max()
    if peak > 0 and abs(e_in[0]) > 1e-5 * peak:
        raise ConfigError("the input envelope must vanish at the start of the simulation grid")

    comb = params.comb
    n_cls = comb.n_classes
    h = grid.dt
    rabi = schedule.rabi_per_step(grid)
    spin_decay = complex(_rk8.stability_factor(-params.gamma_S * h))
    P = np.zeros(n_cls, complex)
    S = np.zeros(n_cls, complex)
    out_E = np.zeros(grid.n, complex)
    out_P = np.zeros(grid.n)
    out_S = np.zeros(grid.n)
    every = int(record_every or 0)
    n_hist = (grid.n - 1) // every if every > 0 else 0
    hist_P = np.zeros((n_hist, n_cls), complex)
    hist_S = np.zeros((n_hist, n_cls), complex)
    bad = _rk8.integrate(
        0j, P, S, comb.omegas, np.sqrt(comb.weights), params.kappa, params.g_sqrt_N,
        params.gamma_P, params.gamma_S, spin_decay, h, h * _rk8.A, h * _rk8.B,
        drive, rabi, out_E[1:], out_P[1:], out_S[1:], every, hist_P, hist_S,
    )
    if bad >= 0:
        raise NumericalError(f"non-finite cavity field at t={grid.t0 + (bad + 1) * h:.6g} s")

    e_out = math.sqrt(2 * params.kappa) * out_E - e_in
    in_int = np.abs(e_in) ** 2
    total_in = float(trapezoid(in_int, h))
    budget = {
        "cavity": np.abs(out_E) ** 2,
        "polarization": out_P,
        "spin": out_S,
        "emitted": cumulative_trapezoid(np.abs(e_out) ** 2, h),
        "future_input": total_in - cumulative_trapezoid(in_int, h),
    }
    trace = None
    if every > 0:
        trace = {"times": grid.t0 + h * every * np.arange(1, n_hist + 1), "P": hist_P, "S": hist_S}
    return SimOutput(
        e_out=Envelope(grid, e_out),
        e_in=Envelope(grid, e_in),
        cavity=out_E,
        budget=budget,
        input_energy=total_in,
        lossless=params.gamma_P == 0 and params.gamma_S == 0,
        state_trace=trace,
        schedule=schedule,
    )


def budget_total(output):
    """Sum of the five conservation terms at every grid point, divided by the input energy."""
    if output.input_energy == 0:
        return np.zeros(output.grid.n)
    return sum(output.budget.values()) / output.input_energy


def energy_budget(output):
    """Largest deviation of the normalised conservation sum from one."""
    if output.input_energy == 0:
        return 0.0
    return float(np.max(np.abs(1.0 - budget_total(output))))


def window_efficiency(output, window):
    """Output energy inside ``window = (t1, t2)`` relative to the input energy."""
    t1, t2 = window
    if output.input_energy == 0:
        return 0.0
    return output.e_out.window_energy(t1, t2) / output.input_energy


def analytic_eta_abs(c_over_copt):
    """Absorption efficiency ``4x/(1+x)²`` at ``x = C/C_opt``."""
    x = check_positive("c_over_copt", c_over_copt, allow_zero=True)
    return 4 * x / (1 + x) ** 2


def analytic_eta_first_echo(c_over_copt, eta_f=1.0, gamma_P=0.0, Delta=None):
    """First-echo efficiency ``η_F · 16x²/(1+x)⁴ · e^{-2γ_P·2π/Δ}``."""
    x = check_positive("c_over_copt", c_over_copt, allow_zero=True)
    value = eta_f * 16 * x**2 / (1 + x) ** 4
    if gamma_P:
        if Delta is None:
            raise ConfigError("Delta is required when gamma_P > 0")
        value *= math.exp(-2 * gamma_P * 2 * np.pi / Delta)
    return value


def rabi_transfer(omega_detuning, rabi, duration):
    """Population moved by a rectangular pulse at detuning ``ω``.

    Returns ``(Ω²T²/4)·sinc²(ΥT/2)`` with ``Υ = √(Ω² + ω²)`` and ``sinc x = sin x / x``.
    """
    w = np.asarray(omega_detuning, dtype=float)
    ups = np.sqrt(rabi**2 + w**2)
    x = ups * duration / 2
    return (rabi * duration / 2) ** 2 * np.sinc(x / np.pi) ** 2


def echo_phase(output, delay):
    """``⟨E_in(· - delay), E_out⟩`` (its sign shows the phase of the echo)."""
    g = output.grid
    shift = int(round(delay / g.dt))
    a = np.zeros(g.n, complex)
    if shift < g.n:
        a[shift:] = output.e_in.samples[: g.n - shift]
    return complex(trapezoid(np.conj(a) * output.e_out.samples, g.dt))


class AFCMemory(BaseEstimator):
    """Estimator-style wrapper around :func:`simulate`.

    Args:
        kappa: Cavity field decay rate (rad/s).
        g_sqrt_N: Collective coupling (rad/s). ``None`` picks the impedance-matched value.
        comb_spec: Comb layout.
        gamma_P: Optical coherence decay (1/s).
        gamma_S: Spin coherence decay (1/s).
        c_over_copt: Cooperativity relative to the matched value, used when ``g_sqrt_N`` is None.
    """

    def __init__(self, kappa=2 * np.pi * 55e6, g_sqrt_N=None, comb_spec=None, gamma_P=0.0,
                 gamma_S=0.0, c_over_copt=1.0):
        self.kappa = kappa
        self.g_sqrt_N = g_sqrt_N
        self.comb_spec = comb_spec
        self.gamma_P = gamma_P
        self.gamma_S = gamma_S
        self.c_over_copt = c_over_copt

    def fit(self, X=None, y=None):
        from .comb import matched_coupling

        if not isinstance(self.comb_spec, CombSpec):
            raise ConfigError("comb_spec must be a CombSpec")
        self.comb_ = build_comb(self.comb_spec)
        g = self.g_sqrt_N
        if g is None:
            g = matched_coupling(self.kappa, self.comb_spec.envelope, self.c_over_copt)
        self.params_ = MemoryParams(self.kappa, g, self.comb_, self.gamma_P, self.gamma_S)
        return self

    def predict(self, input_env, schedule=None, t_end=None, grid=None, **kwargs):
        """Simulate from the start of the input grid until ``t_end``."""
        if not hasattr(self, "params_"):
            self.fit()
        if grid is None:
            if t_end is None:
                raise ConfigError("give either t_end or grid")
            grid = make_grid(self.params_, input_env.grid.t0, t_end, schedule)
        return simulate(self.params_, input_env, schedule, grid, **kwargs)

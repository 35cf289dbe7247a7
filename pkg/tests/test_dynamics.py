import math

import numpy as np
import pytest
from scipy.integrate import quad
from sklearn.base import clone

from afcshaper._validation import ConfigError, NumericalError
from afcshaper.comb import CombSpec, ShapeKind, build_comb, eta_F, matched_coupling
from afcshaper.dynamics import (AFCMemory, ControlPulse, MemoryParams, PulseSchedule,
                                analytic_eta_abs, analytic_eta_first_echo, budget_total,
                                echo_phase, energy_budget, make_grid, max_step, rabi_transfer,
                                simulate, window_efficiency)
from afcshaper.waveform import (Envelope, TimeGrid, make_exponential,
                                make_gaussian, overlap, resample)

TWO_PI = 2 * math.pi
KAPPA = TWO_PI * 55e6
ENV = ShapeKind("rectangular", TWO_PI * 4e6)
T_IN = 1.5e-6


@pytest.fixture(scope="module")
def photon():
    return make_gaussian(TimeGrid(0.0, 1e-9, 4000), T_IN, 330e-9)


@pytest.fixture(scope="module")
def small_params(small_spec):
    return MemoryParams(KAPPA, matched_coupling(KAPPA, ENV), build_comb(small_spec))


@pytest.fixture(scope="module")
def small_echo(small_params, small_spec, photon):
    T = small_spec.rephasing_time
    return simulate(small_params, photon, None, make_grid(small_params, 0.0, T_IN + 1.5 * T))


def _pi_pair(t_store, storage_time, tau=10e-9):
    return PulseSchedule((
        ControlPulse.with_area(t_store, tau, math.pi, kind="storage"),
        ControlPulse.with_area(t_store + storage_time, tau, math.pi, kind="readout"),
    ))


def _shape_overlap(a, b):
    return abs(overlap(a, b)) / math.sqrt(a.energy() * b.energy())


def test_step_rule_names_the_binding_scale(small_params, photon):
    limit, name = max_step(small_params)
    assert name.startswith("cavity")
    assert limit == pytest.approx(1 / (20 * KAPPA))
    sched = PulseSchedule((ControlPulse.with_area(3e-6, 1e-9, math.pi),))
    limit, name = max_step(small_params, sched)
    assert "pulse" in name and limit == pytest.approx(5e-11)
    coarse = TimeGrid.from_span(0.0, 3e-6, 1e-9)
    with pytest.raises(ConfigError, match="cavity decay"):
        simulate(small_params, photon, None, coarse)


def test_input_must_start_at_zero(small_params, photon):
    g = make_grid(small_params, T_IN, 3e-6)
    with pytest.raises(ConfigError, match="vanish"):
        simulate(small_params, photon, None, g)


def test_schedule_rejects_overlap():
    a = ControlPulse(1e-6, 100e-9, 1e7, kind="storage")
    b = ControlPulse(1.05e-6, 100e-9, 1e7)
    with pytest.raises(ConfigError, match="overlap"):
        PulseSchedule((a, b))
    with pytest.raises(ConfigError):
        ControlPulse(0.0, 1e-7, 1.0, kind="pump")


def test_pulse_area_is_exact_on_any_grid():
    p = ControlPulse.with_area(1.0037e-6, 70e-9, math.pi)
    grid = TimeGrid(0.0, 0.37e-9, 6000)
    rabi = PulseSchedule((p,)).rabi_per_step(grid)
    assert np.sum(rabi.real) * grid.dt == pytest.approx(math.pi, rel=1e-12)


def test_no_atoms_reflects_the_input(small_spec, photon):
    p = MemoryParams(KAPPA, 0.0, build_comb(small_spec))
    out = simulate(p, photon, None, make_grid(p, 0.0, 4e-6))
    # oracle: empty cavity, E = √(2κ)∫e^{-κ(t-s)}E_in(s)ds and E_out = √(2κ)E - E_in
    s = 1 / KAPPA
    for t in (1.2e-6, 1.5e-6, 1.8e-6):
        i = out.grid.index_of(t)
        tt = out.grid.times[i]
        f = lambda x: math.exp(-(tt - x) / s) * float(np.interp(x, photon.times, photon.samples.real))
        ref, _ = quad(f, tt - 40 * s, tt, epsabs=1e-12, limit=200)
        e_ref = 2 * KAPPA * ref - float(np.interp(tt, photon.times, photon.samples.real))
        assert out.e_out.samples[i].real == pytest.approx(e_ref, abs=2e-3 * np.abs(photon.samples).max())
    assert out.e_out.energy() == pytest.approx(out.input_energy, rel=1e-6)


def test_linearity(small_params, photon):
    g = make_grid(small_params, 0.0, 5e-6)
    other = make_gaussian(TimeGrid(0.0, 1e-9, 4000), 2.0e-6, 250e-9)
    a = simulate(small_params, photon, None, g)
    b = simulate(small_params, other, None, g)
    mix = Envelope(photon.grid, 0.6 * photon.samples + (0.3 - 0.4j) * other.samples)
    c = simulate(small_params, mix, None, g)
    expect = 0.6 * a.e_out.samples + (0.3 - 0.4j) * b.e_out.samples
    assert np.max(np.abs(c.e_out.samples - expect)) < 1e-9 * np.abs(expect).max()


def test_causality(small_params):
    inp = make_exponential(TimeGrid(0.0, 1e-9, 4000), 1.0e-6, 200e-9)
    out = simulate(small_params, inp, None, make_grid(small_params, 0.0, 3e-6))
    assert np.all(out.e_out.samples[out.grid.times < 1.0e-6 - out.grid.dt] == 0)


def test_conservation_and_echo_phase(small_echo, small_spec):
    assert energy_budget(small_echo) < 1e-6
    T = small_spec.rephasing_time
    assert window_efficiency(small_echo, (T_IN + T / 2, T_IN + 1.5 * T)) > 0.95
    assert echo_phase(small_echo, T).real < 0


def test_zero_input_gives_zero_output(small_params):
    out = simulate(small_params, Envelope(TimeGrid(0.0, 1e-9, 100), np.zeros(100)), None,
                   make_grid(small_params, 0.0, 1e-6))
    assert np.all(out.e_out.samples == 0)
    assert energy_budget(out) == 0.0


def test_non_finite_abort(small_spec, photon):
    p = MemoryParams(KAPPA, matched_coupling(KAPPA, ENV), build_comb(small_spec))
    g = TimeGrid.from_span(0.0, 1e-4, 30 / KAPPA)  # far past the stability limit
    with np.errstate(all="ignore"), pytest.raises(NumericalError, match="non-finite"):
        simulate(p, photon, None, g, check_step=False)


def test_storage_and_readout_delay_the_echo(small_params, small_echo, small_spec, photon):
    T = small_spec.rephasing_time
    w = (T_IN + T / 2, T_IN + 1.5 * T)
    ref = small_echo.e_out.masked(*w)
    for storage_time in (1e-6, 3e-6):
        sched = _pi_pair(T_IN + 0.9e-6, storage_time)
        out = simulate(small_params, photon, sched,
                       make_grid(small_params, 0.0, w[1] + storage_time, sched))
        assert energy_budget(out) < 1e-6
        late = out.e_out.masked(w[0] + storage_time, w[1] + storage_time)
        back = Envelope(TimeGrid(late.grid.t0 - storage_time, late.grid.dt, late.grid.n), late.samples)
        assert _shape_overlap(ref, resample(back, ref.grid)) > 0.98
        assert window_efficiency(out, (w[0] + storage_time, w[1] + storage_time)) == pytest.approx(
            window_efficiency(small_echo, w), rel=1e-3)


def test_spin_decay_exponent_recovered(small_spec, photon):
    gamma_s = TWO_PI * 20e3
    p = MemoryParams(KAPPA, matched_coupling(KAPPA, ENV), build_comb(small_spec), gamma_S=gamma_s)
    T = small_spec.rephasing_time
    eff = {}
    for storage_time in (1e-6, 3e-6):
        sched = _pi_pair(T_IN + 0.9e-6, storage_time)
        out = simulate(p, photon, sched, make_grid(p, 0.0, T_IN + 1.5 * T + storage_time, sched))
        eff[storage_time] = window_efficiency(out, (T_IN + T / 2 + storage_time, T_IN + 1.5 * T + storage_time))
        assert np.all(np.diff(budget_total(out)) <= 1e-9)
    fitted = -math.log(eff[3e-6] / eff[1e-6]) / (2 * 2e-6)
    assert fitted == pytest.approx(gamma_s, rel=0.02)


def test_optical_decay_matches_closed_form(small_spec, photon, small_echo):
    gamma_p = TWO_PI * 5e3
    p = MemoryParams(KAPPA, matched_coupling(KAPPA, ENV), build_comb(small_spec), gamma_P=gamma_p)
    T = small_spec.rephasing_time
    out = simulate(p, photon, None, make_grid(p, 0.0, T_IN + 1.5 * T))
    w = (T_IN + T / 2, T_IN + 1.5 * T)
    ratio = window_efficiency(out, w) / window_efficiency(small_echo, w)
    assert ratio == pytest.approx(math.exp(-2 * gamma_p * T), rel=0.01)
    assert analytic_eta_first_echo(1.0, 1.0, gamma_p, small_spec.delta) == pytest.approx(
        math.exp(-2 * gamma_p * T))


def test_analytic_forms():
    assert analytic_eta_abs(1.0) == 1.0
    assert analytic_eta_abs(0.5) == pytest.approx(8 / 9)
    assert analytic_eta_abs(2.0) == pytest.approx(analytic_eta_abs(0.5))
    assert analytic_eta_first_echo(1.0) == 1.0
    assert analytic_eta_first_echo(0.5, 0.9) == pytest.approx(0.9 * 64 / 81)
    with pytest.raises(ConfigError):
        analytic_eta_first_echo(1.0, 1.0, 1e3)


def test_rabi_transfer():
    tau = 70e-9
    rabi = math.pi / tau
    assert rabi_transfer(0.0, rabi, tau) == pytest.approx(1.0)
    # detuning that makes ΥT = 2π leaves nothing behind
    w = math.sqrt((TWO_PI / tau) ** 2 - rabi**2)
    assert rabi_transfer(w, rabi, tau) == pytest.approx(0.0, abs=1e-12)
    # oracle: direct two-level propagation at a sample detuning
    w = TWO_PI * 3e6
    ups = math.hypot(rabi, w)
    direct = (rabi / ups * math.sin(ups * tau / 2)) ** 2
    assert rabi_transfer(w, rabi, tau) == pytest.approx(direct, rel=1e-12)


def test_class_discretisation_converges(photon):
    # Gaussian teeth, 17 teeth: same finesse regime as the full comb at lower cost
    delta = TWO_PI * 250e3
    effs = []
    for classes in (21, 41):
        spec = CombSpec(ENV, ShapeKind("gaussian", TWO_PI * 4e3), 17, delta=delta, classes_per_tooth=classes)
        p = MemoryParams(KAPPA, matched_coupling(KAPPA, ENV), build_comb(spec))
        T = spec.rephasing_time
        out = simulate(p, photon, None, make_grid(p, 0.0, T_IN + 1.5 * T))
        effs.append(window_efficiency(out, (T_IN + T / 2, T_IN + 1.5 * T)))
    assert abs(effs[1] / effs[0] - 1) < 5e-3
    assert effs[1] == pytest.approx(0.98 * eta_F(ShapeKind("gaussian", TWO_PI * 4e3), delta), rel=0.03)


def test_estimator_api(small_spec, photon):
    est = AFCMemory(comb_spec=small_spec)
    assert clone(est).get_params()["comb_spec"] == small_spec
    out = est.fit().predict(photon, t_end=3e-6)
    assert est.params_.g_sqrt_N == pytest.approx(matched_coupling(KAPPA, ENV))
    assert energy_budget(out) < 1e-6
    with pytest.raises(ConfigError):
        AFCMemory(comb_spec="nope").fit()
    with pytest.raises(ConfigError):
        est.predict(photon)

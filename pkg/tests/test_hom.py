import json
import math

import numpy as np
import pytest

from afcshaper._validation import ConfigError
from afcshaper.hom import (Component, MixedPhoton, build_mixture, fidelity_from_visibility,
                           load_mixture_json, optimize_offset, visibility_mixed_mixed_asymptotic,
                           visibility_pure_mixed, visibility_pure_pure, visibility_windowed)
from afcshaper.waveform import TimeGrid, gaussian_sigma, make_exponential, make_gaussian

FWHM = 1e-6


def gauss(center=3e-6, fwhm=FWHM, dt=5e-9, n=1201):
    return make_gaussian(TimeGrid(0.0, dt, n), center, fwhm)


def random_mixture(rng, k=3):
    comps = []
    w = rng.dirichlet(np.ones(k)) * 0.8
    for i in range(k):
        comps.append(Component(float(w[i]), float(rng.uniform(-1e-6, 1e-6)),
                               gauss(fwhm=float(rng.uniform(0.6e-6, 1.4e-6)))))
    return MixedPhoton(0.2, tuple(comps))


def brute_force_asymptotic(a, b, factor=10):
    # every pair evaluated with analytic Gaussians on a grid `factor` times finer
    dt = 5e-9 / factor
    t = np.arange(-5e-6, 12e-6, dt)
    total = 0.0
    for ca in a.components:
        for cb in b.components:
            sa, sb = gaussian_sigma(ca.psi.fwhm()), gaussian_sigma(cb.psi.fwhm())
            ta, tb = ca.psi.centroid() + ca.shift, cb.psi.centroid() + cb.shift
            fa = (math.pi * sa**2) ** -0.25 * np.exp(-(t - ta) ** 2 / (2 * sa**2))
            fb = (math.pi * sb**2) ** -0.25 * np.exp(-(t - tb) ** 2 / (2 * sb**2))
            total += ca.weight * cb.weight * np.trapezoid(fa * fb, dx=dt) ** 2
    return total / ((1 - a.p0) * (1 - b.p0))


def windowed_oracle(a, b, T, dt=20e-9):
    # direct double sum over the strip |t1 - t2| <= T for pure photons
    t = np.arange(0.0, a.grid.t_end, dt)
    x = np.interp(t, a.times, a.samples.real)
    y = np.interp(t, b.times, b.samples.real)
    mask = np.abs(t[:, None] - t[None, :]) <= T
    num = 2 * (x[:, None] * y[:, None] * x[None, :] * y[None, :])
    den = x[:, None] ** 2 * y[None, :] ** 2 + x[None, :] ** 2 * y[:, None] ** 2
    return np.sum(num * mask) / np.sum(den * mask)


def test_pure_pure_gaussian_offset():
    sigma = gaussian_sigma(FWHM)
    d = 0.5e-6
    v = visibility_pure_pure(gauss(), gauss(3e-6 + d))
    assert v == pytest.approx(math.exp(-d * d / (2 * sigma**2)), rel=1e-6)
    assert visibility_pure_pure(gauss(), gauss()) == pytest.approx(1.0, abs=1e-12)


def test_mixture_validation():
    with pytest.raises(ConfigError, match="expected 1"):
        MixedPhoton(0.1, (Component(0.5, 0.0, gauss()),))
    with pytest.raises(ConfigError):
        MixedPhoton(1.5, ())
    with pytest.raises(ConfigError):
        visibility_mixed_mixed_asymptotic(MixedPhoton(1.0, ()), gauss())


def test_build_mixture_weights():
    m = build_mixture(gauss(), 0.3, (np.array([0.0, 1e-6, 2e-6]), np.array([1.0, 2.0, 1.0])))
    assert m.p0 == 0.3
    assert [c.weight for c in m.components] == pytest.approx([0.175, 0.35, 0.175])
    assert m.support() == pytest.approx((0.0, gauss().grid.t_end + 2e-6))
    assert build_mixture(gauss()).components[0].weight == 1.0
    with pytest.raises(ConfigError):
        build_mixture(gauss(), 0.0, (np.array([0.0]), np.array([-1.0])))


def test_vacuum_does_not_change_the_visibility(rng):
    a = random_mixture(rng)
    b = random_mixture(rng)
    v = visibility_mixed_mixed_asymptotic(a, b)
    scaled = MixedPhoton(0.6, tuple(Component(c.weight * 0.5, c.shift, c.psi) for c in a.components))
    assert visibility_mixed_mixed_asymptotic(scaled, b) == pytest.approx(v, rel=1e-12)


def test_pure_mixed_is_a_special_case(rng):
    b = random_mixture(rng)
    psi = gauss(3.2e-6)
    assert visibility_pure_mixed(psi, b) == pytest.approx(
        visibility_mixed_mixed_asymptotic(MixedPhoton.pure(psi), b), rel=1e-12)


def test_asymptotic_against_fine_double_sum(rng):
    for _ in range(3):
        a, b = random_mixture(rng), random_mixture(rng)
        assert visibility_mixed_mixed_asymptotic(a, b) == pytest.approx(brute_force_asymptotic(a, b), abs=1e-4)


def test_windowed_identical_pure_is_one():
    psi = gauss()
    for T in (0.1e-6, 1e-6, 10e-6):
        r = visibility_windowed(psi, psi, T, samples=512, scrambles=8)
        assert abs(r.value - 1) <= max(3 * r.stderr, 1e-12)


def test_windowed_against_direct_sum():
    a, b = gauss(), gauss(3.4e-6, fwhm=1.5e-6)
    for T in (0.2e-6, 1e-6):
        r = visibility_windowed(a, b, T, samples=4096, scrambles=16, seed=3)
        assert r.value == pytest.approx(windowed_oracle(a, b, T), abs=3 * r.stderr + 2e-3)


def test_windowed_full_window_matches_asymptotic(rng):
    a, b = random_mixture(rng), random_mixture(rng)
    r = visibility_windowed(a, b, math.inf, samples=2048, scrambles=16)
    assert r.value == pytest.approx(visibility_mixed_mixed_asymptotic(a, b), abs=3 * r.stderr + 1e-9)


def test_windowed_is_deterministic_and_flags():
    a, b = gauss(), make_exponential(TimeGrid(0.0, 5e-9, 1201), 2.5e-6, 1e-6)
    r1 = visibility_windowed(a, b, 1e-6, 256, 8, seed=7)
    r2 = visibility_windowed(a, b, 1e-6, 256, 8, seed=7)
    assert r1 == r2
    assert visibility_windowed(a, b, 1e-6, 256, 8, seed=7, tol=0.0).flagged
    with pytest.raises(ConfigError):
        visibility_windowed(a, b, 0.0)


def test_optimize_offset_recovers_delay():
    a = gauss(3e-6)
    b = gauss(3.7e-6)
    offset, v = optimize_offset(a, b, (-2e-6, 2e-6))
    assert offset == pytest.approx(-0.7e-6, abs=2e-9)
    assert v == pytest.approx(1.0, abs=1e-6)


def test_mixture_json_round_trip(tmp_path, rng):
    m = random_mixture(rng)
    m.save_json(tmp_path / "mix.json")
    back = load_mixture_json(tmp_path / "mix.json")
    assert back.p0 == m.p0
    assert visibility_mixed_mixed_asymptotic(back, m) == pytest.approx(
        visibility_mixed_mixed_asymptotic(m, m), rel=1e-9)
    doc = json.loads((tmp_path / "mix.json").read_text())
    doc["components"][0].pop("shift_s")
    (tmp_path / "bad.json").write_text(json.dumps(doc))
    with pytest.raises(ConfigError, match="shift_s"):
        load_mixture_json(tmp_path / "bad.json")


def test_fidelity_from_visibility():
    assert fidelity_from_visibility(1.0) == 1.0
    assert fidelity_from_visibility(0.0) == 0.5
    assert fidelity_from_visibility(0.6) == pytest.approx(0.68)

import math

import numpy as np
import pytest
from scipy.integrate import quad

from afcshaper._validation import ConfigError
from afcshaper.comb import (CombGrid, CombSpec, ShapeKind, build_comb, c_opt, comb_finesse,
                            cooperativity, d_comb, eta_F, matched_coupling, tooth_centers)

TWO_PI = 2 * math.pi
GAMMA = TWO_PI * 4e6


def test_dirac_rectangular_equal_weights(dirac_spec):
    comb = build_comb(dirac_spec)
    assert comb.n_classes == 67
    assert np.allclose(comb.weights, 1 / 67, rtol=0, atol=1e-15)


def test_gaussian_teeth_class_count(pr_yso_spec):
    comb = build_comb(pr_yso_spec)
    assert comb.n_classes == 67 * 21
    assert abs(comb.weights.sum() - 1) < 1e-9


def test_default_period():
    spec = CombSpec(ShapeKind("rectangular", GAMMA), ShapeKind("dirac"), 67)
    assert spec.delta / TWO_PI == pytest.approx(60.6e3, rel=1e-3)
    assert spec.rephasing_time == pytest.approx(16.5e-6, rel=1e-2)


def test_edge_teeth_kept_for_rectangular_envelope(dirac_spec):
    c = tooth_centers(dirac_spec)
    assert c.size == 67
    assert c.max() == pytest.approx(GAMMA / 2)


@pytest.mark.parametrize("envelope", ["rectangular", "gaussian", "lorentzian"])
@pytest.mark.parametrize("tooth", ["dirac", "rectangular", "gaussian", "lorentzian"])
def test_weights_normalised(envelope, tooth):
    spec = CombSpec(ShapeKind(envelope, GAMMA), ShapeKind(tooth, TWO_PI * 5e3), 41, delta=TWO_PI * 100e3,
                    classes_per_tooth=7)
    comb = build_comb(spec)
    assert abs(comb.weights.sum() - 1) < 1e-9
    assert np.all(comb.weights >= 0)
    assert np.all(np.diff(comb.omegas) >= 0)


def test_spec_validation():
    with pytest.raises(ConfigError):
        CombSpec(ShapeKind("rectangular", GAMMA), ShapeKind("dirac"), 2)
    with pytest.raises(ConfigError):
        CombSpec(ShapeKind("rectangular", GAMMA), ShapeKind("dirac"), 67, classes_per_tooth=4)
    with pytest.raises(ConfigError, match="3 classes"):
        build_comb(CombSpec(ShapeKind("rectangular", GAMMA), ShapeKind("gaussian", 1e3), 67,
                            classes_per_tooth=1))
    with pytest.warns(UserWarning, match="4 periods"):
        CombSpec(ShapeKind("rectangular", GAMMA), ShapeKind("dirac"), 3)
    with pytest.warns(UserWarning, match="half a period"):
        CombSpec(ShapeKind("rectangular", GAMMA), ShapeKind("rectangular", TWO_PI * 40e3), 67)
    with pytest.raises(ConfigError):
        CombGrid(np.zeros(3), np.array([0.5, 0.5, 0.5]))


@pytest.mark.parametrize("kind, expected", [
    ("rectangular", TWO_PI / GAMMA),
    ("gaussian", math.sqrt(TWO_PI) / GAMMA),
    ("lorentzian", 2 / GAMMA),
])
def test_d_comb_closed_forms(kind, expected):
    env = ShapeKind(kind, GAMMA)
    assert d_comb(env) == pytest.approx(expected, rel=1e-14)
    # oracle: ∫ṽ(t)dt = 2π v(0), so D_comb = 2π v(0) / ∫v(ω)dω
    s = 1 / GAMMA  # integrate in units of Γ
    lim = 0.5 if kind == "rectangular" else np.inf
    area, _ = quad(lambda x: float(env.value(x / s)), -lim, lim, epsabs=1e-13)
    assert d_comb(env) == pytest.approx(TWO_PI * s / area, rel=1e-8)


@pytest.mark.parametrize("kind, expected", [
    ("rectangular", 1 / math.pi), ("gaussian", math.sqrt(2 / math.pi)), ("lorentzian", 1.0),
])
def test_c_opt(kind, expected):
    assert c_opt(ShapeKind(kind, GAMMA)) == pytest.approx(expected, rel=1e-12)


def test_d_comb_ignores_tooth_shape():
    env = ShapeKind("gaussian", GAMMA)
    values = {CombSpec(env, ShapeKind(t, TWO_PI * 1e3), 67).envelope for t in ("dirac", "gaussian")}
    assert len({d_comb(e) for e in values}) == 1
    assert len({c_opt(e) for e in values}) == 1


def test_cooperativity_pr_yso():
    C = cooperativity(TWO_PI * 8.4e6, TWO_PI * 55e6, GAMMA)
    assert C == pytest.approx(0.321, abs=1e-3)
    assert C == pytest.approx(1 / math.pi, rel=0.01)
    assert cooperativity(2 * TWO_PI * 8.4e6, TWO_PI * 55e6, GAMMA) == pytest.approx(4 * C)
    env = ShapeKind("rectangular", GAMMA)
    g = matched_coupling(TWO_PI * 55e6, env)
    assert cooperativity(g, TWO_PI * 55e6, GAMMA) / c_opt(env) == pytest.approx(1.0, rel=1e-12)
    assert g / TWO_PI == pytest.approx(8.37e6, rel=1e-3)


def test_eta_F_values():
    assert eta_F(ShapeKind("dirac"), TWO_PI * 61e3) == 1.0
    gamma, delta = TWO_PI * 1e3, TWO_PI * 61e3
    val = eta_F(ShapeKind("gaussian", gamma), delta)
    assert val == pytest.approx(math.exp(-(gamma * TWO_PI / delta) ** 2), rel=1e-12)
    assert val == pytest.approx(0.9894, abs=1e-4)
    spec = CombSpec(ShapeKind("rectangular", GAMMA), ShapeKind("gaussian", gamma), 67, delta=delta)
    F = comb_finesse(spec)
    assert val == pytest.approx(math.exp(-7 / F**2), rel=2e-3)
    # rectangular teeth: squared sinc of half the tooth width over the period
    x = TWO_PI * 5e3 / delta
    assert eta_F(ShapeKind("rectangular", TWO_PI * 5e3), delta) == pytest.approx(
        (math.sin(math.pi * x) / (math.pi * x)) ** 2, rel=1e-12)


def test_eta_F_monotone_in_width():
    widths = TWO_PI * np.array([0.5e3, 1e3, 2e3, 5e3])
    for kind in ("rectangular", "gaussian", "lorentzian"):
        vals = [eta_F(ShapeKind(kind, w), TWO_PI * 61e3) for w in widths]
        assert np.all(np.diff(vals) < 0)


def test_comb_finesse():
    g = TWO_PI * 1e3
    assert ShapeKind("gaussian", g).fwhm() == pytest.approx(2 * math.sqrt(2 * math.log(2)) * g)
    assert ShapeKind("rectangular", g).fwhm() == g
    spec = CombSpec(ShapeKind("rectangular", GAMMA), ShapeKind("gaussian", g), 67, delta=TWO_PI * 61e3)
    assert comb_finesse(spec) == pytest.approx(61 / (2 * math.sqrt(2 * math.log(2))), rel=1e-12)
    assert comb_finesse(spec) == pytest.approx(25.9, abs=0.05)
    with pytest.raises(ConfigError):
        comb_finesse(CombSpec(ShapeKind("rectangular", GAMMA), ShapeKind("dirac"), 67))


def test_response_matches_comb_fourier_at_rephasing(dirac_spec):
    comb = build_comb(dirac_spec)
    r = comb.response([0.0, dirac_spec.rephasing_time, 0.5 * dirac_spec.rephasing_time])
    assert abs(r[0]) == pytest.approx(1.0)
    assert abs(r[1]) == pytest.approx(1.0, abs=1e-9)
    assert abs(r[2]) < 0.05

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from afcshaper._validation import ConfigError
from afcshaper.network import (PSI_PLUS, Efficiencies, OverlapPair, fidelity_mixed, fidelity_pure,
                               format_report, four_click_probability, heralded_state,
                               save_report, scenario_report)


def test_four_click_probability():
    assert four_click_probability(Efficiencies(1.0, 1.0, 1.0)) == 0.125
    eff = Efficiencies(0.9, 0.1, 0.5)
    assert four_click_probability(eff) == pytest.approx(0.9**4 * 0.01 * 0.25 / 8, rel=1e-15)
    assert four_click_probability(eff) == pytest.approx(2.05e-4, rel=1e-3)


def test_memory_efficiency_from_parts():
    eff = Efficiencies(0.9, 0.1, eta_afc_shaping=0.8, eta_qfc=0.5)
    assert eff.eta_mem == pytest.approx(0.4)
    assert eff.with_memory_factor(0.5).eta_mem == pytest.approx(0.2)
    with pytest.raises(ConfigError):
        Efficiencies(0.9, 0.1)
    with pytest.raises(ConfigError):
        Efficiencies(1.2, 0.1, 0.5)


@given(st.floats(0, 1), st.floats(0, 1))
def test_heralded_state_is_a_density_matrix(xa, xb):
    rho = heralded_state(OverlapPair(xa, xb))
    assert np.allclose(rho, rho.conj().T, atol=1e-15)
    assert abs(np.trace(rho) - 1) < 1e-12
    assert np.linalg.eigvalsh(rho).min() > -1e-12
    f = np.real(PSI_PLUS.conj() @ rho @ PSI_PLUS)
    assert f == pytest.approx(fidelity_pure(OverlapPair(xa, xb)), abs=1e-12)


def test_fidelity_limits():
    assert fidelity_pure(OverlapPair(0.0, 0.7)) == 0.5
    assert fidelity_pure(OverlapPair(1.0, 1.0)) == 1.0
    assert fidelity_mixed(0.6, 0.6) == pytest.approx(0.68, abs=1e-15)
    assert fidelity_mixed(1.0, 1.0, infidelity=0.1) == pytest.approx(0.9)
    with pytest.raises(ConfigError):
        OverlapPair(1.1, 0.5)


def test_report(tmp_path):
    rows = {"baseline": {"visibility": 0.3}, "shaped": {"visibility": 0.6, "memory_factor": 0.5}}
    rep = scenario_report(Efficiencies(1.0, 1.0, 1.0), rows)
    assert rep["baseline"]["P_4cl"] == 0.125
    assert rep["shaped"]["P_4cl"] == pytest.approx(0.125 / 4)
    assert rep["shaped"]["F"] == pytest.approx(0.68)
    text = format_report(rep)
    assert "shaped" in text and "0.680" in text
    save_report(rep, tmp_path / "r.json")
    assert (tmp_path / "r.json").read_text().startswith("{")

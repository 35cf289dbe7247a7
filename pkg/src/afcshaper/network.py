"""Four-click heralding of two remote ions: success probability, state and fidelity."""

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._validation import ConfigError, check_fraction

# basis order |HH⟩, |HV⟩, |VH⟩, |VV⟩
PSI_PLUS = np.array([0, 1, 1, 0], dtype=complex) / np.sqrt(2)
PSI_MINUS = np.array([0, 1, -1, 0], dtype=complex) / np.sqrt(2)


@dataclass(frozen=True)
class Efficiencies:
    """Detector, ion-photon and memory efficiencies (all in ``[0, 1]``).

    ``eta_mem`` may be given directly or as ``eta_afc_shaping * eta_qfc``.
    """

    eta_det: float
    eta_ion: float
    eta_mem: Optional[float] = None
    eta_afc_shaping: Optional[float] = None
    eta_qfc: Optional[float] = None

    def __post_init__(self):
        check_fraction("eta_det", self.eta_det)
        check_fraction("eta_ion", self.eta_ion)
        if self.eta_mem is None:
            if self.eta_afc_shaping is None or self.eta_qfc is None:
                raise ConfigError("give eta_mem or both eta_afc_shaping and eta_qfc")
            check_fraction("eta_afc_shaping", self.eta_afc_shaping)
            check_fraction("eta_qfc", self.eta_qfc)
            object.__setattr__(self, "eta_mem", self.eta_afc_shaping * self.eta_qfc)
        check_fraction("eta_mem", self.eta_mem)

    def with_memory_factor(self, factor):
        """Copy whose memory efficiency is multiplied by ``factor`` (e.g. filter transmission)."""
        return Efficiencies(self.eta_det, self.eta_ion, self.eta_mem * factor)


@dataclass(frozen=True)
class OverlapPair:
    """Squared-modulus waveform overlaps on the two sides of the link."""

    x_A: float
    x_B: float

    def __post_init__(self):
        check_fraction("x_A", self.x_A)
        check_fraction("x_B", self.x_B)


def four_click_probability(eff):
    """Heralding probability ``η_det⁴ η_ion² η_mem² / 8``."""
    return eff.eta_det**4 * eff.eta_ion**2 * eff.eta_mem**2 / 8.0


def heralded_state(x):
    """Two-ion density matrix after a four-click herald.

    Returns ``½(1+x_A x_B)|Ψ⁺⟩⟨Ψ⁺| + ½(1-x_A x_B)|Ψ⁻⟩⟨Ψ⁻|`` in the basis
    ``HH, HV, VH, VV``.
    """
    prod = x.x_A * x.x_B
    return 0.5 * (1 + prod) * np.outer(PSI_PLUS, PSI_PLUS.conj()) + 0.5 * (1 - prod) * np.outer(
        PSI_MINUS, PSI_MINUS.conj()
    )


def fidelity_pure(x):
    """``(1 + x_A x_B)/2``."""
    return 0.5 * (1 + x.x_A * x.x_B)


def fidelity_mixed(mix_A, mix_B, infidelity=0.0):
    """Fidelity from emission-conditioned mean overlaps on each side.

    Args:
        mix_A: ``(1/(1-p0))∫P(s) x(s) ds`` for side A.
        mix_B: Same for side B.
        infidelity: Optional extra infidelity of the entanglement sources;
            ``F`` is multiplied by ``1 - infidelity`` (an upper bound).
    """
    check_fraction("mix_A", mix_A)
    check_fraction("mix_B", mix_B)
    check_fraction("infidelity", infidelity)
    return 0.5 * (1 + mix_A * mix_B) * (1 - infidelity)


def scenario_report(eff, rows, infidelity=0.0):
    """Probability/fidelity table for several memory-output treatments.

    Args:
        eff: Baseline efficiencies (``eta_mem`` excludes any filter loss).
        rows: Mapping ``name -> {"visibility": V, "memory_factor": f}``. ``V``
            is the visibility on each side (``F = (1 + V²)/2``); ``f``
            multiplies ``eta_mem`` (filter transmission, relative shaping efficiency).
        infidelity: Passed to :func:`fidelity_mixed`.

    Returns:
        Dict ``name -> {"P_4cl", "F", "eta_mem", "visibility"}``.
    """
    out = {}
    for name, row in rows.items():
        v = float(row["visibility"])
        e = eff.with_memory_factor(float(row.get("memory_factor", 1.0)))
        out[name] = {
            "visibility": v,
            "eta_mem": e.eta_mem,
            "P_4cl": four_click_probability(e),
            "F": fidelity_mixed(v, v, infidelity),
        }
    return out


def format_report(report):
    """Aligned text table of a :func:`scenario_report` result."""
    lines = [f"{'case':<18}{'V':>8}{'eta_mem':>10}{'P_4cl':>12}{'F':>8}"]
    for name, r in report.items():
        lines.append(
            f"{name:<18}{r['visibility']:>8.3f}{r['eta_mem']:>10.3f}{r['P_4cl']:>12.3e}{r['F']:>8.3f}"
        )
    return "\n".join(lines)


def save_report(report, path):
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)

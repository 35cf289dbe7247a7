"""Compiled fixed-step 8th-order Runge-Kutta kernel for the cavity/comb equations."""

import numba as nb
import numpy as np

from ._tableau import A as _A
from ._tableau import B as _B
from ._tableau import C as _C
from ._tableau import N_STAGES

A = np.ascontiguousarray(_A)
B = np.ascontiguousarray(_B)
C = np.ascontiguousarray(_C)


def stability_factor(z):
    """Amplification ``R(z) = 1 + z bᵀ(I - zA)⁻¹1`` of one step on ``y' = λy``, ``z = hλ``."""
    m = np.eye(N_STAGES) - z * A
    return 1.0 + z * (B @ np.linalg.solve(m, np.ones(N_STAGES)))


# fast-math without nnan/ninf so the finiteness check survives
@nb.njit(cache=True, fastmath={"nsz", "arcp", "contract", "afn", "reassoc"})
def integrate(E, P, S, omega, sqn, kappa, gsn, gamma_p, gamma_s, spin_decay, h, hA, hB,
              forcing, rabi, out_E, out_P, out_S, hist_every, hist_P, hist_S):
    """Advance the state ``len(rabi)`` steps in place.

    ``forcing[n, i]`` is the drive ``√(2κ) E_in`` at stage ``i`` of step ``n``
    (missing rows count as zero), ``rabi[n]`` the complex Rabi frequency held
    over step ``n``. On steps without a control field the spin equations are
    decoupled and are advanced by the exact RK amplification ``spin_decay``.
    Returns the index of the first step with a non-finite field, or -1.
    """
    n_cls = P.shape[0]
    n_stage = hA.shape[0]
    n_steps = rabi.shape[0]
    n_force = forcing.shape[0]
    kE = np.zeros(n_stage, np.complex128)
    kP = np.zeros((n_cls, n_stage), np.complex128)
    kS = np.zeros((n_cls, n_stage), np.complex128)
    dec = gamma_p + 1j * omega
    coup = 1j * gsn * sqn
    n_hist = 0
    for n in range(n_steps):
        om = rabi[n]
        driven = om != 0
        half_om = 0.5j * om
        half_omc = 0.5j * np.conj(om)
        for i in range(n_stage):
            e = E
            for j in range(i):
                e += hA[i, j] * kE[j]
            acc = 0j
            if driven:
                for k in range(n_cls):
                    p = P[k]
                    s = S[k]
                    for j in range(i):
                        a = hA[i, j]
                        p += a * kP[k, j]
                        s += a * kS[k, j]
                    acc += sqn[k] * p
                    kP[k, i] = -dec[k] * p + coup[k] * e + half_om * s
                    kS[k, i] = -gamma_s * s + half_omc * p
            else:
                for k in range(n_cls):
                    p = P[k]
                    for j in range(i):
                        p += hA[i, j] * kP[k, j]
                    acc += sqn[k] * p
                    kP[k, i] = -dec[k] * p + coup[k] * e
            f = forcing[n, i] if n < n_force else 0j
            kE[i] = -kappa * e + 1j * gsn * acc + f
        for j in range(n_stage):
            E += hB[j] * kE[j]
        sum_p = 0.0
        sum_s = 0.0
        for k in range(n_cls):
            p = P[k]
            for j in range(n_stage):
                p += hB[j] * kP[k, j]
            P[k] = p
            sum_p += p.real * p.real + p.imag * p.imag
            if driven:
                s = S[k]
                for j in range(n_stage):
                    s += hB[j] * kS[k, j]
            else:
                s = S[k] * spin_decay
            S[k] = s
            sum_s += s.real * s.real + s.imag * s.imag
        out_E[n] = E
        out_P[n] = sum_p
        out_S[n] = sum_s
        if hist_every > 0 and (n + 1) % hist_every == 0 and n_hist < hist_P.shape[0]:
            hist_P[n_hist, :] = P
            hist_S[n_hist, :] = S
            n_hist += 1
        if not (np.isfinite(E.real) and np.isfinite(E.imag)):
            return n
    return -1

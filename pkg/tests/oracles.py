"""Independent reference computations shared by the unit and acceptance suites."""

import numpy as np

from ripgate.closed_form import respond, shift_differences, static_phase

PAIRS = [(a, b) for a in range(4) for b in range(a + 1, 4)]

# rising-spline integer coefficients c_0.. and max-derivative numerators,
# transcribed by hand from the reference table
TABLE_I = {
    1: ((1,), 1),
    3: ((3, 2), 6),
    5: ((10, 15, 6), 60),
    7: ((35, 84, 70, 20), 840),
    9: ((126, 420, 540, 315, 70), 15120),
    11: ((462, 1980, 3465, 3080, 1386, 252), 332640),
}


XX = np.fliplr(np.eye(4))
PAULI = [np.eye(2), np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), np.diag([1, -1])]
U_TARGET = np.diag(np.exp(-1j * np.pi / 4 * np.array([1, -1, -1, 1])))


def brute_force_fidelity(mu):
    """Average fidelity of F.E.F.E against exp(-i pi/4 ZZ) by explicit channel action.

    Uses F_avg = (sum_P tr(U P U^dag G(P)) + d^2) / (d^2 (d + 1)) over the
    sixteen two-qubit Paulis, with the echo applied step by step.
    """
    E = lambda rho: np.exp(1j * mu) * rho
    F = lambda rho: XX @ rho @ XX
    G = lambda rho: F(E(F(E(rho))))
    d = 4
    total = 0.0
    for a in PAULI:
        for b in PAULI:
            P = np.kron(a, b)
            total += np.trace(U_TARGET @ P.conj().T @ U_TARGET.conj().T @ G(P))
    return float(((total + d**2) / (d**2 * (d + 1))).real)


def trapezoid_phase(params, train, refine=64):
    """Phases from trapezoid quadrature of conj(alpha_l) alpha_j on a grid dt/refine."""
    t = np.linspace(0, train.duration, train.n_steps * refine + 1)
    alpha = respond(params, train, t)
    diff = shift_differences(params)
    mu = static_phase(params, train.duration).astype(complex)
    for j, l in PAIRS:
        f = np.conj(alpha[:, l]) * alpha[:, j]
        mu[j, l] += diff[j, l] * np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(t))
        mu[l, j] = -np.conj(mu[j, l])
    return mu


def refined_phase(params, train):
    """Richardson-extrapolated trapezoid phases (dt/64 and dt/128 grids).

    The bare dt/64 rule carries an h^2 error of order (omega h)^2 / 12 ~ 1e-6;
    one extrapolation step removes it.
    """
    return (4 * trapezoid_phase(params, train, 128) - trapezoid_phase(params, train, 64)) / 3

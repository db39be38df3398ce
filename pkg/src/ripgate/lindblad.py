"""Direct master-equation integration on a truncated Fock space.

Two Hamiltonians are available, both in the frame rotating at the drive
frequency and in rad/ns:

``dispersive``
    ``sum_jk -(Delta + chibar_jk) n |jk><jk| + zeta_0 Z1 Z2 / 4 + (eps^* c + eps c^+) / 2``,
    the model behind the closed-form engine.
``full``
    Duffing transmons coupled to the bus by ``g (c^+ b + c b^+)``; qubit
    labels refer to the undriven eigenstates matched to bare states by
    maximal overlap.

Loss is ``kappa D[c]``.  Qubits start in ``|++>`` and the bus in vacuum
unless another initial state is given.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.optimize import linear_sum_assignment

from .closed_form import PhaseSeries, write_series_csv
from .envelopes import Envelope, PiecewisePolynomialEnvelope, StepTrainEnvelope
from .errors import CutoffExceeded, GridMismatch, ParameterError, StepUnderflow
from .params import MHZ, DeviceParams, derive_params

MODELS = ("dispersive", "full")


@dataclass(frozen=True)
class TruncatedSystem:
    """Model choice and truncation.

    ``qubit_levels`` defaults to 2 for the dispersive model and 3 for the
    full model.  ``cutoff_tol`` bounds the population of the top Fock level.
    """

    model: str = "dispersive"
    fock: int = 15
    qubit_levels: Optional[int] = None
    cutoff_tol: float = 1e-6

    def __post_init__(self):
        if self.model not in MODELS:
            raise ParameterError(f"model must be one of {MODELS}")
        if self.fock < 2:
            raise ParameterError("need at least two Fock levels")
        if self.levels < 2 or (self.model == "dispersive" and self.levels != 2):
            raise ParameterError("dispersive model uses two levels per qubit; full model needs >= 2")

    @property
    def levels(self) -> int:
        if self.qubit_levels is not None:
            return self.qubit_levels
        return 2 if self.model == "dispersive" else 3

    @property
    def dim(self) -> int:
        return self.levels**2 * self.fock


def _ladder(n: int) -> sp.csr_matrix:
    return sp.diags(np.sqrt(np.arange(1, n)), 1, format="csr", dtype=complex)


@dataclass
class _Operators:
    H0: sp.csr_matrix
    c: sp.csr_matrix
    # dressed basis: columns ordered like the bare product basis
    V: Optional[np.ndarray]
    energies: np.ndarray
    labels: np.ndarray  # (dim, 3): q1, q2, n


def _build(system: TruncatedSystem, dev: DeviceParams, Delta: float) -> tuple:
    params = derive_params(dev, Delta)
    L, N = system.levels, system.fock
    eye_q, eye_r = sp.identity(L, format="csr"), sp.identity(N, format="csr")
    a = _ladder(N)
    c = sp.kron(sp.identity(L * L), a, format="csr")
    n_op = sp.kron(sp.identity(L * L), a.T @ a, format="csr")
    labels = np.array([(i, j, k) for i in range(L) for j in range(L) for k in range(N)])
    if system.model == "dispersive":
        shift = params.chibar_rad + params.Delta_rad
        proj = sp.diags(-shift)
        zz = params.zeta0_rad / 4 * np.array([1, -1, -1, 1])
        H0 = sp.kron(proj, a.T @ a) + sp.kron(sp.diags(zz), eye_r)
        return params, _Operators(H0.tocsr().astype(complex), c, None, H0.diagonal().real, labels)
    w_d = params.omega_d * MHZ
    b = _ladder(L)
    b1 = sp.kron(sp.kron(b, eye_q), eye_r, format="csr")
    b2 = sp.kron(sp.kron(eye_q, b), eye_r, format="csr")
    H0 = (dev.omega_r * MHZ - w_d) * n_op
    for bi, w, d, g in ((b1, dev.omega_1, dev.delta_1, dev.g_1), (b2, dev.omega_2, dev.delta_2, dev.g_2)):
        nb = bi.T @ bi
        H0 = H0 + (w * MHZ - w_d) * nb + 0.5 * d * MHZ * (nb @ nb - nb)
        H0 = H0 + g * MHZ * (c.T @ bi + bi.T @ c)
    H0 = H0.tocsr().astype(complex)
    energies, vecs = np.linalg.eigh(H0.toarray())
    # match each eigenvector to the bare state it overlaps most
    rows, cols = linear_sum_assignment(-np.abs(vecs) ** 2)
    order = np.empty_like(cols)
    order[rows] = cols
    V = vecs[:, order]
    V = V * np.exp(-1j * np.angle(np.diag(V)))[None, :]
    return params, _Operators(H0, c, V, energies[order], labels)


@dataclass
class ObservableSeries:
    """Observables on a time grid.

    ``rho_qubits`` is the reduced qubit density matrix in the dressed
    computational basis with local frame phases removed, so that
    ``rho_qubits = exp(i mu) rho(0)`` in the closed-form convention.
    """

    t: np.ndarray
    nbar: np.ndarray
    theta: np.ndarray
    rho0011_abs: np.ndarray
    alpha: np.ndarray
    rho_qubits: np.ndarray
    trace: np.ndarray
    min_eigenvalue: np.ndarray
    hermiticity: np.ndarray
    purity: np.ndarray
    top_population: float
    config: dict = field(default_factory=dict)

    def mu(self, rho0: Optional[np.ndarray] = None) -> np.ndarray:
        """Effective phase table ``-i log(rho / rho0)`` with the argument unwrapped in time."""
        rho0 = self.rho_qubits[0] if rho0 is None else rho0
        ratio = self.rho_qubits / np.where(np.abs(rho0) > 0, rho0, 1)[None]
        phase = np.unwrap(np.angle(ratio), axis=0)
        return phase - 1j * np.log(np.maximum(np.abs(ratio), 1e-300))

    def to_csv(self, path, header: Optional[dict] = None):
        write_series_csv(path, self.t, self.alpha, self.mu(), self.nbar, header=header or self.config)


def _default_initial(system: TruncatedSystem, ops: _Operators) -> np.ndarray:
    L, N = system.levels, system.fock
    psi = np.zeros(system.dim, dtype=complex)
    for q1 in range(2):
        for q2 in range(2):
            psi[(q1 * L + q2) * N] = 0.5
    if ops.V is not None:
        psi = ops.V @ psi
    return np.outer(psi, psi.conj())


def _segments(env: Envelope, t_end: float):
    """Breakpoints where the envelope may be discontinuous."""
    if isinstance(env, StepTrainEnvelope):
        knots = env.dt * np.arange(env.n_steps + 1)
    elif isinstance(env, PiecewisePolynomialEnvelope):
        knots = np.array([a for a, _, _ in env.pieces] + [env.duration])
    else:
        knots = np.array([0.0, env.duration])
    knots = knots[(knots > 0) & (knots < t_end)]
    return np.concatenate([[0.0], knots, [t_end]])


def _drive(env: Envelope, t: float) -> complex:
    if t > env.duration:
        return 0j
    return complex(env(min(max(t, 0.0), env.duration))) * MHZ


def integrate(system: TruncatedSystem, dev: DeviceParams, env: Envelope, Delta: float, t_end: float,
              grid=None, rho0: Optional[np.ndarray] = None, rtol: float = 1e-9, atol: float = 1e-12,
              check_cutoff: bool = True) -> ObservableSeries:
    """Integrate ``drho/dt = -i[H, rho] + kappa D[c] rho`` and sample observables.

    Parameters
    ----------
    system : TruncatedSystem
    dev : DeviceParams
    env : Envelope
        Drive envelope in cyclic MHz; zero after its duration.
    Delta : float
        Detuning in cyclic MHz.
    t_end : float
        Final time in ns.
    grid : array_like, optional
        Output times, default 401 points on ``[0, t_end]``.
    rho0 : ndarray, optional
        Initial density matrix in the bare product basis.

    Raises
    ------
    CutoffExceeded
        The top Fock level holds more than ``system.cutoff_tol``.
    StepUnderflow
        The integrator could not advance.
    """
    params, ops = _build(system, dev, Delta)
    grid = np.linspace(0.0, t_end, 401) if grid is None else np.asarray(grid, dtype=float)
    if grid[0] < 0 or grid[-1] > t_end + 1e-9 or np.any(np.diff(grid) <= 0):
        raise ParameterError("grid must be increasing inside [0, t_end]")
    kappa = params.kappa_rad
    c = ops.c
    cd = c.T.conj().tocsr()
    Heff = (ops.H0 - 0.5j * kappa * (cd @ c)).tocsr()
    dim = system.dim

    def rhs(t, y):
        rho = y.reshape(dim, dim)
        # the Hermitian part alone drives the update, which keeps the trace
        # and Hermiticity exact up to roundoff over long runs
        rho = 0.5 * (rho + rho.conj().T)
        eps = _drive(env, t)
        H = Heff + 0.5 * (np.conj(eps) * c + eps * cd) if eps else Heff
        Y = H @ rho
        Z = c @ rho
        out = -1j * (Y - Y.conj().T) + kappa * (c @ Z.conj().T).conj().T
        return out.ravel()

    rho = _default_initial(system, ops) if rho0 is None else np.asarray(rho0, dtype=complex)
    states = np.empty((grid.size, dim, dim), dtype=complex)
    cuts = np.union1d(_segments(env, t_end), grid[grid > 0])
    y = rho.ravel()
    t_now = 0.0
    k = 0
    if grid[0] == 0:
        states[0] = rho
        k = 1
    for hi in cuts[cuts > 0]:
        sol = solve_ivp(rhs, (t_now, hi), y, method="DOP853", rtol=rtol, atol=atol)
        if sol.status != 0:
            raise StepUnderflow(f"integrator stopped at t={sol.t[-1]:.3f} ns: {sol.message}")
        y = sol.y[:, -1]
        t_now = hi
        if k < grid.size and np.isclose(hi, grid[k], rtol=0, atol=1e-9):
            states[k] = y.reshape(dim, dim)
            k += 1
    return _observables(system, params, ops, grid, states, check_cutoff, {
        "model": system.model, "fock": system.fock, "levels": system.levels,
        "delta_mhz": float(Delta), "t_end_ns": float(t_end), "rtol": rtol, "atol": atol,
        "params": dev.to_dict(), "envelope": env.to_dict(),
    })


def _observables(system, params, ops, grid, states, check_cutoff, config) -> ObservableSeries:
    L, N = system.levels, system.fock
    if ops.V is not None:
        states = ops.V.conj().T @ states @ ops.V
    diag = np.real(np.einsum("tii->ti", states))
    n_label = ops.labels[:, 2]
    nbar = diag @ n_label
    top = float(np.max(diag[:, n_label == N - 1].sum(axis=1)))
    if check_cutoff and top > system.cutoff_tol:
        raise CutoffExceeded(f"top Fock level population {top:.3g} exceeds {system.cutoff_tol:.1g}")
    blocks = states.reshape(grid.size, L, L, N, L, L, N)
    qubits = np.einsum("tabncdn->tabcd", blocks)[:, :2, :2, :2, :2].reshape(grid.size, 4, 4)
    lowering = np.sqrt(np.arange(1, N))
    alpha = np.empty((grid.size, 4), dtype=complex)
    for idx, (j, k) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
        blk = blocks[:, j, k, :, j, k, :]
        pop = np.real(np.einsum("tnn->t", blk))
        # <c> = tr(c rho) = sum_n sqrt(n) rho[n, n-1]
        amp = np.einsum("n,tn->t", lowering, blk[:, np.arange(1, N), np.arange(N - 1)])
        alpha[:, idx] = np.where(pop > 0, amp / np.where(pop > 0, pop, 1), 0)
    # remove single-qubit frame phases, keep the ZZ part
    E = ops.energies.reshape(L, L, N)[:2, :2, 0].reshape(4)
    zeta = E[0] + E[3] - E[1] - E[2]
    local = E - zeta / 4 * np.array([1, -1, -1, 1])
    qubits = qubits * np.exp(1j * (local[None, :, None] - local[None, None, :]) * grid[:, None, None])
    prod = qubits[:, 0, 1] * qubits[:, 0, 2] * np.conj(qubits[:, 0, 3])
    theta = np.unwrap(np.angle(prod))
    eigmin = np.array([np.linalg.eigvalsh(0.5 * (s + s.conj().T))[0] for s in states])
    herm = np.max(np.abs(states - np.conj(np.transpose(states, (0, 2, 1)))), axis=(1, 2))
    purity = np.real(np.einsum("tij,tji->t", states, states))
    return ObservableSeries(grid, nbar, theta, np.abs(qubits[:, 0, 3]), alpha, qubits,
                            np.real(np.einsum("tii->t", states)), eigmin, herm, purity, top, config)


@dataclass(frozen=True)
class Discrepancy:
    max_abs: float
    rms: float
    tolerance: Optional[float]

    @property
    def passed(self) -> Optional[bool]:
        return None if self.tolerance is None else self.max_abs <= self.tolerance


@dataclass
class DiscrepancyReport:
    """Per-observable max and RMS deviations."""

    entries: dict

    @property
    def passed(self) -> bool:
        return all(e.passed is not False for e in self.entries.values())

    def to_dict(self) -> dict:
        return {k: {"max_abs": e.max_abs, "rms": e.rms, "tolerance": e.tolerance, "passed": e.passed}
                for k, e in self.entries.items()}

    def to_json(self, path, header: Optional[dict] = None):
        data = {"observables": self.to_dict(), "passed": self.passed}
        if header:
            data["config"] = header
        with open(path, "w") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)


def curves(series) -> dict:
    """``nbar``, ``theta`` and ``rho0011_abs`` from either series type.

    Closed-form series assume qubits prepared in ``|++>``.
    """
    if isinstance(series, ObservableSeries):
        return {"nbar": series.nbar, "theta": series.theta, "rho0011_abs": series.rho0011_abs}
    if isinstance(series, PhaseSeries):
        return {"nbar": series.nbar(), "theta": series.theta,
                "rho0011_abs": np.exp(-series.mu[:, 0, 3].imag) / 4}
    if isinstance(series, dict):
        return {k: np.asarray(v) for k, v in series.items()}
    raise TypeError(f"cannot read curves from {type(series).__name__}")


def compare(series, analytic, tolerances: Optional[dict] = None, relative_to_peak=("nbar",)) -> DiscrepancyReport:
    """Deviation of ``series`` from ``analytic`` per observable.

    Observables named in ``relative_to_peak`` are compared as a fraction of
    the analytic peak magnitude.
    """
    t_a = np.asarray(getattr(analytic, "t", getattr(series, "t", None)))
    t_s = np.asarray(series.t)
    if t_a.shape != t_s.shape or not np.allclose(t_a, t_s, rtol=0, atol=1e-9):
        raise GridMismatch("time grids differ")
    tolerances = tolerances or {}
    a, b = curves(series), curves(analytic)
    entries = {}
    for name in a:
        if name not in b:
            continue
        dev = np.abs(np.asarray(a[name]) - np.asarray(b[name]))
        if name in relative_to_peak:
            peak = np.max(np.abs(b[name]))
            dev = dev / peak if peak > 0 else dev
        entries[name] = Discrepancy(float(np.max(dev)), float(np.sqrt(np.mean(dev**2))), tolerances.get(name))
    return DiscrepancyReport(entries)


def read_series_csv(path) -> dict:
    """Read a series CSV (either source) into arrays keyed by column."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.DictReader(lines))
    return {k: np.array([float(r[k]) for r in rows]) for k in rows[0]}

"""Step-train pulses that return every bus branch to vacuum.

The bus amplitude after ``M`` steps is linear in the samples,
``alpha_jk(M dt) = -i (A eps)_jk / 2``, so any train in the kernel of the 4 x M
matrix ``A`` resets the bus exactly.  Phases are quadratic in the samples,
``mu_jk,lm = eps^H G_jk,lm eps + static``, which gives the cost and its
gradient in closed form.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .closed_form import PAIRS, PhaseTable, _ROWS, _COLS, _rates, h_delta, shift_differences, static_phase
from .envelopes import StepTrainEnvelope, spectrum
from .errors import EmptyNullspace, NoProgress, ParameterError
from .metrics import GateReport, average_gate_fidelity
from .params import MHZ, DerivedParams

log = logging.getLogger(__name__)

EPS_REF_MHZ = 284.0


@dataclass(frozen=True)
class QuadratureConstants:
    """Per-step integrals for one step of length ``dt``.

    ``U_pair[i] = h_{-(D_j + D_l^*)}(dt)`` for each pair in :data:`PAIRS`,
    ``U[b] = h_{-D_b}(dt)`` per branch.
    """

    dt: float
    U_pair: np.ndarray
    U: np.ndarray

    @classmethod
    def build(cls, params: DerivedParams, dt: float) -> "QuadratureConstants":
        c = _rates(params)
        return cls(dt, h_delta(-(c[_ROWS] + np.conj(c[_COLS])), dt), h_delta(-c, dt))


@dataclass(frozen=True)
class ResetConstraint:
    """Reset matrix ``A`` (4 x M) and an orthonormal basis of its kernel."""

    A: np.ndarray
    nullspace_basis: np.ndarray
    dt: float
    M: int
    singular_values: np.ndarray

    @property
    def dimension(self) -> int:
        return self.nullspace_basis.shape[1]

    def train(self, coeffs, dt: Optional[float] = None) -> StepTrainEnvelope:
        """Step train (cyclic MHz) for nullspace coefficients given in rad/ns."""
        eps = self.nullspace_basis @ np.asarray(coeffs, dtype=complex)
        return StepTrainEnvelope(self.dt if dt is None else dt, eps / MHZ)

    def residual(self, samples_rad) -> np.ndarray:
        """Final bus amplitudes ``A eps`` for a train in rad/ns."""
        return self.A @ np.asarray(samples_rad, dtype=complex)


def build_constraint(params: DerivedParams, dt: float, M: int) -> ResetConstraint:
    """Reset matrix and its kernel by SVD with relative threshold 1e-10.

    Row ``jk`` has entries ``h_{D}(dt) exp(-D M dt) exp(D q dt)`` for
    ``q = 0..M-1`` with ``D = D_jk``.
    """
    if not dt > 0:
        raise ParameterError("step length must be positive")
    if M < 5:
        raise ParameterError("at least 5 steps are needed for a nontrivial reset kernel")
    c = _rates(params)[:, None]
    q = np.arange(M)[None, :]
    A = h_delta(c, dt) * np.exp(-c * (M - q) * dt)
    _, s, vh = np.linalg.svd(A)
    rank = int(np.sum(s > 1e-10 * s[0])) if s[0] > 0 else 0
    if rank == M:
        raise EmptyNullspace(f"reset matrix has full rank {M}")
    basis = vh[rank:].conj().T
    return ResetConstraint(A, basis, float(dt), int(M), s)


def amplitude_matrices(params: DerivedParams, dt: float, M: int) -> np.ndarray:
    """``K[b]`` with ``alpha_b(p dt) = (K[b] eps)_p`` for ``p = 0..M-1``; shape (4, M, M).

    The true response to a step is ``-(i/2) h_{-D}(dt)`` times a decay per
    later step; ``K`` is strictly lower triangular.
    """
    c = _rates(params)
    kick = -0.5j * h_delta(-c, dt)
    lag = np.arange(M)[:, None] - np.arange(M)[None, :] - 1
    K = np.where(lag[None] >= 0, kick[:, None, None] * np.exp(-c[:, None, None] * np.maximum(lag, 0) * dt), 0)
    return K


def phase_forms(params: DerivedParams, dt: float, M: int) -> np.ndarray:
    """Matrices ``G`` with ``int_0^{M dt} alpha_lm^* alpha_jk = eps^H G eps``; shape (6, M, M).

    Summing the four-term step quadrature over ``p`` and substituting
    ``alpha(p dt) = K eps`` gives
    ``G = U_pair K_l^H K_j + c2 K_l^H + c3 K_j + c4 I``.
    """
    c = _rates(params)
    qc = QuadratureConstants.build(params, dt)
    K = amplitude_matrices(params, dt, M)
    G = np.empty((len(PAIRS), M, M), dtype=complex)
    eye = np.eye(M)
    for i, (j, l) in enumerate(zip(_ROWS, _COLS)):
        cj, cl = c[j], np.conj(c[l])
        Up, Uj, Ul = qc.U_pair[i], qc.U[j], np.conj(qc.U[l])
        c2 = -0.5j / cj * (Ul - Up)
        c3 = 0.5j / cl * (Uj - Up)
        c4 = 0.25 / (cj * cl) * (dt - Uj - Ul + Up)
        Kl_h = K[l].conj().T
        G[i] = Up * Kl_h @ K[j] + c2 * Kl_h + c3 * K[j] + c4 * eye
    return G


def _table_from_upper(params, upper, alpha_end, t) -> PhaseTable:
    mu = static_phase(params, t).astype(complex)
    diff = shift_differences(params)
    for i, (j, l) in enumerate(zip(_ROWS, _COLS)):
        mu[j, l] += diff[j, l] * upper[i]
        mu[l, j] = -np.conj(mu[j, l])
    return PhaseTable(mu, alpha_end, t)


def discrete_phase(params: DerivedParams, train: StepTrainEnvelope, M: Optional[int] = None,
                   forms: Optional[np.ndarray] = None) -> PhaseTable:
    """Phase table after the first ``M`` steps of ``train`` by the quadratic forms.

    This is an independent route to :func:`closed_form.accumulate_phase`
    for step trains: the amplitude grid and the step quadrature are folded
    into dense matrices instead of a recurrence.
    """
    M = train.n_steps if M is None else int(M)
    if not 0 < M <= train.n_steps:
        raise ParameterError(f"M must lie in 1..{train.n_steps}")
    eps = train.samples[:M] * MHZ
    G = phase_forms(params, train.dt, M) if forms is None else forms
    upper = np.einsum("p,ipq,q->i", eps.conj(), G, eps)
    c = _rates(params)[:, None]
    q = np.arange(M)[None, :]
    reset = h_delta(c, train.dt) * np.exp(-c * (M - q) * train.dt)
    alpha_end = -0.5j * (reset @ eps)
    return _table_from_upper(params, upper, alpha_end, M * train.dt)


@dataclass(frozen=True)
class CostWeights:
    """Cost weights.

    ``beta_1`` multiplies the composite infidelity, ``beta_2`` the on-off
    penalty ``sum_k w_k |eps_k / eps_ref|^2 / M`` and ``beta_3`` the
    out-of-band power ``sum_{|f_k| > B} |F[eps / eps_ref]|^2 / M^2``.
    ``beta_peak`` multiplies ``sum_k max(0, |eps_k / eps_ref|^2 - 1)^2 / M``,
    which keeps samples near or below the reference amplitude; set it to
    zero for the bare three-term cost.
    ``gamma`` is in 1/ns, ``B`` and ``eps_ref`` in cyclic MHz.
    """

    beta_1: float = 1.0
    beta_2: float = 1.0
    beta_3: float = 1.0
    gamma: float = 1.0
    B: float = 300.0
    eps_ref: float = EPS_REF_MHZ
    beta_peak: float = 1.0

    def __post_init__(self):
        if min(self.beta_1, self.beta_2, self.beta_3, self.gamma, self.beta_peak) < 0:
            raise ParameterError("cost weights must be nonnegative")
        if not self.B > 0 or not self.eps_ref > 0:
            raise ParameterError("bandwidth and reference amplitude must be positive")

    def samples(self, dt: float, M: int) -> np.ndarray:
        """``w(t) = exp(-gamma t) + exp(gamma (t - t_g))`` at step midpoints."""
        t = (np.arange(M) + 0.5) * dt
        return np.exp(-self.gamma * t) + np.exp(self.gamma * (t - M * dt))

    def out_of_band(self, dt: float, M: int) -> np.ndarray:
        freqs = np.fft.fftfreq(M, d=dt * 1e-3)
        return np.abs(freqs) > self.B


# gradient of the closed-form fidelity with respect to (Re mu + i Im mu) per pair
def _fidelity_partials(mu: np.ndarray):
    out = np.zeros(len(PAIRS), dtype=complex)
    index = {p: i for i, p in enumerate(zip(_ROWS, _COLS))}
    for (a, b), (c, d) in (((0, 1), (2, 3)), ((0, 2), (1, 3))):
        z = mu[a, b] - np.conj(mu[c, d])
        dre = -np.exp(-z.imag) * np.cos(z.real) / 5
        dim = np.exp(-z.imag) * np.sin(z.real) / 5
        out[index[(a, b)]] = dre + 1j * dim
        out[index[(c, d)]] = -dre + 1j * dim
    for a, b in ((0, 3), (1, 2)):
        out[index[(a, b)]] = -0.2j * np.exp(-2 * mu[a, b].imag)
    return out


class CostModel:
    """Cost and gradient over nullspace coefficients for one device and step grid.

    Coefficients and samples are in rad/ns.
    """

    def __init__(self, params: DerivedParams, dt: float, M: int, weights: CostWeights = CostWeights(),
                 constraint: Optional[ResetConstraint] = None):
        self.params = params
        self.dt = float(dt)
        self.M = int(M)
        self.weights = weights
        self.constraint = build_constraint(params, dt, M) if constraint is None else constraint
        self.forms = phase_forms(params, dt, M)
        self.diff = shift_differences(params)[_ROWS, _COLS]
        self.static = static_phase(params, M * dt)
        self.w = weights.samples(dt, M)
        self.mask = weights.out_of_band(dt, M)
        self.ref = weights.eps_ref * MHZ

    @property
    def dimension(self) -> int:
        return self.constraint.dimension

    def samples(self, coeffs) -> np.ndarray:
        return self.constraint.nullspace_basis @ np.asarray(coeffs, dtype=complex)

    def table(self, coeffs) -> PhaseTable:
        eps = self.samples(coeffs)
        upper = np.einsum("p,ipq,q->i", eps.conj(), self.forms, eps)
        alpha_end = -0.5j * (self.constraint.A @ eps)
        return _table_from_upper(self.params, upper, alpha_end, self.M * self.dt)

    def evaluate(self, coeffs, gradient: bool = False):
        """Return ``(total, components)`` or ``(total, components, grad)``.

        ``grad`` is complex with ``Re`` and ``Im`` parts the partial
        derivatives along the real and imaginary parts of ``coeffs``.
        """
        if len(coeffs) != self.dimension:
            raise ParameterError(f"expected {self.dimension} coefficients, got {len(coeffs)}")
        wt = self.weights
        eps = self.samples(coeffs)
        G_eps = self.forms @ eps
        upper = eps.conj() @ G_eps.T
        mu = self.static.astype(complex)
        mu[_ROWS, _COLS] += self.diff * upper
        mu[_COLS, _ROWS] = -np.conj(mu[_ROWS, _COLS])
        x = mu[0, 1] - np.conj(mu[2, 3])
        y = mu[0, 2] - np.conj(mu[1, 3])
        fid = (0.4 + (np.exp(-2 * mu[0, 3].imag) + np.exp(-2 * mu[1, 2].imag)) / 10
               - np.exp(-y.imag) * np.sin(y.real) / 5 - np.exp(-x.imag) * np.sin(x.real) / 5)
        scaled = eps / self.ref
        onoff = float(np.sum(self.w * np.abs(scaled) ** 2) / self.M)
        spec = np.fft.fft(scaled)
        band = float(np.sum(np.abs(spec[self.mask]) ** 2) / self.M**2)
        excess = np.maximum(np.abs(scaled) ** 2 - 1, 0)
        peak = float(np.sum(excess**2) / self.M)
        comps = {"infidelity": float(1 - fid), "onoff": onoff, "bandwidth": band, "peak": peak}
        total = wt.beta_1 * comps["infidelity"] + wt.beta_2 * onoff + wt.beta_3 * band + wt.beta_peak * peak
        if not gradient:
            return total, comps
        g = self.diff * _fidelity_partials(mu)
        GH_eps = np.conj(self.forms.transpose(0, 2, 1)) @ eps
        grad_fid = (np.conj(g)[:, None] * G_eps + g[:, None] * GH_eps).sum(axis=0)
        grad_eps = -wt.beta_1 * grad_fid
        grad_eps += wt.beta_2 * 2 * self.w * eps / (self.M * self.ref**2)
        grad_eps += wt.beta_3 * 2 * np.fft.ifft(np.where(self.mask, spec, 0)) / (self.M * self.ref)
        grad_eps += wt.beta_peak * 4 * excess * scaled / (self.M * self.ref)
        grad = self.constraint.nullspace_basis.conj().T @ grad_eps
        return total, comps, grad


def cost(params: DerivedParams, coeffs, weights: CostWeights, dt: float, M: int):
    """Total cost and its three components for nullspace coefficients (rad/ns)."""
    return CostModel(params, dt, M, weights).evaluate(coeffs)


@dataclass
class OptimizationResult:
    train: StepTrainEnvelope
    report: GateReport
    coeffs: np.ndarray
    cost: float
    components: dict
    trace: list = field(default_factory=list)
    restart: int = 0

    def trace_csv(self, path, header: Optional[dict] = None):
        with open(path, "w", newline="") as fh:
            if header:
                fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
            writer = csv.writer(fh)
            writer.writerow(["restart", "iteration", "total", "infidelity", "onoff", "bandwidth",
                             "step", "reset_residual"])
            writer.writerows(self.trace)


def _initial_coeffs(model: CostModel, rng: np.random.Generator, peak_rad: float) -> np.ndarray:
    n = model.dimension
    z = rng.normal(size=n) + 1j * rng.normal(size=n)
    z *= rng.uniform() ** (1 / (2 * n)) / np.linalg.norm(z)
    return z * peak_rad / np.max(np.abs(model.samples(z)))


def descend(model: CostModel, z0: np.ndarray, max_iter: int = 3000, tol: float = 1e-12,
            restart: int = 0, history: int = 10):
    """Armijo backtracking descent (factor 0.5, c = 1e-4).

    The search direction is the negative gradient preconditioned by a
    limited-memory quasi-Newton update; whenever that direction fails to be
    a descent direction the plain negative gradient is used.
    """
    z = np.array(z0, dtype=complex)
    f, comps, g = model.evaluate(z, gradient=True)
    trace = []
    s_hist, y_hist = [], []
    step = 1.0
    for it in range(max_iter):
        gv = np.concatenate([g.real, g.imag])
        d = -_two_loop(gv, s_hist, y_hist)
        slope = d @ gv
        if not slope < 0:
            d, slope = -gv, -(gv @ gv)
            s_hist.clear()
            y_hist.clear()
        if -slope < tol**2:
            break
        dz = d[: z.size] + 1j * d[z.size:]
        step = 1.0
        while True:
            z_new = z + step * dz
            f_new, comps_new = model.evaluate(z_new)
            if f_new <= f + 1e-4 * step * slope:
                break
            step *= 0.5
            if step < 1e-20:
                return z, f, comps, trace
        f_new, comps_new, g_new = model.evaluate(z_new, gradient=True)
        sv = step * d
        yv = np.concatenate([g_new.real, g_new.imag]) - gv
        if sv @ yv > 1e-14 * (sv @ sv):
            s_hist.append(sv)
            y_hist.append(yv)
            if len(s_hist) > history:
                s_hist.pop(0)
                y_hist.pop(0)
        residual = float(np.max(np.abs(model.constraint.A @ model.samples(z_new))))
        trace.append([restart, it, f_new, comps_new["infidelity"], comps_new["onoff"],
                      comps_new["bandwidth"], step, residual])
        converged = f - f_new <= tol * max(1.0, abs(f))
        z, f, comps, g = z_new, f_new, comps_new, g_new
        if converged:
            break
    return z, f, comps, trace


def _two_loop(g, s_hist, y_hist):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(s_hist), reversed(y_hist)):
        a = (s @ q) / (y @ s)
        alphas.append(a)
        q -= a * y
    if s_hist:
        q *= (s_hist[-1] @ y_hist[-1]) / (y_hist[-1] @ y_hist[-1])
    for (s, y), a in zip(zip(s_hist, y_hist), reversed(alphas)):
        b = (y @ q) / (y @ s)
        q += (a - b) * s
    return q


def _run_restart(args):
    model, seed, k, peak_rad, max_iter = args
    rng = np.random.default_rng([seed, k])
    z0 = _initial_coeffs(model, rng, peak_rad)
    z, f, comps, trace = descend(model, z0, max_iter=max_iter, restart=k)
    return k, z, f, comps, trace


def optimize(params: DerivedParams, dt: float, M: int, weights: CostWeights = CostWeights(),
             restarts: int = 8, seed: int = 0, peak_mhz: float = EPS_REF_MHZ,
             max_iter: int = 3000, workers: Optional[int] = None) -> OptimizationResult:
    """Best-of-restarts descent over the reset kernel.

    Each restart starts from random coefficients scaled so the train peaks
    at ``peak_mhz`` and is seeded by ``(seed, restart index)``, so the
    result does not depend on scheduling.
    """
    model = CostModel(params, dt, M, weights)
    baseline, _ = model.evaluate(np.zeros(model.dimension))
    jobs = [(model, seed, k, peak_mhz * MHZ, max_iter) for k in range(restarts)]
    if workers is None:
        workers = int(os.environ.get("RIP_THREADS", "1"))
    if workers > 1 and restarts > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_run_restart, jobs))
    else:
        runs = [_run_restart(job) for job in jobs]
    for run in runs:
        log.info("restart %d: cost %.6g after %d steps", run[0], run[2], len(run[4]))
    k, z, f, comps, _ = min(runs, key=lambda r: (r[2], r[0]))
    if not f < baseline:
        raise NoProgress(f"best cost {f:.6g} does not beat the zero-pulse baseline {baseline:.6g}")
    trace = [row for run in runs for row in run[4]]
    table = model.table(z)
    report = average_gate_fidelity(table)
    return OptimizationResult(model.constraint.train(z), report, z, f, comps, trace, k)


@dataclass(frozen=True)
class SpectrumFeatures:
    """Spectral diagnostics of a train; frequencies in cyclic MHz."""

    peak_frequency: float
    notch_frequency: Optional[float]
    notch_depth: Optional[float]
    notch_in_band: Optional[bool]
    band: Optional[tuple]

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def padded_spectrum(train: StepTrainEnvelope, pad: int = 64):
    """Zero-padded power spectrum on ascending frequencies (MHz)."""
    n = train.n_steps * pad
    spec = np.fft.fft(train.samples, n)
    freqs = np.fft.fftfreq(n, d=train.dt * 1e-3)
    order = np.argsort(freqs)
    return freqs[order], np.abs(spec[order]) ** 2


def analyze_spectrum_features(train: StepTrainEnvelope, params: Optional[DerivedParams] = None,
                              bandwidth: Optional[float] = None, pad: int = 64,
                              notch_ratio: float = 1e-2) -> SpectrumFeatures:
    """Dominant in-band peak and, given ``params``, the notch near ``Delta + chibar_jk``.

    A notch is reported as present when the smallest power inside the band
    ``[Delta + min chibar, Delta + max chibar]`` is below ``notch_ratio``
    times the dominant peak.  The bus responds to the ``exp(+2 pi i f t)``
    component at ``f = Delta + chibar_jk``.
    """
    freqs, power = padded_spectrum(train, pad)
    inband = np.ones_like(freqs, dtype=bool) if bandwidth is None else np.abs(freqs) <= bandwidth
    peak_f = float(freqs[inband][np.argmax(power[inband])])
    peak_p = float(np.max(power[inband]))
    if params is None:
        return SpectrumFeatures(peak_f, None, None, None, None)
    lo = params.Delta + float(np.min(params.chibar))
    hi = params.Delta + float(np.max(params.chibar))
    sel = (freqs >= lo) & (freqs <= hi)
    if not np.any(sel):
        sel = np.argmin(np.abs(freqs - 0.5 * (lo + hi))) == np.arange(freqs.size)
    i = np.argmin(power[sel])
    depth = float(power[sel][i] / peak_p) if peak_p > 0 else 0.0
    return SpectrumFeatures(peak_f, float(freqs[sel][i]), depth, depth < notch_ratio, (lo, hi))


def spectrum_csv(train: StepTrainEnvelope, path, header: Optional[dict] = None):
    freqs, transform, power = spectrum(train)
    with open(path, "w", newline="") as fh:
        if header:
            fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["f_mhz", "re_F", "im_F", "power"])
        for f, z, p in zip(freqs, transform, power):
            writer.writerow([repr(float(f)), repr(float(z.real)), repr(float(z.imag)), repr(float(p))])

"""Exact coherent-state response of the bus and the qubit-pair phase matrix.

Each qubit state ``|jk>`` drives its own coherent bus branch
``alpha_jk`` obeying ``d alpha/dt = -DeltaTilde_jk alpha - i eps(t) / 2``.
Coherences ``|jk><lm|`` acquire the complex phase ``mu[jk, lm]``: the real part
is the entangling phase and the imaginary part measurement-induced dephasing.

Rates inside this module are angular (rad/ns); envelopes are converted from
cyclic MHz on entry.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from numpy.polynomial import Polynomial
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad_vec

from .envelopes import (
    ConstantEnvelope,
    Envelope,
    PiecewisePolynomialEnvelope,
    SplineEnvelope,
    StepTrainEnvelope,
)
from .errors import InvalidTable, OrderTooHigh, UnsupportedEnvelope, ZeroLoss
from .params import BASIS, MHZ, PARITY, DerivedParams, basis_index

# unordered off-diagonal pairs (row < column)
PAIRS = [(a, b) for a in range(4) for b in range(a + 1, 4)]
_ROWS = np.array([a for a, _ in PAIRS])
_COLS = np.array([b for _, b in PAIRS])

_GL64 = leggauss(64)
_GL24 = leggauss(24)


def h_delta(delta, x, threshold: float = 1e-6):
    """``(exp(delta x) - 1) / delta`` with a series branch for ``|delta x| < threshold``."""
    delta = np.asarray(delta, dtype=complex)
    x = np.asarray(x, dtype=float)
    z = delta * x
    small = np.abs(z) < threshold
    safe = np.where(small, 1.0, delta)
    direct = np.expm1(np.where(small, 0.0, z)) / safe
    series = x * (1 + z / 2 + z * z / 6)
    return np.where(small, series, direct)


def static_phase(params: DerivedParams, t) -> np.ndarray:
    """ZZ contribution ``zeta_0 ((-1)^(l+m) - (-1)^(j+k)) t / 4`` as a 4x4 matrix (rad)."""
    return params.zeta0_rad * (PARITY[None, :] - PARITY[:, None]) * np.asarray(t)[..., None, None] / 4


def shift_differences(params: DerivedParams) -> np.ndarray:
    """``chibar_jk - chibar_lm`` in rad/ns as a 4x4 matrix."""
    cb = params.chibar_rad
    return cb[:, None] - cb[None, :]


@dataclass(frozen=True)
class PhaseTable:
    """Complex phases ``mu[jk, lm]`` (rad) and bus amplitudes at time ``t`` (ns)."""

    mu: np.ndarray
    alpha: np.ndarray
    t: float

    def __post_init__(self):
        mu = np.array(self.mu, dtype=complex)
        alpha = np.array(self.alpha, dtype=complex)
        if mu.shape != (4, 4) or alpha.shape != (4,):
            raise InvalidTable("phase table needs a 4x4 mu and 4 amplitudes")
        mu.setflags(write=False)
        alpha.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "alpha", alpha)

    def __getitem__(self, key: Tuple[str, str]) -> complex:
        return complex(self.mu[basis_index(key[0]), basis_index(key[1])])

    def validate(self, atol: float = 1e-9, require_dephasing: bool = True):
        """Raise InvalidTable unless the structural invariants hold."""
        mu = self.mu
        scale = max(1.0, float(np.max(np.abs(mu))))
        if not np.all(np.isfinite(mu)):
            raise InvalidTable("non-finite phases")
        if np.max(np.abs(np.diag(mu))) > atol * scale:
            raise InvalidTable("diagonal phases must vanish")
        if np.max(np.abs(mu + mu.conj().T)) > atol * scale:
            raise InvalidTable("mu must be conjugate antisymmetric")
        if require_dephasing and np.min(mu.imag) < -atol * scale:
            raise InvalidTable("negative Im(mu): coherence would grow")
        return self

    @classmethod
    def from_pairs(cls, upper: dict, alpha=None, t: float = 0.0) -> "PhaseTable":
        """Build a table from ``{("00", "01"): mu, ...}`` for row < column pairs."""
        mu = np.zeros((4, 4), dtype=complex)
        for (a, b), value in upper.items():
            i, j = basis_index(a), basis_index(b)
            mu[i, j] = value
            mu[j, i] = -np.conj(value)
        return cls(mu, np.zeros(4) if alpha is None else alpha, t)

    @classmethod
    def from_upper(cls, values, alpha, t) -> "PhaseTable":
        mu = np.zeros((4, 4), dtype=complex)
        mu[_ROWS, _COLS] = values
        mu[_COLS, _ROWS] = -np.conj(values)
        return cls(mu, alpha, t)


# ---------------------------------------------------------------------------
# bus response


def _forced_identity(c: complex, poly: Polynomial, x: np.ndarray) -> np.ndarray:
    """``int_0^x exp(-c (x - s)) P(s) ds`` via repeated integration by parts."""
    deg = poly.degree()
    derivs = [poly] + [poly.deriv(m) for m in range(1, deg + 1)]
    sx = sum((-1) ** m * q(x) / c ** (m + 1) for m, q in enumerate(derivs))
    s0 = sum((-1) ** m * q(0.0) / c ** (m + 1) for m, q in enumerate(derivs))
    return (sx - s0) - s0 * np.expm1(-c * x)


def _forced_gauss(c: complex, poly: Polynomial, x: np.ndarray) -> np.ndarray:
    nodes, weights = _GL64
    s = 0.5 * x[:, None] * (1 + nodes[None, :])
    vals = np.exp(-c * (x[:, None] - s)) * poly(s)
    return 0.5 * x * (vals @ weights)


def _forced(c: complex, poly: Polynomial, x: np.ndarray, length: float) -> np.ndarray:
    deg = poly.degree()
    if c == 0:
        return poly.integ()(x)
    if deg == 0 or abs(c) * length >= 3 * deg:
        return _forced_identity(c, poly, x)
    return _forced_gauss(c, poly, x)


def _rates(params: DerivedParams) -> np.ndarray:
    return np.asarray(params.DeltaTilde, dtype=complex)


def _piece_alpha(rates, alpha_a, poly_rad, x, length):
    """Bus amplitudes (n, 4) at local times ``x`` inside one polynomial piece."""
    out = np.empty((x.size, 4), dtype=complex)
    for b in range(4):
        c = rates[b]
        out[:, b] = np.exp(-c * x) * alpha_a[b] - 0.5j * _forced(c, poly_rad, x, length)
    return out


def _piece_ends(params, env: PiecewisePolynomialEnvelope, alpha0):
    """Bus amplitudes at the start of every piece plus the final amplitudes."""
    rates = _rates(params)
    starts = [np.array(alpha0, dtype=complex)]
    for a, b, poly in env.pieces:
        length = b - a
        end = _piece_alpha(rates, starts[-1], poly * MHZ, np.array([length]), length)[0]
        starts.append(end)
    return starts


def _step_alpha_grid(params: DerivedParams, samples_rad: np.ndarray, dt: float, alpha0=None):
    """Exact bus amplitudes at ``p dt`` for ``p = 0..N`` under a step train; shape (N+1, 4)."""
    rates = _rates(params)
    decay = np.exp(-rates * dt)
    kick = -0.5j * h_delta(-rates, dt)  # -(i/2)(1 - e^{-c dt})/c
    n = samples_rad.size
    out = np.empty((n + 1, 4), dtype=complex)
    out[0] = 0.0 if alpha0 is None else alpha0
    for p in range(n):
        out[p + 1] = decay * out[p] + kick * samples_rad[p]
    return out


def respond(params: DerivedParams, env: Envelope, t, alpha0=None) -> np.ndarray:
    """Coherent bus amplitudes ``alpha_jk(t)`` for each qubit state.

    Parameters
    ----------
    params : DerivedParams
    env : Envelope
    t : float or array_like
        Times in ns within ``[0, env.duration]``.
    alpha0 : array_like of 4 complex, optional
        Initial amplitudes, default vacuum.

    Returns
    -------
    ndarray
        Shape ``(4,)`` for scalar ``t``, else ``(len(t), 4)``.
    """
    t = env._check_time(t)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    alpha0 = np.zeros(4, dtype=complex) if alpha0 is None else np.asarray(alpha0, dtype=complex)
    rates = _rates(params)
    out = np.empty((t.size, 4), dtype=complex)

    if isinstance(env, StepTrainEnvelope):
        grid = _step_alpha_grid(params, env.samples * MHZ, env.dt, alpha0)
        q = np.floor(np.round(t / env.dt, 9)).astype(int)
        q = np.clip(q, 0, env.n_steps)
        x = t - q * env.dt
        at_end = q == env.n_steps
        eps = np.where(at_end, 0.0, env.samples[np.minimum(q, env.n_steps - 1)] * MHZ)
        for b in range(4):
            c = rates[b]
            out[:, b] = np.exp(-c * x) * grid[q, b] - 0.5j * eps * h_delta(-c, x)
    elif isinstance(env, PiecewisePolynomialEnvelope):
        starts = _piece_ends(params, env, alpha0)
        idx = env._locate(t)
        for i, (a, b, poly) in enumerate(env.pieces):
            mask = idx == i
            if np.any(mask):
                out[mask] = _piece_alpha(rates, starts[i], poly * MHZ, t[mask] - a, b - a)
    else:
        raise UnsupportedEnvelope(f"cannot respond to {type(env).__name__}")
    return out[0] if scalar else out


# ---------------------------------------------------------------------------
# phase accumulation


def step_overlaps(params: DerivedParams, samples_rad, dt: float, lengths=None, alpha_grid=None):
    """Overlap integrals ``int alpha_lm^* alpha_jk`` over each step.

    Uses the closed-form quadrature constants ``U_jk,lm = h_{-D_jk - D_lm^*}(L)``
    and ``U_jk = h_{-D_jk}(L)`` for step length ``L``.  Returns an array of
    shape (n_steps, 6) ordered like :data:`PAIRS`, plus the amplitude grid.
    """
    samples_rad = np.asarray(samples_rad, dtype=complex)
    n = samples_rad.size
    rates = _rates(params)
    if alpha_grid is None:
        alpha_grid = _step_alpha_grid(params, samples_rad, dt)
    lengths = np.full(n, dt) if lengths is None else np.asarray(lengths, dtype=float)
    cj, cl = rates[_ROWS], rates[_COLS]
    L = lengths[:, None]
    U_pair = h_delta(-(cj + np.conj(cl))[None, :], L)
    U_j = h_delta(-cj[None, :], L)
    U_l = h_delta(-cl[None, :], L)
    eps = samples_rad[:, None]
    a_j = alpha_grid[:n, _ROWS]
    a_l = alpha_grid[:n, _COLS]
    return (
        U_pair * np.conj(a_l) * a_j
        - 0.5j / cj * (np.conj(U_l) - U_pair) * eps * np.conj(a_l)
        + 0.5j / np.conj(cl) * (U_j - U_pair) * np.conj(eps) * a_j
        + 0.25 / (cj * np.conj(cl)) * (L - U_j - np.conj(U_l) + U_pair) * np.abs(eps) ** 2
    ), alpha_grid


def _step_overlap(params, env: StepTrainEnvelope, t: float) -> np.ndarray:
    """Summed step overlaps up to ``t``, including a trailing partial step."""
    n_full = min(int(np.floor(np.round(t / env.dt, 9))), env.n_steps)
    samples = env.samples[:n_full] * MHZ
    lengths = np.full(n_full, env.dt)
    rem = t - n_full * env.dt
    if n_full < env.n_steps and rem > 1e-12 * env.dt:
        samples = np.append(samples, env.samples[n_full] * MHZ)
        lengths = np.append(lengths, rem)
    if samples.size == 0:
        return np.zeros(6, dtype=complex)
    per_step, _ = step_overlaps(params, samples, env.dt, lengths)
    return per_step.sum(axis=0)


def _assemble_table(params, overlap_upper, alpha, t) -> PhaseTable:
    diff = shift_differences(params)[_ROWS, _COLS]
    upper = diff * overlap_upper + static_phase(params, t)[_ROWS, _COLS]
    return PhaseTable.from_upper(upper, alpha, t)


def _constant_overlap(params, eps0_rad, t):
    rates = _rates(params)
    cj, cl = rates[_ROWS], np.conj(rates[_COLS])
    K = abs(eps0_rad) ** 2 / (4 * cl * cj)
    return K * (t - h_delta(-cl, t) - h_delta(-cj, t) + h_delta(-(cj + cl), t))


def _pair_integrand(alpha):
    return np.conj(alpha[..., _COLS]) * alpha[..., _ROWS]


def _gauss_panels(params, a, b):
    """Gauss-Legendre nodes/weights on ``[a, b]`` with panels short against the fastest rotation."""
    fastest = 2 * np.max(np.abs(_rates(params)))
    n_panels = max(1, int(np.ceil(fastest * (b - a) / 3.0)))
    edges = np.linspace(a, b, n_panels + 1)
    nodes, weights = _GL24
    half = 0.5 * np.diff(edges)[:, None]
    x = (edges[:-1, None] + half * (1 + nodes[None, :])).ravel()
    w = (half * weights[None, :]).ravel()
    return x, w


def _piecewise_overlap(params, env: PiecewisePolynomialEnvelope, t: float, method: str):
    rates = _rates(params)
    starts = _piece_ends(params, env, np.zeros(4))
    total = np.zeros(6, dtype=complex)
    for i, (a, b, poly) in enumerate(env.pieces):
        if a >= t:
            break
        end = min(b, t)
        poly_rad = poly * MHZ
        length = b - a
        if method == "gauss":
            x, w = _gauss_panels(params, 0.0, end - a)
            total += w @ _pair_integrand(_piece_alpha(rates, starts[i], poly_rad, x, length))
        elif method == "adaptive":
            fn = lambda x: _pair_integrand(_piece_alpha(rates, starts[i], poly_rad, np.array([x]), length)[0])
            value, _ = quad_vec(fn, 0.0, end - a, epsabs=1e-12, epsrel=1e-12, limit=2000)
            total += value
        else:
            raise ValueError(f"unknown quadrature method {method!r}")
    return total


def accumulate_phase(params: DerivedParams, env: Envelope, t: Optional[float] = None,
                     method: str = "adaptive") -> PhaseTable:
    """Phase table at time ``t`` (default: end of the envelope) from vacuum.

    Constant envelopes and step trains are integrated in closed form.  Spline
    and other piecewise-polynomial envelopes use quadrature of the exact
    integrand on each piece: ``method="adaptive"`` (Gauss-Kronrod, 1e-12
    absolute) or ``"gauss"`` (fixed panels of 24-point Gauss-Legendre, fast).
    """
    t = env.duration if t is None else float(env._check_time(t))
    alpha = respond(params, env, t)
    if isinstance(env, ConstantEnvelope):
        overlap = _constant_overlap(params, env.eps0 * MHZ, t)
    elif isinstance(env, StepTrainEnvelope):
        overlap = _step_overlap(params, env, t)
    elif isinstance(env, PiecewisePolynomialEnvelope):
        overlap = _piecewise_overlap(params, env, t, method)
    else:
        raise UnsupportedEnvelope(f"cannot integrate {type(env).__name__}")
    return _assemble_table(params, overlap, alpha, t)


@dataclass(frozen=True)
class PhaseSeries:
    """Time series of bus amplitudes (n, 4) and phase tables (n, 4, 4)."""

    t: np.ndarray
    alpha: np.ndarray
    mu: np.ndarray

    def table(self, i: int) -> PhaseTable:
        return PhaseTable(self.mu[i], self.alpha[i], float(self.t[i]))

    @property
    def theta(self) -> np.ndarray:
        return theta_series(self.mu)

    def nbar(self, populations=None) -> np.ndarray:
        p = np.full(4, 0.25) if populations is None else np.asarray(populations, dtype=float)
        return np.abs(self.alpha) ** 2 @ p

    def to_csv(self, path, populations=None, header: Optional[dict] = None):
        write_series_csv(path, self.t, self.alpha, self.mu, self.nbar(populations), header=header)


def theta_series(mu: np.ndarray) -> np.ndarray:
    i00, i01, i10, i11 = range(4)
    return np.real(mu[..., i00, i01] + mu[..., i00, i10] - mu[..., i00, i11])


def phase_series(params: DerivedParams, env: Envelope, times) -> PhaseSeries:
    """Bus amplitudes and phase tables on an increasing time grid starting at 0 or later."""
    times = env._check_time(np.asarray(times, dtype=float))
    if np.any(np.diff(times) < 0):
        raise ValueError("time grid must be nondecreasing")
    alpha = respond(params, env, times)
    n = times.size
    if isinstance(env, ConstantEnvelope):
        overlap = np.array([_constant_overlap(params, env.eps0 * MHZ, t) for t in times])
    elif isinstance(env, StepTrainEnvelope):
        overlap = np.array([_step_overlap(params, env, t) for t in times])
    elif isinstance(env, PiecewisePolynomialEnvelope):
        rates = _rates(params)
        starts = _piece_ends(params, env, np.zeros(4))
        knots = np.array([a for a, _, _ in env.pieces] + [env.duration])
        overlap = np.zeros((n, 6), dtype=complex)
        running = np.zeros(6, dtype=complex)
        prev = 0.0
        for k, t in enumerate(times):
            cuts = [prev] + [x for x in knots if prev < x < t] + [t]
            for lo, hi in zip(cuts, cuts[1:]):
                if hi <= lo:
                    continue
                i = int(env._locate(np.array([0.5 * (lo + hi)]))[0])
                a, b, poly = env.pieces[i]
                x, w = _gauss_panels(params, lo - a, hi - a)
                running = running + w @ _pair_integrand(
                    _piece_alpha(rates, starts[i], poly * MHZ, x, b - a))
            overlap[k] = running
            prev = t
    else:
        raise UnsupportedEnvelope(f"cannot integrate {type(env).__name__}")
    diff = shift_differences(params)[_ROWS, _COLS]
    upper = diff[None, :] * overlap + static_phase(params, times)[:, _ROWS, _COLS]
    mu = np.zeros((n, 4, 4), dtype=complex)
    mu[:, _ROWS, _COLS] = upper
    mu[:, _COLS, _ROWS] = -np.conj(upper)
    return PhaseSeries(times, alpha, mu)


def write_series_csv(path, t, alpha, mu, nbar, header: Optional[dict] = None):
    """CSV with ``t_ns``, four complex amplitudes, ``mu_00,11``, ``theta_rad`` and ``nbar``."""
    i00, i11 = 0, 3
    theta = theta_series(mu)
    with open(path, "w", newline="") as fh:
        if header:
            import json

            fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        writer = csv.writer(fh)
        cols = ["t_ns"]
        for label in BASIS:
            cols += [f"re_alpha_{label}", f"im_alpha_{label}"]
        cols += ["re_mu_0011", "im_mu_0011", "theta_rad", "nbar"]
        writer.writerow(cols)
        for k in range(len(t)):
            row = [float(t[k])]
            for b in range(4):
                row += [float(alpha[k, b].real), float(alpha[k, b].imag)]
            row += [float(mu[k, i00, i11].real), float(mu[k, i00, i11].imag),
                    float(theta[k]), float(nbar[k])]
            writer.writerow([repr(v) for v in row])


# ---------------------------------------------------------------------------
# steady state


@dataclass(frozen=True)
class SteadyStateRates:
    """Phase rates (rad/ns) reached under a constant tone once transients decay.

    ``mu_dot`` is exact.  ``approx`` holds the low-loss forms (``re_low_loss``,
    ``im_low_loss``; 4x4) and the equal-shift forms (``theta_dot_symmetric``,
    ``im_0011_symmetric``, ``im_0011_from_theta``) with the shift ``chibar``
    they assume; these are comparisons only.
    """

    mu_dot: np.ndarray
    theta_dot: float
    im_mu_dot_0011: float
    alpha_ss: np.ndarray
    approx: dict = field(default_factory=dict)


def steady_state_rates(params: DerivedParams, eps0: complex) -> SteadyStateRates:
    """Exact and approximate steady-state phase rates for a constant tone ``eps0`` (MHz)."""
    if params.kappa <= 0:
        raise ZeroLoss("no steady state without bus loss (kappa = 0)")
    rates = _rates(params)
    e2 = abs(eps0 * MHZ) ** 2
    diff = shift_differences(params)
    zz = params.zeta0_rad * (PARITY[None, :] - PARITY[:, None]) / 4
    mu_dot = diff * e2 / (4 * np.conj(rates)[None, :] * rates[:, None]) + zz
    theta_dot = float(theta_series(mu_dot))
    alpha_ss = -0.5j * eps0 * MHZ / rates

    D = params.Delta_rad
    cb = params.chibar_rad
    kappa = params.kappa_rad
    det = D + cb
    re_low = diff * e2 / (4 * det[:, None] * det[None, :])
    im_low = diff**2 * e2 * kappa / (8 * det[:, None] ** 2 * det[None, :] ** 2)
    chi_sym = (cb[1] + cb[2] + cb[3] / 2) / 3
    theta_sym = -e2 * chi_sym**2 / (2 * D * (D + chi_sym) * (D + 2 * chi_sym)) - params.zeta0_rad
    im_sym = e2 * chi_sym**2 * kappa / (2 * D**2 * (D + 2 * chi_sym) ** 2)
    im_from_theta = -(theta_sym + params.zeta0_rad) * (D + chi_sym) / (D * (D + 2 * chi_sym)) * kappa
    approx = {
        "re_low_loss": re_low,
        "im_low_loss": im_low,
        "chibar_symmetric": chi_sym,
        "theta_dot_symmetric": float(theta_sym),
        "im_0011_symmetric": float(im_sym),
        "im_0011_from_theta": float(im_from_theta),
    }
    return SteadyStateRates(mu_dot, theta_dot, float(mu_dot[0, 3].imag), alpha_ss, approx)


# ---------------------------------------------------------------------------
# adiabatic expansion and residual photons


@dataclass(frozen=True)
class AdiabaticExpansion:
    """Boundary-term approximation of ``alpha_jk(t)`` and residual-photon bounds.

    ``general_bound`` is the Cauchy-Schwarz bound on ``|alpha_jk(t_g)|^2`` from
    the order-M remainder; ``polynomial_bound`` is its closed form for a
    spline at the top order ``M = (d+1)/2``.
    """

    approx: np.ndarray
    general_bound: np.ndarray
    polynomial_bound: np.ndarray
    order: int


def _loss_window(kappa_rad: float, t_g: float) -> float:
    """``(1 - exp(-kappa t_g)) / kappa``, tending to ``t_g`` as kappa -> 0."""
    if kappa_rad == 0:
        return t_g
    return float(-np.expm1(-kappa_rad * t_g) / kappa_rad)


def adiabatic_expansion(params: DerivedParams, env: SplineEnvelope, t: float, M: int) -> AdiabaticExpansion:
    """Partial sum of the integration-by-parts expansion to order ``M`` and photon bounds."""
    if not isinstance(env, SplineEnvelope):
        raise UnsupportedEnvelope("adiabatic expansion needs a spline envelope")
    top = (env.degree + 1) // 2
    if M < 1:
        raise ValueError("expansion order must be >= 1")
    if M > top:
        raise OrderTooHigh(f"order {M} exceeds (d+1)/2 = {top}; higher derivatives are discontinuous")
    t = float(env._check_time(t))
    rates = _rates(params)
    approx = np.zeros(4, dtype=complex)
    t_g = env.duration
    # derivatives below order (d+1)/2 vanish at both ends by construction, so
    # the switch-on boundary terms drop out and the sum is exactly 0 at t_g
    if t < t_g:
        for m in range(M):
            approx -= 0.5j * (-1) ** m * env.derivative(m, t) * MHZ / rates ** (m + 1)

    window = _loss_window(params.kappa_rad, t_g)
    if M == top:
        eps_m = env.max_derivative() * MHZ
    else:
        eps_m = env.max_abs_derivative(M) * MHZ
    general = eps_m**2 * t_g * window / (4 * np.abs(rates) ** (2 * M))
    c0fact = env.spline.max_derivative_numerator
    poly = (abs(env.eps_max) * MHZ * c0fact) ** 2 * t_g * window / (
        4 * (env.t_r * np.abs(rates)) ** (env.degree + 1))
    return AdiabaticExpansion(approx, general, poly, M)


# ---------------------------------------------------------------------------
# dynamical / geometric / residual phase split


@dataclass(frozen=True)
class PhaseDecomposition:
    """Split of the resonator-induced real phase for one coherence (radians).

    ``gamma_g_area`` is the lossless signed-area form of the geometric phase,
    reported next to the integral form ``gamma_g``.
    """

    pair: Tuple[str, str]
    gamma_d: float
    gamma_g: float
    gamma_r: float
    gamma_g_area: float
    area: float
    resonator_phase: float
    higher_order: float
    static_part: float


def _poly_integral(p: Polynomial, q: Polynomial, a: float, b: float) -> complex:
    """``int_0^(b-a) conj(p(x)) q(x) dx`` exactly for real x."""
    prod = Polynomial(np.conj(p.coef)) * q
    return complex(prod.integ()(b - a))


def envelope_area(env: PiecewisePolynomialEnvelope) -> float:
    """Signed area enclosed by the envelope path in the complex plane, in (rad/ns)^2."""
    total = 0.0
    for a, b, poly in env.pieces:
        p = poly * MHZ
        total += 0.5 * _poly_integral(p, p.deriv(), a, b).imag
    return total


def decompose_phase(params: DerivedParams, env: PiecewisePolynomialEnvelope,
                    pair: Tuple[str, str] = ("00", "11"), t_g: Optional[float] = None,
                    method: str = "adaptive") -> PhaseDecomposition:
    """Dynamical, geometric and residual parts of the resonator-induced phase.

    Requires ``eps(0) = eps'(0) = 0``.  Integrals of envelope products are
    exact polynomial integrals; the total comes from :func:`accumulate_phase`.
    """
    if not isinstance(env, PiecewisePolynomialEnvelope):
        raise UnsupportedEnvelope("phase decomposition needs a differentiable (piecewise polynomial) envelope")
    scale = max(1.0, float(np.max([np.max(np.abs(p.coef)) for _, _, p in env.pieces])))
    if abs(env.derivative(0, 0.0)) > 1e-12 * scale or abs(env.derivative(1, 0.0)) > 1e-12 * scale:
        raise UnsupportedEnvelope("decomposition assumes eps(0) = eps'(0) = 0")
    t_g = env.duration if t_g is None else float(t_g)
    j, l = basis_index(pair[0]), basis_index(pair[1])
    rates = _rates(params)
    Dj, Dl = rates[j], np.conj(rates[l])
    diff = params.chibar_rad[j] - params.chibar_rad[l]

    e2 = ede = ded = dd = 0.0
    for a, b, poly in env.pieces:
        if a >= t_g:
            break
        end = min(b, t_g)
        p = poly * MHZ
        dp = p.deriv()
        e2 += _poly_integral(p, p, a, end)
        ede += _poly_integral(dp, p, a, end)  # int eps * conj(eps')
        ded += _poly_integral(p, dp, a, end)  # int conj(eps) * eps'
        dd += _poly_integral(dp, dp, a, end)
    denom2 = 4 * Dl**2 * Dj**2
    gamma_d = float(np.real(diff / (4 * Dl * Dj) * e2))
    gamma_g = float(-np.real(diff * (Dj * ede + Dl * ded) / denom2))
    gamma_r = float(np.real(diff * dd / denom2))

    area = envelope_area(env)
    D = params.Delta_rad
    cj, cl = params.chibar_rad[j], params.chibar_rad[l]
    gamma_g_area = float(diff * (2 * D + cj + cl) / (2 * (D + cj) ** 2 * (D + cl) ** 2) * area)

    table = accumulate_phase(params, env, t_g, method=method)
    static = float(static_phase(params, t_g)[j, l].real)
    resonator = float(table.mu[j, l].real - static)
    higher = resonator - (gamma_d + gamma_g + gamma_r)
    return PhaseDecomposition(tuple(pair), gamma_d, gamma_g, gamma_r, gamma_g_area, area,
                              resonator, higher, static)

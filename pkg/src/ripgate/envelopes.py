"""Complex drive envelopes.

Three concrete shapes are supported: a constant tone, a symmetric spline
(piecewise polynomial rise / plateau / fall) and a train of constant steps.
Envelope values are complex amplitudes in cyclic MHz; times are in ns.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Sequence, Tuple

import numpy as np
from numpy.polynomial import Polynomial

from .errors import OutOfRange, UnsupportedDegree, UsageError

MAX_DEGREE = 21

# slack for float round-off when checking t against [0, duration]
_T_SLACK = 1e-9


@dataclass(frozen=True)
class SplineCoefficients:
    """Integer coefficients of the rising spline ``s_d`` and its derivative bound.

    The largest magnitude of the lowest non-vanishing derivative (order
    ``order``) is ``max_derivative_numerator / t_r**order``.
    """

    degree: int
    coefficients: Tuple[int, ...]
    max_derivative_numerator: int

    @property
    def order(self) -> int:
        return (self.degree + 1) // 2

    def max_derivative(self, t_r: float) -> float:
        return self.max_derivative_numerator / t_r**self.order


def _solve_exact(matrix: List[List[Fraction]], rhs: List[Fraction]) -> List[Fraction]:
    """Gauss-Jordan elimination over the rationals."""
    n = len(rhs)
    aug = [row[:] + [b] for row, b in zip(matrix, rhs)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if pivot is None:
            raise ArithmeticError("singular spline system")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        p = aug[col][col]
        aug[col] = [v / p for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[col])]
    return [aug[r][n] for r in range(n)]


def solve_spline_coefficients(d: int) -> SplineCoefficients:
    """Solve for the integer coefficients ``c_0 .. c_{(d-1)/2}`` of ``s_d``.

    ``s_d(t) = sum_m (-1)^m c_m (t/t_r)^((d+1)/2 + m)`` rises from 0 to 1 on
    ``[0, t_r]`` with its first ``(d-1)/2`` derivatives vanishing at both ends.

    >>> solve_spline_coefficients(3).coefficients
    (3, 2)
    """
    if not isinstance(d, (int, np.integer)) or d < 1 or d % 2 == 0:
        raise UnsupportedDegree(f"spline degree must be a positive odd integer, got {d!r}")
    if d > MAX_DEGREE:
        raise UnsupportedDegree(f"spline degree {d} exceeds the supported maximum {MAX_DEGREE}")
    n = (d + 1) // 2
    size = (d - 1) // 2 + 1
    matrix = [
        [Fraction((-1) ** m * math.comb(n + m, j) * math.factorial(j)) for m in range(size)]
        for j in range(size)
    ]
    rhs = [Fraction(1 if j == 0 else 0) for j in range(size)]
    sol = _solve_exact(matrix, rhs)
    if any(c.denominator != 1 or c <= 0 for c in sol):
        raise ArithmeticError(f"non-integer spline coefficients for d={d}: {sol}")
    coeffs = tuple(int(c) for c in sol)
    return SplineCoefficients(d, coeffs, coeffs[0] * math.factorial(n))


class Envelope:
    """Common interface: ``duration``, ``evaluate(t)`` and JSON/CSV export."""

    duration: float
    kind: str

    def _check_time(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < -_T_SLACK) or np.any(t > self.duration + _T_SLACK * max(1.0, self.duration)):
            raise OutOfRange(f"t outside [0, {self.duration}] ns")
        return np.clip(t, 0.0, self.duration)

    def evaluate(self, t):
        raise NotImplementedError

    def __call__(self, t):
        return self.evaluate(t)

    def to_dict(self) -> dict:
        raise NotImplementedError

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def to_csv(self, path, t=None, points: int = 1001):
        """Write ``t_ns, re_eps_mhz, im_eps_mhz`` samples."""
        if t is None:
            t = np.linspace(0.0, self.duration, points)
        values = np.atleast_1d(self.evaluate(t))
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t_ns", "re_eps_mhz", "im_eps_mhz"])
            for ti, v in zip(np.atleast_1d(t), values):
                writer.writerow([repr(float(ti)), repr(float(v.real)), repr(float(v.imag))])


class PiecewisePolynomialEnvelope(Envelope):
    """Envelope given by complex polynomials on consecutive intervals.

    Parameters
    ----------
    pieces : sequence of (t_start, t_end, Polynomial)
        Each polynomial is in the local variable ``x = t - t_start`` and
        returns cyclic MHz.  Intervals must tile ``[0, duration]``.
    """

    kind = "piecewise"

    def __init__(self, pieces: Sequence[Tuple[float, float, Polynomial]]):
        if not pieces:
            raise ValueError("at least one piece is required")
        pieces = [(float(a), float(b), Polynomial(p.coef.astype(complex))) for a, b, p in pieces]
        if pieces[0][0] != 0.0:
            raise ValueError("first piece must start at t = 0")
        for (a0, b0, _), (a1, b1, _) in zip(pieces, pieces[1:]):
            if not math.isclose(b0, a1, rel_tol=0, abs_tol=1e-12):
                raise ValueError("pieces must be contiguous")
        if any(b < a for a, b, _ in pieces):
            raise ValueError("piece end before start")
        self._pieces = [p for p in pieces if p[1] > p[0]]
        self.duration = self._pieces[-1][1]
        self._starts = np.array([a for a, _, _ in self._pieces])

    @property
    def pieces(self):
        return list(self._pieces)

    def _locate(self, t):
        idx = np.searchsorted(self._starts, t, side="right") - 1
        return np.clip(idx, 0, len(self._pieces) - 1)

    def derivative(self, m: int, t):
        """m-th time derivative (cyclic MHz / ns^m); exact piecewise polynomial."""
        if m < 0:
            raise ValueError("derivative order must be >= 0")
        t = self._check_time(t)
        scalar = t.ndim == 0
        t = np.atleast_1d(t)
        idx = self._locate(t)
        out = np.zeros(t.shape, dtype=complex)
        for i, (a, _, poly) in enumerate(self._pieces):
            mask = idx == i
            if np.any(mask):
                out[mask] = poly.deriv(m)(t[mask] - a) if m else poly(t[mask] - a)
        return out[0] if scalar else out

    def evaluate(self, t):
        return self.derivative(0, t)

    def max_abs_derivative(self, m: int, samples: int = 2001) -> float:
        """Largest |m-th derivative| over the envelope (dense sampling plus piece ends)."""
        best = 0.0
        for a, b, poly in self._pieces:
            q = poly.deriv(m) if m else poly
            x = np.linspace(0.0, b - a, samples)
            best = max(best, float(np.max(np.abs(q(x)))))
        return best

    @classmethod
    def from_quadratures(cls, in_phase: "PiecewisePolynomialEnvelope",
                         quadrature: "PiecewisePolynomialEnvelope") -> "PiecewisePolynomialEnvelope":
        """Combine two real envelopes of equal duration into ``I + iQ``."""
        if not math.isclose(in_phase.duration, quadrature.duration, rel_tol=1e-12):
            raise ValueError("quadratures must have equal duration")
        knots = sorted({a for a, _, _ in in_phase.pieces} | {a for a, _, _ in quadrature.pieces}
                       | {in_phase.duration})
        pieces = []
        for a, b in zip(knots, knots[1:]):
            if b - a <= 1e-12:
                continue
            mid = 0.5 * (a + b)
            polys = []
            for env in (in_phase, quadrature):
                i = int(env._locate(np.array([mid]))[0])
                a0, _, p = env._pieces[i]
                polys.append(p(Polynomial([a - a0, 1.0])))
            pieces.append((a, b, polys[0] + 1j * polys[1]))
        return cls(pieces)

    def to_dict(self) -> dict:
        return {
            "kind": "piecewise",
            "pieces": [
                {"start_ns": a, "end_ns": b,
                 "coefficients_mhz": [[float(c.real), float(c.imag)] for c in p.coef]}
                for a, b, p in self._pieces
            ],
        }


class ConstantEnvelope(PiecewisePolynomialEnvelope):
    """Constant tone ``eps0`` (cyclic MHz) switched on for ``duration`` ns."""

    kind = "constant"

    def __init__(self, eps0: complex, duration: float):
        if not duration > 0:
            raise ValueError(f"duration must be > 0, got {duration}")
        self.eps0 = complex(eps0)
        super().__init__([(0.0, float(duration), Polynomial([self.eps0]))])

    def to_dict(self) -> dict:
        return {"kind": "constant", "eps0_mhz": [self.eps0.real, self.eps0.imag],
                "duration_ns": self.duration}


class SplineEnvelope(PiecewisePolynomialEnvelope):
    """Symmetric spline pulse: rise ``s_d`` over ``t_r``, plateau ``t_p``, mirrored fall.

    Parameters
    ----------
    degree : int
        Odd polynomial degree d.
    t_r : float
        Rise time (ns).
    eps_max : complex
        Peak amplitude (cyclic MHz).
    t_p : float, optional
        Plateau duration (ns), default 0.
    """

    kind = "spline"

    def __init__(self, degree: int, t_r: float, eps_max: complex, t_p: float = 0.0):
        if not t_r > 0:
            raise ValueError(f"rise time must be > 0, got {t_r}")
        if t_p < 0:
            raise ValueError(f"plateau must be >= 0, got {t_p}")
        self.degree = int(degree)
        self.spline = solve_spline_coefficients(degree)
        self.t_r = float(t_r)
        self.t_p = float(t_p)
        self.eps_max = complex(eps_max)
        n = self.spline.order
        coef = np.zeros(self.degree + 1)
        for m, c in enumerate(self.spline.coefficients):
            coef[n + m] = (-1) ** m * c / self.t_r ** (n + m)
        rise = Polynomial(coef)
        fall = rise(Polynomial([self.t_r, -1.0]))
        eps = self.eps_max
        pieces = [(0.0, self.t_r, rise * eps)]
        if self.t_p > 0:
            pieces.append((self.t_r, self.t_r + self.t_p, Polynomial([eps])))
        pieces.append((self.t_r + self.t_p, 2 * self.t_r + self.t_p, fall * eps))
        super().__init__(pieces)
        self.rise = rise

    def shape(self, t):
        """Unit-peak rising polynomial ``s_d(t, t_r)``."""
        return self.rise(np.asarray(t, dtype=float))

    def max_derivative(self) -> float:
        """Closed-form largest |derivative| of order (d+1)/2, in cyclic MHz / ns^order."""
        return abs(self.eps_max) * self.spline.max_derivative(self.t_r)

    def to_dict(self) -> dict:
        return {"kind": "spline", "degree": self.degree, "rise_ns": self.t_r,
                "plateau_ns": self.t_p, "eps_max_mhz": [self.eps_max.real, self.eps_max.imag]}


class StepTrainEnvelope(Envelope):
    """Train of N constant steps; sample q covers ``[q dt, (q+1) dt)``."""

    kind = "steptrain"

    def __init__(self, dt: float, samples):
        samples = np.asarray(samples, dtype=complex).ravel()
        if not dt > 0:
            raise ValueError(f"step duration must be > 0, got {dt}")
        if samples.size < 1:
            raise ValueError("a step train needs at least one sample")
        self.dt = float(dt)
        self.samples = samples
        self.samples.setflags(write=False)
        self.duration = self.dt * samples.size

    @property
    def n_steps(self) -> int:
        return self.samples.size

    def step_index(self, t):
        t = self._check_time(t)
        q = np.floor(np.round(t / self.dt, 9)).astype(int)
        return np.clip(q, 0, self.n_steps - 1)

    def evaluate(self, t):
        q = self.step_index(t)
        return self.samples[q] if np.ndim(q) else complex(self.samples[int(q)])

    def __add__(self, other):
        self._check_compatible(other)
        return StepTrainEnvelope(self.dt, self.samples + other.samples)

    def __mul__(self, scale):
        return StepTrainEnvelope(self.dt, self.samples * complex(scale))

    __rmul__ = __mul__

    def _check_compatible(self, other):
        if not isinstance(other, StepTrainEnvelope) or other.dt != self.dt or other.n_steps != self.n_steps:
            raise ValueError("step trains must share dt and length")

    def to_dict(self) -> dict:
        return {"kind": "steptrain", "dt_ns": self.dt,
                "samples_mhz": [[float(v.real), float(v.imag)] for v in self.samples]}


def spectrum(env: StepTrainEnvelope):
    """Discrete Fourier transform of a step train.

    Returns
    -------
    freqs : ndarray
        ``k / (N dt)`` in MHz for ``k = -ceil(N/2)+1 .. floor(N/2)``, ascending.
    transform : ndarray
        ``F(f_k) = sum_q eps_q exp(-2 pi i f_k q dt)`` in cyclic MHz.
    power : ndarray
        ``|F(f_k)|**2``.
    """
    n = env.n_steps
    k = np.arange(-((n + 1) // 2) + 1, n // 2 + 1)
    transform = np.fft.fft(env.samples)[k % n]
    freqs = k / (n * env.dt) * 1e3
    return freqs, transform, np.abs(transform) ** 2


def envelope_from_dict(data: dict) -> Envelope:
    """Inverse of ``Envelope.to_dict``."""
    kind = data.get("kind")
    cplx = lambda pair: complex(pair[0], pair[1]) if isinstance(pair, (list, tuple)) else complex(pair)
    if kind == "constant":
        return ConstantEnvelope(cplx(data["eps0_mhz"]), float(data["duration_ns"]))
    if kind == "spline":
        return SplineEnvelope(int(data["degree"]), float(data["rise_ns"]),
                              cplx(data["eps_max_mhz"]), float(data.get("plateau_ns", 0.0)))
    if kind == "steptrain":
        return StepTrainEnvelope(float(data["dt_ns"]), [cplx(s) for s in data["samples_mhz"]])
    if kind == "piecewise":
        pieces = [(p["start_ns"], p["end_ns"], Polynomial([cplx(c) for c in p["coefficients_mhz"]]))
                  for p in data["pieces"]]
        return PiecewisePolynomialEnvelope(pieces)
    raise UsageError(f"unknown envelope kind {kind!r}")


def load_envelope(path) -> Envelope:
    with open(path) as fh:
        return envelope_from_dict(json.load(fh))

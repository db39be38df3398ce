"""Search spline pulse parameters that realize an echoed controlled-Z.

For a given degree and peak amplitude the rise time is tuned so that one
pulse accumulates an entangling angle of magnitude pi/2; the detuning is then
raised until the echoed gate meets an infidelity target.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .closed_form import accumulate_phase, respond
from .envelopes import SplineEnvelope
from .errors import NoSolution
from .metrics import fidelity_closed_form, theta_of
from .params import DerivedParams, DeviceParams, derive_params

log = logging.getLogger(__name__)

T_R_MAX = 10_000.0
DELTA_MAX = 500.0


def single_pulse(params: DerivedParams, d: int, eps_max: complex, t_r: float):
    env = SplineEnvelope(d, t_r, eps_max)
    return env, accumulate_phase(params, env, method="gauss")


def theta_at(params: DerivedParams, d: int, eps_max: complex, t_r: float) -> float:
    return theta_of(single_pulse(params, d, eps_max, t_r)[1])


def tune_rise_time(params: DerivedParams, d: int, eps_max: complex, target_theta: float = np.pi / 2,
                   t_r_max: float = T_R_MAX, t_r_min: float = 0.5) -> float:
    """Shortest rise time on the monotone tail of ``|theta(t_r)|`` reaching ``target_theta``.

    ``theta`` is negative for drives above the bus, so the root solved is
    ``theta(t_r) = -target_theta``.  Short pulses ring the bus and make
    ``theta(t_r)`` oscillate; those transient crossings are skipped and the
    crossing after which ``|theta|`` grows steadily is returned.
    """
    if eps_max == 0 and params.zeta_0 == 0:
        raise NoSolution("no drive and no static coupling: theta stays zero")
    target = -abs(target_theta)
    f = lambda t_r: theta_at(params, d, eps_max, t_r) - target

    # rotation period of the slowest bus branch sets the scan resolution
    slowest = np.min(np.abs(params.DeltaTilde))
    quarter = 0.25 * 2 * np.pi / slowest if slowest > 0 else np.inf
    grid = [t_r_min]
    values = [f(t_r_min)]
    beyond = 0
    while grid[-1] < t_r_max:
        step = min(quarter, max(0.05 * grid[-1], 0.25))
        step = max(step, 0.02 * grid[-1])
        t_next = min(grid[-1] + step, t_r_max)
        v = f(t_next)
        grid.append(t_next)
        values.append(v)
        # monotone tail: past the target and still moving away from zero
        if v < 0 and values[-2] < 0 and v < values[-2] and abs(v) > 0.25 * abs(target):
            beyond += 1
            if beyond >= 4:
                break
        else:
            beyond = 0
    values = np.array(values)
    if values[-1] > 0:
        raise NoSolution(f"|theta| does not reach {abs(target):.4f} rad for t_r <= {t_r_max} ns")
    above = np.nonzero(values > 0)[0]
    if above.size == 0:
        # target already exceeded at the shortest rise time
        return float(grid[0])
    i = int(above[-1])
    return float(brentq(f, grid[i], grid[i + 1], xtol=1e-9, rtol=1e-12))


@dataclass(frozen=True)
class SplineDesign:
    """A tuned spline gate; frequencies in MHz, times in ns."""

    degree: int
    eps_max: float
    t_r: float
    Delta_min: float
    achieved_infidelity: float
    peak_photons: float
    residual_photons: float
    theta: float

    @property
    def composite_duration(self) -> float:
        return 2 * (2 * self.t_r)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["composite_duration"] = self.composite_duration
        return out


def peak_photons(params: DerivedParams, env: SplineEnvelope, samples: int = 2001) -> float:
    """Largest ``|alpha_jk(t)|^2`` over the pulse and the four branches."""
    t = np.linspace(0.0, env.duration, samples)
    return float(np.max(np.abs(respond(params, env, t)) ** 2))


def design_at(dev: DeviceParams, d: int, eps_max: float, Delta: float, **kw) -> SplineDesign:
    """Tune the rise time at a fixed detuning and report the echoed gate."""
    params = derive_params(dev, Delta)
    t_r = tune_rise_time(params, d, eps_max, **kw)
    env, table = single_pulse(params, d, eps_max, t_r)
    return SplineDesign(
        degree=d, eps_max=float(abs(eps_max)), t_r=t_r, Delta_min=float(Delta),
        achieved_infidelity=1.0 - fidelity_closed_form(table),
        peak_photons=peak_photons(params, env),
        residual_photons=float(np.max(np.abs(table.alpha) ** 2)),
        theta=theta_of(table),
    )


def _infidelity_or_one(dev, d, eps_max, Delta, cache):
    if Delta not in cache:
        try:
            cache[Delta] = design_at(dev, d, eps_max, Delta)
        except NoSolution:
            cache[Delta] = None
    design = cache[Delta]
    return 1.0 if design is None else design.achieved_infidelity


def min_detuning_for_target(dev: DeviceParams, d: int, eps_max: float, target_infidelity: float,
                            Delta_lo: float = 5.0, Delta_max: float = DELTA_MAX,
                            scan_factor: float = 1.1, rtol: float = 1e-3) -> SplineDesign:
    """Smallest detuning whose tuned spline gate meets ``target_infidelity``.

    A geometric scan from ``Delta_lo`` finds the first passing detuning; the
    step before it is refined by bisection to relative tolerance ``rtol``.
    """
    if not 0 < target_infidelity < 0.6:
        raise ValueError("target infidelity must lie in (0, 0.6)")
    if not eps_max > 0:
        raise ValueError("peak amplitude must be positive")
    cache = {}
    lo, hi = None, None
    Delta = Delta_lo
    while Delta <= Delta_max:
        if _infidelity_or_one(dev, d, eps_max, Delta, cache) <= target_infidelity:
            hi = Delta
            break
        lo = Delta
        Delta *= scan_factor
    if hi is None:
        raise NoSolution(f"no detuning up to {Delta_max} MHz reaches infidelity {target_infidelity}")
    if lo is None:
        return cache[hi]
    while (hi - lo) > rtol * hi:
        mid = 0.5 * (lo + hi)
        if _infidelity_or_one(dev, d, eps_max, mid, cache) <= target_infidelity:
            hi = mid
        else:
            lo = mid
    return cache[hi]


@dataclass
class SweepResult:
    """Designs per (degree, amplitude) with power-law fits per degree.

    ``designs[d]`` lists a design or ``None`` (no solution) per grid amplitude.
    ``detuning_exponent[d]`` is p in ``Delta_min = c |eps|^p``;
    ``rise_fit[d]`` holds ``(c0, c1, c2, q)`` for ``t_r = c0 / (c1 + c2 |eps|^q)``.
    """

    eps_grid: list
    designs: dict
    detuning_exponent: dict
    detuning_prefactor: dict
    rise_fit: dict

    def rows(self):
        for d, designs in self.designs.items():
            for eps, design in zip(self.eps_grid, designs):
                if design is None:
                    yield {"d": d, "eps_mhz": eps, "delta_min_mhz": None, "t_r_ns": None,
                           "infidelity": None, "peak_photons": None}
                else:
                    yield {"d": d, "eps_mhz": eps, "delta_min_mhz": design.Delta_min,
                           "t_r_ns": design.t_r, "infidelity": design.achieved_infidelity,
                           "peak_photons": design.peak_photons}


def _sweep_point(args):
    dev, d, eps, target, kw = args
    try:
        return min_detuning_for_target(dev, d, eps, target, **kw)
    except NoSolution as exc:
        log.warning("no design for d=%s eps=%s: %s", d, eps, exc)
        return None


def fit_detuning(eps, delta):
    """Least-squares ``log Delta = log c + p log eps``; returns (c, p)."""
    p, logc = np.polyfit(np.log(eps), np.log(delta), 1)
    return float(np.exp(logc)), float(p)


def fit_rise_time(eps, t_r, d):
    """Fit ``1 / t_r = c1 + c2 eps^q`` with ``q = (d+1)/(2d)``; returns (1, c1, c2, q)."""
    q = (d + 1) / (2 * d)
    A = np.column_stack([np.ones(len(eps)), np.asarray(eps) ** q])
    (c1, c2), *_ = np.linalg.lstsq(A, 1.0 / np.asarray(t_r), rcond=None)
    return 1.0, float(c1), float(c2), q


def sweep(dev: DeviceParams, degrees: Sequence[int], eps_grid: Sequence[float], target_infidelity: float,
          workers: Optional[int] = None, **kw) -> SweepResult:
    """Run :func:`min_detuning_for_target` over a grid; points are independent and may run in parallel."""
    if not degrees or not eps_grid:
        raise ValueError("degree and amplitude grids must be nonempty")
    jobs = [(dev, d, float(e), target_infidelity, kw) for d in degrees for e in eps_grid]
    if workers is None:
        workers = int(os.environ.get("RIP_THREADS", "1"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_point, jobs))
    else:
        results = [_sweep_point(job) for job in jobs]
    designs, exps, prefs, rises = {}, {}, {}, {}
    n = len(eps_grid)
    for k, d in enumerate(degrees):
        row = results[k * n:(k + 1) * n]
        designs[d] = row
        ok = [(e, r) for e, r in zip(eps_grid, row) if r is not None]
        if len(ok) >= 2:
            e = np.array([x for x, _ in ok])
            prefs[d], exps[d] = fit_detuning(e, [r.Delta_min for _, r in ok])
            if len(ok) >= 3:
                rises[d] = fit_rise_time(e, [r.t_r for _, r in ok], d)
    return SweepResult(list(map(float, eps_grid)), designs, exps, prefs, rises)

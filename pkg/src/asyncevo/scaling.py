"""Subagent/time scaling law, its least-squares fit and the compute-optimal frontier.

Model::

    P(N, t) = 100 * g / (g + 1),   g = alpha * log(gamma * t + 1) * log(beta * N + 1)

Fits are done over ``theta = log(params)`` so positivity is automatic. With
``u = log(gamma t + 1)``, ``v = log(beta N + 1)`` and ``dP/dg = 100 / (g + 1)**2``
the analytic Jacobian is::

    dP/dlog(alpha) = dP/dg * g
    dP/dlog(gamma) = dP/dg * alpha * v * gamma * t / (gamma t + 1)
    dP/dlog(beta)  = dP/dg * alpha * u * beta * N / (beta N + 1)
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import mpmath
import numpy as np
from scipy.optimize import least_squares

log = logging.getLogger(__name__)

PARAM_NAMES = ("alpha", "gamma", "beta")
N_RESTARTS = 16


class InsufficientDataError(ValueError):
    pass


class DegenerateDataError(ValueError):
    pass


class NonConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScalingParams:
    alpha: float
    beta: float
    gamma: float

    def __post_init__(self):
        for name in PARAM_NAMES:
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be a finite positive real, got {v!r}")

    def as_dict(self) -> dict[str, float]:
        return {"alpha": self.alpha, "gamma": self.gamma, "beta": self.beta}


# a reference fit, and a recalibration for a second model that keeps beta fixed
REFERENCE_FIT = ScalingParams(alpha=0.973, beta=4.854, gamma=2.631)
REFERENCE_TRANSFER = ScalingParams(alpha=2.673, beta=4.854, gamma=0.481)


@dataclass(frozen=True)
class ObservationPoint:
    n_agents: int
    time: float
    performance: float
    seed: int | None = None

    def __post_init__(self):
        if self.n_agents < 1 or not self.time > 0:
            raise ValueError("observation needs n_agents >= 1 and time > 0")
        if not 0.0 <= self.performance < 100.0:
            raise ValueError(f"performance must lie in [0, 100), got {self.performance}")


@dataclass
class FitResult:
    params: ScalingParams
    r_squared: float
    rmse: float
    residuals: np.ndarray
    frozen: dict[str, float] = field(default_factory=dict)
    sse: float = 0.0

    def report(self, points: Sequence[ObservationPoint] | None = None) -> dict:
        out = {
            **self.params.as_dict(),
            "r_squared": self.r_squared,
            "rmse": self.rmse,
            "sse": self.sse,
            "frozen": dict(self.frozen),
        }
        if points is not None:
            out["residuals"] = [
                {"n_agents": p.n_agents, "time": p.time, "performance": p.performance, "residual": float(r)}
                for p, r in zip(points, self.residuals)
            ]
        return out


def predict(params: ScalingParams, n, t):
    """Predicted performance in ``[0, 100)``; broadcasts over array ``n`` and ``t``."""
    n_arr = np.asarray(n, dtype=float)
    t_arr = np.asarray(t, dtype=float)
    if np.any(n_arr < 0) or np.any(t_arr < 0):
        raise ValueError("n and t must be non-negative")
    g = params.alpha * np.log1p(params.gamma * t_arr) * np.log1p(params.beta * n_arr)
    p = 100.0 * g / (g + 1.0)
    return float(p) if p.ndim == 0 else p


def predict_mp(params: ScalingParams, n, t, dps: int = 50) -> mpmath.mpf:
    """Arbitrary-precision evaluation of the same law, for golden values."""
    with mpmath.workdps(dps):
        a, b, c = (mpmath.mpf(repr(v)) for v in (params.alpha, params.beta, params.gamma))
        g = a * mpmath.log(c * mpmath.mpf(repr(t)) + 1) * mpmath.log(b * mpmath.mpf(repr(n)) + 1)
        return 100 * g / (g + 1)


def _model_and_jac(theta: np.ndarray, free: Sequence[str], fixed: dict, n: np.ndarray, t: np.ndarray):
    p = dict(fixed)
    p.update({name: math.exp(th) for name, th in zip(free, theta)})
    a, b, c = p["alpha"], p["beta"], p["gamma"]
    u = np.log1p(c * t)
    v = np.log1p(b * n)
    g = a * u * v
    pred = 100.0 * g / (g + 1.0)
    dpdg = 100.0 / (g + 1.0) ** 2
    cols = {
        "alpha": dpdg * g,
        "gamma": dpdg * a * v * c * t / (c * t + 1.0),
        "beta": dpdg * a * u * b * n / (b * n + 1.0),
    }
    return pred, np.column_stack([cols[name] for name in free])


def fit(
    points: Sequence[ObservationPoint],
    frozen: dict[str, float] | None = None,
    n_restarts: int = N_RESTARTS,
    seed: int = 0,
) -> FitResult:
    """Least-squares fit of the law to observed ``(N, t, P)`` points.

    Parameters in ``frozen`` are held fixed (e.g. ``{"beta": 4.854}`` for the
    transfer protocol). The free ones are fitted in log space from
    ``n_restarts`` starting points (one at unit values, the rest log-uniform
    in ``[1e-2, 1e2]``) with trust-region least squares and the analytic
    Jacobian; the lowest residual sum of squares wins.
    """
    frozen = dict(frozen or {})
    unknown = set(frozen) - set(PARAM_NAMES)
    if unknown:
        raise ValueError(f"unknown parameter(s) to freeze: {sorted(unknown)}")
    free = [p for p in PARAM_NAMES if p not in frozen]
    pts = list(points)
    if len(pts) < max(len(free), 2):
        raise InsufficientDataError(f"{len(free)}-parameter fit needs at least {max(len(free), 2)} points, got {len(pts)}")
    n = np.array([p.n_agents for p in pts], dtype=float)
    t = np.array([p.time for p in pts], dtype=float)
    y = np.array([p.performance for p in pts], dtype=float)
    if "beta" in free and len(np.unique(n)) < 2:
        raise DegenerateDataError("beta is free but every observation has the same N")
    if not free:
        params = ScalingParams(**frozen)
        return _finish(params, frozen, n, t, y)

    rng = np.random.default_rng(seed)
    starts = [np.zeros(len(free))] + [rng.uniform(math.log(1e-2), math.log(1e2), len(free)) for _ in range(n_restarts - 1)]
    best = None
    for x0 in starts:
        try:
            sol = least_squares(
                lambda th: _model_and_jac(th, free, frozen, n, t)[0] - y,
                x0,
                jac=lambda th: _model_and_jac(th, free, frozen, n, t)[1],
                method="trf",
                bounds=(math.log(1e-6), math.log(1e6)),
                x_scale="jac",
                xtol=1e-15,
                ftol=1e-15,
                gtol=1e-15,
                max_nfev=2000,
            )
        except (ValueError, FloatingPointError):
            continue
        if not np.all(np.isfinite(sol.fun)):
            continue
        sse = float(sol.fun @ sol.fun)
        if best is None or sse < best[0]:
            best = (sse, sol.x)
    if best is None:
        raise NonConvergenceError(f"no restart out of {n_restarts} produced a finite fit")
    values = dict(frozen)
    values.update({name: math.exp(th) for name, th in zip(free, best[1])})
    return _finish(ScalingParams(**values), frozen, n, t, y)


def _finish(params: ScalingParams, frozen: dict, n: np.ndarray, t: np.ndarray, y: np.ndarray) -> FitResult:
    resid = predict(params, n, t) - y
    sse = float(resid @ resid)
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - sse / sst if sst > 0 else float("nan")
    return FitResult(params, r2, math.sqrt(sse / len(y)), resid, frozen, sse)


def rmse(params: ScalingParams, points: Sequence[ObservationPoint]) -> float:
    n = np.array([p.n_agents for p in points], dtype=float)
    t = np.array([p.time for p in points], dtype=float)
    y = np.array([p.performance for p in points], dtype=float)
    r = predict(params, n, t) - y
    return math.sqrt(float(r @ r) / len(r))


def continuous_optimum(params: ScalingParams, budget: float) -> tuple[float, float]:
    """Real-valued optimum ``N* = sqrt(gamma C / beta)``, ``t* = C / N*``."""
    if not budget > 0:
        raise ValueError(f"compute budget must be > 0, got {budget}")
    n_star = math.sqrt(params.gamma * budget / params.beta)
    return n_star, budget / n_star


def optimal_allocation(params: ScalingParams, budget: float) -> tuple[int, float]:
    """Best integer subagent count for total compute ``C = N t``.

    Nearest-integer rounding of the real optimum is not always the better
    neighbour, so both neighbours are scored and the higher prediction wins
    (ties go to the smaller N). A disagreement with plain rounding is logged.
    """
    n_real, _ = continuous_optimum(params, budget)
    lo = max(1, math.floor(n_real))
    hi = max(1, math.ceil(n_real))
    p_lo = predict(params, lo, budget / lo)
    p_hi = predict(params, hi, budget / hi)
    n_star = hi if p_hi > p_lo else lo
    rounded = max(1, int(math.floor(n_real + 0.5)))
    if rounded != n_star:
        log.info("nearest rounding gives N=%d but N=%d predicts higher P at C=%g", rounded, n_star, budget)
    return n_star, budget / n_star


def compute_frontier(params: ScalingParams, budgets: Iterable[float]) -> list[tuple[float, float]]:
    out = []
    for c in budgets:
        n_star, t_star = optimal_allocation(params, c)
        out.append((float(c), predict(params, n_star, t_star)))
    return out


def continuous_frontier(params: ScalingParams, budget: float) -> float:
    """Frontier without the integer constraint, evaluated at the real optimum."""
    n_star, t_star = continuous_optimum(params, budget)
    return predict(params, n_star, t_star)


def closed_form_frontier(params: ScalingParams, budget: float) -> float:
    """``100 a h / (a h + 1)`` with ``h = log(sqrt(beta gamma C) + 1) ** 2``."""
    h = math.log1p(math.sqrt(params.beta * params.gamma * budget)) ** 2
    return 100.0 * params.alpha * h / (params.alpha * h + 1.0)


def stationarity_f(z):
    """``f(z) = (1 + z) / z * log(1 + z)``."""
    z = np.asarray(z, dtype=float)
    return (1.0 + z) / z * np.log1p(z)


def stationarity_fprime(z):
    """``f'(z) = (z - log(1 + z)) / z**2``, with a series branch where the difference cancels."""
    z = np.asarray(z, dtype=float)
    small = z < 1e-3
    zs = np.where(small, z, 1.0)
    series = 0.5 - zs / 3.0 + zs**2 / 4.0 - zs**3 / 5.0 + zs**4 / 6.0
    zl = np.where(small, 1.0, z)
    direct = (zl - np.log1p(zl)) / zl**2
    return np.where(small, series, direct)


def _fd_derivative(z: float, dps: int = 50) -> float:
    with mpmath.workdps(dps):
        zz = mpmath.mpf(repr(z))
        h = zz * mpmath.mpf("1e-12")
        f = lambda x: (1 + x) / x * mpmath.log1p(x)  # noqa: E731
        return float((f(zz + h) - f(zz - h)) / (2 * h))


@dataclass
class StationarityReport:
    ok: bool
    n_points: int
    max_rel_error: float
    offending: float | None = None
    reason: str = ""


def verify_stationarity(z_grid: Sequence[float], rel_tol: float = 1e-6) -> StationarityReport:
    """Check that ``f`` increases strictly along ``z_grid`` and that ``f' > 0`` there.

    The closed-form derivative is compared against a central difference taken
    in 50-digit arithmetic, which stays accurate down to ``z = 1e-6`` where the
    double-precision difference quotient would be swamped by rounding.
    """
    z = np.asarray(z_grid, dtype=float)
    if z.size == 0 or np.any(z <= 0) or np.any(np.diff(z) <= 0):
        raise ValueError("z_grid must be positive and strictly increasing")
    f = stationarity_f(z)
    fp = stationarity_fprime(z)
    worst = 0.0
    for i, zi in enumerate(z):
        if i and not f[i] > f[i - 1]:
            return StationarityReport(False, z.size, worst, float(zi), "f not strictly increasing")
        if not fp[i] > 0:
            return StationarityReport(False, z.size, worst, float(zi), "closed-form derivative not positive")
        fd = _fd_derivative(float(zi))
        rel = abs(fd - fp[i]) / abs(fp[i])
        worst = max(worst, rel)
        if not fd > 0 or rel > rel_tol:
            return StationarityReport(False, z.size, worst, float(zi), "finite difference disagrees")
    return StationarityReport(True, z.size, worst)


def read_points_csv(path) -> list[ObservationPoint]:
    """Read ``n_agents,time,performance[,seed]`` rows."""
    pts = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"n_agents", "time", "performance"} - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"CSV is missing column(s) {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                seed = row.get("seed")
                pts.append(
                    ObservationPoint(
                        n_agents=int(row["n_agents"]),
                        time=float(row["time"]),
                        performance=float(row["performance"]),
                        seed=int(seed) if seed not in (None, "") else None,
                    )
                )
            except (TypeError, ValueError) as exc:
                raise ValueError(f"line {lineno}: {exc}") from exc
    return pts


def write_points_csv(points: Sequence[ObservationPoint], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["n_agents", "time", "performance", "seed"])
        for p in points:
            w.writerow([p.n_agents, repr(p.time), repr(p.performance), "" if p.seed is None else p.seed])


def synthetic_points(
    params: ScalingParams,
    n_values: Sequence[int],
    times: Sequence[float],
    noise_sigma: float = 0.0,
    rng: np.random.Generator | None = None,
) -> list[ObservationPoint]:
    """Grid of points generated from the law, optionally with Gaussian noise (clipped into ``[0, 100)``)."""
    pts = []
    for n in n_values:
        for t in times:
            p = predict(params, n, t)
            if noise_sigma:
                p = p + noise_sigma * (rng if rng is not None else np.random.default_rng()).standard_normal()
            pts.append(ObservationPoint(int(n), float(t), float(min(max(p, 0.0), np.nextafter(100.0, 0.0)))))
    return pts

"""Finite-sample error bounds for the SVR estimate.

All formulas are evaluated as printed; the only numerical liberty is that
powers ``M**(2*t0 - 1)`` are formed through logarithms so long horizons do
not overflow.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .estimator import Estimate
from .exceptions import DimensionMismatch

__all__ = [
    "BoundParams",
    "Interval",
    "BoundResult",
    "theta_a",
    "theta_b",
    "h_bound",
    "error_intervals",
    "parameter_interval_a",
    "epsilon_norm_bounds",
    "compute_bounds",
]


@dataclass(frozen=True)
class BoundParams:
    n: int
    m: int
    big_m: float = 1.1
    delta: float = 0.01
    gamma: float = 0.05
    n_rollouts: int = 100
    t0: int = 11
    sigma_u: float = 1.0
    sigma_w: float = 1.0

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if not self.big_m > 0:
            raise ValueError("big_m must be > 0")
        if self.n_rollouts < 1 or self.t0 < 2:
            raise ValueError("need n_rollouts >= 1 and t0 >= 2")
        if self.gamma < 0 or self.sigma_u <= 0 or self.sigma_w < 0:
            raise ValueError("need gamma >= 0, sigma_u > 0, sigma_w >= 0")

    @property
    def n0(self) -> int:
        return (self.t0 - 1) * self.n_rollouts


def _mpow(big_m: float, e: int) -> float:
    try:
        return math.exp(e * math.log(big_m))
    except OverflowError:
        return math.inf


def theta_a(p: BoundParams) -> float:
    su2, sw2 = p.sigma_u ** 2, p.sigma_w ** 2
    num = 4.0 * p.n * (p.m * p.big_m * su2 + sw2)
    # divide the large powers out first so huge t0 stays finite
    if p.big_m > 1:
        scale = _mpow(p.big_m, 2 * p.t0 - 2)
        den = p.n_rollouts * (p.n * p.big_m * su2 + sw2)
        return num / den / scale
    den = p.n_rollouts * (p.n * _mpow(p.big_m, 2 * p.t0 - 1) * su2 + _mpow(p.big_m, 2 * p.t0 - 2) * sw2)
    return num / den


def theta_b(p: BoundParams) -> float:
    su2, sw2 = p.sigma_u ** 2, p.sigma_w ** 2
    inner = p.n * _mpow(p.big_m, 2 * p.t0 - 1) * su2 + (_mpow(p.big_m, 2 * p.t0 - 2) + 1.0) * sw2
    return 4.0 * p.m * inner / (p.n_rollouts * su2)


def h_bound(theta: float, dim: int, p: BoundParams) -> float:
    """Concentration radius ``H`` for one block (``dim = n`` for A, ``m`` for B)."""
    if theta < 0:
        raise ValueError("theta must be >= 0")
    c = theta + dim * p.gamma * p.big_m ** 2
    scale = (1.0 + p.gamma) * p.n0
    return math.sqrt(c / scale) + math.sqrt(2.0 * c * math.log(1.0 / p.delta) / scale)


@dataclass(frozen=True)
class Interval:
    center: float
    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("radius must be >= 0")

    @property
    def lo(self) -> float:
        return self.center - self.radius

    @property
    def hi(self) -> float:
        return self.center + self.radius

    def contains(self, x: float) -> bool:
        return abs(x - self.center) <= self.radius

    def to_dict(self):
        return {"center": float(self.center), "radius": float(self.radius)}


def _grid(centers: np.ndarray, radius: float):
    return [[Interval(float(c), radius) for c in row] for row in centers]


def _check(est: Estimate, p: BoundParams):
    if est.a_hat.shape != (p.n, p.n) or est.b_hat.shape != (p.n, p.m):
        raise DimensionMismatch("estimate dimensions do not match bound parameters")


def radii(p: BoundParams):
    """``(sqrt((1+g) H_A), sqrt((1+g) H_B))``, the shared interval radii."""
    ha = h_bound(theta_a(p), p.n, p)
    hb = h_bound(theta_b(p), p.m, p)
    return math.sqrt((1 + p.gamma) * ha), math.sqrt((1 + p.gamma) * hb)


def error_intervals(est: Estimate, p: BoundParams):
    """Intervals for ``dA = A - A_hat`` and ``dB = B - B_hat``, entrywise."""
    _check(est, p)
    ra, rb = radii(p)
    return _grid(p.gamma * est.a_hat, ra), _grid(p.gamma * est.b_hat, rb)


def parameter_interval_a(est: Estimate, p: BoundParams):
    """Intervals for the true ``A`` entries: centre ``(1+g) A_hat``."""
    _check(est, p)
    ra, _ = radii(p)
    return _grid((1 + p.gamma) * est.a_hat, ra)


def epsilon_norm_bounds(est: Estimate, p: BoundParams):
    _check(est, p)
    ra, rb = radii(p)
    eps_a = math.sqrt(float(np.sum((np.abs(p.gamma * est.a_hat) + ra) ** 2)))
    # B is n x m: sum over its m columns
    eps_b = math.sqrt(float(np.sum((np.abs(p.gamma * est.b_hat) + rb) ** 2)))
    return eps_a, eps_b


@dataclass(frozen=True)
class BoundResult:
    theta_a: float
    theta_b: float
    h_a: float
    h_b: float
    delta_a_intervals: list
    delta_b_intervals: list
    a_intervals: list
    eps_a: float
    eps_b: float

    @property
    def radius_a(self) -> float:
        return self.a_intervals[0][0].radius

    def a_centers(self) -> np.ndarray:
        return np.array([[iv.center for iv in row] for row in self.a_intervals])

    def to_dict(self):
        grid = lambda g: [[iv.to_dict() for iv in row] for row in g]  # noqa: E731
        return {
            "theta_a": self.theta_a,
            "theta_b": self.theta_b,
            "h_a": self.h_a,
            "h_b": self.h_b,
            "eps_a": self.eps_a,
            "eps_b": self.eps_b,
            "delta_a_intervals": grid(self.delta_a_intervals),
            "delta_b_intervals": grid(self.delta_b_intervals),
            "a_intervals": grid(self.a_intervals),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def compute_bounds(est: Estimate, p: BoundParams) -> BoundResult:
    ta, tb = theta_a(p), theta_b(p)
    da, db = error_intervals(est, p)
    ea, eb = epsilon_norm_bounds(est, p)
    return BoundResult(
        theta_a=ta,
        theta_b=tb,
        h_a=h_bound(ta, p.n, p),
        h_b=h_bound(tb, p.m, p),
        delta_a_intervals=da,
        delta_b_intervals=db,
        a_intervals=parameter_interval_a(est, p),
        eps_a=ea,
        eps_b=eb,
    )

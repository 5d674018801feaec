"""Estimating ``[A, B]`` from rollout data.

The production estimator minimises, row by row,

    0.5 * ||w||^2 + 1/(2 gamma) * sum_j (f_j - w z_j)^2

whose optimum is ``w = f z' (gamma I + z z')^-1``. All rows share the same
Gram factorisation so they are solved jointly. :func:`solve_dual_qp` keeps
the Lagrangian dual as an independent iterative route used only for
verification.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import linalg as sla

from .exceptions import DimensionMismatch, EmptyData, NonConvergence, SingularGram
from .lti import RolloutSet, SystemMatrices

__all__ = [
    "Assembly",
    "Mode",
    "Scaling",
    "RegressionData",
    "Estimate",
    "assemble_regression_data",
    "estimate_ols",
    "estimate_svr",
    "solve_dual_qp",
    "rmse",
]

_RCOND_MIN = 1e-12


class Assembly(str, Enum):
    ALL_DATA = "ALL_DATA"
    FINAL_DATA = "FINAL_DATA"


class Mode(str, Enum):
    OLS = "OLS"
    SVR = "SVR"
    SVR_SCALED = "SVR_SCALED"


class Scaling(str, Enum):
    RAW = "RAW"
    GRAM_SCALED = "GRAM_SCALED"


@dataclass(frozen=True)
class RegressionData:
    z: np.ndarray  # (n + m, n0) regressors [x_{k-1}; u_{k-1}]
    f: np.ndarray  # (n, n0) targets x_k
    n: int
    m: int

    def __post_init__(self):
        if self.z.shape[1] != self.f.shape[1]:
            raise DimensionMismatch("z and f must have the same number of columns")
        if self.z.shape[0] != self.n + self.m or self.f.shape[0] != self.n:
            raise DimensionMismatch("z must have n+m rows and f must have n rows")

    @property
    def n0(self) -> int:
        return self.z.shape[1]


@dataclass(frozen=True)
class Estimate:
    a_hat: np.ndarray
    b_hat: np.ndarray
    gamma: float
    mode: Mode
    assembly: Assembly = Assembly.ALL_DATA

    def __post_init__(self):
        if self.mode == Mode.OLS and self.gamma != 0:
            raise ValueError("OLS estimates carry gamma = 0")

    @property
    def n(self) -> int:
        return self.a_hat.shape[0]

    @property
    def m(self) -> int:
        return self.b_hat.shape[1]

    def to_dict(self):
        return {
            "mode": Mode(self.mode).value,
            "gamma": float(self.gamma),
            "assembly": Assembly(self.assembly).value,
            "a_hat": self.a_hat.tolist(),
            "b_hat": self.b_hat.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["a_hat"], dtype=float), np.asarray(d["b_hat"], dtype=float),
                   float(d["gamma"]), Mode(d["mode"]), Assembly(d["assembly"]))


def assemble_regression_data(data: RolloutSet, mode: Assembly = Assembly.ALL_DATA) -> RegressionData:
    """Stack ``(z_k, x_k)`` pairs from every rollout.

    ``ALL_DATA`` uses ``k = 2..t0`` (the ``k = 1`` pair has ``x_0 = 0`` and
    is dropped), giving ``(t0 - 1) * N`` columns. ``FINAL_DATA`` uses only
    ``k = t0``.
    """
    mode = Assembly(mode)
    x = data.states_array()   # (N, t0+1, n)
    u = data.inputs_array()   # (N, t0, m)
    t0 = data.t0
    ks = range(2, t0 + 1) if mode == Assembly.ALL_DATA else [t0]
    ks = list(ks)
    if not ks or x.shape[0] == 0:
        raise EmptyData("no regression pairs available")
    # column order: time-major, then rollout
    prev_x = np.concatenate([x[:, k - 1] for k in ks], axis=0)
    prev_u = np.concatenate([u[:, k - 1] for k in ks], axis=0)
    target = np.concatenate([x[:, k] for k in ks], axis=0)
    z = np.hstack([prev_x, prev_u]).T
    f = target.T
    n, m = x.shape[2], u.shape[2]
    return RegressionData(np.ascontiguousarray(z), np.ascontiguousarray(f), n, m)


def _split(data: RegressionData, w: np.ndarray):
    return np.ascontiguousarray(w[:, :data.n]), np.ascontiguousarray(w[:, data.n:])


def estimate_ols(data: RegressionData) -> Estimate:
    if data.n0 < data.n + data.m:
        raise SingularGram("z z' is singular: fewer samples than regressors")
    sv = np.linalg.svd(data.z, compute_uv=False)
    # reciprocal condition of z z' is (s_min / s_max)^2
    if sv[0] == 0 or (sv[-1] / sv[0]) ** 2 < _RCOND_MIN:
        raise SingularGram("z z' is numerically singular; need more excitation or samples")
    # least squares on z' avoids squaring the condition number
    w = np.linalg.lstsq(data.z.T, data.f.T, rcond=None)[0].T
    a, b = _split(data, w)
    return Estimate(a, b, 0.0, Mode.OLS)


def effective_penalty(data: RegressionData, gamma: float, scaling: Scaling = Scaling.RAW) -> float:
    """Ridge weight actually added to the Gram diagonal."""
    if Scaling(scaling) == Scaling.GRAM_SCALED:
        return gamma * float(np.trace(data.z @ data.z.T)) / (data.n + data.m)
    return float(gamma)


def estimate_svr(data: RegressionData, gamma: float, scaling: Scaling = Scaling.RAW) -> Estimate:
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    scaling = Scaling(scaling)
    g = data.z @ data.z.T
    pen = effective_penalty(data, gamma, scaling)
    reg = g + pen * np.eye(g.shape[0])
    try:
        factor = sla.cho_factor(reg, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularGram("gamma' I + z z' is not positive definite") from exc
    diag = np.diag(factor[0])
    if diag.min() <= 0 or (diag.min() / diag.max()) ** 2 < _RCOND_MIN:
        raise SingularGram("gamma' I + z z' is numerically singular")
    w = sla.cho_solve(factor, data.z @ data.f.T, check_finite=False).T
    a, b = _split(data, w)
    mode = Mode.SVR if scaling == Scaling.RAW else Mode.SVR_SCALED
    return Estimate(a, b, float(gamma), mode)


def solve_dual_qp(data: RegressionData, row: int, gamma: float, *, grad_tol: float = 1e-8,
                  max_iters: int = 200_000):
    """Dual route for one row of ``[A, B]``.

    Maximises ``-0.5 a'(z'z + gamma I)a + f_i a`` over the multipliers by
    projected gradient ascent and returns ``(alpha, w_row)`` with
    ``w_row = z alpha``. With the squared slack penalty the multipliers are
    unconstrained (the split ``alpha = alpha+ - alpha-`` covers both signs),
    so the projection is the identity; ``gamma I`` is the contribution of
    the eliminated slacks.
    """
    if not gamma > 0:
        raise ValueError("gamma must be > 0")
    z = data.z
    fi = data.f[row]
    q = z.T @ z + gamma * np.eye(data.n0)
    lip = float(np.linalg.eigvalsh(q)[-1])
    lo = gamma
    alpha = np.zeros(data.n0)
    grad = fi - q @ alpha
    if np.linalg.norm(grad) < grad_tol:
        return alpha, z @ alpha
    # Nesterov-accelerated gradient ascent; restart on non-monotone steps
    step = 1.0 / (lip + 1e-12)
    kappa = lip / lo
    mom = (np.sqrt(kappa) - 1.0) / (np.sqrt(kappa) + 1.0)
    prev = alpha.copy()
    for _ in range(max_iters):
        y = alpha + mom * (alpha - prev)
        gy = fi - q @ y
        prev = alpha
        alpha = y + step * gy
        grad = fi - q @ alpha
        gn = np.linalg.norm(grad)
        if gn < grad_tol:
            return alpha, z @ alpha
    raise NonConvergence("dual gradient ascent did not converge")


def rmse(est: Estimate, truth: SystemMatrices):
    if est.a_hat.shape != truth.a.shape or est.b_hat.shape != truth.b.shape:
        raise DimensionMismatch("estimate and truth dimensions differ")
    ra = float(np.sqrt(np.mean((est.a_hat - truth.a) ** 2)))
    rb = float(np.sqrt(np.mean((est.b_hat - truth.b) ** 2)))
    return ra, rb

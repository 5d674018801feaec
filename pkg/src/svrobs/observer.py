"""Observer gain design certified over an interval matrix.

A gain ``L`` is accepted when every Gershgorin disc of ``A - L C`` stays
strictly inside the unit circle for *every* ``A`` in the entrywise box
``|A_ij - center_ij| <= radius``. Each disc centre may move by ``radius``
and each off-diagonal term contributes up to ``|center_ij - (LC)_ij| +
radius``, so the certified row slack is::

    1 - |c_ii - (LC)_ii| - radius - sum_{j != i} (|c_ij - (LC)_ij| + radius)
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionMismatch, RankDeficientC
from .lti import NoiseSpec, RngStream, SystemMatrices
from .numerics import DEFAULT_TOL, SolverTolerances, solve_dare, spectral_radius

__all__ = [
    "IntervalMatrix",
    "StabilityCertificate",
    "DEFAULT_TARGETS",
    "gershgorin_feasible",
    "design_gain",
    "verify_stability_exhaustive",
    "kalman_gain",
]

# 0, +-0.05, ..., +-0.9 in search order
DEFAULT_TARGETS = tuple([0.0] + [s * round(0.05 * k, 10) for k in range(1, 19) for s in (1, -1)])


@dataclass(frozen=True)
class IntervalMatrix:
    centers: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.array(self.centers, dtype=float)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise DimensionMismatch("interval centres must be a square matrix")
        if not self.radius >= 0:
            raise ValueError("radius must be >= 0")
        c.setflags(write=False)
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def n(self) -> int:
        return self.centers.shape[0]

    def member(self, x) -> bool:
        return bool(np.all(np.abs(np.asarray(x) - self.centers) <= self.radius))

    def corners(self):
        """All ``2**(n*n)`` vertex matrices, as a ``(2**(n*n), n, n)`` array."""
        n = self.n
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=n * n)))
        return self.centers + self.radius * signs.reshape(-1, n, n)

    def to_dict(self):
        return {"centers": self.centers.tolist(), "radius": self.radius}

    @classmethod
    def from_bounds(cls, bound_result) -> "IntervalMatrix":
        return cls(bound_result.a_centers(), bound_result.radius_a)


@dataclass(frozen=True)
class StabilityCertificate:
    gain: np.ndarray
    feasible: bool
    per_row_margin: np.ndarray
    confidence: float = float("nan")
    interval: IntervalMatrix | None = None
    target: float | None = None

    @property
    def min_margin(self) -> float:
        return float(np.min(self.per_row_margin))

    def to_dict(self):
        return {
            "gain": self.gain.tolist(),
            "feasible": bool(self.feasible),
            "per_row_margin": [float(v) for v in self.per_row_margin],
            "confidence": self.confidence,
            "target": self.target,
            "interval": None if self.interval is None else self.interval.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def gershgorin_feasible(l, iv: IntervalMatrix, c, confidence: float = float("nan")) -> StabilityCertificate:
    l = np.asarray(l, dtype=float)
    c = np.asarray(c, dtype=float)
    n = iv.n
    if c.ndim != 2 or c.shape[1] != n or l.shape != (n, c.shape[0]):
        raise DimensionMismatch("need L (n x p), C (p x n) consistent with the interval")
    d = np.abs(iv.centers - l @ c)
    diag = np.diag(d)
    off = d.sum(axis=1) - diag + (n - 1) * iv.radius
    margin = 1.0 - diag - iv.radius - off
    # strict: a zero-slack disc may touch the unit circle
    feasible = bool(np.all(diag < 1.0) and np.all(margin > 0.0))
    return StabilityCertificate(l.copy(), feasible, margin, confidence, iv)


def _right_pinv(c: np.ndarray) -> np.ndarray:
    p, n = c.shape
    if p > n or np.linalg.matrix_rank(c) < p:
        raise RankDeficientC("C must have full row rank")
    return c.T @ np.linalg.inv(c @ c.T)


def design_gain(iv: IntervalMatrix, c, targets=DEFAULT_TARGETS, confidence: float = float("nan")):
    """Search ``L = (centers - tau I) C^+`` over ``targets``.

    Returns the feasible certificate with the largest minimum row margin
    (ties: smaller ``|tau|``, then search order), or ``None`` if no
    candidate passes.
    """
    c = np.asarray(c, dtype=float)
    cp = _right_pinv(c)
    eye = np.eye(iv.n)
    best = None
    best_key = None
    for order, tau in enumerate(targets):
        cert = gershgorin_feasible((iv.centers - tau * eye) @ cp, iv, c, confidence)
        if not cert.feasible:
            continue
        key = (-cert.min_margin, abs(tau), order)
        if best_key is None or key < best_key:
            best_key = key
            best = StabilityCertificate(cert.gain, True, cert.per_row_margin, confidence, iv, float(tau))
    return best


def verify_stability_exhaustive(cert: StabilityCertificate, iv: IntervalMatrix, c, samples: int,
                                stream: RngStream) -> float:
    """Worst spectral radius of ``A - L C`` over box samples (plus corners if n <= 3).

    Uses LAPACK eigenvalues so the check stays independent of the QR kernel.
    """
    if not cert.feasible:
        raise ValueError("certificate is not feasible")
    lc = cert.gain @ np.asarray(c, dtype=float)
    mats = []
    if iv.n <= 3:
        mats.append(iv.corners())
    if samples > 0:
        u = stream.uniforms(samples * iv.n * iv.n).reshape(samples, iv.n, iv.n)
        mats.append(iv.centers + iv.radius * (2.0 * u - 1.0))
    if not mats:
        mats.append(iv.centers[None])
    stack = np.concatenate(mats) - lc
    return float(np.max(np.abs(np.linalg.eigvals(stack))))


def kalman_gain(sys: SystemMatrices, noise: NoiseSpec, tol: SolverTolerances = DEFAULT_TOL) -> np.ndarray:
    n, p = sys.n, sys.p
    _, k = solve_dare(sys.a, sys.c, noise.sigma_w ** 2 * np.eye(n), noise.sigma_v ** 2 * np.eye(p), tol)
    return k

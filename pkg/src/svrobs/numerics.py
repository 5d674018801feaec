"""Dense real-matrix kernel.

Matrices are plain ``float64`` numpy arrays. :func:`as_matrix` is the one
entry point that validates shape and finiteness; everything downstream
assumes it has been applied.

Eigenvalues come from a Householder reduction to upper Hessenberg form
followed by the Francis double-shift QR iteration, so complex conjugate
pairs are handled in real arithmetic and only moduli leave this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    DimensionMismatch,
    NonConvergence,
    SingularInnovation,
    UnstableDynamics,
)

__all__ = [
    "SolverTolerances",
    "DEFAULT_TOL",
    "as_matrix",
    "hessenberg",
    "eigenvalues",
    "spectral_radius",
    "spectral_norm",
    "solve_discrete_lyapunov",
    "solve_dare",
]


@dataclass(frozen=True)
class SolverTolerances:
    eig_tol: float = 1e-10
    riccati_tol: float = 1e-12
    max_iters: int = 100_000

    def __post_init__(self):
        if not (self.eig_tol > 0 and self.riccati_tol > 0):
            raise ValueError("tolerances must be strictly positive")
        if int(self.max_iters) < 1:
            raise ValueError("max_iters must be >= 1")

    def to_dict(self):
        return {
            "eig_tol": self.eig_tol,
            "riccati_tol": self.riccati_tol,
            "max_iters": self.max_iters,
        }


DEFAULT_TOL = SolverTolerances()


def as_matrix(m, name="matrix", *, rows=None, cols=None) -> np.ndarray:
    """Return ``m`` as a finite 2-D float64 array, copying if needed.

    Scalars become 1x1 and 1-D inputs become column vectors.
    """
    arr = np.array(m, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise DimensionMismatch(f"{name} must be non-empty")
    if rows is not None and arr.shape[0] != rows:
        raise DimensionMismatch(f"{name} must have {rows} rows, got {arr.shape[0]}")
    if cols is not None and arr.shape[1] != cols:
        raise DimensionMismatch(f"{name} must have {cols} cols, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def _require_square(m: np.ndarray, name: str):
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {m.shape}")


def hessenberg(m) -> np.ndarray:
    """Upper Hessenberg matrix orthogonally similar to ``m`` (Householder)."""
    h = np.array(m, dtype=np.float64)
    _require_square(h, "m")
    n = h.shape[0]
    for k in range(n - 2):
        x = h[k + 1:, k].copy()
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        if x[0] > 0:
            alpha = -alpha
        v = x
        v[0] -= alpha
        vnorm = np.linalg.norm(v)
        if vnorm == 0.0:
            continue
        v /= vnorm
        h[k + 1:, k:] -= 2.0 * np.outer(v, v @ h[k + 1:, k:])
        h[:, k + 1:] -= 2.0 * np.outer(h[:, k + 1:] @ v, v)
        h[k + 2:, k] = 0.0
    return h


def _hqr(h: np.ndarray, max_iters: int):
    """Francis double-shift QR on an upper Hessenberg matrix.

    Returns ``(wr, wi)``, real and imaginary parts of the eigenvalues.
    Works in 1-based indexing on a padded list-of-lists for scalar speed.
    """
    n = h.shape[0]
    a = [[0.0] * (n + 1)] + [[0.0] + [float(v) for v in row] for row in h]
    wr = [0.0] * (n + 1)
    wi = [0.0] * (n + 1)

    anorm = 0.0
    for i in range(1, n + 1):
        for j in range(max(i - 1, 1), n + 1):
            anorm += abs(a[i][j])

    nn = n
    t = 0.0
    total = 0
    while nn >= 1:
        its = 0
        while True:
            l = 1
            for ll in range(nn, 1, -1):
                s = abs(a[ll - 1][ll - 1]) + abs(a[ll][ll])
                if s == 0.0:
                    s = anorm
                if abs(a[ll][ll - 1]) + s == s:
                    a[ll][ll - 1] = 0.0
                    l = ll
                    break
            x = a[nn][nn]
            if l == nn:
                wr[nn] = x + t
                wi[nn] = 0.0
                nn -= 1
                break
            y = a[nn - 1][nn - 1]
            w = a[nn][nn - 1] * a[nn - 1][nn]
            if l == nn - 1:
                p = 0.5 * (y - x)
                q = p * p + w
                z = math.sqrt(abs(q))
                x += t
                if q >= 0.0:
                    z = p + math.copysign(z, p)
                    wr[nn - 1] = wr[nn] = x + z
                    if z != 0.0:
                        wr[nn] = x - w / z
                    wi[nn - 1] = wi[nn] = 0.0
                else:
                    wr[nn - 1] = wr[nn] = x + p
                    wi[nn - 1] = -z
                    wi[nn] = z
                nn -= 2
                break

            if its >= 60 or total >= max_iters:
                raise NonConvergence("QR iteration did not converge")
            if its in (10, 20, 30, 40, 50):
                # exceptional shift
                t += x
                for i in range(1, nn + 1):
                    a[i][i] -= x
                s = abs(a[nn][nn - 1]) + abs(a[nn - 1][nn - 2])
                x = y = 0.75 * s
                w = -0.4375 * s * s
            its += 1
            total += 1

            m = nn - 2
            while m >= l:
                z = a[m][m]
                r = x - z
                s = y - z
                p = (r * s - w) / a[m + 1][m] + a[m][m + 1]
                q = a[m + 1][m + 1] - z - r - s
                r = a[m + 2][m + 1]
                s = abs(p) + abs(q) + abs(r)
                p /= s
                q /= s
                r /= s
                if m == l:
                    break
                u = abs(a[m][m - 1]) * (abs(q) + abs(r))
                v = abs(p) * (abs(a[m - 1][m - 1]) + abs(z) + abs(a[m + 1][m + 1]))
                if u + v == v:
                    break
                m -= 1

            for i in range(m + 2, nn + 1):
                a[i][i - 2] = 0.0
                if i != m + 2:
                    a[i][i - 3] = 0.0

            for k in range(m, nn):
                if k != m:
                    p = a[k][k - 1]
                    q = a[k + 1][k - 1]
                    r = 0.0
                    if k != nn - 1:
                        r = a[k + 2][k - 1]
                    x = abs(p) + abs(q) + abs(r)
                    if x != 0.0:
                        p /= x
                        q /= x
                        r /= x
                s = math.copysign(math.sqrt(p * p + q * q + r * r), p)
                if s == 0.0:
                    continue
                if k == m:
                    if l != m:
                        a[k][k - 1] = -a[k][k - 1]
                else:
                    a[k][k - 1] = -s * x
                p += s
                x = p / s
                y = q / s
                z = r / s
                q /= p
                r /= p
                for j in range(k, nn + 1):
                    p = a[k][j] + q * a[k + 1][j]
                    if k != nn - 1:
                        p += r * a[k + 2][j]
                        a[k + 2][j] -= p * z
                    a[k + 1][j] -= p * y
                    a[k][j] -= p * x
                mmin = nn if nn < k + 3 else k + 3
                for i in range(l, mmin + 1):
                    p = x * a[i][k] + y * a[i][k + 1]
                    if k != nn - 1:
                        p += z * a[i][k + 2]
                        a[i][k + 2] -= p * r
                    a[i][k + 1] -= p * q
                    a[i][k] -= p
    return np.array(wr[1:]), np.array(wi[1:])


def _pow2_scale(arr: np.ndarray) -> float:
    """Power of two near ``max|arr|`` (exact rescaling, keeps tiny/huge inputs in range)."""
    big = float(np.max(np.abs(arr))) if arr.size else 0.0
    if big == 0.0:
        return 0.0
    return math.ldexp(1.0, math.frexp(big)[1])


def eigenvalues(m, tol: SolverTolerances = DEFAULT_TOL):
    """Eigenvalues of a real square matrix as ``(real_parts, imag_parts)``."""
    arr = np.asarray(m, dtype=np.float64)
    _require_square(arr, "m")
    if arr.shape[0] == 1:
        return arr[0].copy(), np.zeros(1)
    scale = _pow2_scale(arr)
    if scale == 0.0:
        n = arr.shape[0]
        return np.zeros(n), np.zeros(n)
    wr, wi = _hqr(hessenberg(arr / scale), tol.max_iters)
    return wr * scale, wi * scale


def spectral_radius(m, tol: SolverTolerances = DEFAULT_TOL) -> float:
    wr, wi = eigenvalues(m, tol)
    return float(np.max(np.hypot(wr, wi)))


def spectral_norm(m, tol: SolverTolerances = DEFAULT_TOL) -> float:
    """Largest singular value by power iteration on ``m.T @ m``."""
    arr = np.asarray(m, dtype=np.float64)
    scale = _pow2_scale(arr)
    if scale == 0.0:
        return 0.0
    return scale * _power_norm(arr / scale, tol)


def _power_norm(arr: np.ndarray, tol: SolverTolerances) -> float:
    g = arr.T @ arr
    n = g.shape[0]
    # deterministic start with distinct weights so it is unlikely to be
    # orthogonal to the dominant eigenvector
    v = g @ (1.0 + np.arange(n) * 0.6180339887498949)
    if not np.any(v):
        v = g[:, np.argmax(np.abs(np.diag(g)))].copy()
    v /= np.linalg.norm(v)
    lam = float(v @ g @ v)
    for _ in range(tol.max_iters):
        w = g @ v
        wn = np.linalg.norm(w)
        if wn == 0.0:
            return math.sqrt(max(lam, 0.0))
        v = w / wn
        new = float(v @ g @ v)
        if abs(new - lam) <= tol.eig_tol * 1e-2 * abs(new):
            return math.sqrt(max(new, 0.0))
        lam = new
    raise NonConvergence("power iteration did not converge")


def _lyap_doubling(a: np.ndarray, q: np.ndarray, tol: SolverTolerances) -> np.ndarray:
    # works on stacked (..., n, n) inputs
    p = q.copy()
    ak = a.copy()
    for _ in range(tol.max_iters):
        incr = ak @ p @ np.swapaxes(ak, -1, -2)
        p = p + incr
        ak = ak @ ak
        step = np.sqrt(np.sum(incr * incr, axis=(-2, -1)))
        if np.all(step < tol.riccati_tol):
            return 0.5 * (p + np.swapaxes(p, -1, -2))
    raise NonConvergence("Lyapunov doubling did not converge")


def solve_discrete_lyapunov(a, q, tol: SolverTolerances = DEFAULT_TOL) -> np.ndarray:
    """Solve ``P = a P a^T + q`` for stable ``a`` by doubling."""
    a = np.asarray(a, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    _require_square(a, "a")
    if q.shape != a.shape:
        raise DimensionMismatch(f"q shape {q.shape} does not match a shape {a.shape}")
    if spectral_radius(a, tol) >= 1.0:
        raise UnstableDynamics("Lyapunov equation requires spectral radius < 1")
    return _lyap_doubling(a, q, tol)


def solve_discrete_lyapunov_batch(a, q, tol: SolverTolerances = DEFAULT_TOL) -> np.ndarray:
    """Stacked variant for ``(k, n, n)`` inputs; caller guarantees stability."""
    return _lyap_doubling(np.asarray(a, dtype=np.float64), np.asarray(q, dtype=np.float64), tol)


def solve_dare(a, c, q, r, tol: SolverTolerances = DEFAULT_TOL):
    """Filtering DARE by fixed-point iteration from ``P0 = q``.

    Returns ``(P, K)`` with ``P = aPa' - aPc'(cPc' + r)^-1 cPa' + q`` and
    predictor gain ``K = aPc'(cPc' + r)^-1``.
    """
    a = np.asarray(a, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    _require_square(a, "a")
    n = a.shape[0]
    if c.ndim != 2 or c.shape[1] != n:
        raise DimensionMismatch(f"c must have {n} columns, got shape {c.shape}")
    p_out = c.shape[0]
    if q.shape != (n, n) or r.shape != (p_out, p_out):
        raise DimensionMismatch("q must be n x n and r must be p x p")

    def gain(p):
        s = c @ p @ c.T + r
        s = 0.5 * (s + s.T)
        if not np.all(np.isfinite(s)) or np.linalg.cond(s) > 1e14:
            raise SingularInnovation("innovation covariance c P c' + r is singular")
        return np.linalg.solve(s, c @ p @ a.T).T

    p = q.copy()
    for _ in range(tol.max_iters):
        k = gain(p)
        p_next = a @ p @ a.T - k @ c @ p @ a.T + q
        p_next = 0.5 * (p_next + p_next.T)
        if not np.all(np.isfinite(p_next)):
            raise NonConvergence("Riccati iteration diverged")
        step = np.linalg.norm(p_next - p, "fro")
        p = p_next
        if step < tol.riccati_tol * max(1.0, np.linalg.norm(p, "fro")):
            return p, gain(p)
    raise NonConvergence("Riccati iteration did not converge")

"""Observer performance: Monte Carlo mean-square error, system norms and bounds.

The observer runs on the estimated model,

    xt_{k+1} = A_hat xt_k + B_hat u_k + L (y_k - C xt_k),

so the error ``e = x - xt`` obeys

    e_{k+1} = (A_hat - L C) e_k + (A - A_hat) x_k + (B - B_hat) u_k + w_k - L v_k.

The batched simulator advances many (estimate, gain) pairs at once; pairs
that share a noise stream also share the true trajectory, which gives
common random numbers across estimator settings.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .estimator import Estimate
from .exceptions import DimensionMismatch, PremiseViolated, UnstableDynamics, UnstableLoop
from .lti import NoiseSpec, RngStream, SystemMatrices, gaussian
from .numerics import DEFAULT_TOL, SolverTolerances, solve_discrete_lyapunov, spectral_norm, spectral_radius

__all__ = [
    "ObserverLoop",
    "TransferSpec",
    "PerformanceReport",
    "simulate_observer",
    "simulate_observer_batch",
    "h2_norm",
    "hinf_norm",
    "truth_hinf_norms",
    "j_bound_terms",
    "j_upper_bound",
    "j_opt_bound",
    "default_regulation_const",
    "evaluate_loop",
]

N_BATCHES = 20
_CHUNK = 1000
_GRID = 4096
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
# sub-stream labels inside a simulation stream
_U, _W, _V = 1, 2, 3


@dataclass(frozen=True)
class ObserverLoop:
    truth: SystemMatrices
    est: Estimate
    gain: np.ndarray
    noise: NoiseSpec

    def __post_init__(self):
        g = np.asarray(self.gain, dtype=float)
        if g.shape != (self.truth.n, self.truth.p):
            raise DimensionMismatch(f"gain must be {self.truth.n} x {self.truth.p}, got {g.shape}")
        if self.est.a_hat.shape != self.truth.a.shape or self.est.b_hat.shape != self.truth.b.shape:
            raise DimensionMismatch("estimate dimensions do not match the true system")
        object.__setattr__(self, "gain", g)

    def true_error_matrix(self) -> np.ndarray:
        return self.truth.a - self.gain @ self.truth.c

    def observer_matrix(self) -> np.ndarray:
        return self.est.a_hat - self.gain @ self.truth.c


@dataclass(frozen=True)
class TransferSpec:
    """``c_out (zI - a_cl)^-1 b_in + d``."""

    a_cl: np.ndarray
    b_in: np.ndarray
    c_out: np.ndarray | None = None
    d: np.ndarray | None = None

    def __post_init__(self):
        a = np.asarray(self.a_cl, dtype=float)
        b = np.asarray(self.b_in, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or b.ndim != 2 or b.shape[0] != a.shape[0]:
            raise DimensionMismatch("a_cl must be square and b_in must share its row count")
        c = np.eye(a.shape[0]) if self.c_out is None else np.asarray(self.c_out, dtype=float)
        if c.ndim != 2 or c.shape[1] != a.shape[0]:
            raise DimensionMismatch("c_out columns must match a_cl")
        d = np.zeros((c.shape[0], b.shape[1])) if self.d is None else np.asarray(self.d, dtype=float)
        if d.shape != (c.shape[0], b.shape[1]):
            raise DimensionMismatch("d must be (outputs x inputs)")
        for name, v in (("a_cl", a), ("b_in", b), ("c_out", c), ("d", d)):
            object.__setattr__(self, name, v)

    @classmethod
    def stacked(cls, a, b) -> "TransferSpec":
        """``[(zI - a)^-1 b; I]``, the response stacked over an identity."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        n, k = b.shape
        c = np.vstack([np.eye(n), np.zeros((k, n))])
        d = np.vstack([np.zeros((n, k)), np.eye(k)])
        return cls(a, b, c, d)


@dataclass(frozen=True)
class PerformanceReport:
    j_mc: float
    j_mc_stderr: float
    j_bound: float | None
    j_opt_bound: float | None
    eps_a: float
    eps_b: float
    eps_l: float
    eps1: float
    eps2: float
    regulation_const: float | None
    horizon: int
    burn_in: int
    seed: int
    bound_terms: tuple = field(default=())
    notes: tuple = field(default=())

    def to_dict(self):
        d = {k: getattr(self, k) for k in (
            "j_mc", "j_mc_stderr", "j_bound", "j_opt_bound", "eps_a", "eps_b", "eps_l", "eps1", "eps2",
            "regulation_const", "horizon", "burn_in", "seed")}
        d["bound_terms"] = list(self.bound_terms)
        d["notes"] = list(self.notes)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


# ---------------------------------------------------------------- simulation

def _batch_means(sq: np.ndarray):
    """Mean and batch-means standard error along the last axis."""
    t = sq.shape[-1]
    nb = min(N_BATCHES, t)
    size = t // nb
    means = sq[..., : nb * size].reshape(*sq.shape[:-1], nb, size).mean(axis=-1)
    j = sq.mean(axis=-1)
    if nb < 2:
        return j, np.full_like(j, np.nan)
    return j, means.std(axis=-1, ddof=1) / math.sqrt(nb)


def simulate_observer_batch(truth: SystemMatrices, a_hats, b_hats, gains, noise: NoiseSpec,
                            horizon: int, burn_in: int, streams, stream_index=None):
    """Run ``B`` observers against the truth over ``horizon`` steps.

    Parameters
    ----------
    a_hats, b_hats, gains : arrays of shape (B, n, n), (B, n, m), (B, n, p)
    streams : sequence of RngStream, one per distinct noise realisation
    stream_index : int array (B,), which stream drives each observer
        (defaults to ``arange(B)``)

    Returns
    -------
    j, stderr : arrays (B,)
        Time average of ``||e_k||^2`` for ``burn_in < k <= horizon``. Entries
        whose observer or error dynamics are not contractive are NaN.
    stable : bool array (B,)
    """
    a_hats = np.asarray(a_hats, dtype=float)
    b_hats = np.asarray(b_hats, dtype=float)
    gains = np.asarray(gains, dtype=float)
    nb = a_hats.shape[0]
    n, m, p = truth.n, truth.m, truth.p
    if a_hats.shape != (nb, n, n) or b_hats.shape != (nb, n, m) or gains.shape != (nb, n, p):
        raise DimensionMismatch("batched estimates or gains do not match the system")
    if horizon <= burn_in or burn_in < 0:
        raise ValueError("need 0 <= burn_in < horizon")
    idx = np.arange(nb) if stream_index is None else np.asarray(stream_index, dtype=int)
    ns = len(streams)
    if idx.shape != (nb,) or (nb and (idx.min() < 0 or idx.max() >= ns)):
        raise ValueError("stream_index must map each observer to a stream")

    c = truth.c
    obs = a_hats - gains @ c
    err_true = truth.a - gains @ c
    stable = np.array([max(np.abs(np.linalg.eigvals(obs[i])).max(),
                           np.abs(np.linalg.eigvals(err_true[i])).max()) < 1.0 for i in range(nb)],
                      dtype=bool)
    # divergent entries are reported as NaN; freeze them so they cannot overflow
    obs = np.where(stable[:, None, None], obs, 0.0)
    da = truth.a - a_hats
    db = truth.b - b_hats

    x = np.zeros((ns, n))
    e = np.zeros((nb, n))
    kept = horizon - burn_in
    sq = np.empty((nb, kept))
    for start in range(0, horizon, _CHUNK):
        length = min(_CHUNK, horizon - start)
        ch = start // _CHUNK
        u = np.stack([gaussian(s.child(ch, _U), (length, m), noise.sigma_u) for s in streams])
        w = np.stack([gaussian(s.child(ch, _W), (length, n), noise.sigma_w) for s in streams])
        v = np.stack([gaussian(s.child(ch, _V), (length, p), noise.sigma_v) for s in streams])
        for t in range(length):
            k = start + t
            xs, us, ws, vs = x[idx], u[idx, t], w[:, t][idx], v[idx, t]
            with np.errstate(over="ignore", invalid="ignore"):
                e = (np.einsum("bij,bj->bi", obs, e) + np.einsum("bij,bj->bi", da, xs)
                     + np.einsum("bij,bj->bi", db, us) + ws - np.einsum("bij,bj->bi", gains, vs))
            x = x @ truth.a.T + u[:, t] @ truth.b.T + w[:, t]
            if k + 1 > burn_in:
                sq[:, k - burn_in] = np.einsum("bi,bi->b", e, e)
    j, se = _batch_means(sq)
    j = np.where(stable, j, np.nan)
    se = np.where(stable, se, np.nan)
    return j, se, stable


def simulate_observer(loop: ObserverLoop, horizon: int = 20000, burn_in: int = 2000,
                      stream: RngStream | None = None):
    """Monte Carlo mean-square observation error of one loop: ``(j_hat, stderr)``."""
    if horizon < 10 * burn_in:
        raise ValueError("horizon must be at least 10 * burn_in")
    if spectral_radius(loop.true_error_matrix()) >= 1.0:
        raise UnstableLoop("A - L C is not stable")
    if spectral_radius(loop.observer_matrix()) >= 1.0:
        raise UnstableLoop("A_hat - L C is not stable")
    stream = RngStream(0) if stream is None else stream
    j, se, _ = simulate_observer_batch(loop.truth, loop.est.a_hat[None], loop.est.b_hat[None],
                                       loop.gain[None], loop.noise, horizon, burn_in, [stream])
    return float(j[0]), float(se[0])


# --------------------------------------------------------------------- norms

def _require_stable(a, tol):
    if spectral_radius(a, tol) >= 1.0:
        raise UnstableDynamics("transfer function is not stable")


def h2_norm(t: TransferSpec, tol: SolverTolerances = DEFAULT_TOL) -> float:
    """``sqrt(sum_t ||Phi_t||_F^2)`` via the controllability Gramian."""
    _require_stable(t.a_cl, tol)
    p = solve_discrete_lyapunov(t.a_cl, t.b_in @ t.b_in.T, tol)
    val = float(np.trace(t.c_out @ p @ t.c_out.T)) + float(np.sum(t.d * t.d))
    return math.sqrt(max(val, 0.0))


def _sigma_max(t: TransferSpec, omegas: np.ndarray) -> np.ndarray:
    n = t.a_cl.shape[0]
    zs = np.exp(1j * np.asarray(omegas, dtype=float))
    res = zs[:, None, None] * np.eye(n) - t.a_cl
    g = t.c_out @ np.linalg.solve(res, np.broadcast_to(t.b_in, (len(zs),) + t.b_in.shape)) + t.d
    return np.linalg.svd(g, compute_uv=False)[:, 0]


def hinf_norm(t: TransferSpec, tol: SolverTolerances = DEFAULT_TOL, grid: int = _GRID,
              rel_tol: float = 1e-6) -> float:
    """Peak gain over the unit circle: grid search then golden-section refinement."""
    _require_stable(t.a_cl, tol)
    if t.b_in.size == 0 or t.c_out.size == 0:
        return 0.0
    # real coefficients: the response on [pi, 2 pi] mirrors [0, pi]
    omegas = np.linspace(0.0, math.pi, grid)
    vals = _sigma_max(t, omegas)
    i = int(np.argmax(vals))
    best = float(vals[i])
    lo = omegas[max(i - 1, 0)]
    hi = omegas[min(i + 1, grid - 1)]
    f = lambda w: float(_sigma_max(t, np.array([w]))[0])  # noqa: E731
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(200):
        if hi - lo <= 1e-12:
            break
        if f1 >= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = f(x2)
        top = max(f1, f2)
        if abs(top - best) <= rel_tol * max(best, 1e-300) * 1e-3 and hi - lo < 1e-6:
            best = max(best, top)
            break
        best = max(best, top)
    return best


# -------------------------------------------------------------------- bounds

def truth_hinf_norms(sys: SystemMatrices, k_opt, tol: SolverTolerances = DEFAULT_TOL):
    """``(||[Phi_A B; I]||_Hinf, ||[Phi_A K; I]||_Hinf)`` with ``Phi_A = (zI - A)^-1``."""
    return (hinf_norm(TransferSpec.stacked(sys.a, sys.b), tol),
            hinf_norm(TransferSpec.stacked(sys.a, np.asarray(k_opt, dtype=float)), tol))


def j_bound_terms(loop: ObserverLoop, k_opt, eps_a: float, eps_b: float,
                  tol: SolverTolerances = DEFAULT_TOL, truth_hinf=None):
    """The three summands of the mean-square error bound.

    Returns ``(terms, eps1, eps2, eps_l)``. The first term needs only the
    estimated loop; the other two need ``(zI - A)^-1`` on the unit circle,
    so they raise :class:`UnstableDynamics` when ``A`` is not stable.
    ``truth_hinf`` may carry :func:`truth_hinf_norms` when many loops share
    one true system.
    """
    k_opt = np.asarray(k_opt, dtype=float)
    if k_opt.shape != loop.gain.shape:
        raise DimensionMismatch("k_opt must have the gain's shape")
    nz = loop.noise
    obs = loop.observer_matrix()
    eps_l = spectral_norm(k_opt - loop.gain, tol)
    eps1 = max(eps_a, eps_b)
    eps2 = max(eps_a, eps_l)
    phi_w = h2_norm(TransferSpec(obs, np.eye(loop.truth.n)), tol)
    t1 = h2_norm(TransferSpec(obs, k_opt - loop.gain), tol) * nz.sigma_v
    hb, hk = truth_hinf_norms(loop.truth, k_opt, tol) if truth_hinf is None else truth_hinf
    t2 = math.sqrt(2.0) * eps1 * phi_w * hb * nz.sigma_u
    t3 = math.sqrt(2.0) * eps2 * phi_w * hk * nz.sigma_v
    return (t1, t2, t3), eps1, eps2, eps_l


def j_upper_bound(loop: ObserverLoop, k_opt, eps_a: float, eps_b: float,
                  tol: SolverTolerances = DEFAULT_TOL) -> float:
    terms, *_ = j_bound_terms(loop, k_opt, eps_a, eps_b, tol)
    return math.fsum(terms)


def _kalman_resolvent(sys: SystemMatrices, k_opt) -> TransferSpec:
    return TransferSpec(sys.a - np.asarray(k_opt, dtype=float) @ sys.c, np.eye(sys.n))


def default_regulation_const(sys: SystemMatrices, k_opt, tol: SolverTolerances = DEFAULT_TOL) -> float:
    """``2 (1 + ||K||) ||(zI - A + KC)^-1||_H2``."""
    return 2.0 * (1.0 + spectral_norm(k_opt, tol)) * h2_norm(_kalman_resolvent(sys, k_opt), tol)


def j_opt_bound(sys: SystemMatrices, k_opt, eps1: float, noise: NoiseSpec, regulation_const=None,
                tol: SolverTolerances = DEFAULT_TOL, eps_a: float | None = None) -> float:
    """Closed-form bound on the optimal observer's cost from identification error.

    ``eps_a`` (defaults to ``eps1``) is checked against the small-error
    premise ``eps_a ||(zI - A + KC)^-1||_Hinf <= 1/2``.
    """
    k_opt = np.asarray(k_opt, dtype=float)
    res = _kalman_resolvent(sys, k_opt)
    ea = eps1 if eps_a is None else eps_a
    if ea * hinf_norm(res, tol) > 0.5:
        raise PremiseViolated("identification error too large for the optimal-observer bound")
    reg = default_regulation_const(sys, k_opt, tol) if regulation_const is None else float(regulation_const)
    hb = hinf_norm(TransferSpec.stacked(sys.a, sys.b), tol)
    hk = hinf_norm(TransferSpec.stacked(sys.a, k_opt), tol)
    inner = math.sqrt(2.0) * reg * (hb * noise.sigma_u + hk * noise.sigma_v) \
        + 2.0 * h2_norm(res, tol) * noise.sigma_v
    return eps1 * inner


def evaluate_loop(loop: ObserverLoop, k_opt, eps_a: float, eps_b: float, horizon: int = 20000,
                  burn_in: int = 2000, seed: int = 0,
                  tol: SolverTolerances = DEFAULT_TOL) -> PerformanceReport:
    """Monte Carlo cost plus every bound that is defined for this loop."""
    j, se = simulate_observer(loop, horizon, burn_in, RngStream(seed))
    notes = []
    try:
        terms, eps1, eps2, eps_l = j_bound_terms(loop, k_opt, eps_a, eps_b, tol)
        j_bound = math.fsum(terms)
    except UnstableDynamics:
        obs = loop.observer_matrix()
        eps_l = spectral_norm(np.asarray(k_opt) - loop.gain, tol)
        eps1, eps2 = max(eps_a, eps_b), max(eps_a, eps_l)
        terms = (h2_norm(TransferSpec(obs, np.asarray(k_opt) - loop.gain), tol) * loop.noise.sigma_v,)
        j_bound = None
        notes.append("true A not stable: only the first bound term is defined")
    reg = None
    try:
        reg = default_regulation_const(loop.truth, k_opt, tol)
        j_opt = j_opt_bound(loop.truth, k_opt, eps1, loop.noise, reg, tol, eps_a=eps_a)
    except PremiseViolated:
        j_opt = None
        notes.append("small-error premise fails: optimal-observer bound not applicable")
    except UnstableDynamics:
        j_opt = None
        notes.append("true A not stable: optimal-observer bound not defined")
    return PerformanceReport(j, se, j_bound, j_opt, eps_a, eps_b, eps_l, eps1, eps2, reg,
                             horizon, burn_in, seed, tuple(terms), tuple(notes))

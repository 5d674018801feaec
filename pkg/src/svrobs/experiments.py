"""Experiment protocols: RMSE comparison, bound sweeps and observer evaluation.

Every random draw is keyed by ``(seed, experiment, system, cell, repeat)``
so results do not depend on scheduling. Repeats within one system reuse
nested data: the first ``N`` rollouts of the largest set are the data for
sample size ``N``. Aggregates are formed with ``math.fsum`` in a fixed order.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .bounds import BoundParams, compute_bounds, radii
from .estimator import Assembly, Scaling, assemble_regression_data, estimate_ols, estimate_svr, rmse
from .exceptions import ConfigError, UnstableDynamics
from .lti import NoiseSpec, RngStream, SystemMatrices, collect_rollouts, stable_system, unstable_system
from .observer import IntervalMatrix, design_gain, gershgorin_feasible, kalman_gain
from .performance import ObserverLoop, j_bound_terms, simulate_observer_batch, truth_hinf_norms

__all__ = [
    "ExperimentConfig",
    "SweepRow",
    "Table2Row",
    "Table2Summary",
    "load_config",
    "resolve_system",
    "run_table2",
    "run_bound_sweep",
    "run_observer_eval",
    "run_sweep",
    "rows_to_csv",
    "rows_to_json",
    "resolve_threads",
]

SYSTEMS = {"STABLE": stable_system, "UNSTABLE": unstable_system}
# experiment labels for stream derivation
_TABLE2, _BOUNDS, _OBSERVER, _SIM = 1, 2, 3, 4


@dataclass(frozen=True)
class ExperimentConfig:
    system: object = "STABLE"
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    t0: int = 11
    rollout_counts: tuple = tuple(range(10, 451, 40))
    gammas: tuple = (0.005, 0.01, 0.05, 0.1)
    table2_gamma: float = 0.05
    table2_sigma_ws: tuple = (0.1, 1.0, 10.0)
    big_m: float = 1.1
    delta: float = 0.01
    repeats: int = 45
    cost_repeats: int = 1000
    horizon: int = 20000
    burn_in: int = 2000
    unstable_horizon: int = 200
    seed: int = 0
    estimator_scaling: str = "RAW"
    assembly: str = "ALL_DATA"

    def __post_init__(self):
        if isinstance(self.noise, dict):
            object.__setattr__(self, "noise", NoiseSpec(**self.noise))
        for name in ("rollout_counts", "gammas", "table2_sigma_ws"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.t0 < 2:
            raise ConfigError("t0: must be >= 2")
        if not self.rollout_counts or any(int(n) < 1 for n in self.rollout_counts):
            raise ConfigError("rollout_counts: need positive rollout counts")
        if list(self.rollout_counts) != sorted(set(self.rollout_counts)):
            raise ConfigError("rollout_counts: must be strictly increasing")
        if not self.gammas or any(g <= 0 for g in self.gammas):
            raise ConfigError("gammas: need positive values")
        if self.table2_gamma <= 0:
            raise ConfigError("table2_gamma: must be > 0")
        if not 0 < self.delta < 1:
            raise ConfigError("delta: must lie in (0, 1)")
        if self.big_m <= 0:
            raise ConfigError("big_m: must be > 0")
        if self.repeats < 1 or self.cost_repeats < 1:
            raise ConfigError("repeats, cost_repeats: must be >= 1")
        if not 0 <= self.burn_in < self.horizon:
            raise ConfigError("burn_in: need 0 <= burn_in < horizon")
        if self.unstable_horizon < 2:
            raise ConfigError("unstable_horizon: must be >= 2")
        if self.seed < 0:
            raise ConfigError("seed: must be >= 0")
        try:
            Scaling(self.estimator_scaling)
            Assembly(self.assembly)
        except ValueError as exc:
            raise ConfigError(f"estimator_scaling/assembly: {exc}") from None
        resolve_system(self.system)

    def to_dict(self):
        d = asdict(self)
        d["noise"] = self.noise.to_dict()
        for k in ("rollout_counts", "gammas", "table2_sigma_ws"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        try:
            return cls(**d)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None

    def with_(self, **changes) -> "ExperimentConfig":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(changes)
        return ExperimentConfig(**d)

    @property
    def benchmark_gamma(self) -> float:
        return max(self.gammas)


def load_config(path) -> ExperimentConfig:
    """``"default"`` or a path to a JSON object of config fields."""
    if path is None or path == "default":
        return ExperimentConfig()
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    try:
        return ExperimentConfig.from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def resolve_system(spec) -> SystemMatrices:
    if isinstance(spec, SystemMatrices):
        return spec
    if isinstance(spec, str):
        try:
            return SYSTEMS[spec.upper()]()
        except KeyError:
            raise ConfigError(f"system: unknown name {spec!r} (choose {sorted(SYSTEMS)})") from None
    if isinstance(spec, dict):
        try:
            return SystemMatrices.from_dict(spec)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"system: {exc}") from None
    raise ConfigError("system: expected a name or an object with a, b[, c]")


def system_label(spec) -> str:
    return spec.upper() if isinstance(spec, str) else "CUSTOM"


def resolve_threads(threads=None) -> int:
    if threads is None:
        env = os.environ.get("SYSID_THREADS")
        threads = int(env) if env else 1
    return max(1, int(threads))


def _derive_seed(master: int, *labels) -> int:
    return RngStream(master).child(*labels).stream_id


def _pmap(fn, items, threads):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values) if values else math.nan


def _var(values) -> float:
    values = list(values)
    if len(values) < 2:
        return math.nan
    mu = _mean(values)
    return math.fsum((v - mu) ** 2 for v in values) / (len(values) - 1)


def _bound_params(cfg: ExperimentConfig, sys: SystemMatrices, n_rollouts: int, gamma: float,
                  sigma_w: float) -> BoundParams:
    return BoundParams(sys.n, sys.m, cfg.big_m, cfg.delta, gamma, n_rollouts, cfg.t0,
                       cfg.noise.sigma_u, sigma_w)


# ------------------------------------------------------------------- rows

@dataclass
class Table2Row:
    system: str
    sigma_w: float
    n_rollouts: int
    n0: int
    gamma: float
    repeats: int
    rmse_a_ols: float
    rmse_a_svr: float
    rmse_b_ols: float
    rmse_b_svr: float
    seed: int


@dataclass
class Table2Summary:
    system: str
    sigma_w: float
    gamma: float
    repeats: int
    rmse_a_ols: float
    rmse_a_svr: float
    rmse_b_ols: float
    rmse_b_svr: float
    diff_b_mean: float
    diff_b_stderr: float
    svr_better_95: int
    seed: int


@dataclass
class SweepRow:
    n_rollouts: int
    gamma: float
    sigma_w: float
    rmse_a_ols: float
    rmse_a_svr: float
    rmse_b_ols: float
    rmse_b_svr: float
    h_a: float
    h_b: float
    eps_a: float
    eps_b: float
    coverage_a: float
    gain_feasible: float
    j_mc: float | None
    j_bound: float | None
    seed: int
    system: str = ""
    n0: int = 0
    radius_a: float = math.nan
    center_offset_a: float = math.nan
    max_abs_error_a: float = math.nan
    coverage_a_param: float = math.nan
    a_stable_certified: float = math.nan
    repeats: int = 0
    j_stderr: float | None = None
    j_var: float | None = None
    delta_j: float | None = None
    delta_j_min: float | None = None
    cost_ratio: float | None = None


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def rows_to_csv(rows) -> str:
    rows = list(rows)
    if not rows:
        return ""
    names = [f.name for f in fields(rows[0])]
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(names)
    for r in rows:
        wr.writerow([_fmt(getattr(r, k)) for k in names])
    return buf.getvalue()


def _json_value(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def rows_to_json(rows) -> list:
    """One JSON document (line) per row."""
    return [json.dumps({f.name: _json_value(getattr(r, f.name)) for f in fields(r)}) for r in rows]


# ----------------------------------------------------------------- table 2

def _table2_job(cfg: ExperimentConfig, sys: SystemMatrices, sys_idx: int, sigma_idx: int,
                sigma_w: float, repeat: int):
    noise = NoiseSpec(sigma_w, cfg.noise.sigma_v, cfg.noise.sigma_u)
    seed = _derive_seed(cfg.seed, _TABLE2, sys_idx, sigma_idx, repeat)
    full = collect_rollouts(sys, noise, max(cfg.rollout_counts), cfg.t0, seed)
    out = []
    for n in cfg.rollout_counts:
        data = assemble_regression_data(full.head(n), Assembly(cfg.assembly))
        ols = estimate_ols(data)
        svr = estimate_svr(data, cfg.table2_gamma, Scaling(cfg.estimator_scaling))
        out.append(rmse(ols, sys) + rmse(svr, sys))
    return np.array(out)  # (len(counts), 4): a_ols, b_ols, a_svr, b_svr


def run_table2(cfg: ExperimentConfig, threads: int = 1):
    """RMSE of OLS and SVR on both benchmark systems for every process-noise level.

    Returns ``(rows, summary)``. ``summary`` holds one line per (system,
    sigma_w) with the mean over sample sizes and repeats, and a paired test
    of SVR against OLS on the B error over repeats.
    """
    rows, summary = [], []
    for sys_idx, name in enumerate(("STABLE", "UNSTABLE")):
        sys = SYSTEMS[name]()
        for sigma_idx, sw in enumerate(cfg.table2_sigma_ws):
            jobs = [(sys_idx, sigma_idx, sw, r) for r in range(cfg.repeats)]
            res = _pmap(lambda j: _table2_job(cfg, sys, *j), jobs, threads)
            stack = np.stack(res)  # (repeats, counts, 4)
            for ci, n in enumerate(cfg.rollout_counts):
                cell = stack[:, ci]
                rows.append(Table2Row(name, float(sw), int(n), (cfg.t0 - 1) * int(n), cfg.table2_gamma,
                                      cfg.repeats, _mean(cell[:, 0]), _mean(cell[:, 2]),
                                      _mean(cell[:, 1]), _mean(cell[:, 3]), cfg.seed))
            per_rep = [[_mean(stack[r, :, k]) for k in range(4)] for r in range(cfg.repeats)]
            diffs = [p[3] - p[1] for p in per_rep]
            dm = _mean(diffs)
            se = math.sqrt(_var(diffs) / len(diffs)) if len(diffs) > 1 else math.nan
            better = int(math.isfinite(se) and dm + 1.645 * se < 0)
            summary.append(Table2Summary(name, float(sw), cfg.table2_gamma, cfg.repeats,
                                         _mean(p[0] for p in per_rep), _mean(p[2] for p in per_rep),
                                         _mean(p[1] for p in per_rep), _mean(p[3] for p in per_rep),
                                         dm, se, better, cfg.seed))
    return rows, summary


# -------------------------------------------------------------- bound sweep

def _sweep_job(cfg: ExperimentConfig, sys: SystemMatrices, repeat: int):
    seed = _derive_seed(cfg.seed, _BOUNDS, repeat)
    full = collect_rollouts(sys, cfg.noise, max(cfg.rollout_counts), cfg.t0, seed)
    scaling = Scaling(cfg.estimator_scaling)
    out = {}
    for n in cfg.rollout_counts:
        data = assemble_regression_data(full.head(n), Assembly(cfg.assembly))
        try:
            ols_err = rmse(estimate_ols(data), sys)
        except ArithmeticError:
            ols_err = (math.nan, math.nan)
        for g in cfg.gammas:
            est = estimate_svr(data, g, scaling)
            p = _bound_params(cfg, sys, n, g, cfg.noise.sigma_w)
            br = compute_bounds(est, p)
            ra, _ = radii(p)
            err = sys.a - est.a_hat
            centers = g * est.a_hat
            cover = np.abs(err - centers) <= ra
            a_cent = br.a_centers()
            cover_param = np.abs(sys.a - a_cent) <= ra
            # worst-case Gershgorin row sum over the A box
            upper_rows = (np.abs(a_cent) + ra).sum(axis=1)
            iv = IntervalMatrix(a_cent, ra)
            feasible = design_gain(iv, sys.c) is not None
            out[(n, g)] = dict(
                rmse_a_ols=ols_err[0], rmse_b_ols=ols_err[1], rmse=rmse(est, sys),
                h_a=br.h_a, h_b=br.h_b, eps_a=br.eps_a, eps_b=br.eps_b, radius=ra,
                offset=float(np.max(np.abs(centers))), max_err=float(np.max(np.abs(err))),
                cover=cover, cover_param=cover_param, certified=bool(np.all(upper_rows < 1.0)),
                feasible=feasible)
    return out


def run_bound_sweep(cfg: ExperimentConfig, threads: int = 1):
    """Interval bounds, empirical coverage and design feasibility per ``(N, gamma)``."""
    sys = resolve_system(cfg.system)
    res = _pmap(lambda r: _sweep_job(cfg, sys, r), range(cfg.repeats), threads)
    rows = []
    for n in cfg.rollout_counts:
        for g in cfg.gammas:
            cells = [r[(n, g)] for r in res]
            cover = np.mean([c["cover"] for c in cells], axis=0)
            cover_p = np.mean([c["cover_param"] for c in cells], axis=0)
            rows.append(SweepRow(
                n_rollouts=int(n), gamma=float(g), sigma_w=cfg.noise.sigma_w,
                rmse_a_ols=_mean(c["rmse_a_ols"] for c in cells),
                rmse_a_svr=_mean(c["rmse"][0] for c in cells),
                rmse_b_ols=_mean(c["rmse_b_ols"] for c in cells),
                rmse_b_svr=_mean(c["rmse"][1] for c in cells),
                h_a=cells[0]["h_a"], h_b=cells[0]["h_b"],
                eps_a=_mean(c["eps_a"] for c in cells), eps_b=_mean(c["eps_b"] for c in cells),
                coverage_a=float(cover.min()),
                gain_feasible=_mean(float(c["feasible"]) for c in cells),
                j_mc=None, j_bound=None, seed=cfg.seed,
                system=system_label(cfg.system), n0=(cfg.t0 - 1) * int(n),
                radius_a=cells[0]["radius"],
                center_offset_a=_mean(c["offset"] for c in cells),
                max_abs_error_a=_mean(c["max_err"] for c in cells),
                coverage_a_param=float(cover_p.min()),
                a_stable_certified=_mean(float(c["certified"]) for c in cells),
                repeats=cfg.repeats))
    return rows


# ---------------------------------------------------------- observer eval

def _design_job(cfg: ExperimentConfig, sys: SystemMatrices, k_opt, truth_hinf, repeat: int):
    """Estimates, gains and bound terms for one repeat across all ``(N, gamma)``.

    Sample sizes are visited in increasing order; a gain is kept while it
    stays certified for the new interval and redesigned otherwise.
    """
    seed = _derive_seed(cfg.seed, _OBSERVER, repeat)
    full = collect_rollouts(sys, cfg.noise, max(cfg.rollout_counts), cfg.t0, seed)
    scaling = Scaling(cfg.estimator_scaling)
    prev = {g: None for g in cfg.gammas}
    out = {}
    for n in cfg.rollout_counts:
        data = assemble_regression_data(full.head(n), Assembly(cfg.assembly))
        for g in cfg.gammas:
            est = estimate_svr(data, g, scaling)
            p = _bound_params(cfg, sys, n, g, cfg.noise.sigma_w)
            br = compute_bounds(est, p)
            iv = IntervalMatrix(br.a_centers(), br.radius_a)
            gain = None
            if prev[g] is not None and gershgorin_feasible(prev[g], iv, sys.c).feasible:
                gain = prev[g]
            else:
                cert = design_gain(iv, sys.c)
                if cert is not None:
                    gain = cert.gain
            if gain is None:
                out[(n, g)] = None
                continue
            prev[g] = gain
            loop = ObserverLoop(sys, est, gain, cfg.noise)
            bound = None
            try:
                terms, *_ = j_bound_terms(loop, k_opt, br.eps_a, br.eps_b, truth_hinf=truth_hinf)
                bound = math.fsum(terms)
            except UnstableDynamics:
                # observer or truth not stable: no bound for this repeat
                bound = None
            out[(n, g)] = dict(a_hat=est.a_hat, b_hat=est.b_hat, gain=gain, bound=bound)
    return out


def run_observer_eval(cfg: ExperimentConfig, threads: int = 1):
    """Monte Carlo observer cost against the bound for every ``(N, gamma)``.

    Each repeat draws fresh identification data; all gammas of one repeat
    and sample size share the simulation noise.
    """
    sys = resolve_system(cfg.system)
    k_opt = kalman_gain(sys, cfg.noise)
    stable = float(np.max(np.abs(np.linalg.eigvals(sys.a)))) < 1.0
    truth_hinf = None
    if stable:
        truth_hinf = truth_hinf_norms(sys, k_opt)
    horizon = cfg.horizon if stable else cfg.unstable_horizon
    burn_in = cfg.burn_in if stable else cfg.unstable_horizon // 10
    designs = _pmap(lambda r: _design_job(cfg, sys, k_opt, truth_hinf, r), range(cfg.cost_repeats), threads)

    def simulate(ni):
        n = cfg.rollout_counts[ni]
        keys = [(r, g) for r in range(cfg.cost_repeats) for g in cfg.gammas
                if designs[r][(n, g)] is not None]
        if not keys:
            return {}
        reps = sorted({r for r, _ in keys})
        pos = {r: i for i, r in enumerate(reps)}
        streams = [RngStream(cfg.seed).child(_SIM, ni, r) for r in reps]
        d = [designs[r][(n, g)] for r, g in keys]
        j, se, ok = simulate_observer_batch(
            sys, np.stack([x["a_hat"] for x in d]), np.stack([x["b_hat"] for x in d]),
            np.stack([x["gain"] for x in d]), cfg.noise, horizon, burn_in, streams,
            np.array([pos[r] for r, _ in keys]))
        return {k: (float(j[i]), bool(ok[i])) for i, k in enumerate(keys)}

    sims = _pmap(simulate, range(len(cfg.rollout_counts)), threads)
    rows = []
    for ni, n in enumerate(cfg.rollout_counts):
        cell_rows = {}
        for g in cfg.gammas:
            js, bounds, gaps = [], [], []
            n_feasible = 0
            for r in range(cfg.cost_repeats):
                dsg = designs[r][(n, g)]
                if dsg is None:
                    continue
                n_feasible += 1
                jv, ok = sims[ni][(r, g)]
                if not ok or not math.isfinite(jv):
                    continue
                js.append(jv)
                if dsg["bound"] is not None:
                    bounds.append(dsg["bound"])
                    gaps.append(dsg["bound"] - jv)
            j_mc = _mean(js) if js else None
            j_var = _var(js) if len(js) > 1 else None
            j_se = math.sqrt(j_var / len(js)) if j_var is not None else None
            j_bound = _mean(bounds) if stable and bounds and len(bounds) == len(js) else None
            cell_rows[g] = SweepRow(
                n_rollouts=int(n), gamma=float(g), sigma_w=cfg.noise.sigma_w,
                rmse_a_ols=math.nan, rmse_a_svr=math.nan, rmse_b_ols=math.nan, rmse_b_svr=math.nan,
                h_a=math.nan, h_b=math.nan, eps_a=math.nan, eps_b=math.nan, coverage_a=math.nan,
                gain_feasible=n_feasible / cfg.cost_repeats, j_mc=j_mc, j_bound=j_bound,
                seed=cfg.seed, system=system_label(cfg.system), n0=(cfg.t0 - 1) * int(n),
                repeats=len(js), j_stderr=j_se, j_var=j_var,
                delta_j=None if j_bound is None else j_bound - j_mc,
                delta_j_min=min(gaps) if j_bound is not None and gaps else None)
        ref = cell_rows[cfg.benchmark_gamma].j_mc
        for g in cfg.gammas:
            row = cell_rows[g]
            if ref is not None and row.j_mc is not None and ref > 0:
                row.cost_ratio = abs(row.j_mc - ref) / ref
            rows.append(row)
    return rows


def _fill(row: SweepRow, other: SweepRow):
    for f in fields(SweepRow):
        if f.name in ("j_mc", "j_bound", "j_stderr", "j_var", "delta_j", "delta_j_min", "cost_ratio",
                      "gain_feasible", "repeats"):
            continue
        setattr(row, f.name, getattr(other, f.name))
    return row


def run_sweep(cfg: ExperimentConfig, threads: int = 1):
    """Bound sweep and observer evaluation merged into one row per ``(N, gamma)``.

    ``gain_feasible`` and ``repeats`` refer to the observer evaluation.
    """
    bounds = {(r.n_rollouts, r.gamma): r for r in run_bound_sweep(cfg, threads)}
    rows = run_observer_eval(cfg, threads)
    return [_fill(r, bounds[(r.n_rollouts, r.gamma)]) for r in rows]

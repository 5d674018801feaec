"""PNG figures for experiment outputs (written next to the CSV files)."""

from __future__ import annotations

import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["plot_table2", "plot_bound_sweep", "plot_observer_eval"]

_STYLE = {"figure.figsize": (6.4, 4.0), "font.size": 9, "axes.grid": True, "grid.alpha": 0.3,
          "savefig.dpi": 120}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def _finite(v):
    return v is not None and v == v


def plot_table2(rows, out_dir: str):
    """RMSE of B against rollout count, one panel per system."""
    paths = []
    with plt.rc_context(_STYLE):
        for system in sorted({r.system for r in rows}):
            fig, ax = plt.subplots()
            groups = defaultdict(list)
            for r in rows:
                if r.system == system:
                    groups[r.sigma_w].append(r)
            for sw, grp in sorted(groups.items()):
                ns = [r.n_rollouts for r in grp]
                line, = ax.plot(ns, [r.rmse_b_ols for r in grp], "--", label=f"OLS, sigma_w={sw:g}")
                ax.plot(ns, [r.rmse_b_svr for r in grp], "-", color=line.get_color(),
                        label=f"SVR, sigma_w={sw:g}")
            ax.set_yscale("log")
            ax.set_xlabel("rollouts N")
            ax.set_ylabel("RMSE of B")
            ax.set_title(f"{system.lower()} system")
            ax.legend(fontsize=7, ncol=2)
            paths.append(_save(fig, os.path.join(out_dir, f"table2_rmse_b_{system.lower()}.png")))
    return paths


def plot_bound_sweep(rows, out_dir: str):
    """Interval centre offset and radius against rollout count, per gamma."""
    with plt.rc_context(_STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.6))
        for g in sorted({r.gamma for r in rows}):
            grp = [r for r in rows if r.gamma == g]
            ns = [r.n_rollouts for r in grp]
            ax1.plot(ns, [r.center_offset_a + r.radius_a for r in grp], "-", label=f"gamma={g:g}")
            ax1.plot(ns, [r.center_offset_a - r.radius_a for r in grp], ":", color=ax1.lines[-1].get_color())
            ax2.plot(ns, [r.radius_a for r in grp], "-", label=f"gamma={g:g}")
        ax1.axhline(0.0, color="k", lw=0.6)
        ax1.set_xlabel("rollouts N")
        ax1.set_ylabel("largest interval edge for A error")
        ax2.set_xlabel("rollouts N")
        ax2.set_ylabel("interval radius")
        ax2.set_yscale("log")
        ax2.legend(fontsize=7)
        return [_save(fig, os.path.join(out_dir, "bounds_intervals.png"))]


def plot_observer_eval(rows, out_dir: str):
    """Bound minus cost, and the cost ratio to the benchmark gamma."""
    paths = []
    with plt.rc_context(_STYLE):
        gammas = sorted({r.gamma for r in rows})
        if any(_finite(r.delta_j) for r in rows):
            fig, ax = plt.subplots()
            for g in gammas:
                grp = [r for r in rows if r.gamma == g and _finite(r.delta_j)]
                ax.plot([r.n_rollouts for r in grp], [r.delta_j for r in grp], "o-", ms=3, label=f"gamma={g:g}")
            ax.axhline(0.0, color="k", lw=0.6)
            ax.set_xlabel("rollouts N")
            ax.set_ylabel("bound - mean cost")
            ax.legend(fontsize=7)
            paths.append(_save(fig, os.path.join(out_dir, "observer_delta_j.png")))
        fig, ax = plt.subplots()
        for g in gammas:
            grp = [r for r in rows if r.gamma == g and _finite(r.cost_ratio)]
            ax.plot([r.n_rollouts for r in grp], [r.cost_ratio for r in grp], "o-", ms=3, label=f"gamma={g:g}")
        ax.set_xlabel("rollouts N")
        ax.set_ylabel("|J - J_ref| / J_ref")
        ax.legend(fontsize=7)
        paths.append(_save(fig, os.path.join(out_dir, "observer_cost_ratio.png")))
    return paths

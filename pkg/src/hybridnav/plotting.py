"""Report figures (written to files with the Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_map(grid, path, trajectory=None, search=None, start=None, goal=None, title=None):
    """Top view (obstacle height) and x-z side view with optional paths."""
    fig, (ax, bx) = plt.subplots(1, 2, figsize=(11, 4.8), gridspec_kw={"width_ratios": [1.1, 1.4]})
    occ = grid.occupied
    top = occ.any(axis=2)
    height = np.where(top, (occ * np.arange(occ.shape[2])).max(axis=2) * grid.resolution, np.nan)
    ext = [grid.origin[0], grid.upper[0], grid.origin[1], grid.upper[1]]
    im = ax.imshow(height.T, origin="lower", extent=ext, cmap="Greys", vmin=0)
    fig.colorbar(im, ax=ax, label="obstacle top (m)", shrink=0.8)
    # side view only over the y band the path sweeps
    ys = np.arange(occ.shape[1]) * grid.resolution + grid.origin[1] + 0.5 * grid.resolution
    band = np.ones(len(ys), dtype=bool)
    if trajectory is not None:
        _, pts = trajectory.sample(600)
        band = (ys >= pts[:, 1].min() - 0.3) & (ys <= pts[:, 1].max() + 0.3)
    side = occ[:, band, :].any(axis=1)
    bx.imshow(side.T, origin="lower", cmap="Greys", aspect="auto",
              extent=[grid.origin[0], grid.upper[0], grid.origin[2], grid.upper[2]])
    if search is not None and search.primitives:
        _, pts, _, _ = search.sample(0.05)
        ax.plot(pts[:, 0], pts[:, 1], "--", color="tab:orange", lw=1, label="search")
        bx.plot(pts[:, 0], pts[:, 2], "--", color="tab:orange", lw=1)
    if trajectory is not None:
        _, pts = trajectory.sample(600)
        ax.plot(pts[:, 0], pts[:, 1], color="tab:blue", lw=1.5, label="optimized")
        bx.plot(pts[:, 0], pts[:, 2], color="tab:blue", lw=1.5)
    for p, m in ((start, "go"), (goal, "r*")):
        if p is not None:
            ax.plot(p[0], p[1], m, ms=8)
            bx.plot(p[0], p[2], m, ms=8)
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    bx.set_xlabel("x (m)")
    bx.set_ylabel("z (m)")
    if trajectory is not None or search is not None:
        ax.legend(loc="upper left", fontsize=8)
    if title:
        fig.suptitle(title)
    _save(fig, path)


def plot_trace(trace, path, title=None):
    """Reference vs actual path, tracking error and thrust over time."""
    from .sim import tracking_errors

    fig, axes = plt.subplots(1, 3, figsize=(13, 4))
    ax = axes[0]
    ax.plot(trace.ref_position[:, 0], trace.ref_position[:, 1], "k--", lw=1, label="reference")
    ax.plot(trace.position[:, 0], trace.position[:, 1], color="tab:blue", lw=1.2, label="actual")
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.legend(fontsize=8)
    axes[1].plot(trace.t, tracking_errors(trace))
    axes[1].set_xlabel("t (s)")
    axes[1].set_ylabel("tracking error (m)")
    axes[2].plot(trace.t, trace.thrust)
    axes[2].set_xlabel("t (s)")
    axes[2].set_ylabel("normalized thrust")
    if title:
        fig.suptitle(title)
    _save(fig, path)


def plot_planning(rows, path):
    """Per-trial acceleration integral, search-only vs optimized."""
    ok = [r for r in rows if int(r["success"])]
    js = np.array([float(r["J_search"]) for r in ok])
    jo = np.array([float(r["J_optimized"]) for r in ok])
    fig, (ax, bx) = plt.subplots(1, 2, figsize=(10, 4))
    if len(ok):
        lim = max(js.max(), jo.max()) * 1.05
        ax.scatter(js, jo, s=12)
        ax.plot([0, lim], [0, lim], "k:", lw=1)
        bx.hist([js, jo], bins=15, label=["search only", "optimized"])
        bx.legend(fontsize=8)
    ax.set_xlabel("search-only  int |a|^2 dt")
    ax.set_ylabel("optimized  int |a|^2 dt")
    bx.set_xlabel("int |a|^2 dt")
    bx.set_ylabel("trials")
    _save(fig, path)


def plot_tracking(report, path):
    """Lemniscate paths per velocity and error bars per variant."""
    vels = sorted({r["velocity"] for r in report.rows})
    variants = list(dict.fromkeys(r["variant"] for r in report.rows))
    fig, axes = plt.subplots(1, len(vels) + 1, figsize=(4 * (len(vels) + 1), 4))
    for ax, v in zip(axes, vels):
        for name in variants:
            tr = report.traces.get((v, name))
            if tr is None:
                continue
            if name == variants[0]:
                ax.plot(tr.ref_position[:, 0], tr.ref_position[:, 1], "k--", lw=1, label="reference")
            ax.plot(tr.position[:, 0], tr.position[:, 1], lw=1, label=name)
        ax.set_title(f"{v:.1f} m/s")
        ax.set_aspect("equal", adjustable="datalim")
    axes[0].legend(fontsize=7)
    ax = axes[-1]
    w = 0.8 / len(variants)
    for i, name in enumerate(variants):
        ea = [report.cell(v, name)["E_a"] for v in vels]
        ax.bar(np.arange(len(vels)) + i * w, ea, w, label=name)
    ax.set_xticks(np.arange(len(vels)) + 0.4 - w / 2)
    ax.set_xticklabels([f"{v:.1f}" for v in vels])
    ax.set_xlabel("velocity (m/s)")
    ax.set_ylabel("E_a (m)")
    ax.set_yscale("log")
    ax.legend(fontsize=7)
    _save(fig, path)


def plot_fly_roll(report, path):
    fig, (ax, bx) = plt.subplots(1, 2, figsize=(10, 4))
    for mode, tr in report.traces.items():
        ax.plot(tr.t, tr.thrust, lw=1, label=mode)
        bx.plot(tr.position[:, 0], tr.position[:, 1], lw=1, label=mode)
    ax.set_xlabel("t (s)")
    ax.set_ylabel("normalized thrust")
    ax.legend(fontsize=8)
    bx.set_xlabel("x (m)")
    bx.set_ylabel("y (m)")
    bx.set_aspect("equal", adjustable="datalim")
    _save(fig, path)

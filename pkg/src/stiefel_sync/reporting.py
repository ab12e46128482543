"""Figure rendering for harness reports.

Every run mode saves one or more PNG files next to its CSV/JSON output.  The
Agg backend is forced so rendering works in headless batch jobs.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_trajectory_figure(rows: np.ndarray, title: str, out_path) -> None:
    """Potential and max-edge distance against time, from (t, U, grad, dist) rows."""
    t, u, grad, dist = rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(6.0, 5.0), sharex=True)
    ax1.plot(t, u, color="tab:blue")
    ax1.set_ylabel("potential U")
    ax1.set_yscale("symlog", linthresh=1e-12)
    ax1.set_title(title)
    ax2.plot(t, np.maximum(dist, 1e-16), color="tab:orange", label="max edge distance")
    ax2.plot(t, np.maximum(grad, 1e-16), color="tab:green", label="max gradient norm")
    ax2.set_yscale("log")
    ax2.set_xlabel("time")
    ax2.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def save_monte_carlo_figure(trials, out_path) -> None:
    """Histogram of final consensus distances plus termination counts."""
    dists = np.array([max(tr.final_consensus_distance, 1e-16) for tr in trials])
    reasons = [tr.reason for tr in trials]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.0, 3.5))
    if len(dists):
        bins = np.logspace(-16, 1, 35)
        ax1.hist(dists, bins=bins, color="tab:blue", alpha=0.8)
        ax1.set_xscale("log")
    ax1.set_xlabel("final max-edge chordal distance")
    ax1.set_ylabel("trials")
    labels = sorted(set(reasons)) or ["(none)"]
    counts = [reasons.count(lbl) for lbl in labels]
    ax2.bar(labels, counts, color="tab:orange")
    ax2.set_ylabel("trials")
    ax2.tick_params(axis="x", labelrotation=20)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def save_counterexample_figure(rows, out_path) -> None:
    """Final distance to the nearest winding-1 twisted state per cycle size."""
    ns = [r["N"] for r in rows]
    dist_tw = [max(r["final_distance_to_twisted"], 1e-16) for r in rows]
    dist_cons = [max(r["final_consensus_distance"], 1e-16) for r in rows]
    x = np.arange(len(ns))
    fig, ax = plt.subplots(figsize=(6.0, 3.5))
    ax.bar(x - 0.2, dist_tw, width=0.4, label="to twisted state", color="tab:blue")
    ax.bar(x + 0.2, dist_cons, width=0.4, label="max edge distance", color="tab:orange")
    ax.axhline(1e-3, color="k", linestyle="--", linewidth=0.8, label="1e-3")
    ax.set_yscale("log")
    ax.set_xticks(x, [f"N={n}" for n in ns])
    ax.set_ylabel("chordal distance at termination")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def save_certification_figure(report: dict, out_path) -> None:
    """Integer-program objective table and, when present, the MINLP surface."""
    has_ip = report.get("integer_program") is not None
    has_minlp = report.get("minlp") is not None
    n_panels = max(1, int(has_ip) + int(has_minlp))
    fig, axes = plt.subplots(1, n_panels, figsize=(4.5 * n_panels, 3.5))
    if n_panels == 1:
        axes = [axes]
    k = 0
    if has_ip:
        ax = axes[k]
        k += 1
        table = report["integer_program"]["table"]
        ms = [row[0] for row in table]
        hs = [row[1] for row in table]
        ax.plot(ms, hs, "o-", color="tab:blue")
        ax.set_xlabel("m_plus")
        ax.set_ylabel("objective h")
        ax.set_title("quadratic integer program")
    if has_minlp:
        ax = axes[k]
        table = report["minlp"]["table"]
        lams = sorted({row[0] for row in table})
        ms = sorted({row[1] for row in table})
        grid = np.zeros((len(ms), len(lams)))
        li = {lam: i for i, lam in enumerate(lams)}
        mi = {m: i for i, m in enumerate(ms)}
        for lam, m, obj in table:
            grid[mi[m], li[lam]] = obj
        im = ax.imshow(
            grid,
            aspect="auto",
            origin="lower",
            extent=(lams[0], lams[-1], ms[0] - 0.5, ms[-1] + 0.5),
            cmap="viridis",
        )
        fig.colorbar(im, ax=ax, label="objective")
        ax.set_xlabel("lambda_star")
        ax.set_ylabel("m_star")
        ax.set_title("boundary-case program")
    if not (has_ip or has_minlp):
        axes[0].axis("off")
        axes[0].text(0.5, 0.5, "no program tables in this mode", ha="center")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)

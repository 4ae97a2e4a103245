"""Figure rendering for CLI reports; files only, no interactive backend."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def geodesic_figure(ts, mats, out_path):
    """Singular values and induced volume along a sampled geodesic."""
    ts = np.asarray(ts)
    sigmas = np.array([np.linalg.svd(m, compute_uv=False) for m in mats])
    vols = np.array([np.sqrt(max(np.linalg.det(m.T @ m), 0.0)) for m in mats])
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    for j in range(sigmas.shape[1]):
        ax1.plot(ts, sigmas[:, j], label=f"sigma_{j + 1}")
    ax1.set_xlabel("t")
    ax1.set_ylabel("singular values")
    ax1.legend(fontsize=8)
    ax2.plot(ts, vols, color="tab:red")
    ax2.set_xlabel("t")
    ax2.set_ylabel("sqrt(det(c^T c))")
    fig.suptitle("geodesic profile")
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)


def pointwise_distance_figure(point_ids, dists, weights, out_path):
    """Per-sample distances and their quadrature weights."""
    idx = np.arange(len(point_ids))
    fig, ax = plt.subplots(figsize=(max(5, 0.3 * len(idx)), 3.5))
    ax.bar(idx, dists, color="tab:blue", label="pointwise distance")
    ax.plot(idx, weights, "o--", color="tab:orange", ms=3, label="weight")
    step = max(1, len(idx) // 24)
    ax.set_xticks(idx[::step])
    ax.set_xticklabels(
        [point_ids[i] for i in idx[::step]], rotation=60, fontsize=6
    )
    ax.set_ylabel("distance / weight")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)


def route_figure(params, speeds, volumes, lower, out_path):
    """Speed and det^(1/4) profile along the winning distance route."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.plot(params, speeds, color="tab:blue")
    ax1.set_xlabel("path parameter")
    ax1.set_ylabel("speed")
    ax2.plot(params, volumes, color="tab:red", label="det^(1/4)")
    ax2.axhline(lower, ls=":", color="gray", label="endpoint bound scale")
    ax2.set_xlabel("path parameter")
    ax2.legend(fontsize=8)
    fig.suptitle("distance route profile")
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)

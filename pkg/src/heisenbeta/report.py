"""Figure rendering for harness reports.

Figures are written next to the delimited output; everything needed to
reproduce them is already in the JSON/CSV, the plots are a convenience.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

__all__ = [
    "render_carleson_figures",
    "render_theta_figure",
    "render_calibration_figure",
    "render_identity_figure",
]


def render_carleson_figures(report, prefix: str) -> list:
    """Per-scale contributions and the I(R) scaling fit."""
    paths = []
    ks = [k for k, _, _ in report.per_scale]
    rs = [r for _, r, _ in report.per_scale]
    cs = [c for _, _, c in report.per_scale]

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(rs, cs, "o-", color="tab:blue")
    ax.set_xlabel("scale r")
    ax.set_ylabel("per-scale contribution")
    ax.set_title("dyadic contributions to the Carleson sum")
    ax.grid(True, which="both", alpha=0.3)
    path = f"{prefix}_scales.png"
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    paths.append(path)

    Rs = sorted(report.I_R)
    Is = [report.I_R[R] for R in Rs]
    n = report.config.get("n", 2)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(Rs, Is, "s-", color="tab:red", label="I(R)")
    if min(Is) > 0:
        anchor = Is[-1] / Rs[-1] ** (2 * n + 1)
        guide = [anchor * R ** (2 * n + 1) for R in Rs]
        ax.loglog(Rs, guide, "--", color="gray", label=f"~R^{2 * n + 1}")
    ax.set_xlabel("R")
    ax.set_ylabel("I(R)")
    ax.set_title(
        f"Carleson integral: fitted exponent {report.exponent_fit:.2f}"
        f" (envelope {report.ratio_envelope:.3g})"
    )
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    path = f"{prefix}_scaling.png"
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    paths.append(path)
    return paths


def render_theta_figure(report, prefix: str) -> list:
    offsets = [o for o, *_ in report.per_slice]
    ratios = [rt for *_, rt in report.per_slice]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(range(len(ratios)), ratios, color="tab:green")
    ax.set_xticks(range(len(ratios)))
    ax.set_xticklabels([f"{o:.2f}" for o in offsets], rotation=45, fontsize=7)
    ax.set_xlabel("slice offset")
    ax.set_ylabel("integral / (Lip^2 R^(2m+2))")
    ax.set_title(f"theta slices: max ratio {report.max_ratio:.3g}")
    fig.tight_layout()
    path = f"{prefix}_theta.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return [path]


def render_calibration_figure(result, prefix: str) -> list:
    radii = sorted(result.per_radius)
    cs = [result.per_radius[r] for r in radii]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.semilogx(radii, cs, "o-")
    ax.axhline(result.c, color="gray", ls="--", label=f"c = {result.c:.2f}")
    ax.set_xlabel("radius r")
    ax.set_ylabel("calibrated c")
    ax.set_title("quasibox sandwich constant")
    ax.legend()
    fig.tight_layout()
    path = f"{prefix}_calibration.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return [path]


def render_identity_figure(rows, prefix: str) -> list:
    """rows: list of dicts with d, J, worst (relative error)."""
    labels = [f"d={r['d']},J={r['J']}" for r in rows]
    worst = [max(r["worst"], 1e-18) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(range(len(worst)), worst, color="tab:purple")
    ax.set_yscale("log")
    ax.axhline(1e-9, color="red", ls="--", label="tolerance")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel("worst relative identity error")
    ax.set_title("Haar projection identities")
    ax.legend()
    fig.tight_layout()
    path = f"{prefix}_identities.png"
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return [path]

"""Report figures rendered from the delimited run outputs."""

from __future__ import annotations

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

FIG_KW = dict(figsize=(6.0, 3.6), dpi=130)


def _load_series(run_dir):
    rows = []
    with open(os.path.join(run_dir, "diagnostics.csv")) as f:
        for row in csv.DictReader(f):
            rows.append({k: float(v) for k, v in row.items()})
    return rows


def render_run_figures(run_dir, out_dir=None):
    """Render the standard figure set next to the CSV output."""
    rows = _load_series(run_dir)
    out_dir = out_dir or os.path.join(run_dir, "figures")
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    if not rows:
        return paths
    t = np.array([r["t"] for r in rows])

    fig, ax = plt.subplots(**FIG_KW)
    ax.plot(t, [r["max_u"] for r in rows], label="max u", color="tab:blue")
    ax.set_xlabel("t")
    ax.set_ylabel("max u", color="tab:blue")
    ax2 = ax.twinx()
    ax2.semilogy(t, [max(r["max_grad"], 1e-16) for r in rows],
                 label="max |grad u|", color="tab:red")
    ax2.set_ylabel("max |grad u|", color="tab:red")
    ax.set_title("amplitude and steepness")
    fig.tight_layout()
    p = os.path.join(out_dir, "timeseries.png")
    fig.savefig(p)
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots(**FIG_KW)
    for key in ("margin_ux", "margin_us", "margin_J", "margin_Jbar"):
        ax.plot(t, [r[key] for r in rows], label=key)
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_xlabel("t")
    ax.set_ylabel("sign margins (>= 0 is good)")
    ax.legend(fontsize=7)
    fig.tight_layout()
    p = os.path.join(out_dir, "margins.png")
    fig.savefig(p)
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots(**FIG_KW)
    for key in ("bernstein_C1_est", "nondeg_quotient_max", "corner_coeff",
                "profile_bound_quotient"):
        ax.plot(t, [r[key] for r in rows], label=key)
    ax.set_xlabel("t")
    ax.set_ylabel("quotients")
    ax.legend(fontsize=7)
    fig.tight_layout()
    p = os.path.join(out_dir, "quotients.png")
    fig.savefig(p)
    plt.close(fig)
    paths.append(p)

    fig, ax = plt.subplots(**FIG_KW)
    ax.plot(t, [r["flux_argmax_s"] for r in rows], ".", ms=2)
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_xlabel("t")
    ax.set_ylabel("boundary-flux argmax (arclength)")
    fig.tight_layout()
    p = os.path.join(out_dir, "flux_argmax.png")
    fig.savefig(p)
    plt.close(fig)
    paths.append(p)

    prof = os.path.join(run_dir, "flux_profile.csv")
    if os.path.exists(prof):
        data = np.loadtxt(prof, delimiter=",", skiprows=1)
        fig, ax = plt.subplots(**FIG_KW)
        ax.plot(data[:, 0], data[:, 1])
        ax.set_xlabel("arclength s")
        ax.set_ylabel("|du/dnu|")
        ax.set_title("final boundary-flux profile")
        fig.tight_layout()
        p = os.path.join(out_dir, "flux_profile.png")
        fig.savefig(p)
        plt.close(fig)
        paths.append(p)
    return paths


def render_domain_figure(domain, chart, out_path, region=None):
    """Domain boundary, the chart piece, and its curvature centers."""
    pts, _, _ = domain.boundary_points(1024)
    order = np.argsort(np.arctan2(pts[:, 1] - pts[:, 1].mean(), pts[:, 0]))
    fig, ax = plt.subplots(figsize=(5.0, 5.0), dpi=130)
    ax.plot(pts[order, 0], pts[order, 1], lw=0.9, color="k", label="boundary")
    s = np.linspace(-chart.s0, chart.s0, 200)
    g = chart.gamma(s)
    ax.plot(g[:, 0], g[:, 1], lw=2.2, color="tab:blue", label="chart piece")
    K = chart.curvature(s)
    m = K > 1e-9
    C = g[m] + chart.normal(s[m]) / K[m][:, None]
    ax.plot(C[:, 0], C[:, 1], ",", color="tab:red", label="curvature centers")
    ax.set_aspect("equal")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out_path)
    plt.close(fig)
    return out_path

"""Figure rendering for the report path: PNGs written next to the CSV/JSON output."""
from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

DPI = 150


def fluctuation_histogram(centered, report: dict, path, bins: int = 64) -> Path:
    """Histogram of the centered linear statistic with the fitted normal overlay."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    c = np.asarray(centered)
    ax.hist(c, bins=bins, density=True, alpha=0.6, color="steelblue",
            label="fluctuations")
    sd = float(np.sqrt(report.get("mc_variance", c.var())))
    xs = np.linspace(c.min(), c.max(), 400)
    ax.plot(xs, np.exp(-xs ** 2 / (2 * sd * sd)) / (sd * np.sqrt(2 * np.pi)),
            "k--", label=f"normal, sd={sd:.3f}")
    ax.set_xlabel("centered linear statistic")
    ax.set_ylabel("density")
    n = report.get("n", "?")
    ax.set_title(f"fluctuations at n={n}, KS p={report.get('ks_pvalue', float('nan')):.3f}")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def variance_ladder(variance_by_n, limit_estimate: float, path,
                    kernel_points=None) -> Path:
    """Monte Carlo variance vs 1/n with the extrapolated limit marked."""
    path = Path(path)
    rows = sorted(variance_by_n)
    ns = np.array([r[0] for r in rows], dtype=float)
    vs = np.array([r[1] for r in rows])
    ses = np.array([r[2] for r in rows])
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(1.0 / ns, vs, yerr=3 * ses, fmt="o-", capsize=3, color="steelblue",
                label="MC variance (3 SE)")
    if kernel_points:
        kn = np.array([p[0] for p in kernel_points], dtype=float)
        kv = np.array([p[1] for p in kernel_points])
        ax.plot(1.0 / kn, kv, "s", color="firebrick", label="kernel quadrature")
    if np.isfinite(limit_estimate):
        ax.axhline(limit_estimate, color="gray", ls=":",
                   label=f"1/n extrapolation {limit_estimate:.4f}")
    ax.set_xlabel("1/n")
    ax.set_ylabel("Var N_n[phi]")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def density_overlay(grid_points, density_values, path, empirical=None) -> Path:
    """Equilibrium density, optionally with an empirical eigenvalue histogram."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    if empirical is not None:
        ax.hist(np.asarray(empirical), bins=80, density=True, alpha=0.5,
                color="steelblue", label="eigenvalues")
    ax.plot(grid_points, density_values, "k-", lw=1.5, label="equilibrium density")
    ax.set_xlabel("lambda")
    ax.set_ylabel("density")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path

"""Figure rendering for the CLI report paths (matplotlib, Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def save_estimates(path, rows) -> None:
    """Estimate with 2-sigma error bars; rows of (id, estimate, stderr)."""
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    labels = [r[0] for r in rows]
    est = [r[1] for r in rows]
    err = [2.0 * r[2] for r in rows]
    ax.errorbar(range(len(rows)), est, yerr=err, fmt="o", capsize=3)
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("estimate")
    ax.axhline(0.0, color="gray", lw=0.6)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_norms(path, rows, variance_rows=None, samples=None) -> None:
    """Shadow norm vs operator weight, one line per depth (log scale).

    ``variance_rows`` of (k, L, single-shot variance) are overlaid as markers
    when given, mirroring the variance-against-norm comparison.
    """
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    depths = sorted({r[1] for r in rows})
    for ell in depths:
        ks = [r[0] for r in rows if r[1] == ell]
        ns = [r[2] for r in rows if r[1] == ell]
        ax.plot(ks, ns, "-o", ms=3.5, label=f"L={ell}")
    if variance_rows:
        for ell in sorted({r[1] for r in variance_rows}):
            ks = [r[0] for r in variance_rows if r[1] == ell]
            vs = [r[2] for r in variance_rows if r[1] == ell]
            ax.plot(ks, vs, "s", ms=5, mfc="none", label=f"var (L={ell})")
    ax.set_yscale("log")
    ax.set_xlabel("operator weight k")
    ax.set_ylabel("squared shadow norm")
    ax.grid(alpha=0.3, which="both")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_depth_scan(path, results) -> None:
    """Two panels: norm vs depth per weight, and optimal depth vs weight."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.4, 3.4))
    for res in results:
        ax1.plot(res.depths, res.norms, "-o", ms=3, label=f"k={res.k}")
    ax1.set_yscale("log")
    ax1.set_xlabel("circuit depth L")
    ax1.set_ylabel("squared shadow norm")
    ax1.grid(alpha=0.3, which="both")
    if len(results) <= 10:
        ax1.legend(fontsize=7)
    ks = [r.k for r in results]
    stars = [r.l_star for r in results]
    ax2.plot(ks, stars, "o", label="scanned L*")
    a, b = results[0].fit_a, results[0].fit_b
    kk = np.linspace(min(ks), max(ks), 200)
    ax2.plot(kk, np.round(a * np.log(kk) ** 2 + b * np.log(kk)), "-", lw=1,
             label=f"round(a ln^2 k + b ln k), a={a:.3f}, b={b:.3f}")
    ax2.set_xscale("log")
    ax2.set_xlabel("operator weight k")
    ax2.set_ylabel("optimal depth L*")
    ax2.grid(alpha=0.3)
    ax2.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_scaling_fit(path, fit) -> None:
    """ln var F against n/(L+1)^alpha with the fitted line."""
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    x = [n / (l + 1) ** fit.alpha for n, l, _ in fit.rows]
    y = [np.log(v) for _, _, v in fit.rows]
    ax.plot(x, y, "o", label="runs")
    xx = np.linspace(min(x), max(x), 50)
    ax.plot(xx, fit.const + fit.c * xx, "-", label=f"fit c={fit.c:.3f} (alpha={fit.alpha})")
    ax.set_xlabel(r"n / (L+1)^alpha")
    ax.set_ylabel("ln var F")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_loss_history(path, history, tol=None) -> None:
    """Solver loss trajectory on a log scale."""
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    if history:
        its = [h[0] for h in history]
        losses = [max(h[1], 1e-18) for h in history]
        ax.plot(its, losses, "-", lw=1)
    if tol is not None:
        ax.axhline(tol, color="red", lw=0.8, ls="--", label=f"tol={tol:g}")
        ax.legend(fontsize=8)
    ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("consistency loss")
    ax.grid(alpha=0.3, which="both")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)

"""Figure emission for report paths: rendered to files next to the CSV
series, never shown interactively."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_kernel_decay(ts, norms, gamma_hat, N_hat, path):
    """log-log plot of ||F(t)|| against the fitted power law N t^-gamma."""
    fig, ax = plt.subplots(figsize=(5.5, 4))
    ax.loglog(ts, norms, "o", ms=3.5, label=r"$\|F(t)\|$")
    if gamma_hat is not None:
        ax.loglog(ts, N_hat * np.asarray(ts) ** (-gamma_hat), "-",
                  label=rf"fit $N\,t^{{-\gamma}}$, $\hat\gamma={gamma_hat:.3f}$")
    ax.set_xlabel("t")
    ax.set_ylabel("kernel norm")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_residuals(report_dict, path):
    """Bar chart of check residuals against their tolerances."""
    checks = report_dict["checks"]
    names = list(checks)
    resid = np.array([max(checks[n]["residual"], 1e-300) for n in names])
    tol = np.array([checks[n]["tolerance"] for n in names])
    idx = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(max(6, 0.6 * len(names)), 4))
    colors = ["tab:green" if checks[n]["pass"] else "tab:red" for n in names]
    ax.bar(idx, resid, color=colors)
    ax.plot(idx, tol, "k_", ms=14, label="tolerance")
    ax.set_yscale("log")
    ax.set_xticks(idx)
    ax.set_xticklabels(names, rotation=45, ha="right", fontsize=7)
    ax.set_ylabel("residual")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)

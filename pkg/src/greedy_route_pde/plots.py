"""Batch figure rendering for run and compare reports.

All plotting goes through the Agg backend and writes PNG files next to the
CSV output; nothing here opens a window.
"""

from __future__ import annotations

from typing import Dict, List, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_convergence(
    curves: Dict[str, Sequence[float]], path, ylabel: str = "error norm"
) -> None:
    """Semilog convergence curves, one labelled line per policy."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, values in curves.items():
        vals = np.asarray(values, dtype=float)
        ax.semilogy(np.arange(len(vals)), np.maximum(vals, 1e-300),
                    label=label, linewidth=1.2)
    ax.set_xlabel("iteration")
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_solver_choices(chosen: Sequence[int], labels: List[str], path) -> None:
    """Step plot of which ensemble member each iteration used."""
    fig, ax = plt.subplots(figsize=(6.0, 2.6))
    steps = np.arange(1, len(chosen) + 1)
    ax.step(steps, chosen, where="mid", linewidth=1.0)
    ax.set_xlabel("iteration")
    ax.set_yticks(np.arange(1, len(labels) + 1))
    ax.set_yticklabels(labels, fontsize=8)
    ax.set_ylim(0.5, len(labels) + 0.5)
    ax.grid(True, axis="x", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_mode_history(histories: Dict[int, np.ndarray], path) -> None:
    """Per-Fourier-mode error magnitude against iteration."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for mode in sorted(histories):
        vals = np.asarray(histories[mode], dtype=float)
        ax.semilogy(np.arange(len(vals)), np.maximum(vals, 1e-300),
                    label=f"mode {mode}", linewidth=1.2)
    ax.set_xlabel("iteration")
    ax.set_ylabel("mode magnitude")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_policy_bars(
    names: List[str], means: Sequence[float], sems: Sequence[float], path,
    ylabel: str = "final error",
) -> None:
    """Bar chart with standard-error whiskers, one bar per policy."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    x = np.arange(len(names))
    ax.bar(x, means, yerr=sems, capsize=3)
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel(ylabel)
    ax.set_yscale("log")
    ax.grid(True, axis="y", which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)

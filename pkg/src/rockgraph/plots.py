"""Matplotlib renderers for the CSV report series emitted by the CLI."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_physics_sweep(phi, series: dict, path) -> None:
    """Bounds and DEM curves vs porosity; one panel per modulus."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharex=True)
    styles = {
        "voigt": dict(color="0.3", ls="--", label="Voigt"),
        "hs_high": dict(color="tab:blue", ls="-", label="HS upper"),
        "dem": dict(color="tab:red", ls="-", lw=2, label="DEM"),
        "hs_low": dict(color="tab:blue", ls=":", label="HS lower"),
        "reuss": dict(color="0.3", ls="-.", label="Reuss"),
    }
    for ax, prefix, title in zip(axes, ("k", "mu"), ("Bulk modulus", "Shear modulus")):
        for key, style in styles.items():
            ax.plot(phi, series[f"{prefix}_{key}"], **style)
        ax.set_xlabel("porosity")
        ax.set_ylabel(f"{title} (GPa)")
        ax.set_title(title)
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_history(epochs, train_mse, val_mse, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(epochs, train_mse, label="train")
    ax.semilogy(epochs, val_mse, label="validation")
    ax.set_xlabel("epoch")
    ax.set_ylabel("MSE (standardized)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_parity(truth, pred, path, r2_values=None) -> None:
    """Predicted vs true moduli scatter with the identity line."""
    truth = np.asarray(truth)
    pred = np.asarray(pred)
    fig, axes = plt.subplots(1, 2, figsize=(9, 4))
    titles = ("Bulk modulus (GPa)", "Shear modulus (GPa)")
    for i, (ax, title) in enumerate(zip(axes, titles)):
        ax.scatter(truth[:, i], pred[:, i], s=12, alpha=0.6)
        lo = min(truth[:, i].min(), pred[:, i].min())
        hi = max(truth[:, i].max(), pred[:, i].max())
        ax.plot([lo, hi], [lo, hi], "k--", lw=1)
        ax.set_xlabel(f"true {title}")
        ax.set_ylabel(f"predicted {title}")
        if r2_values is not None:
            ax.set_title(f"R^2 = {r2_values[i]:.3f}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_importance(names, values, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4.5))
    order = np.argsort(values)
    ax.barh(np.arange(len(names)), np.asarray(values)[order], color="0.4")
    ax.set_yticks(np.arange(len(names)))
    ax.set_yticklabels([names[i] for i in order], fontsize=8)
    ax.set_xlabel("relative importance")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)

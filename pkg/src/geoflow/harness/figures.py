"""Matplotlib renderings written alongside the delimited report outputs."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def eval_figure(report, path):
    """Per-sample metric values with the aggregate overlaid."""
    names = report.metric_names
    agg = report.aggregate()
    fig, axes = plt.subplots(1, len(names), figsize=(5 * len(names), 3.2))
    for ax, name in zip(np.atleast_1d(axes), names):
        values = sorted(r[name] for r in report.rows)
        ax.plot(values, lw=1.2)
        ax.axhline(agg[name], color="crimson", ls="--", lw=1.0,
                   label=f"mean {agg[name]:.4f}")
        ax.set_xlabel("sample (sorted)")
        ax.set_ylabel(name)
        ax.legend(frameon=False, fontsize=8)
    fig.suptitle(f"{report.task} evaluation ({len(report.rows)} samples)", fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def ablation_figure(rows, path):
    """AbsRel per arm (mean +/- std over seed replicates)."""
    rows = [r for r in rows if r["status"] == "ok"]
    labels = [r["label"] for r in rows]
    means = [r["absrel_mean"] for r in rows]
    stds = [r["absrel_std"] for r in rows]
    fig, ax = plt.subplots(figsize=(7, 3.4))
    xs = np.arange(len(labels))
    ax.bar(xs, means, yerr=stds, capsize=3, color="#4878a8")
    ax.set_xticks(xs)
    ax.set_xticklabels(labels, rotation=25, ha="right", fontsize=8)
    ax.set_ylabel("val AbsRel")
    ax.set_title("ablation ladder", fontsize=10)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def timesweep_figure(sweep_rows, path):
    """Val AbsRel vs training step count T, one line per data scale."""
    scales = sorted({r["scale"] for r in sweep_rows})
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    for scale in scales:
        ts = sorted({r["T"] for r in sweep_rows if r["scale"] == scale})
        means = [
            np.mean([r["absrel"] for r in sweep_rows if r["scale"] == scale and r["T"] == t])
            for t in ts
        ]
        ax.plot(ts, means, marker="o", label=f"{int(scale * 100)}% data")
    ax.set_xscale("log")
    ax.set_xlabel("training time-steps T")
    ax.set_ylabel("val AbsRel (mean over seeds)")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def spectrum_figure(bins, columns, path):
    """Mean radially averaged log-power per frequency bin."""
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    styles = {"gt": ("black", "-"), "core": ("#b34a4a", "--"), "sharpened": ("#3c7a3c", "-")}
    for name, values in columns.items():
        color, ls = styles.get(name, (None, "-"))
        ax.plot(bins, values, label=name, color=color, ls=ls, lw=1.4)
    ax.set_xlabel("frequency bin (radius)")
    ax.set_ylabel("mean log10 power")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def loss_curve_figure(history, path):
    """Training loss curve (log scale)."""
    steps = [s for s, _ in history]
    losses = [l for _, l in history]
    fig, ax = plt.subplots(figsize=(5.2, 3.2))
    ax.semilogy(steps, losses, lw=0.9)
    ax.set_xlabel("step")
    ax.set_ylabel("batch loss")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)

"""Report rendering: matplotlib figures plus CSV alongside the JSON output."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def write_metrics_csv(rows: list[dict], path) -> None:
    path = Path(path)
    if not rows:
        path.write_text("")
        return
    keys = list(rows[0].keys())
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=keys)
        writer.writeheader()
        writer.writerows(rows)


def render_eval_report(per_slice: list[dict], out_dir, variance=None) -> list[Path]:
    """Per-slice metric bars and optional uncertainty heatmaps."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    write_metrics_csv(per_slice, out_dir / "metrics.csv")
    written.append(out_dir / "metrics.csv")

    slices = [r["slice"] for r in per_slice]
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    axes[0].bar(slices, [r["dice"] for r in per_slice], color="#3b6ea5")
    axes[0].set_xlabel("slice")
    axes[0].set_ylabel("Dice")
    axes[0].set_ylim(0, 1.05)
    assd_vals = [r["assd"] if r.get("assd") is not None else 0.0 for r in per_slice]
    axes[1].bar(slices, assd_vals, color="#a54e3b")
    axes[1].set_xlabel("slice")
    axes[1].set_ylabel("ASSD (mm)")
    fig.tight_layout()
    fig.savefig(out_dir / "metrics.png", dpi=120)
    plt.close(fig)
    written.append(out_dir / "metrics.png")

    if variance is not None:
        worst = sorted(per_slice, key=lambda r: r["dice"])[:4]
        fig, axes = plt.subplots(1, max(len(worst), 1), figsize=(3.2 * max(len(worst), 1), 3.2))
        axes = np.atleast_1d(axes)
        for ax, row in zip(axes, worst):
            k = row["slice"]
            im = ax.imshow(variance[k], cmap="magma", vmin=0.0)
            ax.set_title(f"slice {k} (Dice {row['dice']:.3f})", fontsize=9)
            ax.axis("off")
            fig.colorbar(im, ax=ax, fraction=0.046)
        fig.tight_layout()
        fig.savefig(out_dir / "uncertainty.png", dpi=120)
        plt.close(fig)
        written.append(out_dir / "uncertainty.png")
    return written


def render_session_report(log_json: dict, out_dir) -> list[Path]:
    """Queue scores and per-fetch Dice before/after for one session."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    rows = []
    for i, e in enumerate(log_json.get("events", [])):
        rows.append({
            "fetch": i,
            "slice": e["slice"],
            "score": e["score"],
            "edited": int(e["edited"]),
            "dice_before": e.get("dice_before"),
            "dice_after": e.get("dice_after"),
        })
    write_metrics_csv(rows, out_dir / "session.csv")
    written.append(out_dir / "session.csv")

    queue = log_json.get("queue", [])
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    if queue:
        axes[0].bar(range(len(queue)), [s for _, s in queue], color="#7a5195")
        axes[0].set_xticks(range(len(queue)))
        axes[0].set_xticklabels([str(k) for k, _ in queue], fontsize=8)
        axes[0].set_xlabel("slice (queue order)")
        axes[0].set_ylabel("uncertainty score")
    edited = [r for r in rows if r["dice_before"] is not None and r["dice_after"] is not None]
    if edited:
        x = np.arange(len(edited))
        axes[1].bar(x - 0.2, [r["dice_before"] for r in edited], width=0.4, label="before")
        axes[1].bar(x + 0.2, [r["dice_after"] for r in edited], width=0.4, label="after")
        axes[1].set_xticks(x)
        axes[1].set_xticklabels([str(r["slice"]) for r in edited])
        axes[1].set_xlabel("refined slice")
        axes[1].set_ylabel("Dice")
        axes[1].set_ylim(0, 1.05)
        axes[1].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_dir / "session.png", dpi=120)
    plt.close(fig)
    written.append(out_dir / "session.png")
    return written

"""Static post-hoc plots and metric tables, written to files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluate import ClosedLoopReport, OpenLoopReport
from .loop import TrainReport


def _prepare(path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def plot_training_curves(report: TrainReport, path) -> Path:
    path = _prepare(path)
    fig, ax = plt.subplots(figsize=(7, 4))
    offset = 0
    for stage in report.stages:
        xs = np.arange(offset, offset + len(stage.losses))
        ax.plot(xs, stage.losses, label=stage.stage, linewidth=1)
        offset += len(stage.losses)
    ax.set_xlabel("optimizer step")
    ax.set_ylabel("batch loss")
    ax.set_yscale("log")
    ax.legend()
    ax.set_title(f"training loss (seed {report.seed})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_trajectories(samples, path) -> Path:
    """samples: list of (pred (T,2), gt (T,2)) in ego frame, a panel each."""
    path = _prepare(path)
    n = len(samples)
    cols = min(4, max(1, n))
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(3 * cols, 3 * rows), squeeze=False)
    for i, (pred, gt) in enumerate(samples):
        ax = axes[i // cols][i % cols]
        gt = np.asarray(gt)
        pred = np.asarray(pred)
        ax.plot(gt[:, 0], gt[:, 1], "o-", color="tab:green", label="GT")
        ax.plot(pred[:, 0], pred[:, 1], "x--", color="tab:red", label="pred")
        ax.axhline(3.5, color="gray", linewidth=0.5)
        ax.axhline(-3.5, color="gray", linewidth=0.5)
        ax.set_aspect("equal", adjustable="datalim")
        if i == 0:
            ax.legend(fontsize=7)
    for j in range(n, rows * cols):
        axes[j // cols][j % cols].axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_abilities(report: ClosedLoopReport, path) -> Path:
    path = _prepare(path)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    families = list(report.ability)
    values = [report.ability[f] for f in families]
    ax.bar(families, values, color="tab:blue")
    ax.set_ylabel("success %")
    ax.set_ylim(0, 100)
    ax.set_title(
        f"per-family ability (SR {report.summary['success_rate']:.0f}%, "
        f"DS {report.summary['driving_score']:.1f})"
    )
    plt.setp(ax.get_xticklabels(), rotation=20, ha="right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def metrics_table(
    open_report: OpenLoopReport | None,
    closed_report: ClosedLoopReport | None,
) -> str:
    lines = []
    if open_report is not None:
        lines.append("open-loop")
        for horizon, value in sorted(open_report.l2_by_horizon.items()):
            lines.append(f"  L2 @ {horizon:.1f}s   {value:8.4f} m")
        lines.append(f"  avg L2      {open_report.avg_l2:8.4f} m")
        lines.append(f"  collision   {open_report.collision_rate:8.2f} %")
        lines.append(f"  frames      {open_report.n_frames:8d}")
    if closed_report is not None:
        s = closed_report.summary
        lines.append("closed-loop")
        lines.append(f"  driving score   {s['driving_score']:8.2f}")
        lines.append(f"  success rate    {s['success_rate']:8.2f} %")
        lines.append(f"  completion      {s['route_completion']:8.2f} %")
        lines.append(f"  efficiency      {s['efficiency']:8.2f}")
        lines.append(f"  comfortness     {s['comfortness']:8.2f}")
        for family, value in closed_report.ability.items():
            lines.append(f"  ability[{family}]  {value:.1f} %")
    return "\n".join(lines) + "\n"


def write_metrics_table(open_report, closed_report, path) -> Path:
    path = _prepare(path)
    path.write_text(metrics_table(open_report, closed_report))
    return path

"""Report figures, rendered headless to PNG files.

Each render function takes the already-computed report object and a target
path; nothing here recomputes numbers, so the figures always agree with the
delimited output written next to them.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import MetricsReport
from .sampling import BiasReport

_GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0


def _figure(width: float = 6.0):
    return plt.subplots(figsize=(width, width / _GOLDEN), dpi=130)


def save_loss_curve(loss_rows, path: str) -> None:
    """Span/offset/total loss per step."""
    fig, axis = _figure()
    steps = [r[0] for r in loss_rows]
    axis.plot(steps, [r[1] for r in loss_rows], label="span", lw=1.2)
    axis.plot(steps, [r[2] for r in loss_rows], label="offset", lw=1.2)
    axis.plot(steps, [r[3] for r in loss_rows], label="total", lw=1.6, color="k")
    axis.set_xlabel("step")
    axis.set_ylabel("loss")
    axis.set_yscale("log")
    axis.legend(frameon=False)
    axis.set_title("training loss")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_bias_histogram(report: BiasReport, path: str) -> None:
    """Distribution of IoU between original and quantised segments."""
    fig, axis = _figure()
    centres = (report.bucket_edges[:-1] + report.bucket_edges[1:]) / 2.0
    axis.bar(centres, report.histogram, width=0.09, color="#4878b0", edgecolor="k")
    axis.axvline(report.mean_iou, color="crimson", ls="--", lw=1.2,
                 label=f"mean {report.mean_iou:.3f}")
    axis.set_xlabel("IoU after boundary quantisation")
    axis.set_ylabel("annotations")
    axis.set_title("sampling bias")
    axis.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def save_metrics_chart(report: MetricsReport, path: str) -> None:
    """Recall table as bars plus the two boundary-error columns."""
    fig, (left, right) = plt.subplots(
        1, 2, figsize=(8.0, 8.0 / _GOLDEN), dpi=130
    )
    labels = [name for name, _ in report.table_rows() if name.startswith("R@")]
    values = [val for name, val in report.table_rows() if name.startswith("R@")]
    left.bar(range(len(values)), values, color="#4878b0", edgecolor="k")
    left.set_xticks(range(len(values)))
    left.set_xticklabels(labels, rotation=45, ha="right", fontsize=7)
    left.set_ylabel("%")
    left.set_ylim(0, 100)
    left.set_title(f"recall ({report.decode} decode)")
    right.bar(
        [0, 1],
        [report.boundary_error_hard, report.boundary_error],
        color=["#b04848", "#48b070"],
        edgecolor="k",
    )
    right.set_xticks([0, 1])
    right.set_xticklabels(["hard", "refined"])
    right.set_ylabel("mean boundary error (frames)")
    right.set_title("quantisation recovery")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)

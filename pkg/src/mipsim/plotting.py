"""Figures for scenario reports: per-packet delay and cumulative loss."""

from __future__ import annotations

from pathlib import Path
from typing import List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .harness import MetricsReport  # noqa: E402

STYLES = {
    "original": dict(color="#d62728", marker="s", linestyle="-"),
    "onelevel": dict(color="#1f77b4", marker="^", linestyle="--"),
    "twolevel": dict(color="#2ca02c", marker="o", linestyle="-."),
}
LEGEND = {"original": "Original MIP", "onelevel": "One level up", "twolevel": "Two levels up (SHA)"}


def _figure(width: float = 7.0, height: float = 4.2):
    fig, ax = plt.subplots(figsize=(width, height))
    ax.grid(True, linestyle=":", linewidth=0.6)
    ax.tick_params(labelsize=9)
    return fig, ax


def _shade_window(ax, report: MetricsReport) -> None:
    lo, hi = report.handoff_window
    ax.axvspan(lo, hi, color="0.9", zorder=0, label="handoff window")


def plot_delay(report: MetricsReport, path) -> Path:
    fig, ax = _figure()
    _shade_window(ax, report)
    for s in report.strategies:
        pts = report[s].delays
        if not pts:
            continue
        ax.plot([t for t, _, _ in pts], [d for _, d, _ in pts], markersize=3, linewidth=1,
                label=LEGEND[s.label], **STYLES[s.label])
    ax.set_xlabel("simulation time (s)")
    ax.set_ylabel("end-to-end delay (s)")
    ax.set_title(f"Scenario {report.scenario}: packet delay")
    ax.set_xlim(0, report.horizon)
    ax.legend(fontsize=8, loc="upper left")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def plot_loss(report: MetricsReport, path) -> Path:
    fig, ax = _figure()
    _shade_window(ax, report)
    for s in report.strategies:
        times = report[s].loss_times
        xs = [0.0] + times + [report.horizon]
        ys = [0] + list(range(1, len(times) + 1)) + [len(times)]
        style = dict(STYLES[s.label])
        style.pop("marker")
        ax.step(xs, ys, where="post", linewidth=1.5, label=LEGEND[s.label], **style)
    ax.set_xlabel("simulation time (s)")
    ax.set_ylabel("cumulative packets lost")
    ax.set_title(f"Scenario {report.scenario}: packet loss")
    ax.set_xlim(0, report.horizon)
    ax.yaxis.get_major_locator().set_params(integer=True)
    ax.legend(fontsize=8, loc="upper left")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def render_figures(report: MetricsReport, out_dir) -> List[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sid = report.scenario
    return [plot_delay(report, out / f"delay_{sid}.png"),
            plot_loss(report, out / f"loss_{sid}.png")]

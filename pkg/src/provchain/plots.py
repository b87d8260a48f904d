"""Figure rendering for benchmark reports.

Writes PNG files next to the delimited output: probe counts and median query
times per strategy across target proportions, plus the per-stage write-cost
bars from the lifecycle cost report.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .tracing import BenchReport, Strategy  # noqa: E402

_STYLE = {
    Strategy.NORMAL: dict(color="#c44e52", marker="o"),
    Strategy.FAST: dict(color="#4c72b0", marker="s"),
    Strategy.IBFT: dict(color="#55a868", marker="^"),
}


def _series(report: BenchReport, strategy: Strategy, attr: str):
    rows = [r for r in report.results if r.strategy is strategy]
    rows.sort(key=lambda r: r.proportion)
    return [r.proportion for r in rows], [getattr(r, attr) for r in rows]


def _line_figure(reports: list[BenchReport], attr: str, ylabel: str,
                 out_path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    many = len(reports) > 1
    for report in reports:
        for strategy in Strategy:
            xs, ys = _series(report, strategy, attr)
            if not xs:
                continue
            label = strategy.value
            if many:
                label += f" (target {report.placement.value})"
            style = dict(_STYLE[strategy])
            if many and report.placement.value == "last":
                style["linestyle"] = "--"
            ax.plot(xs, ys, label=label, **style)
    ax.set_yscale("log")
    ax.set_xlabel("share of transactions belonging to the product")
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def _cost_figure(report: BenchReport, out_path: Path) -> Path:
    labels = [f"{c.tx_type}\n({c.stage})" for c in report.cost]
    values = [c.bytes_written for c in report.cost]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.bar(labels, values, color="#4c72b0")
    ax.set_ylabel("world-state bytes written")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_benchmark_figures(reports: list[BenchReport], stem: str | Path) -> list[Path]:
    """Render probe, time, and cost figures; returns the written paths."""
    stem = Path(stem)
    written = [
        _line_figure(reports, "probes", "items probed per query",
                     stem.with_name(stem.name + "-probes.png")),
        _line_figure(reports, "trial_median_ns", "median query time (ns)",
                     stem.with_name(stem.name + "-times.png")),
        _cost_figure(reports[0], stem.with_name(stem.name + "-cost.png")),
    ]
    return written

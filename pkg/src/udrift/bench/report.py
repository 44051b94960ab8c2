"""Benchmark report rendering: delimited text, markdown, JSON rows and
a bar-chart figure saved next to the delimited output."""

from __future__ import annotations

import json
from pathlib import Path

from . import BenchReport, format_llr, format_mbps

COLUMNS = ("label", "cipher", "mbit/s", "LLR")


def _cells(row) -> tuple[str, str, str, str]:
    if row.failed:
        return (row.label, row.cipher, "failed", "-")
    return (row.label, row.cipher, format_mbps(row.mbps), format_llr(row.llr))


def render_report(report: BenchReport, fmt: str = "tsv") -> str:
    if fmt == "tsv":
        lines = ["\t".join(COLUMNS)]
        lines += ["\t".join(_cells(r)) for r in report.rows]
        return "\n".join(lines) + "\n"
    if fmt == "markdown":
        lines = ["| " + " | ".join(COLUMNS) + " |",
                 "|" + "|".join(["---"] * len(COLUMNS)) + "|"]
        lines += ["| " + " | ".join(_cells(r)) + " |" for r in report.rows]
        if report.probe:
            lines.append("")
            lines.append(f"disk: read {format_mbps(report.probe.read_mbps)} mbit/s, "
                         f"write {format_mbps(report.probe.write_mbps)} mbit/s; "
                         f"link: {report.link_desc}")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def json_rows(report: BenchReport) -> list[dict]:
    rows = []
    for r in report.rows:
        rows.append({
            "label": r.label,
            "cipher": r.cipher,
            "mbps": round(r.mbps, 3),
            "llr": round(r.llr, 4),
            "bytes": r.payload_bytes,
            "seconds": round(r.seconds, 6),
        })
    return rows


def render_json(report: BenchReport) -> str:
    return "\n".join(json.dumps(row) for row in json_rows(report)) + "\n"


def render_figure(report: BenchReport, path: str | Path) -> Path:
    """Bar chart of the rows, LLR annotated above each bar."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    labels = [f"{r.label}\n{r.cipher}" for r in report.rows]
    speeds = [r.mbps for r in report.rows]
    colors = ["#d62728" if r.failed else
              ("#1f77b4" if r.label == "udrift" else "#7f7f7f")
              for r in report.rows]
    fig, ax = plt.subplots(figsize=(1.8 + 1.4 * len(labels), 4.0))
    bars = ax.bar(labels, speeds, color=colors)
    for bar, row in zip(bars, report.rows):
        note = "failed" if row.failed else f"LLR {format_llr(row.llr)}"
        ax.annotate(note, (bar.get_x() + bar.get_width() / 2, bar.get_height()),
                    ha="center", va="bottom", fontsize=8)
    ax.set_ylabel("goodput (mbit/s)")
    title = "transfer benchmark"
    if report.link_desc:
        title += f" ({report.link_desc})"
    ax.set_title(title, fontsize=10)
    ax.margins(y=0.15)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path

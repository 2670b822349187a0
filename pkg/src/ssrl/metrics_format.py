"""CSV and markdown rendering of metrics reports (3 decimal places)."""

from __future__ import annotations

from .phantom import CLASS_NAMES

CSV_HEADER = "model," + ",".join(CLASS_NAMES) + ",mean"


def csv_row(name: str, report) -> str:
    cells = [f"{d:.3f}" for d in report.dice] + [f"{report.mean_dice:.3f}"]
    return name + "," + ",".join(cells)


def markdown_table(rows) -> str:
    """Markdown table for (name, report) pairs, one row per configuration."""
    header = "| model | " + " | ".join(CLASS_NAMES) + " | mean |"
    rule = "|" + " --- |" * (len(CLASS_NAMES) + 2)
    lines = [header, rule]
    for name, report in rows:
        cells = [f"{d:.3f}" for d in report.dice] + [f"{report.mean_dice:.3f}"]
        lines.append("| " + name + " | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"

"""Static SVG charts from CSV files (loss curves, predicted vs. actual series, metric tables)."""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import FormatError  # noqa: E402


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _value(s: str) -> float:
    return float(s) if s.strip() else float("nan")


def read_table(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise FormatError(f"{path}: need a header and at least one data row")
    return rows[0], rows[1:]


def plot_csv(csv_path, svg_path, title: str | None = None) -> None:
    """Line chart of every numeric column against the first; bar chart if the first column is text."""
    header, rows = read_table(csv_path)
    numeric = []
    for k in range(1, len(header)):
        cells = [r[k] for r in rows if len(r) > k and r[k].strip()]
        if cells and all(_is_number(c) for c in cells):
            numeric.append(k)
    if not numeric:
        raise FormatError(f"{csv_path}: no numeric columns to plot")
    plt.rcParams["svg.hashsalt"] = "m3r"
    fig, ax = plt.subplots(figsize=(8, 4.5))
    if all(_is_number(r[0]) for r in rows):
        x = [float(r[0]) for r in rows]
        for k in numeric:
            ax.plot(x, [_value(r[k]) for r in rows], label=header[k], linewidth=1.2)
        ax.set_xlabel(header[0])
    else:
        labels = [r[0] for r in rows]
        width = 0.8 / len(numeric)
        for n, k in enumerate(numeric):
            xs = [i + n * width for i in range(len(rows))]
            ax.bar(xs, [_value(r[k]) for r in rows], width=width, label=header[k])
        ax.set_xticks([i + 0.4 - width / 2 for i in range(len(rows))], labels)
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    ax.set_title(title or str(csv_path))
    fig.tight_layout()
    fig.savefig(svg_path, format="svg", metadata={"Date": None})
    plt.close(fig)

"""Residual and loss curve rendering.

Output is deterministic: fixed figure size, no timestamps, variants drawn
in sorted order, so re-rendering the same CSV overwrites the file with
identical bytes.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

FIGSIZE = (6.4, 4.2)


class TraceParseError(ValueError):
    """The CSV does not follow the documented trace schema."""


def read_traces(csv_path) -> dict[str, tuple[list[int], list[float]]]:
    """Parse a ``variant,k,residual`` file into per-variant traces.

    Residuals must be strictly positive: the residual figure is log-scaled.
    """
    traces: dict[str, tuple[list[int], list[float]]] = {}
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["variant", "k", "residual"]:
            raise TraceParseError(f"{csv_path}: expected header variant,k,residual")
        for ln, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise TraceParseError(f"{csv_path}:{ln}: expected 3 columns, got {len(row)}")
            try:
                variant, k, residual = row[0], int(row[1]), float(row[2])
            except ValueError as err:
                raise TraceParseError(f"{csv_path}:{ln}: {err}") from err
            if not residual > 0.0:
                raise TraceParseError(
                    f"{csv_path}:{ln}: residual {residual} is not positive; "
                    "log-scale plotting needs positive values"
                )
            ks, rs = traces.setdefault(variant, ([], []))
            ks.append(k)
            rs.append(residual)
    if not traces:
        raise TraceParseError(f"{csv_path}: no data rows")
    return traces


def read_loss(csv_path) -> tuple[list[int], list[float]]:
    """Parse a ``step,loss`` file."""
    steps: list[int] = []
    losses: list[float] = []
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["step", "loss"]:
            raise TraceParseError(f"{csv_path}: expected header step,loss")
        for ln, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise TraceParseError(f"{csv_path}:{ln}: expected 2 columns, got {len(row)}")
            try:
                steps.append(int(row[0]))
                losses.append(float(row[1]))
            except ValueError as err:
                raise TraceParseError(f"{csv_path}:{ln}: {err}") from err
    if not steps:
        raise TraceParseError(f"{csv_path}: no data rows")
    return steps, losses


def _save(fig, out_image_path) -> Path:
    out = Path(out_image_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=110)
    plt.close(fig)
    return out


def plot_residuals(csv_path, out_image_path) -> Path:
    """Log-scale residual-vs-iteration curves, one line per variant."""
    traces = read_traces(csv_path)
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for variant in sorted(traces):
        ks, rs = traces[variant]
        ax.semilogy(ks, rs, marker="o", markersize=3, label=variant)
    ax.set_xlabel("iteration")
    ax.set_ylabel("relative residual")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return _save(fig, out_image_path)


def plot_loss(csv_paths, out_image_path) -> Path:
    """Linear-scale loss curves; several files overlay on one axis."""
    if isinstance(csv_paths, (str, Path)):
        csv_paths = [csv_paths]
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for path in csv_paths:
        steps, losses = read_loss(path)
        ax.plot(steps, losses, label=Path(path).stem)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return _save(fig, out_image_path)

"""Figure generation from experiment CSV files.

Consumes only the documented CSV schemas: experiment rows
(experiment_id, ..., method, k_features, bound, exact_value, error_bound,
l1_error, gain_bound, relative_error_bound, iterations, gap, converged,
wall_time_ms) and solver traces (iteration, primal, dual, gap).  Rows are
grouped, aggregated into mean curves with +-1 standard deviation bands,
and rendered with a fixed style so identical inputs produce identical
images.

Figure kinds:
  hierarchy    bound versus feature count, one panel per CSV
  coupling     error metric versus coupling strength (or temperature)
  gain         gain metric versus the sweep variable
  convergence  duality gap versus iteration, logarithmic y, one line per CSV
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["FigureSpec", "SchemaError", "read_rows", "render", "KINDS"]

KINDS = ("hierarchy", "coupling", "gain", "convergence")

_DEFAULTS = {
    "hierarchy": ("k_features", "bound", "method"),
    "coupling": ("strength_or_epsilon", "error_bound", "method"),
    "gain": ("strength_or_epsilon", "gain_bound", "method"),
    "convergence": ("iteration", "gap", None),
}

_STYLE = {
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
}


class SchemaError(ValueError):
    """A referenced column is missing or a group is empty."""


@dataclass(frozen=True)
class FigureSpec:
    csv_paths: tuple[str, ...]
    kind: str
    out_path: str
    x: str | None = None
    y: str | None = None
    group_by: str | None = None
    titles: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"unknown figure kind {self.kind!r}")
        if not self.csv_paths:
            raise SchemaError("at least one CSV input is required")

    def columns(self) -> tuple[str, str, str | None]:
        x_default, y_default, group_default = _DEFAULTS[self.kind]
        return (self.x or x_default, self.y or y_default,
                self.group_by or group_default)


def read_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _require_columns(rows: list[dict], path, names) -> None:
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    header = rows[0].keys()
    for name in names:
        if name is not None and name not in header:
            raise SchemaError(f"{path}: column {name!r} missing from header")


def _numeric(rows, column, path):
    out = []
    for row in rows:
        value = row[column]
        if value == "":
            continue
        try:
            out.append((row, float(value)))
        except ValueError:
            raise SchemaError(f"{path}: non-numeric value {value!r} in {column!r}")
    if not out:
        raise SchemaError(f"{path}: column {column!r} has no usable values")
    return out


def _aggregate(rows, x_col, y_col, path):
    """Mean and standard deviation of y at each x, in increasing x order."""
    buckets: dict[float, list[float]] = {}
    for row, y in _numeric(rows, y_col, path):
        if row[x_col] == "":
            continue
        buckets.setdefault(float(row[x_col]), []).append(y)
    if not buckets:
        raise SchemaError(f"{path}: no rows with both {x_col!r} and {y_col!r}")
    xs = np.array(sorted(buckets))
    means = np.array([np.mean(buckets[x]) for x in xs])
    stds = np.array([np.std(buckets[x]) for x in xs])
    counts = np.array([len(buckets[x]) for x in xs])
    return xs, means, stds, counts


def _panel(ax, rows, x_col, y_col, group_col, path):
    if group_col is None:
        groups = {"": rows}
    else:
        groups = {}
        for row in rows:
            groups.setdefault(row[group_col], []).append(row)
    drawn = 0
    for label in sorted(groups):
        # reference rows (e.g. the exact method) leave derived metrics
        # empty; groups without any usable value are skipped, not errors
        if all(row[y_col] == "" for row in groups[label]):
            continue
        xs, means, stds, counts = _aggregate(groups[label], x_col, y_col, path)
        line, = ax.plot(xs, means, marker="o", markersize=2.5,
                        label=label or None)
        if np.any(counts > 1):
            ax.fill_between(xs, means - stds, means + stds,
                            alpha=0.2, color=line.get_color())
        drawn += 1
    if drawn == 0:
        raise SchemaError(f"{path}: no group has usable {y_col!r} values")
    ax.set_xlabel(x_col)
    ax.set_ylabel(y_col)
    if group_col is not None:
        ax.legend(fontsize=7)


def render(spec: FigureSpec) -> str:
    """Render the figure and return the output path."""
    x_col, y_col, group_col = spec.columns()
    with plt.rc_context(_STYLE):
        if spec.kind == "convergence":
            fig, ax = plt.subplots(figsize=(4.2, 3.2))
            for path in spec.csv_paths:
                rows = read_rows(path)
                _require_columns(rows, path, (x_col, y_col))
                pairs = _numeric(rows, y_col, path)
                xs = np.array([float(r[x_col]) for r, _ in pairs])
                ys = np.array([y for _, y in pairs])
                ax.plot(xs, ys, label=Path(path).stem)
            ax.set_yscale("log")
            ax.set_xlabel(x_col)
            ax.set_ylabel(y_col)
            if len(spec.csv_paths) > 1:
                ax.legend(fontsize=7)
        else:
            n_panels = len(spec.csv_paths)
            fig, axes = plt.subplots(1, n_panels,
                                     figsize=(3.6 * n_panels, 3.2),
                                     squeeze=False)
            for index, path in enumerate(spec.csv_paths):
                rows = read_rows(path)
                _require_columns(rows, path, (x_col, y_col, group_col))
                ax = axes[0][index]
                _panel(ax, rows, x_col, y_col, group_col, path)
                if spec.titles and index < len(spec.titles):
                    ax.set_title(spec.titles[index], fontsize=9)
        fig.tight_layout()
        fig.savefig(spec.out_path)
        plt.close(fig)
    return spec.out_path

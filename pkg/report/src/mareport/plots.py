"""Render convergence and oscillation plots from solver CSV files.

The CSVs are the only contract with the solver package: this tool never
imports it.  Rendering is read-only and byte-idempotent (no timestamps are
embedded in the images).
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


class EmptyData(Exception):
    """The CSV has a header but no usable rows."""


class MissingColumn(Exception):
    """A requested column is absent from the CSV header."""


@dataclass
class PlotSpec:
    csv_path: str
    x: str
    ys: Sequence[str]
    log_x: bool = False
    log_y: bool = False
    out_path: str = "plot.png"
    title: Optional[str] = None


def read_columns(path: str, wanted: Sequence[str]) -> Tuple[Dict[str, List[float]], int]:
    """Columns as float lists plus the count of skipped (unparsable) cells."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyData(f"{path}: no header line")
        for name in wanted:
            if name not in header:
                raise MissingColumn(f"{path}: column {name!r} not in header {header}")
        idx = {name: header.index(name) for name in wanted}
        cols: Dict[str, List[float]] = {name: [] for name in wanted}
        skipped = 0
        for row in reader:
            values = {}
            ok = True
            for name, i in idx.items():
                try:
                    v = float(row[i])
                except (ValueError, IndexError):
                    ok = False
                    break
                if math.isnan(v):
                    ok = False
                    break
                values[name] = v
            if ok:
                for name, v in values.items():
                    cols[name].append(v)
            else:
                skipped += 1
    if not any(cols[name] for name in wanted):
        raise EmptyData(f"{path}: no data rows")
    return cols, skipped


def _render(spec: PlotSpec, ylabel: str) -> int:
    wanted = [spec.x, *spec.ys]
    cols, skipped = read_columns(spec.csv_path, wanted)
    if skipped:
        print(f"warning: skipped {skipped} rows with missing values", file=sys.stderr)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for y in spec.ys:
        ax.plot(cols[spec.x], cols[y], marker="o", markersize=3, label=y)
    if spec.log_x:
        ax.set_xscale("log")
    if spec.log_y:
        ax.set_yscale("log")
    ax.set_xlabel(spec.x)
    ax.set_ylabel(ylabel)
    if spec.title:
        ax.set_title(spec.title)
    if len(spec.ys) > 1:
        ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(spec.out_path, dpi=120, metadata={"Software": "ma-report"})
    plt.close(fig)
    return skipped


def render_convergence(spec: PlotSpec) -> str:
    """Residual-history / decay plot; y axis defaults to log scale."""
    _render(spec, ylabel=", ".join(spec.ys))
    return spec.out_path


def render_oscillation(spec: PlotSpec) -> str:
    """Oscillation vs schedule parameter; x axis defaults to log scale."""
    _render(spec, ylabel=", ".join(spec.ys))
    return spec.out_path


_KINDS = {
    "convergence": dict(x="iteration", ys=("sup_residual",), log_x=False, log_y=True),
    "oscillation": dict(x="eps_or_t", ys=("oscillation",), log_x=True, log_y=False),
    "capacity-profile": dict(x="s", ys=("a",), log_x=False, log_y=False),
    "warm-start": dict(x="eps_or_t", ys=("warm_dist",), log_x=True, log_y=True),
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="report",
        description="Render torusma CSV outputs into PNG plots",
    )
    parser.add_argument("kind", choices=sorted(_KINDS))
    parser.add_argument("--csv", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--x", help="x column (defaults per plot kind)")
    parser.add_argument("--y", help="comma-separated y columns (defaults per plot kind)")
    parser.add_argument("--logx", action="store_true")
    parser.add_argument("--logy", action="store_true")
    parser.add_argument("--title")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    defaults = _KINDS[args.kind]
    spec = PlotSpec(
        csv_path=args.csv,
        x=args.x or defaults["x"],
        ys=tuple(args.y.split(",")) if args.y else defaults["ys"],
        log_x=args.logx or defaults["log_x"],
        log_y=args.logy or defaults["log_y"],
        out_path=args.out,
        title=args.title,
    )
    try:
        if args.kind == "convergence":
            render_convergence(spec)
        else:
            render_oscillation(spec)
    except (EmptyData, MissingColumn, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

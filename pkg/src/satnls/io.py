"""Writers and readers for diagnostics, reports, manifests and field snapshots."""
from __future__ import annotations

import csv
import json
import math
import time
from pathlib import Path

import numpy as np

from . import __version__
from .grid import SpectralGrid, make_grid
from .integrator import DiagnosticsSeries


class OutputError(OSError):
    """An I/O failure, with the offending path in the message."""


def _guarded(path, action):
    try:
        return action()
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _num(x) -> str:
    # repr gives the shortest decimal that round-trips
    return repr(float(x))


def csv_columns(series: DiagnosticsSeries) -> list[str]:
    return ["t", "mass", "energy", "h1_norm"] + [f"hs_{s:g}" for s in series.norms]


def write_diagnostics_csv(series: DiagnosticsSeries, path) -> Path:
    path = Path(path)
    rows = [csv_columns(series)]
    for i in range(len(series)):
        row = [series.times[i], series.mass[i], series.energy[i], series.h1_norm[i]]
        row += [series.hs[s][i] for s in series.norms]
        rows.append([_num(v) for v in row])

    def write():
        with path.open("w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)

    _guarded(path, write)
    return path


def read_diagnostics_csv(path) -> dict[str, list[float]]:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        cols: dict[str, list[float]] = {name: [] for name in header}
        for row in reader:
            for name, val in zip(header, row):
                cols[name].append(float(val))
    return cols


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_report(report, path) -> Path:
    """Serialize a study report (anything with ``to_dict``, or a dict) as JSON."""
    path = Path(path)
    data = report.to_dict() if hasattr(report, "to_dict") else report
    text = json.dumps(_jsonable(data), indent=2) + "\n"
    _guarded(path, lambda: path.write_text(text))
    return path


def write_gnuplot(report, csv_name: str | None, path) -> Path:
    """Plot script for a report: log-log error curves, or diagnostics vs time."""
    path = Path(path)
    data = report.to_dict() if hasattr(report, "to_dict") else report
    lines = ["# gnuplot script", "set terminal pngcairo size 800,600",
             f"set output '{path.stem}.png'", "set key left top"]
    h = data.get("h")
    errors = data.get("errors") or {}
    if h and errors:
        lines += ["set logscale xy", "set xlabel 'h'", "set ylabel 'error'"]
        blocks, plots = [], []
        for i, (label, values) in enumerate(errors.items()):
            blocks.append(f"${label.replace('-', '_')} << EOD")
            blocks += [f"{_num(x)} {_num(y)}" for x, y in zip(h, values)]
            blocks.append("EOD")
            plots.append(f"${label.replace('-', '_')} using 1:2 with linespoints title '{label}'")
        lines += blocks + ["plot " + ", \\\n     ".join(plots)]
    elif csv_name:
        lines += ["set datafile separator ','", "set xlabel 't'",
                  f"plot '{csv_name}' using 1:2 with lines title 'mass', "
                  f"'' using 1:4 with lines title 'h1_norm'"]
    else:
        lines.append("# nothing to plot for this report")
    _guarded(path, lambda: path.write_text("\n".join(lines) + "\n"))
    return path


def write_manifest(path, digest: str, seeds: dict[str, int], outputs: list[str],
                   wall_clock: float, extra: dict | None = None) -> Path:
    path = Path(path)
    data = {
        "config_digest": digest,
        "tool": "satnls",
        "version": __version__,
        "wall_clock_seconds": wall_clock,
        "finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "seeds": seeds,
        "outputs": sorted(outputs),
    }
    if extra:
        data.update(extra)
    text = json.dumps(_jsonable(data), indent=2) + "\n"
    _guarded(path, lambda: path.write_text(text))
    return path


def write_snapshot(path, grid: SpectralGrid, t: float, values: np.ndarray) -> Path:
    """Field dump keyed by time and grid descriptor (numpy ``.npz``)."""
    path = Path(path)

    def write():
        with path.open("wb") as fh:
            np.savez(fh, t=np.float64(t), d=grid.d, n=grid.n, L=np.float64(grid.L),
                     values=np.asarray(values, dtype=complex).reshape(grid.shape))

    _guarded(path, write)
    return path


def read_snapshot(path) -> tuple[SpectralGrid, float, np.ndarray]:
    try:
        with np.load(Path(path)) as data:
            grid = make_grid(int(data["d"]), int(data["n"]), float(data["L"]))
            return grid, float(data["t"]), np.array(data["values"])
    except (OSError, KeyError) as exc:
        raise OutputError(f"cannot read snapshot {path}: {exc}") from exc

"""Plain-text table and CSV input/output."""

import csv
import math
from pathlib import Path

import numpy as np

from .errors import ParameterError


def fmt(x):
    """Format a number with 17 significant digits, keeping inf/nan readable."""
    if isinstance(x, str):
        return x
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def read_table(path):
    """Read a two-column (abscissa, value) table.

    Blank lines and lines starting with ``#`` are skipped. Columns may be
    separated by whitespace or commas. The first column must be strictly
    increasing.
    """
    xs, ys = [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise ParameterError(f"{path}:{lineno}: expected two columns, got {len(parts)}")
        try:
            xs.append(float(parts[0]))
            ys.append(float(parts[1]))
        except ValueError as exc:
            raise ParameterError(f"{path}:{lineno}: {exc}") from None
    xs = np.asarray(xs)
    ys = np.asarray(ys)
    check_table(xs, ys)
    return xs, ys


def check_table(xs, ys):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape:
        raise ParameterError("table columns must be 1-D and of equal length")
    if xs.size < 2:
        raise ParameterError("table needs at least two rows")
    if np.any(np.diff(xs) <= 0):
        raise ParameterError("table abscissae must be strictly increasing")
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise ParameterError("table entries must be finite")


def write_table(path, xs, ys, header=None):
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        if header:
            fh.write(f"# {header}\n")
        for x, y in zip(xs, ys):
            fh.write(f"{fmt(x)} {fmt(y)}\n")


def write_csv(path, header, rows):
    """Write a comma-separated UTF-8 file with LF line endings."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]

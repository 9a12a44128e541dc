"""CSV and JSON persistence.

Floats are always written with 17 significant digits so every value
round-trips bit-exactly through text.
"""

from __future__ import annotations

import csv
import json
import math
import sys
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .core import MrhlpModel, TimeSeries, validate_series
from .exceptions import DataError, NonIncreasingTime, ParseError, RaggedRow
from .synthetic import DEFAULT_COV_FLOOR, SimulationSpec


def fmt_float(x) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise DataError(f"cannot serialize non-finite value {x}")
    return format(x, ".17g")


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON text with 17-significant-digit floats and insertion-ordered keys."""
    return _encode(obj, indent, 0) + "\n"


@contextmanager
def _open_out(path):
    if path is None or str(path) == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


@contextmanager
def _open_in(path):
    if str(path) == "-":
        yield sys.stdin
    else:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            yield fh


def write_json(path, obj) -> None:
    with _open_out(path) as fh:
        fh.write(dumps(obj))


def read_json(path):
    with _open_in(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.lineno, exc.colno, exc.msg) from exc


def write_model(path, model: MrhlpModel, metadata=None) -> None:
    write_json(path, model.to_dict(metadata))


def read_model(path) -> MrhlpModel:
    return MrhlpModel.from_dict(read_json(path))


def read_simulation_spec(path) -> SimulationSpec:
    """Load ``{"model": <model document>, "n", "t_start", "t_end", "seed"[, "cov_floor"]}``."""
    doc = read_json(path)
    try:
        return SimulationSpec(
            MrhlpModel.from_dict(doc["model"]),
            int(doc["n"]),
            float(doc.get("t_start", 0.0)),
            float(doc.get("t_end", 1.0)),
            int(doc.get("seed", 0)),
            float(doc.get("cov_floor", DEFAULT_COV_FLOOR)),
        )
    except KeyError as exc:
        raise DataError(f"simulation spec is missing field {exc}") from exc


def spec_to_dict(spec: SimulationSpec) -> dict:
    return {
        "model": spec.model.to_dict(),
        "n": spec.n,
        "t_start": spec.t_start,
        "t_end": spec.t_end,
        "seed": spec.seed,
        "cov_floor": spec.cov_floor,
    }


# -- CSV -------------------------------------------------------------------


def _parse_rows(fh):
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("CSV file is empty") from None
    header = [h.strip() for h in header]
    rows = []
    for row in reader:
        if not row or all(not f.strip() for f in row):
            continue
        if len(row) != len(header):
            raise RaggedRow(reader.line_num, len(header), len(row))
        rows.append((reader.line_num, row))
    return header, rows


def _to_float(text, line, column):
    try:
        return float(text)
    except ValueError:
        raise ParseError(line, column, f"{text!r} is not a number") from None


def _to_label(text, line, column):
    value = _to_float(text, line, column)
    if not value.is_integer() or value < 1:
        raise ParseError(line, column, f"label {text!r} is not a positive integer")
    return int(value)


def read_csv(path, time_column: str = "t", label_column: str = "label"):
    """Read a time series (and ground-truth labels, if present) from CSV.

    The header must name a ``t`` column; every other column except
    ``label`` becomes a data channel in file order.

    Returns
    -------
    series : TimeSeries
    labels : ndarray of int or None
    """
    with _open_in(path) as fh:
        header, rows = _parse_rows(fh)
    if time_column not in header:
        raise ParseError(1, time_column, "missing time column")
    ti = header.index(time_column)
    li = header.index(label_column) if label_column in header else None
    data_cols = [j for j in range(len(header)) if j not in (ti, li)]
    if not rows:
        raise DataError("CSV file has no data rows")
    t = np.empty(len(rows))
    Y = np.empty((len(rows), len(data_cols)))
    labels = np.empty(len(rows), dtype=np.int64) if li is not None else None
    for i, (line, row) in enumerate(rows):
        t[i] = _to_float(row[ti], line, header[ti])
        for c, j in enumerate(data_cols):
            Y[i, c] = _to_float(row[j], line, header[j])
        if li is not None:
            labels[i] = _to_label(row[li], line, header[li])
    series = TimeSeries(t, Y, tuple(header[j] for j in data_cols))
    try:
        validate_series(series)
    except NonIncreasingTime as exc:
        raise NonIncreasingTime(exc.index, line=rows[exc.index][0]) from None
    return series, labels


def read_labels(path, label_column: str = "label") -> np.ndarray:
    """Only the ``label`` column of a CSV file."""
    with _open_in(path) as fh:
        header, rows = _parse_rows(fh)
    if label_column not in header:
        raise ParseError(1, label_column, "missing label column")
    j = header.index(label_column)
    return np.array([_to_label(row[j], line, label_column) for line, row in rows], dtype=np.int64)


def write_table(path, header, rows) -> None:
    with _open_out(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt_float(v) if isinstance(v, (float, np.floating)) else v for v in row])


def write_series(path, series: TimeSeries, labels=None) -> None:
    header = ["t", *series.channels] + (["label"] if labels is not None else [])
    rows = []
    for i in range(series.n):
        row = [float(series.t[i]), *map(float, series.Y[i])]
        if labels is not None:
            row.append(int(labels[i]))
        rows.append(row)
    write_table(path, header, rows)


def write_labels(path, t, labels) -> None:
    write_table(path, ["t", "label"], ([float(a), int(b)] for a, b in zip(t, labels)))


def write_pi_trace(path, t, pi) -> None:
    K = pi.shape[1]
    header = ["t", *(f"pi{k + 1}" for k in range(K))]
    write_table(path, header, ([float(a), *map(float, row)] for a, row in zip(t, pi)))


def read_pi_trace(path):
    with _open_in(path) as fh:
        header, rows = _parse_rows(fh)
    cols = [j for j, h in enumerate(header) if h.startswith("pi")]
    if "t" not in header or not cols:
        raise ParseError(1, "pi1", "expected columns t, pi1..piK")
    ti = header.index("t")
    t = np.array([_to_float(r[ti], line, "t") for line, r in rows])
    pi = np.array([[_to_float(r[j], line, header[j]) for j in cols] for line, r in rows])
    return t, pi


def confusion_csv(path, classes, confusion) -> None:
    header = ["true\\obtained", *map(str, classes)]
    write_table(path, header, ([c, *map(int, row)] for c, row in zip(classes, confusion)))


def ranking_csv(path, entries) -> None:
    header = ["K", "p", "u", "loglik", "nu", "bic", "converged"]
    write_table(path, header, ([e.row()[h] for h in header] for e in entries))


def ensure_parent(path) -> None:
    if path not in (None, "-"):
        Path(path).parent.mkdir(parents=True, exist_ok=True)

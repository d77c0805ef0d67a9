"""Trace CSV and summary JSON serialization."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import re
from pathlib import Path

import numpy as np

from .errors import DataError
from .solver import RunTrace, StepRecord

TRACE_SCHEMA_VERSION = 1
_BASE_COLUMNS = ("err_norm_e", "eps_k", "eps_gap", "f_xk")
_DERIVED = ("track_err", "run_avg", "regret")


def fmt(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return "%.17g" % v


def trace_columns(n, rhs_names=()):
    return (["k"] + [f"x[{i}]" for i in range(n)] + [f"y[{i}]" for i in range(n)]
            + list(_BASE_COLUMNS) + list(_DERIVED) + list(rhs_names))


def trace_to_csv(trace: RunTrace, report=None) -> str:
    """CSV text for a trace; derived columns are NaN when ``report`` is None."""
    if not trace.records:
        raise DataError("cannot serialize an empty trace")
    n = trace.records[0].x.size
    K = len(trace)
    nan = np.full(K, np.nan)
    derived = [nan, nan, nan]
    rhs = {}
    if report is not None:
        derived = [report.tracking_error, report.running_average,
                   nan if report.regret is None else report.regret]
        rhs = report.rhs_columns()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(trace_columns(n, rhs))
    for i, r in enumerate(trace.records):
        row = [str(r.k)] + [fmt(v) for v in r.x] + [fmt(v) for v in r.y]
        row += [fmt(r.error_norm), fmt(r.eps), fmt(r.eps_gap), fmt(r.objective)]
        row += [fmt(col[i]) for col in derived]
        row += [fmt(col[i]) for col in rhs.values()]
        w.writerow(row)
    return buf.getvalue()


def write_trace(path, trace: RunTrace, report=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(trace_to_csv(trace, report), encoding="utf-8")
    return path


_X_COL = re.compile(r"^([xy])\[(\d+)\]$")


def parse_trace(text: str, x0=None, config=None, seed=0):
    """Inverse of :func:`trace_to_csv`.

    Returns ``(trace, extra)`` where ``extra`` maps the derived and bound
    columns to arrays.
    """
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise DataError("empty trace file")
    header, body = rows[0], rows[1:]
    if not header or header[0] != "k":
        raise DataError("trace header must start with 'k'")
    xi = [j for j, h in enumerate(header) if h.startswith("x[")]
    yi = [j for j, h in enumerate(header) if h.startswith("y[")]
    for cols, tag in ((xi, "x"), (yi, "y")):
        idx = [int(_X_COL.match(header[j]).group(2)) for j in cols]
        if idx != list(range(len(idx))):
            raise DataError(f"{tag} columns are not contiguous")
    if len(xi) != len(yi) or not xi:
        raise DataError("trace must carry matching x and y columns")
    pos = {h: j for j, h in enumerate(header)}
    missing = [c for c in _BASE_COLUMNS if c not in pos]
    if missing:
        raise DataError(f"trace is missing columns {missing}")
    records = []
    extra_names = [h for h in header if h in _DERIVED or h.startswith("rhs_")]
    extra = {h: [] for h in extra_names}
    for line, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise DataError(f"line {line}: expected {len(header)} fields, got {len(row)}")
        try:
            vals = [float(v) for v in row[1:]]
            k = int(row[0])
        except ValueError as exc:
            raise DataError(f"line {line}: {exc}") from None
        get = lambda j: vals[j - 1]  # noqa: E731
        records.append(StepRecord(
            k=k,
            x=np.array([get(j) for j in xi]),
            y=np.array([get(j) for j in yi]),
            error_norm=get(pos["err_norm_e"]),
            eps=get(pos["eps_k"]),
            eps_gap=get(pos["eps_gap"]),
            objective=get(pos["f_xk"]),
        ))
        for h in extra_names:
            extra[h].append(get(pos[h]))
    if x0 is None:
        x0 = np.full(len(xi), np.nan)
    trace = RunTrace(config or {}, records, np.asarray(x0, dtype=float), seed)
    return trace, {h: np.array(v) for h, v in extra.items()}


def read_trace(path, x0=None, config=None, seed=0):
    return parse_trace(Path(path).read_text(encoding="utf-8"), x0, config, seed)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def dumps(obj) -> str:
    """Canonical JSON: sorted keys, non-finite floats as strings."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def config_hash(doc: dict) -> str:
    text = json.dumps(_jsonable(doc), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj), encoding="utf-8")
    return path

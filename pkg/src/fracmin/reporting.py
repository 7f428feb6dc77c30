"""JSON and CSV emission with 17 significant digits for every float."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np


def fmt(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return _Float(float(obj))
    return obj


class _Float(float):
    pass


def _encode(o, indent, level) -> str:
    if isinstance(o, _Float):
        x = float(o)
        return fmt(x) if math.isfinite(x) else json.dumps(fmt(x))
    if isinstance(o, dict):
        items = [f"{json.dumps(k)}: {_encode(v, indent, level + 1)}" for k, v in o.items()]
        return _join("{", "}", items, indent, level)
    if isinstance(o, list):
        return _join("[", "]", [_encode(v, indent, level + 1) for v in o], indent, level)
    return json.dumps(o)


def _join(lb, rb, items, indent, level):
    if not items:
        return lb + rb
    if indent is None:
        return lb + ", ".join(items) + rb
    pad = " " * (indent * (level + 1))
    return lb + "\n" + ",\n".join(pad + it for it in items) + "\n" + " " * (indent * level) + rb


def dumps(obj, indent: int | None = None) -> str:
    """JSON text with floats at 17 significant digits (non-finite floats become strings)."""
    return _encode(_plain(obj), indent, 0)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.write_text(csv_text(header, rows))
    return path

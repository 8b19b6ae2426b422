"""Serializing report records as JSON or CSV.

Both writers are deterministic: keys are sorted, reals are written with 17
significant digits, and wall time is left out unless asked for.
"""

from __future__ import annotations

import csv
import io
import json
import math
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Iterable, Optional

import numpy as np

from .errors import IoError, ValidationError
from .runner import ReportRecord

FORMATS = ("json", "csv")


def format_real(x: float) -> str:
    """17 significant digits, always recognizable as a real."""
    x = float(x)
    if not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    s = format(x, ".17g")
    if not any(c in s for c in ".eEn"):
        s += ".0"
    return s


def to_plain(obj):
    """numpy scalars and arrays to Python scalars and nested lists."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    return obj


def _dump(obj, out: list, indent: int):
    pad = "  " * indent
    if obj is None:
        out.append("null")
    elif isinstance(obj, bool):
        out.append("true" if obj else "false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        # JSON has no literals for non-finite reals; emit them as strings
        s = format_real(obj)
        out.append(s if math.isfinite(obj) else json.dumps(s))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, list):
        if not obj:
            out.append("[]")
        elif all(not isinstance(v, (list, dict)) for v in obj):
            out.append("[")
            for i, v in enumerate(obj):
                if i:
                    out.append(", ")
                _dump(v, out, indent)
            out.append("]")
        else:
            out.append("[\n")
            for i, v in enumerate(obj):
                out.append(pad + "  ")
                _dump(v, out, indent + 1)
                out.append(",\n" if i < len(obj) - 1 else "\n")
            out.append(pad + "]")
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        keys = sorted(obj)
        for i, k in enumerate(keys):
            out.append(f"{pad}  {json.dumps(k)}: ")
            _dump(obj[k], out, indent + 1)
            out.append(",\n" if i < len(keys) - 1 else "\n")
        out.append(pad + "}")
    else:
        raise ValidationError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    out: list[str] = []
    _dump(to_plain(obj), out, 0)
    return "".join(out) + "\n"


def record_dict(rec: ReportRecord, timing: bool = False) -> dict:
    d = asdict(rec)
    if not timing:
        d.pop("wall_time")
    return d


def render_json(records: Iterable[ReportRecord], timing: bool = False) -> str:
    return dumps({"records": [record_dict(r, timing) for r in records]})


CSV_COLUMNS = ("experiment", "kind", "index", "key", "i", "j", "value")


def _cell(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format_real(v)
    return str(v)


def _flatten(key: str, value):
    value = to_plain(value)
    if isinstance(value, dict):
        for k in sorted(value):
            yield from _flatten(f"{key}.{k}", value[k])
    elif isinstance(value, list):
        for i, row in enumerate(value):
            if isinstance(row, list):
                for j, v in enumerate(row):
                    yield key, i, j, v
            else:
                yield key, i, "", row
    else:
        yield key, "", "", value


def render_csv(records: Iterable[ReportRecord], timing: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in records:
        head = (r.experiment, r.kind, r.index)
        rows = []
        for k in sorted(r.results):
            rows.extend(_flatten(k, r.results[k]))
        for k in sorted(r.verdicts):
            rows.append((f"verdict.{k}", "", "", r.verdicts[k]))
        for k in sorted(r.tolerances):
            rows.append((f"tolerance.{k}", "", "", r.tolerances[k]))
        rows.append(("passed", "", "", r.passed))
        if timing:
            rows.append(("wall_time", "", "", r.wall_time))
        for key, i, j, v in rows:
            w.writerow(head + (key, i, j, _cell(v)))
    return buf.getvalue()


def render_report(records: Iterable[ReportRecord], fmt: str = "json", timing: bool = False) -> str:
    if fmt not in FORMATS:
        raise ValidationError(f"report format must be one of {FORMATS}, got {fmt!r}")
    records = list(records)
    return render_json(records, timing) if fmt == "json" else render_csv(records, timing)


def emit_report(records: Iterable[ReportRecord], fmt: str = "json", path: Optional[str] = None,
                timing: bool = False) -> None:
    """Write the report to ``path`` (stdout when ``path`` is None or "-")."""
    text = render_report(records, fmt, timing)
    if path in (None, "-"):
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write report to {path}: {exc}") from exc

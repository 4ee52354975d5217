"""Deterministic CSV/JSON writers for experiment records and contour polylines.

Floats are written with 17 significant digits (``nan``/``inf`` spelled out in
CSV, ``null`` in JSON), so re-reading a file and writing it again reproduces
it byte for byte.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .contour import Polyline

FORMATS = ("csv", "json")

BOUNDS_COLUMNS = ("model", "px", "py", "P_dbm", "peb_m", "aeb_rad", "deb_s")
MAP_COLUMNS = ("px", "py", "mme_peb_db", "mme_aeb_db", "mme_deb_db")
TRIAL_COLUMNS = ("trial", "seed", "px_hat", "py_hat", "err_m", "converged", "iters")


class ExportError(RuntimeError):
    """Export failed: empty input or an I/O problem (the message carries the path)."""


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        text = f"{float(value):.17g}"
        # keep floats distinguishable from ints (and -0.0 from 0) when read back
        return text if any(ch in text for ch in ".ein") else text + ".0"
    return str(value)


def _parse_value(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _columns(records: Sequence[Mapping], columns: Sequence[str] | None) -> list[str]:
    if columns is not None:
        cols = list(columns)
    else:
        cols = list(records[0].keys())
    for i, rec in enumerate(records):
        missing = [c for c in cols if c not in rec]
        if missing:
            raise ExportError(f"record {i} lacks columns {missing}")
    return cols


def records_to_csv(records: Sequence[Mapping], columns: Sequence[str] | None = None) -> str:
    if not records:
        raise ExportError("no records to export")
    cols = _columns(records, columns)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for rec in records:
        writer.writerow([format_value(rec[c]) for c in cols])
    return buf.getvalue()


def _json_value(value) -> str:
    if isinstance(value, (float, np.floating)) and not math.isfinite(float(value)):
        return "null"
    if isinstance(value, (bool, np.bool_, int, np.integer, float, np.floating)):
        return format_value(value)
    return json.dumps(str(value))


def records_to_json(records: Sequence[Mapping], columns: Sequence[str] | None = None) -> str:
    """A JSON list of row objects, keys in column order."""
    if not records:
        raise ExportError("no records to export")
    cols = _columns(records, columns)
    rows = []
    for rec in records:
        fields = ", ".join(f"{json.dumps(c)}: {_json_value(rec[c])}" for c in cols)
        rows.append("  {" + fields + "}")
    return "[\n" + ",\n".join(rows) + "\n]\n"


def _write_text(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise ExportError(f"cannot write {path}: {exc}") from exc
    return path


def export(records: Sequence[Mapping], path, fmt: str = "csv", columns: Sequence[str] | None = None) -> Path:
    """Write ``records`` to ``path``; the suffix is replaced to match ``fmt``."""
    if fmt not in FORMATS:
        raise ExportError(f"unknown format {fmt!r}")
    records = list(records)
    text = records_to_csv(records, columns) if fmt == "csv" else records_to_json(records, columns)
    return _write_text(Path(path).with_suffix("." + fmt), text)


def read_records(path) -> list[dict]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ExportError(f"cannot read {path}: {exc}") from exc
    if path.suffix == ".json":
        rows = json.loads(text)
        return [{k: (math.nan if v is None else v) for k, v in row.items()} for row in rows]
    reader = csv.DictReader(io.StringIO(text))
    return [{k: _parse_value(v) for k, v in row.items()} for row in reader]


def contours_to_text(polylines: Mapping[str, Iterable[Polyline]]) -> str:
    """One block per polyline: a ``# metric=<m> index=<i> closed=<0|1>`` line, then ``px,py`` rows."""
    blocks = []
    for metric, lines in polylines.items():
        for i, line in enumerate(lines):
            rows = [f"# metric={metric} index={i} closed={int(line.closed)}", "px,py"]
            rows += [f"{format_value(float(x))},{format_value(float(y))}" for x, y in line.vertices]
            blocks.append("\n".join(rows))
    return "\n\n".join(blocks) + "\n" if blocks else ""


def contours_to_json(polylines: Mapping[str, Iterable[Polyline]]) -> str:
    items = []
    for metric, lines in polylines.items():
        for i, line in enumerate(lines):
            verts = ", ".join(f"[{format_value(float(x))}, {format_value(float(y))}]" for x, y in line.vertices)
            items.append(f'  {{"metric": {json.dumps(metric)}, "index": {i}, "closed": {str(line.closed).lower()}, "vertices": [{verts}]}}')
    return "[\n" + ",\n".join(items) + "\n]\n" if items else "[]\n"


def export_contours(polylines: Mapping[str, Iterable[Polyline]], path, fmt: str = "csv") -> Path:
    """Contour blocks; an empty set writes an empty file (no boundary is a valid result)."""
    if fmt not in FORMATS:
        raise ExportError(f"unknown format {fmt!r}")
    if fmt == "csv":
        return _write_text(Path(path).with_suffix(".txt"), contours_to_text(polylines))
    return _write_text(Path(path).with_suffix(".json"), contours_to_json(polylines))


def read_contours(path) -> dict[str, list[Polyline]]:
    path = Path(path)
    out: dict[str, list[Polyline]] = {}
    if path.suffix == ".json":
        for item in json.loads(path.read_text()):
            out.setdefault(item["metric"], []).append(Polyline(np.array(item["vertices"], dtype=float).reshape(-1, 2), item["closed"]))
        return out
    for block in path.read_text().strip().split("\n\n"):
        if not block:
            continue
        lines = block.splitlines()
        meta = dict(kv.split("=") for kv in lines[0].lstrip("# ").split())
        verts = np.array([[float(v) for v in row.split(",")] for row in lines[2:]]).reshape(-1, 2)
        out.setdefault(meta["metric"], []).append(Polyline(verts, meta["closed"] == "1"))
    return out

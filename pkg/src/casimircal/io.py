"""Plain-text datasets, flat tables and JSON reports.

Every file starts with ``#`` comment lines carrying the tool version, the
sha256 of the generating config and any extra metadata. Column headers
carry SI unit suffixes in brackets, e.g. ``V_PZT[V]``; readers strip them.
Numbers are written with 17 significant digits so a write/read cycle is
exact and reruns are byte identical.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import re
from pathlib import Path

from . import __version__
from .errors import DataFormatError
from .synth import CalibrationPoint

DATASET_COLUMNS = ("run_id", "timestamp", "V_PZT[V]", "V_bias[V]", "nu[Hz]", "sigma_nu[Hz]")
_UNIT = re.compile(r"\[[^\]]*\]$")


def config_hash(text) -> str:
    if text is None:
        return "none"
    if isinstance(text, str):
        text = text.encode()
    return hashlib.sha256(text).hexdigest()


def fmt(x) -> str:
    if isinstance(x, (bool, str)):
        return str(x)
    if isinstance(x, int):
        return str(x)
    x = float(x)
    if math.isnan(x):
        return "nan"
    return format(x, ".17g")


def strip_unit(name: str) -> str:
    return _UNIT.sub("", name.strip())


def header_lines(cfg_hash="none", meta=None):
    lines = [f"# casimircal {__version__}", f"# config_sha256: {cfg_hash}"]
    for key, value in (meta or {}).items():
        lines.append(f"# {key}: {value}")
    return lines


def _split_comments(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    meta, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            key, sep, value = line[1:].partition(":")
            if sep:
                meta[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    return meta, body


def write_table(path, columns, rows, cfg_hash="none", meta=None):
    """Comma-separated table with a comment header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write("\n".join(header_lines(cfg_hash, meta)) + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def read_table(path):
    """Return ``(meta, columns, rows)``; unit suffixes are stripped from column names."""
    meta, body = _split_comments(path)
    if not body:
        raise DataFormatError(f"{path}: no header row")
    reader = csv.reader(body)
    columns = [strip_unit(c) for c in next(reader)]
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(columns):
            raise DataFormatError(f"{path}: row {lineno} has {len(row)} fields, expected {len(columns)}")
        rows.append(row)
    return meta, columns, rows


def write_dataset(path, points, cfg_hash="none", meta=None):
    rows = [(p.run_id, p.timestamp, p.V_PZT, p.V_bias, p.nu, p.sigma_nu) for p in points]
    return write_table(path, DATASET_COLUMNS, rows, cfg_hash, meta)


def read_dataset(path):
    meta, columns, rows = read_table(path)
    want = [strip_unit(c) for c in DATASET_COLUMNS]
    missing = [c for c in want if c not in columns]
    if missing:
        raise DataFormatError(f"{path}: missing columns {missing}")
    idx = [columns.index(c) for c in want]
    points = []
    try:
        for row in rows:
            r = [row[i] for i in idx]
            points.append(CalibrationPoint(V_PZT=float(r[2]), V_bias=float(r[3]), nu=float(r[4]),
                                           sigma_nu=float(r[5]), timestamp=int(r[1]), run_id=int(r[0])))
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc
    return meta, points


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if hasattr(obj, "item"):
        return _clean(obj.item())
    return obj


def write_report(path, report: dict, cfg_hash="none", meta=None):
    """JSON document preceded by the comment header."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = json.dumps(_clean(report), indent=2, sort_keys=True)
    path.write_text("\n".join(header_lines(cfg_hash, meta)) + "\n" + body + "\n")
    return path


def read_report(path):
    meta, body = _split_comments(path)
    try:
        return meta, json.loads("\n".join(body))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc

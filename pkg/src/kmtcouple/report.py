"""Deterministic JSON/CSV writers and run manifests.

Floats are written with 17 significant digits, rationals as "p/q" strings,
and mappings keep their insertion order, so equal results give equal bytes.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .exact import frac_str


class ReportError(OSError):
    """Raised when an artifact cannot be written or read back."""


def to_plain(obj):
    """Recursively convert to dict/list/str/int/float/bool/None."""
    if obj is None or isinstance(obj, (bool, str)):
        return obj
    if isinstance(obj, Fraction):
        return frac_str(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [to_plain(x) for x in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(x) for x in obj]
    if hasattr(obj, "to_dict"):
        return to_plain(obj.to_dict())
    if dataclasses.is_dataclass(obj):
        return to_plain(dataclasses.asdict(obj))
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def format_float(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    s = format(x, ".17g")
    if "e" not in s and "." not in s and "n" not in s:
        s += ".0"
    return s


def _emit(obj, out: list, indent: int, level: int):
    pad = "\n" + " " * (indent * (level + 1))
    end = "\n" + " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        out.append(json.dumps(obj))
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(format_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{")
        for i, (k, v) in enumerate(obj.items()):
            out.append(("," if i else "") + pad + json.dumps(k) + ": ")
            _emit(v, out, indent, level + 1)
        out.append(end + "}")
    elif isinstance(obj, list):
        if not obj:
            out.append("[]")
            return
        flat = all(not isinstance(x, (dict, list)) for x in obj)
        if flat:
            out.append("[")
            for i, v in enumerate(obj):
                out.append(", " if i else "")
                _emit(v, out, indent, level + 1)
            out.append("]")
            return
        out.append("[")
        for i, v in enumerate(obj):
            out.append(("," if i else "") + pad)
            _emit(v, out, indent, level + 1)
        out.append(end + "]")
    else:  # pragma: no cover
        raise TypeError(type(obj).__name__)


def dumps(obj, indent: int = 1) -> str:
    out: list = []
    _emit(to_plain(obj), out, indent, 0)
    return "".join(out) + "\n"


def _cell(v) -> str:
    v = to_plain(v)
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format_float(v)
    if isinstance(v, (dict, list)):
        return dumps(v, indent=0).replace("\n", "")
    return str(v)


def table_columns(rows) -> list:
    cols: list = []
    seen = set()
    for r in rows:
        for k in r:
            if k not in seen:
                seen.add(k)
                cols.append(k)
    return cols


def dumps_csv(rows, columns=None) -> str:
    """CSV with a header line; an empty table is just the header."""
    rows = list(rows)
    columns = list(columns) if columns is not None else table_columns(rows)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def write_text(path: str, text: str) -> str:
    """Write ``text`` and return its SHA-256 hex digest."""
    data = text.encode("utf-8")
    try:
        d = os.path.dirname(os.path.abspath(path))
        os.makedirs(d, exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(data)
    except OSError as exc:
        raise ReportError(f"cannot write {path}: {exc}") from exc
    return hashlib.sha256(data).hexdigest()


def write_report(results, path: str, fmt: str = "json", columns=None) -> str:
    """JSON writes the whole object; CSV writes ``results`` as a table (a
    list of flat dicts)."""
    if fmt == "json":
        return write_text(path, dumps(results))
    if fmt == "csv":
        return write_text(path, dumps_csv(results, columns))
    raise ValueError(f"unknown format {fmt!r}")


def read_json(path: str):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def read_csv(path: str) -> list:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def file_digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    argv: list
    params: dict
    seed: int
    version: str
    backend: str
    started: str
    finished: str = ""
    exit_code: int | None = None
    outputs: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def verify(self, base_dir: str) -> dict:
        """Recompute the digest of every listed output (paths relative to
        ``base_dir``); returns {name: "ok" | "missing" | "mismatch"}."""
        status = {}
        for name, digest in self.outputs.items():
            p = os.path.join(base_dir, name)
            if not os.path.exists(p):
                status[name] = "missing"
            else:
                status[name] = "ok" if file_digest(p) == digest else "mismatch"
        return status

"""Snapshot binaries, delimited text and run manifests."""
from __future__ import annotations

import csv
import hashlib
import json
import struct
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

SIG_DIGITS = 17


class FormatError(ValueError):
    pass


def fmt(x) -> str:
    """Decimal text with 17 significant digits (round-trips a float64)."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.{SIG_DIGITS}g}"
    return str(x)


# -- snapshots --------------------------------------------------------------

_HEAD = struct.Struct("<dddd")


def write_snapshots(path, records: Iterable) -> int:
    """Append-free write of (t, x0, dx, u) records as little-endian float64.

    Each record is laid out as t, n, x0, dx, u[0..n), with n stored as a float.
    Returns the number of records written.
    """
    count = 0
    with open(path, "wb") as fh:
        for t, x0, dx, u in records:
            u = np.ascontiguousarray(u, dtype="<f8")
            fh.write(_HEAD.pack(float(t), float(u.size), float(x0), float(dx)))
            fh.write(u.tobytes())
            count += 1
    return count


def read_snapshots(path) -> list:
    """Inverse of ``write_snapshots``: list of (t, x0, dx, u)."""
    data = Path(path).read_bytes()
    out = []
    pos = 0
    while pos < len(data):
        if pos + _HEAD.size > len(data):
            raise FormatError(f"truncated record header at byte {pos}")
        t, n, x0, dx = _HEAD.unpack_from(data, pos)
        pos += _HEAD.size
        n = int(n)
        end = pos + 8 * n
        if end > len(data):
            raise FormatError(f"truncated record body at byte {pos}")
        out.append((t, x0, dx, np.frombuffer(data[pos:end], dtype="<f8").copy()))
        pos = end
    return out


# -- delimited text ---------------------------------------------------------

def write_csv(path, columns: Mapping[str, Sequence], header: Mapping | None = None):
    """Columns as CSV; ``header`` entries become leading ``# key=value`` lines."""
    names = list(columns)
    cols = [np.asarray(columns[k]) if not isinstance(columns[k], list) else columns[k]
            for k in names]
    lengths = {len(c) for c in cols}
    if len(lengths) > 1:
        raise FormatError(f"column lengths differ: {sorted(lengths)}")
    with open(path, "w", newline="") as fh:
        for k, v in (header or {}).items():
            fh.write(f"# {k}={fmt(v)}\n")
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([fmt(v) for v in row])


def write_rows(path, rows: Sequence[Mapping], header: Mapping | None = None):
    """List of dict rows as CSV; the union of keys forms the columns."""
    names: list = []
    for r in rows:
        names += [k for k in r if k not in names]
    with open(path, "w", newline="") as fh:
        for k, v in (header or {}).items():
            fh.write(f"# {k}={fmt(v)}\n")
        w = csv.writer(fh)
        w.writerow(names)
        for r in rows:
            w.writerow([fmt(r.get(k, "")) for k in names])


def read_csv(path):
    """Returns (header dict of strings, dict of float columns)."""
    header = {}
    with open(path) as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            k, _, v = line[1:].strip().partition("=")
            header[k.strip()] = v.strip()
        elif line.strip():
            body.append(line)
    rows = list(csv.reader(body))
    if not rows:
        raise FormatError(f"{path}: no column header")
    names, data = rows[0], rows[1:]
    cols = {}
    for j, name in enumerate(names):
        vals = [r[j] for r in data]
        try:
            cols[name] = np.array([float(v) for v in vals])
        except ValueError:
            cols[name] = vals
    return header, cols


# -- manifests --------------------------------------------------------------

def write_manifest(path, entries: Mapping):
    """Human-readable ``key = value`` file; nested mappings become dotted keys."""
    lines = []

    def emit(prefix, obj):
        for k, v in obj.items():
            key = f"{prefix}{k}"
            if isinstance(v, Mapping):
                emit(key + ".", v)
            elif isinstance(v, (list, tuple, np.ndarray)):
                lines.append(f"{key} = [{', '.join(fmt(x) for x in v)}]")
            elif isinstance(v, str):
                lines.append(f"{key} = {json.dumps(v)}")
            elif v is None:
                lines.append(f'{key} = "none"')
            else:
                lines.append(f"{key} = {fmt(v)}")
    emit("", entries)
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_value(text: str):
    text = text.strip()
    if text.startswith('"'):
        return json.loads(text)
    if text.startswith("["):
        inner = text[1:-1].strip()
        return [_parse_value(t) for t in inner.split(",")] if inner else []
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_manifest(path) -> dict:
    """Flat dict with dotted keys, values parsed back to numbers/strings/lists."""
    out = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise FormatError(f"bad manifest line: {raw!r}")
        out[key.strip()] = _parse_value(val)
    return out


def config_hash(*parts) -> str:
    text = json.dumps([fmt(p) if not isinstance(p, (dict, list)) else p for p in parts],
                      sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]

"""Versioned, self-describing comma-separated tables.

Layout::

    # mfglab-table 1
    # kind: mfg_decoupling
    # <key>: <value>          (any number of metadata lines)
    t,eta,psi,m,n
    0.0,1.23,...

Floats are written with ``repr`` so a write/read round trip is exact and
identical inputs always produce identical bytes.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = "mfglab-table"
VERSION = 1


@dataclass
class Table:
    """Column-oriented table with ordered metadata."""

    columns: dict
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        lengths = {len(np.atleast_1d(v)) for v in self.columns.values()}
        if len(lengths) > 1:
            raise ValueError(f"columns have unequal lengths {sorted(lengths)}")
        for k in self.meta:
            if "\n" in str(k) or ":" in str(k):
                raise ValueError(f"bad metadata key {k!r}")

    def __getitem__(self, name):
        return self.columns[name]

    @property
    def n_rows(self) -> int:
        if not self.columns:
            return 0
        return len(np.atleast_1d(next(iter(self.columns.values()))))


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def dumps(table: Table) -> str:
    buf = io.StringIO()
    buf.write(f"# {MAGIC} {VERSION}\n")
    for k, v in table.meta.items():
        text = _fmt(v).replace("\n", " ")
        buf.write(f"# {k}: {text}\n")
    names = list(table.columns)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    cols = [np.atleast_1d(table.columns[n]) for n in names]
    for i in range(table.n_rows):
        w.writerow([_fmt(c[i]) for c in cols])
    return buf.getvalue()


def _parse_cell(s: str):
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def loads(text: str) -> Table:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(f"# {MAGIC} "):
        raise ValueError("not an mfglab table (missing magic line)")
    version = int(lines[0].split()[-1])
    if version != VERSION:
        raise ValueError(f"unsupported table version {version}")
    meta = {}
    i = 1
    while i < len(lines) and lines[i].startswith("#"):
        key, _, value = lines[i][1:].strip().partition(":")
        meta[key.strip()] = value.strip()
        i += 1
    rows = list(csv.reader(lines[i:]))
    if not rows:
        raise ValueError("table has no header row")
    names, body = rows[0], rows[1:]
    columns = {}
    for j, name in enumerate(names):
        cells = [_parse_cell(r[j]) for r in body]
        if all(isinstance(c, (int, float)) for c in cells):
            columns[name] = np.array(cells, dtype=float if any(isinstance(c, float) for c in cells) else int)
        else:
            columns[name] = np.array([str(c) for c in cells], dtype=object)
    return Table(columns, meta)


def write_table(path, table: Table) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(table), encoding="utf-8")
    return path


def read_table(path) -> Table:
    return loads(Path(path).read_text(encoding="utf-8"))

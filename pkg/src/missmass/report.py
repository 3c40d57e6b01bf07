"""CSV/JSON report emission with atomic writes.

Floats are written with 17 significant digits in CSV, enough to recover the
exact double; JSON uses the shortest repr of the same double.  NaN becomes an
empty CSV field and ``null`` in JSON.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np


def fmt(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return "" if math.isnan(v) else format(v, ".17g")
    return str(value)


def _jsonable(value: Any) -> Any:
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return None if math.isnan(v) or math.isinf(v) else float(format(v, ".17g"))
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in value]
    return value


@dataclass
class Table:
    """One CSV file plus its mirror in the JSON report."""

    name: str
    columns: list[str]
    rows: list[Sequence[Any]] = field(default_factory=list)

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([fmt(v) for v in row])
        return buf.getvalue()

    def records(self) -> list[dict]:
        return [dict(zip(self.columns, (_jsonable(v) for v in row))) for row in self.rows]


def json_text(meta: dict, tables: list[Table], summary: dict | None = None) -> str:
    doc = dict(_jsonable(meta))
    doc["tables"] = {t.name: {"columns": t.columns, "records": t.records()} for t in tables}
    if summary:
        doc["summary"] = _jsonable(summary)
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def write_atomic(files: dict[Path, str]) -> None:
    """Write every file to a temp sibling, then rename them all into place.

    If any rename fails, files already moved are rolled back (previous versions
    restored, new ones removed) so a failed run leaves the directory as it was.
    """
    staged: list[tuple[str, Path]] = []
    backups: list[tuple[Path, str | None]] = []
    try:
        for path, text in files.items():
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
            staged.append((tmp, path))
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
        for tmp, path in staged:
            backup = None
            if path.exists():
                backup = tmp + ".bak"
                os.link(path, backup)
            backups.append((path, backup))
            os.replace(tmp, path)
    except BaseException:
        for path, backup in reversed(backups):
            try:
                if backup is not None:
                    os.replace(backup, path)
                    # rename between two links to one inode is a no-op
                    if os.path.exists(backup):
                        os.unlink(backup)
                elif path.exists():
                    path.unlink()
            except OSError:
                pass
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)
        raise
    for _, backup in backups:
        if backup is not None and os.path.exists(backup):
            os.unlink(backup)


def emit(out_dir: Path, stem: str, meta: dict, tables: list[Table], summary: dict | None = None) -> list[Path]:
    """Write ``<stem>.csv`` (first table), ``<stem>_<name>.csv`` (others) and ``<stem>.json``."""
    files: dict[Path, str] = {}
    for i, t in enumerate(tables):
        name = f"{stem}.csv" if i == 0 else f"{stem}_{t.name}.csv"
        files[out_dir / name] = t.csv_text()
    files[out_dir / f"{stem}.json"] = json_text(meta, tables, summary)
    write_atomic(files)
    return list(files)

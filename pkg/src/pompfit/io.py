"""CSV input and output, including the append-only results ledger.

Floats are written with 17 significant digits so every value reads back
exactly. A missing observation is an empty ``cases`` field.
"""

from __future__ import annotations

import csv
import fcntl
import io
import json
import math
import os
from dataclasses import dataclass, fields
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .core import DataError, TimeSeries


def fmt(v) -> str:
    """Text form of one CSV cell."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return ""
        return "%.17g" % v
    return str(v)


def write_csv(path, header, rows) -> None:
    """Write ``rows`` under ``header`` with fixed formatting and ``\\n`` line ends."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    Path(path).write_text(buf.getvalue())


def read_data(path) -> TimeSeries:
    """Read a ``time,cases`` CSV; errors name the offending line."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise DataError(f"cannot read data file {path}: {e.strerror}") from None
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["time", "cases"]:
        raise DataError(f"{path}: line 1: expected header 'time,cases'")
    times, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 2:
            raise DataError(f"{path}: line {lineno}: expected 2 fields, found {len(row)}")
        t, c = row[0].strip(), row[1].strip()
        try:
            times.append(float(t))
            values.append(math.nan if c == "" else float(c))
        except ValueError:
            raise DataError(f"{path}: line {lineno}: cannot parse {row!r}") from None
        if not math.isfinite(times[-1]):
            raise DataError(f"{path}: line {lineno}: time must be finite")
        v = values[-1]
        if not math.isnan(v) and (v < 0 or v != math.floor(v) or math.isinf(v)):
            raise DataError(f"{path}: line {lineno}: cases must be a non-negative integer or empty")
        if len(times) > 1 and times[-1] <= times[-2]:
            raise DataError(f"{path}: line {lineno}: times must be strictly increasing")
    if not times:
        raise DataError(f"{path}: no observations")
    try:
        return TimeSeries(np.array(times), np.array(values))
    except DataError as e:
        raise DataError(f"{path}: {e}") from None


def write_data(path, data: TimeSeries) -> None:
    rows = [(float(t), None if math.isnan(v) else int(v)) for t, v in zip(data.times, data.values)]
    write_csv(path, ["time", "cases"], rows)


# --------------------------------------------------------------------------
# Ledger
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LedgerRecord:
    """One likelihood evaluation. ``params`` maps every parameter name to its value."""

    timestamp: str
    model: str
    params: dict
    loglik: float
    se: float
    particles: int
    replicates: int
    seed: int
    workflow: str

    @classmethod
    def now(cls, **kw) -> "LedgerRecord":
        ts = datetime.now(timezone.utc).isoformat(timespec="microseconds")
        return cls(timestamp=ts, **kw)


LEDGER_HEADER = [f.name for f in fields(LedgerRecord)]


def _ledger_row(rec: LedgerRecord) -> str:
    buf = io.StringIO()
    row = []
    for name in LEDGER_HEADER:
        v = getattr(rec, name)
        if name == "params":
            row.append(json.dumps({k: float(x) for k, x in v.items()}, separators=(",", ":")))
        elif isinstance(v, float) and not math.isfinite(v):
            row.append(repr(v))  # 'nan', '-inf'
        else:
            row.append(fmt(v))
    csv.writer(buf, lineterminator="\n").writerow(row)
    return buf.getvalue()


def ledger_append(record: LedgerRecord, path) -> None:
    """Append one row under an exclusive lock; the header is written once.

    The row is emitted with a single ``write`` on an ``O_APPEND`` descriptor,
    so concurrent appenders never interleave inside a row.
    """
    path = Path(path)
    line = _ledger_row(record).encode()
    fd = os.open(path, os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
    try:
        fcntl.flock(fd, fcntl.LOCK_EX)
        try:
            if os.fstat(fd).st_size == 0:
                line = (",".join(LEDGER_HEADER) + "\n").encode() + line
            os.write(fd, line)
        finally:
            fcntl.flock(fd, fcntl.LOCK_UN)
    finally:
        os.close(fd)


def read_ledger(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != LEDGER_HEADER:
            raise DataError(f"{path}: unexpected ledger header")
        out = []
        for row in reader:
            out.append(LedgerRecord(
                timestamp=row["timestamp"],
                model=row["model"],
                params=json.loads(row["params"]),
                loglik=float(row["loglik"]),
                se=float(row["se"]),
                particles=int(row["particles"]),
                replicates=int(row["replicates"]),
                seed=int(row["seed"]),
                workflow=row["workflow"],
            ))
        return out

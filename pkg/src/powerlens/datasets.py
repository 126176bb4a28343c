"""Training-dataset CSV: ``freq_khz,util_pct,power_w[,u0_pct,...][,tag]``.

Percent columns are normalized to fractions on read.
"""
from __future__ import annotations

import csv
import io
import math
import re

from .core import MeasurementRecord, Utilization
from .errors import ParseError

BASE_COLUMNS = ["freq_khz", "util_pct", "power_w"]
_CORE_COL = re.compile(r"^u(\d+)_pct$")
# stated mean may differ from the per-core mean by this much (fraction)
MEAN_TOLERANCE = 1e-4


def _header_layout(header, path):
    if header[:3] != BASE_COLUMNS:
        raise ParseError(f"header must start with {','.join(BASE_COLUMNS)}", 1, path)
    rest = header[3:]
    n_cores = 0
    while n_cores < len(rest) and _CORE_COL.match(rest[n_cores]):
        if rest[n_cores] != f"u{n_cores}_pct":
            raise ParseError(f"per-core columns must be u0_pct, u1_pct, ... (got {rest[n_cores]})", 1, path)
        n_cores += 1
    rest = rest[n_cores:]
    if rest not in ([], ["tag"]):
        raise ParseError(f"unexpected columns {rest}", 1, path)
    return n_cores, bool(rest)


def _pct(text, line, path, name):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"{name}: not a number: {text!r}", line, path) from None
    if not 0.0 <= value <= 100.0:
        raise ParseError(f"{name}: {value} outside [0, 100]", line, path)
    return value / 100.0


def parse_dataset(text: str, path=None) -> list[MeasurementRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or not any(cell.strip() for cell in rows[0]):
        raise ParseError("empty dataset file (missing header)", 1, path)
    header = [h.strip() for h in rows[0]]
    n_cores, has_tag = _header_layout(header, path)
    width = 3 + n_cores + has_tag
    records = []
    for line, row in enumerate(rows[1:], start=2):
        if not row or not any(cell.strip() for cell in row):
            continue
        if len(row) != width:
            raise ParseError(f"expected {width} fields, got {len(row)}", line, path)
        try:
            freq = int(row[0])
            power = float(row[2])
        except ValueError as exc:
            raise ParseError(str(exc), line, path) from None
        if freq <= 0:
            raise ParseError(f"freq_khz must be positive, got {freq}", line, path)
        if not math.isfinite(power) or power < 0:
            raise ParseError(f"power_w must be a finite non-negative number, got {row[2]!r}", line, path)
        util = _pct(row[1], line, path, "util_pct")
        if n_cores:
            per_core = [_pct(row[3 + k], line, path, f"u{k}_pct") for k in range(n_cores)]
            utilization = Utilization.from_per_core(per_core)
            if abs(utilization.value - util) > MEAN_TOLERANCE:
                raise ParseError(
                    f"util_pct {util * 100:g} disagrees with per-core mean {utilization.value * 100:g}", line, path
                )
        else:
            utilization = Utilization(util)
        tag = row[-1].strip() if has_tag else ""
        records.append(MeasurementRecord(freq, utilization, power, tag))
    return records


def read_dataset(path) -> list[MeasurementRecord]:
    with open(path, newline="") as fh:
        return parse_dataset(fh.read(), path=str(path))


def write_dataset(path_or_file, records) -> None:
    records = list(records)
    n_cores = 0
    if records and all(r.utilization.per_core is not None for r in records):
        counts = {len(r.utilization.per_core) for r in records}
        if len(counts) == 1:
            n_cores = counts.pop()
    has_tag = any(r.source_tag for r in records)
    header = BASE_COLUMNS + [f"u{k}_pct" for k in range(n_cores)] + (["tag"] if has_tag else [])

    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in records:
            row = [str(int(r.freq_khz)), repr(r.utilization.value * 100.0), repr(float(r.power_w))]
            if n_cores:
                row += [repr(u * 100.0) for u in r.utilization.per_core]
            if has_tag:
                row.append(r.source_tag)
            w.writerow(row)

    if hasattr(path_or_file, "write"):
        emit(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            emit(fh)

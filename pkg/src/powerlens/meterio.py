"""Power-meter log ingestion, windowed energy integration and variance analysis."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .core import MeasurementRecord
from .errors import NonMonotoneTimestamp, OutOfRange, SchemaMismatch, WindowTooLarge


@dataclass(frozen=True)
class EnergySample:
    timestamp: float
    cumulative_energy_j: float | None = None
    power_w: float | None = None

    def __post_init__(self):
        if self.cumulative_energy_j is None and self.power_w is None:
            raise ValueError("sample needs cumulative energy or power")


@dataclass(frozen=True)
class MeterSchema:
    """Column mapping of a meter export. Scales convert to seconds, joules, watts, volts, amperes.

    Exactly one source is used, in priority: ``energy``, ``power``, ``voltage`` x ``current``.
    """

    name: str
    timestamp: str
    timestamp_scale: float = 1.0
    energy: str | None = None
    energy_scale: float = 1.0
    power: str | None = None
    power_scale: float = 1.0
    voltage: str | None = None
    voltage_scale: float = 1.0
    current: str | None = None
    current_scale: float = 1.0

    def __post_init__(self):
        if not (self.energy or self.power or (self.voltage and self.current)):
            raise ValueError(f"schema {self.name!r} maps no energy, power or voltage/current columns")

    @classmethod
    def load(cls, path) -> "MeterSchema":
        with open(path) as fh:
            raw = json.load(fh)
        try:
            return cls(**raw)
        except TypeError as exc:
            raise SchemaMismatch(f"bad schema descriptor: {exc}", None, str(path)) from None

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


BUILTIN_SCHEMAS = {
    "generic-vi": MeterSchema("generic-vi", "timestamp", voltage="voltage", current="current"),
    "energy": MeterSchema("energy", "timestamp", energy="energy_j"),
    "power": MeterSchema("power", "timestamp", power="power_w"),
    # cumulative mWh counter as shown by USB meters; 1 mWh = 3.6 J
    "usb-mwh": MeterSchema("usb-mwh", "timestamp", energy="energy_mwh", energy_scale=3.6),
}


def resolve_schema(name_or_path) -> MeterSchema:
    if isinstance(name_or_path, MeterSchema):
        return name_or_path
    if name_or_path in BUILTIN_SCHEMAS:
        return BUILTIN_SCHEMAS[name_or_path]
    return MeterSchema.load(name_or_path)


def parse_meter_log(source, schema="energy", path=None) -> list[EnergySample]:
    """Parse a meter CSV export (``source`` is text or an open file)."""
    schema = resolve_schema(schema)
    text = source.read() if hasattr(source, "read") else source
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        return []
    header = [h.strip() for h in header]
    needed = [schema.timestamp]
    if schema.energy:
        needed.append(schema.energy)
    elif schema.power:
        needed.append(schema.power)
    else:
        needed += [schema.voltage, schema.current]
    missing = [c for c in needed if c not in header]
    if missing:
        raise SchemaMismatch(f"schema {schema.name!r} expects columns {missing} not in header {header}", 1, path)
    col = {name: header.index(name) for name in needed}

    samples: list[EnergySample] = []
    for line, row in enumerate(reader, start=2):
        if not row or not any(c.strip() for c in row):
            continue
        try:
            t = float(row[col[schema.timestamp]]) * schema.timestamp_scale
            if schema.energy:
                sample = EnergySample(t, cumulative_energy_j=float(row[col[schema.energy]]) * schema.energy_scale)
            elif schema.power:
                sample = EnergySample(t, power_w=float(row[col[schema.power]]) * schema.power_scale)
            else:
                v = float(row[col[schema.voltage]]) * schema.voltage_scale
                i = float(row[col[schema.current]]) * schema.current_scale
                sample = EnergySample(t, power_w=v * i)
        except (ValueError, IndexError) as exc:
            raise SchemaMismatch(f"unreadable row: {exc}", line, path) from None
        if samples:
            prev = samples[-1]
            if not sample.timestamp > prev.timestamp:
                raise NonMonotoneTimestamp(
                    f"timestamp {sample.timestamp} does not increase past {prev.timestamp}", line, path)
            if sample.cumulative_energy_j is not None and sample.cumulative_energy_j < prev.cumulative_energy_j:
                raise NonMonotoneTimestamp(
                    f"cumulative energy decreases ({prev.cumulative_energy_j} -> {sample.cumulative_energy_j})",
                    line, path)
        samples.append(sample)
    return samples


def read_meter_log(path, schema="energy") -> list[EnergySample]:
    with open(path, newline="") as fh:
        return parse_meter_log(fh.read(), schema, path=str(path))


def write_meter_log(path_or_file, samples, column="energy_j") -> None:
    """Write samples as ``timestamp,energy_j`` or ``timestamp,power_w``."""
    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", column])
        for s in samples:
            value = s.cumulative_energy_j if column == "energy_j" else s.power_w
            w.writerow([repr(float(s.timestamp)), repr(float(value))])

    if hasattr(path_or_file, "write"):
        emit(path_or_file)
    else:
        with open(path_or_file, "w", newline="") as fh:
            emit(fh)


class MeterSeries:
    """Arrays behind a sample list, with its energy antiderivative."""

    def __init__(self, samples):
        samples = list(samples)
        if len(samples) < 2:
            raise OutOfRange("need at least two samples to integrate")
        self.t = np.array([s.timestamp for s in samples], dtype=np.float64)
        if all(s.cumulative_energy_j is not None for s in samples):
            self.cumulative = True
            self.v = np.array([s.cumulative_energy_j for s in samples], dtype=np.float64)
        elif all(s.power_w is not None for s in samples):
            self.cumulative = False
            self.v = np.array([s.power_w for s in samples], dtype=np.float64)
        else:
            raise SchemaMismatch("log mixes energy-only and power-only samples")

    @property
    def span(self) -> tuple[float, float]:
        return float(self.t[0]), float(self.t[-1])

    def covers(self, t0, t1) -> bool:
        return self.t[0] <= t0 < t1 <= self.t[-1]

    def energy(self, starts, ends) -> np.ndarray:
        starts = np.ascontiguousarray(starts, dtype=np.float64)
        ends = np.ascontiguousarray(ends, dtype=np.float64)
        if np.any(starts >= ends) or np.any(starts < self.t[0]) or np.any(ends > self.t[-1]):
            raise OutOfRange(f"window outside log span [{self.t[0]}, {self.t[-1]}] or empty")
        both = np.concatenate([starts, ends])
        F = _kernels.antiderivative(self.t, self.v, self.cumulative, both)
        return F[len(starts):] - F[: len(starts)]


def integrate_energy(samples, t0, t1) -> float:
    """Energy in joules over ``[t0, t1]``.

    Cumulative logs interpolate the counter linearly; power logs integrate the
    piecewise-linear power exactly (trapezoid rule at sample instants).
    """
    series = samples if isinstance(samples, MeterSeries) else MeterSeries(samples)
    return float(series.energy([t0], [t1])[0])


@dataclass(frozen=True)
class WindowStats:
    mean: float
    stddev: float
    n: int
    starts: np.ndarray = field(repr=False, compare=False)
    powers: np.ndarray = field(repr=False, compare=False)


def window_power_stats(samples, window_s, stride_s) -> WindowStats:
    """Average power of every window ``[start, start + window_s]`` stepping by ``stride_s``.

    ``stddev`` is the sample standard deviation (0 for a single window).
    """
    series = samples if isinstance(samples, MeterSeries) else MeterSeries(samples)
    if not stride_s > 0 or not window_s > 0:
        raise ValueError("window and stride must be positive")
    t0, t1 = series.span
    span = t1 - t0
    if window_s > span * (1 + 1e-12):
        raise WindowTooLarge(f"window {window_s} s exceeds log span {span} s")
    n = int(math.floor((span - window_s) / stride_s + 1e-9)) + 1
    starts = t0 + stride_s * np.arange(n)
    ends = np.minimum(starts + window_s, t1)
    powers = series.energy(starts, ends) / window_s
    std = float(np.std(powers, ddof=1)) if n > 1 else 0.0
    return WindowStats(float(np.mean(powers)), std, n, starts, powers)


@dataclass
class JoinResult:
    records: list[MeasurementRecord]
    uncovered: list  # CellLog entries the log does not span


def join_campaign(manifest, samples) -> JoinResult:
    """Average power of every manifest cell from the meter log."""
    series = samples if isinstance(samples, MeterSeries) else MeterSeries(samples)
    records, uncovered = [], []
    for cell in manifest.cells:
        a = cell.t_start + manifest.clock_offset_s
        b = cell.t_end + manifest.clock_offset_s
        if not series.covers(a, b):
            uncovered.append(cell)
            continue
        power = float(series.energy([a], [b])[0]) / (b - a)
        records.append(MeasurementRecord(cell.freq_khz, cell.utilization, power, cell.tag))
    return JoinResult(records, uncovered)

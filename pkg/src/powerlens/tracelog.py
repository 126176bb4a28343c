"""Frequency/load tracing and multi-frequency power prediction.

The tracker polls the current CPU frequency; on every change it closes a
segment for the old frequency with its duration and the per-core load over
that interval. Segments are written as ``freq_khz,duration_us,load0_bp,...``
lines (loads in basis points).
"""
from __future__ import annotations

import csv
import io
import logging
import math
import os
import threading
import time
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from . import _kernels
from .core import Utilization, predict
from .errors import EmptyTrace, ParseError

log = logging.getLogger(__name__)

DEFAULT_POLL_S = 0.020


@dataclass(frozen=True)
class TraceSegment:
    freq_khz: int
    duration_s: float
    per_core_load: tuple[float, ...]

    def __post_init__(self):
        if not self.duration_s > 0:
            raise ValueError(f"segment duration must be positive, got {self.duration_s}")
        object.__setattr__(self, "per_core_load",
                           tuple(min(1.0, max(0.0, float(u))) for u in self.per_core_load))

    @property
    def utilization(self) -> Utilization:
        return Utilization.from_per_core(self.per_core_load)


@dataclass(frozen=True)
class CounterSnapshot:
    """Cumulative per-core (idle, total) times in ticks, plus a monotonic timestamp."""

    idle: tuple[float, ...]
    total: tuple[float, ...]
    wall_clock: float = 0.0

    def __post_init__(self):
        if len(self.idle) != len(self.total):
            raise ValueError("idle and total need one entry per core")


class LoadDiagnostics:
    """Counts of counter anomalies seen while computing loads."""

    def __init__(self):
        self._lock = threading.Lock()
        self.negative_delta = 0
        self.zero_delta = 0
        self.out_of_bounds = 0

    def add(self, negative, zero, bound):
        with self._lock:
            self.negative_delta += negative
            self.zero_delta += zero
            self.out_of_bounds += bound

    def reset(self):
        with self._lock:
            self.negative_delta = self.zero_delta = self.out_of_bounds = 0


diagnostics = LoadDiagnostics()


def _report(negative, zero, bound, diag):
    (diag or diagnostics).add(negative, zero, bound)
    if negative:
        log.warning("negative idle/total time delta on %d counter(s); treated as 0", negative)
    if zero:
        log.warning("zero total-time delta on %d core(s); load reported as 0", zero)
    if bound:
        log.warning("load outside [0, 100%%] on %d core(s); clamped", bound)


def cpu_load(prev: CounterSnapshot, cur: CounterSnapshot, core: int, diag: LoadDiagnostics | None = None) -> float:
    """Busy fraction of ``core`` between two snapshots; always in [0, 1]."""
    d_total = float(cur.total[core]) - float(prev.total[core])
    d_idle = float(cur.idle[core]) - float(prev.idle[core])
    negative = zero = bound = 0
    if not d_total >= 0:
        negative += 1
        d_total = 0.0
    if not d_idle >= 0:
        negative += 1
        d_idle = 0.0
    if d_total == 0.0:
        zero = 1
        load = 0.0
    else:
        load = (d_total - d_idle) / d_total
        if load > 1.0:
            bound, load = 1, 1.0
        elif load < 0.0:
            bound, load = 1, 0.0
    if negative or zero or bound:
        _report(negative, zero, bound, diag)
    return load


def cpu_loads(prev: CounterSnapshot, cur: CounterSnapshot, diag: LoadDiagnostics | None = None) -> tuple[float, ...]:
    """:func:`cpu_load` for every core at once."""
    if len(prev.idle) != len(cur.idle):
        raise ValueError("snapshots have different core counts")
    arr = lambda xs: np.ascontiguousarray(xs, dtype=np.float64)  # noqa: E731
    loads, negative, zero, bound = _kernels.cpu_load_batch(
        arr(prev.idle), arr(prev.total), arr(cur.idle), arr(cur.total))
    if negative or zero or bound:
        _report(negative, zero, bound, diag)
    return tuple(float(u) for u in loads)


@dataclass
class TrackerState:
    freq_khz: int | None = None
    last_time: float | None = None
    last_counters: CounterSnapshot | None = None


def record_transition(state: TrackerState, old_freq, new_freq, now, counters,
                      diag: LoadDiagnostics | None = None) -> TraceSegment | None:
    """Close the segment for ``old_freq`` ending at ``now`` and reseed the state.

    The first call only seeds the state and returns ``None``.
    """
    segment = None
    if state.last_time is not None:
        duration = now - state.last_time
        if duration > 0:
            segment = TraceSegment(int(old_freq), duration, cpu_loads(state.last_counters, counters, diag))
        else:
            log.warning("non-positive segment duration %.9f s dropped", duration)
    state.freq_khz = None if new_freq is None else int(new_freq)
    state.last_time = now
    state.last_counters = counters
    return segment


# -- trace log -------------------------------------------------------------

def format_segment(seg: TraceSegment) -> str:
    duration_us = max(1, int(round(seg.duration_s * 1e6)))
    loads = ",".join(str(int(round(u * 10000))) for u in seg.per_core_load)
    return f"{seg.freq_khz},{duration_us},{loads}\n"


def parse_trace_log(text: str, path=None) -> list[TraceSegment]:
    segments = []
    for line, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.startswith("#"):
            continue
        parts = raw.split(",")
        if len(parts) < 3:
            raise ParseError("expected freq_khz,duration_us,load0_bp[,...]", line, path)
        try:
            freq, dur = int(parts[0]), int(parts[1])
            loads = [int(p) for p in parts[2:]]
        except ValueError as exc:
            raise ParseError(str(exc), line, path) from None
        if freq <= 0 or dur <= 0:
            raise ParseError("frequency and duration must be positive", line, path)
        if any(not 0 <= b <= 10000 for b in loads):
            raise ParseError("loads must be basis points in [0, 10000]", line, path)
        segments.append(TraceSegment(freq, dur / 1e6, tuple(b / 10000 for b in loads)))
    return segments


def read_trace_log(path) -> list[TraceSegment]:
    with open(path) as fh:
        return parse_trace_log(fh.read(), str(path))


class TraceLogWriter:
    """Append-only trace log; every segment is flushed as it is written."""

    def __init__(self, path_or_file):
        self._own = not hasattr(path_or_file, "write")
        self._fh = open(path_or_file, "a") if self._own else path_or_file

    def write(self, seg: TraceSegment):
        self._fh.write(format_segment(seg))
        self._fh.flush()

    def close(self):
        if self._own:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


# -- backends --------------------------------------------------------------

def parse_proc_stat(text: str, wall_clock=0.0) -> CounterSnapshot:
    """Per-core counters from ``/proc/stat``; idle includes iowait."""
    idle, total = [], []
    for line in text.splitlines():
        if line.startswith("cpu") and line[3:4].isdigit():
            fields = [int(v) for v in line.split()[1:9]]
            fields += [0] * (8 - len(fields))
            idle.append(fields[3] + fields[4])
            total.append(sum(fields))
    if not idle:
        raise ParseError("no per-cpu lines in /proc/stat")
    return CounterSnapshot(tuple(idle), tuple(total), wall_clock)


def read_proc_stat(path="/proc/stat", wall_clock=None) -> CounterSnapshot:
    with open(path) as fh:
        text = fh.read()
    return parse_proc_stat(text, time.monotonic() if wall_clock is None else wall_clock)


class LinuxTraceBackend:
    """Live frequency and counters from sysfs and ``/proc/stat``."""

    def __init__(self, cpufreq_path="/sys/devices/system/cpu/cpu0/cpufreq/scaling_cur_freq",
                 proc_stat="/proc/stat", clock=time.monotonic):
        self.cpufreq_path = cpufreq_path
        self.proc_stat = proc_stat
        self.clock = clock
        self.realtime = True

    def read(self):
        now = self.clock()
        with open(self.cpufreq_path) as fh:
            freq = int(fh.read().strip())
        return now, freq, read_proc_stat(self.proc_stat, now)


class ReplayBackend:
    """Replays a fixture CSV ``t_s,freq_khz,idle0,total0,idle1,total1,...``."""

    realtime = False

    def __init__(self, rows):
        self._rows = list(rows)
        self._pos = 0

    @classmethod
    def from_text(cls, text, path=None):
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if not header or header[:2] != ["t_s", "freq_khz"] or (len(header) - 2) % 2:
            raise ParseError("fixture header must be t_s,freq_khz,idle0,total0,...", 1, path)
        rows = []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields", line, path)
            try:
                t, freq = float(row[0]), int(row[1])
                counters = [int(v) for v in row[2:]]
            except ValueError as exc:
                raise ParseError(str(exc), line, path) from None
            if rows and not t > rows[-1][0]:
                raise ParseError("fixture timestamps must increase", line, path)
            rows.append((t, freq, CounterSnapshot(tuple(counters[0::2]), tuple(counters[1::2]), t)))
        return cls(rows)

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            return cls.from_text(fh.read(), str(path))

    @property
    def wall_time(self) -> float:
        return self._rows[-1][0] - self._rows[0][0] if self._rows else 0.0

    def read(self):
        if self._pos >= len(self._rows):
            return None
        row = self._rows[self._pos]
        self._pos += 1
        return row


class ControlFile:
    """Start/stop switch: the file holds '1' (logging) or '0' (stopped)."""

    def __init__(self, path):
        self.path = path
        self._state = False

    def __call__(self, now=None) -> bool:
        try:
            with open(self.path) as fh:
                c = fh.read(1)
        except OSError as exc:
            log.warning("cannot read control file %s: %s", self.path, exc)
            return self._state
        if c in ("0", "1"):
            self._state = c == "1"
        return self._state


def iter_track(backend, poll_s: float = DEFAULT_POLL_S, control: Callable | None = None,
               sleep: Callable = time.sleep, max_duration: float | None = None,
               diag: LoadDiagnostics | None = None) -> Iterator[TraceSegment]:
    """Yield segments as frequency changes are observed.

    Logging starts at the first poll where ``control(now)`` is true and stops
    at the first later poll where it is false; the open segment is flushed up
    to that instant. Exhausting a replay backend flushes the same way.
    """
    state = TrackerState()
    started = False
    last = None
    t_begin = None
    while True:
        try:
            sample = backend.read()
        except OSError as exc:
            log.warning("tracker read failed, retrying: %s", exc)
            if getattr(backend, "realtime", True):
                sleep(poll_s)
            continue
        if sample is None:
            if started and last is not None and last[0] > state.last_time:
                seg = record_transition(state, state.freq_khz, None, last[0], last[2], diag)
                if seg is not None:
                    yield seg
            return
        now, freq, counters = sample
        on = control(now) if control is not None else True
        if max_duration is not None and t_begin is not None and now - t_begin >= max_duration:
            on = False
        if not started:
            if on:
                record_transition(state, None, freq, now, counters, diag)
                started = True
                t_begin = now
        elif not on:
            seg = record_transition(state, state.freq_khz, None, now, counters, diag)
            if seg is not None:
                yield seg
            return
        elif freq != state.freq_khz:
            seg = record_transition(state, state.freq_khz, freq, now, counters, diag)
            if seg is not None:
                yield seg
        last = sample
        if getattr(backend, "realtime", True):
            sleep(poll_s)


def track(backend, out=None, **kwargs) -> list[TraceSegment]:
    """Run the tracker to completion, appending each segment to ``out`` if given."""
    writer = TraceLogWriter(out) if out is not None else None
    segments = []
    try:
        for seg in iter_track(backend, **kwargs):
            segments.append(seg)
            if writer:
                writer.write(seg)
    finally:
        if writer:
            writer.close()
    return segments


# -- fixtures --------------------------------------------------------------

TICKS_PER_S = 1_000_000


def synthesize_fixture(pattern, poll_s=DEFAULT_POLL_S, start_t=0.0) -> str:
    """Fixture CSV whose counters realize ``pattern`` of (freq_khz, duration_s, loads).

    Durations must be whole multiples of ``poll_s``; counters advance in
    microsecond ticks.
    """
    n_cores = len(pattern[0][2])
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["t_s", "freq_khz"] + [f"{k}{c}" for c in range(n_cores) for k in ("idle", "total")])
    tick = int(round(poll_s * TICKS_PER_S))
    idle = [0] * n_cores
    total = [0] * n_cores
    step = 0
    for freq, duration, loads in pattern:
        steps = int(round(duration / poll_s))
        if abs(steps * poll_s - duration) > 1e-9:
            raise ValueError(f"duration {duration} is not a multiple of the poll period")
        for _ in range(steps):
            t = start_t + step * poll_s
            w.writerow([f"{t:.6f}", freq] + [v for c in range(n_cores) for v in (idle[c], total[c])])
            for c in range(n_cores):
                busy = int(round(loads[c] * tick))
                total[c] += tick
                idle[c] += tick - busy
            step += 1
    t = start_t + step * poll_s
    last_freq = pattern[-1][0]
    w.writerow([f"{t:.6f}", last_freq] + [v for c in range(n_cores) for v in (idle[c], total[c])])
    return out.getvalue()


# Frequency/load pattern of a short CPU-bound burst under the ondemand governor.
ONDEMAND_PATTERN = (
    (102000, 0.40, (0.05, 0.02, 0.03, 0.01)),
    (1479000, 1.20, (1.00, 0.08, 0.05, 0.04)),
    (921600, 0.30, (0.62, 0.10, 0.02, 0.03)),
    (1479000, 2.00, (0.98, 0.06, 0.07, 0.02)),
    (710400, 0.20, (0.40, 0.05, 0.05, 0.01)),
    (1224000, 0.60, (0.85, 0.12, 0.04, 0.05)),
    (1479000, 1.60, (1.00, 0.04, 0.03, 0.06)),
    (403200, 0.24, (0.20, 0.03, 0.02, 0.02)),
    (1036800, 0.50, (0.75, 0.08, 0.06, 0.01)),
    (1479000, 0.90, (0.99, 0.05, 0.04, 0.03)),
    (204000, 0.36, (0.08, 0.02, 0.01, 0.02)),
)


def bundled_fixture_path() -> str:
    return os.path.join(os.path.dirname(__file__), "data", "ondemand_replay.csv")


# -- prediction ------------------------------------------------------------

def segment_power(model, segment: TraceSegment) -> float:
    return predict(model, segment.freq_khz, segment.utilization)


def _weighted(model, segments):
    segments = list(segments)
    if not segments:
        raise EmptyTrace("trace has no segments")
    powers = [segment_power(model, s) for s in segments]
    return segments, powers


def trace_energy(model, segments) -> float:
    """Sum of segment power times duration, in joules."""
    segments, powers = _weighted(model, segments)
    return math.fsum(p * s.duration_s for p, s in zip(powers, segments))


def trace_power(model, segments) -> float:
    """Duration-weighted mean power of the trace, in watts."""
    segments, powers = _weighted(model, segments)
    energy = math.fsum(p * s.duration_s for p, s in zip(powers, segments))
    return energy / math.fsum(s.duration_s for s in segments)


@dataclass
class SegmentRow:
    t_start: float
    freq_khz: int
    duration_s: float
    util: float
    power_w: float
    energy_j: float


def segment_report(model, segments) -> list[SegmentRow]:
    rows, t = [], 0.0
    for seg in segments:
        p = segment_power(model, seg)
        rows.append(SegmentRow(t, seg.freq_khz, seg.duration_s, seg.utilization.value, p, p * seg.duration_s))
        t += seg.duration_s
    return rows

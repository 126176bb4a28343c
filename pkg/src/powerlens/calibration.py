"""Calibration campaigns over regulated frequency and duty-cycled utilization.

Every frequency is visited with duty factors 0..10: the CPU-bound workload
runs for ``factor * runtime_factor`` seconds and the device idles for the
rest of ``total_time``. Average power is the energy delta over the cell
divided by its duration.
"""
from __future__ import annotations

import logging
import multiprocessing as mp
import os
import re
import time
from dataclasses import dataclass, field

import numpy as np

from .core import (
    MeasurementRecord,
    ModelKind,
    PowerModel,
    Quadratic,
    Utilization,
    check_frequency_table,
    predict,
)
from .errors import GovernorPermissionDenied, MeterReadFailure, UnsupportedFrequency
from .manifest import CampaignManifest, CellLog
from .meterio import EnergySample
from .tracelog import cpu_loads, read_proc_stat

log = logging.getLogger(__name__)

DEFAULT_METER_NOISE_W = 0.05

JETSON_NANO_FREQUENCIES = (
    102000, 204000, 307200, 403200, 518400, 614400, 710400, 825600,
    921600, 1036800, 1132800, 1224000, 1326000, 1428000, 1479000,
)


@dataclass(frozen=True)
class CampaignSchedule:
    frequencies: tuple[int, ...]
    factors: tuple[int, ...] = tuple(range(11))
    runtime_factor: float = 18.0
    total_time: float = 180.0

    def __post_init__(self):
        object.__setattr__(self, "frequencies", check_frequency_table(self.frequencies))
        for factor in self.factors:
            if factor * self.runtime_factor > self.total_time * (1 + 1e-12):
                raise ValueError(f"factor {factor} runs longer than total_time {self.total_time}")

    @property
    def max_factor(self) -> int:
        return max(self.factors)

    def cells(self) -> list[tuple[int, int]]:
        return [(f, k) for f in self.frequencies for k in self.factors]

    def run_time(self, factor) -> float:
        return factor * self.runtime_factor

    def idle_time(self, factor) -> float:
        return self.total_time - self.run_time(factor)

    def duty(self, factor) -> float:
        return self.run_time(factor) / self.total_time


def plan_campaign(frequencies, runtime_factor=18.0, total_time=180.0, max_factor=10) -> CampaignSchedule:
    """Cells in execution order: frequency outer, factor 0..max_factor inner."""
    freqs = list(frequencies)
    if not freqs:
        raise ValueError("no frequencies to calibrate")
    if freqs != sorted(freqs):
        raise ValueError("frequencies must be sorted ascending")
    return CampaignSchedule(tuple(freqs), tuple(range(max_factor + 1)), float(runtime_factor), float(total_time))


@dataclass(frozen=True)
class Workload:
    """``single_thread`` or ``multi_thread(n)`` CPU-bound multiplication workers."""

    kind: str = "multi_thread"
    threads: int = 4

    @classmethod
    def parse(cls, text: str) -> "Workload":
        if text == "single_thread":
            return cls("single_thread", 1)
        m = re.fullmatch(r"multi_thread\((\d+)\)", text)
        if not m or int(m.group(1)) < 1:
            raise ValueError(f"workload must be single_thread or multi_thread(n), got {text!r}")
        return cls("multi_thread", int(m.group(1)))

    def __str__(self):
        return "single_thread" if self.kind == "single_thread" else f"multi_thread({self.threads})"

    def tag(self, factor) -> str:
        return f"{self}/factor={factor}"


# -- synthetic device -------------------------------------------------------

@dataclass
class SyntheticDevice:
    """Desk-scale device: a ground-truth model, Gaussian meter noise and utilization jitter.

    Keeps a virtual clock and a cumulative-energy meter log so campaigns can
    be joined offline exactly like a real meter export.
    """

    truth_model: PowerModel
    supported_frequencies: tuple[int, ...]
    core_count: int = 4
    noise_stddev_w: float = DEFAULT_METER_NOISE_W
    meter_sample_period: float = 1.0
    rng_seed: int = 0
    jitter_stddev: float = 0.01
    clock: float = 0.0
    meter_log: list = field(default_factory=list)
    frequency: int | None = None

    def __post_init__(self):
        self.supported_frequencies = check_frequency_table(self.supported_frequencies)
        if self.core_count < 1:
            raise ValueError("core_count must be >= 1")
        if not self.meter_sample_period > 0:
            raise ValueError("meter_sample_period must be > 0")
        if self.noise_stddev_w < 0:
            raise ValueError("noise_stddev_w must be >= 0")
        if not self.meter_log:
            self.meter_log.append(EnergySample(self.clock, cumulative_energy_j=0.0))

    def set_frequency(self, freq_khz):
        if freq_khz not in self.supported_frequencies:
            raise UnsupportedFrequency(f"{freq_khz} kHz not supported")
        self.frequency = int(freq_khz)

    def measure_cell(self, factor, schedule: CampaignSchedule, workload: Workload) -> CellLog:
        sim = simulate_measurement(self, self.frequency, schedule.duty(factor), schedule.total_time,
                                   threads=workload.threads, salt=factor)
        t0 = self.clock
        energy = self.meter_log[-1].cumulative_energy_j
        for k, e in enumerate(sim.sample_energies, start=1):
            energy += e
            self.meter_log.append(EnergySample(t0 + k * sim.period, cumulative_energy_j=energy))
        self.clock = t0 + schedule.total_time
        # the log's last instant can differ from the clock by rounding; pin it
        last = self.meter_log[-1]
        self.meter_log[-1] = EnergySample(self.clock, cumulative_energy_j=last.cumulative_energy_j)
        return CellLog(self.frequency, factor, t0, self.clock, sim.utilization, workload.tag(factor), sim.energy_j)


@dataclass(frozen=True)
class SimulatedCell:
    energy_j: float
    utilization: Utilization
    sample_energies: np.ndarray
    period: float


def _cell_rng(device, freq_khz, duty, threads, salt):
    duty_bits = int(np.float64(duty).view(np.int64))
    return np.random.default_rng([device.rng_seed, int(freq_khz), duty_bits & 0xFFFFFFFF, duty_bits >> 32 & 0xFFFFFFFF,
                                  int(threads), int(salt)])


def simulated_utilization(device, duty, threads, rng) -> Utilization:
    """Busy cores sit near ``duty``; idle cores near 0. Jitter is clipped to [0, 1]."""
    busy = min(int(threads), device.core_count)
    target = np.array([duty] * busy + [0.0] * (device.core_count - busy))
    jitter = rng.normal(0.0, device.jitter_stddev, device.core_count) if device.jitter_stddev > 0 else 0.0
    return Utilization.from_per_core(np.clip(target + jitter, 0.0, 1.0))


def simulate_measurement(device: SyntheticDevice, freq_khz, duty, total_time=180.0, threads=None,
                         salt=0) -> SimulatedCell:
    """Energy of one cell and the utilization the counters would report.

    Power is the truth model at the reported utilization plus independent
    Gaussian noise per meter sample. Deterministic per ``device.rng_seed``.
    """
    if not 0.0 <= duty <= 1.0:
        raise ValueError(f"duty {duty} outside [0, 1]")
    threads = device.core_count if threads is None else threads
    rng = _cell_rng(device, freq_khz, duty, threads, salt)
    util = simulated_utilization(device, duty, threads, rng)
    true_power = predict(device.truth_model, freq_khz, util)
    n = max(1, int(round(total_time / device.meter_sample_period)))
    period = total_time / n
    noise = rng.normal(0.0, device.noise_stddev_w, n) if device.noise_stddev_w > 0 else np.zeros(n)
    samples = (true_power + noise) * period
    energy = true_power * total_time + float(np.sum(noise)) * period
    return SimulatedCell(energy, util, samples, period)


def simulate_meter_log(device: SyntheticDevice, freq_khz, util, duration, seed_salt=0) -> list[EnergySample]:
    """Cumulative-energy log of a constant load held for ``duration`` seconds."""
    rng = np.random.default_rng([device.rng_seed, int(freq_khz), int(seed_salt), 7])
    p = predict(device.truth_model, freq_khz, util)
    n = int(round(duration / device.meter_sample_period))
    dt = device.meter_sample_period
    noise = rng.normal(0.0, device.noise_stddev_w, n) if device.noise_stddev_w > 0 else np.zeros(n)
    cum = np.concatenate([[0.0], np.cumsum((p + noise) * dt)])
    return [EnergySample(k * dt, cumulative_energy_j=float(e)) for k, e in enumerate(cum)]


def default_truth_model(frequencies=JETSON_NANO_FREQUENCIES, jump_after=3) -> PowerModel:
    """Per-frequency quadratic loosely shaped like a 4-core ARM board.

    Idle power rises slowly with frequency and steps up once the voltage
    level changes after the first ``jump_after`` frequencies.
    """
    entries = []
    for k, f in enumerate(frequencies):
        g = f / 1e6
        b = 1.15 + 0.12 * g + (0.25 if k >= jump_after else 0.0)
        c = 0.35 + 0.9 * g * g
        a = 0.25 * g
        entries.append(Quadratic(a, c, b))
    return PowerModel(ModelKind.PER_FREQUENCY, tuple(entries), tuple(frequencies))


# -- Linux device -----------------------------------------------------------

def _busy_worker(deadline, cpu):
    if cpu is not None and hasattr(os, "sched_setaffinity"):
        try:
            os.sched_setaffinity(0, {cpu})
        except OSError:
            pass
    x = 1.0001
    while time.time() < deadline:
        for _ in range(10000):
            x = x * 1.0000001 % 3.0 + 1.0


class LinuxDevice:
    """Real device: userspace governor via sysfs, counters from ``/proc/stat``.

    Writing governor files needs root and the explicit ``allow_writes`` opt-in.
    ``energy_reader`` returns cumulative joules; without one, cells carry no
    energy and are joined against a meter log afterwards.
    """

    def __init__(self, sysfs_root="/sys/devices/system/cpu", proc_stat="/proc/stat", allow_writes=False,
                 energy_reader=None, clock=time.time, sleep=time.sleep):
        self.sysfs_root = sysfs_root
        self.proc_stat = proc_stat
        self.allow_writes = allow_writes
        self.energy_reader = energy_reader
        self.clock = clock
        self.sleep = sleep
        self.frequency = None
        self.core_count = len(read_proc_stat(proc_stat).idle)
        self._governed = False

    def _cpufreq(self, cpu, name):
        return os.path.join(self.sysfs_root, f"cpu{cpu}", "cpufreq", name)

    @property
    def supported_frequencies(self) -> tuple[int, ...]:
        with open(self._cpufreq(0, "scaling_available_frequencies")) as fh:
            return tuple(sorted(int(v) for v in fh.read().split()))

    def _write(self, path, value):
        if not self.allow_writes:
            raise GovernorPermissionDenied("governor writes need explicit opt-in (--allow-governor-writes)")
        try:
            with open(path, "w") as fh:
                fh.write(str(value))
        except PermissionError as exc:
            raise GovernorPermissionDenied(f"cannot write {path}: {exc}") from None

    def set_frequency(self, freq_khz):
        if freq_khz not in self.supported_frequencies:
            raise UnsupportedFrequency(f"{freq_khz} kHz not in scaling_available_frequencies")
        for cpu in range(self.core_count):
            if not self._governed:
                self._write(self._cpufreq(cpu, "scaling_governor"), "userspace")
            self._write(self._cpufreq(cpu, "scaling_setspeed"), int(freq_khz))
        self._governed = True
        self.frequency = int(freq_khz)

    def _read_energy(self):
        if self.energy_reader is None:
            return None
        try:
            return float(self.energy_reader())
        except Exception as exc:
            raise MeterReadFailure(str(exc)) from exc

    def measure_cell(self, factor, schedule: CampaignSchedule, workload: Workload) -> CellLog:
        e0 = self._read_energy()
        t0 = self.clock()
        snap0 = read_proc_stat(self.proc_stat)
        run = schedule.run_time(factor)
        if run > 0:
            deadline = t0 + run
            cpus = list(range(self.core_count))
            procs = [mp.Process(target=_busy_worker, args=(deadline, cpus[k % len(cpus)]))
                     for k in range(workload.threads)]
            for p in procs:
                p.start()
            for p in procs:
                p.join()
        remaining = schedule.total_time - (self.clock() - t0)
        if remaining > 0:
            self.sleep(remaining)
        snap1 = read_proc_stat(self.proc_stat)
        e1 = self._read_energy()
        t1 = self.clock()
        util = Utilization.from_per_core(cpu_loads(snap0, snap1))
        energy = None if e0 is None or e1 is None else e1 - e0
        return CellLog(self.frequency, factor, t0, t1, util, workload.tag(factor), energy)


# -- campaign driver --------------------------------------------------------

def record_from_cell(cell: CellLog) -> MeasurementRecord:
    if cell.energy_j is None:
        raise MeterReadFailure("no energy reading for this cell; join it against a meter log")
    return MeasurementRecord(cell.freq_khz, cell.utilization, cell.energy_j / cell.duration, cell.tag)


def run_cell(device, freq_khz, factor, schedule: CampaignSchedule, workload: Workload | None = None) -> MeasurementRecord:
    """Measure one cell and return its average-power record."""
    workload = workload or Workload("multi_thread", device.core_count)
    device.set_frequency(freq_khz)
    return record_from_cell(device.measure_cell(factor, schedule, workload))


@dataclass
class CampaignResult:
    records: list[MeasurementRecord]
    manifest: CampaignManifest
    skipped: list[tuple[int, int, str]]


def run_campaign(device, schedule: CampaignSchedule, workload: Workload | str | None = None) -> CampaignResult:
    """Run every cell in order. A failing cell is skipped and logged; the campaign goes on."""
    if isinstance(workload, str):
        workload = Workload.parse(workload)
    workload = workload or Workload("multi_thread", device.core_count)
    manifest = CampaignManifest(config={
        "workload": str(workload),
        "runtime_factor": schedule.runtime_factor,
        "total_time": schedule.total_time,
        "frequencies": list(schedule.frequencies),
    })
    records, skipped = [], []
    current = None
    for freq, factor in schedule.cells():
        try:
            if freq != current:
                device.set_frequency(freq)
                current = freq
            cell = device.measure_cell(factor, schedule, workload)
        except GovernorPermissionDenied:
            raise
        except Exception as exc:
            log.warning("cell (%s kHz, factor %s) skipped: %s", freq, factor, exc)
            skipped.append((freq, factor, str(exc)))
            current = None
            continue
        manifest.cells.append(cell)
        if cell.energy_j is not None:
            records.append(record_from_cell(cell))
    return CampaignResult(records, manifest, skipped)

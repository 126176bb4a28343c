"""Domain types, the frequency/utilization power equation family and metrics.

Frequencies are stored as integer kilohertz and converted to gigahertz before
they enter any polynomial. Utilizations are fractions in [0, 1].
"""
from __future__ import annotations

import bisect
import enum
import logging
import math
import threading
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateVariance,
    EmptyDataset,
    LengthMismatch,
    MissingPerCoreData,
    ModelNotFitted,
)

log = logging.getLogger(__name__)

KHZ_PER_GHZ = 1_000_000


def to_ghz(freq_khz: float) -> float:
    return freq_khz / KHZ_PER_GHZ


def check_frequency_table(freqs: Sequence[int]) -> tuple[int, ...]:
    table = tuple(int(f) for f in freqs)
    if not table:
        raise ValueError("frequency table is empty")
    if any(f <= 0 for f in table):
        raise ValueError("frequencies must be positive")
    if any(a >= b for a, b in zip(table, table[1:])):
        raise ValueError("frequency table must be sorted ascending without duplicates")
    return table


@dataclass(frozen=True)
class Utilization:
    """Mean utilization across cores, optionally with the per-core values."""

    value: float
    per_core: tuple[float, ...] | None = None

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"utilization {self.value!r} outside [0, 1]")
        if self.per_core is not None:
            object.__setattr__(self, "per_core", tuple(float(u) for u in self.per_core))
            if not self.per_core:
                raise ValueError("per_core must not be empty")
            if any(not 0.0 <= u <= 1.0 for u in self.per_core):
                raise ValueError(f"per-core utilization outside [0, 1]: {self.per_core}")
            if abs(math.fsum(self.per_core) / len(self.per_core) - self.value) > 1e-9:
                raise ValueError("utilization value is not the mean of per_core")

    @classmethod
    def from_per_core(cls, loads: Iterable[float]) -> "Utilization":
        loads = tuple(float(u) for u in loads)
        if not loads:
            raise ValueError("per_core must not be empty")
        mean = min(1.0, max(0.0, math.fsum(loads) / len(loads)))
        return cls(mean, loads)


def as_utilization(util: "Utilization | float") -> Utilization:
    return util if isinstance(util, Utilization) else Utilization(float(util))


@dataclass(frozen=True)
class MeasurementRecord:
    freq_khz: int
    utilization: Utilization
    power_w: float
    source_tag: str = ""


class ModelKind(str, enum.Enum):
    SIMPLE = "Simple"
    MULTI_TERM = "MultiTerm"
    MULTI_FREQUENCY = "MultiFrequency"
    PER_FREQUENCY = "PerFrequency"
    PER_FREQUENCY_TREE = "PerFrequencyTree"
    GLOBAL_TREE = "GlobalTree"
    MLP = "Mlp"


@dataclass(frozen=True)
class Polynomial:
    """Bivariate polynomial sum(c * f_ghz**i * u**j) over ``exponents`` (i, j)."""

    exponents: tuple[tuple[int, int], ...]
    coeffs: tuple[float, ...]

    def __post_init__(self):
        if len(self.exponents) != len(self.coeffs):
            raise ValueError("one coefficient per basis term required")

    def __call__(self, freq_ghz: float, u: float) -> float:
        total = 0.0
        for (i, j), c in zip(self.exponents, self.coeffs):
            total += c * freq_ghz**i * u**j
        return total


@dataclass(frozen=True)
class SplitPolynomial:
    """Two polynomials; ``low`` serves frequencies below ``frequency_table[split_index]``."""

    split_index: int
    low: Polynomial
    high: Polynomial


@dataclass(frozen=True)
class Quadratic:
    """Per-frequency curve ``a*u**2 + c*u + b``."""

    a: float
    c: float
    b: float

    def __call__(self, u: float) -> float:
        return self.a * u * u + self.c * u + self.b


@dataclass(frozen=True)
class PowerModel:
    kind: ModelKind
    params: Any
    frequency_table: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        object.__setattr__(self, "frequency_table", check_frequency_table(self.frequency_table))
        if self.kind in (ModelKind.PER_FREQUENCY, ModelKind.PER_FREQUENCY_TREE):
            object.__setattr__(self, "params", tuple(self.params))
            if len(self.params) != len(self.frequency_table):
                raise ValueError("per-frequency payload needs one entry per frequency")
        if self.kind is ModelKind.MULTI_FREQUENCY:
            if not 0 < self.params.split_index < len(self.frequency_table):
                raise ValueError("split_index must leave both frequency groups nonempty")

    @property
    def needs_per_core(self) -> bool:
        return self.kind is ModelKind.MLP


@dataclass(frozen=True)
class EvalMetrics:
    mse: float
    mae: float
    r2: float
    n: int


class _ClampCounter:
    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0

    def bump(self):
        with self._lock:
            self._count += 1

    @property
    def count(self) -> int:
        return self._count

    def reset(self):
        with self._lock:
            self._count = 0


#: Number of negative predictions clamped to 0 W since import (or last reset).
clamp_counter = _ClampCounter()


def eval_polynomial(coeffs, freq_khz: float, util: "Utilization | float") -> float:
    """Evaluate ``k0*u**2 + k1*f*u + k2*u + b`` with ``f`` in GHz.

    ``coeffs`` is a mapping with keys k0, k1, k2, b or a 4-sequence in that order.
    """
    if isinstance(coeffs, dict):
        k0, k1, k2, b = coeffs["k0"], coeffs["k1"], coeffs["k2"], coeffs["b"]
    else:
        k0, k1, k2, b = coeffs
    u = util.value if isinstance(util, Utilization) else float(util)
    f = to_ghz(freq_khz)
    return k0 * u * u + k1 * f * u + k2 * u + b


def _interpolate(table: Sequence[int], freq_khz: float, entry: Callable[[int], float]) -> float:
    # exact hit, linear blend between neighbours, or nearest endpoint outside
    i = bisect.bisect_left(table, freq_khz)
    if i < len(table) and table[i] == freq_khz:
        return entry(i)
    if i == 0:
        return entry(0)
    if i == len(table):
        return entry(len(table) - 1)
    f0, f1 = table[i - 1], table[i]
    w = (freq_khz - f0) / (f1 - f0)
    p0, p1 = entry(i - 1), entry(i)
    return p0 + w * (p1 - p0)


def predict_raw(model: PowerModel, freq_khz: float, util: "Utilization | float") -> float:
    """Model output before the non-negativity clamp."""
    if model is None or model.params is None:
        raise ModelNotFitted("model has not been fitted")
    util = as_utilization(util)
    u = util.value
    kind = model.kind
    if kind in (ModelKind.SIMPLE, ModelKind.MULTI_TERM):
        return model.params(to_ghz(freq_khz), u)
    if kind is ModelKind.MULTI_FREQUENCY:
        split = model.params
        poly = split.low if freq_khz < model.frequency_table[split.split_index] else split.high
        return poly(to_ghz(freq_khz), u)
    if kind is ModelKind.PER_FREQUENCY:
        return _interpolate(model.frequency_table, freq_khz, lambda i: model.params[i](u))
    if kind is ModelKind.PER_FREQUENCY_TREE:
        return _interpolate(model.frequency_table, freq_khz, lambda i: model.params[i].predict_one((u,)))
    if kind is ModelKind.GLOBAL_TREE:
        return model.params.predict_one((to_ghz(freq_khz), u))
    if kind is ModelKind.MLP:
        if util.per_core is None:
            raise MissingPerCoreData("Mlp models need per-core utilizations")
        return model.params.predict_one(to_ghz(freq_khz), util.per_core)
    raise ValueError(f"unknown model kind {kind!r}")


def predict(model: PowerModel, freq_khz: float, util: "Utilization | float") -> float:
    """Predicted power in watts, clamped below at zero."""
    p = predict_raw(model, freq_khz, util)
    if p < 0.0:
        clamp_counter.bump()
        log.debug("clamped negative prediction %.6g W at %s kHz", p, freq_khz)
        return 0.0
    return p


def _pair(predicted, actual):
    p = np.asarray(predicted, dtype=np.float64).ravel()
    a = np.asarray(actual, dtype=np.float64).ravel()
    if p.shape != a.shape:
        raise LengthMismatch(f"{p.size} predictions vs {a.size} actual values")
    if p.size == 0:
        raise LengthMismatch("metric inputs are empty")
    return p, a


def mse(predicted, actual) -> float:
    p, a = _pair(predicted, actual)
    return float(np.mean((a - p) ** 2))


def mae(predicted, actual) -> float:
    p, a = _pair(predicted, actual)
    return float(np.mean(np.abs(a - p)))


def r2_score(predicted, actual) -> float:
    p, a = _pair(predicted, actual)
    mean = np.sum(a) / a.size
    ssr = float(np.sum((a - p) ** 2))
    sst = float(np.sum((a - mean) ** 2))
    if sst == 0.0:
        raise DegenerateVariance("actual values are constant; R^2 is undefined")
    return 1.0 - ssr / sst


def sorted_records(dataset: Iterable[MeasurementRecord]) -> list[MeasurementRecord]:
    """Canonical accumulation order: sort on (frequency, source_tag).

    Ties fall back to utilization, per-core loads and power so the order, and
    hence every metric, does not depend on how the input was arranged.
    """
    return sorted(dataset, key=lambda r: (r.freq_khz, r.source_tag, r.utilization.value,
                                          r.utilization.per_core or (), r.power_w))


def evaluate_model(model: PowerModel, dataset: Sequence[MeasurementRecord],
                   allow_degenerate: bool = False) -> EvalMetrics:
    """MSE, MAE and R^2 of ``model`` over ``dataset``.

    With ``allow_degenerate`` a constant-power dataset yields ``r2 = nan``
    instead of raising :class:`DegenerateVariance`.
    """
    records = sorted_records(dataset)
    if not records:
        raise EmptyDataset("cannot evaluate on an empty dataset")
    predicted = [predict(model, r.freq_khz, r.utilization) for r in records]
    actual = [r.power_w for r in records]
    try:
        r2 = r2_score(predicted, actual)
    except DegenerateVariance:
        if not allow_degenerate:
            raise
        r2 = math.nan
    return EvalMetrics(mse(predicted, actual), mae(predicted, actual), r2, len(records))


def evaluate_by_tag(model: PowerModel, dataset: Sequence[MeasurementRecord]) -> dict[str, EvalMetrics]:
    groups: dict[str, list[MeasurementRecord]] = {}
    for rec in dataset:
        groups.setdefault(rec.source_tag, []).append(rec)
    return {tag: evaluate_model(model, recs, allow_degenerate=True) for tag, recs in sorted(groups.items())}

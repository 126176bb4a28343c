"""Least-squares polynomial power models."""
from __future__ import annotations

import numpy as np

from ..core import (
    KHZ_PER_GHZ,
    ModelKind,
    Polynomial,
    PowerModel,
    Quadratic,
    SplitPolynomial,
)
from ..errors import EmptyGroup, InsufficientData, InsufficientDataAtFrequency, SingularSystem

# (frequency exponent, utilization exponent) per basis term
SIMPLE_BASIS = ((0, 0), (0, 1), (3, 0), (3, 1))
MULTI_TERM_BASIS = tuple((i, j) for i in range(4) for j in range(4))

MAX_CONDITION = 1e12


def design_matrix(freq_ghz, u, exponents) -> np.ndarray:
    freq_ghz = np.asarray(freq_ghz, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    return np.column_stack([freq_ghz**i * u**j for i, j in exponents])


def solve_least_squares(X, y, ridge_lambda=1e-8) -> np.ndarray:
    """Ridge-guarded least squares via the SVD of the column-equilibrated design.

    Directions that would push the normal-matrix condition past the limit
    are near-singular and get ridge damping ``s^2 / (s^2 + lambda)``; all
    others are solved exactly, so well-posed fits carry no ridge bias.
    Raises :class:`SingularSystem` when the condition estimate of the
    regularized normal equations exceeds 1e12.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    norms = np.linalg.norm(X, axis=0)
    scale = 1.0 / np.where(norms > 0, norms, 1.0)
    U, sv, Vt = np.linalg.svd(X * scale, full_matrices=False)
    if len(sv) < X.shape[1]:
        sv = np.concatenate([sv, np.zeros(X.shape[1] - len(sv))])
        U = np.pad(U, ((0, 0), (0, X.shape[1] - U.shape[1])))
    w = sv**2 + ridge_lambda
    if not w.min() > 0 or w.max() / w.min() > MAX_CONDITION:
        raise SingularSystem(
            f"normal equations are singular (condition estimate {w.max() / max(w.min(), 0.0):.3g})"
            if w.min() > 0 else "normal equations are singular"
        )
    near_singular = sv**2 * MAX_CONDITION < sv[0] ** 2
    gain = np.where(near_singular, sv / w, 1.0 / np.where(near_singular, 1.0, sv))
    z = Vt.T @ (gain * (U.T @ y))
    return z * scale


def _columns(dataset):
    f = np.array([r.freq_khz / KHZ_PER_GHZ for r in dataset], dtype=np.float64)
    u = np.array([r.utilization.value for r in dataset], dtype=np.float64)
    p = np.array([r.power_w for r in dataset], dtype=np.float64)
    return f, u, p


def _frequency_table(dataset):
    return tuple(sorted({int(r.freq_khz) for r in dataset}))


def _fit_polynomial(dataset, exponents, ridge_lambda) -> Polynomial:
    f, u, p = _columns(dataset)
    coeffs = solve_least_squares(design_matrix(f, u, exponents), p, ridge_lambda)
    return Polynomial(tuple(exponents), tuple(float(c) for c in coeffs))


def _require(dataset, min_records, min_freqs, what):
    n_freqs = len({r.freq_khz for r in dataset})
    if len(dataset) < min_records or n_freqs < min_freqs:
        raise InsufficientData(
            f"{what} needs >= {min_records} records over >= {min_freqs} frequencies "
            f"(got {len(dataset)} records over {n_freqs})"
        )


def fit_simple(dataset, config=None) -> PowerModel:
    """Model over the basis {1, u, f^3, f^3*u}."""
    ridge = config.ridge_lambda if config else 1e-8
    dataset = list(dataset)
    _require(dataset, 5, 2, "simple regression")
    poly = _fit_polynomial(dataset, SIMPLE_BASIS, ridge)
    return PowerModel(ModelKind.SIMPLE, poly, _frequency_table(dataset))


def fit_multi_term(dataset, config=None) -> PowerModel:
    """Model over all monomials f^i * u^j with 0 <= i, j <= 3."""
    ridge = config.ridge_lambda if config else 1e-8
    dataset = list(dataset)
    _require(dataset, 12, 2, "multi-term regression")
    poly = _fit_polynomial(dataset, MULTI_TERM_BASIS, ridge)
    return PowerModel(ModelKind.MULTI_TERM, poly, _frequency_table(dataset))


def fit_multi_frequency(dataset, split_index=3, config=None) -> PowerModel:
    """Two multi-term fits: frequencies below ``table[split_index]`` and the rest."""
    ridge = config.ridge_lambda if config else 1e-8
    dataset = list(dataset)
    table = _frequency_table(dataset)
    if not 0 < split_index < len(table):
        raise EmptyGroup(f"split_index {split_index} leaves a frequency group empty ({len(table)} frequencies)")
    split_freq = table[split_index]
    low = [r for r in dataset if r.freq_khz < split_freq]
    high = [r for r in dataset if r.freq_khz >= split_freq]
    for group, name in ((low, "low"), (high, "high")):
        if len(group) < 12:
            raise InsufficientData(f"{name} frequency group has {len(group)} records, need >= 12")
    split = SplitPolynomial(
        split_index,
        _fit_polynomial(low, MULTI_TERM_BASIS, ridge),
        _fit_polynomial(high, MULTI_TERM_BASIS, ridge),
    )
    return PowerModel(ModelKind.MULTI_FREQUENCY, split, table)


def group_by_frequency(dataset, min_records=4, min_distinct_util=3):
    groups: dict[int, list] = {}
    for r in dataset:
        groups.setdefault(int(r.freq_khz), []).append(r)
    if not groups:
        raise InsufficientData("dataset is empty")
    for freq, recs in groups.items():
        distinct = len({r.utilization.value for r in recs})
        if len(recs) < min_records or distinct < min_distinct_util:
            raise InsufficientDataAtFrequency(
                freq, f"{len(recs)} records at {distinct} distinct utilizations"
            )
    return dict(sorted(groups.items()))


def fit_per_frequency(dataset, config=None) -> PowerModel:
    """Independent ``a*u^2 + c*u + b`` fit at every frequency."""
    ridge = config.ridge_lambda if config else 1e-8
    groups = group_by_frequency(list(dataset))
    entries = []
    for recs in groups.values():
        u = np.array([r.utilization.value for r in recs])
        p = np.array([r.power_w for r in recs])
        a, c, b = solve_least_squares(np.column_stack([u * u, u, np.ones_like(u)]), p, ridge)
        entries.append(Quadratic(float(a), float(c), float(b)))
    return PowerModel(ModelKind.PER_FREQUENCY, tuple(entries), tuple(groups))

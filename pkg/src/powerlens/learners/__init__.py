"""Fitting routines for every supported model family."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

from ..core import ModelKind, PowerModel
from .mlp import MlpModel, fit_mlp
from .polynomial import (
    MULTI_TERM_BASIS,
    SIMPLE_BASIS,
    fit_multi_frequency,
    fit_multi_term,
    fit_per_frequency,
    fit_simple,
    solve_least_squares,
)
from .tree import RegressionTree, fit_tree, grow_tree


@dataclass(frozen=True)
class FitConfig:
    ridge_lambda: float = 1e-8
    tree_max_depth: int = 4
    tree_min_leaf: int = 3
    tree_global: bool = False
    mlp_epochs: int = 4000
    mlp_learning_rate: float = 1e-3
    mlp_seed: int = 0
    split_index: int = 3

    def __post_init__(self):
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be >= 0")
        if self.tree_max_depth < 1 or self.tree_min_leaf < 1 or self.mlp_epochs < 1:
            raise ValueError("tree_max_depth, tree_min_leaf and mlp_epochs must be >= 1")
        if not self.mlp_learning_rate > 0:
            raise ValueError("mlp_learning_rate must be > 0")

    @classmethod
    def from_json(cls, path) -> "FitConfig":
        with open(path) as fh:
            raw = json.load(fh)
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown fit config keys: {sorted(unknown)}")
        return cls(**raw)

    def to_dict(self) -> dict:
        return asdict(self)


def fit(kind, dataset, config: FitConfig | None = None) -> PowerModel:
    """Fit a model of ``kind`` (a :class:`ModelKind` or its name)."""
    config = config or FitConfig()
    kind = ModelKind(kind)
    if kind is ModelKind.SIMPLE:
        return fit_simple(dataset, config)
    if kind is ModelKind.MULTI_TERM:
        return fit_multi_term(dataset, config)
    if kind is ModelKind.MULTI_FREQUENCY:
        return fit_multi_frequency(dataset, config.split_index, config)
    if kind is ModelKind.PER_FREQUENCY:
        return fit_per_frequency(dataset, config)
    if kind is ModelKind.PER_FREQUENCY_TREE:
        return fit_tree(dataset, config)
    if kind is ModelKind.GLOBAL_TREE:
        from dataclasses import replace
        return fit_tree(dataset, replace(config, tree_global=True))
    return fit_mlp(dataset, config)


__all__ = [
    "FitConfig", "fit", "fit_simple", "fit_multi_term", "fit_multi_frequency",
    "fit_per_frequency", "fit_tree", "fit_mlp", "grow_tree", "solve_least_squares",
    "RegressionTree", "MlpModel", "SIMPLE_BASIS", "MULTI_TERM_BASIS",
]

"""Versioned text format for fitted models.

Every file starts with ``powerlens-model v1 <kind>``. Reals are written with
``repr`` so a parse of a dump reproduces the model bit for bit.
"""
from __future__ import annotations

import numpy as np

from .core import ModelKind, Polynomial, PowerModel, Quadratic, SplitPolynomial
from .errors import ParseError, UnsupportedVersion
from .learners.mlp import LAYER_SIZES, MlpModel
from .learners.tree import RegressionTree

MAGIC = "powerlens-model"
VERSION = "v1"


def _num(x) -> str:
    return repr(float(x))


def _basis_line(poly: Polynomial) -> str:
    return "basis " + " ".join(f"{i}:{j}" for i, j in poly.exponents)


def _tree_lines(tree: RegressionTree, key) -> list[str]:
    lines = [f"tree {key} {len(tree.value)} {tree.n_features}"]
    for k in range(len(tree.value)):
        lines.append(
            f"node {tree.feature[k]} {_num(tree.threshold[k])} {tree.left[k]} {tree.right[k]} {_num(tree.value[k])}"
        )
    return lines


def dumps(model: PowerModel) -> str:
    kind = model.kind
    lines = [f"{MAGIC} {VERSION} {kind.value}"]
    freqs = "frequencies " + " ".join(str(f) for f in model.frequency_table)
    if kind in (ModelKind.SIMPLE, ModelKind.MULTI_TERM):
        lines += [freqs, _basis_line(model.params), "coeffs " + " ".join(map(_num, model.params.coeffs))]
    elif kind is ModelKind.MULTI_FREQUENCY:
        split = model.params
        lines += [freqs, _basis_line(split.low), f"split_index {split.split_index}"]
        lines.append("coeffs " + " ".join(map(_num, split.low.coeffs)))
        lines.append("coeffs " + " ".join(map(_num, split.high.coeffs)))
    elif kind is ModelKind.PER_FREQUENCY:
        for f, q in zip(model.frequency_table, model.params):
            lines.append(f"{f} {_num(q.a)} {_num(q.c)} {_num(q.b)}")
    elif kind is ModelKind.PER_FREQUENCY_TREE:
        for f, tree in zip(model.frequency_table, model.params):
            lines += _tree_lines(tree, f)
    elif kind is ModelKind.GLOBAL_TREE:
        lines.append(freqs)
        lines += _tree_lines(model.params, "global")
    elif kind is ModelKind.MLP:
        mlp = model.params
        lines += [freqs, "layers " + " ".join(str(s) for s in [len(LAYER_SIZES) - 1, *LAYER_SIZES])]
        lines.append("norm_mean " + " ".join(map(_num, mlp.input_mean)))
        lines.append("norm_std " + " ".join(map(_num, mlp.input_std)))
        for k, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
            lines.append(f"weight {k} " + " ".join(map(_num, w.ravel(order="C"))))
            lines.append(f"bias {k} " + " ".join(map(_num, b)))
    else:
        raise ValueError(f"cannot serialize kind {kind}")
    return "\n".join(lines) + "\n"


def save(model: PowerModel, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(model))


class _Lines:
    def __init__(self, text, path):
        self.items = [
            (no, line.split())
            for no, line in enumerate(text.splitlines(), start=1)
            if line.strip() and not line.lstrip().startswith("#")
        ]
        self.pos = 0
        self.path = path

    def error(self, msg, line=None):
        if line is None:
            line = self.items[min(self.pos, len(self.items) - 1)][0] if self.items else 1
        return ParseError(msg, line, self.path)

    def next(self, keyword=None):
        if self.pos >= len(self.items):
            raise self.error(f"unexpected end of file (expected {keyword or 'more data'})")
        no, toks = self.items[self.pos]
        if keyword is not None and toks[0] != keyword:
            raise self.error(f"expected '{keyword}', found '{toks[0]}'", no)
        self.pos += 1
        return no, toks

    def floats(self, toks, no):
        try:
            return [float(t) for t in toks]
        except ValueError as exc:
            raise self.error(str(exc), no) from None

    def ints(self, toks, no):
        try:
            return [int(t) for t in toks]
        except ValueError as exc:
            raise self.error(str(exc), no) from None

    def done(self):
        if self.pos != len(self.items):
            raise self.error("trailing content after model")


def _basis(lines, toks, no):
    try:
        return tuple(tuple(int(v) for v in t.split(":")) for t in toks[1:])
    except ValueError:
        raise lines.error("bad basis term", no) from None


def _tree(lines, expect_key=None):
    no, toks = lines.next("tree")
    if len(toks) != 4:
        raise lines.error("tree header needs key, node count and feature count", no)
    key = toks[1]
    n_nodes, n_features = lines.ints(toks[2:], no)
    cols = ([], [], [], [], [])
    for _ in range(n_nodes):
        no, toks = lines.next("node")
        if len(toks) != 6:
            raise lines.error("node line needs 5 fields", no)
        feature, left, right = lines.ints([toks[1], toks[3], toks[4]], no)
        threshold, value = lines.floats([toks[2], toks[5]], no)
        for col, v in zip(cols, (feature, threshold, left, right, value)):
            col.append(v)
    return key, RegressionTree(*(tuple(c) for c in cols), n_features=n_features)


def loads(text: str, path=None) -> PowerModel:
    lines = _Lines(text, path)
    no, header = lines.next()
    if len(header) != 3 or header[0] != MAGIC:
        raise lines.error(f"not a model file (expected '{MAGIC} {VERSION} <kind>')", no)
    if header[1] != VERSION:
        raise UnsupportedVersion(f"unsupported model version {header[1]!r}", no, path)
    try:
        kind = ModelKind(header[2])
    except ValueError:
        raise lines.error(f"unknown model kind {header[2]!r}", no) from None

    try:
        if kind is ModelKind.PER_FREQUENCY:
            freqs, entries = [], []
            while lines.pos < len(lines.items):
                no, toks = lines.next()
                if len(toks) != 4:
                    raise lines.error("expected 'freq_khz a c b'", no)
                freqs.append(lines.ints(toks[:1], no)[0])
                entries.append(Quadratic(*lines.floats(toks[1:], no)))
            model = PowerModel(kind, tuple(entries), tuple(freqs))
        elif kind is ModelKind.PER_FREQUENCY_TREE:
            freqs, trees = [], []
            while lines.pos < len(lines.items):
                key, tree = _tree(lines)
                freqs.append(int(key))
                trees.append(tree)
            model = PowerModel(kind, tuple(trees), tuple(freqs))
        else:
            no, toks = lines.next("frequencies")
            freqs = tuple(lines.ints(toks[1:], no))
            if kind in (ModelKind.SIMPLE, ModelKind.MULTI_TERM, ModelKind.MULTI_FREQUENCY):
                no, toks = lines.next("basis")
                basis = _basis(lines, toks, no)
                if kind is ModelKind.MULTI_FREQUENCY:
                    no, toks = lines.next("split_index")
                    split_index = lines.ints(toks[1:2], no)[0]
                    polys = []
                    for _ in range(2):
                        no, toks = lines.next("coeffs")
                        polys.append(Polynomial(basis, tuple(lines.floats(toks[1:], no))))
                    model = PowerModel(kind, SplitPolynomial(split_index, *polys), freqs)
                else:
                    no, toks = lines.next("coeffs")
                    model = PowerModel(kind, Polynomial(basis, tuple(lines.floats(toks[1:], no))), freqs)
            elif kind is ModelKind.GLOBAL_TREE:
                _, tree = _tree(lines)
                model = PowerModel(kind, tree, freqs)
            else:
                no, toks = lines.next("layers")
                sizes = lines.ints(toks[1:], no)
                if tuple(sizes[1:]) != LAYER_SIZES or sizes[0] != len(LAYER_SIZES) - 1:
                    raise lines.error(f"unsupported layer layout {sizes}", no)
                no, toks = lines.next("norm_mean")
                mean = np.array(lines.floats(toks[1:], no))
                no, toks = lines.next("norm_std")
                std = np.array(lines.floats(toks[1:], no))
                weights, biases = [], []
                for k, (fan_in, fan_out) in enumerate(zip(LAYER_SIZES, LAYER_SIZES[1:])):
                    no, toks = lines.next("weight")
                    vals = lines.floats(toks[2:], no)
                    if len(vals) != fan_in * fan_out:
                        raise lines.error(f"layer {k} weight count {len(vals)} != {fan_in * fan_out}", no)
                    weights.append(np.array(vals).reshape(fan_in, fan_out))
                    no, toks = lines.next("bias")
                    vals = lines.floats(toks[2:], no)
                    if len(vals) != fan_out:
                        raise lines.error(f"layer {k} bias count {len(vals)} != {fan_out}", no)
                    biases.append(np.array(vals))
                model = PowerModel(kind, MlpModel(tuple(weights), tuple(biases), mean, std), freqs)
        lines.done()
    except ValueError as exc:
        if isinstance(exc, ParseError):
            raise
        raise lines.error(str(exc)) from None
    return model


def load(path) -> PowerModel:
    with open(path) as fh:
        return loads(fh.read(), path=str(path))

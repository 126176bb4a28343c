import numpy as np
import pytest

from powerlens import _kernels
from powerlens.core import MeasurementRecord, Utilization

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(params=sorted(_kernels.available_backends()))
def kernel_backend(request, monkeypatch):
    """Run a test once per available kernel backend."""
    impl = _kernels.available_backends()[request.param]
    for name in ("best_split", "cpu_load_batch", "antiderivative"):
        monkeypatch.setattr(_kernels, name, getattr(impl, name))
    return request.param


FREQS = (204000, 518400, 825600, 1132800, 1479000)


def grid_records(power_fn, freqs=FREQS, utils=np.linspace(0.0, 1.0, 11), per_core=False, tag=""):
    """Noiseless records on a frequency x utilization grid."""
    out = []
    for f in freqs:
        for u in utils:
            util = Utilization.from_per_core([u] * 4) if per_core else Utilization(float(u))
            out.append(MeasurementRecord(f, util, float(power_fn(f / 1e6, util.value)), tag))
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def fit_every_kind(mlp_epochs=20):
    """One fitted model per ModelKind on a smooth per-core dataset."""
    from powerlens.core import ModelKind
    from powerlens.learners import FitConfig, fit

    data = grid_records(lambda g, u: 1.1 + 0.3 * g ** 3 + 0.8 * u + 0.5 * g * u * u, per_core=True)
    cfg = FitConfig(mlp_epochs=mlp_epochs, split_index=2)
    models = {kind: fit(kind, data, cfg) for kind in ModelKind if kind is not ModelKind.GLOBAL_TREE}
    models[ModelKind.GLOBAL_TREE] = fit(ModelKind.PER_FREQUENCY_TREE, data, FitConfig(tree_global=True))
    return models

import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from powerlens.core import ModelKind, PowerModel, Quadratic
from powerlens.errors import EmptyTrace, ParseError
from powerlens.tracelog import (
    ONDEMAND_PATTERN,
    ControlFile,
    CounterSnapshot,
    LoadDiagnostics,
    ReplayBackend,
    TraceLogWriter,
    TraceSegment,
    TrackerState,
    bundled_fixture_path,
    cpu_load,
    cpu_loads,
    parse_proc_stat,
    parse_trace_log,
    record_transition,
    segment_power,
    segment_report,
    synthesize_fixture,
    track,
    trace_energy,
    trace_power,
)


def snap(idle, total, t=0.0):
    return CounterSnapshot(tuple(idle), tuple(total), t)


class TestCpuLoad:
    def test_half_busy(self):
        assert cpu_load(snap([0], [0]), snap([50], [100]), 0) == 0.5

    def test_zero_total_delta(self):
        diag = LoadDiagnostics()
        assert cpu_load(snap([10], [100]), snap([10], [100]), 0, diag) == 0.0
        assert diag.zero_delta == 1

    def test_negative_delta_counted(self, caplog):
        diag = LoadDiagnostics()
        with caplog.at_level(logging.WARNING):
            load = cpu_load(snap([50], [100]), snap([40], [90]), 0, diag)
        assert load == 0.0 and diag.negative_delta == 2
        assert "negative" in caplog.text

    def test_idle_exceeding_total_is_clamped(self):
        diag = LoadDiagnostics()
        assert cpu_load(snap([0], [0]), snap([150], [100]), 0, diag) == 0.0
        assert diag.out_of_bounds == 1

    def test_wrapped_idle_counter_reads_full_load(self):
        diag = LoadDiagnostics()
        assert cpu_load(snap([100], [0]), snap([0], [100]), 0, diag) == 1.0
        assert diag.negative_delta == 1

    @given(st.lists(st.integers(-10**6, 10**6), min_size=4, max_size=4))
    def test_always_in_unit_interval(self, v):
        load = cpu_load(snap([v[0]], [v[1]]), snap([v[2]], [v[3]]), 0, LoadDiagnostics())
        assert 0.0 <= load <= 1.0

    def test_batch_matches_scalar(self, kernel_backend):
        rng = np.random.default_rng(3)
        a = snap(rng.integers(-50, 100, 64), rng.integers(-50, 100, 64))
        b = snap(rng.integers(-50, 100, 64), rng.integers(-50, 100, 64))
        d1, d2 = LoadDiagnostics(), LoadDiagnostics()
        assert cpu_loads(a, b, d1) == tuple(cpu_load(a, b, c, d2) for c in range(64))
        assert (d1.negative_delta, d1.zero_delta, d1.out_of_bounds) == \
            (d2.negative_delta, d2.zero_delta, d2.out_of_bounds)


def test_record_transition():
    state = TrackerState()
    assert record_transition(state, None, 102000, 0.0, snap([0, 0], [0, 0])) is None
    seg = record_transition(state, 102000, 204000, 0.5, snap([25, 50], [50, 50]))
    assert seg == TraceSegment(102000, 0.5, (0.5, 0.0))
    assert state.freq_khz == 204000 and state.last_time == 0.5


def test_parse_proc_stat():
    text = "cpu  9 9 9 9 9 9 9 9 0 0\ncpu0 10 0 10 70 10 0 0 0 0 0\ncpu1 0 0 0 100 0 0 0 0 0 0\nintr 1\n"
    s = parse_proc_stat(text)
    assert s.idle == (80, 100) and s.total == (100, 100)


def test_trace_log_round_trip(tmp_path):
    segs = [TraceSegment(102000, 0.25, (0.5, 0.1234)), TraceSegment(1479000, 1.0, (1.0, 0.0))]
    path = tmp_path / "trace.log"
    with TraceLogWriter(path) as w:
        for s in segs:
            w.write(s)
    text = path.read_text()
    assert text.splitlines()[0] == "102000,250000,5000,1234"
    assert parse_trace_log(text) == segs


@pytest.mark.parametrize("line", ["102000,0,5000", "102000,10,10001", "x,1,1", "102000,10"])
def test_bad_trace_lines(line):
    with pytest.raises(ParseError):
        parse_trace_log(line + "\n")


def const_model(power_at):
    freqs = tuple(sorted(power_at))
    return PowerModel(ModelKind.PER_FREQUENCY, tuple(Quadratic(0, 0, power_at[f]) for f in freqs), freqs)


def test_trace_power_hand_example():
    model = const_model({100000: 2.0, 200000: 4.0})
    segs = [TraceSegment(100000, 1.0, (0.5,)), TraceSegment(200000, 3.0, (0.5,))]
    assert trace_power(model, segs) == 3.5
    assert trace_energy(model, segs) == 14.0
    rows = segment_report(model, segs)
    assert [r.t_start for r in rows] == [0.0, 1.0] and [r.energy_j for r in rows] == [2.0, 12.0]


def test_empty_trace():
    with pytest.raises(EmptyTrace):
        trace_power(const_model({100000: 1.0}), [])


def test_replay_reproduces_pattern():
    segs = track(ReplayBackend.from_file(bundled_fixture_path()))
    assert [s.freq_khz for s in segs] == [p[0] for p in ONDEMAND_PATTERN]
    for s, (f, d, loads) in zip(segs, ONDEMAND_PATTERN):
        assert s.duration_s == pytest.approx(d, abs=1e-9)
        assert s.per_core_load == pytest.approx(loads, abs=1e-9)


def test_bundled_fixture_is_current():
    with open(bundled_fixture_path()) as fh:
        assert fh.read() == synthesize_fixture(ONDEMAND_PATTERN)


def test_stop_mid_interval_flushes_open_segment():
    text = synthesize_fixture(((100000, 0.1, (0.5,)), (200000, 0.1, (1.0,))))
    segs = track(ReplayBackend.from_text(text), control=lambda now: now < 0.15)
    assert [s.freq_khz for s in segs] == [100000, 200000]
    assert segs[1].duration_s == pytest.approx(0.06)


def test_start_waits_for_control():
    text = synthesize_fixture(((100000, 0.1, (0.5,)), (200000, 0.1, (1.0,))))
    segs = track(ReplayBackend.from_text(text), control=lambda now: now >= 0.05)  # first poll at or after 0.05 s is 0.06 s
    assert segs[0].freq_khz == 100000 and segs[0].duration_s == pytest.approx(0.04)


def test_read_errors_are_retried():
    class Flaky:
        realtime = False

        def __init__(self, inner):
            self.inner, self.n = inner, 0

        def read(self):
            self.n += 1
            if self.n == 3:
                raise OSError("transient")
            return self.inner.read()

    text = synthesize_fixture(((100000, 0.1, (0.5,)), (200000, 0.1, (1.0,))))
    segs = track(Flaky(ReplayBackend.from_text(text)))
    assert [s.freq_khz for s in segs] == [100000, 200000]


def test_control_file(tmp_path):
    path = tmp_path / "ctl"
    ctl = ControlFile(str(path))
    assert ctl() is False
    path.write_text("1\n")
    assert ctl() is True
    path.write_text("garbage")
    assert ctl() is True
    path.write_text("0")
    assert ctl() is False


def test_fixture_rejects_uneven_durations():
    with pytest.raises(ValueError):
        synthesize_fixture(((100000, 0.015, (0.5,)),))


def test_cpu_load_hand_examples():
    assert cpu_load(snap([0], [0]), snap([0], [100]), 0) == 1.0
    diag = LoadDiagnostics()
    assert cpu_load(snap([10], [0]), snap([5], [100]), 0, diag) == 1.0
    assert diag.negative_delta == 1


def test_identical_snapshots_give_zero_loads():
    state = TrackerState()
    same = snap([7, 9], [20, 30])
    record_transition(state, None, 102000, 0.0, same)
    seg = record_transition(state, 102000, 204000, 1.0, same, LoadDiagnostics())
    assert seg.per_core_load == (0.0, 0.0)


def test_constant_frequency_run_flushes_one_segment():
    text = synthesize_fixture(((921600, 10.0, (0.3, 0.6)),))
    segs = track(ReplayBackend.from_text(text))
    assert len(segs) == 1 and segs[0].duration_s == pytest.approx(10.0)
    assert segs[0].per_core_load == pytest.approx((0.3, 0.6))


def test_segment_power_direct_lookup():
    model = PowerModel(ModelKind.PER_FREQUENCY, (Quadratic(0.3, 0.9, 1.1),), (518400,))
    seg = TraceSegment(518400, 1.0, (1.0, 1.0, 1.0, 1.0))
    assert segment_power(model, seg) == 0.3 + 0.9 + 1.1
    assert segment_power(const_model({100000: 2.0}), seg) == 2.0


segments_strategy = st.lists(
    st.tuples(st.sampled_from([100000, 200000, 300000]), st.integers(1, 5000), st.floats(0, 1)),
    min_size=1, max_size=20)


@given(segments_strategy)
def test_trace_power_properties(raw):
    model = PowerModel(ModelKind.PER_FREQUENCY, tuple(Quadratic(0.5, 1.0 + k, 1.0) for k in range(3)),
                       (100000, 200000, 300000))
    segs = [TraceSegment(f, ms / 1000, (u, u)) for f, ms, u in raw]
    p = trace_power(model, segs)
    powers = [segment_power(model, s) for s in segs]
    assert min(powers) - 1e-12 <= p <= max(powers) + 1e-12
    # splitting a segment in two leaves the result unchanged
    head = segs[0]
    split = [TraceSegment(head.freq_khz, head.duration_s / 2, head.per_core_load)] * 2 + segs[1:]
    assert trace_power(model, split) == pytest.approx(p, rel=1e-12)
    if len({(s.freq_khz, s.per_core_load) for s in segs}) == 1:
        assert p == pytest.approx(powers[0], rel=1e-12)
    single = segs[:1]
    assert trace_energy(model, single) == pytest.approx(powers[0] * single[0].duration_s, rel=1e-15)

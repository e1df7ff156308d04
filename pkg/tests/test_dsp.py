import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from est_readout import dsp, tracegen
from est_readout.dsp import CdsConfig, DetectionError, PeakHistogram
from est_readout.model import ReadoutConfig
from est_readout.tracegen import ShotRecord, SignalModel, State, Trace


def test_cds_config_validation_and_period():
    cds = CdsConfig.tiled(200.0, 0.1)
    assert cds.period == pytest.approx(5.0)
    assert cds.gate_baseline_separation == pytest.approx(5.0)
    with pytest.raises(ValueError):
        CdsConfig(200.0, 5.0, 5.0)
    with pytest.raises(ValueError):
        CdsConfig(200.0, 0.1, 6.0)


def test_cds_on_a_hand_built_step():
    # rate 1 MHz, period 4 us, gate 1 us, baseline right after the period
    cds = CdsConfig(250.0, 1.0, 4.0)
    x = np.concatenate([np.ones(10), np.zeros(10)])
    out = dsp.cds_filter(x, cds, sample_rate=1.0)
    # gates start at 0,4,8,12 (baseline 4,8,12,16); the falling edge is at 10
    np.testing.assert_allclose(out, [0.0, 0.0, 1.0, 0.0])
    rising = dsp.cds_filter(1.0 - x, cds, sample_rate=1.0)
    np.testing.assert_allclose(rising, [0.0, 0.0, -1.0, 0.0])


def test_cds_gate_average():
    cds = CdsConfig(250.0, 2.0, 2.0)
    x = np.array([3.0, 1.0, 0.0, 0.0, 7.0, 5.0, 1.0, 1.0])
    out = dsp.cds_filter(x, cds, sample_rate=1.0)
    np.testing.assert_allclose(out, [2.0, 5.0])


def test_cds_rejects_dc_offset():
    cds = CdsConfig.tiled(200.0, 0.1)
    rng = np.random.default_rng(0)
    x = rng.standard_normal(2100)
    np.testing.assert_allclose(dsp.cds_filter(x + 12.5, cds, 14.0), dsp.cds_filter(x, cds, 14.0), atol=1e-12)


def test_cds_filter_accepts_trace_objects():
    tr = Trace(samples=np.arange(100.0), dt=1.0)
    cds = CdsConfig(250.0, 1.0, 4.0)
    np.testing.assert_allclose(dsp.cds_filter(tr, cds), -4.0)
    with pytest.raises(ValueError):
        dsp.cds_filter(np.arange(100.0), cds)


def test_cds_short_trace_raises():
    with pytest.raises(DetectionError):
        dsp.cds_filter(np.zeros(3), CdsConfig(250.0, 1.0, 4.0), 1.0)


def test_cds_from_sparse_matches_full():
    cfg = ReadoutConfig(16, 117, 337, 150)
    cds = CdsConfig.tiled(200.0, 0.1)
    layout = dsp.cds_layout(cds, cfg.sample_rate, cfg.n_samples)
    x = np.random.default_rng(1).standard_normal((3, cfg.n_samples))
    idx = layout.sample_indices
    np.testing.assert_allclose(dsp.cds_from_sparse(x[:, idx], idx, layout), dsp.cds_apply(x, layout))


def test_count_events_examples():
    x = np.array([0.0, 1.0, 1.0, 0.0, -1.0, 0.0, 0.9, 0.0])
    assert dsp.count_events_cds(x, 0.5) == (2, 1)
    assert dsp.count_events_cds(x, 0.95) == (1, 1)
    assert dsp.count_events_cds(x, 0.5, -2.0) == (2, 0)
    with pytest.raises(ValueError):
        dsp.count_events_cds(x, np.inf)


@given(arrays(float, st.integers(1, 60), elements=st.floats(-2, 2)), st.floats(0.1, 1.5))
def test_count_events_equals_number_of_upward_crossings(x, thr):
    n_out, n_in = dsp.count_events_cds(x, thr)
    above = np.concatenate([[False], x >= thr])
    below = np.concatenate([[False], x <= -thr])
    assert n_out == int(np.sum(above[1:] & ~above[:-1]))
    assert n_in == int(np.sum(below[1:] & ~below[:-1]))
    batch_out, _ = dsp.count_events_cds(np.vstack([x, x]), thr)
    assert list(batch_out) == [n_out, n_out]


@given(arrays(float, st.integers(1, 50), elements=st.floats(-5, 5)), st.integers(1, 10))
def test_moving_average_matches_convolution(x, w):
    if w > x.size:
        w = x.size
    np.testing.assert_allclose(dsp.moving_average(x, w), np.convolve(x, np.ones(w) / w, mode="valid"), atol=1e-12)


def test_direct_peak_extract():
    x = np.ones(40)
    x[10:24] = 0.0
    assert dsp.direct_peak_extract(x, 1.0, 14.0) == pytest.approx(0.0)
    x[10:24] = 1.0
    x[10:17] = 0.0  # a half-microsecond dip only reaches halfway
    assert dsp.direct_peak_extract(x, 1.0, 14.0) == pytest.approx(0.5)
    with pytest.raises(DetectionError):
        dsp.direct_peak_extract(np.zeros(0), 1.0, 14.0)


def test_integrated_samples():
    x = np.arange(28.0).reshape(1, 28)
    out = dsp.integrated_samples(x, 14.0)
    np.testing.assert_allclose(out, [6.5, 20.5])


def test_histogram_edges_cover_every_value():
    values = np.array([0.0, 0.5, 1.0])
    edges = dsp.histogram_edges(values, 4)
    assert edges[0] == 0.0 and edges[-1] > 1.0
    h = dsp.build_histogram([1.0], [0.0, 0.5], bins=4, edges=edges)
    assert h.counts_excited.sum() == 1 and h.counts_ground.sum() == 2
    assert h.counts_excited[-1] == 1


def test_peak_histogram_validation_and_merge():
    edges = np.linspace(0, 1, 3)
    with pytest.raises(ValueError):
        PeakHistogram(edges, np.array([1, 2, 3]), np.array([1, 2]))
    with pytest.raises(ValueError):
        PeakHistogram(edges, np.array([1, -1]), np.array([1, 2]))
    a = PeakHistogram(edges, np.array([1, 2]), np.array([3, 4]))
    m = a.merge(a)
    np.testing.assert_array_equal(m.counts_excited, [2, 4])
    with pytest.raises(ValueError):
        a.merge(PeakHistogram(edges, np.array([1, 2]), np.array([3, 4]), event_above=False))


def test_optimize_threshold_separable():
    hist = dsp.build_histogram(np.full(50, 1.0), np.full(80, 0.0), bins=10)
    det = dsp.optimize_threshold(hist)
    assert det.e_t == 0.0 and det.e_n == 0.0
    assert np.all(dsp.classify([1.0], det.threshold)) and not np.any(dsp.classify([0.0], det.threshold))


def test_optimize_threshold_event_below():
    hist = dsp.build_histogram(np.full(50, 0.0), np.full(80, 1.0), bins=10, event_above=False)
    det = dsp.optimize_threshold(hist)
    assert det.total_error == 0.0
    assert dsp.classify(0.0, det.threshold, event_above=False)


def test_optimize_threshold_tie_prefers_smaller_e_n():
    # thresholds in the empty gap all give the same total; so does one that trades errors evenly
    edges = np.array([0.0, 1.0, 2.0, 3.0])
    hist = PeakHistogram(edges, np.array([1, 0, 1]), np.array([1, 0, 1]))
    det = dsp.optimize_threshold(hist)
    assert det.total_error == pytest.approx(1.0)
    assert det.e_n == 0.0


def test_optimize_threshold_needs_both_classes():
    with pytest.raises(DetectionError):
        dsp.optimize_threshold(PeakHistogram(np.array([0.0, 1.0]), np.array([0]), np.array([3])))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.booleans())
def test_optimize_threshold_matches_brute_force(seed, above):
    rng = np.random.default_rng(seed)
    exc = rng.normal(1.0, 0.6, 300)
    gnd = rng.normal(0.0, 0.6, 400)
    if not above:
        exc, gnd = -exc, -gnd
    hist = dsp.build_histogram(exc, gnd, bins=40, event_above=above)
    det = dsp.optimize_threshold(hist)
    best = np.inf
    for thr in hist.bin_edges:
        e_t = np.mean(~dsp.classify(exc, thr, above))
        e_n = np.mean(dsp.classify(gnd, thr, above))
        best = min(best, e_t + e_n)
    assert det.total_error == pytest.approx(best, abs=1e-12)
    assert np.mean(~dsp.classify(exc, det.threshold, above)) == pytest.approx(det.e_t, abs=1e-12)


def test_tunnel_time_histogram_recovers_tau():
    t = np.random.default_rng(3).exponential(16.0, 20000)
    centers, counts, tau, err = dsp.tunnel_time_histogram(t, 2.0, 150.0)
    assert counts.sum() == np.sum(t < centers[-1] + 1.0)
    assert tau == pytest.approx(16.0, rel=0.03)
    assert 0 < err < 0.5


def test_tunnel_time_histogram_errors():
    with pytest.raises(DetectionError, match="no tunnel-out"):
        dsp.tunnel_time_histogram([np.nan], 1.0)
    with pytest.raises(DetectionError, match="at least"):
        dsp.tunnel_time_histogram(np.ones(10), 1.0)


def test_first_out_times():
    traces = [Trace(np.zeros(2), 1.0, ShotRecord(State.T0, ((4.0, "out"),))),
              Trace(np.zeros(2), 1.0, ShotRecord(State.S)), Trace(np.zeros(2), 1.0)]
    out = dsp.first_out_times(traces)
    assert out[0] == 4.0 and np.isnan(out[1]) and np.isnan(out[2])


def test_detected_first_out_times():
    cds = CdsConfig(250.0, 1.0, 4.0)
    layout = dsp.cds_layout(cds, 1.0, 20)
    res = np.array([[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 0.0]])
    out = dsp.detected_first_out_times(res, 0.5, layout, 1.0)
    assert out[0] == 12.0 and np.isnan(out[1])


def test_cds_sees_simulated_tunnel_out():
    cfg = ReadoutConfig(16, 117, 337, 150)
    rec = ShotRecord(State.T0, ((50.0, "out"), (90.0, "in")))
    tr = tracegen.synthesize_trace(rec, SignalModel(), cfg, 0)
    out = dsp.cds_filter(tr, CdsConfig.tiled(200.0, 0.1))
    assert dsp.count_events_cds(out, 0.5) == (1, 1)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
def test_cds_filter_is_linear(a, b, seed):
    cds = CdsConfig.tiled(200.0, 0.1)
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal((2, 2100))
    lhs = dsp.cds_filter(a * x + b * y, cds, 14.0)
    rhs = a * dsp.cds_filter(x, cds, 14.0) + b * dsp.cds_filter(y, cds, 14.0)
    np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_direct_peak_on_noiseless_simulated_traces():
    cfg = ReadoutConfig(16, 117, 337, 150)
    sig = SignalModel()
    empty = tracegen.synthesize_trace(ShotRecord(State.S), sig, cfg, 0)
    assert dsp.direct_peak_extract(empty) == pytest.approx(sig.level_occupied, abs=1e-12)
    long_dwell = tracegen.synthesize_trace(ShotRecord(State.T0, ((20.0, "out"), (80.0, "in"))), sig, cfg, 0)
    assert dsp.direct_peak_extract(long_dwell) == pytest.approx(sig.level_empty, abs=1e-6)

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from est_readout import model, tracegen
from est_readout.model import FieldParams, ReadoutConfig, ThermalParams
from est_readout.tracegen import Prepared, ShotRecord, SignalModel, State

CFG = ReadoutConfig(16.0, 117.0, 337.0, 150.0)
NO_THERMAL = ThermalParams()


def forced(prepared, n, th=NO_THERMAL, relax=False, seed=0, cfg=CFG):
    rng = tracegen.block_rng(seed, 0)
    return tracegen.sample_batch(rng, n, prepared, cfg, th, 0.0, 0.0, relax=relax)[1]


def test_block_rng_is_reproducible_and_block_dependent():
    a = tracegen.block_rng(3, 1).random(5)
    np.testing.assert_array_equal(a, tracegen.block_rng(3, 1).random(5))
    assert not np.array_equal(a, tracegen.block_rng(3, 2).random(5))
    assert not np.array_equal(a, tracegen.block_rng(4, 1).random(5))


def test_ground_state_without_thermal_errors_never_tunnels():
    ev = forced(Prepared.FORCED_S, 2000)
    assert np.all(np.isnan(ev))


def test_triplet_first_out_is_exponential():
    ev = forced(Prepared.FORCED_T0, 20000)
    t = ev[:, 0][~np.isnan(ev[:, 0])]
    m, tau = CFG.meas_window, CFG.tau_out
    assert t.size / ev.shape[0] == pytest.approx(1 - math.exp(-m / tau), abs=0.005)
    # truncated exponential on [0, m]
    cdf = lambda x: (1 - np.exp(-x / tau)) / (1 - math.exp(-m / tau))  # noqa: E731
    assert stats.kstest(t, cdf).pvalue > 1e-3


def test_tunnel_in_dwell_is_exponential():
    ev = forced(Prepared.FORCED_T0, 20000)
    ok = ~np.isnan(ev[:, 1])
    dwell = ev[ok, 1] - ev[ok, 0]
    assert np.all(dwell > 0)
    # censored by the window end, so compare the part below 20 us
    short = dwell[dwell < 20]
    cdf = lambda x: (1 - np.exp(-x / CFG.tau_in)) / (1 - math.exp(-20 / CFG.tau_in))  # noqa: E731
    assert stats.kstest(short, cdf).pvalue > 1e-3


def test_relaxation_reduces_tunneling_to_survival_fraction():
    ev = forced(Prepared.FORCED_T0, 40000, relax=True)
    frac = np.mean(~np.isnan(ev[:, 0]))
    assert frac == pytest.approx(model.survival_fraction(CFG), abs=4 * math.sqrt(0.05 / 40000))


def test_false_tunneling_rate_is_alpha1():
    ev = forced(Prepared.FORCED_S, 40000, th=ThermalParams(alpha1=0.081))
    assert np.mean(~np.isnan(ev[:, 0])) == pytest.approx(0.081, abs=0.006)


def test_double_tunneling_rate_is_p2():
    th = ThermalParams(alpha2=0.08, beta=0.12)
    ev = forced(Prepared.FORCED_T0, 40000, th=th)
    first = ~np.isnan(ev[:, 0])
    second = ~np.isnan(ev[:, 2])
    assert not np.any(second & ~first)
    assert second[first].mean() == pytest.approx(th.p2, abs=0.01)


def test_event_rows_are_ordered_and_inside_window():
    th = ThermalParams(0.1, 0.2, 0.2)
    ev = forced(Prepared.FORCED_T0, 5000, th=th, relax=True)
    for row in ev:
        present = row[~np.isnan(row)]
        assert np.all(np.diff(present) >= 0)
        # events fill the leading columns
        assert np.all(np.isnan(row[present.size:]))
    assert np.all(ev[~np.isnan(ev)] < CFG.meas_window)


def test_evolved_states_follow_precession_probability():
    rng = tracegen.block_rng(0, 0)
    t = 0.25  # quarter period at 1 GHz
    states, _ = tracegen.sample_batch(rng, 40000, Prepared.EVOLVED, CFG, NO_THERMAL, 1000.0, t)
    assert np.mean(states == 1) == pytest.approx(model.ideal_t0_probability(t, 1000.0), abs=0.01)


def test_false_load_populates_three_triplets_equally():
    rng = tracegen.block_rng(0, 0)
    states, _ = tracegen.sample_batch(rng, 60000, Prepared.EVOLVED, CFG, ThermalParams(beta=0.3), 0.0, 0.0)
    for code in (1, 2, 3):
        assert np.mean(states == code) == pytest.approx(0.1, abs=0.006)


def test_sample_shot_events_record():
    rec = tracegen.sample_shot_events("forced_t0", 1, CFG, NO_THERMAL, 500.0, 1.0, relax=False)
    assert rec.initial_state is State.T0
    assert rec.label == "excited"
    assert all(d == ("out" if k % 2 == 0 else "in") for k, (_, d) in enumerate(rec.events))


def test_shot_record_validation():
    with pytest.raises(ValueError):
        ShotRecord(State.T0, events=((2.0, "out"), (1.0, "in")))
    with pytest.raises(ValueError):
        ShotRecord(State.T0, events=((1.0, "in"),))


@given(st.lists(st.floats(0, 150, allow_nan=False), max_size=4), st.sampled_from(list(State)))
def test_shot_record_round_trip(times, state):
    times = sorted(times)
    rec = ShotRecord(state, tuple((t, "out" if k % 2 == 0 else "in") for k, t in enumerate(times)), "ground",
                     1.5, 500.0)
    assert ShotRecord.from_dict(rec.to_dict()) == rec
    row = rec.event_row()
    np.testing.assert_array_equal(row[: len(times)], times)
    assert np.all(np.isnan(row[len(times):]))


def test_signal_model_validation():
    with pytest.raises(ValueError):
        SignalModel(level_occupied=1.0, level_empty=1.0)
    with pytest.raises(ValueError):
        SignalModel(noise_sigma=-1.0)
    with pytest.raises(ValueError):
        SignalModel(lowpass_cutoff=10.0).pole(14.0)


def test_noiseless_trace_levels_and_edges():
    sig = SignalModel(lowpass_cutoff=7.0 - 1e-9)
    cfg = ReadoutConfig(16, 117, 337, 10.0, sample_rate=14.0)
    ev = np.array([[2.0, 6.0, np.nan, np.nan]])
    x = tracegen.render_traces(ev, sig, cfg, np.random.default_rng(0))[0]
    t = np.arange(cfg.n_samples) * cfg.dt
    assert np.allclose(x[t < 2.0], 1.0)
    assert x[(t > 4) & (t < 6)].max() < 1e-6
    assert x[-1] > 0.999


def test_render_sparse_equals_full_render_without_noise():
    sig = SignalModel(lowpass_cutoff=1.0)
    ev = forced(Prepared.FORCED_T0, 200, th=ThermalParams(0.1, 0.3, 0.2))
    full = tracegen.render_traces(ev, sig, CFG, np.random.default_rng(0))
    idx = np.array([0, 3, 4, 100, 1000, CFG.n_samples - 1])
    sparse = tracegen.render_sparse(ev, sig, CFG, np.random.default_rng(0), idx)
    np.testing.assert_allclose(sparse, full[:, idx], atol=1e-12)


def test_render_sparse_noise_statistics_match_full_render():
    sig = SignalModel(noise_sigma=1.0, lowpass_cutoff=1.0)
    ev = np.full((20000, 4), np.nan)
    idx = np.array([10, 11, 15, 40])
    full = tracegen.render_traces(ev, sig, CFG, np.random.default_rng(1))[:, idx]
    sparse = tracegen.render_sparse(ev, sig, CFG, np.random.default_rng(2), idx)
    a = sig.pole(CFG.sample_rate)
    var = (1 - a) / (1 + a)
    for x in (full, sparse):
        assert x.var(axis=0) == pytest.approx(np.full(4, var), rel=0.05)
        for (i, j) in ((0, 1), (1, 2), (2, 3)):
            rho = np.corrcoef(x[:, i], x[:, j])[0, 1]
            assert rho == pytest.approx(a ** (idx[j] - idx[i]), abs=0.03)


def test_render_sparse_rejects_unsorted_indices():
    with pytest.raises(ValueError):
        tracegen.render_sparse(np.full((1, 4), np.nan), SignalModel(), CFG, np.random.default_rng(0), [3, 2])


def test_synthesize_trace_carries_metadata():
    rec = ShotRecord(State.T0, ((10.0, "out"), (40.0, "in")), "excited", 0.0, 500.0)
    tr = tracegen.synthesize_trace(rec, SignalModel(noise_sigma=0.1), CFG, 5)
    assert len(tr) == CFG.n_samples
    assert tr.meta is rec
    assert tr.times[1] == pytest.approx(CFG.dt)


def test_draw_fields():
    rng = np.random.default_rng(0)
    np.testing.assert_array_equal(tracegen.draw_fields(rng, 3, FieldParams(500.0)), 500.0)
    d = tracegen.draw_fields(rng, 50000, FieldParams(500.0, 15.71))
    assert d.mean() == pytest.approx(500.0, abs=0.3)
    assert d.std() == pytest.approx(15.71, rel=0.02)


def test_block_sizes():
    assert tracegen.block_sizes(2500, 1000) == [1000, 1000, 500]
    assert tracegen.block_sizes(1000, 1000) == [1000]
    with pytest.raises(ValueError, match="empty ensemble"):
        tracegen.block_sizes(0)


def test_sweep_block_reload_follows_previous_window():
    th = ThermalParams(0.0, 0.0, 1.0)  # every reload lands in a triplet
    sb = tracegen.sweep_block(0, 0, 2000, [0.0, 0.0, 0.0], CFG, th, FieldParams(0.0), relax=False)
    tunneled_before = ~np.isnan(sb.events[0, :, 0])
    # only windows after a tunnel-out can start from a false load
    assert np.all(sb.states[1][~tunneled_before] == 0)
    assert np.all(sb.states[1][tunneled_before] > 0)


def test_ensemble_independent_of_worker_count():
    args = (30, [0.0, 1.0], CFG, ThermalParams(0.08, 0.08, 0.12), FieldParams(500.0, 15.0),
            SignalModel(noise_sigma=0.3), 9)
    serial = tracegen.synthesize_ensemble(*args, block_size=10, workers=1)
    parallel = tracegen.synthesize_ensemble(*args, block_size=10, workers=2)
    assert len(serial) == 60
    for a, b in zip(serial, parallel):
        np.testing.assert_array_equal(a.samples, b.samples)
        assert a.meta == b.meta
    # sweep-major ordering
    assert [tr.meta.evolve_time for tr in serial[:4]] == [0.0, 1.0, 0.0, 1.0]


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_sweep_matches_recursion_small(seed):
    th = ThermalParams(0.08, 0.08, 0.12)
    times = np.linspace(0, 2, 5)
    sb = tracegen.sweep_block(seed, 0, 20000, times, CFG, th, FieldParams(500.0))
    p_mc = np.mean(~np.isnan(sb.events[:, :, 0]), axis=1)
    p = model.detection_prob_recursion(times, CFG, th, 500.0)
    se = np.sqrt(p * (1 - p) / 20000)
    assert np.all(np.abs(p_mc - p) < 5 * se)


QL_CFG = ReadoutConfig(16.0, 117.0, 337.0, 150.0)


def test_first_dwell_ks_at_ten_thousand_shots():
    cfg = replace(QL_CFG, t1=math.inf)
    ev = forced(Prepared.FORCED_T0, 10000, cfg=cfg, relax=True, seed=17)
    t = ev[:, 0][~np.isnan(ev[:, 0])]
    m = cfg.meas_window
    cdf = lambda x: (1 - np.exp(-x / 16.0)) / (1 - math.exp(-m / 16.0))  # noqa: E731
    assert stats.kstest(t, cdf).pvalue > 0.01


def test_tunneled_fraction_is_survival_fraction_at_1e5_shots():
    ev = forced(Prepared.FORCED_T0, 100000, cfg=QL_CFG, relax=True, seed=18)
    r = model.survival_fraction(QL_CFG)
    assert abs(np.mean(~np.isnan(ev[:, 0])) - r) <= 3 * math.sqrt(r * (1 - r) / 1e5)


def test_step_response_time_constant():
    cutoff = 1.0
    cfg = ReadoutConfig(16.0, 117.0, 337.0, 150.0, sample_rate=1000.0)
    edge = cfg.meas_window / 2
    rec = ShotRecord(State.T0, ((edge, "out"),))
    x = tracegen.synthesize_trace(rec, SignalModel(lowpass_cutoff=cutoff), cfg, 0).samples
    t = np.arange(x.size) * cfg.dt
    fall = 1.0 - x
    crossing = np.interp(1 - math.exp(-1), fall[t >= edge], t[t >= edge])
    assert crossing - edge == pytest.approx(1 / (2 * math.pi * cutoff), abs=2 * cfg.dt)


def test_noiseless_empty_record_is_constant():
    x = tracegen.synthesize_trace(ShotRecord(State.S), SignalModel(), CFG, 0).samples
    np.testing.assert_array_equal(x, 1.0)


def test_single_sweep_ensemble_is_one_sampled_shot():
    th, sig, t = ThermalParams(0.08, 0.08, 0.12), SignalModel(noise_sigma=0.3), 0.7
    tr = tracegen.synthesize_ensemble(1, [t], CFG, th, FieldParams(500.0), sig, 4)[0]
    rng = tracegen.block_rng(4, 0)
    rec = tracegen.sample_shot_events(Prepared.EVOLVED, rng, CFG, th, 500.0, t)
    direct = tracegen.synthesize_trace(rec, sig, CFG, rng)
    assert tr.meta == rec
    np.testing.assert_array_equal(tr.samples, direct.samples)


def test_excited_preparation_gives_one_pair():
    cfg = replace(CFG, t1=math.inf)
    traces = tracegen.synthesize_ensemble(500, [1.0], cfg, NO_THERMAL, FieldParams(500.0), SignalModel(), 2)
    for tr in traces:
        assert tr.meta.initial_state is State.T0
        assert [d for _, d in tr.meta.events] in (["out"], ["out", "in"])

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bfcsim.correlator import (MIN_ACCEPTANCE, Histogram, car, compensate_gate,
                               count_coincidences, cross_correlate, gate_acceptance,
                               measure_jsi, peak_and_background)
from bfcsim.dispersion import DispersionElement
from bfcsim.events import Arm, ChannelConfig, Gate, SourceConfig, simulate
from bfcsim.spectral import Flat, RingParams
from bfcsim.state import BiphotonState


def brute_force(ts, ti, bw, rng):
    """O(n^2) reference histogram with the same half-open bins."""
    n = int(round(2 * rng / bw))
    counts = np.zeros(n, dtype=np.int64)
    for a in ts:
        for b in ti:
            d = a - b
            if -rng <= d < rng:
                j = int(math.floor((d + rng) / bw))
                if 0 <= j < n:
                    counts[j] += 1
    return counts


def test_single_tag_zero_bin():
    h = cross_correlate([1000.0], [1000.0], 100, 1000)
    assert h.counts.sum() == 1
    assert h.counts[10] == 1
    assert h.edges_ps[10] == 0.0


def test_offset_three_ns():
    t = np.sort(np.random.default_rng(1).uniform(0, 1e9, 500))
    # spread far apart so only the true partner falls within range
    t = np.arange(500) * 1e6
    h = cross_correlate(t + 3000.0, t, 100, 5000)
    assert h.counts.sum() == 500
    assert h.counts[np.searchsorted(h.edges_ps, 3000.0, side="right") - 1] == 500


def test_histogram_invariants():
    with pytest.raises(ValueError):
        cross_correlate([0.0], [0.0], 300, 1000)
    with pytest.raises(ValueError):
        cross_correlate([2.0, 1.0], [0.0], 100, 1000)
    with pytest.raises(ValueError):
        Histogram(100, 1000, np.ones(5))
    h = cross_correlate([0.0], [0.0], 100, 1000)
    assert h.n_bins == 20 == len(h.counts)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), ns=st.integers(0, 300), ni=st.integers(0, 300),
       span=st.floats(1e3, 1e5), bw=st.sampled_from([10.0, 50.0, 100.0]))
def test_matches_brute_force(seed, ns, ni, span, bw):
    r = np.random.default_rng(seed)
    ts = np.sort(np.round(r.uniform(0, span, ns)))
    ti = np.sort(np.round(r.uniform(0, span, ni)))
    h = cross_correlate(ts, ti, bw, 2000.0)
    assert np.array_equal(h.counts, brute_force(ts, ti, bw, 2000.0))


def test_matches_brute_force_2000():
    r = np.random.default_rng(99)
    ts = np.sort(r.uniform(0, 2e6, 2000))
    ti = np.sort(np.concatenate([ts[:1000] + r.normal(0, 300, 1000), r.uniform(0, 2e6, 1000)]))
    h = cross_correlate(ts, ti, 100, 5000)
    assert np.array_equal(h.counts, brute_force(ts, ti, 100, 5000))


@given(seed=st.integers(0, 2**31), cut=st.integers(1, 9))
@settings(max_examples=25, deadline=None)
def test_partition_merge_invariance(seed, cut):
    r = np.random.default_rng(seed)
    ts = np.sort(r.uniform(0, 1e6, 400))
    ti = np.sort(r.uniform(0, 1e6, 400))
    full = cross_correlate(ts, ti, 100, 3000)
    # split the signal stream in time; idler stream complete for each part
    b = cut * 1e5
    parts = cross_correlate(ts[ts < b], ti, 100, 3000) + cross_correlate(ts[ts >= b], ti, 100, 3000)
    assert np.array_equal(full.counts, parts.counts)


def test_time_reversal_mirrors():
    r = np.random.default_rng(5)
    ts = np.sort(r.uniform(0, 1e6, 500) + 0.3)
    ti = np.sort(r.uniform(0, 1e6, 500))
    a = cross_correlate(ts, ti, 100, 3000)
    b = cross_correlate(ti, ts, 100, 3000)
    # exact zero differences land in the +0 bin either way; none here
    assert np.array_equal(a.mirrored().counts, b.counts)


def test_peak_area_at_low_efficiency(state):
    src = SourceConfig(1e6, 1.0, seed=21, segment_duration=0.01)
    ch = ChannelConfig(0.1, 0.0, 0.0)
    s, i = simulate(state, src, Arm(ch), Arm(ch))
    n = count_coincidences(s, i, -5000, 5000)
    assert abs(n - 1e4) < 5 * math.sqrt(1e4)
    # brute-force oracle on a subsample of about 1e3 pairs
    ss, ii = s.time_ps[s.time_ps < 1e11], i.time_ps[i.time_ps < 1e11]
    assert count_coincidences(ss, ii, -5000, 5000) == brute_force(ss, ii, 10000, 5000)[0]


def test_car_flat_histogram():
    h = Histogram(100, 25000, np.full(500, 7))
    assert car(h, 2000) == pytest.approx(1.0)


def test_car_constructed_52():
    counts = np.full(500, 0.5)
    counts[240:260] = 26.0  # 20 bins x 26 = 520 in the peak window, 10 per off-peak window
    h = Histogram(100, 25000, counts)
    assert car(h, 2000) == pytest.approx(52.0)


def test_car_zero_background_is_inf():
    counts = np.zeros(500)
    counts[250] = 9
    assert car(Histogram(100, 25000, counts), 2000) == math.inf


def test_car_window_too_large():
    with pytest.raises(ValueError):
        car(Histogram(100, 1000, np.ones(20)), 2000)


def test_background_skips_guard_band():
    counts = np.ones(500)
    counts[230:270] = 5.0  # tails spread one window either side of the peak
    counts[250] = 50.0
    peak, bg, nbg = peak_and_background(Histogram(100, 25000, counts), 2000)
    assert bg == pytest.approx(20.0)
    # peak window starts at bin 231; the grid 11, 31, ... holds 24 windows, 3 are skipped
    assert peak == 145.0
    assert nbg == 21


def test_car_uncorrelated_streams():
    r = np.random.default_rng(8)
    vals = []
    for _ in range(8):
        ts = np.sort(r.uniform(0, 1e10, 20000))
        ti = np.sort(r.uniform(0, 1e10, 20000))
        vals.append(car(cross_correlate(ts, ti, 100, 25000), 2000, center_ps=0.0))
    # Poisson peak window of about 80 counts: sigma of the ratio ~ 1/sqrt(80)
    assert abs(np.mean(vals) - 1) < 3 / math.sqrt(80 * len(vals))


def _flat_state(n=6):
    return BiphotonState(RingParams(n_sidebands=n, weight_model=Flat()))


def test_jsi_noiseless_is_diagonal():
    st = _flat_state(3)
    # low flux: no dark counts and a negligible chance of two pairs within a window
    jsi = measure_jsi(st, SourceConfig(2e4, 2.0, seed=3), (ChannelConfig(0.3),) * 2, (2, 4))
    off = jsi.values[~np.eye(3, dtype=bool)]
    assert np.all(off == 0)
    assert np.all(np.diag(jsi.values) > 0)


def test_jsi_flat_diagonal_equal():
    st = _flat_state(3)
    jsi = measure_jsi(st, SourceConfig(1e6, 0.2, seed=4), (ChannelConfig(0.3),) * 2, (2, 4))
    d = np.diag(jsi.values)
    sig = math.sqrt(d.mean())
    assert np.all(np.abs(d - d.mean()) < 5 * sig)


def test_jsi_cross_cell_has_no_peak():
    st = _flat_state()
    ch = ChannelConfig(0.2, 1000.0, 30.0)
    jsi = measure_jsi(st, SourceConfig(4.6e7, 0.02, seed=5), (ch, ch), (2, 3))
    assert jsi.car[0, 1] < 2
    assert jsi.car[0, 0] > 10


def test_jsi_rejects_unpopulated():
    with pytest.raises(ValueError):
        measure_jsi(_flat_state(), SourceConfig(1e6, 0.01), (ChannelConfig(),) * 2, (2, 9))


def test_gate_wide_is_identity():
    h = Histogram(100, 25000, np.arange(500.0))
    out = compensate_gate(h, Gate(1e9, 1e9))
    assert np.allclose(out.counts, h.counts, rtol=3e-5)
    assert out.valid.all()


def test_gate_half_acceptance_doubles():
    gate = Gate(100_000, 10_000)
    counts = np.zeros(500)
    j = np.searchsorted(Histogram(100, 25000, counts).centers_ps, 5050.0)
    counts[j] = 40
    h = Histogram(100, 25000, counts)
    assert gate_acceptance(np.array([h.centers_ps[j]]), gate)[0] == pytest.approx(0.495)
    assert compensate_gate(h, gate).counts[j] == pytest.approx(40 / 0.495)


def test_gate_masks_low_acceptance():
    gate = Gate(100_000, 10_000)
    h = Histogram(100, 25000, np.ones(500))
    out = compensate_gate(h, gate)
    acc = gate_acceptance(h.centers_ps, gate)
    assert np.array_equal(out.valid, acc >= MIN_ACCEPTANCE)
    assert np.all(out.counts[~out.valid] == 1)
    assert "valid" in out.to_csv().splitlines()[0]


def test_gate_all_zero_errors():
    # a 1 fs gate never overlaps itself at any bin centre
    with pytest.raises(ValueError):
        compensate_gate(Histogram(100, 1000, np.ones(20)), Gate(1e6, 1e-3))


def test_gated_four_peaks_compensated():
    st = BiphotonState(RingParams())
    sb = (2, 3, 4, 5)
    d = DispersionElement(2.0)
    src = SourceConfig(2e7, 0.01, seed=31)
    gate = Gate(60_000, 45_000)
    plain = ChannelConfig(1.0)
    gated = ChannelConfig(1.0, gate=gate)
    s0, i0 = simulate(st, src, Arm(plain, sb, d), Arm(plain, sb))
    s1, i1 = simulate(st, src, Arm(gated, sb, d), Arm(gated, sb))
    h0 = cross_correlate(s0, i0, 100, 40000)
    h1 = compensate_gate(cross_correlate(s1, i1, 100, 40000), gate)
    from bfcsim.dispersion import pair_offsets, peak_areas
    centers = pair_offsets(st, d, DispersionElement(0.0))[0][:4]
    a0 = peak_areas(h0, centers, 3000)
    a1 = peak_areas(h1, centers, 3000)
    # gating removes counts overall; the compensated shape matches the ungated run
    assert np.allclose(a1 / a1.sum(), a0 / a0.sum(), rtol=0.10)


def test_histogram_csv_roundtrip():
    h = Histogram(100, 2000, np.arange(40), 3, 4)
    back = Histogram.from_csv(h.to_csv())
    assert back.bin_width_ps == 100 and back.range_ps == 2000
    assert np.array_equal(back.counts, h.counts)
    assert h.to_csv().splitlines()[0] == "delay_ps,counts"

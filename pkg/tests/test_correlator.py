import math

from hypothesis import given, settings, strategies as st
import numpy as np
import pytest
from scipy import optimize

from lrpcfs.correlator import (
    BRUTE_FORCE_LIMIT,
    CascadeConfig,
    MicrotimeBinning,
    _cumulative_counts,
    _pair_walk,
    bin_by_microtime,
    brute_force_pair_histogram,
    correlate_cell,
    correlate_on_edges,
    intensity_autocorrelate,
    multitau_cross_correlate,
    multitau_edges,
)
from lrpcfs.emitter import EmitterModel, EmitterState, simulate_stream
from lrpcfs.errors import DataError

from oracles import telegraph_g2

DOUBLET_A_FRACTION_0_100 = 0.869153323339337


def random_stream(rng, n, span):
    return np.sort(rng.choice(span, size=n, replace=False)).astype(np.int64)


class TestBinning:
    def test_keep_and_drop(self):
        idx, dropped = bin_by_microtime(np.array([50.0, 150.0]), MicrotimeBinning(((0.0, 100.0),)))
        assert idx[0].tolist() == [0] and dropped == 1

    def test_open_bin_is_identity(self, rng):
        t = rng.exponential(500.0, 1000)
        idx, dropped = bin_by_microtime(t, MicrotimeBinning(((0.0, np.inf),)))
        assert idx[0].tolist() == list(range(1000)) and dropped == 0

    def test_order_preserved_and_disjoint(self, rng):
        t = rng.exponential(500.0, 5000)
        b = MicrotimeBinning.contiguous([0, 100, 300, 700, 2000, 7000])
        idx, dropped = bin_by_microtime(t, b)
        allidx = np.concatenate(idx)
        assert np.unique(allidx).size == allidx.size
        assert all(np.all(np.diff(i) > 0) for i in idx)
        assert allidx.size + dropped == t.size

    def test_doublet_a_fraction(self, rng):
        a = EmitterState("A", 100.0, 30.0, 3000.0)
        b = EmitterState("B", 1000.0, 60.0, 3000.1)
        m = EmitterModel((a, b), mean_count_rate=5e6)
        ph = simulate_stream(m, 0.5, rng)
        (ix,), _ = bin_by_microtime(ph["microtime_ps"], MicrotimeBinning(((0.0, 100.0),)))
        n = ix.size
        frac = np.mean(ph["state"][ix] == 0)
        p = DOUBLET_A_FRACTION_0_100
        assert abs(frac - p) < 3 * math.sqrt(p * (1 - p) / n)

    @pytest.mark.parametrize("iv", [((0.0, 0.0),), ((0.0, 100.0), (50.0, 200.0)), ()])
    def test_invalid_windows(self, iv):
        with pytest.raises(ValueError):
            MicrotimeBinning(iv)


class TestLagGrid:
    def test_cascade_structure(self):
        e = multitau_edges(CascadeConfig(4, 100))
        w = np.diff(e)
        assert e[0] == 1
        assert w.tolist()[:12] == [1] * 4 + [2] * 4 + [4] * 4

    def test_truncated_with_warning(self):
        with pytest.warns(UserWarning, match="truncated"):
            e = multitau_edges(CascadeConfig(8, 10**6), n_pulses=1000)
        assert e[-1] <= 999


class TestPairCounting:
    def test_single_pair(self):
        edges = multitau_edges(CascadeConfig(8, 4096))
        c = brute_force_pair_histogram([100], [100 + 37], edges, 10**4)
        j = np.searchsorted(edges, 37, side="right") - 1
        assert c.pairs[j] == 1 and c.pairs.sum() == 1

    def test_empty_stream_rejected(self):
        with pytest.raises(DataError, match="insufficient photons"):
            brute_force_pair_histogram([], [1, 2], [1, 2, 3], 10)
        with pytest.raises(DataError, match="insufficient photons"):
            multitau_cross_correlate([1, 2], [], CascadeConfig(), 100)

    def test_brute_force_size_guard(self):
        big = np.arange(BRUTE_FORCE_LIMIT + 1)
        with pytest.raises(ValueError, match="limited"):
            brute_force_pair_histogram(big, big, [1, 2], big.size)

    def test_shift_peak(self, rng):
        a = random_stream(rng, 3000, 10**6)
        b = a + 500
        c = multitau_cross_correlate(a, b, CascadeConfig(16, 4096), 10**6 + 500)
        j = int(np.argmax(c.g2))
        assert c.lag_edges[j] <= 500 < c.lag_edges[j + 1]

    def test_independent_streams_flat(self, rng):
        n = 10**6
        a = np.flatnonzero(rng.random(n) < 0.02)
        b = np.flatnonzero(rng.random(n) < 0.02)
        c = multitau_cross_correlate(a, b, CascadeConfig(16, 10**4), n)
        z = (c.pairs - c.expected) / np.sqrt(c.expected)
        assert np.all(np.abs(z) < 5)
        assert abs(z.mean()) < 5 / math.sqrt(z.size)

    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 3000), span=st.integers(3000, 10**6))
    @settings(max_examples=40, deadline=None)
    def test_both_kernels_match_brute_force(self, seed, n, span):
        rng = np.random.default_rng(seed)
        a = random_stream(rng, n, span)
        b = random_stream(rng, max(n // 2, 1), span)
        edges = multitau_edges(CascadeConfig(8, max(span // 3, 2)))
        ref = brute_force_pair_histogram(a, b, edges, span).pairs
        assert np.array_equal(_pair_walk(a, b, edges), ref)
        assert np.array_equal(np.diff(_cumulative_counts(a, b, edges)), ref)

    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 4000), span=st.integers(4000, 10**7))
    @settings(max_examples=40, deadline=None)
    def test_swap_symmetry(self, seed, n, span):
        # pairs with b a lag L after a == pairs with a a lag L after b in reversed time
        rng = np.random.default_rng(seed)
        a = random_stream(rng, n, span)
        b = random_stream(rng, n, span)
        edges = multitau_edges(CascadeConfig(8, span // 2))
        fwd = correlate_on_edges(a, b, edges, span).pairs
        ra, rb = np.sort(span - 1 - a), np.sort(span - 1 - b)
        rev = correlate_on_edges(rb, ra, edges, span).pairs
        assert np.array_equal(fwd, rev)

    def test_autocorrelation_matches_brute_force(self, rng):
        a = random_stream(rng, 4000, 10**6)
        b = random_stream(rng, 3000, 10**6)
        edges = multitau_edges(CascadeConfig(16, 10**5))
        s = np.sort(np.concatenate([a, b]))
        auto = intensity_autocorrelate(a, b, CascadeConfig(16, 10**5), 10**6)
        ref = brute_force_pair_histogram(s, s, edges, 10**6)
        assert np.array_equal(auto.pairs, ref.pairs)
        np.testing.assert_array_equal(auto.g2, ref.g2)

    def test_cell_sums_both_orders(self, rng):
        a = random_stream(rng, 2000, 10**6)
        b = random_stream(rng, 2000, 10**6)
        edges = multitau_edges(CascadeConfig(8, 10**4))
        cell = correlate_cell(a, b, edges, 10**6, 10.0)
        ref = brute_force_pair_histogram(a, b, edges, 10**6).pairs + brute_force_pair_histogram(b, a, edges, 10**6).pairs
        assert np.array_equal(cell.cross.pairs, ref)
        assert cell.n_photons == 4000


def telegraph_stream(rng, n_pulses, k_on, k_off, p):
    """Photons from an emitter switching on/off with per-pulse rates k_on, k_off."""
    m = int(2.5 * n_pulses * (k_on * k_off) / (k_on + k_off)) + 100
    on = rng.geometric(k_off, m)
    off = rng.geometric(k_on, m)
    bounds = np.cumsum(np.column_stack([on, off]).ravel())
    assert bounds[-1] > n_pulses
    state = np.searchsorted(bounds, np.arange(n_pulses), side="right") % 2 == 0
    return np.flatnonzero(state & (rng.random(n_pulses) < p))


def test_blinking_autocorrelation_matches_telegraph(rng):
    # ~4e4 on/off cycles keep the record's own switching noise below the shot noise
    k_on, k_off, n = 4e-3, 2e-3, 10**7
    t = telegraph_stream(rng, n, k_on, k_off, 0.05)
    half = t.size // 2
    c = intensity_autocorrelate(t[:half], t[half:], CascadeConfig(16, 2000), n)
    tau = c.tau_s * 1e6  # f_rep 1 MHz default: seconds * 1e6 = pulses
    sel = c.expected > 0
    g2 = c.g2[sel]
    # shot noise plus the record's own switching noise, ~ A sqrt(4 tau_s / T)
    amp0, tau_s = k_off / k_on, 1 / (k_on + k_off)
    sig = np.hypot(g2 / np.sqrt(c.pairs[sel]), amp0 * math.sqrt(4 * tau_s / n))
    assert g2[0] > 1.3
    oracle = telegraph_g2(tau[sel], k_on, k_off)
    assert np.max(np.abs(g2 - oracle) / sig) < 5
    (amp, ts), _ = optimize.curve_fit(lambda x, A, s: 1 + A * np.exp(-x / s), tau[sel], g2, p0=[0.5, 1e2], sigma=sig)
    assert ts == pytest.approx(1 / (k_on + k_off), rel=0.1)
    assert amp == pytest.approx(k_off / k_on, rel=0.1)

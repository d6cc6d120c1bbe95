import math

from hypothesis import given, settings, strategies as st
import numpy as np
import pytest
from scipy import integrate

from lrpcfs.emitter import coupled_emission_densities
from lrpcfs.errors import DataError, FitError
from lrpcfs.fitting import (
    CoupledDoublet,
    SliceData,
    StaticDoublet,
    UncoupledDoublet,
    _decay_counts,
    fit_lifetime_multiexp,
    global_fit_coupled,
    global_fit_static,
    global_fit_uncoupled,
    predict_interferogram,
    predict_spectral_correlation,
    slice_chi2,
)
from lrpcfs.interferometer import quadratic_positions
from lrpcfs.lineshapes import gaussian, lorentzian, lorentzian_ft
from lrpcfs.pcfs import Interferogram, spectral_correlation

INTERVALS = [(0.0, 50.0), (50.0, 150.0), (150.0, 400.0), (400.0, 1000.0), (1000.0, 4000.0)]
DELTA = np.array(quadratic_positions(40, 2.5e7, 1e3))
G_A, G_B = 43.88, 21.94


def synthetic_slices(curves, err=2e-3, rng=None, intervals=INTERVALS):
    G = [c + (0 if rng is None else err * rng.standard_normal(c.size)) for c in curves]
    return SliceData([DELTA] * len(G), G, [np.full(DELTA.size, err)] * len(G), list(intervals))


def model_slices(model, weights, **kw):
    return synthetic_slices([model.interferogram(DELTA, a) for a in weights], **kw)


def histogram(rng, n, fracs, taus, bin_ps=8.0, max_ps=12000.0):
    edges = np.arange(0.0, max_ps + bin_ps, bin_ps)
    mu = _decay_counts(edges, 1.0, fracs, taus)
    return rng.multinomial(n, mu / mu.sum()), edges


class TestLifetime:
    def test_pure_exponential(self, rng):
        counts, edges = histogram(rng, 10**5, [1.0], [1000.0])
        fit = fit_lifetime_multiexp(counts, edges, 1)
        assert fit.lifetimes_ps[0] == pytest.approx(1000.0, rel=0.01)

    def test_doublet(self, rng):
        counts, edges = histogram(rng, 3 * 10**6, [0.5, 0.5], [100.0, 1000.0])
        fit = fit_lifetime_multiexp(counts, edges, 2)
        assert fit.lifetimes_ps[0] == pytest.approx(100.0, rel=0.02)
        assert fit.lifetimes_ps[1] == pytest.approx(1000.0, rel=0.02)
        assert np.all(np.abs(fit.amplitudes - 0.5) < 0.02)
        assert fit.amplitudes.sum() == pytest.approx(1.0)

    def test_coupled_equal_t1_is_monoexponential(self, rng):
        # total emission of the A -> B cascade with equal T1 is g exp(-g t) for any k
        t = np.linspace(0.0, 5000.0, 501)
        a, b = coupled_emission_densities(t, 1 / 80, 500.0, 500.0)
        np.testing.assert_allclose(a + b, np.exp(-t / 500.0) / 500.0, rtol=1e-12)
        edges = np.arange(0.0, 8000.0, 8.0)
        lo, hi = edges[:-1], edges[1:]
        mu = np.exp(-lo / 500.0) - np.exp(-hi / 500.0)
        counts = rng.multinomial(10**6, mu / mu.sum())
        one = fit_lifetime_multiexp(counts, edges, 1)
        assert one.lifetimes_ps[0] == pytest.approx(500.0, rel=0.01)
        two = fit_lifetime_multiexp(counts, edges, 2)
        assert np.min(two.amplitudes) < 0.02

    def test_insufficient_counts(self):
        with pytest.raises(DataError, match="insufficient photons"):
            fit_lifetime_multiexp(np.full(100, 50), np.arange(101.0), 1)

    def test_bad_n(self, rng):
        counts, edges = histogram(rng, 10**5, [1.0], [1000.0])
        with pytest.raises(ValueError):
            fit_lifetime_multiexp(counts, edges, 3)

    @given(fa=st.floats(0.05, 0.95), lo=st.floats(0, 3000), width=st.floats(1, 5000))
    @settings(max_examples=100)
    def test_bin_weights_normalised(self, fa, lo, width):
        counts, edges = histogram(np.random.default_rng(0), 10**5, [fa, 1 - fa], [100.0, 1000.0])
        fit = fit_lifetime_multiexp(counts, edges, 2)
        w = fit.bin_weights([(lo, lo + width)])
        assert np.all(w >= 0)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        a, b = w[0]
        assert a * a + 2 * a * b + b * b == pytest.approx(1.0, abs=1e-12)


class TestPrediction:
    @given(
        ga=st.floats(1.0, 200.0),
        gb=st.floats(1.0, 200.0),
        om=st.floats(0.0, 300.0),
        s=st.floats(1.0, 200.0),
        a=st.floats(0.0, 1.0),
    )
    @settings(max_examples=60, deadline=None)
    def test_symmetric_unit_area(self, ga, gb, om, s, a):
        z = np.linspace(-500, 500, 41)
        for m in (StaticDoublet(ga, gb, om), UncoupledDoublet(ga, gb, s)):
            p = predict_spectral_correlation(m, z, [a])[:, 0]
            np.testing.assert_allclose(p, p[::-1], rtol=1e-12)
            area = sum(integrate.quad(lambda x: m.spectrum(x, a), lo, hi, limit=200)[0] for lo, hi in ((-np.inf, 0), (0, np.inf)))
            assert area == pytest.approx(1.0, rel=1e-6)
            assert predict_interferogram(m, [0.0], [a])[0, 0] == pytest.approx(1.0, rel=1e-12)

    def test_single_state_limit(self):
        z = np.linspace(-300, 300, 101)
        p = predict_spectral_correlation(StaticDoublet(G_A, G_B, 100.0), z, [1.0])[:, 0]
        np.testing.assert_allclose(p, lorentzian(z, 2 * G_A), rtol=1e-12)

    def test_zero_splitting_single_peak(self):
        z = np.linspace(-300, 300, 601)
        p = StaticDoublet(G_A, G_B, 0.0).spectrum(z, 0.5)
        assert np.argmax(p) == 300
        assert np.all(np.diff(p[:301]) > 0) and np.all(np.diff(p[300:]) < 0)
        q = StaticDoublet(G_A, G_B, 1e-6).spectrum(z, 0.5)
        np.testing.assert_allclose(q, p, rtol=1e-9)

    def test_triplet(self):
        z = np.linspace(-300, 300, 601)
        p = StaticDoublet(10.0, 10.0, 150.0).spectrum(z, 0.5)
        peaks = z[1:-1][(p[1:-1] > p[:-2]) & (p[1:-1] > p[2:])]
        np.testing.assert_allclose(peaks, [-150.0, 0.0, 150.0], atol=1.0)

    def test_cross_width_of_equal_gaussians(self):
        # the correlation of two independent Gaussian offsets of width s is Gaussian of width s sqrt 2
        s = 60.0
        x = np.linspace(-1000, 1000, 4001)
        dx = x[1] - x[0]
        g = gaussian(x, s)
        c = np.correlate(g, g, mode="same") * dx
        np.testing.assert_allclose(c, gaussian(x, s * math.sqrt(2)), atol=1e-8)

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            StaticDoublet(0.0, 1.0, 1.0)
        with pytest.raises(ValueError):
            StaticDoublet(1.0, 1.0, -1.0)
        with pytest.raises(ValueError):
            UncoupledDoublet(1.0, 1.0, 0.0)
        with pytest.raises(ValueError):
            CoupledDoublet(1.0, 1.0, 1.0, 0.0, 500.0, 500.0)

    def test_coupled_weights_decrease(self):
        a = CoupledDoublet(G_A, G_B, 100.0, 1 / 80, 500.0, 500.0).weights(INTERVALS)
        assert np.all(np.diff(a) < 0) and np.all((a > 0) & (a < 1))


UNCOUPLED_WEIGHTS = np.array([0.95, 0.85, 0.6, 0.3, 0.05])


class TestGlobalFits:
    def test_static_exact_recovery(self):
        truth = StaticDoublet(G_A, G_B, 120.0)
        res = global_fit_static(model_slices(truth, UNCOUPLED_WEIGHTS), UNCOUPLED_WEIGHTS)
        np.testing.assert_allclose(res.values, [G_A, G_B, 120.0], rtol=1e-6)
        assert res.chi2 < 1e-10

    def test_uncoupled_exact_recovery(self):
        truth = UncoupledDoublet(G_A, G_B, 72.1)
        res = global_fit_uncoupled(model_slices(truth, UNCOUPLED_WEIGHTS), UNCOUPLED_WEIGHTS)
        np.testing.assert_allclose(res.values, [G_A, G_B, 72.1], rtol=1e-6)
        assert res.chi2 < 1e-10

    def test_coupled_exact_recovery(self):
        truth = CoupledDoublet(G_A, G_B, 150.0, 1 / 80, 500.0, 500.0)
        res = global_fit_coupled(model_slices(truth, truth.weights(INTERVALS)), 500.0, 500.0)
        np.testing.assert_allclose(res.values, [G_A, G_B, 150.0, 1 / 80], rtol=1e-6)
        assert res.chi2 < 1e-10
        assert np.all(np.isfinite(res.stderr))

    def test_noisy_uncoupled_within_errors(self, rng):
        truth = UncoupledDoublet(G_A, G_B, 72.1)
        res = global_fit_uncoupled(model_slices(truth, UNCOUPLED_WEIGHTS, rng=rng), UNCOUPLED_WEIGHTS)
        for name, v in zip(res.names, (G_A, G_B, 72.1)):
            assert abs(res[name] - v) < 4 * res.err(name)
        assert 0.7 < res.chi2_dof < 1.4

    def test_swapped_weights_relabel_states(self, rng):
        # with free widths, a <-> b is the relabelling Gamma_A <-> Gamma_B: same chi2
        truth = UncoupledDoublet(G_A, G_B, 72.1)
        data = model_slices(truth, UNCOUPLED_WEIGHTS, rng=rng)
        right = global_fit_uncoupled(data, UNCOUPLED_WEIGHTS)
        swapped = global_fit_uncoupled(data, 1 - UNCOUPLED_WEIGHTS)
        assert swapped.chi2 == pytest.approx(right.chi2, rel=1e-8)
        assert swapped["gamma_a"] == pytest.approx(right["gamma_b"], rel=1e-6)

    @pytest.mark.parametrize("seed", range(5))
    def test_mismatched_weights_fit_worse(self, seed):
        rng = np.random.default_rng(seed)
        truth = UncoupledDoublet(G_A, G_B, 72.1)
        data = model_slices(truth, UNCOUPLED_WEIGHTS, rng=rng)
        right = global_fit_uncoupled(data, UNCOUPLED_WEIGHTS)
        wrong = global_fit_uncoupled(data, np.roll(UNCOUPLED_WEIGHTS, 2))
        # likelihood ratio far beyond any chi2_3 fluctuation
        assert wrong.chi2 - right.chi2 > 50

    def test_fixed_k_profile_monotonic(self, rng):
        truth = CoupledDoublet(G_A, G_B, 150.0, 1 / 80, 500.0, 500.0)
        data = model_slices(truth, truth.weights(INTERVALS), rng=rng)

        def chi2_at(k):
            w = CoupledDoublet(G_A, G_B, 150.0, k, 500.0, 500.0).weights(INTERVALS)
            return global_fit_static(data, w, starts=[np.array([G_A, G_B, 150.0])]).chi2

        up = [chi2_at(truth.k * f) for f in (1, 2, 5, 10)]
        down = [chi2_at(truth.k / f) for f in (1, 2, 5, 10)]
        assert np.all(np.diff(up) > 0) and np.all(np.diff(down) > 0)

    def test_non_informative_weights(self):
        data = model_slices(StaticDoublet(G_A, G_B, 100.0), [0.5] * 5)
        with pytest.raises(FitError, match="weights non-informative"):
            global_fit_static(data, [0.5] * 5)

    def test_too_few_bins(self):
        data = model_slices(StaticDoublet(G_A, G_B, 100.0), [0.9, 0.1], intervals=INTERVALS[:2])
        with pytest.raises(FitError):
            global_fit_static(data, [0.9, 0.1])
        with pytest.raises(FitError):
            global_fit_coupled(data, 500.0, 500.0)

    def test_lag_beyond_tau_c_flagged(self):
        truth = CoupledDoublet(G_A, G_B, 150.0, 1 / 80, 500.0, 500.0)
        data = model_slices(truth, truth.weights(INTERVALS))
        res = global_fit_coupled(data, 500.0, 500.0, tau_s=1e-3, tau_c_s=1e-4)
        assert any("correlation time" in f for f in res.flags)
        res = global_fit_coupled(data, 500.0, 500.0, tau_s=1e-6, tau_c_s=1e-4)
        assert not res.flags

    def test_excess_scatter_scales_errors(self, rng):
        truth = StaticDoublet(G_A, G_B, 120.0)
        clean = model_slices(truth, UNCOUPLED_WEIGHTS, rng=np.random.default_rng(1))
        noisy = synthetic_slices(
            [g + 3 * 2e-3 * rng.standard_normal(g.size) for g in clean.G], err=2e-3
        )
        res = global_fit_static(noisy, UNCOUPLED_WEIGHTS)
        assert res.chi2_dof > 4
        assert any("Birge" in f or "scaled" in f for f in res.flags)


def test_slice_chi2_matches_dof(rng):
    d = np.array(quadratic_positions(30, 1.5e7, 1e3))
    G0 = 0.5 * lorentzian_ft(d, 2 * G_A)
    sig = 0.01 * np.ones(d.size)
    stats = []
    for _ in range(40):
        G = (G0 + sig * rng.standard_normal(d.size))[:, None, None]
        ig = Interferogram(
            d, np.array([[1e-6, 2e-6]]), G, sig[:, None, None].copy(), np.ones(G.shape, bool),
            np.full(G.shape, 1e6), np.full(G.shape, 2e6), np.full((d.size, 1), 1e5),
        )
        spec = spectral_correlation(ig, n_zeta=257, zeta_max_ueV=600.0)
        stats.append(slice_chi2(spec, 0, 0, lambda x: 0.5 * lorentzian_ft(x, 2 * G_A)))
    chi2 = np.array([c for c, _ in stats])
    dof = stats[0][1]
    # the normalised p spans at most nd - 1 directions; the zeta grid may resolve fewer
    assert 10 <= dof <= d.size - 1
    assert abs(chi2.mean() - dof) < 4 * math.sqrt(2 * dof / chi2.size)

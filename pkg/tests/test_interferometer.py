import math

from hypothesis import given, settings, strategies as st
import numpy as np
import pytest
from scipy import integrate

from lrpcfs.emitter import PHOTON_DTYPE, EmittedPhoton
from lrpcfs.interferometer import (
    STRIPPED,
    StageProgram,
    exit_probability,
    quadratic_positions,
    route_photon,
    route_photons,
    route_photons_reference,
    stage_position,
    triangle,
)
from lrpcfs.units import C_NM_PER_PS, nm_to_radps

P0_AT_COHERENCE_LENGTH = 0.6839397205857212  # 1/2 (1 + e^-1)


def photons(n, omega, t2, pulse_step=1):
    ph = np.zeros(n, dtype=PHOTON_DTYPE)
    ph["pulse_index"] = np.arange(n) * pulse_step
    ph["omega"] = omega
    ph["t2_ps"] = t2
    ph["microtime_ps"] = 100.0
    return ph


class TestStagePosition:
    def test_zero_amplitude_constant(self):
        pr = StageProgram((1e3, 2e4), 0.0, 1.0)
        t = np.linspace(0, 30, 1001)
        assert np.all(stage_position(pr, 1, t) == 2e4)

    def test_quarter_period_peak(self):
        pr = StageProgram((5e3,), 300.0, 2.0)
        assert stage_position(pr, 0, 0.5) == pytest.approx(5300.0, abs=1e-9)
        assert stage_position(pr, 0, 1.5) == pytest.approx(4700.0, abs=1e-9)

    def test_dither_integrates_to_zero(self):
        A, T = 300.0, 2.0
        knots = [0, T / 4, 3 * T / 4, T]
        val = sum(integrate.quad(lambda t: A * triangle(t / T), a, b)[0] for a, b in zip(knots, knots[1:]))
        assert abs(val) < 1e-9 * A * T

    def test_out_of_range_stage(self):
        pr = StageProgram((1e3,), 300.0, 1.0)
        with pytest.raises(IndexError):
            stage_position(pr, 1, 0.0)

    def test_quadratic_grid(self):
        pos = quadratic_positions(5, 1e6, 1e3)
        assert pos[0] == 1e3 and pos[-1] == pytest.approx(1e6)
        assert np.all(np.diff(np.diff(pos)) > 0)

    def test_lag_validity_limit(self):
        pr = StageProgram((1e3,), 300.0, 30.0)
        # triangle covers 4A per period; 0.05 rad of phase at 600 nm
        assert pr.max_valid_lag_s(600.0) == pytest.approx(0.05 * 600 / (2 * math.pi * 40.0))


class TestExitProbability:
    def test_zero_delay(self):
        assert exit_probability(3000.0, 60.0, 0.0) == (1.0, 0.0)

    def test_decohered(self):
        p0, p1 = exit_probability(3000.0, 60.0, 50 * C_NM_PER_PS * 60.0)
        assert p0 == pytest.approx(0.5, abs=1e-20) and p1 == pytest.approx(0.5, abs=1e-20)

    def test_coherence_length(self):
        t2 = 60.0
        delta = C_NM_PER_PS * t2
        lam = delta / 30000  # whole number of wavelengths: cos = 1
        p0, _ = exit_probability(nm_to_radps(lam), t2, delta)
        assert p0 == pytest.approx(P0_AT_COHERENCE_LENGTH, rel=1e-9)

    def test_nonpositive_t2(self):
        with pytest.raises(ValueError):
            exit_probability(3000.0, 0.0, 1e3)

    @given(
        delta=st.floats(-1e8, 1e8),
        lam=st.floats(200.0, 2000.0),
        t2=st.floats(1e-3, 1e4),
    )
    @settings(max_examples=500)
    def test_complementary_and_bounded(self, delta, lam, t2):
        p0, p1 = exit_probability(nm_to_radps(lam), t2, delta)
        assert p0 + p1 == 1.0
        assert 0.0 <= p0 <= 1.0 and 0.0 <= p1 <= 1.0


class TestRouting:
    def _program(self, delta, amp=0.0, period=1.0):
        return StageProgram((delta,), amp, period, acquisition_s=period)

    def test_binomial_channel_fraction(self, rng):
        t2, delta, w = 60.0, 6e6, 3000.0
        ph = photons(10**6, w, t2)
        out = route_photons(ph, self._program(delta), 0, 10.0, rng)
        p0, _ = exit_probability(w, t2, delta)
        frac = np.mean(out["channel"] == 0)
        assert abs(frac - p0) < 3 * math.sqrt(p0 * (1 - p0) / ph.size)

    def test_all_channel_zero_at_p0_one(self, rng):
        out = route_photons(photons(1000, 3000.0, 60.0), self._program(0.0), 0, 10.0, rng)
        assert np.all(out["channel"] == 0)

    def test_deterministic(self):
        ph = photons(5000, 3000.0, 60.0)
        pr = self._program(4e6)
        x = route_photons(ph, pr, 0, 10.0, np.random.default_rng(1))
        y = route_photons(ph, pr, 0, 10.0, np.random.default_rng(1))
        assert x.tobytes() == y.tobytes()

    @given(seed=st.integers(0, 2**32 - 1), d0=st.floats(0.0, 3e7), amp=st.floats(0.0, 600.0),
           period=st.floats(1e-3, 10.0))
    @settings(max_examples=50, deadline=None)
    def test_fused_kernel_matches_reference(self, seed, d0, amp, period):
        rng = np.random.default_rng(seed)
        ph = photons(2000, 0.0, 0.0)
        ph["pulse_index"] = np.sort(rng.integers(0, 10**8, ph.size))
        ph["omega"] = nm_to_radps(rng.uniform(500.0, 700.0, ph.size))
        ph["t2_ps"] = rng.uniform(5.0, 200.0, ph.size)
        pr = StageProgram((d0,), amp, period, acquisition_s=period)
        x = route_photons(ph, pr, 0, 10.0, np.random.default_rng(seed))
        y = route_photons_reference(ph, pr, 0, 10.0, np.random.default_rng(seed))
        assert x.tobytes() == y.tobytes()

    def test_single_photon_router(self, rng):
        p = EmittedPhoton(0, 0.0, 50.0, 3000.0, "A", 60.0)
        assert route_photon(p, 0.0, rng) == 0
        p0, _ = exit_probability(3000.0, 60.0, 5e6)
        frac = np.mean([route_photon(p, 5e6, rng) == 0 for _ in range(20000)])
        assert abs(frac - p0) < 4 * math.sqrt(p0 * (1 - p0) / 20000)

    def test_debug_strip(self, rng):
        out = route_photons(photons(10, 3000.0, 60.0), self._program(0.0), 0, 10.0, rng, keep_debug=False)
        assert np.all(out["debug_state"] == STRIPPED)

    def test_dither_average_cancels_linear_term(self, rng):
        # a sweep of 4A = 2 lambda per period: p0 - 1/2 averages to zero over whole periods
        lam = 600.0
        w, t2, d0 = nm_to_radps(lam), 60.0, 3e6
        pr = StageProgram((d0,), lam / 2, 1.0, acquisition_s=1.0)
        t = (np.arange(200000) + 0.5) / 200000
        p0, _ = exit_probability(w, t2, stage_position(pr, 0, t))
        assert abs(np.mean(p0 - 0.5)) < 1e-6
        n = 10**6
        ph = photons(n, w, t2)
        ph["pulse_index"] = rng.integers(0, 10**7, n)
        out = route_photons(ph, pr, 0, 10.0, rng)
        assert abs(np.mean(out["channel"] == 0) - 0.5) < 3 * 0.5 / math.sqrt(n)

    def test_visibility_equals_envelope(self, rng):
        lam, t2, d0 = 600.0, 60.0, 0.7 * C_NM_PER_PS * 60.0
        w = nm_to_radps(lam)
        n = 10**6
        delta = d0 + rng.uniform(0, lam, n)
        p0, _ = exit_probability(w, t2, delta)
        ch0 = rng.random(n) < p0
        phase = w * delta / C_NM_PER_PS
        X = np.column_stack([np.ones(n), np.cos(phase), np.sin(phase)])
        coef, *_ = np.linalg.lstsq(X, ch0.astype(float), rcond=None)
        vis = 2 * math.hypot(coef[1], coef[2])
        g = math.exp(-d0 / (C_NM_PER_PS * t2))
        assert vis == pytest.approx(g, rel=0.02)

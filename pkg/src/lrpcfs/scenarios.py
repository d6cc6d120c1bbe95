"""Preset run configurations for the reference experiments.

Dither: amplitude of half a wavelength (one full fringe per half-sweep) and
one period per acquisition, which keeps the fringe phase drift small over
lags up to ~0.1 s.  Stage grids are quadratic up to ~3 coherence lengths of
the narrowest line.
"""

import copy

from .config import (
    AnalysisConfig,
    CorrelatorConfig,
    EmitterConfig,
    QuadraticGrid,
    RunConfig,
    StageConfig,
    StateConfig,
    validate,
)
from .units import coherence_length_nm

WAVELENGTH_NM = 600.0


def _stage(n, t2_max_ps, acquisition_s=30.0, reach=3.0):
    return StageConfig(
        quadratic=QuadraticGrid(n, reach * coherence_length_nm(t2_max_ps), 1e3),
        dither_amplitude_nm=WAVELENGTH_NM / 2,
        dither_period_s=acquisition_s,
        acquisition_s=acquisition_s,
    )


def static_line(seed=0, count_rate=1e4, acquisition_s=30.0, n_stages=16):
    """One homogeneous Lorentzian (two identical states, no diffusion)."""
    s = StateConfig("A", 1000.0, 60.0, WAVELENGTH_NM)
    cfg = RunConfig(
        seed=seed,
        emitter=EmitterConfig([s, copy.copy(s)], "static", f_rep_mhz=10.0, count_rate_cps=count_rate),
        stage=_stage(n_stages, 60.0, acquisition_s),
        correlator=CorrelatorConfig(16, 0.1, [[0.0, 1e5]]),
        analysis=AnalysisConfig(
            tau_min_s=1e-6, tau_max_s=0.1, slice_tau_s=1e-3, slice_factor=100.0, fit_model="lorentzian",
            lifetime_components=1, lifetime_max_ps=10000.0,
        ),
    )
    return validate(cfg)


def static_doublet(seed=0, count_rate=1e4, acquisition_s=30.0, n_stages=16, splitting_ueV=100.0):
    """Lifetime-distinct static doublet: T1 = 100/1000 ps, T2 = 30/60 ps."""
    a = StateConfig("A", 100.0, 30.0, WAVELENGTH_NM)
    b = StateConfig("B", 1000.0, 60.0, WAVELENGTH_NM, detuning_ueV=splitting_ueV)
    cfg = RunConfig(
        seed=seed,
        emitter=EmitterConfig([a, b], "static", f_rep_mhz=10.0, count_rate_cps=count_rate),
        stage=_stage(n_stages, 60.0, acquisition_s),
        correlator=CorrelatorConfig(16, 0.1, [[0.0, 100.0], [100.0, 300.0], [300.0, 700.0], [700.0, 2000.0], [2000.0, 7000.0]]),
        analysis=AnalysisConfig(
            tau_min_s=1e-6, tau_max_s=0.1, slice_tau_s=1e-3, slice_factor=100.0, fit_model="static",
        ),
    )
    return validate(cfg)


def single_gjm(seed=0, count_rate=2e4, acquisition_s=30.0, n_stages=24, sigma_ueV=50.0, jump_prob=1e-4):
    """One diffusing state (the second carries no population)."""
    a = StateConfig("A", 1000.0, 60.0, WAVELENGTH_NM, sigma_ueV=sigma_ueV, jump_prob=jump_prob)
    b = StateConfig("B", 1000.0, 60.0, WAVELENGTH_NM)
    cfg = RunConfig(
        seed=seed,
        emitter=EmitterConfig([a, b], "uncoupled", initial_population=[1.0, 0.0], f_rep_mhz=10.0, count_rate_cps=count_rate),
        stage=_stage(n_stages, 60.0, acquisition_s),
        correlator=CorrelatorConfig(16, 0.1, [[0.0, 1e5]]),
        analysis=AnalysisConfig(
            tau_min_s=1e-6, tau_max_s=0.1, slice_tau_s=3.16e-6, slice_factor=3.16, fit_model="none",
            lifetime_components=1, lifetime_max_ps=10000.0,
        ),
    )
    return validate(cfg)


DOUBLET_BINS = [[0.0, 100.0], [100.0, 300.0], [300.0, 700.0], [700.0, 2000.0], [2000.0, 7000.0]]


def uncoupled_doublet(seed=0, count_rate=2e4, acquisition_s=30.0, n_stages=24):
    """Independently diffusing lifetime-distinct doublet; A jumps five times faster than B."""
    a = StateConfig("A", 100.0, 30.0, WAVELENGTH_NM, sigma_ueV=60.0, jump_prob=5e-5)
    b = StateConfig("B", 1000.0, 60.0, WAVELENGTH_NM, sigma_ueV=40.0, jump_prob=1e-5)
    cfg = RunConfig(
        seed=seed,
        emitter=EmitterConfig([a, b], "uncoupled", f_rep_mhz=10.0, count_rate_cps=count_rate),
        stage=_stage(n_stages, 60.0, acquisition_s),
        correlator=CorrelatorConfig(16, 0.1, DOUBLET_BINS),
        analysis=AnalysisConfig(
            tau_min_s=1e-6, tau_max_s=0.1, slice_tau_s=60e-6, slice_factor=2.0, fit_model="uncoupled",
        ),
    )
    return validate(cfg)


COUPLED_BINS = [[0.0, 40.0], [40.0, 100.0], [100.0, 200.0], [200.0, 400.0], [400.0, 7000.0]]


def coupled_doublet(seed=0, count_rate=5e5, acquisition_s=4.0, n_stages=24, splitting_ueV=150.0):
    """A relaxes into B at k = 1/80 ps^-1; equal T1, a shared (correlated) diffusion bath.

    Only short lags matter here, so the run is short and bright: the number
    of photon pairs inside the 8 us slice grows with the count rate.
    """
    a = StateConfig("A", 1000.0, 30.0, WAVELENGTH_NM, sigma_ueV=50.0, jump_prob=5e-6)
    b = StateConfig("B", 1000.0, 50.0, WAVELENGTH_NM, detuning_ueV=-splitting_ueV, sigma_ueV=50.0, jump_prob=5e-6)
    cfg = RunConfig(
        seed=seed,
        emitter=EmitterConfig(
            [a, b], "coupled", k_relax_per_ps=1 / 80, diffusion_mode="correlated", initial_population=[1.0, 0.0],
            f_rep_mhz=20.0, count_rate_cps=count_rate,
        ),
        stage=StageConfig(
            positions_nm=[1e3 + i * 1e6 for i in range(n_stages)],
            dither_amplitude_nm=WAVELENGTH_NM / 2,
            dither_period_s=1e-3,
            acquisition_s=acquisition_s,
        ),
        correlator=CorrelatorConfig(16, 2e-5, COUPLED_BINS),
        analysis=AnalysisConfig(
            tau_min_s=1e-6, tau_max_s=1.6e-5, slice_tau_s=8e-6, slice_factor=2.0, zeta_max_ueV=600.0,
            fit_model="coupled", lifetime_components=1, lifetime_max_ps=12000.0,
        ),
    )
    return validate(cfg)

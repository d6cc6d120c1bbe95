"""simulate -> correlate -> analyze -> fit, driven by a RunConfig."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import math
import warnings

import numpy as np

from .config import QuadraticGrid
from .correlator import CascadeConfig, MicrotimeBinning, correlate_records
from .emitter import EmitterModel, EmitterState, simulate_stream
from .errors import ConfigError, DataError
from .fitting import (
    fit_lifetime_multiexp,
    global_fit_coupled,
    global_fit_static,
    global_fit_uncoupled,
    slice_chi2,
    slice_data,
)
from .interferometer import StageProgram, quadratic_positions, route_photons
from .io import PhotonFile
from .lineshapes import lorentzian_ft
from .pcfs import (
    compute_interferogram,
    extract_fluctuation_correlation,
    fwhm_map,
    log_windows,
    slice_window,
    spectral_correlation,
)
from .units import nm_to_radps, radps_to_nm, radps_to_ueV, t2_to_fwhm_ueV, ueV_to_radps

# ---------------------------------------------------------------- builders


def build_model(cfg):
    e = cfg.emitter
    states = []
    for i, s in enumerate(e.states):
        try:
            states.append(
                EmitterState(
                    s.label,
                    s.t1_ps,
                    s.t2_ps,
                    nm_to_radps(s.wavelength_nm) + ueV_to_radps(s.detuning_ueV),
                    ueV_to_radps(s.sigma_ueV),
                    s.jump_prob,
                )
            )
        except ConfigError as exc:
            raise ConfigError(f"emitter.states[{i}]: {exc}") from None
    try:
        return EmitterModel(
            tuple(states),
            e.coupling,
            e.k_relax_per_ps,
            e.diffusion_mode,
            tuple(e.initial_population),
            e.f_rep_mhz,
            e.count_rate_cps,
        )
    except ConfigError as exc:
        raise ConfigError(f"emitter: {exc}") from None


def build_positions(cfg):
    st = cfg.stage
    if st.positions_nm is not None and st.quadratic is not None:
        raise ConfigError("stage: give only one of positions_nm or quadratic")
    if st.positions_nm is not None:
        pos = tuple(float(p) for p in st.positions_nm)
    else:
        q = st.quadratic or QuadraticGrid()
        if q.n < 2 or not q.max_nm > q.min_nm >= 0:
            raise ConfigError("stage.quadratic: need n >= 2 and max_nm > min_nm >= 0")
        pos = quadratic_positions(q.n, q.max_nm, q.min_nm)
    if any(b <= a for a, b in zip(pos, pos[1:])):
        raise ConfigError("stage.positions_nm: must be strictly increasing")
    return pos


def build_program(cfg):
    st = cfg.stage
    positions = build_positions(cfg)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return StageProgram(
                positions, st.dither_amplitude_nm, st.dither_period_s, st.dither_waveform, st.acquisition_s
            )
    except ConfigError as exc:
        raise ConfigError(f"stage: {exc}") from None


def build_binning(cfg):
    try:
        return MicrotimeBinning(tuple(tuple(iv) for iv in cfg.correlator.microtime_bins_ps))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"correlator.microtime_bins_ps: {exc}") from None


def build_cascade(cfg):
    c = cfg.correlator
    try:
        return CascadeConfig(c.points_per_cascade, int(round(c.max_lag_s * cfg.emitter.f_rep_mhz * 1e6)))
    except ValueError as exc:
        raise ConfigError(f"correlator: {exc}") from None


def stage_rng(seed, stage_index):
    """Independent generator per stage, derived from (seed, stage_index)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stage_index,)))


def mean_wavelength_nm(model):
    return radps_to_nm(np.mean([s.omega0 for s in model.states]))


# ---------------------------------------------------------------- simulate


def simulate_stage(model, program, stage_index, seed, keep_debug=True):
    rng = stage_rng(seed, stage_index)
    photons = simulate_stream(model, program.acquisition_s, rng)
    return route_photons(photons, program, stage_index, model.f_rep_mhz, rng, keep_debug)


def simulate(cfg, threads=1, keep_debug=True):
    model = build_model(cfg)
    program = build_program(cfg)

    def run(i):
        return simulate_stage(model, program, i, cfg.seed, keep_debug)

    idx = range(program.n_stages)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run, idx))
    else:
        parts = [run(i) for i in idx]
    records = np.concatenate(parts) if parts else np.zeros(0)
    return PhotonFile(
        model.f_rep_mhz,
        cfg.seed,
        np.array(program.positions_nm),
        program.dither_amplitude_nm,
        program.dither_period_s,
        program.acquisition_s,
        records,
    )


# ---------------------------------------------------------------- correlate


def lifetime_histogram(records, bin_ps, max_ps):
    edges = np.arange(0.0, max_ps + 0.5 * bin_ps, bin_ps)
    counts, _ = np.histogram(records["microtime_ps"], bins=edges)
    return counts, edges


def correlate(pf, cfg, threads=1):
    if pf.records.size < 2:
        raise DataError("insufficient photons")
    return correlate_records(
        pf.records,
        build_binning(cfg),
        build_cascade(cfg),
        pf.n_pulses,
        pf.f_rep_mhz,
        len(pf.positions_nm),
        threads,
    )


# ---------------------------------------------------------------- analyze


@dataclass
class Analysis:
    interferogram: object
    spectral: object
    fwhm: object
    slice_interferogram: object
    slice_spectral: object
    fluctuation: dict  # bin -> FluctuationCurve or error message


def check_lag_validity(cfg, model, program):
    """Largest analysed lag must keep the dither phase drift small."""
    lag = max(cfg.analysis.tau_max_s, cfg.analysis.slice_tau_s * cfg.analysis.slice_factor)
    limit = program.max_valid_lag_s(mean_wavelength_nm(model))
    if lag > limit:
        warnings.warn(
            f"analysed lags up to {lag:.3g} s exceed the dither validity limit {limit:.3g} s",
            stacklevel=2,
        )


def analyze(corr, cfg, positions_nm=None):
    a = cfg.analysis
    positions = np.asarray(build_positions(cfg) if positions_nm is None else positions_nm, dtype=float)
    windows = log_windows(a.tau_min_s, a.tau_max_s, a.windows_per_decade)
    ig = compute_interferogram(corr, positions, windows, a.error_model)
    spec = spectral_correlation(ig, n_zeta=a.n_zeta, zeta_max_ueV=a.zeta_max_ueV)
    sig = compute_interferogram(corr, positions, slice_window(a.slice_tau_s, a.slice_factor), a.error_model)
    sspec = spectral_correlation(sig, zeta_ueV=spec.zeta_ueV)
    fluct = {}
    for b in range(ig.G.shape[2]):
        try:
            fluct[b] = extract_fluctuation_correlation(ig, b)
        except DataError as exc:
            fluct[b] = str(exc)
    return Analysis(ig, spec, fwhm_map(spec), sig, sspec, fluct)


# ---------------------------------------------------------------- fit


def fit(slice_spec, cfg, lifetime_counts, lifetime_edges, tau_c_s=None):
    """Lifetime fit plus the configured global fit on the slice window."""
    a = cfg.analysis
    intervals = build_binning(cfg).intervals
    n_comp = 1 if a.fit_model == "coupled" else a.lifetime_components
    life = fit_lifetime_multiexp(lifetime_counts, lifetime_edges, n_comp)
    nb = slice_spec.p.shape[2]
    bins = list(range(nb))
    if a.fit_model in ("none", "lorentzian"):
        return life, None
    data = slice_data(slice_spec, 0, bins, intervals)
    if a.fit_model == "static":
        return life, global_fit_static(data, life.bin_weights(intervals)[:, 0])
    if a.fit_model == "uncoupled":
        return life, global_fit_uncoupled(data, life.bin_weights(intervals)[:, 0])
    t1 = float(life.lifetimes_ps[0])
    return life, global_fit_coupled(data, t1, t1, tau_s=a.slice_tau_s, tau_c_s=tau_c_s)


def lorentzian_chi2(slice_spec, fwhm_ueV, t=0, b=0):
    """chi^2 and dof of one p slice against a Lorentzian line of FWHM ``fwhm_ueV`` (p width 2x)."""
    return slice_chi2(slice_spec, t, b, lambda d: lorentzian_ft(d, 2.0 * fwhm_ueV))


def truth_table(cfg):
    """Parameter values implied by the configuration, keyed like the fit results."""
    st = cfg.emitter.states
    out = {"gamma_a": t2_to_fwhm_ueV(st[0].t2_ps), "gamma_b": t2_to_fwhm_ueV(st[1].t2_ps)}
    dw = nm_to_radps(st[1].wavelength_nm) - nm_to_radps(st[0].wavelength_nm)
    dw += ueV_to_radps(st[1].detuning_ueV - st[0].detuning_ueV)
    out["omega"] = abs(radps_to_ueV(dw))
    out["sigma_ab"] = math.hypot(st[0].sigma_ueV, st[1].sigma_ueV)
    if cfg.emitter.k_relax_per_ps > 0:
        out["k"] = cfg.emitter.k_relax_per_ps
    return out

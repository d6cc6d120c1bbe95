"""Dithered Michelson interferometer and photon routing."""

from dataclasses import dataclass
import math
import warnings

import numba
import numpy as np

from .errors import ConfigError
from .units import C_NM_PER_PS

ROUTED_DTYPE = np.dtype(
    [
        ("pulse_index", "<u8"),
        ("microtime_ps", "<f4"),
        ("channel", "u1"),
        ("stage_index", "<u2"),
        ("debug_state", "u1"),
    ]
)
STRIPPED = 0xFF


def triangle(x):
    """Unit triangle wave: 0 at x=0, +1 at 1/4, 0 at 1/2, -1 at 3/4."""
    return 4.0 * np.abs(np.mod(np.asarray(x, dtype=float) - 0.25, 1.0) - 0.5) - 1.0


WAVEFORMS = {"triangle": triangle}


@dataclass(frozen=True)
class StageProgram:
    """Centre path-length differences and the dither applied around each."""

    positions_nm: tuple
    dither_amplitude_nm: float
    dither_period_s: float = 1.0
    dither_waveform: str = "triangle"
    acquisition_s: float = 30.0

    def __post_init__(self):
        object.__setattr__(self, "positions_nm", tuple(float(p) for p in self.positions_nm))
        if not self.positions_nm:
            raise ConfigError("stage program needs at least one position")
        if self.dither_amplitude_nm < 0:
            raise ConfigError("dither_amplitude_nm must be >= 0")
        if not self.dither_period_s > 0:
            raise ConfigError("dither_period_s must be > 0")
        if self.dither_waveform not in WAVEFORMS:
            raise ConfigError(f"unknown dither waveform {self.dither_waveform!r}")
        if self.acquisition_s < 0:
            raise ConfigError("acquisition_s must be >= 0")
        periods = self.acquisition_s / self.dither_period_s
        if self.acquisition_s > 0 and abs(periods - round(periods)) > 1e-9:
            warnings.warn("acquisition is not a whole number of dither periods", stacklevel=2)

    @property
    def n_stages(self):
        return len(self.positions_nm)

    def max_valid_lag_s(self, wavelength_nm, max_phase=0.05):
        """Largest lag over which the dither moves the fringe phase by < ``max_phase`` rad.

        The interferogram relation assumes delta(t) ~ delta(t + tau); a
        triangle dither sweeps 4*A per period at constant speed.
        """
        if self.dither_amplitude_nm == 0:
            return math.inf
        speed = 4.0 * self.dither_amplitude_nm / self.dither_period_s  # nm/s
        return max_phase * wavelength_nm / (2.0 * math.pi * speed)


def quadratic_positions(n, max_nm, min_nm=1e3):
    """Stage grid dense near zero delay: delta_i = min + (max - min) (i/(n-1))^2."""
    s = np.linspace(0.0, 1.0, n)
    return tuple(min_nm + (max_nm - min_nm) * s**2)


def stage_position(program, stage_index, t_s):
    if not 0 <= stage_index < program.n_stages:
        raise IndexError(f"stage_index {stage_index} out of range 0..{program.n_stages - 1}")
    wave = WAVEFORMS[program.dither_waveform]
    return program.positions_nm[stage_index] + program.dither_amplitude_nm * wave(
        np.asarray(t_s, dtype=float) / program.dither_period_s
    )


def exit_probability(omega, t2_ps, delta_nm):
    """Probabilities (p0, p1) of leaving through output 0 or 1.

    p0,1 = (1 +- g cos(omega delta / c)) / 2 with the exponential
    self-coherence envelope g = exp(-|delta| / (c T2)).  The larger of the
    two is computed first and the other as its complement, which keeps
    p0 + p1 == 1 exactly in floating point.
    """
    t2 = np.asarray(t2_ps, dtype=float)
    if np.any(t2 <= 0):
        raise ValueError("t2_ps must be > 0")
    d = np.asarray(delta_nm, dtype=float)
    u = np.exp(-np.abs(d) / (C_NM_PER_PS * t2)) * np.cos(np.asarray(omega) * d / C_NM_PER_PS)
    hi = 0.5 * (1.0 + np.abs(u))
    lo = 1.0 - hi
    p0 = np.where(u >= 0, hi, lo)
    p1 = np.where(u >= 0, lo, hi)
    if p0.ndim == 0:
        return float(p0), float(p1)
    return p0, p1


@numba.njit(cache=True, nogil=True)
def _triangle_channels(pulse, omega, t2, u, center, amp, period_s, f_rep_hz, c):
    # fused stage_position + exit_probability + draw; same formulas, no temporaries
    out = np.empty(pulse.size, np.uint8)
    for i in range(pulse.size):
        x = pulse[i] / f_rep_hz / period_s
        d = center + amp * (4.0 * abs((x - 0.25) % 1.0 - 0.5) - 1.0)
        v = math.exp(-abs(d) / (c * t2[i])) * math.cos(omega[i] * d / c)
        hi = 0.5 * (1.0 + abs(v))
        p0 = hi if v >= 0 else 1.0 - hi
        out[i] = 1 if u[i] >= p0 else 0
    return out


def route_photons(photons, program, stage_index, f_rep_mhz, rng, keep_debug=True):
    """Assign an output channel to each photon; returns ``ROUTED_DTYPE`` records.

    Equivalent to drawing against ``exit_probability`` at ``stage_position``
    (see ``route_photons_reference``), evaluated photon by photon.
    """
    n = photons.size
    if not 0 <= stage_index < program.n_stages:
        raise IndexError(f"stage_index {stage_index} out of range 0..{program.n_stages - 1}")
    if program.dither_waveform != "triangle":
        return route_photons_reference(photons, program, stage_index, f_rep_mhz, rng, keep_debug)
    t2 = np.ascontiguousarray(photons["t2_ps"])
    if n and np.any(t2 <= 0):
        raise ValueError("t2_ps must be > 0")
    u = rng.random(n)
    out = np.zeros(n, dtype=ROUTED_DTYPE)
    out["pulse_index"] = photons["pulse_index"]
    out["microtime_ps"] = photons["microtime_ps"]
    out["channel"] = _triangle_channels(
        np.ascontiguousarray(photons["pulse_index"]), np.ascontiguousarray(photons["omega"]), t2, u,
        float(program.positions_nm[stage_index]), float(program.dither_amplitude_nm),
        float(program.dither_period_s), f_rep_mhz * 1e6, C_NM_PER_PS,
    )
    out["stage_index"] = stage_index
    out["debug_state"] = photons["state"] if keep_debug else STRIPPED
    return out


def route_photons_reference(photons, program, stage_index, f_rep_mhz, rng, keep_debug=True):
    """Vectorised numpy version of :func:`route_photons` (any waveform)."""
    n = photons.size
    t_s = photons["pulse_index"] / (f_rep_mhz * 1e6)
    delta = stage_position(program, stage_index, t_s)
    p0, _ = exit_probability(photons["omega"], photons["t2_ps"], delta) if n else (np.empty(0), None)
    u = rng.random(n)
    out = np.zeros(n, dtype=ROUTED_DTYPE)
    out["pulse_index"] = photons["pulse_index"]
    out["microtime_ps"] = photons["microtime_ps"]
    out["channel"] = (u >= p0).astype(np.uint8)
    out["stage_index"] = stage_index
    out["debug_state"] = photons["state"] if keep_debug else STRIPPED
    return out


def route_photon(photon, delta_nm, rng):
    """Single-photon version of :func:`route_photons`; returns the channel."""
    p0, _ = exit_probability(photon.omega, photon.t2_ps, delta_nm)
    return 0 if rng.random() < p0 else 1

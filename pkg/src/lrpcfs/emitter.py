"""Monte-Carlo photon emission from two-state single emitters.

A run is a sequence of laser pulses.  Each pulse yields at most one detected
photon (multi-photon events are dropped), whose microtime is drawn from the
emitting state's decay and whose optical frequency carries the state's
current spectral-diffusion offset.  Spectral diffusion follows the Gaussian
jump model: on every pulse the offset is redrawn from Normal(0, sigma^2) with
a fixed probability, otherwise it is kept.

Pulse-by-pulse reference functions (``sample_pulse_emission``, ``gjm_step``,
``sample_state_and_microtime_coupled``) define the process.  ``simulate_stream``
draws the same process vectorised: successes of a per-pulse Bernoulli trial
are generated as cumulative geometric gaps, so the cost scales with the number
of photons and jumps rather than with the number of pulses.
"""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np

from .errors import ConfigError

PHOTON_DTYPE = np.dtype(
    [
        ("pulse_index", "<i8"),
        ("microtime_ps", "<f8"),
        ("omega", "<f8"),
        ("state", "u1"),
        ("t2_ps", "<f8"),
    ]
)

COUPLINGS = ("uncoupled", "static", "coupled")
DIFFUSION_MODES = ("independent", "correlated")


@dataclass(frozen=True)
class EmitterState:
    """One emissive transition.

    Frequencies are angular, in rad/ps.  ``jump_prob_per_pulse`` sets the
    jump rate k_jump = jump_prob * f_rep and the correlation time 1/k_jump.
    """

    label: str
    t1_ps: float
    t2_ps: float
    omega0: float
    sigma_jump: float = 0.0
    jump_prob_per_pulse: float = 0.0

    def __post_init__(self):
        if not self.t1_ps > 0:
            raise ConfigError(f"state {self.label}: t1_ps must be > 0")
        if not self.t2_ps > 0:
            raise ConfigError(f"state {self.label}: t2_ps must be > 0")
        if self.t2_ps > 2.0 * self.t1_ps:
            raise ConfigError(f"state {self.label}: t2_ps exceeds the 2*T1 coherence bound")
        if self.sigma_jump < 0:
            raise ConfigError(f"state {self.label}: sigma_jump must be >= 0")
        if not 0.0 <= self.jump_prob_per_pulse <= 1.0:
            raise ConfigError(f"state {self.label}: jump_prob_per_pulse must lie in [0, 1]")


@dataclass(frozen=True)
class EmitterModel:
    states: tuple
    coupling: str = "uncoupled"
    k_relax: float = 0.0  # 1/ps, coupled only
    diffusion_mode: str = "independent"
    initial_population: tuple = (0.5, 0.5)
    f_rep_mhz: float = 10.0
    mean_count_rate: float = 1e5

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        object.__setattr__(self, "initial_population", tuple(float(w) for w in self.initial_population))
        if len(self.states) != 2:
            raise ConfigError("exactly two emitter states are supported")
        if self.coupling not in COUPLINGS:
            raise ConfigError(f"coupling must be one of {COUPLINGS}")
        if self.diffusion_mode not in DIFFUSION_MODES:
            raise ConfigError(f"diffusion_mode must be one of {DIFFUSION_MODES}")
        if len(self.initial_population) != len(self.states):
            raise ConfigError("initial_population needs one weight per state")
        if min(self.initial_population) < 0 or abs(sum(self.initial_population) - 1.0) > 1e-9:
            raise ConfigError("initial_population must be non-negative and sum to 1")
        if not self.f_rep_mhz > 0:
            raise ConfigError("f_rep_mhz must be > 0")
        if self.mean_count_rate < 0:
            raise ConfigError("mean_count_rate must be >= 0")
        if self.poisson_mean >= 1.0:
            raise ConfigError(
                f"mean photons per pulse {self.poisson_mean:.3g} >= 1 (detector oversaturated)"
            )
        if self.coupling == "coupled":
            if not self.k_relax > 0:
                raise ConfigError("coupled emitter needs k_relax > 0")
            a, b = self.states
            if not math.isclose(a.t1_ps, b.t1_ps, rel_tol=1e-12):
                warnings.warn(
                    "coupled emitter with unequal T1 (unequal oscillator strengths) goes "
                    "beyond the equal-strength reference scenario",
                    stacklevel=2,
                )
        if self.diffusion_mode == "correlated":
            a, b = self.states
            if a.sigma_jump != b.sigma_jump or a.jump_prob_per_pulse != b.jump_prob_per_pulse:
                raise ConfigError("correlated diffusion needs identical sigma_jump and jump_prob for both states")

    @property
    def poisson_mean(self):
        return self.mean_count_rate / (self.f_rep_mhz * 1e6)

    @property
    def emission_probability(self):
        lam = self.poisson_mean
        return lam * math.exp(-lam)

    @property
    def pulse_period_ps(self):
        return 1e6 / self.f_rep_mhz

    def correlation_time_s(self, state_index=0):
        p = self.states[state_index].jump_prob_per_pulse
        return math.inf if p == 0 else 1.0 / (p * self.f_rep_mhz * 1e6)

    def diffuses(self, state_index):
        s = self.states[state_index]
        return self.coupling != "static" and s.sigma_jump > 0 and s.jump_prob_per_pulse > 0


@dataclass
class EmittedPhoton:
    pulse_index: int
    macrotime_ps: float
    microtime_ps: float
    omega: float
    state_label: str
    t2_ps: float


@dataclass
class DiffusionState:
    """Current spectral offsets (rad/ps), one per state."""

    offsets: np.ndarray = field(default_factory=lambda: np.zeros(2))
    correlated: bool = False

    @classmethod
    def stationary(cls, model, rng):
        """Start from the stationary Normal(0, sigma^2) distribution."""
        if model.diffusion_mode == "correlated":
            s = model.states[0]
            v = s.sigma_jump * rng.standard_normal() if model.diffuses(0) else 0.0
            return cls(np.array([v, v]), correlated=True)
        offs = np.array(
            [st.sigma_jump * rng.standard_normal() if model.diffuses(i) else 0.0 for i, st in enumerate(model.states)]
        )
        return cls(offs, correlated=False)

    def step(self, model, rng):
        if self.correlated:
            v = gjm_step(self.offsets[0], model.states[0], rng) if model.diffuses(0) else self.offsets[0]
            return DiffusionState(np.array([v, v]), correlated=True)
        offs = np.array(
            [gjm_step(o, st, rng) if model.diffuses(i) else o for i, (o, st) in enumerate(zip(self.offsets, model.states))]
        )
        return DiffusionState(offs, correlated=False)


def gjm_step(offset, state, rng):
    """Advance one diffusion track by one pulse."""
    if rng.random() < state.jump_prob_per_pulse:
        return state.sigma_jump * rng.standard_normal()
    return offset


def sample_microtime(state, rng):
    return rng.exponential(state.t1_ps)


def sample_state_and_microtime_coupled(model, rng):
    """Draw (state index, microtime) for the irreversibly relaxing doublet.

    Population starts in the upper state A.  A decays at total rate
    k + 1/T1_A; the decay is radiative with probability (1/T1_A)/(k + 1/T1_A),
    otherwise population moves to B, which then emits after Exp(T1_B).
    """
    if not model.k_relax > 0:
        raise ConfigError("k_relax must be > 0")
    a, b = model.states
    g_a = 1.0 / a.t1_ps
    leave = rng.exponential(1.0 / (model.k_relax + g_a))
    if rng.random() < g_a / (model.k_relax + g_a):
        return 0, leave
    return 1, leave + rng.exponential(b.t1_ps)


def sample_pulse_emission(model, rng, pulse_index=0, diffusion=None):
    """One laser pulse: return an EmittedPhoton or None."""
    if rng.random() >= model.emission_probability:
        return None
    if model.coupling == "coupled":
        k, micro = sample_state_and_microtime_coupled(model, rng)
    else:
        k = int(rng.random() >= model.initial_population[0])
        micro = sample_microtime(model.states[k], rng)
    st = model.states[k]
    offset = 0.0 if diffusion is None else float(diffusion.offsets[k])
    return EmittedPhoton(
        pulse_index=pulse_index,
        macrotime_ps=pulse_index * model.pulse_period_ps,
        microtime_ps=micro,
        omega=st.omega0 + offset,
        state_label=st.label,
        t2_ps=st.t2_ps,
    )


def bernoulli_indices(n_trials, p, rng):
    """Sorted indices of successes among ``n_trials`` Bernoulli(p) trials."""
    if n_trials <= 0 or p <= 0:
        return np.empty(0, dtype=np.int64)
    if p >= 1:
        return np.arange(n_trials, dtype=np.int64)
    out = []
    pos = -1
    while True:
        remaining = n_trials - 1 - pos
        m = int(remaining * p + 6.0 * math.sqrt(remaining * p) + 16)
        idx = pos + np.cumsum(rng.geometric(p, size=m), dtype=np.int64)
        if idx[-1] >= n_trials:
            out.append(idx[idx < n_trials])
            break
        out.append(idx)
        pos = int(idx[-1])
    return np.concatenate(out)


def gjm_track(n_pulses, state, rng):
    """Jump pulses and offset values of one GJM track.

    ``values[j]`` holds from pulse ``jumps[j-1]`` (inclusive) on; ``values[0]``
    is the stationary initial offset.
    """
    jumps = bernoulli_indices(n_pulses, state.jump_prob_per_pulse, rng)
    values = state.sigma_jump * rng.standard_normal(jumps.size + 1)
    return jumps, values


def track_at(jumps, values, pulses):
    return values[np.searchsorted(jumps, pulses, side="right")]


def coupled_emission_densities(t, k, t1_a, t1_b):
    """Emission-rate densities of A and B after full excitation of A at t=0."""
    t = np.asarray(t, dtype=float)
    g_a, g_b = 1.0 / t1_a, 1.0 / t1_b
    r = k + g_a
    pop_a = np.exp(-r * t)
    if math.isclose(r, g_b):
        pop_b = k * t * np.exp(-g_b * t)
    else:
        pop_b = k / (r - g_b) * (np.exp(-g_b * t) - np.exp(-r * t))
    return g_a * pop_a, g_b * pop_b


def _exp_integral(rate, lo, hi):
    """Integral of exp(-rate t) over [lo, hi] (hi may be inf)."""
    return (np.exp(-rate * lo) - np.exp(-rate * np.asarray(hi, dtype=float))) / rate


def coupled_bin_emission(lo, hi, k, t1_a, t1_b):
    """Photons emitted from A and B inside the microtime window [lo, hi)."""
    g_a, g_b = 1.0 / t1_a, 1.0 / t1_b
    r = k + g_a
    n_a = g_a * _exp_integral(r, lo, hi)
    if math.isclose(r, g_b):
        # integral of k t exp(-g t) g dt
        def prim(t):
            t = np.asarray(t, dtype=float)
            return np.where(np.isinf(t), 0.0, -k * np.exp(-g_b * t) * (g_b * t + 1.0) / g_b)

        n_b = prim(hi) - prim(lo)
    else:
        n_b = g_b * k / (r - g_b) * (_exp_integral(g_b, lo, hi) - _exp_integral(r, lo, hi))
    return n_a, n_b


def emission_weights(T, model):
    """Probabilities (a, b) that a photon at microtime ``T`` came from A or B.

    Evaluated through the ratio b/a so that late microtimes, where both
    densities underflow, still give finite weights.
    """
    a_state, b_state = model.states
    T = np.asarray(T, dtype=float)
    g_a, g_b = 1.0 / a_state.t1_ps, 1.0 / b_state.t1_ps
    with np.errstate(over="ignore"):
        if model.coupling == "coupled":
            r = model.k_relax + g_a
            if math.isclose(r, g_b):
                ratio = g_b * model.k_relax * T / g_a
            else:
                ratio = g_b * model.k_relax / (g_a * (r - g_b)) * np.expm1((r - g_b) * T)
        else:
            wa, wb = model.initial_population
            if wa == 0:
                ratio = np.full(T.shape, np.inf)
            else:
                ratio = (wb * g_b) / (wa * g_a) * np.exp((g_a - g_b) * T)
    a = 1.0 / (1.0 + ratio)
    return a, 1.0 - a


def bin_weights(intervals, model):
    """Fraction of A photons in each microtime window (a_bin, b_bin = 1 - a_bin)."""
    a_state, b_state = model.states
    out = []
    for lo, hi in intervals:
        if model.coupling == "coupled":
            n_a, n_b = coupled_bin_emission(lo, hi, model.k_relax, a_state.t1_ps, b_state.t1_ps)
        else:
            wa, wb = model.initial_population
            n_a = wa * _exp_integral(1.0 / a_state.t1_ps, lo, hi) / a_state.t1_ps
            n_b = wb * _exp_integral(1.0 / b_state.t1_ps, lo, hi) / b_state.t1_ps
        out.append(float(n_a / (n_a + n_b)))
    return np.array(out)


def simulate_stream(model, duration_s, rng):
    """Photons emitted during ``duration_s`` seconds, ordered by pulse index.

    Returns a structured array with ``PHOTON_DTYPE``.  Diffusion tracks are
    defined on every pulse whether or not a photon is emitted on it.
    """
    if duration_s < 0:
        raise ConfigError("duration_s must be >= 0")
    n_pulses = int(round(duration_s * model.f_rep_mhz * 1e6))
    pulses = bernoulli_indices(n_pulses, model.emission_probability, rng)
    n = pulses.size
    out = np.zeros(n, dtype=PHOTON_DTYPE)
    out["pulse_index"] = pulses
    if n == 0:
        return out

    if model.coupling == "coupled":
        a, b = model.states
        g_a = 1.0 / a.t1_ps
        r = model.k_relax + g_a
        leave = rng.exponential(1.0 / r, size=n)
        from_b = rng.random(n) >= g_a / r
        micro = leave + np.where(from_b, rng.exponential(b.t1_ps, size=n), 0.0)
        state = from_b.astype(np.uint8)
    else:
        state = (rng.random(n) >= model.initial_population[0]).astype(np.uint8)
        t1 = np.array([s.t1_ps for s in model.states])
        micro = rng.exponential(1.0, size=n) * t1[state]

    omega0 = np.array([s.omega0 for s in model.states])
    omega = omega0[state]
    if model.diffusion_mode == "correlated":
        if model.diffuses(0):
            jumps, values = gjm_track(n_pulses, model.states[0], rng)
            omega = omega + track_at(jumps, values, pulses)
    else:
        for i, st in enumerate(model.states):
            if model.diffuses(i):
                jumps, values = gjm_track(n_pulses, st, rng)
                sel = state == i
                omega[sel] += track_at(jumps, values, pulses[sel])

    out["microtime_ps"] = micro
    out["omega"] = omega
    out["state"] = state
    out["t2_ps"] = np.array([s.t2_ps for s in model.states])[state]
    return out


def macrotime_ps(pulse_index, model):
    return np.asarray(pulse_index) * model.pulse_period_ps

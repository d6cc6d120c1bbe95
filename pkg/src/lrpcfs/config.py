"""YAML run configuration.

Every block is a dataclass; loading rejects unknown keys and reports the
offending field path (``emitter.states[1].t2_ps: ...``).  Frequencies are
given as a wavelength plus an optional detuning in ueV, widths in ueV.
"""

from dataclasses import asdict, dataclass, field, fields, is_dataclass
import typing

import yaml

from .errors import ConfigError


@dataclass
class StateConfig:
    label: str = "A"
    t1_ps: float = 1000.0
    t2_ps: float = 60.0
    wavelength_nm: float = 600.0
    detuning_ueV: float = 0.0
    sigma_ueV: float = 0.0
    jump_prob: float = 0.0


@dataclass
class EmitterConfig:
    states: list = field(default_factory=lambda: [StateConfig("A"), StateConfig("B")])
    coupling: str = "uncoupled"
    k_relax_per_ps: float = 0.0
    diffusion_mode: str = "independent"
    initial_population: list = field(default_factory=lambda: [0.5, 0.5])
    f_rep_mhz: float = 10.0
    count_rate_cps: float = 1e5


@dataclass
class QuadraticGrid:
    n: int = 16
    max_nm: float = 3e7
    min_nm: float = 1e3


@dataclass
class StageConfig:
    positions_nm: list = None
    quadratic: QuadraticGrid = None
    dither_amplitude_nm: float = 300.0
    dither_period_s: float = 1.0
    dither_waveform: str = "triangle"
    acquisition_s: float = 30.0


@dataclass
class CorrelatorConfig:
    points_per_cascade: int = 16
    max_lag_s: float = 0.01
    microtime_bins_ps: list = field(default_factory=lambda: [[0.0, 100.0], [2000.0, 7000.0]])


@dataclass
class AnalysisConfig:
    tau_min_s: float = 1e-6
    tau_max_s: float = 1e-2
    windows_per_decade: int = 4
    slice_tau_s: float = 60e-6
    slice_factor: float = 2.0
    n_zeta: int = 257
    zeta_max_ueV: float = None
    error_model: str = "overdispersed"
    fit_model: str = "none"
    lifetime_bin_ps: float = 8.0
    lifetime_max_ps: float = 8000.0
    lifetime_components: int = 2


@dataclass
class RunConfig:
    seed: int = 0
    emitter: EmitterConfig = field(default_factory=EmitterConfig)
    stage: StageConfig = field(default_factory=StageConfig)
    correlator: CorrelatorConfig = field(default_factory=CorrelatorConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)

    def to_dict(self):
        return asdict(self)


FIT_MODELS = ("none", "lorentzian", "static", "uncoupled", "coupled")
_NESTED_LISTS = {("EmitterConfig", "states"): StateConfig}


def _coerce(value, typ, path):
    if value is None:
        return None
    if typ is float:
        if isinstance(value, bool) or not isinstance(value, (int, float, str)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"{path}: expected a number, got {value!r}") from None
    if typ is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if typ is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if typ is list:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        return list(value)
    return value


def _build(cls, data, path):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{path + '.' if path else ''}{key}: unknown key")
    kwargs = {}
    for f in fields(cls):
        if f.name not in data:
            continue
        sub = f"{path + '.' if path else ''}{f.name}"
        typ = hints[f.name]
        val = data[f.name]
        if is_dataclass(typ):
            kwargs[f.name] = _build(typ, val, sub) if val is not None else None
        elif (cls.__name__, f.name) in _NESTED_LISTS:
            item = _NESTED_LISTS[(cls.__name__, f.name)]
            val = _coerce(val, list, sub)
            kwargs[f.name] = [_build(item, v, f"{sub}[{i}]") for i, v in enumerate(val)]
        else:
            kwargs[f.name] = _coerce(val, typ, sub)
    return cls(**kwargs)


def load_config(path):
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return config_from_dict(data or {})


def config_from_dict(data):
    cfg = _build(RunConfig, data, "")
    validate(cfg)
    return cfg


def dump_config(cfg, path):
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=False)


def validate(cfg):
    """Build the physical objects once so every module-level check runs at load time."""
    from .pipeline import build_binning, build_model, build_program

    if cfg.seed < 0:
        raise ConfigError("seed: must be >= 0")
    a = cfg.analysis
    if a.fit_model not in FIT_MODELS:
        raise ConfigError(f"analysis.fit_model: must be one of {FIT_MODELS}")
    if a.error_model not in ("overdispersed", "poisson"):
        raise ConfigError("analysis.error_model: must be 'overdispersed' or 'poisson'")
    if not 0 < a.tau_min_s < a.tau_max_s:
        raise ConfigError("analysis: need 0 < tau_min_s < tau_max_s")
    if a.slice_factor <= 1:
        raise ConfigError("analysis.slice_factor: must be > 1")
    if a.lifetime_components not in (1, 2):
        raise ConfigError("analysis.lifetime_components: must be 1 or 2")
    if cfg.correlator.max_lag_s <= 0:
        raise ConfigError("correlator.max_lag_s: must be > 0")
    build_model(cfg)
    build_program(cfg)
    build_binning(cfg)
    return cfg

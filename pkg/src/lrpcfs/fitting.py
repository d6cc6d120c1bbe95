"""Lifetime fits and global microtime-resolved fits of spectral correlations.

The global fits compare models to the interferogram samples behind each p
slice.  The cosine transform is linear and injective on the stage grid, so
this carries the same information as a whitened fit of p itself, while the
free per-slice scale stands in for the unit-area normalisation (it also
absorbs the dither contrast).  ``slice_chi2`` evaluates the same statistic
directly in the p domain.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import optimize

from .emitter import coupled_bin_emission
from .errors import DataError, FitError
from .lineshapes import lorentzian, lorentzian_ft, voigt, voigt_ft

# ---------------------------------------------------------------- lifetimes


@dataclass
class LifetimeFit:
    """Multi-exponential decay; amplitudes are photon fractions, sorted by lifetime."""

    amplitudes: np.ndarray
    lifetimes_ps: np.ndarray
    amplitude_err: np.ndarray
    lifetime_err_ps: np.ndarray
    total: float
    chi2_dof: float
    merged: bool = False

    @property
    def n(self):
        return len(self.lifetimes_ps)

    def bin_weights(self, intervals):
        """Fraction of photons from each component inside each microtime window."""
        n = np.array(
            [
                [f * (math.exp(-lo / t) - math.exp(-hi / t)) for f, t in zip(self.amplitudes, self.lifetimes_ps)]
                for lo, hi in intervals
            ]
        )
        return n / n.sum(axis=1, keepdims=True)


def _decay_counts(edges, total, fracs, taus):
    lo, hi = edges[:-1], edges[1:]
    out = np.zeros(lo.size)
    for f, t in zip(fracs, taus):
        out += f * (np.exp(-lo / t) - np.exp(-hi / t))
    return total * out


def fit_lifetime_multiexp(counts, edges, n=2, merge_tol=0.05):
    """Fit photon counts per microtime bin with ``n`` exponentials.

    Residuals are Poisson deviance residuals, which reduce to
    sqrt(N) (log N - log mu) at high counts but stay unbiased in the sparse
    tail and on empty bins.  Lifetimes are held below ten times the histogram
    span.  Two components whose lifetimes agree within ``merge_tol`` (or
    within two combined standard errors) are not separable and are reported
    as one, with a zero-amplitude second component.
    """
    counts = np.asarray(counts, dtype=float)
    edges = np.asarray(edges, dtype=float)
    if n not in (1, 2):
        raise ValueError("n must be 1 or 2")
    if counts.sum() < 1e4:
        raise DataError("insufficient photons: lifetime fit needs >= 1e4 counts")
    total0 = counts.sum()
    mean_t = np.sum(counts * 0.5 * (edges[:-1] + edges[1:])) / total0
    t_cap = 10.0 * (edges[-1] - edges[0])
    nlogn = np.where(counts > 0, counts * np.log(np.where(counts > 0, counts, 1.0)), 0.0)

    def unpack(x):
        total = math.exp(x[0])
        # smooth cap: t ranges over (0, t_cap)
        t = t_cap / (1.0 + np.exp(-np.asarray(x[-n:])))
        if n == 1:
            return total, np.array([1.0]), t
        fa = 1.0 / (1.0 + math.exp(-x[1]))
        return total, np.array([fa, 1.0 - fa]), t

    def resid(x):
        total, f, t = unpack(x)
        mu = np.maximum(_decay_counts(edges, total, f, t), 1e-300)
        dev = 2.0 * (mu - counts + nlogn - counts * np.log(mu))
        return np.sign(counts - mu) * np.sqrt(np.maximum(dev, 0.0))

    def t_to_x(t):
        return math.log(t / (t_cap - t))

    if n == 1:
        starts = [np.array([math.log(total0), t_to_x(mean_t)])]
    else:
        starts = [
            np.array([math.log(total0), 0.0, t_to_x(mean_t * s1), t_to_x(mean_t * s2)])
            for s1, s2 in ((0.2, 2.0), (0.1, 1.0), (0.5, 1.5), (0.05, 3.0))
        ]
    best = None
    for x0 in starts:
        try:
            r = optimize.least_squares(resid, x0, method="lm", max_nfev=5000)
        except (ValueError, FloatingPointError):
            continue
        if r.success and np.all(np.isfinite(r.x)) and (best is None or r.cost < best.cost):
            best = r
    if best is None:
        raise FitError("lifetime fit did not converge")
    total, f, t = unpack(best.x)
    dof = max(counts.size - best.x.size, 1)
    chi2 = 2.0 * best.cost / dof
    cov = _covariance(best.jac)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    t_err = t * (1.0 - t / t_cap) * se[-n:]
    if n == 1:
        f_err = np.zeros(1)
    else:
        fa = f[0]
        f_err = np.array([fa * (1 - fa) * se[1]] * 2)
    order = np.argsort(t)
    fit = LifetimeFit(f[order], t[order], f_err[order], t_err[order], total, chi2)
    if n == 2 and abs(t[1] - t[0]) <= max(merge_tol * max(t), 2.0 * math.hypot(*t_err)):
        one = fit_lifetime_multiexp(counts, edges, 1)
        fit = LifetimeFit(
            np.array([1.0, 0.0]),
            np.array([one.lifetimes_ps[0]] * 2),
            np.zeros(2),
            np.array([one.lifetime_err_ps[0]] * 2),
            one.total,
            one.chi2_dof,
            merged=True,
        )
    return fit


def _covariance(jac):
    jtj = jac.T @ jac
    try:
        return np.linalg.inv(jtj)
    except np.linalg.LinAlgError:
        return np.linalg.pinv(jtj)


# ---------------------------------------------------------------- models


@dataclass(frozen=True)
class StaticDoublet:
    """Two lines split by ``omega``; pairs from different states give side peaks at +-omega."""

    gamma_a: float
    gamma_b: float
    omega: float

    names = ("gamma_a", "gamma_b", "omega")

    def __post_init__(self):
        _check_widths(self.gamma_a, self.gamma_b)
        if self.omega < 0:
            raise ValueError("omega must be >= 0")

    def interferogram(self, delta, a):
        b = 1.0 - a
        ga, gb = self.gamma_a, self.gamma_b
        return (
            a * a * lorentzian_ft(delta, 2 * ga)
            + b * b * lorentzian_ft(delta, 2 * gb)
            + 2 * a * b * lorentzian_ft(delta, ga + gb, self.omega)
        )

    def spectrum(self, zeta, a):
        b = 1.0 - a
        ga, gb = self.gamma_a, self.gamma_b
        cross = 0.5 * (lorentzian(zeta, ga + gb, self.omega) + lorentzian(zeta, ga + gb, -self.omega))
        return a * a * lorentzian(zeta, 2 * ga) + b * b * lorentzian(zeta, 2 * gb) + 2 * a * b * cross


@dataclass(frozen=True)
class UncoupledDoublet:
    """Independently diffusing states at short lag.

    Each state's self term keeps its homogeneous width, while the A-B cross
    term is spread by the independent offsets: the Lorentzian of width
    gamma_a + gamma_b convolved with a Gaussian of width ``sigma_ab``.
    """

    gamma_a: float
    gamma_b: float
    sigma_ab: float

    names = ("gamma_a", "gamma_b", "sigma_ab")

    def __post_init__(self):
        _check_widths(self.gamma_a, self.gamma_b, self.sigma_ab)

    def interferogram(self, delta, a):
        b = 1.0 - a
        ga, gb = self.gamma_a, self.gamma_b
        return (
            a * a * lorentzian_ft(delta, 2 * ga)
            + b * b * lorentzian_ft(delta, 2 * gb)
            + 2 * a * b * voigt_ft(delta, self.sigma_ab, ga + gb)
        )

    def spectrum(self, zeta, a):
        b = 1.0 - a
        ga, gb = self.gamma_a, self.gamma_b
        return (
            a * a * lorentzian(zeta, 2 * ga)
            + b * b * lorentzian(zeta, 2 * gb)
            + 2 * a * b * voigt(zeta, self.sigma_ab, ga + gb)
        )


@dataclass(frozen=True)
class CoupledDoublet:
    """Static-doublet lineshape whose weights follow A -> B relaxation at rate k (1/ps)."""

    gamma_a: float
    gamma_b: float
    omega: float
    k: float
    t1_a: float
    t1_b: float

    names = ("gamma_a", "gamma_b", "omega", "k")

    def __post_init__(self):
        _check_widths(self.gamma_a, self.gamma_b)
        if self.omega < 0:
            raise ValueError("omega must be >= 0")
        if not self.k > 0:
            raise ValueError("k must be > 0")

    def weights(self, intervals):
        out = []
        for lo, hi in intervals:
            n_a, n_b = coupled_bin_emission(lo, hi, self.k, self.t1_a, self.t1_b)
            out.append(float(n_a / (n_a + n_b)))
        return np.array(out)

    def static(self):
        return StaticDoublet(self.gamma_a, self.gamma_b, self.omega)

    def interferogram(self, delta, a):
        return self.static().interferogram(delta, a)

    def spectrum(self, zeta, a):
        return self.static().spectrum(zeta, a)


def _check_widths(*w):
    if not all(x > 0 for x in w):
        raise ValueError("all widths must be > 0")


def predict_spectral_correlation(model, zeta, weights):
    """Unit-area p(zeta) per microtime bin, shape (nz, nbins)."""
    zeta = np.asarray(zeta, dtype=float)
    return np.column_stack([model.spectrum(zeta, a) for a in np.atleast_1d(weights)])


def predict_interferogram(model, delta_nm, weights):
    """Noise-free G(delta) per microtime bin (G(0) = 1), shape (nd, nbins)."""
    d = np.asarray(delta_nm, dtype=float)
    return np.column_stack([model.interferogram(d, a) for a in np.atleast_1d(weights)])


# ---------------------------------------------------------------- global fits


@dataclass
class FitResult:
    names: tuple
    values: np.ndarray
    stderr: np.ndarray
    chi2: float
    dof: int
    nfev: int
    message: str
    scales: np.ndarray = None
    flags: list = field(default_factory=list)

    @property
    def chi2_dof(self):
        return self.chi2 / self.dof

    def __getitem__(self, name):
        return float(self.values[self.names.index(name)])

    def err(self, name):
        return float(self.stderr[self.names.index(name)])

    def as_dict(self):
        return {n: (float(v), float(e)) for n, v, e in zip(self.names, self.values, self.stderr)}


@dataclass
class SliceData:
    """Interferogram samples behind the p slices of one lag window."""

    delta: list
    G: list
    err: list
    intervals: list


def slice_data(spec, t, bins, intervals):
    """Valid samples of lag window ``t`` for each microtime bin in ``bins``."""
    ig = spec.interferogram
    d, g, e = [], [], []
    for b in bins:
        m = ig.valid[:, t, b]
        if m.sum() < 4:
            raise DataError(f"under-resolved interferogram in bin {b}")
        d.append(ig.delta_nm[m])
        g.append(ig.G[m, t, b])
        e.append(ig.err[m, t, b])
    return SliceData(d, g, e, [tuple(intervals[b]) for b in bins])


def _profiled_residuals(data, curves):
    """Weighted residuals with the best non-negative scale per slice."""
    res, scales = [], []
    for G, s, F in zip(data.G, data.err, curves):
        w = 1.0 / s**2
        den = np.sum(w * F * F)
        c = np.sum(w * G * F) / den if den > 0 else 0.0
        scales.append(c)
        res.append((G - c * F) / s)
    return np.concatenate(res), np.array(scales)


def _run_fit(names, build, transforms, data, starts, max_nfev=4000):
    """Least-squares over transformed parameters with restarts.

    ``transforms`` maps each parameter to "log" (positive) or "abs" (even
    in the model, reported as |x|).
    """

    def to_params(x):
        return np.array([math.exp(v) if tr == "log" else abs(v) for v, tr in zip(x, transforms)])

    def resid(x):
        try:
            curves = build(to_params(x))
        except (ValueError, OverflowError, FloatingPointError):
            return np.full(sum(g.size for g in data.G), 1e6)
        r, _ = _profiled_residuals(data, curves)
        return r if np.all(np.isfinite(r)) else np.full(r.size, 1e6)

    def to_x(p):
        return np.array([math.log(v) if tr == "log" else v for v, tr in zip(p, transforms)])

    best = None
    tried = []
    for p0 in starts:
        tried.append(p0)
        tried.extend([np.asarray(p0) * 3.0, np.asarray(p0) / 3.0])
    for p0 in tried:
        try:
            r = optimize.least_squares(resid, to_x(p0), method="lm", max_nfev=max_nfev)
        except (ValueError, np.linalg.LinAlgError):
            continue
        if np.all(np.isfinite(r.x)) and r.status > 0 and (best is None or r.cost < best.cost - 1e-12):
            best = r
    if best is None:
        raise FitError("global fit did not converge from any start")
    p = to_params(best.x)
    n_data = sum(g.size for g in data.G)
    dof = n_data - len(data.G) - len(names)
    if dof <= 0:
        raise FitError("global fit has no degrees of freedom")
    cov = _covariance(best.jac)
    se_x = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    se = np.array([v * s if tr == "log" else s for v, s, tr in zip(p, se_x, transforms)])
    r, scales = _profiled_residuals(data, build(p))
    chi2 = float(r @ r)
    flags = []
    if chi2 > dof:
        # excess scatter beyond the error bars: widen the errors by the Birge ratio
        se = se * math.sqrt(chi2 / dof)
        flags.append(f"chi2/dof = {chi2 / dof:.3g} > 1; standard errors scaled by its square root")
    return FitResult(tuple(names), p, se, chi2, dof, int(best.nfev), best.message, scales, flags)


def _weights_from_lifetime(lifetime, intervals):
    if lifetime.n != 2:
        raise ValueError("doublet fits need a two-component lifetime fit")
    return lifetime.bin_weights(intervals)[:, 0]


def global_fit_static(data, weights, starts=None):
    """Fit {gamma_a, gamma_b, omega} across microtime bins with known state weights."""
    a = np.asarray(weights, dtype=float)
    _check_informative(a)

    def build(p):
        m = StaticDoublet(*p)
        return [m.interferogram(d, ai) for d, ai in zip(data.delta, a)]

    if starts is None:
        starts = [np.array([g1, g2, om]) for g1 in (10.0, 40.0) for g2 in (10.0, 40.0) for om in (30.0, 120.0)]
    return _run_fit(StaticDoublet.names, build, ("log", "log", "abs"), data, starts)


def global_fit_uncoupled(data, weights, starts=None):
    """Fit {gamma_a, gamma_b, sigma_ab} across microtime bins with known state weights."""
    a = np.asarray(weights, dtype=float)
    _check_informative(a)

    def build(p):
        m = UncoupledDoublet(*p)
        return [m.interferogram(d, ai) for d, ai in zip(data.delta, a)]

    if starts is None:
        starts = [np.array([g1, g2, s]) for g1 in (10.0, 40.0) for g2 in (10.0, 40.0) for s in (30.0, 100.0)]
    return _run_fit(UncoupledDoublet.names, build, ("log", "log", "log"), data, starts)


def global_fit_coupled(data, t1_a, t1_b, starts=None, tau_s=None, tau_c_s=None):
    """Fit {gamma_a, gamma_b, omega, k}; k acts only through the bin weights."""
    intervals = data.intervals
    if len(intervals) < 3:
        raise FitError("coupled fit needs >= 3 microtime bins")

    def build(p):
        m = CoupledDoublet(*p, t1_a, t1_b)
        return [m.interferogram(d, ai) for d, ai in zip(data.delta, m.weights(intervals))]

    if starts is None:
        starts = [
            np.array([g1, g2, om, k])
            for g1 in (15.0, 50.0)
            for g2 in (15.0, 50.0)
            for om in (60.0, 200.0)
            for k in (1 / 20, 1 / 200)
        ]
    res = _run_fit(CoupledDoublet.names, build, ("log", "log", "abs", "log"), data, starts)
    if tau_s is not None and tau_c_s is not None and tau_s > tau_c_s:
        res.flags.append("lag exceeds the fluctuation correlation time; splitting may be washed out")
    return res


def _check_informative(a):
    if a.size < 3:
        raise FitError("global fit needs >= 3 microtime bins")
    if np.ptp(a) < 1e-6:
        raise FitError("weights non-informative: all microtime bins share the same state weights")


def slice_chi2(spec, t, b, curve_fn):
    """p-domain chi^2 of one slice against a model interferogram ``curve_fn(delta)``.

    The model is carried through the same transform and normalisation as the
    data; the covariance of the normalised p is rank-deficient, so residuals
    are whitened with its pseudo-inverse.  Returns (chi2, dof).
    """
    tr, G, sig = spec.cell(t, b)
    p_data, _ = tr.normalised(G)
    p_model, _ = tr.normalised(curve_fn(tr.delta_nm))
    A = tr.jacobian(G) * sig[None, :]
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    keep = s > s[0] * 1e-10
    z = (u[:, keep].T @ (p_data - p_model)) / s[keep]
    return float(z @ z), int(keep.sum())

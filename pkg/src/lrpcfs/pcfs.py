"""Interferograms, spectral correlations, FWHM maps and C(tau).

Conventions
-----------
``G[d, t, b]`` is the PCFS interferogram at stage position ``d``, lag window
``t`` and microtime bin ``b``; ``p[z, t, b]`` the spectral correlation on the
energy grid ``zeta`` (ueV).  The interferogram is even in delta, so ``p`` is
its cosine transform.  Stage positions are sparse and uneven, hence the
transform integrates the piecewise-linear interpolant of G exactly (Filon
quadrature) instead of applying the trapezoid rule to an oscillating
integrand; G is held constant between delta = 0 and the first stage.  Every
``p`` slice is normalised to unit area on the zeta grid; the raw areas are
kept in ``SpectralCorrelation.area``.

Error bars
----------
With R = P_cross / P_auto the fraction of summed-intensity pairs that are
cross-channel pairs, conditioning on the photon times leaves only the
channel draws random.  That gives a binomial term R (1 - R) / P_auto.  A photon
shared by several pairs correlates their channel indicators, which adds
(P_auto / N) * (G - 1.5 G^2) / P_auto, where P_auto / N is the mean number
of partners per photon in the window.  The photon times themselves sample
the dither phase at random, so the conditional mean of R also scatters, by
G^2 / (8 N).  Together the excess is (G - 1.375 G^2) / N.
``error_model="poisson"`` keeps only the binomial term (plain Poisson
propagation through the ratio).
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import optimize, signal, stats

from .errors import DataError
from .units import HBAR_C_UEV_NM

ERROR_MODELS = ("overdispersed", "poisson")


# ---------------------------------------------------------------- interferogram


@dataclass
class Interferogram:
    delta_nm: np.ndarray  # (nd,)
    tau_windows_s: np.ndarray  # (nt, 2)
    G: np.ndarray  # (nd, nt, nb)
    err: np.ndarray
    valid: np.ndarray
    pairs_cross: np.ndarray
    pairs_auto: np.ndarray
    n_photons: np.ndarray  # (nd, nb)

    @property
    def tau_s(self):
        return np.sqrt(self.tau_windows_s[:, 0] * self.tau_windows_s[:, 1])

    @property
    def shape(self):
        return self.G.shape


def log_windows(tau_min_s, tau_max_s, per_decade=4):
    """Contiguous log-spaced lag windows covering [tau_min, tau_max)."""
    n = max(int(math.ceil(per_decade * math.log10(tau_max_s / tau_min_s) - 1e-9)), 1)
    e = np.geomspace(tau_min_s, tau_max_s, n + 1)
    return np.column_stack([e[:-1], e[1:]])


def slice_window(tau_s, factor=2.0):
    return np.array([[tau_s / factor, tau_s * factor]])


def _g_variance(pc, pa, ec, ea, n, G, error_model):
    with np.errstate(invalid="ignore", divide="ignore"):
        R = pc / pa
        var_r = R * (1.0 - R)
        if error_model == "overdispersed":
            g = np.clip(G, 0.0, 0.5)
            var_r = var_r + (pa / n) * np.maximum(g - 1.375 * g**2, 0.0)
        var_r = var_r / pa
        scale = ea / ec
    return scale**2 * var_r


def compute_interferogram(corr, positions_nm, tau_windows_s, error_model="overdispersed"):
    """G = 1 - g2_cross / g2_auto on the given lag windows."""
    if error_model not in ERROR_MODELS:
        raise ValueError(f"error_model must be one of {ERROR_MODELS}")
    tw = np.asarray(tau_windows_s, dtype=float).reshape(-1, 2)
    nd, nt, nb = len(positions_nm), tw.shape[0], corr.n_bins
    if corr.n_stages != nd:
        raise ValueError("correlation set and stage program disagree on the number of stages")
    shape = (nd, nt, nb)
    pc, pa, ec, ea = (np.zeros(shape) for _ in range(4))
    nph = np.zeros((nd, nb))
    for (s, b), cell in corr.cells.items():
        c = cell.cross.rebin(tw)
        a = cell.auto.rebin(tw)
        pc[s, :, b], ec[s, :, b] = c.pairs, c.expected
        pa[s, :, b], ea[s, :, b] = a.pairs, a.expected
        nph[s, b] = cell.n_photons
    valid = (pa > 0) & (pc > 0) & (ec > 0) & (ea > 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        rho = (pc / ec) / (pa / ea)
    G = np.where(valid, 1.0 - rho, 0.0)
    var = _g_variance(pc, pa, ec, ea, nph[:, None, :], G, error_model)
    err = np.where(valid, np.sqrt(np.where(valid, var, 1.0)), np.inf)
    valid &= np.isfinite(err) & (err > 0)
    err = np.where(valid, err, np.inf)
    return Interferogram(np.asarray(positions_nm, dtype=float), tw, G, err, valid, pc, pa, nph)


# ---------------------------------------------------------------- transform


def _unit_integrals(theta):
    """int_0^1 exp(i theta t) dt and int_0^1 t exp(i theta t) dt."""
    th = np.asarray(theta, dtype=float)
    small = np.abs(th) < 1e-2
    ts = np.where(small, 1.0, th)
    e = np.exp(1j * ts)
    i0 = (e - 1.0) / (1j * ts)
    i1 = (e * (1.0 - 1j * ts) - 1.0) / ts**2
    z = 1j * th
    s0 = 1.0 + z / 2 + z**2 / 6 + z**3 / 24 + z**4 / 120 + z**5 / 720
    s1 = 1 / 2 + z / 3 + z**2 / 8 + z**3 / 30 + z**4 / 144 + z**5 / 840
    return np.where(small, s0, i0), np.where(small, s1, i1)


def filon_cosine_weights(x, k):
    """Weights W[j, i] with sum_i W[j, i] f(x_i) = int_0^x_n f(x) cos(k_j x) dx.

    ``f`` is the piecewise-linear interpolant of the samples, held at
    ``f(x_0)`` on [0, x_0].
    """
    x = np.asarray(x, dtype=float)
    pad = x[0] > 0
    xs = np.concatenate([[0.0], x]) if pad else x
    kk = np.abs(np.asarray(k, dtype=float))[:, None]
    h = np.diff(xs)[None, :]
    i0, i1 = _unit_integrals(kk * h)
    ph = np.exp(1j * kk * xs[None, :-1])
    W = np.zeros((kk.shape[0], xs.size))
    W[:, :-1] += np.real(ph * (i0 - i1)) * h
    W[:, 1:] += np.real(ph * i1) * h
    if pad:
        W[:, 1] += W[:, 0]
        W = W[:, 1:]
    return W


def default_zeta_grid(delta_nm, n_zeta=257, zeta_max_ueV=None):
    """Symmetric grid with an exact zero; default span 2 pi hbar c / mean stage spacing."""
    d = np.sort(np.asarray(delta_nm, dtype=float))
    if zeta_max_ueV is None:
        spacing = (d[-1] - d[0]) / (d.size - 1)
        zeta_max_ueV = 2.0 * np.pi * HBAR_C_UEV_NM / spacing
    half = (n_zeta - 1) // 2
    pos = zeta_max_ueV * np.arange(1, half + 1) / half
    if n_zeta % 2:
        return np.concatenate([-pos[::-1], [0.0], pos])
    pos = zeta_max_ueV * (np.arange(half + 1) + 0.5) / (half + 0.5)
    return np.concatenate([-pos[::-1], pos])


def trapezoid_weights(z):
    z = np.asarray(z, dtype=float)
    w = np.zeros_like(z)
    dz = np.diff(z)
    w[:-1] += 0.5 * dz
    w[1:] += 0.5 * dz
    return w


@dataclass
class CosineTransform:
    """Linear map from interferogram samples to unnormalised p on ``zeta``."""

    delta_nm: np.ndarray
    zeta_ueV: np.ndarray
    W: np.ndarray = field(init=False)
    quad: np.ndarray = field(init=False)
    mirror: np.ndarray = field(init=False)  # index of the +|zeta| twin of each grid point

    def __post_init__(self):
        self.delta_nm = np.asarray(self.delta_nm, dtype=float)
        self.zeta_ueV = np.asarray(self.zeta_ueV, dtype=float)
        if np.any(np.diff(self.delta_nm) <= 0):
            raise ValueError("stage positions must be strictly increasing")
        self.W = filon_cosine_weights(self.delta_nm, self.zeta_ueV / HBAR_C_UEV_NM) / (np.pi * HBAR_C_UEV_NM)
        self.quad = trapezoid_weights(self.zeta_ueV)
        z = self.zeta_ueV
        j = np.clip(np.searchsorted(z, np.abs(z)), 0, z.size - 1)
        self.mirror = np.where(z[j] == np.abs(z), j, np.arange(z.size))

    def restrict(self, mask):
        sub = CosineTransform.__new__(CosineTransform)
        sub.delta_nm = self.delta_nm[mask]
        sub.zeta_ueV = self.zeta_ueV
        sub.W = filon_cosine_weights(sub.delta_nm, self.zeta_ueV / HBAR_C_UEV_NM) / (np.pi * HBAR_C_UEV_NM)
        sub.quad = self.quad
        sub.mirror = self.mirror
        return sub

    def apply(self, G):
        # BLAS may sum mirrored rows in a different order; copy the +|zeta| row
        return (self.W @ G)[self.mirror]

    def normalised(self, G):
        raw = self.apply(G)
        area = self.quad @ raw
        with np.errstate(invalid="ignore", divide="ignore"):
            return raw / area, area

    def jacobian(self, G):
        """d p_normalised / d G, shape (nz, nd)."""
        p, area = self.normalised(G)
        return (self.W - np.outer(p, self.quad @ self.W)) / area


@dataclass
class SpectralCorrelation:
    zeta_ueV: np.ndarray
    tau_windows_s: np.ndarray
    p: np.ndarray  # (nz, nt, nb)
    err: np.ndarray
    area: np.ndarray  # (nt, nb) pre-normalisation areas
    interferogram: Interferogram
    transform: CosineTransform
    normalisation: str = "unit-area"

    @property
    def tau_s(self):
        return np.sqrt(self.tau_windows_s[:, 0] * self.tau_windows_s[:, 1])

    def cell(self, t, b):
        """(transform, G, sigma) restricted to the valid stages of one cell."""
        ig = self.interferogram
        m = ig.valid[:, t, b]
        tr = self.transform if m.all() else self.transform.restrict(m)
        return tr, ig.G[m, t, b], ig.err[m, t, b]


MIN_STAGES = 4


def spectral_correlation(ig, zeta_ueV=None, n_zeta=257, zeta_max_ueV=None):
    if ig.delta_nm.size < MIN_STAGES:
        raise DataError("under-resolved interferogram: fewer than 4 stage positions")
    if zeta_ueV is None:
        zeta_ueV = default_zeta_grid(ig.delta_nm, n_zeta, zeta_max_ueV)
    tr = CosineTransform(ig.delta_nm, zeta_ueV)
    nd, nt, nb = ig.G.shape
    nz = tr.zeta_ueV.size
    p = np.full((nz, nt, nb), np.nan)
    err = np.full((nz, nt, nb), np.nan)
    area = np.full((nt, nb), np.nan)
    for t in range(nt):
        for b in range(nb):
            m = ig.valid[:, t, b]
            if m.sum() < MIN_STAGES:
                continue
            sub = tr if m.all() else tr.restrict(m)
            G, sig = ig.G[m, t, b], ig.err[m, t, b]
            pn, a = sub.normalised(G)
            if not (np.isfinite(a) and a > 0):
                continue  # no interference left (G ~ 0): nothing to normalise
            J = sub.jacobian(G)
            p[:, t, b] = pn
            err[:, t, b] = np.sqrt(np.einsum("zd,d->z", J**2, sig**2))[sub.mirror]
            area[t, b] = a
    return SpectralCorrelation(tr.zeta_ueV, ig.tau_windows_s, p, err, area, ig, tr)


# ---------------------------------------------------------------- FWHM


def slice_fwhm(zeta, p, prominence=0.1):
    """Envelope FWHM (outermost half-maximum crossings) and a multi-peak flag."""
    p = np.asarray(p, dtype=float)
    if not np.all(np.isfinite(p)):
        return np.nan, False
    i = int(np.argmax(p))
    half = 0.5 * p[i]
    above = np.flatnonzero(p >= half)
    lo, hi = above[0], above[-1]
    if lo == 0 or hi == p.size - 1:
        return np.nan, False
    zl = zeta[lo - 1] + (half - p[lo - 1]) * (zeta[lo] - zeta[lo - 1]) / (p[lo] - p[lo - 1])
    zr = zeta[hi] + (half - p[hi]) * (zeta[hi + 1] - zeta[hi]) / (p[hi + 1] - p[hi])
    peaks, _ = signal.find_peaks(p, height=prominence * p[i], prominence=prominence * p[i])
    return float(zr - zl), bool(peaks.size > 1)


@dataclass
class FWHMMap:
    tau_s: np.ndarray
    fwhm_ueV: np.ndarray  # (nt, nb)
    multi_peak: np.ndarray


def fwhm_map(spec):
    nz, nt, nb = spec.p.shape
    f = np.full((nt, nb), np.nan)
    mp = np.zeros((nt, nb), dtype=bool)
    for t in range(nt):
        for b in range(nb):
            f[t, b], mp[t, b] = slice_fwhm(spec.zeta_ueV, spec.p[:, t, b])
    return FWHMMap(spec.tau_s, f, mp)


# ---------------------------------------------------------------- C(tau)


@dataclass
class FluctuationCurve:
    tau_s: np.ndarray
    C: np.ndarray
    C_err: np.ndarray
    tau_c_s: float
    tau_c_err_s: float
    amplitude: float
    offset: float
    bin_index: int


def _reference(ig, b, sel):
    G = ig.G[:, sel, b]
    w = np.where(ig.valid[:, sel, b], 1.0 / ig.err[:, sel, b] ** 2, 0.0)
    ws = w.sum(axis=1)
    ref = np.where(ws > 0, (G * w).sum(axis=1) / np.where(ws > 0, ws, 1.0), 0.0)
    return ref, np.where(ws > 0, 1.0 / np.sqrt(np.where(ws > 0, ws, 1.0)), np.inf)


def reference_windows(ig, b, min_pairs=1e4):
    """Lag windows forming the early (first usable decade) and late (last decade) references."""
    tau = ig.tau_s
    ok = np.all(ig.valid[:, :, b], axis=0)
    rich = ok & (ig.pairs_cross[:, :, b].min(axis=0) > min_pairs)
    if not rich.any():
        raise DataError("insufficient photons: no lag window reaches the pair threshold")
    t0 = tau[np.flatnonzero(rich)[0]]
    early = rich & (tau < 10.0 * t0)
    t1 = tau[np.flatnonzero(ok)[-1]]
    late = ok & (tau > t1 / 10.0)
    return early, late


def extract_fluctuation_correlation(ig, b, early=None, late=None, min_pairs=1e4, alpha=1e-3):
    """Mixing coefficient C(tau) between the early and late interferograms.

    Each lag window is decomposed as G = u G_early + v G_late (weighted
    least squares, scale-free), C = u / (u + v).  C(tau) is then fitted by
    A exp(-tau / tau_c) + B; the affine form absorbs the residual diffusion
    already present in the early reference and the finite late one.
    """
    if early is None or late is None:
        e, l = reference_windows(ig, b, min_pairs)
        early = e if early is None else early
        late = l if late is None else late
    g_e, s_e = _reference(ig, b, early)
    g_l, s_l = _reference(ig, b, late)
    use = np.isfinite(s_e) & np.isfinite(s_l)
    # are the references distinguishable beyond a common scale?
    w = 1.0 / (s_e[use] ** 2 + s_l[use] ** 2)
    scale = np.sum(w * g_e[use] * g_l[use]) / np.sum(w * g_l[use] ** 2)
    chi2 = np.sum(w * (g_e[use] - scale * g_l[use]) ** 2)
    dof = max(int(use.sum()) - 1, 1)
    if stats.chi2.sf(chi2, dof) > alpha:
        raise DataError("no resolvable diffusion: early and late references are statistically indistinguishable")

    A = np.column_stack([g_e, g_l])
    nt = ig.G.shape[1]
    C = np.full(nt, np.nan)
    C_err = np.full(nt, np.nan)
    for t in range(nt):
        m = ig.valid[:, t, b] & use
        if m.sum() < 3:
            continue
        wt = 1.0 / ig.err[m, t, b]
        Aw = A[m] * wt[:, None]
        yw = ig.G[m, t, b] * wt
        coef, *_ = np.linalg.lstsq(Aw, yw, rcond=None)
        cov = np.linalg.inv(Aw.T @ Aw)
        u, v = coef
        s = u + v
        if s == 0:
            continue
        C[t] = u / s
        grad = np.array([v / s**2, -u / s**2])
        C_err[t] = math.sqrt(max(grad @ cov @ grad, 0.0))
    tau = ig.tau_s
    ok = np.isfinite(C) & np.isfinite(C_err) & (C_err > 0)
    if ok.sum() < 4:
        raise DataError("too few lag windows to fit the fluctuation correlation")
    tt, cc, ss = tau[ok], C[ok], C_err[ok]
    mid = np.flatnonzero(cc < 0.5 * (cc.max() + cc.min()))
    guess = tt[mid[0]] / math.log(2.0) if mid.size else np.median(tt)

    def model(x, a, ltc, c0):
        return a * np.exp(-x / np.exp(ltc)) + c0

    try:
        popt, pcov = optimize.curve_fit(
            model, tt, cc, p0=[1.0, math.log(guess), 0.0], sigma=ss, absolute_sigma=True, maxfev=20000
        )
    except RuntimeError as exc:
        raise DataError(f"fluctuation-correlation fit failed: {exc}") from exc
    tc = math.exp(popt[1])
    tc_err = tc * math.sqrt(max(pcov[1, 1], 0.0))
    return FluctuationCurve(tau, C, C_err, tc, tc_err, float(popt[0]), float(popt[2]), b)

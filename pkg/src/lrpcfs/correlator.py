"""Microtime-gated photon correlation on a multi-tau lag grid.

Time stamps are integer laser-pulse indices, so lags are integers and pair
counts are exact.  The lag grid is the usual multi-tau cascade: ``m`` bins
of width 1 pulse, then ``m`` bins of width 2, 4, ... pulses.  Pairs are
counted event by event (no intensity rebinning) by two exact kernels: a
direct pair walk, O(N_a + pairs), for the short lags where each photon has
few partners, and a per-edge two-pointer sweep, O(K (N_a + N_b)) for K lag
bins, for the long lags.

Normalisation (both kernels and the brute-force oracle share it): for a lag
bin [lo, hi) with centre L the expected number of pairs of independent
streams over a record of T pulses is

    E = (hi - lo) * n_a(t < T - L) * n_b(t >= L) / (T - L),

which corrects for the shrinking overlap of the two records at large lag;
g2 = pairs / E.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import warnings

import numba
import numpy as np

from .errors import DataError

BRUTE_FORCE_LIMIT = 100_000
_WALK_NS = 2.5  # per pair
_SWEEP_NS = 4.0  # per photon per lag edge
_MAX_WALK_SPAN = 1 << 24


@dataclass(frozen=True)
class CascadeConfig:
    points_per_cascade: int = 16
    max_lag_pulses: int = 1 << 20

    def __post_init__(self):
        if self.points_per_cascade < 1:
            raise ValueError("points_per_cascade must be >= 1")
        if self.max_lag_pulses < 2:
            raise ValueError("max_lag_pulses must be >= 2")


def multitau_edges(cfg, n_pulses=None):
    """Integer lag-bin edges in pulses, starting at a lag of one pulse."""
    max_lag = cfg.max_lag_pulses
    if n_pulses is not None and n_pulses - 1 < max_lag:
        warnings.warn("record shorter than the largest requested lag; lag grid truncated", stacklevel=2)
        max_lag = max(n_pulses - 1, 2)
    edges = [1]
    width = 1
    while True:
        for _ in range(cfg.points_per_cascade):
            if edges[-1] + width > max_lag:
                return np.array(edges, dtype=np.int64)
            edges.append(edges[-1] + width)
        width *= 2


@dataclass(frozen=True)
class MicrotimeBinning:
    """Half-open microtime windows [lo, hi) in ps, ascending and disjoint."""

    intervals: tuple

    def __post_init__(self):
        iv = tuple((float(lo), float(hi)) for lo, hi in self.intervals)
        object.__setattr__(self, "intervals", iv)
        if not iv:
            raise ValueError("at least one microtime window is required")
        prev = -np.inf
        for lo, hi in iv:
            if not hi > lo:
                raise ValueError(f"empty microtime window [{lo}, {hi})")
            if lo < prev:
                raise ValueError("microtime windows must be ascending and non-overlapping")
            prev = hi

    @classmethod
    def contiguous(cls, edges):
        e = list(edges)
        return cls(tuple(zip(e[:-1], e[1:])))

    def __len__(self):
        return len(self.intervals)


def bin_by_microtime(microtime_ps, binning):
    """Index arrays (order preserved) of photons inside each window, plus the dropped count."""
    t = np.asarray(microtime_ps)
    used = np.zeros(t.size, dtype=bool)
    out = []
    for lo, hi in binning.intervals:
        m = (t >= lo) & (t < hi)
        used |= m
        out.append(np.flatnonzero(m))
    return out, int(t.size - used.sum())


@dataclass
class CorrelationCurve:
    """g2 on a lag grid with the raw pair counts and expected (uncorrelated) pairs."""

    lag_edges: np.ndarray  # pulses, K + 1
    pairs: np.ndarray
    expected: np.ndarray
    f_rep_mhz: float

    @property
    def g2(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.expected > 0, self.pairs / self.expected, np.nan)

    @property
    def tau_s(self):
        lo, hi = self.lag_edges[:-1], self.lag_edges[1:]
        return 0.5 * (lo + hi - 1) / (self.f_rep_mhz * 1e6)

    @property
    def lag_bounds_s(self):
        e = self.lag_edges / (self.f_rep_mhz * 1e6)
        return e[:-1], e[1:]

    def __add__(self, other):
        if not np.array_equal(self.lag_edges, other.lag_edges):
            raise ValueError("lag grids differ")
        return CorrelationCurve(self.lag_edges, self.pairs + other.pairs, self.expected + other.expected, self.f_rep_mhz)

    def rebin(self, windows_s):
        """Sum pairs and expectations over lag windows [(lo_s, hi_s), ...].

        A lag bin joins the window containing its centre.
        """
        tau = self.tau_s
        pairs, expected = [], []
        for lo, hi in windows_s:
            m = (tau >= lo) & (tau < hi)
            pairs.append(self.pairs[m].sum())
            expected.append(self.expected[m].sum())
        return RebinnedCurve(np.asarray(windows_s, dtype=float), np.array(pairs), np.array(expected))


@dataclass
class RebinnedCurve:
    windows_s: np.ndarray
    pairs: np.ndarray
    expected: np.ndarray

    @property
    def g2(self):
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.expected > 0, self.pairs / self.expected, np.nan)


@numba.njit(cache=True, nogil=True)
def _cumulative_counts(a, b, edges):
    # C[j] = sum_i #{b < a_i + edges[j]}
    k = edges.size
    ptr = np.zeros(k, dtype=np.int64)
    acc = np.zeros(k, dtype=np.int64)
    nb = b.size
    for i in range(a.size):
        ai = a[i]
        for j in range(k):
            lim = ai + edges[j]
            p = ptr[j]
            while p < nb and b[p] < lim:
                p += 1
            ptr[j] = p
            acc[j] += p
    return acc


@numba.njit(cache=True, nogil=True)
def _pair_walk(a, b, edges):
    k = edges.size - 1
    lo_lag = edges[0]
    hi_lag = edges[k]
    lut = np.empty(hi_lag - lo_lag, dtype=np.int64)
    for j in range(k):
        for lag in range(edges[j], edges[j + 1]):
            lut[lag - lo_lag] = j
    counts = np.zeros(k, dtype=np.int64)
    nb = b.size
    start = 0
    for i in range(a.size):
        first = a[i] + lo_lag
        while start < nb and b[start] < first:
            start += 1
        p = start
        last = a[i] + hi_lag
        while p < nb and b[p] < last:
            counts[lut[b[p] - first]] += 1
            p += 1
    return counts


def _pair_counts(a, b, edges):
    """Exact pair counts per lag bin.

    The walk kernel handles the short-lag bins (cost ~ pairs), the sweep
    kernel the rest (cost ~ bins * photons); the split minimises a simple
    cost model.
    """
    a = np.ascontiguousarray(a, dtype=np.int64)
    b = np.ascontiguousarray(b, dtype=np.int64)
    edges = np.ascontiguousarray(edges, dtype=np.int64)
    k = edges.size - 1
    if a.size == 0 or b.size == 0:
        return np.zeros(k, dtype=np.int64)
    duration = max(int(max(a[-1], b[-1]) - min(a[0], b[0])) + 1, 1)
    density = b.size / duration
    walk_cost = _WALK_NS * a.size * density * (edges - edges[0])
    sweep_cost = _SWEEP_NS * (a.size + b.size) * (k - np.arange(k + 1))
    span_ok = (edges - edges[0]) <= _MAX_WALK_SPAN
    split = int(np.argmin(np.where(span_ok, walk_cost + sweep_cost, np.inf)))
    out = np.empty(k, dtype=np.int64)
    if split > 0:
        out[:split] = _pair_walk(a, b, edges[: split + 1])
    if split < k:
        out[split:] = np.diff(_cumulative_counts(a, b, edges[split:]))
    return out


def expected_pairs(a, b, edges, n_pulses):
    lo = edges[:-1].astype(float)
    hi = edges[1:].astype(float)
    centre = 0.5 * (lo + hi - 1.0)
    n_a = np.searchsorted(a, n_pulses - centre, side="left")
    n_b = b.size - np.searchsorted(b, centre, side="left")
    with np.errstate(invalid="ignore", divide="ignore"):
        e = (hi - lo) * n_a * n_b / (n_pulses - centre)
    return np.where(n_pulses - centre > 0, e, 0.0)


def _check_streams(a, b):
    if len(a) == 0 or len(b) == 0:
        raise DataError("insufficient photons")


def multitau_cross_correlate(a, b, cfg, n_pulses, f_rep_mhz=1.0):
    """Pairs with photon ``a`` first and ``b`` a positive lag later."""
    _check_streams(a, b)
    edges = multitau_edges(cfg, n_pulses)
    return correlate_on_edges(a, b, edges, n_pulses, f_rep_mhz)


def correlate_on_edges(a, b, edges, n_pulses, f_rep_mhz=1.0):
    _check_streams(a, b)
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    edges = np.asarray(edges, dtype=np.int64)
    pairs = _pair_counts(a, b, edges)
    return CorrelationCurve(edges, pairs, expected_pairs(a, b, edges, n_pulses), f_rep_mhz)


def intensity_autocorrelate(a, b, cfg, n_pulses, f_rep_mhz=1.0):
    """Autocorrelation of the summed intensity of both channels."""
    s = np.sort(np.concatenate([np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64)]), kind="stable")
    return multitau_cross_correlate(s, s, cfg, n_pulses, f_rep_mhz)


def brute_force_pair_histogram(a, b, lag_edges, n_pulses, f_rep_mhz=1.0, block=2048):
    """O(N^2) reference: histogram of every difference t_b - t_a."""
    _check_streams(a, b)
    if len(a) > BRUTE_FORCE_LIMIT or len(b) > BRUTE_FORCE_LIMIT:
        raise ValueError(f"brute force limited to {BRUTE_FORCE_LIMIT} photons per stream")
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    edges = np.asarray(lag_edges, dtype=np.int64)
    k = edges.size - 1
    counts = np.zeros(k, dtype=np.int64)
    for s in range(0, a.size, block):
        d = (b[None, :] - a[s : s + block, None]).ravel()
        d = d[(d >= edges[0]) & (d < edges[-1])]
        counts += np.bincount(np.searchsorted(edges, d, side="right") - 1, minlength=k)[:k]
    return CorrelationCurve(edges, counts, expected_pairs(np.sort(a), np.sort(b), edges, n_pulses), f_rep_mhz)


@dataclass
class CellCorrelation:
    """Cross (both channel orders summed) and summed-intensity auto curves of one cell."""

    cross: CorrelationCurve
    auto: CorrelationCurve
    n_photons: int


def correlate_cell(t0, t1, edges, n_pulses, f_rep_mhz):
    t0 = np.asarray(t0, dtype=np.int64)
    t1 = np.asarray(t1, dtype=np.int64)
    if t0.size == 0 or t1.size == 0 or t0.size + t1.size < 2:
        raise DataError("insufficient photons")
    cross = correlate_on_edges(t0, t1, edges, n_pulses, f_rep_mhz) + correlate_on_edges(
        t1, t0, edges, n_pulses, f_rep_mhz
    )
    s = np.sort(np.concatenate([t0, t1]), kind="stable")
    auto = correlate_on_edges(s, s, edges, n_pulses, f_rep_mhz)
    return CellCorrelation(cross, auto, int(s.size))


@dataclass
class CorrelationSet:
    """Correlations per (stage_index, bin_index)."""

    cells: dict
    f_rep_mhz: float
    n_stages: int
    n_bins: int

    def __getitem__(self, key):
        return self.cells[key]


def correlate_records(records, binning, cfg, n_pulses, f_rep_mhz, n_stages, threads=1):
    """Correlate every (stage, microtime bin) cell of routed photon records.

    Cells are independent and run on a thread pool; results are assembled
    in cell order so the output does not depend on ``threads``.
    """
    edges = multitau_edges(cfg, n_pulses)
    stage = records["stage_index"]
    if np.all(stage[1:] >= stage[:-1]):
        bounds = np.searchsorted(stage, np.arange(n_stages + 1))
        groups = [slice(bounds[s], bounds[s + 1]) for s in range(n_stages)]
    else:
        groups = [np.flatnonzero(stage == s) for s in range(n_stages)]
    jobs = []
    for s, g in enumerate(groups):
        micro = records["microtime_ps"][g]
        pulse = records["pulse_index"][g]
        chan = records["channel"][g]
        idx, _ = bin_by_microtime(micro, binning)
        for b, ix in enumerate(idx):
            ch = chan[ix]
            t = pulse[ix].astype(np.int64)
            jobs.append(((s, b), t[ch == 0], t[ch == 1]))

    def run(job):
        key, t0, t1 = job
        return key, correlate_cell(t0, t1, edges, n_pulses, f_rep_mhz)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    return CorrelationSet(dict(results), f_rep_mhz, n_stages, len(binning))

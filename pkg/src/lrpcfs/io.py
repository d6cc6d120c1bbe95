"""PCFS1 photon record files and CSV tables.

File layout (little-endian)::

    magic        5s   b"PCFS1"
    version      u16
    f_rep_mhz    f64
    stage_count  u16
    seed         u64
    dither_amplitude_nm, dither_period_s, acquisition_s   3 x f64
    n_records    u64
    records_crc  u32   CRC32 of the record block
    positions    stage_count x f64
    header_crc   u32   CRC32 of everything above
    records      n_records x 16 bytes (ROUTED_DTYPE)

Records are sorted by (stage_index, pulse_index).
"""

import csv
from dataclasses import dataclass
from pathlib import Path
import struct
import zlib

import numpy as np

from .errors import DataError
from .interferometer import ROUTED_DTYPE, STRIPPED

MAGIC = b"PCFS1"
VERSION = 1
_FIXED = struct.Struct("<5sHdHQdddQI")


@dataclass
class PhotonFile:
    f_rep_mhz: float
    seed: int
    positions_nm: np.ndarray
    dither_amplitude_nm: float
    dither_period_s: float
    acquisition_s: float
    records: np.ndarray

    @property
    def n_pulses(self):
        return int(round(self.acquisition_s * self.f_rep_mhz * 1e6))


def sort_records(records):
    order = np.lexsort((records["pulse_index"], records["stage_index"]))
    return records[order]


def strip_debug(records):
    out = records.copy()
    out["debug_state"] = STRIPPED
    return out


def write_photon_file(path, pf):
    rec = np.ascontiguousarray(pf.records, dtype=ROUTED_DTYPE)
    if rec.size > 1:
        s, p = rec["stage_index"], rec["pulse_index"]
        bad = (s[1:] < s[:-1]) | ((s[1:] == s[:-1]) & (p[1:] < p[:-1]))
        if bad.any():
            raise DataError("records must be sorted by (stage_index, pulse_index)")
    body = rec.tobytes()
    pos = np.asarray(pf.positions_nm, dtype="<f8")
    head = _FIXED.pack(
        MAGIC,
        VERSION,
        pf.f_rep_mhz,
        pos.size,
        int(pf.seed),
        pf.dither_amplitude_nm,
        pf.dither_period_s,
        pf.acquisition_s,
        rec.size,
        zlib.crc32(body),
    ) + pos.tobytes()
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(struct.pack("<I", zlib.crc32(head)))
        fh.write(body)


def read_photon_file(path):
    raw = Path(path).read_bytes()
    if raw[:5] != MAGIC:
        raise DataError(f"{path}: not a PCFS1 file")
    if len(raw) < _FIXED.size:
        raise DataError(f"{path}: truncated header")
    magic, version, f_rep, n_st, seed, amp, period, acq, n_rec, rec_crc = _FIXED.unpack_from(raw)
    if version != VERSION:
        raise DataError(f"{path}: unsupported version {version}")
    end = _FIXED.size + 8 * n_st
    if len(raw) < end + 4:
        raise DataError(f"{path}: truncated header")
    (head_crc,) = struct.unpack_from("<I", raw, end)
    if zlib.crc32(raw[:end]) != head_crc:
        raise DataError(f"{path}: header checksum mismatch")
    body = raw[end + 4 :]
    if len(body) != n_rec * ROUTED_DTYPE.itemsize:
        raise DataError(f"{path}: record block has the wrong length")
    if zlib.crc32(body) != rec_crc:
        raise DataError(f"{path}: record checksum mismatch")
    pos = np.frombuffer(raw, dtype="<f8", count=n_st, offset=_FIXED.size).copy()
    rec = np.frombuffer(body, dtype=ROUTED_DTYPE).copy()
    return PhotonFile(f_rep, seed, pos, amp, period, acq, rec)


# ---------------------------------------------------------------- CSV

CORR_COLUMNS = (
    "stage_index",
    "bin_index",
    "tau_s",
    "lag_lo_s",
    "lag_hi_s",
    "g2_cross",
    "g2_auto",
    "pairs",
    "pairs_auto",
    "expected_cross",
    "expected_auto",
    "n_photons",
)


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_rows(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in r])


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def corr_filename(stage, b):
    return f"corr_s{stage:03d}_b{b:02d}.csv"


def write_correlation_set(out_dir, corr):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for (s, b) in sorted(corr.cells):
        cell = corr.cells[(s, b)]
        c, a = cell.cross, cell.auto
        lo, hi = c.lag_bounds_s
        rows = [
            (s, b, c.tau_s[i], lo[i], hi[i], c.g2[i], a.g2[i], int(c.pairs[i]), int(a.pairs[i]),
             c.expected[i], a.expected[i], cell.n_photons)
            for i in range(c.pairs.size)
        ]
        p = out_dir / corr_filename(s, b)
        write_rows(p, CORR_COLUMNS, rows)
        paths.append(p)
    return paths


def read_correlation_set(paths, f_rep_mhz):
    """Rebuild a CorrelationSet from per-cell CSVs (lag edges recovered from the bounds)."""
    from .correlator import CellCorrelation, CorrelationCurve, CorrelationSet

    cells = {}
    for p in paths:
        rows = read_rows(p)
        if not rows:
            raise DataError(f"{p}: empty correlation table")
        s, b = int(rows[0]["stage_index"]), int(rows[0]["bin_index"])
        lo = np.array([float(r["lag_lo_s"]) for r in rows])
        hi = np.array([float(r["lag_hi_s"]) for r in rows])
        scale = f_rep_mhz * 1e6
        edges = np.concatenate([np.rint(lo * scale), [np.rint(hi[-1] * scale)]]).astype(np.int64)
        col = lambda k, t=float: np.array([t(r[k]) for r in rows])  # noqa: E731
        cross = CorrelationCurve(edges, col("pairs", int), col("expected_cross"), f_rep_mhz)
        auto = CorrelationCurve(edges, col("pairs_auto", int), col("expected_auto"), f_rep_mhz)
        cells[(s, b)] = CellCorrelation(cross, auto, int(rows[0]["n_photons"]))
    n_stages = max(k[0] for k in cells) + 1
    n_bins = max(k[1] for k in cells) + 1
    return CorrelationSet(cells, f_rep_mhz, n_stages, n_bins)


IG_COLUMNS = (
    "stage", "delta_nm", "tau_s", "tau_lo_s", "tau_hi_s", "bin", "G2", "err", "valid",
    "pairs_cross", "pairs_auto", "n_photons",
)


def write_interferogram(path, ig):
    nd, nt, nb = ig.G.shape
    rows = []
    for s in range(nd):
        for t in range(nt):
            lo, hi = ig.tau_windows_s[t]
            for b in range(nb):
                rows.append(
                    (s, ig.delta_nm[s], ig.tau_s[t], lo, hi, b, ig.G[s, t, b], ig.err[s, t, b],
                     int(ig.valid[s, t, b]), ig.pairs_cross[s, t, b], ig.pairs_auto[s, t, b], ig.n_photons[s, b])
                )
    write_rows(path, IG_COLUMNS, rows)


def read_interferogram(path):
    from .pcfs import Interferogram

    rows = read_rows(path)
    if not rows:
        raise DataError(f"{path}: empty interferogram table")
    nd = max(int(r["stage"]) for r in rows) + 1
    nb = max(int(r["bin"]) for r in rows) + 1
    windows = sorted({(float(r["tau_lo_s"]), float(r["tau_hi_s"])) for r in rows})
    t_index = {w: i for i, w in enumerate(windows)}
    nt = len(windows)
    delta = np.zeros(nd)
    arrs = {k: np.zeros((nd, nt, nb)) for k in ("G2", "err", "valid", "pairs_cross", "pairs_auto")}
    nph = np.zeros((nd, nb))
    for r in rows:
        s, b = int(r["stage"]), int(r["bin"])
        t = t_index[(float(r["tau_lo_s"]), float(r["tau_hi_s"]))]
        delta[s] = float(r["delta_nm"])
        for k in arrs:
            arrs[k][s, t, b] = float(r[k])
        nph[s, b] = float(r["n_photons"])
    return Interferogram(
        delta, np.array(windows), arrs["G2"], arrs["err"], arrs["valid"].astype(bool),
        arrs["pairs_cross"], arrs["pairs_auto"], nph,
    )


def write_spectral(path, spec):
    nz, nt, nb = spec.p.shape
    rows = []
    for t in range(nt):
        for b in range(nb):
            for z in range(nz):
                rows.append((spec.zeta_ueV[z], spec.tau_s[t], b, spec.p[z, t, b], spec.err[z, t, b]))
    write_rows(path, ("zeta_ueV", "tau_s", "bin", "p", "err"), rows)


def write_fwhm(path, fm):
    nt, nb = fm.fwhm_ueV.shape
    rows = [
        (fm.tau_s[t], b, fm.fwhm_ueV[t, b], int(fm.multi_peak[t, b])) for t in range(nt) for b in range(nb)
    ]
    write_rows(path, ("tau_s", "bin", "fwhm_ueV", "multi_peak"), rows)


def write_fit_report(path, result, truth=None):
    truth = truth or {}
    rows = [
        (n, truth.get(n, ""), v, e, result.chi2_dof)
        for n, v, e in zip(result.names, result.values, result.stderr)
    ]
    write_rows(path, ("parameter", "truth", "estimate", "stderr", "chi2_dof"), rows)


def write_fluctuation(path, curves):
    rows = []
    for b, f in sorted(curves.items()):
        if isinstance(f, str):
            continue
        for t in range(f.tau_s.size):
            rows.append((b, f.tau_s[t], f.C[t], f.C_err[t], f.tau_c_s, f.tau_c_err_s))
    write_rows(path, ("bin", "tau_s", "C", "C_err", "tau_c_s", "tau_c_err_s"), rows)


def write_lifetime_histogram(path, counts, edges):
    rows = [(edges[i], edges[i + 1], int(counts[i])) for i in range(len(counts))]
    write_rows(path, ("lo_ps", "hi_ps", "counts"), rows)


def read_lifetime_histogram(path):
    rows = read_rows(path)
    if not rows:
        raise DataError(f"{path}: empty lifetime histogram")
    lo = [float(r["lo_ps"]) for r in rows]
    edges = np.array(lo + [float(rows[-1]["hi_ps"])])
    return np.array([int(r["counts"]) for r in rows]), edges


def write_lifetime_fit(path, fit):
    rows = [
        (i, fit.amplitudes[i], fit.amplitude_err[i], fit.lifetimes_ps[i], fit.lifetime_err_ps[i], fit.chi2_dof)
        for i in range(fit.n)
    ]
    write_rows(path, ("component", "amplitude", "amplitude_err", "t1_ps", "t1_err_ps", "chi2_dof"), rows)

"""Command-line entry point: ``lrpcfs {simulate,correlate,analyze,fit,pipeline}``.

Exit codes: 0 ok, 2 configuration error, 3 data error, 4 fit failure.
"""

import argparse
import dataclasses
import logging
from pathlib import Path
import sys

from . import io, pipeline
from .config import dump_config, load_config
from .errors import ConfigError, DataError, FitError
from .pcfs import spectral_correlation

log = logging.getLogger("lrpcfs")

PHOTONS = "photons.pcfs"
CORR_DIR = "corr"


def _config(args):
    cfg = load_config(args.config) if args.config else pipeline_default()
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be >= 0")
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def pipeline_default():
    from .scenarios import static_doublet

    return static_doublet()


def cmd_simulate(cfg, out, threads):
    pf = pipeline.simulate(cfg, threads=threads)
    io.write_photon_file(out / PHOTONS, pf)
    dump_config(cfg, out / "config.yaml")
    log.info("simulate: %d photons over %d stages -> %s", pf.records.size, len(pf.positions_nm), out / PHOTONS)
    return pf


def cmd_correlate(cfg, out, threads, photons=None):
    pf = io.read_photon_file(photons or out / PHOTONS)
    corr = pipeline.correlate(pf, cfg, threads=threads)
    paths = io.write_correlation_set(out / CORR_DIR, corr)
    a = cfg.analysis
    counts, edges = pipeline.lifetime_histogram(pf.records, a.lifetime_bin_ps, a.lifetime_max_ps)
    io.write_lifetime_histogram(out / "lifetime.csv", counts, edges)
    log.info("correlate: %d cells -> %s", len(paths), out / CORR_DIR)
    return corr


def cmd_analyze(cfg, out):
    paths = sorted((out / CORR_DIR).glob("corr_s*_b*.csv"))
    if not paths:
        raise DataError(f"no correlation tables in {out / CORR_DIR}")
    corr = io.read_correlation_set(paths, cfg.emitter.f_rep_mhz)
    an = pipeline.analyze(corr, cfg)
    io.write_interferogram(out / "interferogram.csv", an.interferogram)
    io.write_spectral(out / "spectral.csv", an.spectral)
    io.write_fwhm(out / "fwhm.csv", an.fwhm)
    io.write_fluctuation(out / "fluctuation.csv", an.fluctuation)
    io.write_interferogram(out / "slice_interferogram.csv", an.slice_interferogram)
    io.write_spectral(out / "slice_spectral.csv", an.slice_spectral)
    for b, f in an.fluctuation.items():
        if isinstance(f, str):
            log.info("analyze: bin %d: %s", b, f)
        else:
            log.info("analyze: bin %d: tau_c = %.4g +- %.2g s", b, f.tau_c_s, f.tau_c_err_s)
    return an


def cmd_fit(cfg, out):
    ig = io.read_interferogram(out / "slice_interferogram.csv")
    a = cfg.analysis
    spec = spectral_correlation(ig, n_zeta=a.n_zeta, zeta_max_ueV=a.zeta_max_ueV)
    counts, edges = io.read_lifetime_histogram(out / "lifetime.csv")
    life, res = pipeline.fit(spec, cfg, counts, edges)
    io.write_lifetime_fit(out / "lifetime_fit.csv", life)
    if res is not None:
        io.write_fit_report(out / "fit_report.csv", res, pipeline.truth_table(cfg))
        for flag in res.flags:
            log.warning("fit: %s", flag)
        for n, (v, e) in res.as_dict().items():
            log.info("fit: %s = %.5g +- %.2g", n, v, e)
        log.info("fit: chi2/dof = %.3f", res.chi2_dof)
    elif a.fit_model == "lorentzian":
        chi2, dof = pipeline.lorentzian_chi2(spec, pipeline.truth_table(cfg)["gamma_a"])
        log.info("fit: single Lorentzian chi2/dof = %.3f (dof %d)", chi2 / dof, dof)
    return life, res


def build_parser():
    p = argparse.ArgumentParser(prog="lrpcfs", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("simulate", "correlate", "analyze", "fit", "pipeline"):
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, help="YAML run configuration")
        s.add_argument("--seed", type=int, help="override the configured seed")
        s.add_argument("--threads", type=int, default=1)
        s.add_argument("--out", type=Path, default=Path("out"))
        if name == "correlate":
            s.add_argument("--input", type=Path, help="photon file (default OUT/photons.pcfs)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = _config(args)
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        if args.command in ("simulate", "pipeline"):
            cmd_simulate(cfg, out, args.threads)
        if args.command in ("correlate", "pipeline"):
            cmd_correlate(cfg, out, args.threads, getattr(args, "input", None))
        if args.command in ("analyze", "pipeline"):
            cmd_analyze(cfg, out)
        if args.command in ("fit", "pipeline"):
            cmd_fit(cfg, out)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return 2
    except (DataError, FileNotFoundError) as exc:
        log.error("data error: %s", exc)
        return 3
    except FitError as exc:
        log.error("fit error: %s", exc)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Repeat the static-doublet fit over many seeds and report pull statistics.

Used to check whether the quoted standard errors are calibrated:

    python scripts/seed_study.py 0 48 --save pulls.npy
"""

import argparse

import numpy as np

from lrpcfs import pipeline, scenarios


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("start", type=int)
    p.add_argument("stop", type=int)
    p.add_argument("--count-rate", type=float, default=1.1e4)
    p.add_argument("--save")
    args = p.parse_args(argv)

    rows = []
    for seed in range(args.start, args.stop):
        cfg = scenarios.static_doublet(seed=seed, count_rate=args.count_rate)
        pf = pipeline.simulate(cfg)
        an = pipeline.analyze(pipeline.correlate(pf, cfg), cfg)
        a = cfg.analysis
        counts, edges = pipeline.lifetime_histogram(pf.records, a.lifetime_bin_ps, a.lifetime_max_ps)
        _, res = pipeline.fit(an.slice_spectral, cfg, counts, edges)
        truth = pipeline.truth_table(cfg)
        pulls = [(v - truth[n]) / e for n, (v, e) in res.as_dict().items() if n in truth]
        rows.append(pulls)
        print(seed, " ".join(f"{x:+.2f}" for x in pulls), f"chi2/dof {res.chi2_dof:.3f}", flush=True)
    z = np.array(rows)
    print("mean pull", np.round(z.mean(0), 2))
    print("rms pull ", np.round(np.sqrt((z**2).mean(0)), 2))
    print("|z| < 2  ", np.round((np.abs(z) < 2).mean(0), 3))
    if args.save:
        np.save(args.save, z)


if __name__ == "__main__":
    main()

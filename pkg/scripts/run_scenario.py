"""Run one preset scenario end to end and print the fitted parameters next to the truth.

    python scripts/run_scenario.py static_doublet --out out/doublet --seed 3
"""

import argparse
from pathlib import Path
import sys

from lrpcfs import cli, scenarios
from lrpcfs.config import dump_config

PRESETS = {
    "static_line": scenarios.static_line,
    "static_doublet": scenarios.static_doublet,
    "single_gjm": scenarios.single_gjm,
    "uncoupled_doublet": scenarios.uncoupled_doublet,
    "coupled_doublet": scenarios.coupled_doublet,
}


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("scenario", choices=sorted(PRESETS))
    p.add_argument("--out", type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--acquisition-s", type=float, help="shorten the per-stage acquisition")
    p.add_argument("--threads", type=int, default=1)
    args = p.parse_args(argv)

    kw = {"seed": args.seed}
    if args.acquisition_s is not None:
        kw["acquisition_s"] = args.acquisition_s
    cfg = PRESETS[args.scenario](**kw)
    out = args.out or Path("out") / args.scenario
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / "run.yaml")
    return cli.main(["pipeline", "--config", str(out / "run.yaml"), "--out", str(out), "--threads", str(args.threads)])


if __name__ == "__main__":
    sys.exit(main())

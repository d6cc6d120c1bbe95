"""Regenerate configs/*.yaml from the preset constructors."""

from pathlib import Path

from lrpcfs import scenarios
from lrpcfs.config import dump_config

NAMES = ("static_line", "static_doublet", "single_gjm", "uncoupled_doublet", "coupled_doublet")

if __name__ == "__main__":
    root = Path(__file__).resolve().parent.parent / "configs"
    root.mkdir(exist_ok=True)
    for name in NAMES:
        dump_config(getattr(scenarios, name)(), root / f"{name}.yaml")
        print(root / f"{name}.yaml")

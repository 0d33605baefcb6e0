#!/usr/bin/env python3
"""Run every shipped scenario through the CLI and check each bundle."""

import argparse
import sys
from pathlib import Path

from formnet.cli import main as formnet

ROOT = Path(__file__).resolve().parents[1]


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="runs")
    args = p.parse_args(argv)
    out = Path(args.out)
    failures = 0
    for path in sorted((ROOT / "scenarios").glob("*.json")):
        print(f"== {path.stem}")
        formnet(["rigidity", "--scenario", str(path)])
        dest = out / path.stem
        if path.stem == "strategy-compare":
            code = formnet(["compare", "--scenario", str(path), "--out", str(dest)])
            bundles = sorted(p for p in dest.iterdir() if p.is_dir())
        else:
            code = formnet(["simulate", "--scenario", str(path), "--out", str(dest)])
            bundles = [dest]
        failures += code != 0
        failures += sum(formnet(["validate", "--out", str(b)]) != 0 for b in bundles)
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())

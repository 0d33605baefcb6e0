#!/usr/bin/env python3
"""Formation and estimation quality against Bernoulli drop probability."""

import argparse
import csv
import dataclasses
import sys
from pathlib import Path

import numpy as np

from formnet.io import load_scenario
from formnet.loss import LossModel
from formnet.sim import compare_strategies

ROOT = Path(__file__).resolve().parents[1]


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scenario", default=str(ROOT / "scenarios" / "bernoulli-sweep.json"))
    p.add_argument("--probs", type=float, nargs="+", default=[0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--strategies", nargs="+", default=["zero", "hold", "combination:0.5"])
    p.add_argument("--out", default="drop_sweep.csv")
    args = p.parse_args(argv)

    base, _ = load_scenario(args.scenario)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["p", "strategy", "mean_formation_error", "mean_cov_trace", "mean_disconnects"])
        for prob in args.probs:
            acc = {s: [] for s in args.strategies}
            for seed in range(args.seeds):
                sc = dataclasses.replace(base, loss=LossModel("bernoulli", p=prob), seed=seed)
                rep = compare_strategies(sc, args.strategies)
                for row in rep.rows:
                    acc[row["strategy"]].append(
                        (row["mean_formation_error"], row["mean_cov_trace"], row["disconnect_count"])
                    )
            for s, vals in acc.items():
                fe, ct, dc = np.mean(vals, axis=0)
                w.writerow([prob, s, repr(float(fe)), repr(float(ct)), repr(float(dc))])
                print(f"p={prob:<4} {s:<16} formation error {fe:.4f}  cov trace {ct:.6f}  disconnects {dc:.1f}")
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())

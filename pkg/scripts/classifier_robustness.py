"""Classifier verdicts on the canonical curves under noise and downsampling."""

import argparse
from collections import Counter

import numpy as np

from hermflow import synthetic
from hermflow.singularity import classify


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, default=200)
    p.add_argument("--noise", type=float, nargs="+", default=[0.0, 0.05, 0.1, 0.2])
    args = p.parse_args()
    for kind in ("I", "IIa", "IIb", "III"):
        for noise in args.noise:
            for step in (1, 2, 4):
                votes = Counter()
                for seed in range(args.seeds if noise else 1):
                    t, f, T = synthetic.canonical_curve(kind, noise=noise,
                                                        rng=np.random.default_rng(seed))
                    votes[classify(t[::step], f[::step], T).type] += 1
                total = sum(votes.values())
                print(f"{kind:4s} noise {noise:4.2f} step {step}: "
                      f"{votes[kind] / total:6.1%} correct  {dict(votes)}")


if __name__ == "__main__":
    main()

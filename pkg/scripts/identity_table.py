"""Identity suite across presets and grid resolutions.

TM1 needs ``N >= 48`` before the identities that involve ``g^{-1}`` reach
their tolerances, because ``1 / (1 + eps sin x)`` is not band limited.
"""

import argparse
import time

from hermflow import presets
from hermflow.checks import run_checks
from hermflow.domain import TorusDomain


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--grids", type=int, nargs="+", default=[16, 32, 48])
    args = p.parse_args()
    cases = [("iwasawa-balanced", lambda N: presets.iwasawa_balanced(1.0, 2.0))]
    for name in ("flat", "tm1", "kahler", "balanced_torus"):
        cases.append((name, lambda N, name=name: getattr(presets, name)(TorusDomain(2, N))))
    for name, build in cases:
        for N in ([None] if name == "iwasawa-balanced" else args.grids):
            t0 = time.perf_counter()
            res = run_checks(build(N), geodesics=False)
            bad = [r for r in res if r.verdict == "fail"]
            skip = sum(r.verdict == "skip" for r in res)
            label = name if N is None else f"{name} N={N}"
            print(f"{label:24s} fail {len(bad):2d}  skip {skip}  ({time.perf_counter() - t0:.2f} s)")
            for r in bad:
                print("    " + r.line())


if __name__ == "__main__":
    main()

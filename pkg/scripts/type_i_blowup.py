"""Manufactured Type I singularity: ``g(t) = (1 - t) g_0`` on the Iwasawa nilmanifold.

Writes a run directory, classifies it and performs the blow-up through the
command line, exactly as for a computed run.
"""

import argparse
import sys
from pathlib import Path

from hermflow import presets, synthetic
from hermflow.cli import main as cli


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("out", type=Path, help="run directory to create")
    p.add_argument("--count", type=int, default=64)
    args = p.parse_args()
    base = presets.iwasawa_balanced(1.0, 2.0)
    synthetic.write_type_i_run(args.out, base, horizon=1.0, count=args.count)
    code = cli(["classify", str(args.out / "run.csv"), "--horizon", "1"])
    code = code or cli(["blowup", str(args.out)])
    print(f"curves and rescaled snapshots in {args.out / 'blowup'}")
    return code


if __name__ == "__main__":
    sys.exit(main())

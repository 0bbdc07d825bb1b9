"""Command line: ``hermflow run | check-identities | classify | blowup``.

Exit status: 0 success, 1 failed check (or nothing to analyse), 2 usage or
input error, 3 singular event during a run.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import runlog
from .checks import exit_status, run_checks
from .singularity import (TYPES, BlowupError, ClassificationError, ClassifyThresholds, classify,
                          select_blowup)
from .snapshot import SnapshotError, load_state, save_state

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_SINGULAR = 0, 1, 2, 3
OUT_ENV = "HERMFLOW_OUT"


def _out_root(arg):
    return Path(arg or os.environ.get(OUT_ENV) or "runs")


def _horizon(text):
    if text is None:
        return None
    if text.lower() in ("inf", "infinite", "none"):
        return np.inf
    try:
        return float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"horizon must be a number or 'inf', got {text!r}") from exc


def _err(msg):
    print(f"error: {msg}", file=sys.stderr)


# --------------------------------------------------------------------------
# run
# --------------------------------------------------------------------------

_OVERRIDES = {
    "backend": ("backend", "kind"), "n": ("backend", "n"), "N": ("backend", "N"),
    "preset": ("metric", "preset"), "eps": ("metric", "eps"), "a": ("metric", "a"),
    "b": ("metric", "b"), "metric_file": ("metric", "file"),
    "formulation": ("formulation",), "dt": ("dt",), "t_max": ("t_max",), "c_safe": ("c_safe",),
    "snapshot_stride": ("snapshot_stride",), "log_every": ("log_every",), "seed": ("seed",),
    "name": ("name",),
}


def build_config(args) -> cfgmod.RunConfig:
    data = {"schema_version": cfgmod.SCHEMA_VERSION}
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise cfgmod.ConfigError(f"cannot read config {args.config}: {exc}") from exc
    for key, path in _OVERRIDES.items():
        val = getattr(args, key, None)
        if val is None:
            continue
        node = data
        for part in path[:-1]:
            node = node.setdefault(part, {})
        node[path[-1]] = val
    if getattr(args, "no_identities", False):
        data.setdefault("diagnostics", {})["identities"] = False
    return cfgmod.from_dict(data)


def cmd_run(args) -> int:
    try:
        cfg = build_config(args)
    except cfgmod.ConfigError as exc:
        _err(f"config: {exc}")
        return EXIT_USAGE
    name = cfg.name or f"run-{cfg.digest()[:12]}"
    directory = _out_root(args.out) / name
    try:
        result = runlog.run(cfg, directory)
    except (SnapshotError, ValueError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    print(f"run directory: {directory}")
    print(f"rows: {len(result.rows)}  snapshots: {len(result.snapshots)}")
    if result.singular:
        print(f"singular event: {result.event['message']} (last t = {result.event['t_last']})")
        return EXIT_SINGULAR
    return EXIT_OK


# --------------------------------------------------------------------------
# check-identities
# --------------------------------------------------------------------------

def cmd_check(args) -> int:
    try:
        if args.snapshot:
            state, _ = load_state(args.snapshot)
        else:
            cfg = cfgmod.load(args.config)
            state = cfgmod.initial_state(cfg)
    except (SnapshotError, cfgmod.ConfigError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    results = run_checks(state, seed=args.seed, geodesics=not args.no_geodesics)
    for r in results:
        print(json.dumps(r.as_dict()) if args.json else r.line())
    return exit_status(results)


# --------------------------------------------------------------------------
# classify
# --------------------------------------------------------------------------

def _thresholds(args):
    return ClassifyThresholds(slope_tol=args.slope_tol, rms_tol=args.rms_tol)


def cmd_classify(args) -> int:
    try:
        series = runlog.read_csv(args.csv)
        verdict = classify(series["t"], series["f"], args.horizon, _thresholds(args))
    except (runlog.RunLogError, ClassificationError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    label = "sup (T-t) f" if np.isfinite(verdict.horizon) else "sup t f"
    print(f"Type {verdict.type}" if verdict.type != "inconclusive" else "inconclusive")
    print(f"{label} = {verdict.sup_product:.6g}; tail slope {verdict.slope:.4f} "
          f"(+/- {verdict.slope_stderr:.1e}), last-eighth slope {verdict.slope_eighth:.4f}")
    print(json.dumps(verdict.as_dict()))
    return EXIT_OK


# --------------------------------------------------------------------------
# blowup
# --------------------------------------------------------------------------

PLOT_TEMPLATE = '''"""Plot a blow-up analysis (generated; run with matplotlib installed)."""
import csv
import json
from pathlib import Path

import matplotlib.pyplot as plt

here = Path(__file__).parent
manifest = json.loads((here / "manifest.json").read_text())


def read(name):
    with open(here / name) as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    head, body = rows[0], rows[1:]
    return {{k: [float(r[i]) for r in body] for i, k in enumerate(head)}}


series = read("series.csv")
curves = read("curves.csv")
fig, ax = plt.subplots(1, 3, figsize=(14, 4))
ax[0].semilogy(series["t"], series["f"])
ax[0].set_xlabel("t")
ax[0].set_ylabel("f(t)")
ax[1].plot(series["t"], series["product"])
ax[1].set_xlabel("t")
ax[1].set_ylabel("{product_label}")
for j in sorted(set(curves["j"])):
    idx = [i for i, v in enumerate(curves["j"]) if v == j]
    s = [curves["s"][i] for i in idx]
    ax[2].plot(s, [curves["f_rescaled"][i] for i in idx], label=f"j = {{int(j)}}")
    ax[2].plot(s, [curves["bound"][i] for i in idx], "k--", lw=0.8)
ax[2].set_xlabel("s")
ax[2].set_ylabel("rescaled f and predicted bound")
ax[2].legend()
fig.suptitle(f"Type {{manifest['type']}}")
fig.tight_layout()
fig.savefig(here / "blowup.png", dpi=120)
'''


def write_blowup(directory, seq, series) -> Path:
    out = Path(directory) / "blowup"
    out.mkdir(parents=True, exist_ok=True)
    t, f = series["t"], series["f"]
    finite = np.isfinite(seq.horizon)
    product = (seq.horizon - t) * f if finite else t * f
    _write_plain_csv(out / "series.csv", {"t": t, "f": f, "product": product})
    cj, cs, cf, cb = [], [], [], []
    for m, (s, fr, b) in zip(seq.members, seq.rescaled_curves(t, f)):
        ok = np.isfinite(b)
        cj += [m.j] * int(ok.sum())
        cs += list(s[ok])
        cf += list(fr[ok])
        cb += list(b[ok])
    _write_plain_csv(out / "curves.csv", {"j": cj, "s": cs, "f_rescaled": cf, "bound": cb})
    members = []
    for m in seq.members:
        name = f"rescaled_{m.j:03d}.hfs"
        save_state(out / name, m.state, {"j": m.j, "t_j": m.t_j, "C_j": m.C_j})
        members.append({**m.as_dict(), "file": name})
    manifest = {"type": seq.type, "horizon": "inf" if not finite else seq.horizon,
                "members": members}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    label = "(T - t) f(t)" if finite else "t f(t)"
    (out / "plot_blowup.py").write_text(PLOT_TEMPLATE.format(product_label=label))
    return out


def _write_plain_csv(path, cols):
    keys = list(cols)
    with open(path, "w") as fh:
        fh.write(",".join(keys) + "\n")
        for vals in zip(*(cols[k] for k in keys)):
            fh.write(",".join("%.17g" % v for v in vals) + "\n")


def cmd_blowup(args) -> int:
    try:
        manifest, series, states = runlog.load_run(args.run_dir)
    except (runlog.RunLogError, SnapshotError) as exc:
        _err(str(exc))
        return EXIT_USAGE
    if np.max(series["f"], initial=0.0) <= 0:
        _err("no singularity detected: f vanishes along the run")
        return EXIT_FAIL
    horizon = args.horizon
    if horizon is None:
        horizon = manifest.get("horizon", "inf")
        horizon = np.inf if horizon in ("inf", None) else float(horizon)
    kind = args.type
    if kind is None:
        try:
            verdict = classify(series["t"], series["f"], horizon, _thresholds(args))
        except ClassificationError as exc:
            _err(f"cannot classify the run: {exc}")
            return EXIT_USAGE
        if verdict.type == "inconclusive":
            _err(f"classification inconclusive ({verdict.reason}); pass --type to override")
            return EXIT_FAIL
        kind = verdict.type
    try:
        seq = select_blowup(series["t"], series["f"], states, kind, horizon, count=args.count)
    except BlowupError as exc:
        _err(str(exc))
        return EXIT_FAIL
    out = write_blowup(args.run_dir, seq, series)
    print(f"Type {kind}: {len(seq.members)} rescaled states written to {out}")
    for m in seq.members:
        print(f"  j={m.j} t_j={m.t_j:.6g} C_j={m.C_j:.6g}")
    return EXIT_OK


# --------------------------------------------------------------------------

def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hermflow", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="integrate the flow and write a run directory")
    r.add_argument("config", nargs="?", help="JSON run configuration")
    r.add_argument("--out", help=f"output root (default ${OUT_ENV} or ./runs)")
    r.add_argument("--name")
    r.add_argument("--backend", choices=("torus", "homogeneous"))
    r.add_argument("--n", type=int)
    r.add_argument("--N", type=int)
    r.add_argument("--preset")
    r.add_argument("--eps", type=float)
    r.add_argument("--a", type=float)
    r.add_argument("--b", type=float)
    r.add_argument("--metric-file", dest="metric_file")
    r.add_argument("--formulation", choices=cfgmod.FORMULATIONS)
    r.add_argument("--dt", type=float)
    r.add_argument("--t-max", dest="t_max", type=float)
    r.add_argument("--c-safe", dest="c_safe", type=float)
    r.add_argument("--snapshot-stride", dest="snapshot_stride", type=int)
    r.add_argument("--log-every", dest="log_every", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--no-identities", dest="no_identities", action="store_true")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("check-identities", help="evaluate the identity suite on one state")
    src = c.add_mutually_exclusive_group(required=True)
    src.add_argument("--config")
    src.add_argument("--snapshot")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--json", action="store_true")
    c.add_argument("--no-geodesics", dest="no_geodesics", action="store_true")
    c.set_defaults(func=cmd_check)

    for name, func, helptext in (("classify", cmd_classify, "classify the singularity of a run log"),
                                 ("blowup", cmd_blowup, "rescale a run around its singularity")):
        s = sub.add_parser(name, help=helptext)
        if name == "classify":
            s.add_argument("csv")
            s.add_argument("--horizon", type=_horizon, default=np.inf,
                           help="maximal time T, or 'inf' (default)")
        else:
            s.add_argument("run_dir")
            s.add_argument("--horizon", type=_horizon, default=None)
            s.add_argument("--type", choices=TYPES)
            s.add_argument("--count", type=int, default=4)
        s.add_argument("--slope-tol", dest="slope_tol", type=float, default=0.05)
        s.add_argument("--rms-tol", dest="rms_tol", type=float, default=0.15)
        s.set_defaults(func=func)
    return p


def main(argv=None) -> int:
    p = parser()
    try:
        args = p.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

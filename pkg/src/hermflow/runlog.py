"""Run directories: diagnostic CSV, snapshots and manifest."""

from __future__ import annotations

import json
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .fields import SingularMetricError
from .flow import FlowError, FlowState, balanced_residual, identity_residuals, rhs_laplacian
from .flow import rhs_ricci_form, step
from .singularity import curvature_functional
from .snapshot import load_state, save_state

COLUMNS = {
    "t": "flow time",
    "f": "sup F with F = sqrt(|Rm|^2 + |nabla T|^2 + |T|^4) (Chern, complex-index norms)",
    "f_sq": "sup F^2",
    "sup_rm": "sup |Rm|",
    "sup_dt": "sup |nabla T|",
    "sup_t2": "sup |T|^2",
    "balanced_residual": "sup |d(|Omega| omega^{n-1})|",
    "balanced_residual_sq": "sup |d(|Omega|^2 omega^{n-1})|",
    "min_log_omega2": "min log |Omega|^2",
    "max_log_omega2": "max log |Omega|^2",
    "res_dilaton": "sup |d/dt log|Omega|^2 - Laplacian log|Omega|^2 - |T|^2/2|",
    "res_torsion": "sup |d/dt T + del del-dagger T|",
    "res_scalar": "sup |scalar curvature - Laplacian log|Omega|^2|",
    "rhs_gap": "sup |rhs_ricci - rhs_laplacian|",
}
SCHEMA_TAG = "hermflow-runlog v1"
CSV_NAME = "run.csv"
MANIFEST_NAME = "manifest.json"
SNAPSHOT_DIR = "snapshots"


def columns_for(formulation: str, identities: bool = True) -> list:
    cols = list(COLUMNS)
    cols.remove("rhs_gap")
    if not identities:
        cols = [c for c in cols if not c.startswith("res_")]
    if formulation == "both":
        cols.append("rhs_gap")
    return cols


def schema_line(cols) -> str:
    return "# " + SCHEMA_TAG + "; " + "; ".join(f"{c}: {COLUMNS[c]}" for c in cols)


def format_row(values) -> str:
    return ",".join("%.17g" % v for v in values)


def diagnostics(state: FlowState, refine: bool = False) -> dict:
    cf = curvature_functional(state, refine)
    L = state.log_omega_sq
    dom = state.domain
    return {"t": state.t, "f": cf.f, "f_sq": cf.f_sq, "sup_rm": cf.sup_rm, "sup_dt": cf.sup_dt,
            "sup_t2": cf.sup_t2,
            "balanced_residual": balanced_residual(state, 1, refine),
            "balanced_residual_sq": balanced_residual(state, 2, refine),
            "min_log_omega2": -dom.sup(-L, refine)[0], "max_log_omega2": dom.sup(L, refine)[0]}


def rhs_gap(state: FlowState) -> float:
    return float(np.max(np.abs(rhs_ricci_form(state) - rhs_laplacian(state))))


@dataclass
class RunResult:
    directory: Path
    rows: list
    event: dict = None
    snapshots: list = field(default_factory=list)

    @property
    def singular(self) -> bool:
        return self.event is not None


def write_run(directory, cfg_dict: dict, states_iter, cols, refine=False, identities=True,
              gap=False, log_every=1, snapshot_stride=1, digest="", extra=None) -> RunResult:
    """Drive ``states_iter`` (yielding successive states, possibly raising FlowError) into a run directory.

    Rows are written for every ``log_every``-th state and the last one.
    Identity residuals use a three-point stencil on consecutive states.
    """
    directory = Path(directory)
    (directory / SNAPSHOT_DIR).mkdir(parents=True, exist_ok=True)
    start = time.time()
    rows = {}
    snaps = []
    window = deque(maxlen=3)
    event = None
    last = None

    def snapshot(i, st):
        name = f"{SNAPSHOT_DIR}/snap_{i:06d}.hfs"
        save_state(directory / name, st, {"step": i})
        snaps.append({"file": name, "step": i, "t": st.t})

    def row(st, stencil=None, center=None):
        rec = diagnostics(st, refine)
        if identities:
            rec.update(identity_residuals(stencil, center).as_dict())
        if gap:
            rec["rhs_gap"] = rhs_gap(st)
        if not all(np.isfinite(v) for v in rec.values()):
            raise FlowError(f"non-finite diagnostics at t = {st.t}")
        return rec

    def emit_pending(i):
        # index i is the newest state in the window
        states = list(window)
        if i == 2:
            rows[0] = row(states[0], states, 0)
        if i >= 2 and (i - 1) % log_every == 0:
            rows[i - 1] = row(states[1], states, 1)

    try:
        for i, st in enumerate(states_iter):
            window.append(st)
            last = (i, st)
            if i % snapshot_stride == 0:
                snapshot(i, st)
            if identities:
                if len(window) == 3:
                    emit_pending(i)
            elif i % log_every == 0:
                rows[i] = row(st)
    except (FlowError, SingularMetricError) as exc:
        event = {"kind": "singular", "message": str(exc),
                 "t_last": last[1].t if last else None}
    if last is not None:
        i, st = last
        if not snaps or snaps[-1]["step"] != i:
            snapshot(i, st)
        if i not in rows:
            try:
                if identities:
                    if len(window) == 3:
                        rows[i] = row(st, list(window), 2)
                else:
                    rows[i] = row(st)
            except FlowError as exc:
                event = event or {"kind": "singular", "message": str(exc), "t_last": st.t}
    ordered = [rows[k] for k in sorted(rows)]
    with open(directory / CSV_NAME, "w") as fh:
        fh.write(schema_line(cols) + "\n")
        fh.write(",".join(cols) + "\n")
        for rec in ordered:
            fh.write(format_row(rec[c] for c in cols) + "\n")
    manifest = {"code_version": __version__, "config": cfg_dict, "config_hash": digest,
                "wall_time": time.time() - start, "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
                "columns": cols, "rows": len(ordered), "snapshots": snaps, "event": event}
    manifest.update(extra or {})
    (directory / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return RunResult(directory, ordered, event, snaps)


def flow_states(state: FlowState, dt: float, nsteps: int, formulation: str, c_safe=None):
    yield state
    form = "ricci" if formulation == "both" else formulation
    for _ in range(nsteps):
        state = step(state, dt, form, c_safe)
        yield state


def run(cfg, directory) -> RunResult:
    """Execute the flow described by ``cfg`` into ``directory``."""
    from .config import initial_state

    st = initial_state(cfg)
    cols = columns_for(cfg.formulation, cfg.diagnostics.identities)
    states = flow_states(st, cfg.dt_value, cfg.nsteps, cfg.formulation, cfg.c_safe)
    return write_run(directory, cfg.to_dict(), states, cols, refine=cfg.diagnostics.refine,
                     identities=cfg.diagnostics.identities, gap=cfg.formulation == "both",
                     log_every=cfg.log_every_value, snapshot_stride=cfg.snapshot_stride_value,
                     digest=cfg.digest())


class RunLogError(ValueError):
    """Run log or run directory does not match the expected schema."""


def read_csv(path) -> dict:
    """Columns of a run log as float arrays."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise RunLogError(f"cannot read {path}: {exc}") from exc
    body = [ln for ln in lines if ln and not ln.startswith("#")]
    if not body:
        raise RunLogError("empty run log")
    header = body[0].split(",")
    if "t" not in header or "f" not in header:
        raise RunLogError(f"schema mismatch: columns {header} lack 't' and 'f'")
    unknown = [c for c in header if c not in COLUMNS]
    if unknown:
        raise RunLogError(f"schema mismatch: unknown columns {unknown}")
    try:
        data = np.array([[float(v) for v in ln.split(",")] for ln in body[1:]], dtype=float)
    except ValueError as exc:
        raise RunLogError(f"malformed row: {exc}") from exc
    data = data.reshape(-1, len(header))
    return {c: data[:, i] for i, c in enumerate(header)}


def write_csv(path, series: dict):
    cols = list(series)
    with open(path, "w") as fh:
        fh.write(schema_line(cols) + "\n")
        fh.write(",".join(cols) + "\n")
        for vals in zip(*(series[c] for c in cols)):
            fh.write(format_row(vals) + "\n")


def load_run(directory):
    """``(manifest, series, snapshot states)`` of a run directory (states share one domain)."""
    directory = Path(directory)
    try:
        manifest = json.loads((directory / MANIFEST_NAME).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise RunLogError(f"cannot read manifest in {directory}: {exc}") from exc
    series = read_csv(directory / CSV_NAME)
    states = []
    dom = None
    for entry in manifest.get("snapshots", []):
        st, _ = load_state(directory / entry["file"], dom)
        dom = st.domain
        states.append(st)
    return manifest, series, states

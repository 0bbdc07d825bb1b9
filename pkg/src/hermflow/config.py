"""Run configuration: versioned JSON with strict keys."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
TORUS_PRESETS = ("flat", "tm1", "kahler", "balanced-torus")
HOMOGENEOUS_PRESETS = ("iwasawa-balanced",)
FORMULATIONS = ("ricci", "laplacian", "both")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


@dataclass
class BackendConfig:
    kind: str = "torus"
    n: int = 2
    N: int = 16
    preset: str = "iwasawa"
    c_real: list = None
    c_imag: list = None


@dataclass
class MetricConfig:
    preset: str = "flat"
    eps: float = 0.5
    a: float = 1.0
    b: float = 1.0
    scale: float = 1.0
    potential: list = None
    file: str = None


@dataclass
class DiagnosticsConfig:
    identities: bool = True
    refine: bool = False


@dataclass
class RunConfig:
    schema_version: int = SCHEMA_VERSION
    name: str = None
    backend: BackendConfig = field(default_factory=BackendConfig)
    metric: MetricConfig = field(default_factory=MetricConfig)
    omega: list = field(default_factory=lambda: [1.0, 0.0])
    formulation: str = "ricci"
    dt: float = None
    t_max: float = None
    c_safe: float = 0.1
    snapshot_stride: int = None
    log_every: int = None
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    seed: int = 0

    # resolved defaults -------------------------------------------------
    @property
    def homogeneous(self) -> bool:
        return self.backend.kind == "homogeneous"

    @property
    def dt_value(self) -> float:
        return self.dt if self.dt is not None else (1e-4 if self.homogeneous else 1e-3)

    @property
    def t_max_value(self) -> float:
        return self.t_max if self.t_max is not None else (5.0 if self.homogeneous else 0.5)

    @property
    def nsteps(self) -> int:
        return int(round(self.t_max_value / self.dt_value))

    @property
    def log_every_value(self) -> int:
        return self.log_every or max(1, self.nsteps // 200)

    @property
    def snapshot_stride_value(self) -> int:
        return self.snapshot_stride or max(1, self.nsteps // 8)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


_NESTED = {"backend": BackendConfig, "metric": MetricConfig, "diagnostics": DiagnosticsConfig}


def _build(cls, data, prefix):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'}: expected a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{prefix + '.' if prefix else ''}{unknown[0]}: unknown key")
    kwargs = {}
    for key, val in data.items():
        path = f"{prefix}.{key}" if prefix else key
        kwargs[key] = _build(_NESTED[key], val, path) if key in _NESTED else val
    return cls(**kwargs)


def _number(val, path, positive=True, allow_none=False):
    if val is None and allow_none:
        return
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not np.isfinite(val):
        raise ConfigError(f"{path}: expected a finite number, got {val!r}")
    if positive and val <= 0:
        raise ConfigError(f"{path}: must be positive, got {val!r}")


def _integer(val, path, minimum=1, allow_none=False):
    if val is None and allow_none:
        return
    if isinstance(val, bool) or not isinstance(val, int) or val < minimum:
        raise ConfigError(f"{path}: expected an integer >= {minimum}, got {val!r}")


def validate(cfg: RunConfig) -> RunConfig:
    if cfg.schema_version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {cfg.schema_version!r}")
    be, me = cfg.backend, cfg.metric
    if be.kind == "torus":
        if be.n not in (1, 2, 3):
            raise ConfigError(f"backend.n: expected 1, 2 or 3, got {be.n!r}")
        _integer(be.N, "backend.N", 4)
        if be.N % 2:
            raise ConfigError(f"backend.N: must be even, got {be.N}")
        if me.preset not in TORUS_PRESETS + ("file",):
            raise ConfigError(f"metric.preset: {me.preset!r} is not available on the torus backend")
    elif be.kind == "homogeneous":
        if be.preset not in ("iwasawa", "custom"):
            raise ConfigError(f"backend.preset: expected 'iwasawa' or 'custom', got {be.preset!r}")
        if be.preset == "custom" and be.c_real is None:
            raise ConfigError("backend.c_real: required for custom structure constants")
        if me.preset not in HOMOGENEOUS_PRESETS + ("file",):
            raise ConfigError(f"metric.preset: {me.preset!r} is not available on the homogeneous backend")
        if me.preset == "iwasawa-balanced" and be.preset != "iwasawa":
            raise ConfigError("metric.preset: iwasawa-balanced needs backend.preset = 'iwasawa'")
    else:
        raise ConfigError(f"backend.kind: expected 'torus' or 'homogeneous', got {be.kind!r}")
    if me.preset == "tm1":
        _number(me.eps, "metric.eps", positive=False)
        if not abs(me.eps) < 1:
            raise ConfigError(f"metric.eps: |eps| must be below 1, got {me.eps}")
        if be.n < 2:
            raise ConfigError("backend.n: tm1 needs n >= 2")
    for key in ("a", "b", "scale"):
        _number(getattr(me, key), f"metric.{key}")
    if me.preset == "file" and not me.file:
        raise ConfigError("metric.file: required for the file preset")
    if me.potential is not None and not isinstance(me.potential, list):
        raise ConfigError("metric.potential: expected a list of {amp, k, phase} terms")
    if not (isinstance(cfg.omega, list) and len(cfg.omega) == 2):
        raise ConfigError("omega: expected [real, imag] of a constant coefficient")
    for i, v in enumerate(cfg.omega):
        _number(v, f"omega[{i}]", positive=False)
    if cfg.omega[0] == 0 and cfg.omega[1] == 0:
        raise ConfigError("omega: coefficient must be nonzero")
    if cfg.formulation not in FORMULATIONS:
        raise ConfigError(f"formulation: expected one of {FORMULATIONS}, got {cfg.formulation!r}")
    _number(cfg.dt, "dt", allow_none=True)
    _number(cfg.t_max, "t_max", allow_none=True)
    _number(cfg.c_safe, "c_safe", allow_none=True)
    _integer(cfg.snapshot_stride, "snapshot_stride", allow_none=True)
    _integer(cfg.log_every, "log_every", allow_none=True)
    _integer(cfg.seed, "seed", minimum=0)
    for key in ("identities", "refine"):
        if not isinstance(getattr(cfg.diagnostics, key), bool):
            raise ConfigError(f"diagnostics.{key}: expected true or false")
    if cfg.nsteps < 1:
        raise ConfigError("t_max: shorter than one step")
    if cfg.diagnostics.identities and cfg.nsteps < 2:
        raise ConfigError("t_max: identity residuals need at least two steps")
    return cfg


def from_dict(data: dict) -> RunConfig:
    if "schema_version" not in data:
        raise ConfigError("schema_version: required")
    try:
        cfg = _build(RunConfig, data, "")
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return validate(cfg)


def load(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return from_dict(data)


def initial_state(cfg: RunConfig):
    """Domain, metric and volume form described by ``cfg``."""
    from . import presets
    from .domain import HomogeneousDomain, TorusDomain, iwasawa
    from .fields import HoloVolumeForm
    from .flow import FlowState
    from .snapshot import load_state

    be, me = cfg.backend, cfg.metric
    if be.kind == "torus":
        dom = TorusDomain(be.n, be.N)
    elif be.preset == "iwasawa":
        dom = iwasawa()
    else:
        c = np.asarray(be.c_real, dtype=float) + 1j * np.asarray(be.c_imag or np.zeros_like(be.c_real))
        dom = HomogeneousDomain(c, name="custom")
    terms = me.potential if me.potential is not None else presets.DEFAULT_POTENTIAL
    if me.preset == "flat":
        st = presets.flat(dom, me.scale)
    elif me.preset == "tm1":
        st = presets.tm1(dom, me.eps)
    elif me.preset == "kahler":
        st = presets.kahler(dom, terms)
    elif me.preset == "balanced-torus":
        st = presets.balanced_torus(dom, terms)
    elif me.preset == "iwasawa-balanced":
        st = presets.iwasawa_balanced(me.a, me.b, dom)
    else:
        st, _ = load_state(me.file, dom)
    coef = complex(cfg.omega[0], cfg.omega[1])
    omega = HoloVolumeForm(dom, st.omega.coef * coef) if me.preset == "file" else HoloVolumeForm(dom, coef)
    return FlowState(st.t if me.preset == "file" else 0.0, st.g, omega)

"""Manufactured data with known singularity behaviour."""

from __future__ import annotations

import numpy as np

from .fields import MetricField
from .flow import FlowState

# representative curves for each type; the horizon is 1 or infinite
CANONICAL = {
    "I": (lambda t: 1.0 / (1.0 - t), 1.0),
    "IIa": (lambda t: (1.0 - t) ** -1.5, 1.0),
    "IIb": (lambda t: (1.0 + t) ** -0.5, np.inf),
    "III": (lambda t: 3.0 / (1.0 + t), np.inf),
}


def sample_times(horizon, count: int = 256) -> np.ndarray:
    """Geometric approach to a finite horizon, or logarithmic spacing on ``[1e-2, 1e4]``."""
    if np.isfinite(horizon):
        return horizon - np.geomspace(1.0, 1e-4, count) * horizon
    return np.logspace(-2, 4, count)


def canonical_curve(kind: str, count: int = 256, noise: float = 0.0, rng=None):
    """``(t, f, horizon)`` for ``kind``, optionally with uniform multiplicative noise of size ``noise``."""
    fn, T = CANONICAL[kind]
    t = sample_times(T, count)
    f = fn(t)
    if noise:
        rng = rng if rng is not None else np.random.default_rng(0)
        f = f * (1 + noise * rng.uniform(-1, 1, f.shape))
    return t, f, T


def type_i_states(base: FlowState, times, horizon: float = 1.0):
    """``g(t) = (1 - t/T) g_0``: every pointwise norm in ``F`` scales by ``T/(T - t)``."""
    out = []
    for t in times:
        lam = 1.0 - t / horizon
        if lam <= 0:
            raise ValueError("times must lie before the horizon")
        out.append(FlowState(float(t), MetricField(base.domain, base.g.G * lam), base.omega))
    return out


def type_i_series(f0: float, times, horizon: float = 1.0):
    """``f(t) = f0 T/(T - t)`` matching :func:`type_i_states`."""
    times = np.asarray(times, dtype=float)
    return f0 * horizon / (horizon - times)


def write_type_i_run(directory, base: FlowState, horizon: float = 1.0, count: int = 64,
                     snapshots: int = 8):
    """Run directory for :func:`type_i_states`, readable by ``hermflow classify`` and ``blowup``."""
    from . import runlog

    times = sample_times(horizon, count)
    stride = max(1, count // snapshots)
    cols = runlog.columns_for("ricci", identities=False)
    return runlog.write_run(directory, {"manufactured": "type-i", "horizon": horizon},
                            iter(type_i_states(base, times, horizon)), cols, identities=False,
                            log_every=1, snapshot_stride=stride, extra={"horizon": horizon})

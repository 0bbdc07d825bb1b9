"""Singularity analysis: the functional ``f(t)``, type classification and blow-up rescaling.

``F = sqrt(|Rm|^2 + |nabla T|^2 + |T|^4)`` is built from the Chern curvature
and torsion.  ``f = sup F`` is the quantity that is classified; ``f_sq = f**2``
is stored alongside it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .connections import _guard, build_connection, covariant_derivative
from .fields import MetricField, TensorField, tensor_norm
from .flow import FlowState

TYPES = ("I", "IIa", "IIb", "III")


class BlowupError(ValueError):
    """No admissible blow-up sequence for the supplied data."""


class ClassificationError(ValueError):
    """The series cannot be classified (too short, non-monotone, non-finite)."""


# --------------------------------------------------------------------------
# the functional
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CurvatureFunctional:
    """Pointwise ``F`` with its supremum, a maximising sample and the three ingredients."""

    F: np.ndarray
    f: float
    f_sq: float
    argmax: np.ndarray
    sup_rm: float
    sup_dt: float
    sup_t2: float

    def at(self, domain, point) -> float:
        """``F`` at ``point`` (trigonometric interpolation of ``F^2`` on the torus)."""
        if domain.nsample == 0:
            return float(self.F)
        return float(np.sqrt(max(float(domain.evaluate(self.F ** 2, point)), 0.0)))


def curvature_functional(state: FlowState, refine: bool = True) -> CurvatureFunctional:
    """``F`` field of ``state`` and ``f = sup F``.

    Suprema are taken on squared quantities, which are smooth, and optionally
    polished between grid points.
    """
    dom = state.domain
    parts = state.parts
    Fsq = parts.F_sq
    f_sq, x = dom.sup(Fsq, refine)
    f_sq = max(f_sq, 0.0)

    def sup_sqrt(a):
        return float(np.sqrt(max(dom.sup(a, refine)[0], 0.0)))

    return CurvatureFunctional(
        F=np.sqrt(Fsq), f=float(np.sqrt(f_sq)), f_sq=float(f_sq), argmax=np.asarray(x),
        sup_rm=sup_sqrt(parts.rm_sq), sup_dt=sup_sqrt(parts.dt_sq),
        sup_t2=float(max(dom.sup(parts.t_sq, refine)[0], 0.0)))


# --------------------------------------------------------------------------
# classification
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ClassifyThresholds:
    """Finite-data reading of "bounded": tail slope of ``log P`` against ``s``.

    ``s = -log(T - t)`` for a finite horizon and ``s = log t`` otherwise; ``P``
    is ``(T - t) f`` or ``t f``.
    """

    slope_tol: float = 0.05
    rms_tol: float = 0.15
    min_samples: int = 32
    min_tail: int = 8
    z: float = 3.0


@dataclass(frozen=True)
class SingularityVerdict:
    type: str
    horizon: float
    sup_product: float
    slope: float
    slope_stderr: float
    slope_eighth: float
    rms: float
    reason: str = ""

    def as_dict(self) -> dict:
        return {"type": self.type, "horizon": "inf" if np.isinf(self.horizon) else self.horizon,
                "sup_product": self.sup_product, "slope": self.slope,
                "slope_stderr": self.slope_stderr, "slope_eighth": self.slope_eighth,
                "rms": self.rms, "reason": self.reason}


def _tail(s, frac, min_pts):
    lo = s[0] + (1 - frac) * (s[-1] - s[0])
    idx = np.nonzero(s >= lo)[0]
    if idx.size < min_pts:
        idx = np.arange(max(len(s) - max(min_pts, int(np.ceil(frac * len(s)))), 0), len(s))
    return idx


def _fit(s, y):
    """Least-squares slope, its standard error and the residual RMS."""
    A = np.vstack([s, np.ones_like(s)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    r = y - A @ coef
    dof = max(len(s) - 2, 1)
    sxx = np.sum((s - s.mean()) ** 2)
    se = float(np.sqrt(np.sum(r ** 2) / dof / sxx)) if sxx > 0 else np.inf
    return float(coef[0]), se, float(np.sqrt(np.mean(r ** 2)))


def classify(t, f, horizon=np.inf, thresholds: ClassifyThresholds = None) -> SingularityVerdict:
    """Singularity type of the series ``(t_i, f_i)``.

    ``horizon`` is the maximal time ``T`` (``np.inf`` for immortal runs).  The
    product ``P`` is "bounded" when its tail slope is at most ``slope_tol``.
    The verdict is ``inconclusive`` when the tail fit is noisy, when the slope
    is statistically indistinguishable from the threshold, or when the last
    eighth of the tail significantly disagrees with the last quarter.
    """
    th = thresholds or ClassifyThresholds()
    t = np.asarray(t, dtype=float)
    f = np.asarray(f, dtype=float)
    if t.shape != f.shape or t.ndim != 1:
        raise ClassificationError("t and f must be one-dimensional and of equal length")
    if len(t) < th.min_samples:
        raise ClassificationError(f"need at least {th.min_samples} samples, got {len(t)}")
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(f))):
        raise ClassificationError("series contains non-finite values")
    if np.any(np.diff(t) <= 0):
        raise ClassificationError("times must be strictly increasing")
    if np.any(f < 0):
        raise ClassificationError("f must be non-negative")
    T = float(horizon)
    if np.isfinite(T):
        if t[-1] >= T:
            raise ClassificationError("samples must lie before the horizon")
        P = (T - t) * f
        s = -np.log(T - t)
        keep = np.ones_like(t, dtype=bool)
    else:
        keep = t > 0
        P = t * f
        s = np.log(np.where(keep, t, 1.0))
    sup_P = float(np.max(P))
    s, P = s[keep], P[keep]
    if len(s) < th.min_samples:
        raise ClassificationError("too few samples at positive time")
    finite = np.isfinite(T)
    bounded_type, divergent_type = ("I", "IIa") if finite else ("III", "IIb")
    tail = _tail(s, 0.25, th.min_tail)
    if np.all(P[tail] == 0):
        return SingularityVerdict(bounded_type, T, sup_P, 0.0, 0.0, 0.0, 0.0, "f vanishes on the tail")
    if np.any(P[tail] <= 0):
        return SingularityVerdict("inconclusive", T, sup_P, np.nan, np.nan, np.nan, np.nan,
                                  "f vanishes on part of the tail")
    logP = np.log(P)
    slope, se, rms = _fit(s[tail], logP[tail])
    eighth = _tail(s, 0.125, th.min_tail)
    slope8, se8, _ = _fit(s[eighth], logP[eighth])
    reason = ""
    if rms > th.rms_tol:
        reason = f"tail fit residual {rms:.3f} exceeds {th.rms_tol}"
    elif abs(slope - th.slope_tol) < th.z * se:
        reason = "tail slope is indistinguishable from the threshold"
    elif (slope8 <= th.slope_tol) != (slope <= th.slope_tol) and \
            abs(slope8 - slope) > th.z * (se + se8):
        reason = "tail slope changes between the last quarter and the last eighth"
    kind = "inconclusive" if reason else (bounded_type if slope <= th.slope_tol else divergent_type)
    return SingularityVerdict(kind, T, sup_P, slope, se, slope8, rms, reason)


# --------------------------------------------------------------------------
# rescaling and blow-up sequences
# --------------------------------------------------------------------------

def rescale(state: FlowState, C: float, t_center: float = 0.0) -> FlowState:
    """Parabolic rescaling ``g~(s) = C g(t_center + s / C)`` evaluated at ``state``.

    The volume form is multiplied by ``C^{n/2}`` so that ``|Omega|_g`` is
    unchanged.
    """
    if not C > 0:
        raise ValueError("rescaling factor must be positive")
    n = state.domain.n
    g = MetricField(state.domain, state.g.G * C)
    return FlowState(C * (state.t - t_center), g, state.omega.scaled(C ** (n / 2)))


def compose_rescalings(C1, t1, C2, t2):
    """``(C, t_c)`` equivalent to rescaling by ``(C1, t1)`` and then by ``(C2, t2)``."""
    return C1 * C2, t1 + t2 / C1


@dataclass
class BlowupMember:
    """One element of a blow-up sequence and the bound predicted for its functional."""

    j: int
    t_j: float
    C_j: float
    x_j: np.ndarray
    state: FlowState
    params: dict

    def bound(self, s):
        s = np.asarray(s, dtype=float)
        p = self.params
        kind = p["type"]
        with np.errstate(divide="ignore", invalid="ignore"):
            if kind == "I":
                out = p["C"] / (p["c"] - s)
                ok = s < p["c"]
            elif kind == "IIa":
                out = p["A"] / (p["A"] - s)
                ok = s < p["A"]
            elif kind == "IIb":
                out = p["A"] * p["B"] / ((p["A"] + s) * (p["B"] - s))
                ok = (s > -p["A"]) & (s < p["B"])
            else:
                out = p["A"] / (p["A_j"] + s)
                ok = s > -p["A_j"]
        return np.where(ok, out, np.inf)

    def rescaled_time(self, t):
        return self.C_j * (np.asarray(t, dtype=float) - self.t_j)

    def as_dict(self) -> dict:
        return {"j": self.j, "t_j": self.t_j, "C_j": self.C_j,
                "x_j": np.asarray(self.x_j).tolist(), "bound": self.params}


@dataclass
class BlowupSequence:
    type: str
    horizon: float
    members: list = field(default_factory=list)

    def rescaled_curves(self, t, f):
        """``(s, f(t_j + s/C_j)/C_j, bound(s))`` for each member on the supplied series."""
        t = np.asarray(t, dtype=float)
        f = np.asarray(f, dtype=float)
        out = []
        for m in self.members:
            s = m.rescaled_time(t)
            out.append((s, f / m.C_j, m.bound(s)))
        return out


def select_blowup(t, f, snapshots, kind: str, horizon=np.inf, count: int = 4,
                  refine: bool = True) -> BlowupSequence:
    """Blow-up points ``(x_j, t_j)`` and scales ``C_j`` following the recipe for ``kind``.

    ``t, f`` is the full diagnostic series; ``snapshots`` are stored states
    (the only times at which a rescaled metric can be formed).  In every
    recipe ``C_j = F(x_j, t_j)``, so each rescaled state has ``F = 1`` at its
    base point.
    """
    if kind not in TYPES:
        raise ValueError(f"unknown singularity type {kind!r}")
    snaps = sorted(snapshots, key=lambda s: s.t)
    if len(snaps) < 3:
        raise BlowupError(f"need at least 3 snapshots, got {len(snaps)}")
    t = np.asarray(t, dtype=float)
    f = np.asarray(f, dtype=float)
    T = float(horizon)
    finite = kind in ("I", "IIa")
    if finite and not np.isfinite(T):
        raise BlowupError(f"type {kind} needs a finite horizon")
    if not finite and np.isfinite(T):
        raise BlowupError(f"type {kind} needs an infinite horizon")
    cfs = [curvature_functional(s, refine) for s in snaps]
    Fs = np.array([c.f for c in cfs])
    ts = np.array([s.t for s in snaps])
    if np.max(Fs) <= 0:
        raise BlowupError("no singularity detected: F vanishes on every snapshot")
    count = max(1, min(count, len(snaps)))
    seq = BlowupSequence(kind, T)
    picks = []
    if kind == "I":
        C = float(max(np.max((T - t) * f), np.max((T - ts) * Fs)))
        for i in range(len(snaps) - count, len(snaps)):
            picks.append((i, {"type": "I", "C": C, "c": float(Fs[i] * (T - ts[i]))}))
    elif kind == "III":
        pos = t > 0
        A = float(max(np.max(t[pos] * f[pos], initial=0.0), np.max(ts * Fs)))
        cand = [i for i in range(len(snaps)) if ts[i] > 0][-count:]
        for i in cand:
            picks.append((i, {"type": "III", "A": A, "A_j": float(Fs[i] * ts[i])}))
    else:
        # the horizons T_j run through the later snapshot times
        for k in range(max(1, len(snaps) - count), len(snaps)):
            Tj = ts[k]
            if kind == "IIa":
                score = (Tj - ts[:k]) * Fs[:k]
            else:
                score = np.where(ts[:k] > 0, ts[:k] * (Tj - ts[:k]) * Fs[:k], -np.inf)
            i = int(np.argmax(score))
            if not np.isfinite(score[i]):
                continue
            Cj = Fs[i]
            if kind == "IIa":
                picks.append((i, {"type": "IIa", "T_j": float(Tj), "A": float(Cj * (Tj - ts[i]))}))
            else:
                picks.append((i, {"type": "IIb", "T_j": float(Tj), "A": float(Cj * ts[i]),
                                  "B": float(Cj * (Tj - ts[i]))}))
    for j, (i, params) in enumerate(picks):
        Cj = float(Fs[i])
        if not Cj > 0:
            raise BlowupError(f"degenerate scale C_j = {Cj} at t = {ts[i]}")
        seq.members.append(BlowupMember(j, float(ts[i]), Cj, cfs[i].argmax,
                                        rescale(snaps[i], Cj, ts[i]), params))
    if not seq.members:
        raise BlowupError("no admissible blow-up points")
    return seq


# --------------------------------------------------------------------------
# injectivity radius
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class InjectivityEstimate:
    """``value`` is ``None`` when no honest estimate is available."""

    value: float
    method: str
    ratio: float
    f: float
    note: str = ""

    @property
    def computable(self) -> bool:
        return self.value is not None


def _shortest_lattice_vector(GR, period=2 * np.pi):
    """Length of the shortest nonzero vector of ``period * Z^d`` under the constant metric ``GR``."""
    d = GR.shape[0]
    best = min(np.sqrt(GR[a, a]) for a in range(d)) * period
    lam = np.linalg.eigvalsh(GR)[0]
    K = int(np.floor(best / (period * np.sqrt(lam)))) if lam > 0 else 0
    K = min(K, 6)
    grid = np.array(np.meshgrid(*[np.arange(-K, K + 1)] * d, indexing="ij")).reshape(d, -1).T
    grid = grid[np.any(grid != 0, axis=1)]
    if grid.size:
        lengths = period * np.sqrt(np.einsum("ka,ab,kb->k", grid, GR, grid))
        best = min(best, float(lengths.min()))
    return best


def _first_conjugate_times(Gam, C, V0, t_end, steps):
    """First zero of ``det(U(0) -> W(t))`` along the geodesics with initial velocities ``V0[i]``.

    Left-trivialised equations: ``v' = -Gam(v, v)``, ``W' = U - [v, W]``,
    ``U' = -Gam(U, v) - Gam(v, U)``.  ``det W ~ t^d`` near 0, so the sign test
    uses ``det W / t^d``.  Directions without a zero before ``t_end`` give inf.
    """
    m, d = V0.shape

    def rhs(v, W, U):
        right = np.tensordot(v, Gam, axes=([1], [2]))  # Gam(., v)
        left = np.tensordot(v, Gam, axes=([1], [1]))  # Gam(v, .)
        ad = np.tensordot(v, C, axes=([1], [1]))
        dv = -np.einsum("mca,ma->mc", right, v)
        return dv, U - ad @ W, -(right + left) @ U

    def rk4(y, h):
        k1 = rhs(*y)
        k2 = rhs(*(a + 0.5 * h * b for a, b in zip(y, k1)))
        k3 = rhs(*(a + 0.5 * h * b for a, b in zip(y, k2)))
        k4 = rhs(*(a + h * b for a, b in zip(y, k3)))
        return tuple(a + h / 6 * (b1 + 2 * b2 + 2 * b3 + b4)
                     for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4))

    y = (V0.copy(), np.zeros((m, d, d)), np.broadcast_to(np.eye(d), (m, d, d)).copy())
    h = t_end / steps
    bracket = [None] * m
    for i in range(1, steps + 1):
        y_new = rk4(y, h)
        val = np.linalg.det(y_new[1]) / (i * h) ** d
        for k in np.nonzero(val <= 0)[0]:
            if bracket[k] is None:
                bracket[k] = ((i - 1) * h, tuple(a[k:k + 1] for a in y))
        y = y_new
        if all(b is not None for b in bracket):
            break
    out = np.full(m, np.inf)
    for k, br in enumerate(bracket):
        if br is None:
            continue
        t0, y0 = br

        def g(tau):
            return np.linalg.det(rk4(y0, tau - t0)[1][0]) / tau ** d

        out[k] = optimize.brentq(g, t0 if t0 > 0 else 0.5 * h, t0 + h, xtol=1e-13, rtol=1e-12)
    return out


def injectivity_estimate(state: FlowState, cutoff: float = None, steps: int = 1000,
                         directions: int = 24, seed: int = 0) -> InjectivityEstimate:
    """Estimate of the Levi-Civita injectivity radius and the ratio ``inj * sqrt(f)``.

    * flat torus: half the shortest closed geodesic of the period lattice;
    * homogeneous backend: first conjugate time of unit-speed geodesics, from
      Jacobi-field shooting over a fixed set of directions, capped at ``cutoff``;
    * anything else: reported as not computable.
    """
    dom = state.domain
    g = state.g
    f = curvature_functional(state, refine=False).f
    if dom.nsample:
        GR = g.real
        flat_axes = GR.reshape((-1,) + GR.shape[-2:])
        if np.max(np.abs(flat_axes - flat_axes[0])) > 1e-12 * np.max(np.abs(flat_axes)) or f > 1e-10:
            return InjectivityEstimate(None, "none", None, f,
                                       "only flat tori have a closed-form estimate")
        inj = 0.5 * _shortest_lattice_vector(flat_axes[0])
        return InjectivityEstimate(inj, "lattice", inj * np.sqrt(f), f)
    if f <= 0:
        return InjectivityEstimate(None, "none", None, f,
                                   "abelian data: the radius is set by the lattice alone")
    if cutoff is None:
        cutoff = 20.0 / np.sqrt(f)
    conn = build_connection(g, "levi-civita")
    Gam = conn.real
    C = dom.C
    GR = g.real
    d = GR.shape[0]
    rng = np.random.default_rng(seed)
    dirs = list(np.eye(d)) + list(rng.standard_normal((directions, d)))
    V0 = np.array([v / np.sqrt(v @ GR @ v) for v in dirs])
    best = float(np.min(_first_conjugate_times(Gam, C, V0, cutoff, steps)))
    capped = not np.isfinite(best)
    value = cutoff if capped else float(best)
    return InjectivityEstimate(value, "conjugate-shooting", value * np.sqrt(f), f,
                               "no conjugate point before the cutoff" if capped else "")


# --------------------------------------------------------------------------
# convergence monitor
# --------------------------------------------------------------------------

@dataclass
class ConvergenceReport:
    N: np.ndarray
    nabla: np.ndarray  # [m, p] sup |nabla_ref^p g_m|
    dt_nabla: np.ndarray  # [m, q-1, p] sup |d^q/dt^q nabla_ref^p g_m| (nan without times)
    increments: np.ndarray  # [m, p] sup |nabla_ref^p (g_{m+1} - g_m)|

    def as_dict(self) -> dict:
        return {"N": self.N.tolist(), "nabla": self.nabla.tolist(),
                "dt_nabla": self.dt_nabla.tolist(), "increments": self.increments.tolist()}


def _sandwich(G, Gref):
    """Smallest ``N`` with ``N^{-1} ref <= g <= N ref`` pointwise."""
    L = np.linalg.cholesky(Gref)
    Li = np.linalg.inv(L)
    M = Li @ G @ np.conj(np.swapaxes(Li, -1, -2))
    ev = np.linalg.eigvalsh(0.5 * (M + np.conj(np.swapaxes(M, -1, -2))))
    return float(max(np.max(ev[..., -1]), np.max(1.0 / ev[..., 0])))


def convergence_monitor(metrics, ref: MetricField, times=None, p_max: int = 3,
                        q_max: int = 2) -> ConvergenceReport:
    """Equivalence constants and reference-covariant derivative bounds of a metric sequence.

    Derivatives are taken with the Levi-Civita connection of ``ref`` on the real
    metric tensor; norms use ``ref``.  With ``times`` the sequence is read as
    samples of one flow, and time derivatives up to order ``q_max`` are
    estimated with three-point differences.
    """
    from .flow import time_derivative

    metrics = list(metrics)
    dom = ref.domain
    if any(m.domain is not dom for m in metrics):
        raise ValueError("all metrics must live on the reference domain")
    if not (0 <= p_max <= 3 and 0 <= q_max <= 2):
        raise ValueError("orders are limited to p <= 3, q <= 2")
    conn = build_connection(ref, "levi-civita")
    ns = dom.nsample
    _guard(dom.sample_shape if ns else (), 2 + p_max, 2 * dom.n, "reference derivatives")

    def sup_norm(data, k):
        t = TensorField(data.astype(complex), ("D",) * k, dom)
        return float(np.sqrt(max(dom.sup(tensor_norm(t, ref, True))[0], 0.0)))

    def chain(GR):
        out = [GR]
        t = TensorField(GR.astype(complex), ("D", "D"), dom)
        for _ in range(p_max):
            t = covariant_derivative(conn, t, "real")
            out.append(t.data)
        return out

    chains = [chain(np.broadcast_to(m.real, np.broadcast_shapes(m.real.shape, ref.real.shape)))
              for m in metrics]
    M = len(metrics)
    N = np.array([_sandwich(np.broadcast_to(m.G, np.broadcast_shapes(m.G.shape, ref.G.shape)),
                            ref.G) for m in metrics])
    nabla = np.array([[sup_norm(c[p], p + 2) for p in range(p_max + 1)] for c in chains])
    inc = np.array([[sup_norm(chains[m + 1][p] - chains[m][p], p + 2) for p in range(p_max + 1)]
                    for m in range(M - 1)]).reshape(max(M - 1, 0), p_max + 1)
    dtn = np.full((M, q_max, p_max + 1), np.nan)
    if times is not None and M >= 3 and q_max:
        times = np.asarray(times, dtype=float)
        for p in range(p_max + 1):
            series = [c[p] for c in chains]
            first = [time_derivative(series, times, m) for m in range(M)]
            for m in range(M):
                dtn[m, 0, p] = sup_norm(first[m], p + 2)
                if q_max > 1:
                    dtn[m, 1, p] = sup_norm(time_derivative(first, times, m), p + 2)
    return ConvergenceReport(N, nabla, dtn, inc)

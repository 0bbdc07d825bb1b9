"""Chern, Levi-Civita, Bismut and Gauduchon-line connections.

Connection coefficients are stored two ways:

* ``full[..., g, a, b]`` on the complexified frame ``f = (e, conj(e))`` with
  ``nabla_{f_a} f_b = full[g, a, b] f_g``;
* ``real[..., c, a, b]`` on the real frame ``E = (X, JX)`` with
  ``nabla_{E_a} E_b = real[c, a, b] E_c``.

The holomorphic Chern coefficients ``Gam[k, j, s] = Gamma^k_{js}`` are the
``(e, e, e)`` block of ``full``.  Chern curvature is
``R[k, j, p, q] = R_{k̄ j}^p_q = -conj(e_k)(Gamma^p_{jq})`` and the torsion
components are ``Tlow[l, k, j] = T_{l̄ k j}``, the values ``T(e_j, e_k, conj(e_l))``
of the (2,1)-form ``T = i ∂ omega``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .domain import real_complex_structure, real_frame_matrix
from .fields import MetricField, SignatureError, TensorField
from .forms import dc, d, kahler_form, to_real

KINDS = ("chern", "levi-civita", "bismut", "gauduchon")


def _frame_grad(dom, arr, anti=False):
    """Frame derivatives stacked as a new axis right after the sample axes."""
    op = dom.dzb if anti else dom.dz
    parts = np.broadcast_arrays(*[op(arr, j) for j in range(dom.n)])
    return np.stack(parts, axis=dom.nsample)


def _real_grad(dom, arr):
    parts = np.broadcast_arrays(*[dom.dreal(arr, a) for a in range(2 * dom.n)])
    return np.stack(parts, axis=dom.nsample)


@dataclass(frozen=True, eq=False)
class ChernData:
    """Chern connection of ``g`` with curvature, Ricci contractions and torsion."""

    g: MetricField

    @property
    def domain(self):
        return self.g.domain

    @cached_property
    def Gam(self) -> np.ndarray:
        """``Gam[k, j, s] = g^{k p̄} e_j(g_{s p̄})``."""
        dG = _frame_grad(self.domain, self.g.G)  # [j, s, p]
        return np.einsum("...kp,...jsp->...kjs", self.g.gi, dG)

    @cached_property
    def R(self) -> np.ndarray:
        """``R[k, j, p, q] = -conj(e_k) Gamma^p_{jq}``."""
        dG = _frame_grad(self.domain, self.Gam, anti=True)  # [k, p, j, q]
        return -np.einsum("...kpjq->...kjpq", dG)

    @cached_property
    def ric1(self) -> np.ndarray:
        """First Chern-Ricci ``ric1[k, j] = R_{k̄ j}`` (trace over the endomorphism)."""
        return np.einsum("...kjpp->...kj", self.R)

    @cached_property
    def ric2(self) -> np.ndarray:
        """Second Chern-Ricci ``ric2[p, q] = R̃_{p̄ q} = g_{p̄ l} g^{j k̄} R_{k̄ j}^l_q``."""
        return np.einsum("...lp,...jk,...kjlq->...pq", self.g.G, self.g.gi, self.R)

    @cached_property
    def scalar(self) -> np.ndarray:
        return np.einsum("...jk,...kj->...", self.g.gi, self.ric2).real

    @cached_property
    def Tup(self) -> np.ndarray:
        """``Tup[p, k, j] = T^p_{kj} = Gamma^p_{kj} - Gamma^p_{jk} - c^p_{kj}``."""
        Gam = self.Gam
        return Gam - np.swapaxes(Gam, -1, -2) - self.domain.c

    @cached_property
    def Tlow(self) -> np.ndarray:
        """``Tlow[l, k, j] = T_{l̄ k j} = g_{p l̄} T^p_{kj}``."""
        return np.einsum("...pl,...pkj->...lkj", self.g.G, self.Tup)

    @cached_property
    def tau(self) -> np.ndarray:
        """Contracted torsion ``tau_j = g^{k l̄} T_{l̄ k j}``."""
        return np.einsum("...kl,...lkj->...j", self.g.gi, self.Tlow)

    @cached_property
    def torsion_sq(self) -> np.ndarray:
        """``|T|^2 = g^{l m̄}... T_{l̄kj} conj(T_{m̄ab})`` with every index contracted."""
        gi = self.g.gi
        return np.einsum("...lkj,...ml,...ka,...jb,...mab->...", self.Tlow, np.conj(gi),
                         gi, gi, np.conj(self.Tlow)).real

    @cached_property
    def TT(self) -> np.ndarray:
        """``TT[k, j] = T_{k̄ p q} conj(T)_j^{pq}`` with indices raised by ``g``."""
        gi = self.g.gi
        return np.einsum("...kpq,...pa,...qb,...jab->...kj", self.Tlow, gi, gi,
                         np.conj(self.Tlow))

    def torsion_tensor(self) -> TensorField:
        return TensorField(self.Tlow, ("db", "d", "d"), self.domain)

    def curvature_tensor(self) -> TensorField:
        return TensorField(self.R, ("db", "d", "u", "d"), self.domain)

    @cached_property
    def full(self) -> np.ndarray:
        """Chern coefficients on the complexified frame."""
        n = self.domain.n
        Gam = self.Gam
        out = np.zeros(Gam.shape[:-3] + (2 * n,) * 3, dtype=complex)
        out[..., :n, :n, :n] = Gam
        out[..., n:, n:, n:] = np.conj(Gam)
        return out


def chern_data(g: MetricField) -> ChernData:
    return ChernData(g)


def _full_to_real(full, n):
    V = real_frame_matrix(n)
    Vinv = np.linalg.inv(V)
    return np.einsum("ax,by,...gxy,gc->...cab", V, V, full, Vinv, optimize=True)


def _real_to_full(real, n):
    V = real_frame_matrix(n)
    Vinv = np.linalg.inv(V)
    return np.einsum("xa,yb,...cab,cg->...gxy", Vinv, Vinv, real, V, optimize=True)


def levi_civita_real(g: MetricField) -> np.ndarray:
    """Koszul formula in the real frame (which may be non-holonomic)."""
    dom = g.domain
    gR = g.real
    C = dom.C
    dg = _real_grad(dom, gR)  # [a, b, c] = E_a g_bc
    # g([E_a, E_b], E_c) = C^d_ab g_dc
    Cl = np.einsum("dab,...dc->...abc", C, gR)
    koszul = (dg + np.einsum("...bac->...abc", dg) - np.einsum("...cab->...abc", dg)
              + Cl - np.einsum("...acb->...abc", Cl) - np.einsum("...bca->...abc", Cl))
    return 0.5 * np.einsum("...dc,...abc->...dab", g.real_inv, koszul)


def torsion_3forms(g: MetricField):
    """Real-frame components of ``H = d^c omega`` and ``S(X, Y, Z) = d omega(JX, Y, Z)``."""
    om = kahler_form(g)
    H = to_real(dc(om)).real
    dom_ = to_real(d(om)).real
    J = real_complex_structure(g.n)
    S = np.einsum("ea,...ebc->...abc", J, dom_)
    return H, S


# With omega(X, Y) = g(JX, Y) the line passes through Chern at t = 1 and Bismut
# at t = -1 when S is evaluated with J^{-1} = -J in the first slot.
H_SIGN = 1.0
S_SIGN = -1.0


def gauduchon_real(g: MetricField, t: float) -> np.ndarray:
    """``g(nabla^t_X Y, Z) = g(LC_X Y, Z) + (1-t)/4 H(X,Y,Z) + (1+t)/4 S(X,Y,Z)``."""
    H, S = torsion_3forms(g)
    low = (1 - t) / 4 * H_SIGN * H + (1 + t) / 4 * S_SIGN * S
    return levi_civita_real(g) + np.einsum("...dc,...abc->...dab", g.real_inv, low)


def bismut_full(cd: ChernData) -> np.ndarray:
    """Bismut coefficients from the holomorphic-frame formulas.

    ``nabla+_{e_j} e_m = (Gamma^k_{jm} + T^k_{mj}) e_k`` and
    ``nabla+_{conj(e_j)} e_p = g^{k m̄} conj(T_{p̄ j m}) e_k``; the remaining blocks
    are conjugates.
    """
    n = cd.domain.n
    hol = cd.Gam + np.einsum("...kmj->...kjm", cd.Tup)
    mixed = np.einsum("...km,...pjm->...kjp", cd.g.gi, np.conj(cd.Tlow))
    shape = np.broadcast_shapes(hol.shape, mixed.shape)
    out = np.zeros(shape[:-3] + (2 * n,) * 3, dtype=complex)
    out[..., :n, :n, :n] = hol
    out[..., :n, n:, :n] = mixed
    out[..., n:, n:, n:] = np.conj(hol)
    out[..., n:, :n, n:] = np.conj(mixed)
    return out


@dataclass(frozen=True, eq=False)
class ConnectionField:
    """Connection coefficients of one kind for the metric ``g``."""

    kind: str
    g: MetricField
    full: np.ndarray
    real: np.ndarray
    t: float = None

    @property
    def domain(self):
        return self.g.domain

    @property
    def hermitian(self) -> bool:
        return self.kind != "levi-civita"

    def block(self, anti_slot: bool) -> np.ndarray:
        """``A[..., a, out, in]`` acting on holomorphic (or antiholomorphic) slots."""
        n = self.domain.n
        if not self.hermitian:
            raise SignatureError("Levi-Civita does not preserve J; use real slots")
        s = slice(n, 2 * n) if anti_slot else slice(0, n)
        return np.einsum("...gab->...agb", self.full[..., s, :, s])

    @cached_property
    def torsion_real(self) -> np.ndarray:
        """``T^c_{ab} = Gamma^c_{ab} - Gamma^c_{ba} - C^c_{ab}``."""
        G = self.real
        return G - np.swapaxes(G, -1, -2) - self.domain.C


def build_connection(g: MetricField, kind: str, t: float = None) -> ConnectionField:
    """Connection of the given kind; ``gauduchon`` requires the line parameter ``t``."""
    g.validate(herm_tol=np.inf)
    n = g.n
    if kind == "chern":
        full = ChernData(g).full
        return ConnectionField(kind, g, full, _full_to_real(full, n).real, 1.0)
    if kind == "bismut":
        full = bismut_full(ChernData(g))
        return ConnectionField(kind, g, full, _full_to_real(full, n).real, -1.0)
    if kind == "levi-civita":
        real = levi_civita_real(g)
        return ConnectionField(kind, g, _real_to_full(real, n), real)
    if kind == "gauduchon":
        if t is None:
            raise ValueError("gauduchon connection needs the line parameter t")
        real = gauduchon_real(g, float(t))
        return ConnectionField(kind, g, _real_to_full(real, n), real, float(t))
    raise ValueError(f"unknown connection kind {kind!r}; expected one of {KINDS}")


def gauduchon_affine(g: MetricField, t: float) -> ConnectionField:
    """``(1 - kappa) Chern + kappa Bismut`` with ``kappa = (1 - t)/2``."""
    kappa = (1 - t) / 2
    ch = build_connection(g, "chern")
    bi = build_connection(g, "bismut")
    full = (1 - kappa) * ch.full + kappa * bi.full
    return ConnectionField("gauduchon", g, full, (1 - kappa) * ch.real + kappa * bi.real, t)


_LETTERS = "abcdefghijklmnopqrstuvwxyz"


def covariant_derivative(conn: ConnectionField, t: TensorField, direction: str = "hol") -> TensorField:
    """Covariant derivative with the new slot placed first.

    ``direction`` is ``'hol'`` (new ``'d'`` slot), ``'anti'`` (new ``'db'`` slot)
    for complex-slot tensors under a Hermitian connection, or ``'real'`` (new
    ``'D'`` slot) for real-slot tensors under any connection.
    """
    dom = t.domain
    if dom is not conn.domain:
        raise SignatureError("connection and tensor live on different domains")
    k = t.nslots
    if direction == "real":
        if any(s not in ("D", "U") for s in t.sig):
            raise SignatureError("real direction needs real slots")
        out = _real_grad(dom, t.data)
        # A[a, out, in] = Gamma^out_{a in}
        A = np.einsum("...cab->...acb", conn.real)
        new = "D"
    elif direction in ("hol", "anti"):
        if any(s in ("D", "U") for s in t.sig):
            raise SignatureError("complex directions need complex slots")
        anti = direction == "anti"
        out = _frame_grad(dom, t.data, anti=anti)
        n = dom.n
        sel = slice(n, 2 * n) if anti else slice(0, n)
        if not conn.hermitian:
            raise SignatureError("Levi-Civita acts on real slots only")
        Ahol = np.einsum("...gab->...agb", conn.full[..., :n, sel, :n])
        Aanti = np.einsum("...gab->...agb", conn.full[..., n:, sel, n:])
        new = "db" if anti else "d"
    else:
        raise ValueError(f"unknown direction {direction!r}")
    out = out.astype(np.result_type(out, complex))
    slots = _LETTERS[1:k + 1]
    for i, kind in enumerate(t.sig):
        if direction == "real":
            M = A
        else:
            M = Aanti if kind in ("db", "ub") else Ahol
        src = slots[:i] + "z" + slots[i + 1:]
        tgt = "a" + slots
        if kind in ("d", "db", "D"):
            # -Gamma^m_{a s} t_{..m..}: M[a, m, s]
            spec = f"...az{slots[i]},...{src}->...{tgt}"
            out = out - np.einsum(spec, M, t.data)
        else:
            spec = f"...a{slots[i]}z,...{src}->...{tgt}"
            out = out + np.einsum(spec, M, t.data)
    return TensorField(out, (new,) + t.sig, dom)


def curvature_real(conn: ConnectionField) -> np.ndarray:
    """``Rm[d, c, a, b]``: the ``E_d`` component of ``R(E_a, E_b) E_c``."""
    dom = conn.domain
    G = conn.real  # [d, a, b]
    dG = _real_grad(dom, G)  # [e, d, a, b] = E_e Gamma^d_ab
    term = (np.einsum("...adbc->...dcab", dG) - np.einsum("...bdac->...dcab", dG)
            + np.einsum("...ebc,...dae->...dcab", G, G)
            - np.einsum("...eac,...dbe->...dcab", G, G)
            - np.einsum("eab,...dec->...dcab", dom.C, G))
    return term


@dataclass(frozen=True, eq=False)
class CurvatureField:
    """Chern curvature components with both Ricci contractions and the scalar."""

    R: np.ndarray
    ric1: np.ndarray
    ric2: np.ndarray
    scalar: np.ndarray


def curvature(conn: ConnectionField, g: MetricField = None):
    """Curvature of ``conn``: a :class:`CurvatureField` for Chern, real components otherwise."""
    if conn.kind == "chern":
        cd = ChernData(conn.g)
        return CurvatureField(cd.R, cd.ric1, cd.ric2, cd.scalar)
    return curvature_real(conn)


@dataclass(frozen=True, eq=False)
class TorsionField:
    T: np.ndarray
    Tbar: np.ndarray
    tau: np.ndarray
    TR: np.ndarray
    H: np.ndarray
    Tplus: np.ndarray


def torsion(g: MetricField) -> TorsionField:
    """Chern torsion components, their trace, the real torsion form and Bismut torsion."""
    cd = ChernData(g)
    om = kahler_form(g)
    T = dc(om)
    TR = to_real(T).real
    H, _ = torsion_3forms(g)
    bis = build_connection(g, "bismut")
    Tplus = np.einsum("...dc,...cab->...abd", g.real, bis.torsion_real)
    return TorsionField(cd.Tlow, np.conj(cd.Tlow), cd.tau, TR, H, Tplus)


def metric_compatibility(conn: ConnectionField) -> float:
    """``sup |nabla g_R|`` over the domain."""
    g = conn.g
    gt = TensorField(g.real.astype(complex), ("D", "D"), conn.domain)
    return float(np.max(np.abs(covariant_derivative(conn, gt, "real").data)))


def j_parallel_residual(conn: ConnectionField) -> float:
    """``sup |nabla J|`` in the real frame."""
    dom = conn.domain
    J = real_complex_structure(dom.n).astype(complex)
    Jt = TensorField(np.broadcast_to(J, (1,) * dom.nsample + J.shape), ("U", "D"), dom)
    return float(np.max(np.abs(covariant_derivative(conn, Jt, "real").data)))


class GeodesicError(RuntimeError):
    """Speed drift beyond tolerance: the step is too coarse for the data."""


@dataclass(frozen=True)
class GeodesicPath:
    """Sampled geodesic.

    ``x`` holds torus coordinates, or exponential coordinates on the Lie
    algebra for the homogeneous backend; ``v`` is the velocity in the real
    frame ``E``.
    """

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    speed: np.ndarray

    @property
    def speed_drift(self) -> float:
        return float(np.max(np.abs(self.speed - self.speed[0])))


def _dexp_inv(C, x, v, order):
    """``ad_x / (1 - exp(-ad_x)) v`` via its Bernoulli series (finite for nilpotent algebras)."""
    ad = np.einsum("cab,a->cb", C, x)
    coeffs = [1.0, 0.5, 1 / 12, 0.0, -1 / 720, 0.0, 1 / 30240]
    out = v.copy()
    term = v.copy()
    for k in range(1, min(order, len(coeffs) - 1) + 1):
        term = ad @ term
        if coeffs[k]:
            out = out + coeffs[k] * term
    return out


def geodesic_integrate(conn: ConnectionField, x0, v0, t_max: float, dt: float,
                       tol: float = 1e-6) -> GeodesicPath:
    """Solve ``nabla_{x'} x' = 0`` with the classical fourth-order Runge-Kutta scheme.

    ``v0`` is given in the real frame.  A relative speed drift above ``tol``
    raises :class:`GeodesicError`.
    """
    if conn.kind not in ("levi-civita", "bismut", "chern", "gauduchon"):
        raise ValueError(f"unsupported connection {conn.kind!r}")
    dom = conn.domain
    v0 = np.asarray(v0, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if np.linalg.norm(v0) == 0:
        raise ValueError("initial velocity must be nonzero")
    Gam = conn.real
    if dom.kind == "torus":
        gam_i = dom.interpolant(Gam)
        g_i = dom.interpolant(conn.g.real)

        def rhs(x, v):
            return v, -np.einsum("cab,a,b->c", gam_i(x), v, v)

        def speed(x, v):
            return float(np.sqrt(v @ g_i(x) @ v))
    else:
        C = dom.C
        order = 2 * dom.n

        def rhs(x, v):
            return _dexp_inv(C, x, v, order), -np.einsum("cab,a,b->c", Gam, v, v)

        gR = conn.g.real

        def speed(x, v):
            return float(np.sqrt(v @ gR @ v))

    nsteps = int(round(t_max / dt))
    ts = np.linspace(0.0, nsteps * dt, nsteps + 1)
    xs = np.empty((nsteps + 1, x0.size))
    vs = np.empty((nsteps + 1, v0.size))
    sp = np.empty(nsteps + 1)
    x, v = x0.copy(), v0.copy()
    xs[0], vs[0], sp[0] = x, v, speed(x, v)
    for i in range(nsteps):
        k1x, k1v = rhs(x, v)
        k2x, k2v = rhs(x + 0.5 * dt * k1x, v + 0.5 * dt * k1v)
        k3x, k3v = rhs(x + 0.5 * dt * k2x, v + 0.5 * dt * k2v)
        k4x, k4v = rhs(x + dt * k3x, v + dt * k3v)
        x = x + dt / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        xs[i + 1], vs[i + 1], sp[i + 1] = x, v, speed(x, v)
        if abs(sp[i + 1] - sp[0]) > tol * sp[0]:
            raise GeodesicError(f"speed drift {abs(sp[i + 1] - sp[0]) / sp[0]:.2e} at t = {ts[i + 1]:.4f}")
    return GeodesicPath(ts, xs, vs, sp)


MEMORY_LIMIT = 1.5e9


def _guard(shape, nslots, dim, label):
    nbytes = 16 * int(np.prod(shape)) * dim ** nslots
    if nbytes > MEMORY_LIMIT:
        raise MemoryError(f"{label} would need {nbytes / 1e9:.1f} GB; use a coarser or "
                          "compressed field")


def bounded_geometry_report(g: MetricField, omega, m_max: int = 3, refine: bool = True) -> dict:
    """Sup norms of Bismut curvature and torsion derivatives, dilaton extremes, balance residuals.

    Norms use real-frame indices and the real metric.  With ``refine`` each
    supremum is polished on the trigonometric interpolant, so the values do
    not depend on where the grid points happen to fall.
    """
    from .fields import omega_norm
    from .flow import FlowState, balanced_residual

    if not 0 <= m_max <= 3:
        raise ValueError("m_max must be between 0 and 3")
    dom = g.domain
    bis = build_connection(g, "bismut")
    shape = np.broadcast_shapes(np.shape(bis.real)[:dom.nsample], g.G.shape[:dom.nsample])
    _guard(shape, 4 + m_max, 2 * dom.n, "Bismut curvature derivatives")
    Rm = TensorField(curvature_real(bis).astype(complex), ("U", "D", "D", "D"), dom)
    Tp = TensorField(bis.torsion_real.astype(complex), ("U", "D", "D"), dom)
    from .fields import tensor_norm

    report = {}
    for m in range(m_max + 1):
        # squared norms are smooth where the norms themselves may have kinks
        report[f"sup_nabla{m}_rm_plus"] = np.sqrt(dom.sup(tensor_norm(Rm, g, True), refine)[0])
        report[f"sup_nabla{m}_t_plus"] = np.sqrt(dom.sup(tensor_norm(Tp, g, True), refine)[0])
        if m < m_max:
            Rm = covariant_derivative(bis, Rm, "real")
            Tp = covariant_derivative(bis, Tp, "real")
    L = np.log(omega_norm(omega, g))
    report["sup_log_omega2"] = dom.sup(L, refine)[0]
    report["inf_log_omega2"] = -dom.sup(-L, refine)[0]
    st = FlowState(0.0, g, omega)
    report["balanced_residual"] = balanced_residual(st, 1, refine)
    report["balanced_residual_sq"] = balanced_residual(st, 2, refine)
    return report

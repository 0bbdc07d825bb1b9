"""Type IIB flow: right-hand sides, time stepping, balance monitors and identity residuals.

The flow variable is the metric ``G[j, k] = g_{j k̄}``; the holomorphic volume
form is fixed along a run.  Two right-hand sides are available:

* ``ricci``:     ``d/dt g_{k̄ j} = -R̃_{k̄ j} - 1/2 T_{k̄ p q} conj(T)_j^{p q}``
* ``laplacian``: ``d/dt omega = -∂†_{omega,Omega} ∂ omega``
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from math import factorial

import numpy as np

from .connections import ChernData
from .fields import HoloVolumeForm, MetricField, SingularMetricError, omega_norm
from .forms import Form, alternate, d, del_, flat, form_norm, kahler_form, sharp
from .forms import power as form_power
from .functional import FunctionalParts, functional_parts

BALANCE_TOL = 1e-8


class FlowError(RuntimeError):
    """Positivity loss, non-finite values or a violated step-size guard."""


@dataclass(frozen=True, eq=False)
class FlowState:
    """Immutable flow snapshot; derived geometry is computed lazily and cached."""

    t: float
    g: MetricField
    omega: HoloVolumeForm

    @property
    def domain(self):
        return self.g.domain

    @cached_property
    def cd(self) -> ChernData:
        return ChernData(self.g)

    @cached_property
    def parts(self) -> FunctionalParts:
        return functional_parts(self.cd)

    @cached_property
    def log_omega_sq(self) -> np.ndarray:
        return np.log(omega_norm(self.omega, self.g))

    def f(self) -> float:
        """``sup F`` on the sample points."""
        return float(np.max(self.parts.F))

    def with_metric(self, G, t) -> "FlowState":
        return FlowState(t, MetricField(self.domain, G), self.omega)


def hermitian_part(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))


def rhs_ricci_form(state: FlowState) -> np.ndarray:
    """``dG[j, k] = -R̃_{k̄ j} - 1/2 T_{k̄ p q} conj(T)_j^{pq}``."""
    cd = state.cd
    return -np.swapaxes(cd.ric2, -1, -2) - 0.5 * np.swapaxes(cd.TT, -1, -2)


def kahler_ricci_rhs(state: FlowState) -> np.ndarray:
    """``dG[j, k] = -R_{k̄ j}`` with the first Chern-Ricci form."""
    return -np.swapaxes(state.cd.ric1, -1, -2)


def _frame_grad(dom, arr, anti=False):
    op = dom.dzb if anti else dom.dz
    parts = np.broadcast_arrays(*[op(arr, j) for j in range(dom.n)])
    return np.stack(parts, axis=dom.nsample)


def _psi_to_paper(P):
    """Form block ``P[g, b, a] = psi(e_g, e_b, conj(e_a))`` to ``Psi[a, b, g] = psi_{ā b g}``."""
    return np.einsum("...gba->...abg", P)


def dagger_del(state: FlowState, psi: Form, tol: float = BALANCE_TOL) -> Form:
    """``(∂†_{omega,Omega} psi)_{ā b} = -g^{g j̄} nabla_{j̄} psi_{ā b g}
    - 1/2 conj(T_{b̄ j m}) psi_{ā g d} g^{g j̄} g^{d m̄}``.

    The formula assumes a conformally balanced metric; ``meta['balanced']``
    records whether that hypothesis held (a warning is issued otherwise).
    """
    if set(psi) != {(2, 1)}:
        raise ValueError("dagger_del expects a pure (2,1)-form")
    cd = state.cd
    gi = state.g.gi
    Psi = _psi_to_paper(psi[(2, 1)])
    dbar = _frame_grad(state.domain, Psi, anti=True)  # [j, a, b, g]
    nabla = dbar - np.einsum("...mja,...jmbg->...jabg", np.conj(cd.Gam), Psi[..., None, :, :, :])
    first = -np.einsum("...gj,...jabg->...ab", gi, nabla)
    second = -0.5 * np.einsum("...bjm,...agd,...gj,...dm->...ab", np.conj(cd.Tlow), Psi, gi, gi)
    out = first + second  # out[a, b] = (∂†psi)_{ā b}
    res = balanced_residual(state, power=2)
    form = Form(state.domain, {(1, 1): np.swapaxes(out, -1, -2)})
    form.meta = {"balanced": res <= tol, "balanced_residual": res}
    if res > tol:
        warnings.warn("dagger_del evaluated off the conformally balanced locus "
                      f"(residual {res:.2e})", stacklevel=2)
    return form


def dagger_del_standard(state: FlowState, psi: Form) -> Form:
    """Unweighted ``∂†`` on (2,1)-forms: the weighted operator plus the ``conj(tau)`` term."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        base = dagger_del(state, psi)
    Psi = _psi_to_paper(psi[(2, 1)])
    extra = np.einsum("...gj,...j,...abg->...ab", state.g.gi, np.conj(state.cd.tau), Psi)
    return Form(state.domain, {(1, 1): base[(1, 1)] + np.swapaxes(extra, -1, -2)})


def contraction_tau(state: FlowState, psi: Form) -> Form:
    """``(iota psi)_{ā b} = g^{g j̄} conj(tau_j) psi_{ā b g}``."""
    Psi = _psi_to_paper(psi[(2, 1)])
    out = np.einsum("...gj,...j,...abg->...ab", state.g.gi, np.conj(state.cd.tau), Psi)
    return Form(state.domain, {(1, 1): np.swapaxes(out, -1, -2)})


def weighted_adjoint(state: FlowState, form: Form) -> Form:
    """Formal adjoint of ``∂`` for the pairing ``int <a, b> |Omega|^2 omega^n / n!``.

    Built directly from integration by parts against the frame (derivative
    part) and the transpose of the bracket term, independently of any
    coordinate formula.
    """
    dom = state.domain
    ns = dom.nsample
    g = state.g
    w = np.abs(state.omega.coef) ** 2
    out = {}
    for (p, q), arr in form.items():
        if p == 0:
            continue
        S = sharp(g, arr, p, q)
        wS = S * w.reshape(w.shape + (1,) * (p + q))
        dbar = _frame_grad(dom, wS, anti=True)  # [a, a, A', B]
        X = -np.trace(np.moveaxis(dbar, [ns, ns + 1], [-2, -1]), axis1=-2, axis2=-1)
        X = X / w.reshape(w.shape + (1,) * (p + q - 1))
        if p >= 2 and np.any(dom.c):
            Y = -(p - 1) / 2 * np.tensordot(np.conj(dom.c), S, axes=([1, 2], [ns, ns + 1]))
            Y = np.moveaxis(Y, 0, ns) if ns else Y
            Y = alternate(Y, ns, p - 1) / factorial(p - 1)
            X = X + Y
        out[(p - 1, q)] = flat(g, X, p - 1, q)
    return Form(dom, out)


def pairing(state: FlowState, a: Form, b: Form) -> complex:
    """``int <a, b> |Omega|^2 dV`` up to the constant volume normalization."""
    from .forms import form_inner

    w = np.abs(state.omega.coef) ** 2
    return complex(state.domain.integrate(form_inner(state.g, a, b) * w))


def rhs_laplacian(state: FlowState) -> np.ndarray:
    """``dG`` from ``d/dt omega = -∂†_{omega,Omega} ∂ omega`` with ``omega = i G``."""
    psi = del_(kahler_form(state.g))
    B = dagger_del(state, psi)[(1, 1)]
    return 1j * B


def conformal_factor(state: FlowState, power: int = 1) -> np.ndarray:
    return omega_norm(state.omega, state.g) ** (power / 2)


def balanced_residual(state: FlowState, power: int = 1, refine: bool = False) -> float:
    """``sup |d(|Omega|^power omega^{n-1})|``.

    ``power = 1`` is the condition as usually quoted; ``power = 2`` is the one
    under which the Laplacian formulation and the weighted adjoint agree (see
    README).
    """
    om = kahler_form(state.g)
    n = state.domain.n
    form = form_power(om, n - 1).scale_by(conformal_factor(state, power))
    dform = d(form)
    if not dform:
        return 0.0
    sq = form_norm(state.g, dform) ** 2
    return float(np.sqrt(max(state.domain.sup(sq, refine)[0], 0.0)))


def dagger_omega_residual(state: FlowState) -> float:
    """``sup |∂†_{omega,Omega} omega|``; vanishes exactly on conformally balanced metrics."""
    res = weighted_adjoint(state, kahler_form(state.g))
    return float(np.max(form_norm(state.g, res), initial=0.0))


def _check_metric(G: np.ndarray):
    if not np.all(np.isfinite(G)):
        raise FlowError("non-finite metric entries")
    lam = np.min(np.linalg.eigvalsh(hermitian_part(G)))
    if lam < 1e-10:
        raise FlowError(f"positivity lost: min eigenvalue {lam:.3e}")


RHS = {"ricci": rhs_ricci_form, "laplacian": rhs_laplacian}


def step(state: FlowState, dt: float, formulation: str = "ricci", c_safe: float = None) -> FlowState:
    """One classical Runge-Kutta step of the metric flow.

    With ``c_safe`` the step is refused when ``dt > c_safe / f(t)``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if formulation not in RHS:
        raise ValueError(f"unknown formulation {formulation!r}")
    if c_safe is not None:
        f = state.f()
        if f > 0 and dt > c_safe / f:
            raise FlowError(f"dt = {dt:.3e} exceeds c_safe/f = {c_safe / f:.3e}")
    rhs = RHS[formulation]
    G0 = state.g.G

    def stage(G, t):
        _check_metric(G)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return hermitian_part(rhs(FlowState(t, MetricField(state.domain, G, check=False),
                                                state.omega)))

    k1 = stage(G0, state.t)
    k2 = stage(G0 + 0.5 * dt * k1, state.t + 0.5 * dt)
    k3 = stage(G0 + 0.5 * dt * k2, state.t + 0.5 * dt)
    k4 = stage(G0 + dt * k3, state.t + dt)
    G1 = hermitian_part(G0 + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4))
    _check_metric(G1)
    try:
        return state.with_metric(G1, state.t + dt)
    except SingularMetricError as exc:
        raise FlowError(str(exc)) from exc


def laplacian_scalar(state: FlowState, u: np.ndarray) -> np.ndarray:
    """``g^{j k̄} ∂_j ∂_{k̄} u``."""
    dom = state.domain
    n = dom.n
    total = 0
    gi = state.g.gi
    for k in range(n):
        dk = dom.dzb(u, k)
        for j in range(n):
            total = total + gi[..., j, k] * dom.dz(dk, j)
    return total


def time_derivative(values, times, i):
    """Second-order finite difference of ``values`` at index ``i`` (three-point stencil)."""
    if len(values) < 3:
        raise ValueError("need at least three states for a time derivative")
    if i == 0:
        idx = (0, 1, 2)
    elif i == len(values) - 1:
        idx = (i - 2, i - 1, i)
    else:
        idx = (i - 1, i, i + 1)
    t0, t1, t2 = (times[j] for j in idx)
    x = times[i]
    # derivatives of the Lagrange basis at x
    w0 = ((x - t1) + (x - t2)) / ((t0 - t1) * (t0 - t2))
    w1 = ((x - t0) + (x - t2)) / ((t1 - t0) * (t1 - t2))
    w2 = ((x - t0) + (x - t1)) / ((t2 - t0) * (t2 - t1))
    a, b, c = (values[j] for j in idx)
    return w0 * a + w1 * b + w2 * c


def torsion_form(state: FlowState) -> np.ndarray:
    """``(2,1)`` block of ``T = i ∂ omega``."""
    return 1j * del_(kahler_form(state.g))[(2, 1)]


@dataclass
class IdentityRecord:
    t: float
    dilaton: float
    torsion: float
    scalar: float

    def as_dict(self) -> dict:
        return {"res_dilaton": self.dilaton, "res_torsion": self.torsion, "res_scalar": self.scalar}


def identity_residuals(states, i: int) -> IdentityRecord:
    """Residuals of the dilaton, torsion-evolution and scalar identities at ``states[i]``.

    (i)   ``d/dt log|Omega|^2 - Δ log|Omega|^2 - 1/2 |T|^2``
    (ii)  ``d/dt T + ∂ ∂†_{omega,Omega} T``
    (iii) ``R̃ - Δ log|Omega|^2``
    """
    dom = states[0].domain
    if any(s.domain is not dom for s in states):
        raise ValueError("states live on different domains")
    times = [s.t for s in states]
    st = states[i]
    L = st.log_omega_sq
    dL = time_derivative([s.log_omega_sq for s in states], times, i)
    lapL = laplacian_scalar(st, L)
    dil = dL - lapL - 0.5 * st.cd.torsion_sq
    dT = time_derivative([torsion_form(s) for s in states], times, i)
    T = Form(dom, {(2, 1): torsion_form(st)})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        tor = dT + del_(dagger_del(st, T))[(2, 1)]
    sca = st.cd.scalar - lapL
    return IdentityRecord(st.t, float(np.max(np.abs(dil))), float(np.max(np.abs(tor))),
                          float(np.max(np.abs(sca))))

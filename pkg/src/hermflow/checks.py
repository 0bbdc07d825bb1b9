"""Identity suite evaluated on a single state."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .connections import (build_connection, gauduchon_real, geodesic_integrate, j_parallel_residual,
                          metric_compatibility, torsion)
from .fields import complex_structure, tensor_norm
from .flow import (BALANCE_TOL, FlowState, balanced_residual, dagger_omega_residual,
                   laplacian_scalar, rhs_laplacian, rhs_ricci_form, torsion_form)
from .forms import d, delbar, kahler_form

TOL = 1e-10
FLOW_TOL = 1e-8
RESOLUTION_TOL = 1e-20


@dataclass(frozen=True)
class CheckResult:
    name: str
    residual: float
    threshold: float
    verdict: str  # pass | fail | skip | info

    def line(self) -> str:
        return f"{self.name}\t{self.residual:.3e}\t{self.threshold:.1e}\t{self.verdict}"

    def as_dict(self) -> dict:
        return {"name": self.name, "residual": self.residual, "threshold": self.threshold,
                "verdict": self.verdict}


def _result(name, residual, threshold):
    residual = float(residual)
    ok = np.isfinite(residual) and residual <= threshold
    return CheckResult(name, residual, threshold, "pass" if ok else "fail")


def _scale(state):
    return max(1.0, float(np.max(np.abs(state.g.G))))


def run_checks(state: FlowState, seed: int = 0, geodesics: bool = True) -> list:
    """Pass/fail records for the connection, torsion and flow identities.

    Checks that hold only on the balanced locus ``d(|Omega|^2 omega^{n-1}) = 0``
    are reported as ``skip`` elsewhere; the unsquared residual is reported for
    information.
    """
    g = state.g
    dom = state.domain
    cd = state.cd
    out = []
    # identities below are only as good as the resolution of g^{-1}
    out.append(CheckResult("spectral_tail[inverse_metric]", dom.spectral_tail(g.gi), RESOLUTION_TOL,
                           "info"))
    om = kahler_form(g)
    s = _scale(state)
    out.append(_result("hermitian_symmetry",
                       np.max(np.abs(g.G - np.conj(np.swapaxes(g.G, -1, -2)))), 1e-14 * s))
    out.append(_result("d_squared", d(d(om)).sup_abs(), TOL * s))
    out.append(_result("delbar_squared", delbar(delbar(om)).sup_abs(), TOL * s))
    J = tensor_norm(complex_structure(dom), g)
    out.append(_result("j_norm_constant", np.max(np.abs(J - np.sqrt(dom.n))), 1e-12))
    T = cd.Tlow
    out.append(_result("torsion_antisymmetry",
                       np.max(np.abs(T + np.swapaxes(T, -1, -2)), initial=0.0), 1e-12 * s))
    out.append(_result("torsion_equals_i_del_omega",
                       np.max(np.abs(torsion_form(state) - np.einsum("...lkj->...jkl", T)),
                              initial=0.0), TOL * s))
    logdet = np.log(g.det.real)
    n = dom.n
    ric = np.stack([np.stack([-dom.dzb(dom.dz(logdet, j), k) for j in range(n)], -1)
                    for k in range(n)], -2) if dom.nsample else 0.0
    out.append(_result("first_ricci_log_det", np.max(np.abs(cd.ric1 - ric)), TOL * s))
    conns = {k: build_connection(g, k) for k in ("chern", "bismut", "levi-civita")}
    conns["gauduchon(0)"] = build_connection(g, "gauduchon", 0.0)
    for k, c in conns.items():
        out.append(_result(f"metric_compatibility[{k}]", metric_compatibility(c), TOL * s))
    out.append(_result("chern_j_parallel", j_parallel_residual(conns["chern"]), TOL))
    out.append(_result("bismut_j_parallel", j_parallel_residual(conns["bismut"]), TOL))
    out.append(_result("levi_civita_torsion_free", np.max(np.abs(conns["levi-civita"].torsion_real)),
                       1e-12 * s))
    out.append(_result("gauduchon_chern_endpoint",
                       np.max(np.abs(gauduchon_real(g, 1.0) - conns["chern"].real)), 1e-12 * s))
    out.append(_result("gauduchon_bismut_endpoint",
                       np.max(np.abs(gauduchon_real(g, -1.0) - conns["bismut"].real)), 1e-12 * s))
    tor = torsion(g)
    out.append(_result("bismut_torsion_is_dc_omega", np.max(np.abs(tor.Tplus - tor.H)), TOL * s))
    if geodesics:
        rng = np.random.default_rng(seed)
        v0 = rng.standard_normal(2 * n)
        v0 /= np.sqrt(v0 @ np.reshape(g.real, (-1, 2 * n, 2 * n))[0] @ v0)
        x0 = np.zeros(2 * n)
        # speed drift here measures interpolation error of the sampled data
        lc = geodesic_integrate(conns["levi-civita"], x0, v0, 1.0, 2e-3, tol=1e-3)
        bi = geodesic_integrate(conns["bismut"], x0, v0, 1.0, 2e-3, tol=1e-3)
        out.append(_result("geodesics_levi_civita_vs_bismut", np.max(np.abs(lc.x - bi.x)), FLOW_TOL))
        out.append(CheckResult("geodesic_speed_drift", lc.speed_drift, FLOW_TOL, "info"))
    res1 = balanced_residual(state, 1)
    res2 = balanced_residual(state, 2)
    out.append(CheckResult("balanced_residual_unsquared", res1, BALANCE_TOL, "info"))
    balanced = res2 <= BALANCE_TOL
    out.append(_result("balanced_residual", res2, BALANCE_TOL) if balanced else
               CheckResult("balanced_residual", res2, BALANCE_TOL, "info"))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cond = {
            "formulation_equivalence": lambda: np.max(np.abs(rhs_ricci_form(state) - rhs_laplacian(state))),
            "weighted_adjoint_of_omega": lambda: dagger_omega_residual(state),
            "scalar_equals_laplacian_log_norm":
                lambda: np.max(np.abs(cd.scalar - laplacian_scalar(state, state.log_omega_sq))),
        }
        for name, fn in cond.items():
            if balanced:
                out.append(_result(name, fn(), FLOW_TOL * s))
            else:
                out.append(CheckResult(name, float("nan"), FLOW_TOL * s, "skip"))
    return out


def exit_status(results) -> int:
    return 1 if any(r.verdict == "fail" for r in results) else 0

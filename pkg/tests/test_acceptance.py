"""Acceptance criteria, one test per criterion, each recording a PASS/FAIL line."""

import time

import numpy as np
import pytest

from hermflow import config as cfgmod
from hermflow import presets, runlog, synthetic
from hermflow.connections import (build_connection, gauduchon_real, geodesic_integrate,
                                  metric_compatibility)
from hermflow.domain import TorusDomain
from hermflow.fields import MetricField, complex_structure, star_product, tensor_norm
from hermflow.flow import (FlowState, balanced_residual, dagger_omega_residual, kahler_ricci_rhs,
                           rhs_laplacian, rhs_ricci_form)
from hermflow.forms import d, delbar, kahler_form
from hermflow.singularity import classify, curvature_functional, rescale, select_blowup

from randomfields import kernel_fields, random_form, random_tensor


def _gap(st):
    return float(np.max(np.abs(rhs_ricci_form(st) - rhs_laplacian(st))))


def test_criterion_01_formulation_equivalence(record):
    t0 = time.perf_counter()
    st = presets.iwasawa_balanced(1.0, 2.0)
    gap0 = _gap(st)
    worst = gap0
    for s in runlog.flow_states(st, 1e-3, 500, "ricci"):
        worst = max(worst, _gap(s))
    elapsed = time.perf_counter() - t0
    ok = gap0 <= 1e-10 and worst <= 1e-8 and elapsed < 10 and abs(s.t - 0.5) < 1e-12
    record("1", ok, f"gap(t=0) = {gap0:.1e}, max gap on [0, 0.5] = {worst:.1e}, {elapsed:.2f} s")
    assert ok


def test_criterion_02a_balanced_presets(record, tm1_fine):
    dom = TorusDomain(2, 16)
    cases = {"iwasawa-balanced": presets.iwasawa_balanced(1.0, 2.0),
             "balanced-torus": presets.balanced_torus(dom), "flat": presets.flat(dom)}
    res = {k: dagger_omega_residual(v) for k, v in cases.items()}
    # a control that is off the locus of the weighted adjoint
    x = dom.coords()[0]
    G = np.exp(0.3 * np.cos(x))[..., None, None] * np.eye(2)
    ctrl = dagger_omega_residual(FlowState(0.0, MetricField(dom, G), presets.flat(dom).omega))
    ok = max(res.values()) <= 1e-8 and ctrl > 1e-3
    detail = ", ".join(f"{k} {v:.1e}" for k, v in res.items())
    record("2a", ok, f"balanced presets {detail} (<= 1e-8); e^u delta control {ctrl:.3f} (> 1e-3)")
    assert ok


@pytest.mark.xfail(strict=True, reason="TM1 satisfies d(|Omega|^2 omega^{n-1}) = 0, so the weighted "
                                       "adjoint of omega vanishes on it; see notes/decisions.md")
def test_criterion_02b_tm1_negative_control(record, tm1_state, tm1_fine):
    res = max(dagger_omega_residual(tm1_state), dagger_omega_residual(tm1_fine))
    ok = res > 1e-3
    record("2b", ok, f"TM1 residual {res:.1e}, required > 1e-3; TM1 is balanced for the squared "
                     f"weight (residual {balanced_residual(tm1_fine, 2):.1e}) so the control cannot "
                     f"separate")
    assert ok


def test_criterion_03_kahler_reduction(record):
    t0 = time.perf_counter()
    dom = TorusDomain(2, 16)
    terms = presets.DEFAULT_POTENTIAL + ({"amp": 0.05, "k": [1, 0, 0, 1]},)
    st = presets.kahler(dom, terms)
    sup_T, gap = 0.0, 0.0
    for s in runlog.flow_states(st, 1e-3, 500, "ricci"):
        sup_T = max(sup_T, float(np.max(np.abs(s.cd.Tlow))))
        gap = max(gap, float(np.max(np.abs(rhs_ricci_form(s) - kahler_ricci_rhs(s)))))
    elapsed = time.perf_counter() - t0
    ok = sup_T <= 1e-9 and gap <= 1e-8 and elapsed < 300 and abs(s.t - 0.5) < 1e-12
    record("3", ok, f"sup|T| = {sup_T:.1e}, |rhs - Kahler-Ricci rhs| = {gap:.1e}, {elapsed:.1f} s")
    assert ok


def test_criterion_04_geodesic_coincidence(record):
    t0 = time.perf_counter()
    g = presets.iwasawa_balanced(1.0, 2.0).g
    rng = np.random.default_rng(2024)
    lb, ch = 0.0, np.inf
    for _ in range(3):
        v = rng.standard_normal(6)
        v /= np.sqrt(v @ g.real @ v)
        p = {k: geodesic_integrate(build_connection(g, k), np.zeros(6), v, 1.0, 1e-3)
             for k in ("levi-civita", "bismut", "chern")}
        lb = max(lb, float(np.max(np.abs(p["levi-civita"].x - p["bismut"].x))))
        ch = min(ch, float(np.max(np.abs(p["chern"].x - p["levi-civita"].x))))
    elapsed = time.perf_counter() - t0
    ok = lb <= 1e-8 and ch > 1e-3 and elapsed < 10
    record("4", ok, f"|LC - Bismut| = {lb:.1e}, min |Chern - LC| = {ch:.3f}, {elapsed:.2f} s")
    assert ok


@pytest.fixture(scope="module")
def iwasawa_runs(tmp_path_factory):
    """The Iwasawa run at dt and dt/2, logged at the same times."""
    out = {}
    for dt, every in ((1e-3, 2), (5e-4, 4)):
        cfg = cfgmod.from_dict({"schema_version": 1, "backend": {"kind": "homogeneous", "n": 3},
                                "metric": {"preset": "iwasawa-balanced", "a": 1.0, "b": 2.0},
                                "dt": dt, "t_max": 0.5, "log_every": every, "formulation": "both"})
        res = runlog.run(cfg, tmp_path_factory.mktemp("iw"))
        assert not res.singular
        out[dt] = runlog.read_csv(res.directory / runlog.CSV_NAME)
    assert np.allclose(out[1e-3]["t"], out[5e-4]["t"])
    return out[1e-3], out[5e-4]


def _contraction(coarse, fine, col):
    # the first and last rows use one-sided stencils; compare interior rows
    a, b = coarse[col][1:-1], fine[col][1:-1]
    return float(np.max(a) / np.max(b)), float(np.max(a))


def test_criterion_05_dilaton_identity(record, iwasawa_runs):
    coarse, fine = iwasawa_runs
    ratio, res = _contraction(coarse, fine, "res_dilaton")
    drop = float(fine["min_log_omega2"][0] - np.min(fine["min_log_omega2"]))
    ok = ratio >= 3.5 and drop <= 1e-8
    record("5", ok, f"dilaton residual {res:.1e} contracts {ratio:.2f}x under dt/2; "
                    f"min log|Omega|^2 drop {drop:.1e}")
    assert ok


def test_criterion_06_torsion_evolution(record, iwasawa_runs):
    coarse, fine = iwasawa_runs
    ratio, res = _contraction(coarse, fine, "res_torsion")
    ok = ratio >= 3.5
    record("6", ok, f"torsion residual {res:.1e} contracts {ratio:.2f}x under dt/2")
    assert ok


def test_criterion_07_scaling(record, tm1_state, iwasawa_state):
    states = [tm1_state, iwasawa_state, presets.kahler(TorusDomain(2, 16))]
    f_err, om_err = 0.0, 0.0
    for st in states:
        F0 = curvature_functional(st, refine=False).F
        for C in (0.25, 4.0, 100.0):
            sc = rescale(st, C)
            F1 = curvature_functional(sc, refine=False).F
            f_err = max(f_err, float(np.max(np.abs(C * F1 - F0)) / max(1.0, np.max(F0))))
            om_err = max(om_err, float(np.max(np.abs(sc.log_omega_sq - st.log_omega_sq))))
    # blow-up normalisation on the manufactured Type I run and on the canonical curves
    norm = 0.0
    times = synthetic.sample_times(1.0, 32)
    snaps = synthetic.type_i_states(iwasawa_state, times)
    seqs = [select_blowup(times, synthetic.type_i_series(4.0, times), snaps, "I", 1.0)]
    for kind in ("IIa", "IIb", "III"):
        t, f, T = synthetic.canonical_curve(kind, count=64)
        sn = [iwasawa_state.with_metric(np.diag([1, 1, fv / 2]).astype(complex), tv)
              for tv, fv in zip(t[::4], f[::4])]
        seqs.append(select_blowup(t[::4], f[::4], sn, kind, T))
    for seq in seqs:
        for m in seq.members:
            norm = max(norm, abs(curvature_functional(m.state).at(m.state.domain, m.x_j) - 1.0))
    ok = f_err <= 1e-10 and norm <= 1e-8 and om_err <= 1e-12
    record("7", ok, f"|C F_Cg - F_g| = {f_err:.1e}, |F_j(x_j, 0) - 1| = {norm:.1e}, "
                    f"|Omega| drift {om_err:.1e} (Omega scaled by C^(n/2))")
    assert ok


def test_criterion_08_classifier(record):
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    wrong = []
    trials = 0
    for kind in ("I", "IIa", "IIb", "III"):
        variants = [synthetic.canonical_curve(kind)]
        variants += [synthetic.canonical_curve(kind, noise=0.05, rng=rng) for _ in range(10)]
        for t, f, T in variants:
            for step in (1, 2):
                trials += 1
                v = classify(t[::step], f[::step], T)
                if v.type != kind:
                    wrong.append((kind, v.type))
    elapsed = time.perf_counter() - t0
    ok = not wrong and elapsed < 1
    record("8", ok, f"{trials - len(wrong)}/{trials} verdicts exact (clean, 2x downsampled, "
                    f"5% noise), {elapsed:.3f} s")
    assert ok


def test_criterion_09_gauduchon_endpoints(record, tm1_state, iwasawa_state):
    err = 0.0
    for st in (tm1_state, iwasawa_state):
        g = st.g
        err = max(err, float(np.max(np.abs(gauduchon_real(g, 1.0) - build_connection(g, "chern").real))),
                  float(np.max(np.abs(gauduchon_real(g, -1.0) - build_connection(g, "bismut").real))))
    ok = err <= 1e-12
    record("9", ok, f"max coefficient difference {err:.1e}")
    assert ok


def test_criterion_10_geometry_kernel(record):
    t0 = time.perf_counter()
    worst = {"d2": 0.0, "dbar2": 0.0, "compat": 0.0, "J": 0.0, "star": -np.inf}
    count = 0
    for g, rng in kernel_fields(seed=10):
        dom = g.domain
        om = kahler_form(g)
        a = random_form(dom, 1, 0, rng) + random_form(dom, 0, 1, rng)
        worst["d2"] = max(worst["d2"], d(d(om)).sup_abs(), d(d(a)).sup_abs())
        worst["dbar2"] = max(worst["dbar2"], delbar(delbar(om)).sup_abs(),
                             delbar(delbar(random_form(dom, 1, 1, rng))).sup_abs())
        for kind in ("chern", "bismut", "levi-civita"):
            worst["compat"] = max(worst["compat"], metric_compatibility(build_connection(g, kind)))
        J = tensor_norm(complex_structure(dom), g)
        worst["J"] = max(worst["J"], float(np.max(np.abs(J - np.sqrt(dom.n)))))
        t1 = random_tensor(dom, ("u", "d", "db"), rng)
        t2 = random_tensor(dom, ("d", "ub"), rng)
        lhs = tensor_norm(star_product(t1, t2, [(0, 0), (2, 1)]), g)
        rhs = tensor_norm(t1, g) * tensor_norm(t2, g)
        worst["star"] = max(worst["star"], float(np.max(lhs / rhs)))
        count += 1
    # spectral derivatives on every resolved mode of a 16-point axis
    dom = TorusDomain(1, 16)
    x = dom.coords()[0]
    spec = max(float(np.max(np.abs(dom.dreal(np.sin(k * x), 0) - k * np.cos(k * x))))
               for k in range(0, 8))
    elapsed = time.perf_counter() - t0
    ok = (count == 1000 and worst["d2"] <= 1e-10 and worst["dbar2"] <= 1e-10
          and worst["compat"] <= 1e-10 and worst["J"] <= 1e-12 and worst["star"] <= 1 + 1e-12
          and spec <= 1e-12 and elapsed < 120)
    record("10", ok, f"{count} random fields: d^2 {worst['d2']:.1e}, dbar^2 {worst['dbar2']:.1e}, "
                     f"compatibility {worst['compat']:.1e}, |J| {worst['J']:.1e}, "
                     f"max |a*b|/(|a||b|) {worst['star']:.6f}; spectral {spec:.1e}; {elapsed:.1f} s")
    assert ok

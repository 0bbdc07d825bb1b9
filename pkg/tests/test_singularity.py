import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hermflow import presets, synthetic
from hermflow.domain import iwasawa
from hermflow.fields import MetricField
from hermflow.flow import FlowState
from hermflow.singularity import (BlowupError, ClassificationError, ClassifyThresholds, classify,
                                  compose_rescalings, convergence_monitor, curvature_functional,
                                  injectivity_estimate, rescale, select_blowup)

DOM = iwasawa()


def states_for_curve(times, f, a=1.0):
    """Invariant Iwasawa metrics ``diag(a, a, b)`` whose functional equals ``f`` (``f = 2b/a^2``)."""
    return [FlowState(float(t), MetricField(DOM, np.diag([a, a, fv * a * a / 2]).astype(complex)),
                      presets.iwasawa_balanced(1, 1, DOM).omega)
            for t, fv in zip(times, f)]


# ------------------------------------------------------------------ classifier

@pytest.mark.parametrize("kind", ["I", "IIa", "IIb", "III"])
def test_canonical_curves(kind):
    t, f, T = synthetic.canonical_curve(kind)
    v = classify(t, f, T)
    assert v.type == kind, v
    assert v.reason == ""


@pytest.mark.parametrize("kind", ["I", "IIa", "IIb", "III"])
def test_downsampled_and_noisy_curves(kind):
    rng = np.random.default_rng(7)
    for _ in range(25):
        t, f, T = synthetic.canonical_curve(kind, noise=0.05, rng=rng)
        assert classify(t[::2], f[::2], T).type == kind
        assert classify(t, f, T).type == kind


def test_sup_product_values():
    t, f, T = synthetic.canonical_curve("I")
    assert abs(classify(t, f, T).sup_product - 1.0) < 1e-12
    t, f, T = synthetic.canonical_curve("III")
    v = classify(t, f, T)
    assert 2.99 < v.sup_product < 3.0


def test_flat_series_is_bounded_type():
    t = synthetic.sample_times(np.inf, 64)
    assert classify(t, np.zeros_like(t)).type == "III"


def test_borderline_slope_is_inconclusive():
    t = synthetic.sample_times(np.inf, 256)
    rng = np.random.default_rng(1)
    # t f grows like t^0.05, exactly the threshold, seen through 5% noise
    v = classify(t, t ** -0.95 * (1 + 0.05 * rng.uniform(-1, 1, t.size)))
    assert v.type == "inconclusive"
    assert "indistinguishable" in v.reason


def test_noisy_tail_is_inconclusive():
    rng = np.random.default_rng(0)
    t = synthetic.sample_times(np.inf, 256)
    v = classify(t, (1 / t) * np.exp(rng.normal(0, 0.5, t.size)))
    assert v.type == "inconclusive"


def test_thresholds_are_configurable():
    t = synthetic.sample_times(np.inf, 256)
    f = t ** -0.9  # slope 0.1
    assert classify(t, f).type == "IIb"
    assert classify(t, f, thresholds=ClassifyThresholds(slope_tol=0.2)).type == "III"


@pytest.mark.parametrize("t,f,T,msg", [
    (np.arange(10.0), np.ones(10), np.inf, "at least"),
    (np.arange(40.0)[::-1], np.ones(40), np.inf, "increasing"),
    (np.arange(40.0), -np.ones(40), np.inf, "non-negative"),
    (np.arange(40.0), np.ones(40), 10.0, "before the horizon"),
    (np.r_[np.arange(39.0), np.nan], np.ones(40), np.inf, "non-finite"),
])
def test_classify_errors(t, f, T, msg):
    with pytest.raises(ClassificationError, match=msg):
        classify(t, f, T)


# ------------------------------------------------------------------ scaling

@pytest.mark.parametrize("C", [0.25, 4.0, 100.0])
def test_functional_scales_inversely(C, tm1_state, iwasawa_state):
    for st0 in (tm1_state, iwasawa_state):
        F0 = curvature_functional(st0, refine=False).F
        F1 = curvature_functional(rescale(st0, C), refine=False).F
        assert np.max(np.abs(F1 - F0 / C)) <= 1e-10 * max(1.0, np.max(F0))


@pytest.mark.parametrize("C", [0.25, 4.0, 100.0])
def test_omega_norm_scale_invariant(C, tm1_state, iwasawa_state):
    for st0 in (tm1_state, iwasawa_state):
        assert np.max(np.abs(rescale(st0, C).log_omega_sq - st0.log_omega_sq)) < 1e-12


def test_rescaled_time_and_composition(iwasawa_state):
    st0 = iwasawa_state.with_metric(iwasawa_state.g.G, 0.3)
    one = rescale(rescale(st0, 4.0, 0.1), 2.5, 0.2)
    C, tc = compose_rescalings(4.0, 0.1, 2.5, 0.2)
    two = rescale(st0, C, tc)
    assert abs(one.t - two.t) < 1e-14
    assert np.max(np.abs(one.g.G - two.g.G)) < 1e-14
    assert np.max(np.abs(one.omega.coef - two.omega.coef)) < 1e-12


def test_rescaling_commutes_with_flow(iwasawa_state):
    from hermflow.flow import step

    C, dt = 4.0, 1e-3
    a = rescale(step(iwasawa_state, dt), C)
    b = step(rescale(iwasawa_state, C), C * dt)
    assert np.max(np.abs(a.g.G - b.g.G)) <= 1e-12
    with pytest.raises(ValueError):
        rescale(iwasawa_state, 0.0)


# ------------------------------------------------------------------ blow-up

def _check_bound(seq, snaps):
    ts = np.array([s.t for s in snaps])
    Fs = np.array([curvature_functional(s).f for s in snaps])
    for m in seq.members:
        assert abs(curvature_functional(m.state).f - 1.0) < 1e-8
        s = m.rescaled_time(ts)
        bound = m.bound(s)
        horizon = m.params.get("T_j", np.inf)
        ok = np.isfinite(bound) & (ts < horizon)
        assert np.any(ok)
        assert np.all(Fs[ok] / m.C_j <= bound[ok] * (1 + 1e-10))


@pytest.mark.parametrize("kind", ["I", "IIa", "IIb", "III"])
def test_blowup_bounds_on_canonical_curves(kind):
    t, f, T = synthetic.canonical_curve(kind, count=64)
    snaps = states_for_curve(t[::4], f[::4])
    seq = select_blowup(t[::4], f[::4], snaps, kind, T)
    assert len(seq.members) == 4
    _check_bound(seq, snaps)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31), kind=st.sampled_from(["I", "IIa", "IIb", "III"]))
def test_blowup_bounds_on_perturbed_curves(seed, kind):
    rng = np.random.default_rng(seed)
    t, f, T = synthetic.canonical_curve(kind, count=48, noise=0.2, rng=rng)
    snaps = states_for_curve(t[::3], f[::3])
    seq = select_blowup(t[::3], f[::3], snaps, kind, T, count=3)
    _check_bound(seq, snaps)


def test_type_i_manufactured_states_sit_on_the_bound(iwasawa_state):
    times = synthetic.sample_times(1.0, 32)
    snaps = synthetic.type_i_states(iwasawa_state, times)
    f = synthetic.type_i_series(iwasawa_state.f(), times)
    seq = select_blowup(times, f, snaps, "I", 1.0)
    for (s, fr, b), m in zip(seq.rescaled_curves(times, f), seq.members):
        ok = np.isfinite(b)
        assert np.max(np.abs(fr[ok] / b[ok] - 1)) < 1e-10
        assert m.params["C"] == pytest.approx(4.0)


def test_blowup_errors(iwasawa_state, torus2):
    t, f, T = synthetic.canonical_curve("I", count=64)
    snaps = states_for_curve(t[::8], f[::8])
    with pytest.raises(BlowupError, match="finite horizon"):
        select_blowup(t, f, snaps, "I", np.inf)
    with pytest.raises(BlowupError, match="infinite horizon"):
        select_blowup(t, f, snaps, "III", 1.0)
    with pytest.raises(BlowupError, match="3 snapshots"):
        select_blowup(t, f, snaps[:2], "I", 1.0)
    flat = [presets.flat(torus2).with_metric(presets.flat(torus2).g.G, s) for s in (0, 1, 2)]
    with pytest.raises(BlowupError, match="no singularity"):
        select_blowup([0, 1, 2], [0, 0, 0], flat, "III")
    with pytest.raises(ValueError):
        select_blowup(t, f, snaps, "IV", 1.0)


# ------------------------------------------------------------------ injectivity radius

def test_flat_torus_injectivity(torus2):
    assert injectivity_estimate(presets.flat(torus2, 0.5)).value == pytest.approx(np.pi, abs=1e-12)
    est = injectivity_estimate(presets.flat(torus2))
    assert est.value == pytest.approx(np.pi * np.sqrt(2), abs=1e-12)
    assert est.method == "lattice"


def test_iwasawa_injectivity_is_converged(iwasawa_state):
    a = injectivity_estimate(iwasawa_state)
    b = injectivity_estimate(iwasawa_state, steps=2000)
    assert a.method == "conjugate-shooting"
    assert a.value == pytest.approx(7.180902722, abs=1e-8)
    assert abs(a.value - b.value) < 1e-8
    assert a.ratio == pytest.approx(14.3618, abs=1e-4)


def test_injectivity_ratio_is_scale_invariant(iwasawa_state):
    base = injectivity_estimate(iwasawa_state)
    for C in (0.25, 4.0):
        est = injectivity_estimate(rescale(iwasawa_state, C))
        assert abs(est.ratio - base.ratio) < 1e-10
        assert est.value == pytest.approx(base.value * np.sqrt(C), rel=1e-10)


def test_injectivity_not_computable_for_curved_torus(tm1_state):
    est = injectivity_estimate(tm1_state)
    assert not est.computable
    assert est.note


# ------------------------------------------------------------------ convergence monitor

def test_convergence_monitor_on_scaled_sequence(iwasawa_state):
    ref = iwasawa_state.g
    ms = [MetricField(ref.domain, ref.G * (1 + 1 / m)) for m in range(1, 6)]
    rep = convergence_monitor(ms, ref, times=np.arange(1.0, 6.0))
    assert np.allclose(rep.N, [1 + 1 / m for m in range(1, 6)], atol=1e-14)
    inc = np.array([1 / m - 1 / (m + 1) for m in range(1, 5)]) * np.sqrt(6)
    assert np.allclose(rep.increments[:, 0], inc, atol=1e-13)
    # the reference connection is Levi-Civita for ref, so every derivative vanishes
    assert np.max(rep.nabla[:, 1:]) < 1e-13
    assert np.all(np.isfinite(rep.dt_nabla))


def test_convergence_monitor_on_torus(torus2):
    ref = presets.flat(torus2).g
    g = presets.kahler(torus2).g
    rep = convergence_monitor([ref, g], ref, p_max=2)
    assert rep.N[0] == pytest.approx(1.0)
    assert rep.N[1] > 1.0
    assert rep.nabla[1, 1] > 0
    with pytest.raises(ValueError):
        convergence_monitor([ref], ref, p_max=4)

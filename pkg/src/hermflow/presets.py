"""Initial data used by tests, scripts and the command line."""

from __future__ import annotations

import numpy as np

from .domain import HomogeneousDomain, TorusDomain, iwasawa
from .fields import HoloVolumeForm, MetricField
from .flow import FlowState

DEFAULT_POTENTIAL = ({"amp": 0.1, "k": [1, 0, 0, 0]}, {"amp": 0.05, "k": [0, 1, 0, 0]})


def _state(dom, G, coef=None, t=0.0):
    return FlowState(t, MetricField(dom, np.asarray(G, dtype=complex)), HoloVolumeForm(dom, coef))


def flat(dom: TorusDomain, scale: float = 1.0) -> FlowState:
    """Constant metric ``scale * delta``."""
    G = scale * np.eye(dom.n, dtype=complex).reshape((1,) * dom.nsample + (dom.n, dom.n))
    return _state(dom, G)


def tm1(dom: TorusDomain, eps: float = 0.5) -> FlowState:
    """``g_{1 1̄} = 1 + eps sin(x^2)``, all other entries flat (non-Kähler for ``n >= 2``)."""
    if dom.n < 2:
        raise ValueError("tm1 needs complex dimension at least 2")
    if not abs(eps) < 1:
        raise ValueError("tm1 needs |eps| < 1 for positivity")
    x2 = dom.coords()[1]
    G = np.zeros(x2.shape + (dom.n, dom.n), dtype=complex)
    G[..., 0, 0] = 1 + eps * np.sin(x2)
    for j in range(1, dom.n):
        G[..., j, j] = 1
    return _state(dom, G)


def potential(dom: TorusDomain, terms=DEFAULT_POTENTIAL) -> np.ndarray:
    """``phi = sum amp cos(k . x + phase)`` with ``k`` indexed like the coordinates ``(x, y)``."""
    xs = dom.coords()
    phi = np.zeros((1,) * dom.nsample)
    for term in terms:
        k = list(term["k"])
        if len(k) != dom.nsample:
            raise ValueError(f"wave vector {k} needs {dom.nsample} entries")
        if any(int(v) != v for v in k):
            raise ValueError("wave vectors must be integer")
        if max(abs(v) for v in k) > dom.N // 3:
            raise ValueError(f"wave vector {k} is not resolved at N = {dom.N}")
        # axes with zero wavenumber stay compressed
        arg = sum(kv * x for kv, x in zip(k, xs) if kv) + term.get("phase", 0.0)
        phi = phi + term["amp"] * np.cos(arg)
    return phi


def kahler(dom: TorusDomain, terms=DEFAULT_POTENTIAL) -> FlowState:
    """``g = delta + i ∂∂̄ phi`` (closed Kähler form)."""
    phi = potential(dom, terms)
    n = dom.n
    G = np.zeros(phi.shape + (n, n), dtype=complex)
    for j in range(n):
        for k in range(n):
            G[..., j, k] = (j == k) + dom.dz(dom.dzb(phi, k), j)
    return _state(dom, G)


def balanced_torus(dom: TorusDomain, terms=DEFAULT_POTENTIAL) -> FlowState:
    """``g = g_K / det g_K`` for a Kähler ``g_K``: then ``|Omega|^2 omega^{n-1} = omega_K^{n-1}`` is closed."""
    st = kahler(dom, terms)
    G = st.g.G / st.g.det[..., None, None]
    return _state(dom, G)


def iwasawa_balanced(a: float = 1.0, b: float = 1.0, dom: HomogeneousDomain = None) -> FlowState:
    """Invariant metric ``diag(a, a, b)`` on the Iwasawa algebra (balanced for every ``a, b > 0``)."""
    if not (a > 0 and b > 0):
        raise ValueError("iwasawa-balanced needs a, b > 0")
    dom = dom or iwasawa()
    return _state(dom, np.diag([a, a, b]).astype(complex))


def random_metric(dom: TorusDomain, rng, modes: int = 3, kmax: int = 1, strength: float = 0.6):
    """Random positive Hermitian metric ``delta + sum_m H_m cos(k_m . x + phi_m)``.

    The Hermitian amplitudes are normalised so their operator norms sum to
    ``strength < 1``, which keeps the result positive definite.
    """
    if not 0 <= strength < 1:
        raise ValueError("strength must lie in [0, 1)")
    n = dom.n
    xs = dom.coords()
    G = np.eye(n, dtype=complex).reshape((1,) * dom.nsample + (n, n))
    amps = rng.dirichlet(np.ones(modes)) * strength
    for amp in amps:
        A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        H = A + A.conj().T
        H *= amp / np.max(np.abs(np.linalg.eigvalsh(H)))
        k = rng.integers(-kmax, kmax + 1, dom.nsample)
        arg = sum(kv * x for kv, x in zip(k, xs) if kv) + rng.uniform(0, 2 * np.pi)
        G = G + np.cos(arg)[..., None, None] * H
    return MetricField(dom, G)

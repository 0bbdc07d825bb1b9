"""Complex differential forms in a holomorphic frame.

A form is a mapping ``{(p, q): array}`` of bidegree components.  The ``(p, q)``
array has shape ``(*sample_axes, n^p, n^q)`` and stores
``alpha(e_{a_1}, ..., e_{a_p}, conj(e_{b_1}), ..., conj(e_{b_q}))``,
antisymmetric within each group.  Wedge products use the determinant
convention, so ``dz ^ dzb (e, conj(e)) = 1``.
"""

from __future__ import annotations

import itertools
from math import factorial

import numpy as np

from .domain import permutation_sign, real_frame_matrix


class FormError(ValueError):
    """Input is not an antisymmetric form of the expected bidegree."""


def _perms(k):
    return [(p, permutation_sign(p)) for p in itertools.permutations(range(k))]


def alternate(arr: np.ndarray, start: int, k: int) -> np.ndarray:
    """Signed sum over permutations of ``k`` consecutive axes beginning at ``start``."""
    if k <= 1:
        return arr.copy()
    out = np.zeros_like(arr)
    base = list(range(arr.ndim))
    for perm, sgn in _perms(k):
        axes = base[:start] + [start + p for p in perm] + base[start + k:]
        out += sgn * np.transpose(arr, axes)
    return out


class Form(dict):
    """Sum of bidegree components on a domain."""

    def __init__(self, domain, comps=None):
        super().__init__()
        self.domain = domain
        for key, val in (comps or {}).items():
            self[tuple(key)] = np.asarray(val)

    @property
    def degree(self) -> int:
        degs = {p + q for p, q in self}
        if len(degs) > 1:
            raise FormError(f"inhomogeneous form with degrees {sorted(degs)}")
        return degs.pop() if degs else 0

    def _check(self):
        ns = self.domain.nsample
        for (p, q), arr in self.items():
            if arr.ndim != ns + p + q:
                raise FormError(f"component {(p, q)} has rank {arr.ndim}, expected {ns + p + q}")

    def __add__(self, other):
        out = Form(self.domain, dict(self))
        for key, val in other.items():
            out[key] = out[key] + val if key in out else val
        return out

    def __sub__(self, other):
        return self + other * (-1)

    def __mul__(self, scalar):
        return Form(self.domain, {k: v * scalar for k, v in self.items()})

    __rmul__ = __mul__

    def scale_by(self, f) -> "Form":
        """Multiply by a scalar function on the sample axes."""
        out = {}
        for (p, q), v in self.items():
            fb = np.asarray(f).reshape(np.shape(f) + (1,) * (p + q))
            out[(p, q)] = v * fb
        return Form(self.domain, out)

    def conj(self) -> "Form":
        """Complex conjugate: the ``(q, p)`` component is ``(-1)^{pq} conj(alpha)``."""
        ns = self.domain.nsample
        out = {}
        for (p, q), v in self.items():
            axes = list(range(ns)) + [ns + p + i for i in range(q)] + [ns + i for i in range(p)]
            out[(q, p)] = (-1) ** (p * q) * np.conj(np.transpose(v, axes))
        return Form(self.domain, out)

    def sup_abs(self) -> float:
        return max((float(np.max(np.abs(v))) for v in self.values()), default=0.0)


def kahler_form(g) -> Form:
    """``omega = i g_{j k̄} dz^j ^ dz̄^k``."""
    return Form(g.domain, {(1, 1): 1j * g.G})


def _del_block(dom, arr, p, anti):
    """``d`` applied along one group (holomorphic or not) of a ``(p, q)`` block."""
    ns = dom.nsample
    n = dom.n
    k = p  # size of the group being raised
    if anti:
        # bring the antiholomorphic group to the front of the slot axes
        q = arr.ndim - ns - p
        axes = list(range(ns)) + [ns + p + i for i in range(q)] + [ns + i for i in range(p)]
        arr = np.transpose(arr, axes)
        k = q
        c = np.conj(dom.c)
        deriv = dom.dzb
    else:
        c = dom.c
        deriv = dom.dz
    parts = np.broadcast_arrays(*[deriv(arr, a) for a in range(n)])
    E = np.stack(parts, axis=ns)
    out = alternate(E, ns, k + 1) / factorial(k)
    if k >= 1 and np.any(c):
        K = np.tensordot(c, arr, axes=([0], [ns]))  # axes: a, b, samples, rest
        K = np.moveaxis(K, [0, 1], [ns, ns + 1]) if ns else K
        out = out - alternate(K, ns, k + 1) / (2 * factorial(k - 1))
    if anti:
        total = out.ndim - ns
        back = list(range(ns)) + [ns + k + 1 + i for i in range(total - k - 1)] + \
            [ns + i for i in range(k + 1)]
        out = np.transpose(out, back)
    return out


def del_(form: Form) -> Form:
    """Holomorphic exterior derivative ``∂``."""
    form._check()
    out = {}
    for (p, q), v in form.items():
        out[(p + 1, q)] = _del_block(form.domain, v, p, anti=False)
    return Form(form.domain, out)


def delbar(form: Form) -> Form:
    """Antiholomorphic exterior derivative ``∂̄``."""
    form._check()
    out = {}
    for (p, q), v in form.items():
        out[(p, q + 1)] = (-1) ** p * _del_block(form.domain, v, p, anti=True)
    return Form(form.domain, out)


def d(form: Form) -> Form:
    return del_(form) + delbar(form)


def dc(form: Form) -> Form:
    """``d^c = i(∂ - ∂̄)``."""
    return (del_(form) - delbar(form)) * 1j


def exterior_ops(form: Form) -> dict:
    """All four exterior derivatives of ``form``."""
    dl = del_(form)
    db = delbar(form)
    return {"del": dl, "delbar": db, "d": dl + db, "dc": (dl - db) * 1j}


def wedge(a: Form, b: Form) -> Form:
    """Exterior product (determinant convention)."""
    dom = a.domain
    ns = dom.nsample
    out = {}
    for (p, q), x in a.items():
        for (r, s), y in b.items():
            # x_{A B} y_{C D} with slot order (A, B, C, D) -> (A, C, B, D)
            xe = x.reshape(x.shape + (1,) * (r + s))
            ye = y.reshape(y.shape[:ns] + (1,) * (p + q) + y.shape[ns:])
            prod = xe * ye
            axes = list(range(ns)) + [ns + i for i in range(p)] + \
                [ns + p + q + i for i in range(r)] + [ns + p + i for i in range(q)] + \
                [ns + p + q + r + i for i in range(s)]
            prod = np.transpose(prod, axes)
            prod = alternate(prod, ns, p + r)
            prod = alternate(prod, ns + p + r, q + s)
            coef = (-1) ** (q * r) / (factorial(p) * factorial(q) * factorial(r) * factorial(s))
            key = (p + r, q + s)
            if p + r > dom.n or q + s > dom.n:
                continue
            out[key] = out.get(key, 0) + coef * prod
    return Form(dom, out)


def power(form: Form, k: int) -> Form:
    """``form^k``; ``form^0`` is the constant function 1."""
    dom = form.domain
    out = Form(dom, {(0, 0): np.ones((1,) * dom.nsample, dtype=complex)})
    for _ in range(k):
        out = wedge(out, form)
    return out


def to_full(form: Form) -> np.ndarray:
    """Components on the complexified frame ``(e_1..e_n, conj(e_1)..conj(e_n))``."""
    dom = form.domain
    ns = dom.nsample
    n = dom.n
    k = form.degree
    shape = np.broadcast_shapes(*[v.shape[:ns] for v in form.values()]) if form else \
        (1,) * ns
    full = np.zeros(shape + (2 * n,) * k, dtype=complex)
    for (p, q), v in form.items():
        for hol in itertools.combinations(range(k), p):
            anti = [i for i in range(k) if i not in hol]
            order = list(hol) + anti  # slot of v -> position in full
            sgn = permutation_sign(order)
            axes = list(range(ns)) + [ns + order.index(i) for i in range(k)]
            idx = [slice(None)] * ns + [slice(0, n) if i in hol else slice(n, 2 * n)
                                        for i in range(k)]
            full[tuple(idx)] += sgn * np.transpose(v, axes)
    return full


def to_real(form: Form) -> np.ndarray:
    """Components on the real frame ``E = (X_1..X_n, JX_1..JX_n)``."""
    full = to_full(form)
    ns = form.domain.nsample
    V = real_frame_matrix(form.domain.n)
    for i in range(full.ndim - ns):
        full = np.moveaxis(np.tensordot(full, V, axes=([ns + i], [1])), -1, ns + i)
    return full


def real_part_check(form: Form) -> float:
    """Size of the imaginary part of the real-frame components (0 for real forms)."""
    return float(np.max(np.abs(to_real(form).imag), initial=0.0))


def _sharp_mats(g):
    """Per-slot matrices turning components into their metric duals."""
    gi = g.gi
    hol = np.conj(gi)  # psi#_a = sum_a' conj(g^{a a'bar}) psi_a'
    anti = np.conj(np.swapaxes(gi, -1, -2))
    return hol, anti


def _apply_slot(arr, M, axis, ns):
    """``out[..., i, ...] = sum_j M[..., i, j] arr[..., j, ...]`` along ``axis``."""
    arr = np.moveaxis(arr, axis, -1)
    M = M.reshape(M.shape[:ns] + (1,) * (arr.ndim - ns - 1) + M.shape[-2:])
    out = np.einsum("...ij,...j->...i", M, arr)
    return np.moveaxis(out, -1, axis)


def sharp(g, arr, p, q):
    """Metric dual of a ``(p, q)`` block: ``<a, b> = sum a conj(sharp(b)) / (p! q!)``."""
    ns = g.domain.nsample
    hol, anti = _sharp_mats(g)
    for i in range(p):
        arr = _apply_slot(arr, hol, ns + i, ns)
    for i in range(q):
        arr = _apply_slot(arr, anti, ns + p + i, ns)
    return arr


def flat(g, arr, p, q):
    """Inverse of :func:`sharp`."""
    ns = g.domain.nsample
    hol = np.conj(np.swapaxes(g.G, -1, -2))
    anti = np.conj(g.G)
    for i in range(p):
        arr = _apply_slot(arr, hol, ns + i, ns)
    for i in range(q):
        arr = _apply_slot(arr, anti, ns + p + i, ns)
    return arr


def form_inner(g, a: Form, b: Form) -> np.ndarray:
    """Pointwise Hermitian inner product ``<a, b>`` summed over bidegrees."""
    ns = g.domain.nsample
    total = 0
    for (p, q), x in a.items():
        if (p, q) not in b:
            continue
        y = sharp(g, b[(p, q)], p, q)
        total = total + np.sum(x * np.conj(y), axis=tuple(range(ns, ns + p + q))) / (
            factorial(p) * factorial(q))
    return total


def form_norm(g, a: Form) -> np.ndarray:
    return np.sqrt(np.abs(form_inner(g, a, a)))

"""Tensor, metric and volume-form containers with pointwise norms and contractions.

Slot kinds
----------
``'d'``  holomorphic covariant (``dz^j``)      ``'u'``  holomorphic contravariant
``'db'`` antiholomorphic covariant (``dz̄^j``)  ``'ub'`` antiholomorphic contravariant
``'D'``  real covariant (real frame ``E_a``)    ``'U'``  real contravariant

Metric components are stored as ``G[..., j, k] = g_{j k̄} = g(e_j, conj(e_k))``.
The real metric of the underlying Riemannian manifold is
``g_R(X, Y) = 2 Re g_{j k̄} X^j conj(Y^k)``, the symmetric bilinear extension of
``g`` to the real frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .domain import real_complex_structure, real_frame_matrix

SLOT_KINDS = ("d", "u", "db", "ub", "D", "U")
_PAIRS = {("u", "d"), ("d", "u"), ("ub", "db"), ("db", "ub"), ("U", "D"), ("D", "U")}

MIN_EIGENVALUE = 1e-10


class SingularMetricError(ValueError):
    """Metric with an eigenvalue below the degeneracy threshold."""


class SignatureError(ValueError):
    """Slot signature incompatible with the requested operation."""


@dataclass(frozen=True, eq=False)
class TensorField:
    """Complex multi-index array over the samples of a domain.

    ``data`` has shape ``(*sample_axes, *slots)``; each slot has length ``n``
    (complex kinds) or ``2n`` (real kinds).
    """

    data: np.ndarray
    sig: tuple
    domain: object
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        sig = tuple(self.sig)
        object.__setattr__(self, "sig", sig)
        bad = [s for s in sig if s not in SLOT_KINDS]
        if bad:
            raise SignatureError(f"unknown slot kinds {bad}")
        data = np.asarray(self.data)
        if data.ndim != self.domain.nsample + len(sig):
            raise SignatureError(
                f"array of rank {data.ndim} does not match {self.domain.nsample} sample axes "
                f"and {len(sig)} slots")
        n = self.domain.n
        for ax, s in zip(data.shape[self.domain.nsample:], sig):
            want = 2 * n if s in ("D", "U") else n
            if ax != want:
                raise SignatureError(f"slot of kind {s!r} has length {ax}, expected {want}")

    @property
    def nslots(self) -> int:
        return len(self.sig)

    def __add__(self, other):
        self._check_compatible(other)
        return TensorField(self.data + other.data, self.sig, self.domain)

    def __sub__(self, other):
        self._check_compatible(other)
        return TensorField(self.data - other.data, self.sig, self.domain)

    def __mul__(self, scalar):
        return TensorField(self.data * scalar, self.sig, self.domain)

    __rmul__ = __mul__

    def _check_compatible(self, other):
        if other.sig != self.sig or other.domain is not self.domain:
            raise SignatureError("tensors live on different domains or have different signatures")


@dataclass(frozen=True, eq=False)
class MetricField:
    """Hermitian metric ``G[..., j, k] = g_{j k̄}`` on a domain."""

    domain: object
    G: np.ndarray
    check: bool = True

    def __post_init__(self):
        G = np.asarray(self.G, dtype=complex)
        object.__setattr__(self, "G", G)
        n = self.domain.n
        if G.shape[-2:] != (n, n) or G.ndim != self.domain.nsample + 2:
            raise SignatureError(f"metric array has shape {G.shape}")
        if self.check:
            self.validate()

    def validate(self, herm_tol: float = 1e-14):
        G = self.G
        scale = max(1.0, float(np.max(np.abs(G))))
        asym = float(np.max(np.abs(G - np.conj(np.swapaxes(G, -1, -2)))))
        if asym > herm_tol * scale:
            raise ValueError(f"metric is not Hermitian (defect {asym:.3e})")
        if not np.all(np.isfinite(G)):
            raise SingularMetricError("metric has non-finite entries")
        lam = self.min_eigenvalue
        if lam < MIN_EIGENVALUE:
            raise SingularMetricError(f"metric degenerates: min eigenvalue {lam:.3e}")

    @cached_property
    def min_eigenvalue(self) -> float:
        return float(np.min(np.linalg.eigvalsh(self.hermitian_part)))

    @cached_property
    def hermitian_part(self) -> np.ndarray:
        return 0.5 * (self.G + np.conj(np.swapaxes(self.G, -1, -2)))

    @property
    def n(self) -> int:
        return self.domain.n

    @cached_property
    def gi(self) -> np.ndarray:
        """``gi[..., k, p] = g^{k p̄}``."""
        return np.swapaxes(np.linalg.inv(self.G), -1, -2)

    @cached_property
    def det(self) -> np.ndarray:
        return np.linalg.det(self.G).real

    @cached_property
    def chol(self) -> np.ndarray:
        """Lower Cholesky factor ``L`` with ``G = L L^H``."""
        return np.linalg.cholesky(self.hermitian_part)

    @cached_property
    def _chol_inv_t(self) -> np.ndarray:
        return np.swapaxes(np.linalg.inv(self.chol), -1, -2)

    @cached_property
    def real(self) -> np.ndarray:
        """Real metric ``g_R[a, b] = g(E_a, E_b)`` in the real frame."""
        n = self.n
        W = real_frame_matrix(n)[:, :n]
        gR = np.einsum("aj,...jk,bk->...ab", W, self.G, np.conj(W))
        return 2 * gR.real

    @cached_property
    def real_inv(self) -> np.ndarray:
        return np.linalg.inv(self.real)

    @cached_property
    def _real_chol_inv_t(self) -> np.ndarray:
        return np.swapaxes(np.linalg.inv(np.linalg.cholesky(self.real)), -1, -2)

    @cached_property
    def _real_chol(self) -> np.ndarray:
        return np.linalg.cholesky(self.real)

    def slot_transform(self, kind: str) -> np.ndarray:
        """Matrix ``P`` with ``|v|^2 = sum_a |sum_j P[j, a] v_j|^2`` for one slot."""
        if kind == "d":
            return self._chol_inv_t
        if kind == "u":
            return self.chol
        if kind == "db":
            return np.conj(self._chol_inv_t)
        if kind == "ub":
            return np.conj(self.chol)
        if kind == "D":
            return self._real_chol_inv_t
        if kind == "U":
            return self._real_chol
        raise SignatureError(f"unknown slot kind {kind!r}")

    def scaled(self, C: float) -> "MetricField":
        return MetricField(self.domain, C * self.G)

    def as_tensor(self) -> TensorField:
        return TensorField(self.G, ("d", "db"), self.domain)

    def inverse_tensor(self) -> TensorField:
        return TensorField(self.gi, ("u", "ub"), self.domain)


@dataclass(frozen=True, eq=False)
class HoloVolumeForm:
    """``Omega = coef * theta^1 ^ ... ^ theta^n`` in the holomorphic coframe."""

    domain: object
    coef: np.ndarray = None

    def __post_init__(self):
        coef = np.asarray(1.0 if self.coef is None else self.coef, dtype=complex)
        if coef.ndim == 0 and self.domain.nsample:
            coef = coef.reshape((1,) * self.domain.nsample)
        object.__setattr__(self, "coef", coef)
        if np.min(np.abs(coef)) <= 0:
            raise ValueError("holomorphic volume form vanishes somewhere")

    def holomorphicity_residual(self) -> float:
        dom = self.domain
        return max(float(np.max(np.abs(dom.dzb(self.coef, j)), initial=0.0))
                   for j in range(dom.n))

    def scaled(self, factor) -> "HoloVolumeForm":
        return HoloVolumeForm(self.domain, self.coef * factor)


def complex_structure(domain, real: bool = False) -> TensorField:
    """``J`` as a tensor field.

    The complex-slot form keeps the ``(1,0)`` block ``J^k_j = i delta^k_j``;
    the real form is the full endomorphism of the real tangent space.
    """
    n = domain.n
    shape = (1,) * domain.nsample
    if real:
        J = real_complex_structure(n).astype(complex)
        return TensorField(np.broadcast_to(J, shape + J.shape), ("U", "D"), domain)
    J = 1j * np.eye(n)
    return TensorField(np.broadcast_to(J, shape + J.shape), ("u", "d"), domain)


def tensor_norm(t: TensorField, g: MetricField, squared: bool = False) -> np.ndarray:
    """Pointwise norm of ``t``, contracting each slot with ``g`` or its inverse."""
    if t.domain is not g.domain:
        raise SignatureError("tensor and metric live on different domains")
    g.validate(herm_tol=np.inf)
    data = t.data
    ns = t.domain.nsample
    for i, kind in enumerate(t.sig):
        P = g.slot_transform(kind)
        data = np.moveaxis(data, ns + i, -1)
        P = P.reshape(P.shape[:ns] + (1,) * (t.nslots - 1) + P.shape[-2:])
        data = np.einsum("...j,...ja->...a", data, P)
        data = np.moveaxis(data, -1, ns + i)
    sq = np.sum(np.abs(data) ** 2, axis=tuple(range(ns, ns + t.nslots)))
    return sq if squared else np.sqrt(sq)


def star_product(t1: TensorField, t2: TensorField, pairs) -> TensorField:
    """Contract slot ``i`` of ``t1`` with slot ``j`` of ``t2`` for each ``(i, j)`` in ``pairs``.

    Only up/down pairs of the same holomorphy type may be contracted, so the
    result obeys ``|t1 * t2| <= |t1| |t2|`` pointwise (Cauchy-Schwarz, K = 1).
    Remaining slots of ``t1`` come first, then those of ``t2``.
    """
    if t1.domain is not t2.domain:
        raise SignatureError("tensors live on different domains")
    pairs = list(pairs)
    used1 = [i for i, _ in pairs]
    used2 = [j for _, j in pairs]
    if len(set(used1)) != len(used1) or len(set(used2)) != len(used2):
        raise SignatureError("a slot may be contracted at most once")
    for i, j in pairs:
        if not (0 <= i < t1.nslots and 0 <= j < t2.nslots):
            raise SignatureError(f"slot pair {(i, j)} out of range")
        if (t1.sig[i], t2.sig[j]) not in _PAIRS:
            raise SignatureError(f"cannot contract {t1.sig[i]!r} with {t2.sig[j]!r}")
    letters = "abcdefghijklmnopqrstuvwxyz"
    s1 = list(letters[:t1.nslots])
    s2 = list(letters[t1.nslots:t1.nslots + t2.nslots])
    for i, j in pairs:
        s2[j] = s1[i]
    out1 = [s1[i] for i in range(t1.nslots) if i not in used1]
    out2 = [s2[j] for j in range(t2.nslots) if j not in used2]
    spec = f"...{''.join(s1)},...{''.join(s2)}->...{''.join(out1 + out2)}"
    data = np.einsum(spec, t1.data, t2.data)
    sig = tuple(t1.sig[i] for i in range(t1.nslots) if i not in used1) + \
        tuple(t2.sig[j] for j in range(t2.nslots) if j not in used2)
    return TensorField(data, sig, t1.domain)


def omega_norm(omega: HoloVolumeForm, g: MetricField) -> np.ndarray:
    """``|Omega|^2_omega = |coef|^2 / det g``."""
    return np.abs(omega.coef) ** 2 / g.det


def eta_frame(g: MetricField, omega: HoloVolumeForm, tol: float = 1e-12) -> MetricField:
    """Metric ``eta`` with ``omega = |Omega|_eta * eta``.

    Writing ``eta = omega / s`` gives ``s^{1 - n/2} = |Omega|_omega``.  For
    ``n = 2`` the relation is scale-free and only solvable when
    ``|Omega|_omega = 1``, in which case ``eta = omega``.
    """
    n = g.n
    norm = np.sqrt(omega_norm(omega, g))
    if n == 2:
        if np.max(np.abs(norm - 1.0)) > tol:
            raise ValueError("conformal relation has no solution in complex dimension 2 "
                             "unless |Omega|_omega = 1")
        return MetricField(g.domain, g.G.copy())
    s = norm ** (2.0 / (2 - n))
    return MetricField(g.domain, g.G / s[..., None, None])


def compose_eta(eta: MetricField, omega: HoloVolumeForm) -> MetricField:
    """Inverse of :func:`eta_frame`: ``omega = |Omega|_eta * eta``."""
    s = np.sqrt(omega_norm(omega, eta))
    return MetricField(eta.domain, eta.G * s[..., None, None])

"""Sample domains: periodic complex tori and left-invariant nilmanifold models.

Both backends expose the same small interface so the geometry code is written
once, in a holomorphic frame ``e_1..e_n``:

* ``dz(f, j)`` / ``dzb(f, j)`` -- derivative of component functions along
  ``e_j`` / ``conj(e_j)``;
* ``c`` -- complex structure constants, ``[e_i, e_j] = c[k, i, j] e_k``;
* ``dreal(f, a)`` -- derivative along the real frame vector ``E_a``.

Fields are arrays whose leading ``nsample`` axes index samples and whose
trailing axes are tensor slots.  On the torus the sample axes are the real
coordinates ordered ``(x^1..x^n, y^1..y^n)`` with ``z^j = x^j + i y^j``; an
axis of length one means the field is constant in that direction (numpy
broadcasting does the rest).  The homogeneous backend has no sample axes.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import optimize


class DomainError(ValueError):
    """Invalid domain parameters."""


def real_frame_matrix(n: int) -> np.ndarray:
    """Matrix ``V`` with ``E_a = sum_alpha V[a, alpha] f_alpha``.

    ``f = (e_1..e_n, conj(e_1)..conj(e_n))`` is the complexified frame and
    ``E = (X_1..X_n, JX_1..JX_n)`` the real one, ``X_j = e_j + conj(e_j)``.
    """
    eye = np.eye(n)
    top = np.hstack([eye, eye]).astype(complex)
    bottom = np.hstack([1j * eye, -1j * eye])
    return np.vstack([top, bottom])


def real_complex_structure(n: int) -> np.ndarray:
    """``J[a, b]`` with ``J E_b = sum_a J[a, b] E_a`` in the real frame."""
    J = np.zeros((2 * n, 2 * n))
    J[n:, :n] = np.eye(n)
    J[:n, n:] = -np.eye(n)
    return J


def _realify_constants(c: np.ndarray) -> np.ndarray:
    """Real structure constants ``C[c, a, b]`` of the realified frame."""
    n = c.shape[0]
    cf = np.zeros((2 * n,) * 3, dtype=complex)
    cf[:n, :n, :n] = c
    cf[n:, n:, n:] = np.conj(c)
    V = real_frame_matrix(n)
    Vinv = np.linalg.inv(V)
    C = np.einsum("ax,by,gxy,gc->cab", V, V, cf, Vinv)
    return C.real


@dataclass(frozen=True, eq=False)
class TorusDomain:
    """Flat complex torus ``C^n / (2 pi Z)^{2n}`` sampled on a uniform grid."""

    n: int
    N: int
    kind: str = field(default="torus", init=False)

    def __post_init__(self):
        if self.n not in (1, 2, 3):
            raise DomainError(f"torus complex dimension must be 1, 2 or 3, got {self.n}")
        if self.N < 4 or self.N % 2:
            raise DomainError(f"grid resolution N must be even and >= 4, got {self.N}")

    @property
    def nsample(self) -> int:
        return 2 * self.n

    @property
    def sample_shape(self) -> tuple:
        return (self.N,) * (2 * self.n)

    @cached_property
    def c(self) -> np.ndarray:
        return np.zeros((self.n,) * 3, dtype=complex)

    @cached_property
    def C(self) -> np.ndarray:
        return np.zeros((2 * self.n,) * 3)

    @cached_property
    def grid(self) -> np.ndarray:
        return 2 * np.pi * np.arange(self.N) / self.N

    def coords(self) -> list:
        """Broadcastable coordinate arrays ``[x^1..x^n, y^1..y^n]``."""
        out = []
        for a in range(2 * self.n):
            shape = [1] * (2 * self.n)
            shape[a] = self.N
            out.append(self.grid.reshape(shape))
        return out

    def _wavenumbers(self, L: int) -> np.ndarray:
        k = np.fft.fftfreq(L, 1.0 / L)
        k[L // 2] = 0.0  # Nyquist mode carries no odd derivative
        return k

    def dreal(self, f, a: int) -> np.ndarray:
        """Spectral derivative along real coordinate ``a``."""
        f = np.asarray(f)
        if f.ndim < 2 * self.n or f.shape[a] == 1:
            return np.zeros_like(f)
        L = f.shape[a]
        if L != self.N:
            raise DomainError(f"axis {a} has length {L}, expected {self.N} or 1")
        shape = [1] * f.ndim
        shape[a] = L
        k = self._wavenumbers(L).reshape(shape)
        out = np.fft.ifft(1j * k * np.fft.fft(f, axis=a), axis=a)
        return out if np.iscomplexobj(f) else out.real

    def dz(self, f, j: int) -> np.ndarray:
        return 0.5 * (self.dreal(f, j) - 1j * self.dreal(f, self.n + j))

    def dzb(self, f, j: int) -> np.ndarray:
        return 0.5 * (self.dreal(f, j) + 1j * self.dreal(f, self.n + j))

    def integrate(self, f) -> np.ndarray:
        """Integral over the torus of the sample axes (exact on resolved modes)."""
        f = np.asarray(f)
        axes = tuple(range(2 * self.n))
        return np.mean(f, axis=axes) * (2 * np.pi) ** (2 * self.n)

    @property
    def volume(self) -> float:
        return (2 * np.pi) ** (2 * self.n)

    def full(self, f) -> np.ndarray:
        """Expand broadcast (length-one) sample axes to the full grid."""
        f = np.asarray(f)
        return np.broadcast_to(f, self.sample_shape + f.shape[2 * self.n:]).copy()

    def spectral_tail(self, f) -> float:
        """Fraction of the spectral energy of ``f`` in the top third of the modes."""
        f = np.asarray(f)
        if f.ndim < 2 * self.n:
            return 0.0
        axes = [a for a in range(2 * self.n) if f.shape[a] > 1]
        if not axes:
            return 0.0
        fh = np.fft.fftn(f, axes=axes)
        power = np.abs(fh) ** 2
        mask = np.zeros(power.shape, dtype=bool)
        for a in axes:
            k = np.abs(np.fft.fftfreq(self.N, 1.0 / self.N))
            shape = [1] * f.ndim
            shape[a] = self.N
            mask |= (k > self.N / 3).reshape(shape)
        total = power.sum()
        return float(power[np.broadcast_to(mask, power.shape)].sum() / total) if total > 0 else 0.0

    def underresolved(self, f, fraction: float = 1e-10) -> bool:
        """True if more than ``fraction`` of the spectral energy is in the top third of modes."""
        return self.spectral_tail(f) > fraction

    def evaluate(self, f, point) -> np.ndarray:
        """Trigonometric interpolant of ``f`` at a real point (all slots at once)."""
        return Interpolant(self, f)(point)

    def interpolant(self, f) -> "Interpolant":
        return Interpolant(self, f)

    def sup(self, f, refine: bool = False, starts: int = 4):
        """Supremum of a real scalar field and a maximising point.

        With ``refine`` the largest grid values are polished on the
        trigonometric interpolant, which removes the grid-placement bias of
        the plain max.  Only axes along which ``f`` varies are optimised.
        """
        f = np.asarray(f, dtype=float)
        full = np.broadcast_to(f, self.sample_shape)
        idx = np.unravel_index(np.argmax(full), full.shape)
        x0 = np.array([self.grid[i] for i in idx])
        best = float(full[idx])
        if not refine:
            return best, x0
        active = [a for a in range(2 * self.n) if f.shape[a] > 1]
        if not active:
            return best, x0
        interp = Interpolant(self, f)
        compact = f.reshape([f.shape[a] for a in active])
        order = np.argsort(compact, axis=None)[::-1][:starts]
        best_x = x0
        for flat_i in order:
            sub = np.unravel_index(flat_i, compact.shape)
            start = np.array([self.grid[i] for i in sub])

            def neg(y):
                x = x0.copy()
                x[active] = y
                return -float(interp(x))

            res = optimize.minimize(neg, start, method="BFGS", options={"gtol": 1e-13})
            if -res.fun > best:
                best = float(-res.fun)
                best_x = x0.copy()
                best_x[active] = np.mod(res.x, 2 * np.pi)
        return best, best_x

    def describe(self) -> dict:
        return {"backend": "torus", "n": self.n, "N": self.N}


class Interpolant:
    """Trigonometric interpolant of a torus field, with Fourier coefficients cached."""

    def __init__(self, dom: TorusDomain, f):
        f = np.asarray(f)
        self.real = np.isrealobj(f)
        self.nax = 2 * dom.n
        self.sizes = f.shape[:self.nax]
        axes = [a for a in range(self.nax) if self.sizes[a] > 1]
        coef = np.fft.fftn(f, axes=axes) if axes else f.astype(complex)
        for a in axes:
            coef = coef / self.sizes[a]
        self.coef = coef
        self.k = [np.fft.fftfreq(L, 1.0 / L) if L > 1 else None for L in self.sizes]

    def __call__(self, point) -> np.ndarray:
        fh = self.coef
        for a in range(self.nax):
            L = self.sizes[a]
            if L == 1:
                fh = fh[0]
                continue
            phase = np.exp(1j * self.k[a] * point[a])
            # symmetric treatment of the Nyquist mode keeps real data real
            phase[L // 2] = np.cos(L / 2 * point[a])
            fh = np.tensordot(phase, fh, axes=(0, 0))
        return fh.real if self.real else fh


@dataclass(frozen=True, eq=False)
class HomogeneousDomain:
    """Nilpotent complex Lie algebra with a left-invariant holomorphic frame.

    ``c[k, i, j]`` are the structure constants, ``[e_i, e_j] = c^k_ij e_k``,
    equivalently ``d theta^k = -1/2 c^k_ij theta^i ^ theta^j``.  Invariant
    component functions are constants, so every frame derivative vanishes.
    """

    c: np.ndarray
    name: str = "custom"
    kind: str = field(default="homogeneous", init=False)

    def __post_init__(self):
        c = np.asarray(self.c, dtype=complex)
        object.__setattr__(self, "c", c)
        if c.ndim != 3 or len(set(c.shape)) != 1:
            raise DomainError("structure constants must have shape (n, n, n)")
        if np.max(np.abs(c + c.transpose(0, 2, 1)), initial=0.0) > 1e-14:
            raise DomainError("structure constants must be antisymmetric in the lower indices")
        if self.jacobi_residual() > 1e-12:
            raise DomainError(f"Jacobi identity fails (residual {self.jacobi_residual():.3e})")
        if not self.is_nilpotent():
            raise DomainError("structure constants must define a nilpotent Lie algebra")

    @property
    def n(self) -> int:
        return self.c.shape[0]

    @property
    def nsample(self) -> int:
        return 0

    @property
    def sample_shape(self) -> tuple:
        return ()

    def jacobi_residual(self) -> float:
        c = self.c
        # [[e_i, e_j], e_k] + cyclic
        t = np.einsum("mij,lmk->lijk", c, c)
        r = t + t.transpose(0, 2, 3, 1) + t.transpose(0, 3, 1, 2)
        return float(np.max(np.abs(r), initial=0.0))

    def is_nilpotent(self) -> bool:
        n = self.n
        # product of 2n ad-matrices of basis elements must vanish
        ads = [self.c[:, i, :] for i in range(n)]
        prods = [np.eye(n, dtype=complex)]
        for _ in range(n):
            prods = [a @ p for p in prods for a in ads]
            if max(np.max(np.abs(p)) for p in prods) < 1e-13:
                return True
        return False

    @cached_property
    def C(self) -> np.ndarray:
        return _realify_constants(self.c)

    def dreal(self, f, a: int) -> np.ndarray:
        return np.zeros_like(np.asarray(f))

    def dz(self, f, j: int) -> np.ndarray:
        return np.zeros_like(np.asarray(f), dtype=complex)

    def dzb(self, f, j: int) -> np.ndarray:
        return np.zeros_like(np.asarray(f), dtype=complex)

    def integrate(self, f) -> np.ndarray:
        return np.asarray(f) * self.volume

    volume = 1.0

    def full(self, f) -> np.ndarray:
        return np.array(f)

    def spectral_tail(self, f) -> float:
        return 0.0

    def underresolved(self, f, fraction: float = 1e-10) -> bool:
        return False

    def sup(self, f, refine: bool = False):
        return float(np.asarray(f, dtype=float)), np.zeros(0)

    def describe(self) -> dict:
        c = self.c
        return {"backend": "homogeneous", "n": self.n, "name": self.name,
                "c_real": c.real.tolist(), "c_imag": c.imag.tolist()}


def iwasawa() -> HomogeneousDomain:
    """Complex Heisenberg algebra: ``[e_1, e_2] = e_3`` (``d theta^3 = -theta^1 ^ theta^2``)."""
    c = np.zeros((3, 3, 3), dtype=complex)
    c[2, 0, 1] = 1.0
    c[2, 1, 0] = -1.0
    return HomogeneousDomain(c, name="iwasawa")


def domain_from_description(desc: dict):
    if desc["backend"] == "torus":
        return TorusDomain(int(desc["n"]), int(desc["N"]))
    if desc["backend"] == "homogeneous":
        c = np.asarray(desc["c_real"]) + 1j * np.asarray(desc["c_imag"])
        return HomogeneousDomain(c, name=desc.get("name", "custom"))
    raise DomainError(f"unknown backend {desc['backend']!r}")


def grad(dom, f, anti: bool = False) -> np.ndarray:
    """Stack of frame derivatives of ``f`` appended as a trailing slot."""
    op = dom.dzb if anti else dom.dz
    parts = np.broadcast_arrays(*[op(f, j) for j in range(dom.n)])
    return np.stack(parts, axis=-1)


def permutation_sign(perm) -> int:
    inv = sum(1 for i, j in itertools.combinations(range(len(perm)), 2) if perm[i] > perm[j])
    return -1 if inv % 2 else 1

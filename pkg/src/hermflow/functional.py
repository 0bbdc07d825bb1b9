"""The curvature functional ``F = sqrt(|Rm|^2 + |nabla T|^2 + |T|^4)`` of a Chern connection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .connections import ChernData, ConnectionField, covariant_derivative
from .fields import tensor_norm


def chern_connection(cd: ChernData) -> ConnectionField:
    full = cd.full
    return ConnectionField("chern", cd.g, full, None, 1.0)


def nabla_torsion(cd: ChernData):
    """Holomorphic and antiholomorphic Chern derivatives of ``T_{l̄ k j}``."""
    conn = chern_connection(cd)
    T = cd.torsion_tensor()
    return covariant_derivative(conn, T, "hol"), covariant_derivative(conn, T, "anti")


@dataclass(frozen=True)
class FunctionalParts:
    """Pointwise ingredients; ``F`` is the square root of ``rm_sq + dt_sq + t_sq**2``."""

    rm_sq: np.ndarray
    dt_sq: np.ndarray
    t_sq: np.ndarray

    @property
    def F_sq(self) -> np.ndarray:
        return self.rm_sq + self.dt_sq + self.t_sq ** 2

    @property
    def F(self) -> np.ndarray:
        return np.sqrt(self.F_sq)


def functional_parts(cd: ChernData) -> FunctionalParts:
    g = cd.g
    rm_sq = tensor_norm(cd.curvature_tensor(), g, squared=True)
    dh, da = nabla_torsion(cd)
    dt_sq = tensor_norm(dh, g, squared=True) + tensor_norm(da, g, squared=True)
    t_sq = tensor_norm(cd.torsion_tensor(), g, squared=True)
    return FunctionalParts(rm_sq, dt_sq, t_sq)

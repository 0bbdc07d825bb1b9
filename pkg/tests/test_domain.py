import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hermflow.domain import (DomainError, HomogeneousDomain, TorusDomain, domain_from_description,
                             iwasawa, real_complex_structure, real_frame_matrix)


def test_spectral_derivative_of_sin(torus2):
    x2 = torus2.coords()[1]
    f = np.sin(x2)
    assert np.max(np.abs(torus2.dreal(f, 1) - np.cos(x2))) < 1e-12
    # d/dz^2 = (d/dx^2 - i d/dy^2)/2
    assert np.max(np.abs(torus2.dz(f, 1) - 0.5 * np.cos(x2))) < 1e-12
    assert np.max(np.abs(torus2.dzb(f, 1) - 0.5 * np.cos(x2))) < 1e-12
    assert np.max(np.abs(torus2.dz(f, 0))) == 0.0


def test_exponential_mode(torus2):
    x1 = torus2.coords()[0]
    f = np.exp(1j * x1)
    assert np.max(np.abs(torus2.dz(f, 0) - 0.5j * f)) < 1e-12
    assert np.max(np.abs(torus2.dzb(f, 0) - 0.5j * f)) < 1e-12


@settings(max_examples=40, deadline=None)
@given(k=st.integers(-7, 7), axis=st.integers(0, 3), phase=st.floats(0, 6.3))
def test_resolved_modes_differentiate_exactly(k, axis, phase):
    dom = TorusDomain(2, 16)
    x = dom.coords()[axis]
    f = np.cos(k * x + phase)
    assert np.max(np.abs(dom.dreal(f, axis) + k * np.sin(k * x + phase))) < 1e-12


def test_nyquist_mode_has_zero_odd_derivative(torus2):
    x = torus2.coords()[0]
    assert np.max(np.abs(torus2.dreal(np.cos(8 * x), 0))) < 1e-12


def test_sup_refinement_finds_off_grid_maximum():
    dom = TorusDomain(1, 16)
    x = dom.coords()[0]
    f = np.cos(x - 0.1) * np.ones((16, 1))
    grid_max, _ = dom.sup(f)
    refined, point = dom.sup(f, refine=True)
    assert grid_max < 1 - 1e-4
    assert abs(refined - 1) < 1e-12
    assert abs(point[0] - 0.1) < 1e-5


def test_domain_validation():
    with pytest.raises(DomainError):
        TorusDomain(4, 16)
    with pytest.raises(DomainError):
        TorusDomain(2, 15)
    c = np.zeros((2, 2, 2))
    c[0, 0, 1] = 1
    with pytest.raises(DomainError, match="antisymmetric"):
        HomogeneousDomain(c)
    c[0, 1, 0] = -1  # [e1, e2] = e1 is solvable, not nilpotent
    with pytest.raises(DomainError, match="nilpotent"):
        HomogeneousDomain(c)


def test_iwasawa_constants():
    dom = iwasawa()
    assert dom.jacobi_residual() == 0.0
    assert dom.is_nilpotent()
    # real structure constants stay real and antisymmetric
    assert np.max(np.abs(dom.C + dom.C.transpose(0, 2, 1))) < 1e-15
    again = domain_from_description(dom.describe())
    assert np.array_equal(again.c, dom.c)


def test_real_frame_conventions():
    n = 3
    V = real_frame_matrix(n)
    J = real_complex_structure(n)
    assert np.allclose(J @ J, -np.eye(2 * n))
    # J X_j = Y_j in the complexified frame: i e_j - i conj(e_j)
    Jc = np.diag([1j] * n + [-1j] * n)
    assert np.allclose(V @ Jc @ np.linalg.inv(V), J.T)

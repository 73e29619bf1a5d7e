"""Constitutive matrix, Voigt conventions, rotations and residual checks."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from goalfem.elasticity import (
    Material,
    equilibrium_residual,
    strain_rotation,
    stress_rotation,
    traction,
)
from goalfem.benchmarks import primal_lame


def test_constitutive_matrix_reference_values():
    # plane strain, E = 1000, nu = 0.3
    m = Material(1000.0, 0.3)
    assert m.D[0, 0] == pytest.approx(1346.153846, abs=1e-4)
    assert m.D[1, 1] == pytest.approx(1346.153846, abs=1e-4)
    assert m.D[0, 1] == pytest.approx(576.923077, abs=1e-4)
    assert m.D[2, 2] == pytest.approx(384.615385, abs=1e-4)
    assert m.D[0, 2] == 0.0 and m.D[1, 2] == 0.0


def test_constitutive_matrix_zero_poisson():
    m = Material(1.0, 0.0)
    assert np.allclose(m.D, np.diag([1.0, 1.0, 0.5]))


def test_material_validation():
    with pytest.raises(ValueError):
        Material(-5.0, 0.3)
    with pytest.raises(ValueError):
        Material(0.0, 0.3)
    with pytest.raises(ValueError):
        Material(1.0, 0.5)
    with pytest.raises(ValueError):
        Material(1.0, -1.0)


def test_derived_moduli():
    m = Material(1000.0, 0.3)
    assert m.shear_modulus == pytest.approx(1000.0 / 2.6)
    assert m.lame_lambda == pytest.approx(300.0 / 0.52)
    assert m.kolosov == pytest.approx(1.8)


def test_stress_offset_cancellation():
    m = Material(1000.0, 0.3)
    eps = np.array([1e-3, -2e-3, 5e-4])
    assert np.allclose(m.stress(eps, eps0=eps), 0.0)


def test_stress_pure_initial_stress():
    m = Material(1000.0, 0.3)
    s0 = np.array([3.0, -1.0, 0.5])
    assert np.allclose(m.stress(np.zeros(3), sig0=s0), s0)


def test_stress_identity_like_law():
    m = Material(1.0, 0.0)
    assert np.allclose(m.stress(np.array([1.0, 0.0, 0.0])), [1.0, 0.0, 0.0])


@given(
    st.floats(1e-2, 1e6),
    st.floats(-0.9, 0.49),
    st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)),
    st.tuples(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1)),
)
@settings(max_examples=60, deadline=None)
def test_strain_roundtrip(E, nu, eps, sig0):
    m = Material(E, nu)
    eps = np.array(eps)
    sig0 = np.array(sig0)
    s = m.stress(eps, sig0=sig0)
    back = m.Dinv @ (s - sig0)
    assert np.allclose(back, eps, atol=1e-9 * (1 + np.abs(eps).max()))


@given(st.floats(1e-2, 1e6), st.floats(-0.9, 0.49))
@settings(max_examples=80, deadline=None)
def test_constitutive_matrix_spd(E, nu):
    m = Material(E, nu)
    assert np.allclose(m.D, m.D.T)
    np.linalg.cholesky(m.D)  # raises if not positive definite


def test_traction_axis_aligned():
    s = np.array([2.0, 3.0, 4.0])
    assert np.allclose(traction(s, np.array([1.0, 0.0])), [2.0, 4.0])
    assert np.allclose(traction(s, np.array([0.0, 1.0])), [4.0, 3.0])


def test_traction_linearity(rng):
    s1, s2 = rng.standard_normal((2, 3))
    n = rng.standard_normal(2)
    n /= np.linalg.norm(n)
    lhs = traction(2.5 * s1 - s2, n)
    rhs = 2.5 * traction(s1, n) - traction(s2, n)
    assert np.allclose(lhs, rhs)


def test_traction_inner_pressurized_boundary():
    # pressurized annulus: the radial stress at the inner radius is -1,
    # so the traction on the inward normal has magnitude one
    field = primal_lame()
    pt = np.array([[5.0, 0.0]])
    t = traction(field.stress(pt), np.array([[-1.0, 0.0]]))
    assert np.linalg.norm(t) == pytest.approx(1.0, abs=1e-12)
    assert t[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_rotation_energy_pairing():
    # contragredient pair: stress and strain rotations preserve sigma'eps
    for ang in (0.3, -1.2, 2.0):
        M = stress_rotation(ang)
        T = strain_rotation(ang)
        assert np.allclose(M.T @ T, np.eye(3), atol=1e-12)


def test_stress_rotation_matches_tensor_rotation(rng):
    ang = 0.7
    c, s = np.cos(ang), np.sin(ang)
    R = np.array([[c, -s], [s, c]])
    sig = rng.standard_normal(3)
    S = np.array([[sig[0], sig[2]], [sig[2], sig[1]]])
    Sg = R @ S @ R.T
    voigt = stress_rotation(ang) @ sig
    assert np.allclose(voigt, [Sg[0, 0], Sg[1, 1], Sg[0, 1]], atol=1e-12)


def test_equilibrium_residual_constant_stress():
    fn = lambda pts: np.tile([1.0, 2.0, 3.0], (len(pts), 1))
    assert equilibrium_residual(fn, None, [[0.3, 0.4]]) < 1e-10


def test_equilibrium_residual_linear_balance():
    # sigma_xx = x balanced by b = (-1, 0)
    def fn(pts):
        out = np.zeros((len(pts), 3))
        out[:, 0] = pts[:, 0]
        return out

    body = lambda pts: np.tile([-1.0, 0.0], (len(pts), 1))
    assert equilibrium_residual(fn, body, [[0.2, -0.1]]) < 1e-9


def test_equilibrium_residual_exact_annulus(rng):
    field = primal_lame()
    r = rng.uniform(6.0, 19.0, 40)
    phi = rng.uniform(0.05, np.pi / 2 - 0.05, 40)
    pts = np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1)
    assert equilibrium_residual(field.stress, None, pts) < 1e-9


def test_equilibrium_residual_flags_broken_field():
    # divergence-free it is not: sigma_xx = x^2 with no body force
    def fn(pts):
        out = np.zeros((len(pts), 3))
        out[:, 0] = pts[:, 0] ** 2
        return out

    assert equilibrium_residual(fn, None, [[1.0, 0.0]]) > 1.0

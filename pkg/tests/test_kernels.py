"""Element kernel checks and numpy/numba backend agreement."""

import os
import subprocess
import sys

import numpy as np
import pytest

from goalfem import kernels
from goalfem.mesh import gauss2d


def distorted_quads(rng, n=8):
    base = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    quads = base[None] + 0.15 * rng.uniform(-1, 1, (n, 4, 2))
    quads += rng.uniform(-2, 2, (n, 1, 2))
    return quads


def test_shape_partition_of_unity(rng):
    pts = rng.uniform(-1, 1, (50, 2))
    N = kernels.shape_q4(pts)
    assert N.shape == (50, 4)
    assert np.allclose(N.sum(axis=1), 1.0, atol=1e-14)


def test_shape_kronecker_at_corners():
    corners = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float)
    N = kernels.shape_q4(corners)
    assert np.allclose(N, np.eye(4), atol=1e-14)


def test_dshape_matches_finite_differences(rng):
    pts = rng.uniform(-0.9, 0.9, (20, 2))
    dN = kernels.dshape_q4(pts)
    h = 1e-6
    for axis in range(2):
        e = np.zeros(2)
        e[axis] = h
        fd = (kernels.shape_q4(pts + e) - kernels.shape_q4(pts - e)) / (2 * h)
        assert np.allclose(dN[..., axis], fd, atol=1e-8)


def test_bmat_constant_strain(rng):
    # a linear displacement field must produce its exact constant strain
    coords = distorted_quads(rng, 5)
    gp, _ = gauss2d(2)
    B, detJ = kernels.batch_bmat(coords, gp)
    grad = np.array([[2e-3, -1e-3], [4e-4, 3e-3]])  # du_i/dx_j
    u = np.einsum("ij,eqj->eqi", grad, coords).reshape(5, 8)
    eps = np.einsum("eqck,ek->eqc", B, u)
    expect = [grad[0, 0], grad[1, 1], grad[0, 1] + grad[1, 0]]
    assert np.allclose(eps, np.array(expect)[None, None, :], atol=1e-12)
    assert (detJ > 0).all()


def test_stiffness_symmetry_and_rank(rng):
    D = np.array([[4.0, 1.0, 0.0], [1.0, 4.0, 0.0], [0.0, 0.0, 1.5]])
    gp, gw = gauss2d(2)
    K = kernels.batch_stiffness(distorted_quads(rng), D, gp, gw)
    for Ke in K:
        assert np.allclose(Ke, Ke.T, atol=1e-11)
        w = np.linalg.eigvalsh(Ke)
        scale = w[-1]
        # exactly the three rigid modes at zero
        assert (np.abs(w[:3]) < 1e-10 * scale).all()
        assert w[3] > 1e-6 * scale


def test_stiffness_annihilates_rigid_modes(rng):
    D = np.array([[4.0, 1.0, 0.0], [1.0, 4.0, 0.0], [0.0, 0.0, 1.5]])
    gp, gw = gauss2d(2)
    coords = distorted_quads(rng)
    K = kernels.batch_stiffness(coords, D, gp, gw)
    tx = np.tile([1.0, 0.0], 4)
    ty = np.tile([0.0, 1.0], 4)
    for Ke, xy in zip(K, coords):
        rot = np.stack([-xy[:, 1], xy[:, 0]], axis=-1).ravel()
        for mode in (tx, ty, rot):
            assert np.linalg.norm(Ke @ mode) < 1e-9 * np.linalg.norm(Ke)


@pytest.mark.skipif(not kernels.HAS_NUMBA, reason="numba unavailable")
def test_backends_agree(rng):
    pts = rng.uniform(-1, 1, (17, 2))
    coords = distorted_quads(rng, 6)
    D = np.array([[4.0, 1.0, 0.0], [1.0, 4.0, 0.0], [0.0, 0.0, 1.5]])
    gp, gw = gauss2d(3)
    results = {}
    try:
        for backend in ("numpy", "numba"):
            kernels.use_backend(backend)
            B, detJ = kernels.batch_bmat(coords, gp)
            results[backend] = (
                kernels.shape_q4(pts),
                kernels.dshape_q4(pts),
                B,
                detJ,
                kernels.batch_stiffness(coords, D, gp, gw),
            )
    finally:
        kernels.use_backend("numba" if kernels.HAS_NUMBA else "numpy")
    for a, b in zip(results["numpy"], results["numba"]):
        assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_use_backend_rejects_unknown():
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")


def test_env_flag_forces_numpy_backend():
    env = dict(os.environ, GOALFEM_NUMBA="0")
    out = subprocess.run(
        [sys.executable, "-c",
         "from goalfem import kernels; print(kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"

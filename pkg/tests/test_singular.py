"""Corner eigenpairs, asymptotic fields, and intensity-factor extraction."""

import math

import numpy as np
import pytest

from goalfem.elasticity import Material, equilibrium_residual, traction
from goalfem.singular import (
    CornerConfig,
    ExtractionRing,
    GsifExtractor,
    NonSingularCornerError,
    WilliamsField,
    characteristic,
    corner_exponent,
)

MAT = Material(1000.0, 0.3)

# independently frozen roots of the two characteristic equations at the
# three-quarter-plane opening
LAM_I_LSHAPE = 0.5444837367824638
LAM_II_LSHAPE = 0.9085291898460991


def lshape_config():
    return CornerConfig((0.0, 0.0), 1.5 * math.pi, beta=0.25 * math.pi)


def generic_config():
    return CornerConfig((0.4, -0.1), 1.7 * math.pi, beta=0.3)


# -------------------------------------------------------------- eigenvalues


def test_lshape_exponents_match_frozen_roots():
    assert corner_exponent(1.5 * math.pi, "I") == pytest.approx(
        LAM_I_LSHAPE, abs=1e-12)
    assert corner_exponent(1.5 * math.pi, "II") == pytest.approx(
        LAM_II_LSHAPE, abs=1e-12)


def test_characteristic_residual_at_roots():
    for omega in (1.2 * math.pi, 1.5 * math.pi, 1.9 * math.pi, 2 * math.pi):
        for mode in ("I", "II"):
            lam = corner_exponent(omega, mode)
            assert abs(characteristic(lam, omega, mode)) < 1e-12


def test_half_plane_is_smooth():
    assert corner_exponent(math.pi, "I") == 1.0
    assert corner_exponent(math.pi, "II") == 1.0


def test_crack_exponents():
    assert corner_exponent(2 * math.pi, "I") == pytest.approx(0.5, abs=1e-12)
    assert corner_exponent(2 * math.pi, "II") == pytest.approx(0.5, abs=1e-12)


def test_convex_corner_reported_nonsingular():
    with pytest.raises(NonSingularCornerError):
        corner_exponent(0.5 * math.pi, "I")


def test_corner_config_validates_opening():
    with pytest.raises(ValueError):
        CornerConfig((0.0, 0.0), 2.5 * math.pi)
    with pytest.raises(ValueError):
        CornerConfig((0.0, 0.0), 0.0)


# ------------------------------------------------------------ plateau ring


def test_ring_plateau_values():
    ring = ExtractionRing(0.6, 0.8)
    assert ring.q(0.3) == 1.0
    assert ring.q(0.6) == 1.0
    assert ring.q(0.95) == 0.0
    # the quartic 1 - 6s^2 + 8s^3 - 3s^4 at the midpoint s = 1/2
    assert ring.q(0.7) == pytest.approx(0.3125, abs=1e-14)


def test_ring_is_c1():
    ring = ExtractionRing(0.6, 0.8)
    for r in (0.6 + 1e-9, 0.8 - 1e-9):
        assert abs(ring.dq(r)) < 1e-6
    assert ring.dq(0.5) == 0.0
    assert ring.dq(0.9) == 0.0


def test_ring_derivative_consistency():
    ring = ExtractionRing(0.6, 0.8)
    r = np.linspace(0.62, 0.78, 9)
    h = 1e-6
    fd1 = (ring.q(r + h) - ring.q(r - h)) / (2 * h)
    assert np.allclose(fd1, ring.dq(r), atol=1e-7)
    fd2 = (ring.dq(r + h) - ring.dq(r - h)) / (2 * h)
    assert np.allclose(fd2, ring.ddq(r), atol=1e-5)


def test_ring_validation():
    with pytest.raises(ValueError):
        ExtractionRing(0.8, 0.6)


# -------------------------------------------------------- eigenfield props


def face_points_and_normals(cfg, radii):
    """Sample points on both corner faces with in-plane face normals."""
    out = []
    for side in (+1.0, -1.0):
        ang = cfg.beta + side * cfg.omega / 2.0
        d = np.array([math.cos(ang), math.sin(ang)])
        n = np.array([-d[1], d[0]])
        pts = cfg.apex + np.outer(radii, d)
        out.append((pts, n))
    return out


@pytest.mark.parametrize("mode", ["I", "II"])
def test_faces_traction_free(mode):
    for cfg in (lshape_config(), generic_config()):
        fld = WilliamsField.primary(cfg, mode, MAT)
        radii = np.array([0.3, 1.0, 2.7])
        for pts, n in face_points_and_normals(cfg, radii):
            sig = fld.stress(pts)
            t = traction(sig, np.broadcast_to(n, pts.shape))
            scale = np.abs(sig).max()
            assert np.abs(t).max() < 1e-10 * scale


@pytest.mark.parametrize("mode", ["I", "II"])
def test_eigenfields_equilibrated(mode, rng):
    cfg = generic_config()
    for fld in (WilliamsField.primary(cfg, mode, MAT),
                WilliamsField.auxiliary(cfg, mode, MAT)):
        r = rng.uniform(0.5, 2.0, 30)
        ph = rng.uniform(-0.48, 0.48, 30) * cfg.omega
        ang = cfg.beta + ph
        pts = cfg.apex + np.stack([r * np.cos(ang), r * np.sin(ang)], -1)
        scale = np.abs(fld.stress(pts)).max()
        assert equilibrium_residual(fld.stress, None, pts) < 1e-7 * scale


def test_displacement_gradient_matches_fd(rng):
    cfg = generic_config()
    fld = WilliamsField.primary(cfg, "I", MAT)
    pts = cfg.apex + rng.uniform(0.4, 1.5, (10, 2))
    grad = fld.displacement_gradient(pts)
    h = 1e-6
    for j, e in enumerate((np.array([h, 0.0]), np.array([0.0, h]))):
        fd = (fld.displacement(pts + e) - fld.displacement(pts - e)) / (2 * h)
        assert np.allclose(grad[..., j], fd, atol=1e-8)


def test_stress_scales_with_r_lambda_minus_one():
    cfg = lshape_config()
    fld = WilliamsField.primary(cfg, "I", MAT)
    d = np.array([math.cos(cfg.beta), math.sin(cfg.beta)])
    s1 = fld.stress((cfg.apex + 0.5 * d)[None])
    s2 = fld.stress((cfg.apex + 1.0 * d)[None])
    ratio = np.linalg.norm(s1) / np.linalg.norm(s2)
    assert ratio == pytest.approx(0.5 ** (fld.lam - 1.0), rel=1e-10)


# --------------------------------------------------------------- extraction


def test_extract_exact_self_unit():
    cfg = lshape_config()
    for mode in ("I", "II"):
        ex = GsifExtractor(cfg, mode, MAT)
        got = ex.extract_exact(ex.primary.displacement, ex.primary.stress)
        assert got == pytest.approx(1.0, abs=1e-9)


def test_extract_exact_mode_orthogonality():
    cfg = lshape_config()
    exI = GsifExtractor(cfg, "I", MAT)
    other = WilliamsField.primary(cfg, "II", MAT)
    got = exI.extract_exact(other.displacement, other.stress)
    assert abs(got) < 1e-6


def test_extract_exact_linearity():
    cfg = lshape_config()
    ex = GsifExtractor(cfg, "II", MAT)
    u = lambda pts: 2.0 * ex.primary.displacement(pts)
    s = lambda pts: 2.0 * ex.primary.stress(pts)
    assert ex.extract_exact(u, s) == pytest.approx(2.0, abs=1e-9)


def test_extract_exact_superposition():
    cfg = lshape_config()
    fI = WilliamsField.primary(cfg, "I", MAT)
    fII = WilliamsField.primary(cfg, "II", MAT)
    u = lambda pts: fI.displacement(pts) + fII.displacement(pts)
    s = lambda pts: fI.stress(pts) + fII.stress(pts)
    for mode in ("I", "II"):
        ex = GsifExtractor(cfg, mode, MAT)
        assert ex.extract_exact(u, s) == pytest.approx(1.0, abs=1e-3)


def test_extract_contour_insensitive():
    cfg = lshape_config()
    for mode in ("I", "II"):
        ex = GsifExtractor(cfg, mode, MAT)
        wide = ex.extract_exact(ex.primary.displacement, ex.primary.stress,
                                ring=ExtractionRing(0.4, 0.9))
        assert abs(wide - 1.0) < 1e-3


# --------------------------------------------------------------- dual loads


def test_dual_loads_vanish_outside_band(rng):
    ex = GsifExtractor(lshape_config(), "I", MAT)
    body, eps0, div_sig = ex.dual_loads()
    r = np.concatenate([rng.uniform(0.05, 0.55, 8),
                        rng.uniform(0.85, 1.3, 8)])
    ph = rng.uniform(-0.7, 0.7, 16) * math.pi
    pts = np.stack([r * np.cos(ph), r * np.sin(ph)], -1)
    assert np.abs(body(pts)).max() == 0.0
    assert np.abs(eps0(pts)).max() == 0.0
    assert np.abs(div_sig(pts)).max() == 0.0


def test_dual_load_divergence_consistency(rng):
    # div_sig must be the divergence of -D eps0, checked by central
    # differences well inside the ramp band
    ex = GsifExtractor(lshape_config(), "I", MAT)
    _body, eps0, div_sig = ex.dual_loads()
    r = rng.uniform(0.65, 0.75, 12)
    ph = rng.uniform(0.55, 0.95, 12) * math.pi  # stay inside the L-domain
    pts = np.stack([r * np.cos(ph), r * np.sin(ph)], -1)

    def W(p):
        return eps0(p) @ MAT.D.T

    h = 1e-6
    ex_, ey_ = np.array([h, 0.0]), np.array([0.0, h])
    dWx = (W(pts + ex_) - W(pts - ex_)) / (2 * h)
    dWy = (W(pts + ey_) - W(pts - ey_)) / (2 * h)
    fd_div = np.stack([dWx[:, 0] + dWy[:, 2], dWx[:, 2] + dWy[:, 1]], -1)
    got = div_sig(pts)
    scale = np.abs(fd_div).max()
    assert np.abs(got + fd_div).max() < 1e-5 * scale

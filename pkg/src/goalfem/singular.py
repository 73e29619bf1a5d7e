"""Corner asymptotic fields and generalized intensity-factor extraction.

A reentrant corner is described by its apex, opening angle omega, and the
rotation beta of the bisector frame relative to the global axes.  In the
local frame the traction-free faces sit at phi = +-omega/2, and each mode
(I symmetric, II antisymmetric) contributes a separable field
r^lambda * f(phi) whose exponent solves a transcendental characteristic
equation.  Intensity factors are extracted with an interaction domain
integral over a ring around the apex, using auxiliary fields with the
negative exponent and a self-calibrated normalization constant.
"""

import numpy as np
from scipy.optimize import brentq

from .elasticity import stress_rotation
from .mesh import gauss1d
from .solver import element_points
from . import kernels


class NonSingularCornerError(ValueError):
    """Raised when a corner has no stress exponent in (0, 1]."""


def characteristic(lam, omega, mode):
    """Residual of the corner eigenvalue equation."""
    s = 1.0 if mode == "I" else -1.0
    return np.sin(lam * omega) + s * lam * np.sin(omega)


def corner_exponent(omega, mode):
    """Smallest eigenvalue in (0, 1] of the corner characteristic equation.

    Bracket scan on a fine grid followed by Brent refinement.  Raises
    NonSingularCornerError when no root exists (convex corners).
    """
    f = lambda lam: characteristic(lam, omega, mode)
    grid = np.linspace(1e-8, 1.0, 4001)
    vals = f(grid)
    for k in range(len(grid) - 1):
        if vals[k] == 0.0:
            return float(grid[k])
        if vals[k] * vals[k + 1] < 0.0:
            return float(brentq(f, grid[k], grid[k + 1], xtol=1e-15,
                                rtol=8.9e-16))
    if abs(vals[-1]) < 1e-12:
        return 1.0
    raise NonSingularCornerError(
        f"no singular exponent in (0, 1] for omega={omega}, mode {mode}")


def _face_matrix(lam, omega, mode):
    """2x2 traction-free face conditions on the coefficient pair."""
    h = omega / 2.0
    lp, lm = (lam + 1.0) * h, (lam - 1.0) * h
    if mode == "I":
        return np.array([
            [np.cos(lp), np.cos(lm)],
            [(lam + 1.0) * np.sin(lp), (lam - 1.0) * np.sin(lm)],
        ])
    return np.array([
        [np.sin(lp), np.sin(lm)],
        [(lam + 1.0) * np.cos(lp), (lam - 1.0) * np.cos(lm)],
    ])


def _null_coeffs(lam, omega, mode):
    M = _face_matrix(lam, omega, mode)
    _, s, Vt = np.linalg.svd(M)
    v = Vt[-1]
    if abs(v[1]) > 1e-12:
        v = v / v[1]
    elif v[0] < 0:
        v = -v
    return v, float(s[-1])


# quartic plateau weight: q(0)=1, q(1)=0, q'(0)=q'(1)=0
def _q(s):
    return 1.0 - 6.0 * s**2 + 8.0 * s**3 - 3.0 * s**4


def _dq(s):
    return -12.0 * s + 24.0 * s**2 - 12.0 * s**3


def _ddq(s):
    return -12.0 + 48.0 * s - 36.0 * s**2


class ExtractionRing:
    """Radial plateau weight: 1 inside r1, 0 outside r2, quartic ramp."""

    def __init__(self, r1, r2):
        if not 0.0 < r1 < r2:
            raise ValueError("need 0 < r1 < r2")
        self.r1 = float(r1)
        self.r2 = float(r2)

    def q(self, r):
        s = np.clip((np.asarray(r, dtype=float) - self.r1)
                    / (self.r2 - self.r1), 0.0, 1.0)
        return _q(s)

    def dq(self, r):
        r = np.asarray(r, dtype=float)
        s = (r - self.r1) / (self.r2 - self.r1)
        inside = (s > 0.0) & (s < 1.0)
        return np.where(inside, _dq(np.clip(s, 0.0, 1.0))
                        / (self.r2 - self.r1), 0.0)

    def ddq(self, r):
        r = np.asarray(r, dtype=float)
        s = (r - self.r1) / (self.r2 - self.r1)
        inside = (s > 0.0) & (s < 1.0)
        return np.where(inside, _ddq(np.clip(s, 0.0, 1.0))
                        / (self.r2 - self.r1) ** 2, 0.0)


class CornerConfig:
    """Geometry of a singular vertex: apex, opening, bisector rotation."""

    def __init__(self, apex, omega, beta=0.0):
        if not 0.0 < omega <= 2.0 * np.pi:
            raise ValueError(f"opening angle must lie in (0, 2 pi], got {omega}")
        self.apex = np.asarray(apex, dtype=float)
        self.omega = float(omega)
        self.beta = float(beta)
        c, s = np.cos(self.beta), np.sin(self.beta)
        self.R = np.array([[c, -s], [s, c]])  # local -> global

    def to_local(self, pts):
        return (np.asarray(pts, dtype=float) - self.apex) @ self.R

    def polar(self, pts):
        xl = self.to_local(pts)
        return np.hypot(xl[..., 0], xl[..., 1]), \
            np.arctan2(xl[..., 1], xl[..., 0])

    def radius(self, pts):
        d = np.asarray(pts, dtype=float) - self.apex
        return np.hypot(d[..., 0], d[..., 1])


class WilliamsField:
    """One corner eigenfield (mode I or II, exponent +lambda or -lambda).

    Evaluates displacements, stresses and displacement gradients in the
    global frame.  Coefficient pairs come from the traction-free face
    conditions; primary fields are sign-normalized to positive bisector
    opening stress (mode I) / positive bisector shear (mode II).
    """

    def __init__(self, config, mode, lam, coeffs, material):
        self.config = config
        self.mode = mode
        self.lam = float(lam)
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.material = material
        self._Mrot = stress_rotation(config.beta)

    @classmethod
    def primary(cls, config, mode, material):
        lam = corner_exponent(config.omega, mode)
        v, _ = _null_coeffs(lam, config.omega, mode)
        fld = cls(config, mode, lam, v, material)
        # sign normalization on the bisector at r=1
        _, _, srr, spp, srp = fld._polar(np.array([1.0]), np.array([0.0]))
        ref = spp[0] if mode == "I" else srp[0]
        if ref < 0:
            fld.coeffs = -fld.coeffs
        return fld

    @classmethod
    def auxiliary(cls, config, mode, material):
        lam = corner_exponent(config.omega, mode)
        v, _ = _null_coeffs(-lam, config.omega, mode)
        return cls(config, mode, -lam, v, material)

    def _polar(self, rr, ph):
        lam = self.lam
        a1, a2 = self.coeffs
        G = self.material.shear_modulus
        kp = self.material.kolosov
        lp, lm = (lam + 1.0) * ph, (lam - 1.0) * ph
        rl = rr**lam
        rl1 = lam * rr**(lam - 1.0)
        if self.mode == "I":
            ur = rl / (2 * G) * (-(lam + 1) * a1 * np.cos(lp)
                                 + (kp - lam) * a2 * np.cos(lm))
            up = rl / (2 * G) * ((lam + 1) * a1 * np.sin(lp)
                                 + (kp + lam) * a2 * np.sin(lm))
            srr = rl1 * (-a1 * (lam + 1) * np.cos(lp)
                         + a2 * (3 - lam) * np.cos(lm))
            spp = rl1 * (lam + 1) * (a1 * np.cos(lp) + a2 * np.cos(lm))
            srp = rl1 * (a1 * (lam + 1) * np.sin(lp)
                         + a2 * (lam - 1) * np.sin(lm))
        else:
            ur = rl / (2 * G) * (-(lam + 1) * a1 * np.sin(lp)
                                 + (kp - lam) * a2 * np.sin(lm))
            up = rl / (2 * G) * (-(lam + 1) * a1 * np.cos(lp)
                                 - (kp + lam) * a2 * np.cos(lm))
            srr = rl1 * (-a1 * (lam + 1) * np.sin(lp)
                         + a2 * (3 - lam) * np.sin(lm))
            spp = rl1 * (lam + 1) * (a1 * np.sin(lp) + a2 * np.sin(lm))
            srp = -rl1 * (a1 * (lam + 1) * np.cos(lp)
                          + a2 * (lam - 1) * np.cos(lm))
        return ur, up, srr, spp, srp

    def _polar_deriv(self, rr, ph):
        """d(u_r, u_phi)/d(r, phi) from the separable closed form."""
        lam = self.lam
        a1, a2 = self.coeffs
        G = self.material.shear_modulus
        kp = self.material.kolosov
        lp, lm = (lam + 1.0) * ph, (lam - 1.0) * ph
        if self.mode == "I":
            F = -(lam + 1) * a1 * np.cos(lp) + (kp - lam) * a2 * np.cos(lm)
            Fp = (lam + 1)**2 * a1 * np.sin(lp) \
                - (kp - lam) * (lam - 1) * a2 * np.sin(lm)
            H = (lam + 1) * a1 * np.sin(lp) + (kp + lam) * a2 * np.sin(lm)
            Hp = (lam + 1)**2 * a1 * np.cos(lp) \
                + (kp + lam) * (lam - 1) * a2 * np.cos(lm)
        else:
            F = -(lam + 1) * a1 * np.sin(lp) + (kp - lam) * a2 * np.sin(lm)
            Fp = -(lam + 1)**2 * a1 * np.cos(lp) \
                + (kp - lam) * (lam - 1) * a2 * np.cos(lm)
            H = -(lam + 1) * a1 * np.cos(lp) - (kp + lam) * a2 * np.cos(lm)
            Hp = (lam + 1)**2 * a1 * np.sin(lp) \
                + (kp + lam) * (lam - 1) * a2 * np.sin(lm)
        rl, rl1 = rr**lam, rr**(lam - 1.0)
        ur = rl * F / (2 * G)
        up = rl * H / (2 * G)
        ur_r = lam * rl1 * F / (2 * G)
        ur_p = rl * Fp / (2 * G)
        up_r = lam * rl1 * H / (2 * G)
        up_p = rl * Hp / (2 * G)
        return ur, up, ur_r, ur_p, up_r, up_p

    def displacement(self, pts):
        rr, ph = self.config.polar(pts)
        ur, up, *_ = self._polar(rr, ph)
        c, s = np.cos(ph), np.sin(ph)
        ul = np.stack([ur * c - up * s, ur * s + up * c], axis=-1)
        return ul @ self.config.R.T

    def stress(self, pts):
        rr, ph = self.config.polar(pts)
        _, _, srr, spp, srp = self._polar(rr, ph)
        c, s = np.cos(ph), np.sin(ph)
        sxx = srr * c * c + spp * s * s - 2 * srp * s * c
        syy = srr * s * s + spp * c * c + 2 * srp * s * c
        sxy = (srr - spp) * s * c + srp * (c * c - s * s)
        sl = np.stack([sxx, syy, sxy], axis=-1)
        return sl @ self._Mrot.T

    def displacement_gradient(self, pts):
        """du_i/dx_j in the global frame, shape (..., 2, 2)."""
        rr, ph = self.config.polar(pts)
        ur, up, ur_r, ur_p, up_r, up_p = self._polar_deriv(rr, ph)
        L = np.empty(rr.shape + (2, 2))
        L[..., 0, 0] = ur_r
        L[..., 0, 1] = (ur_p - up) / rr
        L[..., 1, 0] = up_r
        L[..., 1, 1] = (up_p + ur) / rr
        c, s = np.cos(ph), np.sin(ph)
        Q = np.empty(rr.shape + (2, 2))
        Q[..., 0, 0] = c
        Q[..., 0, 1] = -s
        Q[..., 1, 0] = s
        Q[..., 1, 1] = c
        Lc = np.einsum("...ab,...bc,...dc->...ad", Q, L, Q)
        R = self.config.R
        return np.einsum("ab,...bc,dc->...ad", R, Lc, R)


def _ring_weight_grads(config, ring, pts):
    """grad q and (for derivative use) the radial direction at points."""
    d = np.asarray(pts, dtype=float) - config.apex
    r = np.hypot(d[..., 0], d[..., 1])
    e = d / np.maximum(r, 1e-300)[..., None]
    dq = ring.dq(r)
    return dq[..., None] * e, r, e


class GsifExtractor:
    """Interaction-integral extraction of a generalized intensity factor.

    The raw interaction of a field (u, sigma) with the auxiliary
    negative-exponent field is

        raw(u) = -int (sigma(u) . u_aux - sigma_aux . u) . grad q dV

    and the factor is raw(u) / C, with C = raw(primary field) computed
    once per mode on a reference polar rule (C is contour independent,
    so one constant serves all rings).
    """

    def __init__(self, config, mode, material, ring=None):
        self.config = config
        self.mode = mode
        self.material = material
        self.ring = ring or ExtractionRing(0.6, 0.8)
        self.primary = WilliamsField.primary(config, mode, material)
        self.aux = WilliamsField.auxiliary(config, mode, material)
        self.C = self._raw_polar(self.primary.displacement,
                                 self.primary.stress, self.ring)

    def _raw_polar(self, u_fn, sig_fn, ring, nr=60, nphi=400):
        """Raw interaction by a tensor polar rule over the ring sector."""
        cfg = self.config
        gr, wr = gauss1d(nr)
        gp, wp = gauss1d(nphi)
        rr = 0.5 * (ring.r2 - ring.r1) * (gr + 1) + ring.r1
        ph = 0.5 * cfg.omega * gp
        R, P = np.meshgrid(rr, ph, indexing="ij")
        WT = np.outer(0.5 * (ring.r2 - ring.r1) * wr,
                      0.5 * cfg.omega * wp) * R
        xl = np.stack([R * np.cos(P), R * np.sin(P)], axis=-1)
        pts = xl @ cfg.R.T + cfg.apex
        return self._raw_at(u_fn(pts), sig_fn(pts), pts, WT, ring)

    def _raw_at(self, u, sig, pts, wts, ring):
        u_aux = self.aux.displacement(pts)
        sig_aux = self.aux.stress(pts)
        gq, _, _ = _ring_weight_grads(self.config, ring, pts)
        t1x = sig[..., 0] * u_aux[..., 0] + sig[..., 2] * u_aux[..., 1]
        t1y = sig[..., 2] * u_aux[..., 0] + sig[..., 1] * u_aux[..., 1]
        t2x = sig_aux[..., 0] * u[..., 0] + sig_aux[..., 2] * u[..., 1]
        t2y = sig_aux[..., 2] * u[..., 0] + sig_aux[..., 1] * u[..., 1]
        integ = (t1x - t2x) * gq[..., 0] + (t1y - t2y) * gq[..., 1]
        return -float(np.sum(integ * wts))

    def extract_exact(self, u_fn, sig_fn, ring=None):
        """Factor of closed-form fields given as global-point samplers."""
        return self._raw_polar(u_fn, sig_fn, ring or self.ring) / self.C

    def _support_elements(self, mesh, ring):
        xy = mesh.elem_coords()
        r = np.hypot(xy[..., 0] - self.config.apex[0],
                     xy[..., 1] - self.config.apex[1])
        diam = np.sqrt(2.0) * mesh.sizes()
        return np.nonzero((r.min(axis=1) - diam <= ring.r2)
                          & (r.max(axis=1) + diam >= ring.r1))[0]

    def extract(self, field, order=8, ring=None):
        """Factor of a mesh-sampled field (FE or recovered).

        ``field`` must provide displacement(elems, ref) and
        stress(elems, ref).  Integration is order x order Gauss per
        element over the elements that can touch the ring.
        """
        ring = ring or self.ring
        mesh = field.mesh
        elems = self._support_elements(mesh, ring)
        if len(elems) == 0:
            return 0.0
        from .mesh import gauss2d
        gp, gw = gauss2d(order)
        _, detJ = kernels.batch_bmat(mesh.nodes[mesh.elems[elems]], gp)
        pts = element_points(mesh, elems, gp)
        u = field.displacement(elems, gp)
        sig = field.stress(elems, gp)
        return self._raw_at(u, sig, pts, detJ * gw[None, :], ring) / self.C

    def dual_loads(self):
        """Body force, initial strain and their equilibrium divergence
        for the adjoint problem of this intensity factor.

        Returns (body_fn, eps0_fn, div_fn) over global points; all three
        vanish outside the ring ramp.
        """
        cfg, ring, C = self.config, self.ring, self.C
        aux = self.aux
        D = self.material.D

        def ramp(pts):
            # The weight gradient lives on r1 < r < r2 only; never touch
            # the (singular) auxiliary field outside that band.
            r = np.hypot(pts[..., 0] - cfg.apex[0],
                         pts[..., 1] - cfg.apex[1])
            return (r > ring.r1) & (r < ring.r2)

        def body(pts):
            out = np.zeros(pts.shape[:-1] + (2,))
            m = ramp(pts)
            if m.any():
                p = pts[m]
                gq, _, _ = _ring_weight_grads(cfg, ring, p)
                sa = aux.stress(p)
                out[m, 0] = sa[:, 0] * gq[:, 0] + sa[:, 2] * gq[:, 1]
                out[m, 1] = sa[:, 2] * gq[:, 0] + sa[:, 1] * gq[:, 1]
            return out / C

        def eps0(pts):
            out = np.zeros(pts.shape[:-1] + (3,))
            m = ramp(pts)
            if m.any():
                p = pts[m]
                gq, _, _ = _ring_weight_grads(cfg, ring, p)
                ua = aux.displacement(p)
                out[m, 0] = ua[:, 0] * gq[:, 0]
                out[m, 1] = ua[:, 1] * gq[:, 1]
                out[m, 2] = ua[:, 0] * gq[:, 1] + ua[:, 1] * gq[:, 0]
            return -out / C

        def div_sig(pts):
            # divergence of (sig0 - D eps0) = -div(D eps0); eps0 above
            out = np.zeros(pts.shape[:-1] + (2,))
            m = ramp(pts)
            if not m.any():
                return out / C
            p = pts[m]
            gq, r, e = _ring_weight_grads(cfg, ring, p)
            ua = aux.displacement(p)
            gu = aux.displacement_gradient(p)
            dq = ring.dq(r)
            ddq = ring.ddq(r)
            # Hessian of q(r)
            qij = np.empty(r.shape + (2, 2))
            for i in range(2):
                for j in range(2):
                    qij[..., i, j] = ddq * e[..., i] * e[..., j] \
                        + dq * ((1.0 if i == j else 0.0)
                                - e[..., i] * e[..., j]) / r
            # dS/dx_j of S = [u1 q1, u2 q2, u1 q2 + u2 q1]
            dS = np.empty(r.shape + (3, 2))
            for j in range(2):
                dS[..., 0, j] = gu[..., 0, j] * gq[..., 0] \
                    + ua[..., 0] * qij[..., 0, j]
                dS[..., 1, j] = gu[..., 1, j] * gq[..., 1] \
                    + ua[..., 1] * qij[..., 1, j]
                dS[..., 2, j] = gu[..., 0, j] * gq[..., 1] \
                    + ua[..., 0] * qij[..., 1, j] \
                    + gu[..., 1, j] * gq[..., 0] \
                    + ua[..., 1] * qij[..., 0, j]
            dW = np.einsum("ab,...bj->...aj", D, dS)
            out[m, 0] = dW[..., 0, 0] + dW[..., 2, 1]
            out[m, 1] = dW[..., 2, 0] + dW[..., 1, 1]
            return out / C

        return body, eps0, div_sig

"""Plane-strain linear elastic constitutive relations in Voigt notation.

Voigt ordering is (xx, yy, xy) with the engineering shear strain
gamma_xy = 2 eps_xy, so the strain energy density is 0.5 * eps^T D eps.
"""

import numpy as np


class Material:
    """Isotropic linear elastic material under plane strain.

    Parameters
    ----------
    E : float
        Young's modulus, must be positive.
    nu : float
        Poisson's ratio, must satisfy -1 < nu < 0.5 (plane strain blows
        up at the incompressible limit).

    Attributes
    ----------
    D : ndarray, shape (3, 3)
        Constitutive matrix mapping Voigt strain to Voigt stress.
    Dinv : ndarray, shape (3, 3)
        Compliance matrix, inverse of ``D``.
    shear_modulus : float
        G = E / (2 (1 + nu)).
    lame_lambda : float
        First Lame parameter.
    kolosov : float
        Kolosov constant 3 - 4 nu used by corner asymptotics.
    """

    def __init__(self, E, nu):
        if E <= 0.0:
            raise ValueError(f"Young's modulus must be positive, got {E}")
        if not -1.0 < nu < 0.5:
            raise ValueError(f"Poisson's ratio must lie in (-1, 0.5), got {nu}")
        self.E = float(E)
        self.nu = float(nu)
        c = E / ((1.0 + nu) * (1.0 - 2.0 * nu))
        self.D = c * np.array(
            [
                [1.0 - nu, nu, 0.0],
                [nu, 1.0 - nu, 0.0],
                [0.0, 0.0, 0.5 * (1.0 - 2.0 * nu)],
            ]
        )
        self.Dinv = np.linalg.inv(self.D)
        self.shear_modulus = E / (2.0 * (1.0 + nu))
        self.lame_lambda = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
        self.kolosov = 3.0 - 4.0 * nu

    def stress(self, strain, eps0=None, sig0=None):
        """Stress from strain with optional initial strain/stress fields.

        sigma = D (eps - eps0) + sig0, all in Voigt notation.  ``strain``
        may be a single (3,) vector or an (..., 3) array; initial fields
        broadcast against it.
        """
        strain = np.asarray(strain, dtype=float)
        eff = strain if eps0 is None else strain - np.asarray(eps0, dtype=float)
        s = eff @ self.D.T
        if sig0 is not None:
            s = s + np.asarray(sig0, dtype=float)
        return s

    def __repr__(self):
        return f"Material(E={self.E}, nu={self.nu})"


def traction(stress, normal):
    """Project Voigt stresses onto boundary normals: t = G(n) sigma.

    G(n) = [[nx, 0, ny], [0, ny, nx]].  ``stress`` is (..., 3),
    ``normal`` is (..., 2); returns (..., 2) tractions.
    """
    stress = np.asarray(stress, dtype=float)
    normal = np.asarray(normal, dtype=float)
    nx, ny = normal[..., 0], normal[..., 1]
    tx = stress[..., 0] * nx + stress[..., 2] * ny
    ty = stress[..., 1] * ny + stress[..., 2] * nx
    return np.stack([tx, ty], axis=-1)


def strain_rotation(angle):
    """Voigt rotation matrix T such that eps_global = T eps_local.

    For a local frame rotated by ``angle`` (counterclockwise, radians)
    relative to the global frame.  Engineering shear convention.
    """
    c, s = np.cos(angle), np.sin(angle)
    return np.array(
        [
            [c * c, s * s, -c * s],
            [s * s, c * c, c * s],
            [2 * c * s, -2 * c * s, c * c - s * s],
        ]
    )


def stress_rotation(angle):
    """Voigt rotation matrix such that sig_global = M sig_local."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array(
        [
            [c * c, s * s, -2 * c * s],
            [s * s, c * c, 2 * c * s],
            [c * s, -c * s, c * c - s * s],
        ]
    )


def equilibrium_residual(stress_fn, body_fn, points, h=1e-5):
    """Max norm of div sigma + b at ``points`` by central differences.

    ``stress_fn`` maps (n, 2) coordinates to (n, 3) Voigt stresses;
    ``body_fn`` maps (n, 2) to (n, 2) body forces or is None.  Used to
    sanity-check closed-form fields; accuracy is O(h^2).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    ex = np.array([h, 0.0])
    ey = np.array([0.0, h])
    dsx = (stress_fn(points + ex) - stress_fn(points - ex)) / (2 * h)
    dsy = (stress_fn(points + ey) - stress_fn(points - ey)) / (2 * h)
    div = np.stack(
        [dsx[:, 0] + dsy[:, 2], dsx[:, 2] + dsy[:, 1]], axis=-1
    )
    if body_fn is not None:
        div = div + np.atleast_2d(body_fn(points))
    return float(np.max(np.abs(div)))

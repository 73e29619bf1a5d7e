"""Pure-numpy reference implementations of the element kernels.

Element displacement vectors are interleaved (ux0, uy0, ..., ux3, uy3).
Strain rows use Voigt order (xx, yy, xy) with engineering shear.
"""

import numpy as np


def shape_q4(pts):
    """Bilinear shape functions at reference points, shape (n, 4)."""
    xi, eta = pts[:, 0], pts[:, 1]
    return 0.25 * np.column_stack(
        [(1 - xi) * (1 - eta), (1 + xi) * (1 - eta),
         (1 + xi) * (1 + eta), (1 - xi) * (1 + eta)])


def dshape_q4(pts):
    """Reference derivatives dN/d(xi,eta), shape (n, 4, 2)."""
    xi, eta = pts[:, 0], pts[:, 1]
    dN = np.empty((len(pts), 4, 2))
    dN[:, 0, 0] = -0.25 * (1 - eta)
    dN[:, 0, 1] = -0.25 * (1 - xi)
    dN[:, 1, 0] = 0.25 * (1 - eta)
    dN[:, 1, 1] = -0.25 * (1 + xi)
    dN[:, 2, 0] = 0.25 * (1 + eta)
    dN[:, 2, 1] = 0.25 * (1 + xi)
    dN[:, 3, 0] = -0.25 * (1 + eta)
    dN[:, 3, 1] = 0.25 * (1 - xi)
    return dN


def batch_bmat(coords, gp):
    """Strain-displacement matrices and Jacobian determinants.

    Parameters
    ----------
    coords : (E, 4, 2) element corner coordinates
    gp : (n, 2) reference quadrature points

    Returns
    -------
    B : (E, n, 3, 8), detJ : (E, n)
    """
    dN = dshape_q4(gp)  # (n, 4, 2)
    # J[a, b] = d x_b / d xi_a
    J = np.einsum("nka,ekb->enab", dN, coords)
    detJ = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    E, n = detJ.shape
    dNdx = np.empty((E, n, 4, 2))
    dNdx[..., 0] = (np.einsum("nk,en->enk", dN[:, :, 0], J[..., 1, 1])
                    - np.einsum("nk,en->enk", dN[:, :, 1], J[..., 0, 1]))
    dNdx[..., 1] = (-np.einsum("nk,en->enk", dN[:, :, 0], J[..., 1, 0])
                    + np.einsum("nk,en->enk", dN[:, :, 1], J[..., 0, 0]))
    dNdx /= detJ[..., None, None]
    B = np.zeros((E, n, 3, 8))
    B[..., 0, 0::2] = dNdx[..., 0]
    B[..., 1, 1::2] = dNdx[..., 1]
    B[..., 2, 0::2] = dNdx[..., 1]
    B[..., 2, 1::2] = dNdx[..., 0]
    return B, detJ


def batch_stiffness(coords, D, gp, gw):
    """Element stiffness matrices, shape (E, 8, 8)."""
    B, detJ = batch_bmat(coords, gp)
    return np.einsum("enia,ij,enjb,en,n->eab", B, D, B, detJ, gw,
                     optimize=True)

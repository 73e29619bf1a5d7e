"""Numba-compiled twins of the element kernels.

Same contracts as kernels._numpy; explicit loops under @njit.
"""

import numpy as np
from numba import njit, prange


@njit(cache=True)
def _dshape_at(xi, eta, dN):
    dN[0, 0] = -0.25 * (1 - eta)
    dN[0, 1] = -0.25 * (1 - xi)
    dN[1, 0] = 0.25 * (1 - eta)
    dN[1, 1] = -0.25 * (1 + xi)
    dN[2, 0] = 0.25 * (1 + eta)
    dN[2, 1] = 0.25 * (1 + xi)
    dN[3, 0] = -0.25 * (1 + eta)
    dN[3, 1] = 0.25 * (1 - xi)


@njit(cache=True)
def shape_q4(pts):
    n = pts.shape[0]
    N = np.empty((n, 4))
    for p in range(n):
        xi, eta = pts[p, 0], pts[p, 1]
        N[p, 0] = 0.25 * (1 - xi) * (1 - eta)
        N[p, 1] = 0.25 * (1 + xi) * (1 - eta)
        N[p, 2] = 0.25 * (1 + xi) * (1 + eta)
        N[p, 3] = 0.25 * (1 - xi) * (1 + eta)
    return N


@njit(cache=True)
def dshape_q4(pts):
    n = pts.shape[0]
    dN = np.empty((n, 4, 2))
    for p in range(n):
        _dshape_at(pts[p, 0], pts[p, 1], dN[p])
    return dN


@njit(cache=True, parallel=True)
def batch_bmat(coords, gp):
    E = coords.shape[0]
    n = gp.shape[0]
    dN = dshape_q4(gp)
    B = np.zeros((E, n, 3, 8))
    detJ = np.empty((E, n))
    for e in prange(E):
        for p in range(n):
            j00 = j01 = j10 = j11 = 0.0
            for k in range(4):
                j00 += dN[p, k, 0] * coords[e, k, 0]
                j01 += dN[p, k, 0] * coords[e, k, 1]
                j10 += dN[p, k, 1] * coords[e, k, 0]
                j11 += dN[p, k, 1] * coords[e, k, 1]
            det = j00 * j11 - j01 * j10
            detJ[e, p] = det
            for k in range(4):
                gx = (dN[p, k, 0] * j11 - dN[p, k, 1] * j01) / det
                gy = (-dN[p, k, 0] * j10 + dN[p, k, 1] * j00) / det
                B[e, p, 0, 2 * k] = gx
                B[e, p, 1, 2 * k + 1] = gy
                B[e, p, 2, 2 * k] = gy
                B[e, p, 2, 2 * k + 1] = gx
    return B, detJ


@njit(cache=True, parallel=True)
def batch_stiffness(coords, D, gp, gw):
    E = coords.shape[0]
    n = gp.shape[0]
    B, detJ = batch_bmat(coords, gp)
    K = np.zeros((E, 8, 8))
    for e in prange(E):
        DB = np.empty((3, 8))
        for p in range(n):
            scale = detJ[e, p] * gw[p]
            for i in range(3):
                for b in range(8):
                    acc = 0.0
                    for j in range(3):
                        acc += D[i, j] * B[e, p, j, b]
                    DB[i, b] = acc
            for a in range(8):
                for b in range(8):
                    acc = 0.0
                    for i in range(3):
                        acc += B[e, p, i, a] * DB[i, b]
                    K[e, a, b] += scale * acc
    return K

"""Estimates of the error in a quantity of interest and their quality.

The central estimate pairs the recovered primal and dual stress errors
through the compliance:

    E1 = sum_e int_e (sig* - sig_h)' Dinv (sig~* - sig~_h)

Three progressively coarser bounds follow from the triangle and
Cauchy-Schwarz inequalities: E2 sums absolute element contributions,
E3 sums products of element energy seminorms, E4 is the product of the
global energy norms, so |E1| <= E2 <= E3 <= E4 always holds.

When exact fields are available the same element loop also computes the
true contributions, giving the global effectivity, the quantity
effectivity, and the distribution of the local effectivity deviation

    D_e = theta_e - 1   (theta_e >= 1),   1 - 1/theta_e   (else)

whose mean magnitude and spread measure how evenly the estimator works
across the mesh.  Elements touching a singular vertex are integrated
with a corner-graded rule.
"""

from dataclasses import dataclass

import numpy as np

from .mesh import gauss2d, graded_gauss2d
from .solver import element_points
from . import kernels


@dataclass
class ErrorReport:
    """One mesh's worth of error estimation output."""

    dof: int
    q_h: float          # quantity evaluated on the FE solution
    e_est: float        # E1, estimated error in the quantity
    e_true: float       # exact error in the quantity (nan if unknown)
    theta: float        # e_est / e_true
    theta_qoi: float    # (q_h + e_est) / exact quantity
    eta_est: float      # |e_est| / |q_h + e_est|
    eta_true: float     # |e_true| / |exact quantity|
    E2: float
    E3: float
    E4: float
    mean_absD: float    # mean |D_e| over elements (nan if unknown)
    std_D: float        # population std of D_e (nan if unknown)
    norm_e: float       # energy norm of the recovered primal error
    norm_ed: float      # energy norm of the recovered dual error
    e_identity: float   # E1 formula fed with exact errors (nan if unknown)
    elem_est: np.ndarray  # per-element E1 contributions


def _corner_rules(mesh, corner, order):
    """Graded rules for elements with a node on the singular apex."""
    if corner is None:
        return {}
    tol = 1e-9 * (1.0 + float(np.abs(corner.apex).max()))
    d = np.linalg.norm(mesh.nodes[mesh.elems] - corner.apex, axis=2)
    rules = {}
    for e in np.nonzero(d.min(axis=1) <= tol)[0]:
        rules[int(e)] = graded_gauss2d(order, int(np.argmin(d[e])))
    return rules


def estimate(primal, dual, primal_rec, dual_rec, qoi=None, q_exact=None,
             exact_primal=None, exact_dual=None, order=4, corner=None):
    """Estimate the error in a quantity from recovered stress fields.

    Parameters
    ----------
    primal, dual : FEField
        Solutions of the primal and adjoint problems on one mesh.
    primal_rec, dual_rec : RecoveredField
        Their recovered stresses.
    qoi : quantity object or None
        Used to evaluate q_h; without it q_h and the relative measures
        that need it are nan.
    q_exact : float or None
        Known exact value of the quantity.
    exact_primal, exact_dual : objects with stress(points) or None
        Closed-form stress samplers for local effectivity statistics.
    order : int
        Gauss order of the element loop.
    corner : CornerConfig or None
        Singular vertex whose touching elements get graded quadrature.
    """
    mesh = primal.mesh
    Dinv = primal.material.Dinv
    nE = mesh.n_elems
    est = np.zeros(nE)
    ne2 = np.zeros(nE)
    nd2 = np.zeros(nE)
    want_true = exact_primal is not None and exact_dual is not None
    true = np.zeros(nE) if want_true else None

    special = _corner_rules(mesh, corner, order)

    def accumulate(elems, gp, gw):
        _, detJ = kernels.batch_bmat(mesh.nodes[mesh.elems[elems]], gp)
        wdet = detJ * gw[None, :]
        sp = primal.stress(elems, gp)
        sd = dual.stress(elems, gp)
        de = primal_rec.stress(elems, gp) - sp
        dd = dual_rec.stress(elems, gp) - sd
        est[elems] = np.einsum("en,eni,ij,enj->e", wdet, de, Dinv, dd)
        ne2[elems] = np.einsum("en,eni,ij,enj->e", wdet, de, Dinv, de)
        nd2[elems] = np.einsum("en,eni,ij,enj->e", wdet, dd, Dinv, dd)
        if want_true:
            pts = element_points(mesh, elems, gp)
            et = np.stack([exact_primal.stress(p) for p in pts]) - sp
            dt = np.stack([exact_dual.stress(p) for p in pts]) - sd
            true[elems] = np.einsum("en,eni,ij,enj->e", wdet, et, Dinv, dt)

    regular = np.array([e for e in range(nE) if e not in special],
                       dtype=np.int64)
    if len(regular):
        gp, gw = gauss2d(order)
        accumulate(regular, gp, gw)
    for e, (gp, gw) in special.items():
        accumulate(np.array([e]), gp, gw)

    E1 = float(est.sum())
    E2 = float(np.abs(est).sum())
    E3 = float(np.sum(np.sqrt(np.maximum(ne2 * nd2, 0.0))))
    norm_e = float(np.sqrt(max(ne2.sum(), 0.0)))
    norm_ed = float(np.sqrt(max(nd2.sum(), 0.0)))
    E4 = norm_e * norm_ed

    q_h = float(qoi.evaluate(primal)) if qoi is not None else float("nan")
    e_true = (q_exact - q_h if q_exact is not None and np.isfinite(q_h)
              else float("nan"))
    theta = e_est_over(E1, e_true)
    theta_qoi = ((q_h + E1) / q_exact
                 if q_exact not in (None, 0.0) and np.isfinite(q_h)
                 else float("nan"))
    denom = abs(q_h + E1)
    eta_est = abs(E1) / denom if denom > 0 else float("nan")
    eta_true = (abs(e_true) / abs(q_exact)
                if q_exact not in (None, 0.0) and np.isfinite(e_true)
                else float("nan"))

    mean_absD = std_D = e_identity = float("nan")
    if want_true:
        e_identity = float(true.sum())
        with np.errstate(divide="ignore", invalid="ignore"):
            th = est / true
            Dloc = np.where(th >= 1.0, th - 1.0, 1.0 - 1.0 / th)
        Dloc = Dloc[np.isfinite(Dloc)]
        if len(Dloc):
            mean_absD = float(np.mean(np.abs(Dloc)))
            std_D = float(np.std(Dloc))

    return ErrorReport(dof=primal.n_dof, q_h=q_h, e_est=E1, e_true=e_true,
                       theta=theta, theta_qoi=theta_qoi, eta_est=eta_est,
                       eta_true=eta_true, E2=E2, E3=E3, E4=E4,
                       mean_absD=mean_absD, std_D=std_D, norm_e=norm_e,
                       norm_ed=norm_ed, e_identity=e_identity, elem_est=est)


def e_est_over(e_est, e_true):
    if not np.isfinite(e_true) or e_true == 0.0:
        return float("nan")
    return e_est / e_true

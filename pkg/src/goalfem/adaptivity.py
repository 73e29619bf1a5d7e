"""Goal-driven mesh adaptation from per-element error contributions.

The size map equidistributes the estimated contribution: with
e_e = sqrt(|element contribution|) and the target e_t = sqrt(total / N),
the new size is h_e (e_t / e_e)^(1/r), where r is the expected
convergence rate, 1 for smooth elements and the smallest corner
exponent for elements touching a singular vertex.  Sizes quantize to
quadtree levels, so each element gets ceil(log2(h/h_new)) splits,
capped per cycle; the one-level closure adds whatever neighbors it
must.
"""

import math
from dataclasses import dataclass

import numpy as np

from .mesh import refine, uniform_refine
from .recovery import recover
from .qoi import dual_solve
from .estimators import estimate


@dataclass
class AdaptConfig:
    """Controls for the adaptive loop."""

    target: float = 0.01        # stop when eta_est drops below this
    max_iter: int = 8
    max_splits: int = 2         # per-element cap per cycle
    r_smooth: float = 1.0
    r_singular: float = None    # default: corner exponent of the case
    uniform: bool = False       # uniform refinement instead of the map


def split_counts(mesh, elem_est, config, corner=None, lam_min=None):
    """Number of quadtree splits per element from the size map."""
    nE = mesh.n_elems
    total = float(np.abs(elem_est).sum())
    if total <= 0.0:
        return np.zeros(nE, dtype=int)
    e_t = math.sqrt(total / nE)
    e_e = np.sqrt(np.abs(elem_est))
    r = np.full(nE, config.r_smooth)
    if corner is not None:
        rs = config.r_singular
        if rs is None:
            rs = lam_min if lam_min is not None else config.r_smooth
        tol = 1e-9 * (1.0 + float(np.abs(corner.apex).max()))
        d = np.linalg.norm(mesh.nodes[mesh.elems] - corner.apex, axis=2)
        r[d.min(axis=1) <= tol] = rs
    with np.errstate(divide="ignore"):
        ratio = np.where(e_e > 0, e_e / e_t, 0.0)
    splits = np.zeros(nE, dtype=int)
    refine_mask = ratio > 1.0
    splits[refine_mask] = np.ceil(
        np.log2(ratio[refine_mask]) / r[refine_mask]).astype(int)
    return np.clip(splits, 0, config.max_splits)


def adapt_mesh(mesh, splits):
    """Refine each element by its requested number of splits.

    ``splits`` maps element index (or key) to a split count; refinement
    proceeds one level at a time so the one-level closure stays valid.
    """
    if isinstance(splits, np.ndarray):
        pending = {mesh.elem_keys[e]: int(n)
                   for e, n in enumerate(splits) if n > 0}
    else:
        pending = {k: int(n) for k, n in splits.items() if n > 0}
    m = mesh
    while pending:
        key_to_idx = {k: i for i, k in enumerate(m.elem_keys)}
        marks = sorted(key_to_idx[k] for k in pending if k in key_to_idx)
        if not marks:
            break
        nxt = {}
        for k, n in pending.items():
            if n > 1 and k in key_to_idx:
                L, i, j = k
                for di in (0, 1):
                    for dj in (0, 1):
                        nxt[(L + 1, 2 * i + di, 2 * j + dj)] = n - 1
        m = refine(m, marks)
        pending = nxt
    return m


def run_adaptive(case, config=None, constrained=True, degree=1,
                 collect=None):
    """Primal/dual solve, recover, estimate, refine until converged.

    ``case`` is a benchmark problem object (see ``benchmarks``); returns
    the list of per-cycle ErrorReports.  ``collect``, when given, is
    called with (cycle, mesh, primal, dual, report) after each estimate.
    """
    config = config or AdaptConfig()
    mesh = case.initial_mesh()
    reports = []
    for cycle in range(config.max_iter):
        primal = case.solve(mesh)
        dual = dual_solve(primal, case.qoi)
        prec = recover(primal, constrained=constrained, degree=degree,
                       split=case.primal_split(),
                       interface_region=case.primal_interface())
        drec = recover(dual, constrained=constrained, degree=degree,
                       split=case.dual_split(),
                       interface_region=case.dual_interface())
        report = estimate(primal, dual, prec, drec, qoi=case.qoi,
                          q_exact=case.exact_q(mesh),
                          exact_primal=case.exact_primal,
                          exact_dual=case.exact_dual,
                          corner=case.corner)
        reports.append(report)
        if collect is not None:
            collect(cycle, mesh, primal, dual, report)
        if np.isfinite(report.eta_est) and report.eta_est <= config.target:
            break
        if cycle == config.max_iter - 1:
            break
        if config.uniform:
            mesh = uniform_refine(mesh)
        else:
            splits = split_counts(mesh, report.elem_est, config,
                                  corner=case.corner,
                                  lam_min=case.lambda_min)
            if not splits.any():
                splits[np.argmax(np.abs(report.elem_est))] = 1
            mesh = adapt_mesh(mesh, splits)
    return reports

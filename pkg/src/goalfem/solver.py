"""Bilinear-quad FEM solver: assembly, constraints, loads, field evaluation.

Hanging-node constraints are folded in by substitution: with T the
prolongation from regular (unconstrained) nodal dofs to all nodal dofs,
the reduced system is T' K T.  Componentwise Dirichlet data is eliminated
by partitioning; normal (rotated) constraints are appended as Lagrange
rows.  The solve is a direct sparse factorization.

Loads are volume/boundary/initial-field terms.  Volume-type terms may be
restricted to a region given as a set of level-0 base cells; membership
is inherited under refinement.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .mesh import gauss1d, gauss2d


class LoadSet:
    """Right-hand-side data for a linear elastostatic problem.

    Terms (all optional):

    body : list of (fn, region)
        Body force fn(points (n,2)) -> (n,2); region is a set of base
        cells or None for the whole domain.
    tractions : dict tag -> fn
        Boundary tractions on tagged boundary chords, global frame;
        called as fn(points (n, 2), outward unit normals (n, 2)).
    eps0 / sig0 : list of (fn, region)
        Initial strain / initial stress in Voigt notation, entering the
        weak form as +int eps(v)' D eps0 - int eps(v)' sig0.
    div_sig : list of (fn, region)
        Optional closed-form divergence of (sig0 - D eps0) for the same
        terms; used by equilibrium-constrained recovery, not assembly.
    volume_order : int or None
        Quadrature order for volume terms (defaults to assembly order).
    """

    def __init__(self, body=None, tractions=None, eps0=None, sig0=None,
                 div_sig=None, volume_order=None):
        self.body = list(body or [])
        self.tractions = dict(tractions or {})
        self.eps0 = list(eps0 or [])
        self.sig0 = list(sig0 or [])
        self.div_sig = list(div_sig or [])
        self.volume_order = volume_order

    def _sum_terms(self, terms, pts, base_cell):
        out = None
        for fn, region in terms:
            if region is not None and base_cell is not None \
                    and base_cell not in region:
                continue
            v = fn(pts)
            out = v if out is None else out + v
        return out

    def eps0_at(self, pts, base_cell=None):
        """Total initial strain at points, for an element with the given
        base-cell ancestry (None sums unrestricted terms only)."""
        return self._sum_terms(self.eps0, pts, base_cell)

    def sig0_at(self, pts, base_cell=None):
        return self._sum_terms(self.sig0, pts, base_cell)

    def body_at(self, pts, base_cell=None):
        return self._sum_terms(self.body, pts, base_cell)

    def div_sig_at(self, pts, base_cell=None):
        return self._sum_terms(self.div_sig, pts, base_cell)


class DirichletBC:
    """Essential boundary conditions.

    comps : list of (tag, comp, fn)
        Fix displacement component comp (0 or 1) on all nodes of the
        tagged boundary to fn(points) (scalar-valued).
    normals : list of (tag, fn)
        Constrain n . u = fn(points) on the tagged boundary via Lagrange
        multipliers, with nodal normals averaged from adjacent chords.
    pins : list of ((x, y), comp, value)
        Point constraints attached to the nearest mesh node (which must
        coincide with the point).
    """

    def __init__(self, comps=None, normals=None, pins=None):
        self.comps = list(comps or [])
        self.normals = list(normals or [])
        self.pins = list(pins or [])


class FEField:
    """A solved finite element displacement field and its problem data."""

    def __init__(self, mesh, material, loads, bc, u_full, n_dof,
                 K_full, f_full, T, reactions, solve_residual,
                 free_idx, fixed_idx, assembly_order=2):
        self.mesh = mesh
        self.material = material
        self.loads = loads
        self.bc = bc
        self.u = u_full
        self.n_dof = n_dof
        self.K_full = K_full
        self.f_full = f_full
        self.T = T
        self.reactions = reactions
        self.solve_residual = solve_residual
        self.free_idx = free_idx
        self.fixed_idx = fixed_idx
        self.assembly_order = assembly_order

    def element_dofs(self, elems_idx=None):
        e = self.mesh.elems if elems_idx is None else self.mesh.elems[elems_idx]
        dofs = np.empty((len(e), 8), dtype=np.int64)
        dofs[:, 0::2] = 2 * e
        dofs[:, 1::2] = 2 * e + 1
        return dofs

    def strain(self, elems_idx, pts_ref):
        """Strains at reference points of the listed elements, (E, n, 3)."""
        coords = self.mesh.nodes[self.mesh.elems[elems_idx]]
        B, _ = kernels.batch_bmat(coords, pts_ref)
        ue = self.u[self.element_dofs(elems_idx)]
        return np.einsum("enab,eb->ena", B, ue)

    def stress(self, elems_idx, pts_ref):
        """Stresses including initial-field contributions, (E, n, 3)."""
        eps = self.strain(elems_idx, pts_ref)
        sig = eps @ self.material.D.T
        if self.loads.eps0 or self.loads.sig0:
            pts = element_points(self.mesh, elems_idx, pts_ref)
            bases = self.mesh.base_cells()
            for k, e in enumerate(np.atleast_1d(elems_idx)):
                e0 = self.loads.eps0_at(pts[k], bases[e])
                s0 = self.loads.sig0_at(pts[k], bases[e])
                if e0 is not None:
                    sig[k] -= e0 @ self.material.D.T
                if s0 is not None:
                    sig[k] += s0
        return sig

    def displacement(self, elems_idx, pts_ref):
        N = kernels.shape_q4(pts_ref)
        ue = self.u[self.element_dofs(elems_idx)]
        ux = N @ ue[:, 0::2].T
        uy = N @ ue[:, 1::2].T
        return np.stack([ux.T, uy.T], axis=-1)


def element_points(mesh, elems_idx, pts_ref):
    """Physical coordinates of reference points, (E, n, 2)."""
    coords = mesh.nodes[mesh.elems[elems_idx]]
    N = kernels.shape_q4(pts_ref)
    return np.einsum("nk,ekc->enc", N, coords)


def constraint_matrix(mesh):
    """Sparse prolongation T (all dofs x regular dofs)."""
    n = mesh.n_nodes
    regular = np.nonzero(~mesh.is_hanging)[0]
    red = -np.ones(n, dtype=np.int64)
    red[regular] = np.arange(len(regular))
    rows, cols, vals = [], [], []
    for node in regular:
        for c in (0, 1):
            rows.append(2 * node + c)
            cols.append(2 * red[node] + c)
            vals.append(1.0)
    for slave, masters in mesh.constraints.items():
        for m, w in masters:
            for c in (0, 1):
                rows.append(2 * slave + c)
                cols.append(2 * red[m] + c)
                vals.append(w)
    T = sp.coo_matrix((vals, (rows, cols)),
                      shape=(2 * n, 2 * len(regular))).tocsr()
    return T, regular


def assemble_stiffness(mesh, material, order):
    """Full (unreduced) sparse stiffness over all nodal dofs."""
    gp, gw = gauss2d(order)
    Ke = kernels.batch_stiffness(mesh.elem_coords(), material.D, gp, gw)
    e = mesh.elems
    dofs = np.empty((len(e), 8), dtype=np.int64)
    dofs[:, 0::2] = 2 * e
    dofs[:, 1::2] = 2 * e + 1
    rows = np.repeat(dofs, 8, axis=1).ravel()
    cols = np.tile(dofs, (1, 8)).ravel()
    n2 = 2 * mesh.n_nodes
    return sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n2, n2)).tocsr()


def boundary_quadrature(mesh, edges, order):
    """Gauss data on straight boundary chords.

    Returns (points (m, q, 2), weights (m, q), normals (m, 2)) where
    weights include the chord half-length.
    """
    p, w = gauss1d(order)
    pts = np.empty((len(edges), len(p), 2))
    wts = np.empty((len(edges), len(p)))
    nrm = np.empty((len(edges), 2))
    for k, (e, le) in enumerate(edges):
        i, j = mesh.edge_nodes(e, le)
        A, B = mesh.nodes[i], mesh.nodes[j]
        mid, half = 0.5 * (A + B), 0.5 * (B - A)
        pts[k] = mid[None, :] + p[:, None] * half[None, :]
        wts[k] = w * np.linalg.norm(half)
        t = B - A
        nrm[k] = np.array([t[1], -t[0]]) / np.linalg.norm(t)
    return pts, wts, nrm


def assemble_rhs(mesh, material, loads, volume_order, traction_order=8):
    """Full (unreduced) load vector for the given load set."""
    f = np.zeros(2 * mesh.n_nodes)
    vo = loads.volume_order or volume_order
    has_volume = loads.body or loads.eps0 or loads.sig0
    if has_volume:
        gp, gw = gauss2d(vo)
        N = kernels.shape_q4(gp)
        B, detJ = kernels.batch_bmat(mesh.elem_coords(), gp)
        pts = element_points(mesh, np.arange(mesh.n_elems), gp)
        bases = mesh.base_cells()
        D = material.D
        for e in range(mesh.n_elems):
            fe = np.zeros(8)
            scale = detJ[e] * gw
            b = loads.body_at(pts[e], bases[e])
            if b is not None:
                fe[0::2] += N.T @ (scale * b[:, 0])
                fe[1::2] += N.T @ (scale * b[:, 1])
            e0 = loads.eps0_at(pts[e], bases[e])
            s0 = loads.sig0_at(pts[e], bases[e])
            pseudo = None
            if e0 is not None:
                pseudo = e0 @ D.T
            if s0 is not None:
                pseudo = -s0 if pseudo is None else pseudo - s0
            if pseudo is not None:
                fe += np.einsum("nab,na,n->b", B[e], pseudo, scale)
            if np.any(fe):
                dofs = np.empty(8, dtype=np.int64)
                dofs[0::2] = 2 * mesh.elems[e]
                dofs[1::2] = 2 * mesh.elems[e] + 1
                np.add.at(f, dofs, fe)
    for tag, fn in loads.tractions.items():
        edges = [(e, le) for (e, le, t) in mesh.boundary if t == tag]
        if not edges:
            continue
        pts, wts, nrm = boundary_quadrature(mesh, edges, traction_order)
        p1, w1 = gauss1d(traction_order)
        N1 = np.column_stack([0.5 * (1 - p1), 0.5 * (1 + p1)])
        for k, (e, le) in enumerate(edges):
            t = fn(pts[k], np.broadcast_to(nrm[k], pts[k].shape))
            i, j = mesh.edge_nodes(e, le)
            for c in (0, 1):
                f[2 * i + c] += np.sum(N1[:, 0] * t[:, c] * wts[k])
                f[2 * j + c] += np.sum(N1[:, 1] * t[:, c] * wts[k])
    return f


def _dirichlet_data(mesh, bc, regular, red_of_node):
    """Fixed reduced dofs, their values, and Lagrange constraint rows."""
    fixed = {}
    tag_edges = {}
    for e, le, t in mesh.boundary:
        tag_edges.setdefault(t, []).append((e, le))
    for tag, comp, fn in bc.comps:
        nodes = set()
        for e, le in tag_edges.get(tag, ()):
            nodes.update(mesh.edge_nodes(e, le))
        for n in sorted(nodes):
            if mesh.is_hanging[n]:
                raise RuntimeError("hanging node on Dirichlet boundary")
            val = float(np.asarray(fn(mesh.nodes[n][None, :])).ravel()[0])
            fixed[2 * red_of_node[n] + comp] = val
    for pt, comp, val in bc.pins:
        d = np.linalg.norm(mesh.nodes - np.asarray(pt), axis=1)
        n = int(np.argmin(d))
        if d[n] > 1e-9 * (1 + np.abs(mesh.nodes).max()):
            raise ValueError(f"no mesh node at pin location {pt}")
        fixed[2 * red_of_node[n] + comp] = float(val)
    lag = []
    for tag, fn in bc.normals:
        normals, gvals = {}, {}
        for e, le in tag_edges.get(tag, ()):
            i, j = mesh.edge_nodes(e, le)
            nrm = mesh.edge_normal(e, le)
            for n in (i, j):
                normals.setdefault(n, []).append(nrm)
        for n in sorted(normals):
            avg = np.mean(normals[n], axis=0)
            avg /= np.linalg.norm(avg)
            g = float(np.asarray(fn(mesh.nodes[n][None, :])).ravel()[0])
            lag.append((red_of_node[n], avg, g))
    return fixed, lag


def solve(mesh, material, loads, bc, assembly_order=2, traction_order=8):
    """Assemble and solve; returns an FEField.

    ``assembly_order`` is the tensor Gauss order of the stiffness (and
    default volume-load) quadrature.
    """
    K_full = assemble_stiffness(mesh, material, assembly_order)
    f_full = assemble_rhs(mesh, material, loads, assembly_order,
                          traction_order)
    T, regular = constraint_matrix(mesh)
    red_of_node = -np.ones(mesh.n_nodes, dtype=np.int64)
    red_of_node[regular] = np.arange(len(regular))
    Kr = (T.T @ K_full @ T).tocsr()
    fr = T.T @ f_full

    nred = Kr.shape[0]
    fixed, lag = _dirichlet_data(mesh, bc, regular, red_of_node)
    fixed_idx = np.array(sorted(fixed), dtype=np.int64)
    fixed_val = np.array([fixed[i] for i in fixed_idx])
    free = np.setdiff1d(np.arange(nred), fixed_idx)

    A = Kr[free][:, free]
    rhs = fr[free]
    if len(fixed_idx):
        rhs = rhs - Kr[free][:, fixed_idx] @ fixed_val
    if lag:
        pos_of_free = -np.ones(nred, dtype=np.int64)
        pos_of_free[free] = np.arange(len(free))
        rows, cols, vals, gvals = [], [], [], []
        for k, (rn, nrm, g) in enumerate(lag):
            for c in (0, 1):
                dof = 2 * rn + c
                if pos_of_free[dof] < 0:
                    raise RuntimeError("normal constraint on fixed dof")
                rows.append(k)
                cols.append(pos_of_free[dof])
                vals.append(nrm[c])
            gvals.append(g)
        G = sp.coo_matrix((vals, (rows, cols)),
                          shape=(len(lag), len(free))).tocsr()
        A = sp.bmat([[A, G.T], [G, None]], format="csc")
        rhs = np.concatenate([rhs, gvals])
    else:
        A = A.tocsc()

    lu = spla.splu(A)
    x = lu.solve(rhs)
    res = np.linalg.norm(A @ x - rhs) / (1.0 + np.linalg.norm(rhs))
    if res > 1e-9:
        raise RuntimeError(f"linear solve residual too large: {res:.3e}")

    u_red = np.zeros(nred)
    u_red[free] = x[:len(free)]
    if len(fixed_idx):
        u_red[fixed_idx] = fixed_val
    u_full = T @ u_red
    reactions = Kr @ u_red - fr
    return FEField(mesh, material, loads, bc, u_full, len(free),
                   K_full, f_full, T, reactions, res, free, fixed_idx,
                   assembly_order=assembly_order)


def fe_stress_at_gauss(field, order, elems_idx=None, rules=None):
    """Stresses, physical points and measures at volume Gauss points.

    Returns (pts (E, n, 2), wdet (E, n), sig (E, n, 3)).  ``rules`` maps
    element index -> (pts_ref, wts) to override the shared rule (used for
    graded quadrature near singular vertices); overridden elements are
    returned in separate trailing entries of a list in that case, so the
    common case (no overrides) stays a single array triple.
    """
    if elems_idx is None:
        elems_idx = np.arange(field.mesh.n_elems)
    elems_idx = np.asarray(elems_idx)
    gp, gw = gauss2d(order)
    _, detJ = kernels.batch_bmat(field.mesh.nodes[field.mesh.elems[elems_idx]], gp)
    pts = element_points(field.mesh, elems_idx, gp)
    sig = field.stress(elems_idx, gp)
    return pts, detJ * gw[None, :], sig


def energy_dot(material, wdet, sa, sb):
    """Sum of w * sa' Dinv sb over all samples (complementary energy)."""
    return float(np.einsum("en,eni,ij,enj->", wdet, sa, material.Dinv, sb))


def global_equilibrium_residual(field):
    """Net force imbalance |sum of reactions + sum of applied loads|.

    Reactions are the rows of the reduced residual K u - f at
    constrained dofs (Lagrange reaction forces land on their free rows
    and are picked up by the full-row sum).  Scaled by the total applied
    load magnitude.
    """
    r = field.reactions
    fr = field.T.T @ field.f_full
    defect_x = float(np.sum(r[0::2]) + np.sum(fr[0::2]))
    defect_y = float(np.sum(r[1::2]) + np.sum(fr[1::2]))
    scale = 1.0 + float(np.abs(field.f_full).sum())
    return max(abs(defect_x), abs(defect_y)) / scale

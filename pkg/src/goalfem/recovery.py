"""Patch-based stress recovery with equilibrium constraints and blending.

For every regular mesh vertex a polynomial stress field is fitted by
least squares to the finite element stresses sampled at the 2x2 Gauss
points of the surrounding elements.  In constrained mode the fit is
solved as a saddle system enforcing, by point collocation,

* internal equilibrium (divergence balance against a least squares
  fit, one degree down, of the body force plus the divergence of the
  initial fields),
* boundary equilibrium (recovered tractions match the applied ones on
  the one boundary curve crossing the patch, if any),
* traction continuity across a region interface where the dual loads
  jump (two polynomial blocks, one per side),
* for quadratic patches, the strain compatibility relation.

If the constraint rows become rank deficient the compatibility row goes
first, then internal collocation points from the last added backwards;
boundary rows are never dropped.

The global field blends the vertex polynomials with the bilinear shape
functions (a partition of unity); hanging vertices delegate to their
masters with the constraint weights, which keeps the blend continuous
across refinement transitions.  Near a singular vertex the dominant
corner modes can be split off before fitting and added back after
blending.

The least squares is over the raw samples (unweighted), which is what
makes the sampled points superconvergent for bilinear elements.
"""

import numpy as np

from .mesh import gauss2d
from .solver import element_points
from .elasticity import traction as project_traction
from . import kernels


_MONOMIALS = {1: [(0, 0), (1, 0), (0, 1)],
              2: [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]}

# constraint-block drop priorities (higher drops earlier)
_NEVER, _INTERNAL, _COMPAT = 0, 1, 2


def _basis_at(pts, center, scale, degree):
    X = (np.asarray(pts)[..., 0] - center[0]) / scale
    Y = (np.asarray(pts)[..., 1] - center[1]) / scale
    return np.stack([X**i * Y**j for i, j in _MONOMIALS[degree]], axis=-1)


def _dbasis_at(pts, center, scale, degree):
    """x- and y-derivatives of the local basis, each (n, nb)."""
    X = (np.asarray(pts)[..., 0] - center[0]) / scale
    Y = (np.asarray(pts)[..., 1] - center[1]) / scale
    dx, dy = [], []
    for i, j in _MONOMIALS[degree]:
        dx.append((i * X**max(i - 1, 0) * Y**j) / scale if i else 0.0 * X)
        dy.append((j * X**i * Y**max(j - 1, 0)) / scale if j else 0.0 * X)
    return np.stack(dx, axis=-1), np.stack(dy, axis=-1)


class PatchPolynomial:
    """Vector-valued (3 stress components) polynomial on a local frame."""

    def __init__(self, center, scale, degree, coeffs):
        self.center = np.asarray(center, dtype=float)
        self.scale = float(scale)
        self.degree = degree
        self.coeffs = coeffs  # (3, nb)

    def eval(self, pts):
        return _basis_at(pts, self.center, self.scale,
                         self.degree) @ self.coeffs.T


class SingularPart:
    """Scaled sum of corner eigenfields split off during recovery."""

    def __init__(self, factors, fields):
        self.factors = dict(factors)
        self.fields = dict(fields)

    def stress(self, pts):
        out = None
        for m in sorted(self.factors):
            s = self.factors[m] * self.fields[m].stress(pts)
            out = s if out is None else out + s
        return out


class SingularSplit:
    """Recipe for singular/smooth splitting around a corner.

    extractors : dict mode -> GsifExtractor (sharing one CornerConfig)
    k_ring : ExtractionRing or None
        Ring used to estimate the intensity factors of the field being
        recovered.  Defaults to each extractor's own ring; pass an inner
        ring for dual fields whose loads occupy the default ring.
    radius_factor : float
        Patches whose vertex lies within radius_factor * patch diameter
        of the apex are split.
    """

    def __init__(self, extractors, k_ring=None, radius_factor=2.0):
        self.extractors = dict(extractors)
        self.k_ring = k_ring
        self.radius_factor = radius_factor
        any_ex = next(iter(self.extractors.values()))
        self.config = any_ex.config

    def prepare(self, field):
        factors = {m: ex.extract(field, ring=self.k_ring or ex.ring)
                   for m, ex in sorted(self.extractors.items())}
        fields = {m: ex.primary for m, ex in self.extractors.items()}
        return SingularPart(factors, fields)


def _chain_edges(edge_list, mesh):
    """Order chord edges into a polyline of (tail, head, elem, ledge)."""
    segs = []
    for e, le in edge_list:
        i, j = mesh.edge_nodes(e, le)
        segs.append((int(i), int(j), e, le))
    if not segs:
        return []
    deg = {}
    for i, j, *_ in segs:
        deg[i] = deg.get(i, 0) + 1
        deg[j] = deg.get(j, 0) + 1
    ends = sorted(n for n, d in deg.items() if d == 1)
    chain = []
    remaining = list(segs)
    current = ends[0] if ends else remaining[0][0]
    while remaining:
        for k, (i, j, e, le) in enumerate(remaining):
            if i == current:
                chain.append((i, j, e, le))
                current = j
                remaining.pop(k)
                break
            if j == current:
                chain.append((j, i, e, le))
                current = i
                remaining.pop(k)
                break
        else:
            i, j, e, le = remaining.pop(0)
            chain.append((i, j, e, le))
            current = j
    return chain


def _curve_points(chain, mesh, npts):
    """Points spread uniformly in arclength along a chained polyline.

    Uses the midpoint family s_k = L (2k+1) / (2 npts); returns the
    coordinates, the outward normal of the chord under each point, and
    the (elem, local_edge) owning it.
    """
    lens = [float(np.linalg.norm(mesh.nodes[j] - mesh.nodes[i]))
            for i, j, _e, _le in chain]
    total = float(np.sum(lens))
    targets = total * (2 * np.arange(npts) + 1) / (2 * npts)
    pts, nrms, homes = [], [], []
    for s in targets:
        acc = 0.0
        for (i, j, e, le), ln in zip(chain, lens):
            if s <= acc + ln or (i, j, e, le) == chain[-1]:
                t = np.clip((s - acc) / ln, 0.0, 1.0)
                A, B = mesh.nodes[i], mesh.nodes[j]
                pts.append(A + t * (B - A))
                nrms.append(mesh.edge_normal(e, le))
                homes.append((e, le))
                break
            acc += ln
    return np.array(pts), np.array(nrms), homes


def _internal_rows(center, scale, degree, pts, g_hat):
    """Collocated divergence-balance rows for one polynomial block."""
    nb = len(_MONOMIALS[degree])
    dbx, dby = _dbasis_at(pts, center, scale, degree)
    n = len(pts)
    rows = np.zeros((2 * n, 3 * nb))
    rows[0::2, 0:nb] = dbx
    rows[0::2, 2 * nb:3 * nb] = dby
    rows[1::2, nb:2 * nb] = dby
    rows[1::2, 2 * nb:3 * nb] = dbx
    rhs = np.empty(2 * n)
    rhs[0::2] = -g_hat[:, 0]
    rhs[1::2] = -g_hat[:, 1]
    return rows, rhs


def _traction_rows(center, scale, degree, pts, normals, tvals):
    """Collocated traction rows G(n) sigma_hat = t for one block."""
    nb = len(_MONOMIALS[degree])
    phi = _basis_at(pts, center, scale, degree)
    n = len(pts)
    rows = np.zeros((2 * n, 3 * nb))
    rows[0::2, 0:nb] = phi * normals[:, 0:1]
    rows[0::2, 2 * nb:3 * nb] = phi * normals[:, 1:2]
    rows[1::2, nb:2 * nb] = phi * normals[:, 1:2]
    rows[1::2, 2 * nb:3 * nb] = phi * normals[:, 0:1]
    rhs = np.empty(2 * n)
    rhs[0::2] = tvals[:, 0]
    rhs[1::2] = tvals[:, 1]
    return rows, rhs


def _compat_row(scale, Dinv):
    """Strain compatibility row for quadratic patches.

    ddyy eps_xx + ddxx eps_yy - ddxy gamma_xy = 0 with eps = Dinv sigma;
    second derivatives of a quadratic are constant, so one row pins it.
    Assumes initial fields with vanishing second derivatives.
    """
    nb = len(_MONOMIALS[2])
    h2 = scale ** 2
    dxx = np.zeros(nb)
    dyy = np.zeros(nb)
    dxy = np.zeros(nb)
    for k, (i, j) in enumerate(_MONOMIALS[2]):
        if i == 2:
            dxx[k] = 2.0 / h2
        if j == 2:
            dyy[k] = 2.0 / h2
        if i == 1 and j == 1:
            dxy[k] = 1.0 / h2
    row = np.zeros((1, 3 * nb))
    for comp in range(3):
        row[0, comp * nb:(comp + 1) * nb] = (
            Dinv[0, comp] * dyy + Dinv[1, comp] * dxx - Dinv[2, comp] * dxy)
    return row, np.zeros(1)


def _solve_saddle(M, rhs, blocks):
    """Equality-constrained least squares via the KKT system.

    ``blocks`` is a list of (drop_priority, rows, rhs).  When the
    stacked constraints are rank deficient, blocks are removed highest
    priority first (ties: last added first); priority-0 blocks are never
    removed and a KKT least squares is the terminal fallback.
    """
    n = M.shape[0]
    blocks = list(blocks)

    def try_solve(blks):
        if blks:
            C = np.vstack([b[1] for b in blks])
            d = np.concatenate([b[2] for b in blks])
            scalev = np.maximum(np.abs(C).max(axis=1), 1e-12)
            Cs, ds = C / scalev[:, None], d / scalev
            if np.linalg.matrix_rank(Cs, tol=1e-10) < len(Cs):
                return None
            A = np.block([[M, Cs.T],
                          [Cs, np.zeros((len(Cs), len(Cs)))]])
            b = np.concatenate([rhs, ds])
        else:
            A, b = M, rhs
        try:
            sol = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            return None
        if np.linalg.norm(A @ sol - b) > 1e-8 * (1.0 + np.linalg.norm(b)):
            return None
        return sol[:n]

    while True:
        sol = try_solve(blocks)
        if sol is not None:
            return sol
        droppable = [k for k, b in enumerate(blocks) if b[0] > _NEVER]
        if not droppable:
            break
        # highest priority, then latest added
        k = max(droppable, key=lambda k: (blocks[k][0], k))
        blocks.pop(k)
    if blocks:
        C = np.vstack([b[1] for b in blocks])
        d = np.concatenate([b[2] for b in blocks])
        A = np.block([[M, C.T], [C, np.zeros((len(C), len(C)))]])
        b = np.concatenate([rhs, d])
    else:
        A, b = M, rhs
    return np.linalg.lstsq(A, b, rcond=None)[0][:n]


class RecoveredField:
    """Blended recovered stress field over a mesh.

    Provides ``stress(elems, pts_ref)`` with the same conventions as the
    FE field it was built from, so estimator loops can mix them freely.
    """

    def __init__(self, mesh, material, loads, degree, patch_polys,
                 singular=None, region=None, split_vertices=()):
        self.mesh = mesh
        self.material = material
        self.loads = loads
        self.degree = degree
        self.patch_polys = patch_polys  # vertex -> poly | (in, out)
        self.singular = singular
        self.region = region
        self.split_vertices = frozenset(split_vertices)
        self._elem_terms = self._precompute_terms()
        self._in_mask = (mesh.elements_in(region)
                         if region is not None else None)

    def _precompute_terms(self):
        """Per element: sorted [(vertex, weight vector over corners)]."""
        terms = []
        cons = self.mesh.constraints
        for e in range(self.mesh.n_elems):
            acc = {}
            for c in range(4):
                n = int(self.mesh.elems[e, c])
                if n in cons:
                    for m, w in cons[n]:
                        acc.setdefault(m, np.zeros(4))[c] += w
                else:
                    acc.setdefault(n, np.zeros(4))[c] += 1.0
            terms.append(sorted(acc.items()))
        return terms

    def _poly_for(self, vertex, elem):
        poly = self.patch_polys[vertex]
        if isinstance(poly, tuple):
            return poly[0] if self._in_mask[elem] else poly[1]
        return poly

    def stress(self, elems_idx, pts_ref):
        """Recovered stresses at reference points, (E, n, 3)."""
        elems_idx = np.atleast_1d(np.asarray(elems_idx))
        N = kernels.shape_q4(pts_ref)
        pts = element_points(self.mesh, elems_idx, pts_ref)
        out = np.zeros(pts.shape[:-1] + (3,))
        bases = self.mesh.base_cells()
        for k, e in enumerate(elems_idx):
            x = pts[k]
            split_w = None
            for v, cw in self._elem_terms[e]:
                w = N @ cw
                out[k] += w[:, None] * self._poly_for(v, e).eval(x)
                if self.singular is not None and v in self.split_vertices:
                    split_w = w if split_w is None else split_w + w
            if split_w is not None:
                out[k] += split_w[:, None] * self.singular.stress(x)
            e0 = self.loads.eps0_at(x, bases[e])
            s0 = self.loads.sig0_at(x, bases[e])
            if e0 is not None:
                out[k] -= e0 @ self.material.D.T
            if s0 is not None:
                out[k] += s0
        return out

    def blend_gradient_residual(self, elems_idx, pts_ref):
        """Diagnostic: sum over vertices of grad(w_J) outer sigma_J.

        Returns (E, n, 2, 3); small values indicate that neighboring
        vertex polynomials agree where the blending weights vary.
        """
        elems_idx = np.atleast_1d(np.asarray(elems_idx))
        coords = self.mesh.nodes[self.mesh.elems[elems_idx]]
        B, _ = kernels.batch_bmat(coords, pts_ref)
        pts = element_points(self.mesh, elems_idx, pts_ref)
        out = np.zeros(pts.shape[:-1] + (2, 3))
        for k, e in enumerate(elems_idx):
            # dN/dx recovered from the B-matrix layout: (n, 4, 2)
            dNdx = np.stack([B[k, :, 0, 0::2], B[k, :, 1, 1::2]], axis=-1)
            x = pts[k]
            for v, cw in self._elem_terms[e]:
                gw = np.einsum("nkd,k->nd", dNdx, cw)
                sig = self._poly_for(v, e).eval(x)
                if self.singular is not None and v in self.split_vertices:
                    sig = sig + self.singular.stress(x)
                out[k] += gw[..., None] * sig[:, None, :]
        return out


def recover(field, constrained=True, degree=1, split=None,
            interface_region=None):
    """Build a recovered stress field from a solved FE field.

    Parameters
    ----------
    field : FEField
        The primal or dual solution to post-process.
    constrained : bool
        Equilibrium-constrained fit (default); False gives the plain
        unconstrained patch recovery.
    degree : int
        Patch polynomial degree, 1 or 2.
    split : SingularSplit or None
        Split corner eigenfields off near their apex before fitting.
    interface_region : set of base cells or None
        Region across whose boundary the (dual) loads jump; patches on
        the boundary are fitted with one polynomial block per side.
    """
    if degree not in _MONOMIALS:
        raise ValueError("degree must be 1 or 2")
    mesh, material, loads = field.mesh, field.material, field.loads
    nb = len(_MONOMIALS[degree])
    ncomp = 3 * nb
    nbe = degree + 1

    gp, _ = gauss2d(2)
    all_e = np.arange(mesh.n_elems)
    sample_pts = element_points(mesh, all_e, gp)          # (E, 4, 2)
    sample_sig = field.strain(all_e, gp) @ material.D.T   # minus initials

    singular = None
    if split is not None:
        singular = split.prepare(field)

    in_mask = (mesh.elements_in(interface_region)
               if interface_region is not None else None)
    iface_by_elem = {}
    if interface_region is not None:
        for e, le in mesh.interface_edges(interface_region):
            iface_by_elem.setdefault(e, []).append(le)

    dirichlet_tags = {t for t, _c, _f in field.bc.comps}
    dirichlet_tags |= {t for t, _f in field.bc.normals}
    bnd_by_elem = {}
    for e, le, t in mesh.boundary:
        if t not in dirichlet_tags:
            bnd_by_elem.setdefault(e, []).append((le, t))

    bases = mesh.base_cells()
    patches = mesh.build_patches()
    polys = {}
    split_vertices = set()

    for vertex, elems in patches.items():
        node_ids = np.unique(mesh.elems[elems])
        xy = mesh.nodes[node_ids]
        center = mesh.nodes[vertex]
        scale = max(float(np.max(np.abs(xy - center))), 1e-300)
        diameter = float(np.max(np.linalg.norm(
            xy[:, None, :] - xy[None, :, :], axis=-1)))

        is_split = False
        if split is not None:
            dist = float(np.linalg.norm(center - split.config.apex))
            is_split = dist <= split.radius_factor * diameter
            if is_split:
                split_vertices.add(vertex)

        sides = [list(elems)]
        two_sided = False
        if interface_region is not None:
            ein = [e for e in elems if in_mask[e]]
            eout = [e for e in elems if not in_mask[e]]
            if ein and eout:
                sides, two_sided = [ein, eout], True
            else:
                sides = [ein or eout]

        nblk = len(sides)
        M = np.zeros((ncomp * nblk, ncomp * nblk))
        rhs = np.zeros(ncomp * nblk)
        blocks = []  # (priority, rows, rhs) over the stacked unknowns

        for blk, side in enumerate(sides):
            spts = np.vstack([sample_pts[e] for e in side])
            svals = np.vstack([sample_sig[e] for e in side])
            if is_split:
                svals = svals - singular.stress(spts)
            phi = _basis_at(spts, center, scale, degree)
            M1 = phi.T @ phi
            for comp in range(3):
                sl = slice(blk * ncomp + comp * nb,
                           blk * ncomp + (comp + 1) * nb)
                M[sl, sl] = M1
                rhs[sl] = phi.T @ svals[:, comp]

            if not constrained:
                continue
            base_cell = bases[side[0]]
            gvals = loads.body_at(spts, base_cell)
            if gvals is None:
                gvals = np.zeros_like(spts)
            if loads.div_sig:
                # fold div(sigma0 - D eps0) into the fitted data; raw
                # point values would tilt patches where it varies fast
                gvals = gvals + loads.div_sig_at(spts, base_cell)
            nie = 1 if degree == 1 else 3
            cpts = [center]
            for e in side[:nie - 1]:
                cpts.append(mesh.nodes[mesh.elems[e]].mean(axis=0))
            cpts = np.array(cpts)
            if degree == 1:
                ghat = np.broadcast_to(gvals.mean(axis=0),
                                       (len(cpts), 2)).copy()
            else:
                gphi = _basis_at(spts, center, scale, 1)
                cg = np.linalg.lstsq(gphi, gvals, rcond=None)[0]
                ghat = _basis_at(cpts, center, scale, 1) @ cg
            # one droppable block per collocation point, later points first
            for kp in range(len(cpts)):
                rows, rr = _internal_rows(center, scale, degree,
                                          cpts[kp:kp + 1], ghat[kp:kp + 1])
                wide = np.zeros((rows.shape[0], ncomp * nblk))
                wide[:, blk * ncomp:(blk + 1) * ncomp] = rows
                blocks.append((_INTERNAL, wide, rr))

        if constrained and two_sided:
            iedges = []
            for e in sides[0]:
                for le in iface_by_elem.get(e, ()):
                    iedges.append((e, le))
            if iedges:
                chain = _chain_edges(iedges, mesh)
                cpts, nrms, _homes = _curve_points(chain, mesh, nbe)
                t_in = _initial_traction(loads, material, cpts, nrms,
                                         bases[sides[0][0]])
                t_out = _initial_traction(loads, material, cpts, nrms,
                                          bases[sides[1][0]])
                rows, _ = _traction_rows(center, scale, degree, cpts, nrms,
                                         np.zeros((len(cpts), 2)))
                wide = np.zeros((rows.shape[0], ncomp * nblk))
                wide[:, 0:ncomp] = rows
                wide[:, ncomp:2 * ncomp] = -rows
                jump = t_out - t_in
                rj = np.empty(2 * len(cpts))
                rj[0::2] = jump[:, 0]
                rj[1::2] = jump[:, 1]
                blocks.append((_NEVER, wide, rj))
        elif constrained:
            bedges = {}
            for e in elems:
                for le, t in bnd_by_elem.get(e, ()):
                    bedges.setdefault(t, []).append((e, le))
            if bedges:
                lengths = {t: sum(np.linalg.norm(mesh.edge_vector(e, le))
                                  for e, le in edl)
                           for t, edl in bedges.items()}
                tag = max(sorted(lengths), key=lambda t: lengths[t])
                chain = _chain_edges(bedges[tag], mesh)
                cpts, nrms, homes = _curve_points(chain, mesh, nbe)
                tfn = loads.tractions.get(tag)
                tv = (tfn(cpts, nrms) if tfn is not None
                      else np.zeros((len(cpts), 2)))
                tv = tv - _initial_traction(loads, material, cpts, nrms,
                                            bases[homes[0][0]])
                if is_split:
                    tv = tv - project_traction(singular.stress(cpts), nrms)
                rows, rr = _traction_rows(center, scale, degree, cpts,
                                          nrms, tv)
                wide = np.zeros((rows.shape[0], ncomp * nblk))
                wide[:, 0:ncomp] = rows
                blocks.append((_NEVER, wide, rr))

        if constrained and degree == 2:
            crow, crhs = _compat_row(scale, material.Dinv)
            for blk in range(nblk):
                wide = np.zeros((1, ncomp * nblk))
                wide[:, blk * ncomp:(blk + 1) * ncomp] = crow
                blocks.append((_COMPAT, wide, crhs))

        A = _solve_saddle(M, rhs, blocks)
        mk = lambda vec: PatchPolynomial(center, scale, degree,
                                         vec.reshape(3, nb))
        if nblk == 2:
            polys[vertex] = (mk(A[0:ncomp]), mk(A[ncomp:2 * ncomp]))
        else:
            polys[vertex] = mk(A[0:ncomp])

    return RecoveredField(mesh, material, loads, degree, polys,
                          singular=singular, region=interface_region,
                          split_vertices=split_vertices)


def _initial_traction(loads, material, pts, normals, base_cell):
    """Traction of (sigma0 - D eps0) at boundary/interface points."""
    s0 = loads.sig0_at(pts, base_cell)
    e0 = loads.eps0_at(pts, base_cell)
    sig = np.zeros((len(pts), 3))
    if s0 is not None:
        sig = sig + s0
    if e0 is not None:
        sig = sig - e0 @ material.D.T
    return project_traction(sig, normals)

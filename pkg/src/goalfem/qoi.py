"""Quantities of interest and their adjoint (dual) problems.

Each quantity class knows how to

* evaluate itself on a solved field (``evaluate``),
* apply its linearization to an arbitrary displacement field
  (``apply``; equal to ``evaluate`` for the linear kinds),
* compile the load set and boundary conditions of the dual problem
  whose solution weights the primal error (``dual_loads`` /
  ``dual_bc`` / ``dual_rhs_full``).

Functional quadrature is fixed at order 8 and matches the quadrature
used when assembling the dual right-hand side, so the identity
``Q~(v) == f~ . v`` holds to round-off for any discrete ``v``; the
tests rely on that.

Tensor-valued weights are passed as the (xx, yy, xy) components of a
symmetric tensor; contractions against Voigt stresses double the shear
entry internally (engineering-strain Voigt handles it by itself).

The mean-traction quantity lives on a Dirichlet piece of the boundary
where tractions are reactions, not data.  It is computed through the
discrete lift: with ``delta`` the nodal hat interpolant of the weight
on the constrained nodes, Q(u) = a(u, delta) - l(delta), which equals
the weighted sum of nodal reactions; its dual problem is the zero-load
problem with the sign-flipped weight as Dirichlet data.
"""

import numpy as np

from .elasticity import traction as project_traction
from .mesh import gauss1d, gauss2d
from .solver import (LoadSet, DirichletBC, assemble_rhs,
                     boundary_quadrature, element_points, solve,
                     constraint_matrix)
from . import kernels

_ORDER = 8


def _vec_fn(c):
    """Constant vector or callable -> callable over points."""
    if callable(c):
        return c
    v = np.asarray(c, dtype=float)

    def fn(pts, normals=None):
        return np.broadcast_to(v, (len(pts), 2)).copy()
    return fn


def _zero_scalar(pts):
    return np.zeros(len(pts))


def _homogenized(bc):
    """The same constraint topology with zero data."""
    return DirichletBC(
        comps=[(t, c, _zero_scalar) for t, c, _f in bc.comps],
        normals=[(t, _zero_scalar) for t, _f in bc.normals],
        pins=[(pt, c, 0.0) for pt, c, _v in bc.pins],
    )


def _tag_edges(mesh, tags):
    tags = {tags} if isinstance(tags, str) else set(tags)
    return [(e, le) for (e, le, t) in mesh.boundary if t in tags]


def _chord_length(mesh, tags):
    return float(sum(np.linalg.norm(mesh.edge_vector(e, le))
                     for e, le in _tag_edges(mesh, tags)))


def _edge_trace(field, edges, order):
    """Displacements at chord Gauss points from the edge end nodes."""
    p1, _ = gauss1d(order)
    N1 = np.column_stack([0.5 * (1 - p1), 0.5 * (1 + p1)])
    u = np.empty((len(edges), len(p1), 2))
    for k, (e, le) in enumerate(edges):
        i, j = field.mesh.edge_nodes(e, le)
        ue = np.stack([field.u[2 * i:2 * i + 2],
                       field.u[2 * j:2 * j + 2]])
        u[k] = N1 @ ue
    return u


class QoIBase:
    """Shared plumbing for the quantity-of-interest kinds."""

    name = "qoi"

    def evaluate(self, field):
        raise NotImplementedError

    def apply(self, field):
        """Linearized functional on a displacement field."""
        return self.evaluate(field)

    def dual_loads(self, field):
        raise NotImplementedError

    def dual_bc(self, field):
        return _homogenized(field.bc)

    def dual_rhs_full(self, field):
        """Dual right-hand side over all nodal dofs."""
        return assemble_rhs(field.mesh, field.material,
                            self.dual_loads(field), _ORDER,
                            traction_order=_ORDER)

    def evaluate_exact(self, exact, mesh):
        """The functional applied to a closed-form field on a mesh.

        ``exact`` samples at physical points: displacement / strain /
        stress as the kind requires.  Serves as the reference value of
        the straight-edged problem the mesh actually discretizes.
        """
        raise NotImplementedError

    # region helpers shared by the domain-mean kinds
    def _area(self, mesh):
        if self.measure is not None:
            return float(self.measure)
        return float(mesh.areas()[mesh.elements_in(self.region)].sum())

    def _region_rule(self, mesh):
        elems = np.nonzero(mesh.elements_in(self.region))[0]
        gp, gw = gauss2d(_ORDER)
        _, detJ = kernels.batch_bmat(mesh.nodes[mesh.elems[elems]], gp)
        pts = element_points(mesh, elems, gp)
        return elems, gp, detJ * gw[None, :], pts


class MeanDisplacementDomain(QoIBase):
    """Mean of c . u over a subdomain given as a set of base cells."""

    def __init__(self, c, region, measure=None, name="mean_u_domain"):
        self.cfn = _vec_fn(c)
        self.region = set(region)
        self.measure = measure
        self.name = name

    def evaluate(self, field):
        mesh = field.mesh
        elems, gp, wdet, pts = self._region_rule(mesh)
        u = field.displacement(elems, gp)
        c = np.stack([self.cfn(p) for p in pts])
        return float(np.einsum("en,enc,enc->", wdet, c, u)
                     / self._area(mesh))

    def evaluate_exact(self, exact, mesh):
        _, _, wdet, pts = self._region_rule(mesh)
        u = np.stack([exact.displacement(p) for p in pts])
        c = np.stack([self.cfn(p) for p in pts])
        return float(np.einsum("en,enc,enc->", wdet, c, u)
                     / self._area(mesh))

    def dual_loads(self, field):
        area = self._area(field.mesh)

        def body(pts):
            return self.cfn(pts) / area
        return LoadSet(body=[(body, self.region)], volume_order=_ORDER)


class MeanDisplacementBoundary(QoIBase):
    """Mean of c . u over a tagged boundary piece.

    A callable weight is invoked as ``c(points, outward_normals)``, the
    same signature as traction data, so normal-projected averages and
    traction-weighted displacement functionals are both expressible.
    ``tag`` is one boundary tag or a sequence of them; ``measure``
    overrides the chord length as normalization, e.g. with the true arc
    length on a curved boundary.
    """

    def __init__(self, c, tag, measure=None, name="mean_u_boundary"):
        self.cfn = _vec_fn(c)
        self.tag = tag if isinstance(tag, str) else tuple(tag)
        self.measure = measure
        self.name = name

    def _measure(self, mesh):
        if self.measure is not None:
            return float(self.measure)
        return _chord_length(mesh, self.tag)

    def _weights(self, pts, nrm):
        return np.stack([self.cfn(p, np.broadcast_to(nrm[k], p.shape))
                         for k, p in enumerate(pts)])

    def evaluate(self, field):
        edges = _tag_edges(field.mesh, self.tag)
        pts, wts, nrm = boundary_quadrature(field.mesh, edges, _ORDER)
        u = _edge_trace(field, edges, _ORDER)
        c = self._weights(pts, nrm)
        return float(np.einsum("eq,eqc,eqc->", wts, c, u)
                     / self._measure(field.mesh))

    def evaluate_exact(self, exact, mesh):
        edges = _tag_edges(mesh, self.tag)
        pts, wts, nrm = boundary_quadrature(mesh, edges, _ORDER)
        u = np.stack([exact.displacement(p) for p in pts])
        c = self._weights(pts, nrm)
        return float(np.einsum("eq,eqc,eqc->", wts, c, u)
                     / self._measure(mesh))

    def dual_loads(self, field):
        meas = self._measure(field.mesh)

        def tr(pts, normals):
            return self.cfn(pts, normals) / meas
        tags = (self.tag,) if isinstance(self.tag, str) else self.tag
        return LoadSet(tractions={t: tr for t in tags})


class MeanStrainDomain(QoIBase):
    """Mean of a fixed symmetric tensor contracted with the strain."""

    def __init__(self, c, region, measure=None, name="mean_strain"):
        self.c = np.asarray(c, dtype=float)  # (xx, yy, xy) components
        self.region = set(region)
        self.measure = measure
        self.name = name

    def evaluate(self, field):
        mesh = field.mesh
        elems, gp, wdet, _ = self._region_rule(mesh)
        eps = field.strain(elems, gp)  # engineering shear absorbs the 2
        return float(np.einsum("en,ena,a->", wdet, eps, self.c)
                     / self._area(mesh))

    def evaluate_exact(self, exact, mesh):
        _, _, wdet, pts = self._region_rule(mesh)
        eps = np.stack([exact.strain(p) for p in pts])
        return float(np.einsum("en,ena,a->", wdet, eps, self.c)
                     / self._area(mesh))

    def dual_loads(self, field):
        area = self._area(field.mesh)
        s0 = -self.c / area

        def sig0(pts):
            return np.broadcast_to(s0, pts.shape[:-1] + (3,)).copy()
        return LoadSet(sig0=[(sig0, self.region)], volume_order=_ORDER)


class MeanStressDomain(QoIBase):
    """Mean of a fixed symmetric tensor contracted with the stress."""

    def __init__(self, c, region, measure=None, name="mean_stress"):
        c = np.asarray(c, dtype=float)
        self.cw = np.array([c[0], c[1], 2.0 * c[2]])  # Voigt pairing
        self.region = set(region)
        self.measure = measure
        self.name = name

    def _accumulate(self, field, sig_of):
        elems, gp, wdet, _ = self._region_rule(field.mesh)
        sig = sig_of(elems, gp)
        return float(np.einsum("en,ena,a->", wdet, sig, self.cw)
                     / self._area(field.mesh))

    def evaluate(self, field):
        return self._accumulate(field, field.stress)

    def evaluate_exact(self, exact, mesh):
        _, _, wdet, pts = self._region_rule(mesh)
        sig = np.stack([exact.stress(p) for p in pts])
        return float(np.einsum("en,ena,a->", wdet, sig, self.cw)
                     / self._area(mesh))

    def apply(self, field):
        D = field.material.D
        return self._accumulate(
            field, lambda elems, gp: field.strain(elems, gp) @ D.T)

    def dual_loads(self, field):
        e0 = self.cw / self._area(field.mesh)

        def eps0(pts):
            return np.broadcast_to(e0, pts.shape[:-1] + (3,)).copy()
        return LoadSet(eps0=[(eps0, self.region)], volume_order=_ORDER)


class MeanTractionDirichlet(QoIBase):
    """Mean of c . t over a Dirichlet boundary piece (a reaction mean).

    ``tags`` lists the boundary tags forming the piece; the primal
    problem must prescribe both displacement components there.
    """

    def __init__(self, c, tags, measure=None, name="mean_traction"):
        self.cfn = _vec_fn(c)
        self.tags = {tags} if isinstance(tags, str) else set(tags)
        self.measure = measure
        self.name = name

    def _measure(self, mesh):
        if self.measure is not None:
            return float(self.measure)
        return _chord_length(mesh, self.tags)

    def _delta_red(self, mesh):
        """Reduced-space nodal lift of c / |Gamma| on the piece."""
        T, regular = constraint_matrix(mesh)
        red = -np.ones(mesh.n_nodes, dtype=np.int64)
        red[regular] = np.arange(len(regular))
        meas = self._measure(mesh)
        delta = np.zeros(T.shape[1])
        nodes = set()
        for e, le in _tag_edges(mesh, self.tags):
            nodes.update(int(n) for n in mesh.edge_nodes(e, le))
        for n in sorted(nodes):
            if red[n] < 0:
                raise RuntimeError("hanging node on reaction boundary")
            cv = self.cfn(mesh.nodes[n][None, :])[0] / meas
            delta[2 * red[n]] = cv[0]
            delta[2 * red[n] + 1] = cv[1]
        return delta, T

    def evaluate(self, field):
        delta, _ = self._delta_red(field.mesh)
        return float(delta @ field.reactions)

    def evaluate_exact(self, exact, mesh):
        edges = _tag_edges(mesh, self.tags)
        pts, wts, nrm = boundary_quadrature(mesh, edges, _ORDER)
        q = 0.0
        for k in range(len(edges)):
            t = project_traction(exact.stress(pts[k]),
                                 np.broadcast_to(nrm[k], pts[k].shape))
            c = self.cfn(pts[k])
            q += float(np.sum(wts[k] * np.sum(c * t, axis=1)))
        return q / self._measure(mesh)

    def apply(self, field):
        return float(self.dual_rhs_full(field) @ field.u)

    def dual_loads(self, field):
        return LoadSet()

    def dual_bc(self, field):
        meas = self._measure(field.mesh)
        bc = _homogenized(field.bc)
        comps = []
        for t, c, fn in bc.comps:
            if t in self.tags:
                def make(comp):
                    def g(pts):
                        return -self.cfn(pts)[:, comp] / meas
                    return g
                comps.append((t, c, make(c)))
            else:
                comps.append((t, c, fn))
        bc.comps = comps
        return bc

    def dual_rhs_full(self, field):
        delta, T = self._delta_red(field.mesh)
        return field.K_full @ (T @ delta)


class GeneralizedSIF(QoIBase):
    """A generalized stress intensity factor at a singular corner."""

    def __init__(self, extractor, name="gsif"):
        self.extractor = extractor
        self.name = name

    def evaluate(self, field):
        return float(self.extractor.extract(field, order=_ORDER))

    def evaluate_exact(self, exact, mesh=None):
        return float(self.extractor.extract_exact(exact.displacement,
                                                  exact.stress))

    def dual_loads(self, field):
        body, eps0, div_sig = self.extractor.dual_loads()
        return LoadSet(body=[(body, None)], eps0=[(eps0, None)],
                       div_sig=[(div_sig, None)], volume_order=_ORDER)


def dual_solve(field, qoi, traction_order=8):
    """Solve the adjoint problem of a quantity on the primal's mesh.

    The dual uses the primal's material, constraint topology and
    assembly quadrature; only loads and boundary data change.
    """
    return solve(field.mesh, field.material, qoi.dual_loads(field),
                 qoi.dual_bc(field),
                 assembly_order=field.assembly_order,
                 traction_order=traction_order)

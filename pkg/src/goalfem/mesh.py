"""Quadtree meshes of bilinear quadrilaterals with hanging-node constraints.

The mesh lives on a parametric unit square covered by an nx-by-ny grid of
base cells, each of which may be recursively split into four children.  A
geometry map carries parametric coordinates to the physical domain.  Cells
are identified by (level, i, j) keys and nodes by exact integer lattice
coordinates, so all topological queries are integer comparisons.

Element corners are ordered counterclockwise starting at the parametric
lower-left: (0,0), (1,0), (1,1), (0,1).  Local edge k connects corner k to
corner (k+1) % 4.

Refinement enforces the one-level rule (edge-adjacent cells differ by at
most one level).  Midside nodes of non-boundary edges are placed at the
chord midpoint of their edge endpoints, which makes the (1/2, 1/2)
hanging-node constraints exact also in the geometry; new nodes on mapped
domain boundaries are placed by the geometry map.
"""

import math

import numpy as np
from numpy.polynomial.legendre import leggauss

# Fixed maximum refinement depth; lattice coordinates are integers on a
# grid of (n << MAXL) units per parametric direction.
MAXL = 24


class GeometryMap:
    """Maps the parametric unit square onto the physical domain.

    Supported kinds:

    ``box``
        Axis-aligned rectangle [x0, x1] x [y0, y1].
    ``annulus``
        Quarter annulus with inner radius ``a`` and outer radius ``b``:
        xi = 0 maps to radius a, xi = 1 to radius b, and eta in [0, 1]
        sweeps the polar angle from 0 to pi/2.
    ``lshape``
        The square [-w, w]^2 with the lower-left quadrant removed
        (reentrant corner at the origin).  Base cells whose parametric
        center lies in the removed quadrant are masked out.
    """

    def __init__(self, kind, **params):
        if kind not in ("box", "annulus", "lshape"):
            raise ValueError(f"unknown geometry kind {kind!r}")
        self.kind = kind
        if kind == "box":
            self.x0 = float(params.get("x0", 0.0))
            self.y0 = float(params.get("y0", 0.0))
            self.x1 = float(params.get("x1", 1.0))
            self.y1 = float(params.get("y1", 1.0))
        elif kind == "annulus":
            self.a = float(params["a"])
            self.b = float(params["b"])
            if not 0.0 < self.a < self.b:
                raise ValueError("annulus needs 0 < a < b")
        else:
            self.w = float(params.get("w", 1.0))
        self.curved_tags = {"inner", "outer"} if kind == "annulus" else set()

    def map(self, xi, eta):
        """Physical coordinates of parametric points; broadcasts."""
        xi = np.asarray(xi, dtype=float)
        eta = np.asarray(eta, dtype=float)
        if self.kind == "box":
            return np.stack(
                [self.x0 + (self.x1 - self.x0) * xi,
                 self.y0 + (self.y1 - self.y0) * eta], axis=-1)
        if self.kind == "annulus":
            r = self.a + (self.b - self.a) * xi
            phi = 0.5 * math.pi * eta
            return np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1)
        w = self.w
        return np.stack([-w + 2 * w * xi, -w + 2 * w * eta], axis=-1)

    def base_cell_masked(self, i, j, nx, ny):
        """True if base cell (i, j) is outside the domain."""
        if self.kind != "lshape":
            return False
        if nx % 2 or ny % 2:
            raise ValueError("lshape requires even base-cell counts")
        return i < nx // 2 and j < ny // 2

    def edge_tag(self, axis, c, lo, hi, pxmax, pymax):
        """Boundary tag of a lattice edge, or None for interior edges.

        ``axis`` is 0 for horizontal edges (constant py = c, px in
        [lo, hi]) and 1 for vertical edges (constant px = c).
        """
        if self.kind == "annulus":
            if axis == 1 and c == 0:
                return "inner"
            if axis == 1 and c == pxmax:
                return "outer"
            if axis == 0 and c == 0:
                return "sym0"
            if axis == 0 and c == pymax:
                return "sym90"
            return None
        if self.kind == "box":
            if axis == 0:
                return "bottom" if c == 0 else ("top" if c == pymax else None)
            return "left" if c == 0 else ("right" if c == pxmax else None)
        # lshape: outer box edges plus the two reentrant faces
        if axis == 0:
            if c == 0:
                return "bottom"
            if c == pymax:
                return "top"
            if c == pymax // 2 and hi <= pxmax // 2:
                return "face_a"
            return None
        if c == 0:
            return "left"
        if c == pxmax:
            return "right"
        if c == pxmax // 2 and hi <= pymax // 2:
            return "face_b"
        return None


class Mesh:
    """Immutable snapshot of an adaptive quadrilateral mesh.

    Attributes
    ----------
    nodes : ndarray, shape (N, 2)
        Physical node coordinates, ordered by lattice key.
    elems : ndarray, shape (E, 4)
        Corner node ids per element, counterclockwise.
    levels : ndarray, shape (E,)
        Quadtree level of each element.
    elem_keys : list of (level, i, j)
        Quadtree cell key per element, sorted.
    constraints : dict
        Flattened hanging-node constraints: slave node id -> list of
        (master node id, weight) with all masters regular nodes.
    boundary : list of (elem index, local edge, tag)
        Domain-boundary edges of active cells.
    """

    def __init__(self, geom, nx, ny, active_keys, pos):
        self.geom = geom
        self.nx = int(nx)
        self.ny = int(ny)
        self.pxmax = nx << MAXL
        self.pymax = ny << MAXL
        self.active = sorted(active_keys)
        self._active_set = frozenset(self.active)
        self._pos = pos
        self._build()

    # -- construction -------------------------------------------------

    def _corner_keys(self, key):
        L, i, j = key
        s = 1 << (MAXL - L)
        x0, y0 = i * s, j * s
        return ((x0, y0), (x0 + s, y0), (x0 + s, y0 + s), (x0, y0 + s))

    def _build(self):
        used = {}
        for key in self.active:
            for ck in self._corner_keys(key):
                used[ck] = None
        self.node_keys = sorted(used)
        self.key_to_id = {k: n for n, k in enumerate(self.node_keys)}
        self.nodes = np.array([self._pos[k] for k in self.node_keys])
        self.elem_keys = list(self.active)
        self.elems = np.array(
            [[self.key_to_id[c] for c in self._corner_keys(k)]
             for k in self.elem_keys], dtype=np.int64)
        self.levels = np.array([k[0] for k in self.elem_keys], dtype=np.int64)

        # Hanging nodes: the midpoint of an active cell's edge that is
        # itself a node must belong to finer cells across that edge.
        raw = {}
        boundary = []
        for e, key in enumerate(self.elem_keys):
            cks = self._corner_keys(key)
            L = key[0]
            s = 1 << (MAXL - L)
            for le in range(4):
                a, b = cks[le], cks[(le + 1) % 4]
                axis = 0 if a[1] == b[1] else 1
                if axis == 0:
                    c, lo, hi = a[1], min(a[0], b[0]), max(a[0], b[0])
                else:
                    c, lo, hi = a[0], min(a[1], b[1]), max(a[1], b[1])
                tag = self.geom.edge_tag(axis, c, lo, hi, self.pxmax, self.pymax)
                if tag is not None:
                    boundary.append((e, le, tag))
                    continue
                if s < 2:
                    continue
                mid = ((a[0] + b[0]) // 2, (a[1] + b[1]) // 2)
                mid_id = self.key_to_id.get(mid)
                if mid_id is not None:
                    ia, ib = self.key_to_id[a], self.key_to_id[b]
                    prev = raw.get(mid_id)
                    if prev is not None and set(prev) != {ia, ib}:
                        raise RuntimeError("conflicting hanging constraints")
                    raw[mid_id] = (ia, ib)
        self.boundary = sorted(boundary)
        self.constraints_raw = raw
        self.constraints = self._flatten(raw)
        self.is_hanging = np.zeros(len(self.nodes), dtype=bool)
        self.is_hanging[list(raw.keys())] = True

    @staticmethod
    def _flatten(raw):
        flat = {}

        def resolve(n, depth=0):
            if depth > 64:
                raise RuntimeError("constraint chain too deep")
            if n not in raw:
                return [(n, 1.0)]
            out = {}
            for m in raw[n]:
                for mm, w in resolve(m, depth + 1):
                    out[mm] = out.get(mm, 0.0) + 0.5 * w
            return sorted(out.items())

        for slave in raw:
            flat[slave] = resolve(slave)
        return flat

    # -- basic queries ------------------------------------------------

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elems(self):
        return len(self.elems)

    def elem_coords(self):
        """Corner coordinates per element, shape (E, 4, 2)."""
        return self.nodes[self.elems]

    def areas(self):
        """Polygon (shoelace) area of each element."""
        xy = self.elem_coords()
        x, y = xy[..., 0], xy[..., 1]
        xs, ys = np.roll(x, -1, axis=1), np.roll(y, -1, axis=1)
        return 0.5 * np.sum(x * ys - xs * y, axis=1)

    def sizes(self):
        """Characteristic element size sqrt(area)."""
        return np.sqrt(self.areas())

    def base_cells(self):
        """Level-0 ancestor (i, j) of each element."""
        return [(i >> L, j >> L) for (L, i, j) in self.elem_keys]

    def elements_in(self, base_cells):
        """Boolean mask of elements whose ancestor base cell is listed."""
        bc = set(base_cells)
        return np.array([c in bc for c in self.base_cells()])

    def locate(self, xi, eta):
        """Active cell key containing parametric point (xi, eta)."""
        px = min(int(xi * self.pxmax), self.pxmax - 1)
        py = min(int(eta * self.pymax), self.pymax - 1)
        for L in range(MAXL + 1):
            key = (L, px >> (MAXL - L), py >> (MAXL - L))
            if key in self._active_set:
                return key
        raise KeyError(f"no active cell at ({xi}, {eta})")

    def edge_nodes(self, e, le):
        """Node ids of local edge ``le`` of element ``e``."""
        return self.elems[e, le], self.elems[e, (le + 1) % 4]

    def edge_vector(self, e, le):
        i, j = self.edge_nodes(e, le)
        return self.nodes[j] - self.nodes[i]

    def edge_normal(self, e, le):
        """Outward unit normal of a (straight) element edge."""
        t = self.edge_vector(e, le)
        n = np.array([t[1], -t[0]])
        return n / np.linalg.norm(n)

    def interface_edges(self, base_cells):
        """Edges of in-region elements whose neighbor is out of region.

        Returns a list of (elem index, local edge) for elements whose
        ancestor base cell is in ``base_cells``; domain-boundary edges
        are never interface edges.
        """
        bc = set(base_cells)
        inmask = self.elements_in(bc)
        bedges = {(e, le) for (e, le, _t) in self.boundary}
        out = []
        for e in np.nonzero(inmask)[0]:
            cks = self._corner_keys(self.elem_keys[e])
            for le in range(4):
                if (e, le) in bedges:
                    continue
                a, b = cks[le], cks[(le + 1) % 4]
                mx, my = (a[0] + b[0]) // 2, (a[1] + b[1]) // 2
                # step one lattice unit across the edge, outward
                if a[1] == b[1]:  # horizontal edge
                    my += 1 if le == 2 else -1
                else:
                    mx += 1 if le == 1 else -1
                key = self._locate_lattice(mx, my)
                L, i, j = key
                if (i >> L, j >> L) not in bc:
                    out.append((e, le))
        return out

    def _locate_lattice(self, px, py):
        px = min(max(px, 0), self.pxmax - 1)
        py = min(max(py, 0), self.pymax - 1)
        for L in range(MAXL + 1):
            key = (L, px >> (MAXL - L), py >> (MAXL - L))
            if key in self._active_set:
                return key
        raise KeyError("no active cell at lattice point")

    def build_patches(self):
        """Element patches around regular (non-hanging) vertices.

        Returns a dict mapping node id to the sorted list of element
        indices sharing that vertex.  Hanging nodes do not seed patches.
        """
        patches = {}
        for e in range(self.n_elems):
            for n in self.elems[e]:
                patches.setdefault(int(n), []).append(e)
        return {n: sorted(es) for n, es in sorted(patches.items())
                if not self.is_hanging[n]}

    def write(self, f):
        """Plain-text mesh tables: nodes, elements, constraints, boundary."""
        f.write(f"# nodes {self.n_nodes}\n")
        for n, (x, y) in enumerate(self.nodes):
            f.write(f"{n} {x:.17e} {y:.17e}\n")
        f.write(f"# elements {self.n_elems}\n")
        for e in range(self.n_elems):
            n0, n1, n2, n3 = self.elems[e]
            f.write(f"{e} {n0} {n1} {n2} {n3} {self.levels[e]}\n")
        f.write(f"# constraints {len(self.constraints)}\n")
        for s in sorted(self.constraints):
            parts = " ".join(f"{m} {w:.17e}" for m, w in self.constraints[s])
            f.write(f"{s} {parts}\n")
        f.write(f"# boundary {len(self.boundary)}\n")
        for e, le, tag in self.boundary:
            f.write(f"{e} {le} {tag}\n")


def build_initial_mesh(geom, nx, ny):
    """Uniform nx-by-ny base mesh with nodes placed by the geometry map."""
    if nx < 1 or ny < 1:
        raise ValueError("need at least one base cell per direction")
    pos = {}
    for j in range(ny + 1):
        for i in range(nx + 1):
            xy = geom.map(i / nx, j / ny)
            pos[(i << MAXL, j << MAXL)] = (float(xy[0]), float(xy[1]))
    active = [(0, i, j) for j in range(ny) for i in range(nx)
              if not geom.base_cell_masked(i, j, nx, ny)]
    if not active:
        raise ValueError("all base cells masked")
    return Mesh(geom, nx, ny, active, pos)


def _edge_neighbors(key, nx, ny):
    """Same-level edge-neighbor keys (may be outside the grid)."""
    L, i, j = key
    return [(L, i - 1, j), (L, i + 1, j), (L, i, j - 1), (L, i, j + 1)]


def refine(mesh, marks):
    """Split marked elements; returns a new conforming mesh.

    ``marks`` is an iterable of element indices (or a boolean mask).
    Additional cells are split as needed to maintain the one-level rule.
    New boundary nodes are placed by the geometry map; interior midside
    nodes at chord midpoints; cell centers at the corner average.
    """
    marks = np.asarray(marks)
    if marks.dtype == bool:
        marks = np.nonzero(marks)[0]
    geom, nx, ny = mesh.geom, mesh.nx, mesh.ny
    pxmax, pymax = mesh.pxmax, mesh.pymax
    active = set(mesh.active)
    pos = dict(mesh._pos)

    def in_domain(key):
        L, i, j = key
        if not (0 <= i < nx << L and 0 <= j < ny << L):
            return False
        return not geom.base_cell_masked(i >> L, j >> L, nx, ny)

    def place_edge_mid(a, b):
        mid = ((a[0] + b[0]) // 2, (a[1] + b[1]) // 2)
        if mid in pos:
            return
        axis = 0 if a[1] == b[1] else 1
        c = a[1] if axis == 0 else a[0]
        lo = min(a[axis], b[axis])
        hi = max(a[axis], b[axis])
        tag = geom.edge_tag(axis, c, lo, hi, pxmax, pymax)
        if tag is not None:
            xy = geom.map(mid[0] / pxmax, mid[1] / pymax)
            pos[mid] = (float(xy[0]), float(xy[1]))
        else:
            ax, ay = pos[a]
            bx, by = pos[b]
            pos[mid] = (0.5 * (ax + bx), 0.5 * (ay + by))

    def split(key):
        L, i, j = key
        if L >= MAXL:
            raise RuntimeError("maximum refinement depth reached")
        active.discard(key)
        s = 1 << (MAXL - L)
        x0, y0 = i * s, j * s
        corners = ((x0, y0), (x0 + s, y0), (x0 + s, y0 + s), (x0, y0 + s))
        for k in range(4):
            place_edge_mid(corners[k], corners[(k + 1) % 4])
        center = (x0 + s // 2, y0 + s // 2)
        if center not in pos:
            cx = sum(pos[c][0] for c in corners) / 4.0
            cy = sum(pos[c][1] for c in corners) / 4.0
            pos[center] = (cx, cy)
        for dj in (0, 1):
            for di in (0, 1):
                active.add((L + 1, 2 * i + di, 2 * j + dj))
        # one-level rule: any active coarser edge-neighbor must split too
        for nb in _edge_neighbors(key, nx, ny):
            Ln, ii, jj = nb
            coarse = (Ln - 1, ii >> 1, jj >> 1)
            if Ln >= 1 and in_domain(nb) and nb not in active and coarse in active:
                split(coarse)

    keys = sorted(mesh.elem_keys[m] for m in marks)
    for key in keys:
        if key in active:
            split(key)
    return Mesh(geom, nx, ny, active, pos)


def uniform_refine(mesh):
    return refine(mesh, np.arange(mesh.n_elems))


# -- quadrature ------------------------------------------------------

_gauss_cache = {}


def gauss1d(order):
    """Gauss-Legendre points and weights on [-1, 1]."""
    if order not in _gauss_cache:
        _gauss_cache[order] = leggauss(order)
    return _gauss_cache[order]


def gauss2d(order):
    """Tensor Gauss rule on the reference square [-1, 1]^2.

    Returns (points (n, 2), weights (n,)).
    """
    p, w = gauss1d(order)
    P, Q = np.meshgrid(p, p, indexing="ij")
    W = np.outer(w, w)
    return np.column_stack([P.ravel(), Q.ravel()]), W.ravel()


def graded_gauss2d(order, corner, layers=6, ratio=0.15):
    """Tensor Gauss rule graded geometrically toward one corner.

    The reference square is partitioned into (layers+1)^2 boxes whose
    extents shrink by ``ratio`` toward ``corner`` (local corner index,
    0..3); each box gets an order x order Gauss rule.  Used to integrate
    r^(lambda-1)-type integrands on elements touching a singular vertex.
    """
    brk = [1.0] + [ratio ** k for k in range(1, layers + 1)] + [0.0]
    brk = np.array(brk[::-1])  # ascending from 0 to 1
    p, w = gauss1d(order)
    pts, wts = [], []
    for i in range(len(brk) - 1):
        for j in range(len(brk) - 1):
            u0, u1 = brk[i], brk[i + 1]
            v0, v1 = brk[j], brk[j + 1]
            pu = u0 + (u1 - u0) * 0.5 * (p + 1)
            pv = v0 + (v1 - v0) * 0.5 * (p + 1)
            wu = w * 0.5 * (u1 - u0)
            wv = w * 0.5 * (v1 - v0)
            U, V = np.meshgrid(pu, pv, indexing="ij")
            W = np.outer(wu, wv)
            pts.append(np.column_stack([U.ravel(), V.ravel()]))
            wts.append(W.ravel())
    uv = np.vstack(pts)
    wt = np.concatenate(wts)
    # map (u, v) in [0,1]^2 with the singular corner at (0,0) onto the
    # reference square with the singular corner at index `corner`
    if corner == 0:
        xi, eta = uv[:, 0], uv[:, 1]
    elif corner == 1:
        xi, eta = 1.0 - uv[:, 0], uv[:, 1]
    elif corner == 2:
        xi, eta = 1.0 - uv[:, 0], 1.0 - uv[:, 1]
    elif corner == 3:
        xi, eta = uv[:, 0], 1.0 - uv[:, 1]
    else:
        raise ValueError("corner must be 0..3")
    ref = np.column_stack([2 * xi - 1, 2 * eta - 1])
    return ref, wt * 4.0

"""Quadtree mesh construction, refinement closure, and quadrature rules.

The mesh is parametric: a unit square of base cells pushed through a
geometry map.  Most tests below work on the quarter annulus because its
curved boundaries exercise the map-aware node placement.
"""

import io
import math

import numpy as np
import pytest

from goalfem.mesh import (
    GeometryMap,
    build_initial_mesh,
    gauss1d,
    gauss2d,
    graded_gauss2d,
    refine,
    uniform_refine,
)


def annulus(nx=2, ny=2, a=5.0, b=20.0):
    return build_initial_mesh(GeometryMap("annulus", a=a, b=b), nx, ny)


# ---------------------------------------------------------------- geometry


def test_geometry_map_validation():
    with pytest.raises(ValueError):
        GeometryMap("torus")
    with pytest.raises(ValueError):
        GeometryMap("annulus", a=3.0, b=2.0)
    with pytest.raises(ValueError):
        GeometryMap("annulus", a=0.0, b=2.0)


def test_lshape_requires_even_grid():
    with pytest.raises(ValueError):
        build_initial_mesh(GeometryMap("lshape"), 3, 4)


def test_annulus_map_points():
    g = GeometryMap("annulus", a=5.0, b=20.0)
    assert np.allclose(g.map(0.0, 0.0), [5.0, 0.0])
    assert np.allclose(g.map(1.0, 1.0), [0.0, 20.0], atol=1e-12)
    mid = g.map(0.5, 0.5)
    assert np.hypot(*mid) == pytest.approx(12.5)


def test_initial_annulus_counts():
    m = annulus(2, 2)
    assert m.n_elems == 4
    assert m.n_nodes == 9
    assert m.constraints == {}
    # inner-boundary nodes sit exactly on the circle of radius a
    inner_nodes = {int(n) for (e, le, t) in m.boundary if t == "inner"
                   for n in m.edge_nodes(e, le)}
    for n in inner_nodes:
        assert np.hypot(*m.nodes[n]) == pytest.approx(5.0, abs=1e-12)


def test_boundary_tags_annulus():
    m = annulus(3, 2)
    tags = {t for (_e, _le, t) in m.boundary}
    assert tags == {"inner", "outer", "sym0", "sym90"}


def test_boundary_tags_lshape():
    m = build_initial_mesh(GeometryMap("lshape"), 4, 4)
    assert m.n_elems == 12
    tags = {t for (_e, _le, t) in m.boundary}
    assert tags == {"bottom", "right", "top", "left", "face_a", "face_b"}


def test_lshape_positive_areas():
    m = refine(build_initial_mesh(GeometryMap("lshape"), 4, 4), [0, 5, 7])
    assert (m.areas() > 0).all()


# -------------------------------------------------------------- refinement


def test_refine_single_element():
    m = refine(annulus(2, 2), [0])
    assert m.n_elems == 7
    assert len(m.constraints) == 2
    for slave, masters in m.constraints.items():
        assert len(masters) == 2
        ws = [w for (_n, w) in masters]
        assert ws == [0.5, 0.5]
        # hanging node at the chord midpoint of its masters
        mid = 0.5 * sum(m.nodes[n] for (n, _w) in masters)
        assert np.allclose(m.nodes[slave], mid, atol=1e-12)


def test_refine_all_clears_constraints():
    m = uniform_refine(annulus(2, 2))
    assert m.n_elems == 16
    assert m.constraints == {}


def test_refined_boundary_nodes_on_circle():
    m = uniform_refine(annulus(2, 2))
    for (e, le, t) in m.boundary:
        r = np.hypot(*m.nodes[list(m.edge_nodes(e, le))].T)
        if t == "inner":
            assert np.allclose(r, 5.0, atol=1e-12)
        elif t == "outer":
            assert np.allclose(r, 20.0, atol=1e-12)


def one_level_violations(m):
    bedges = {(e, le) for (e, le, _t) in m.boundary}
    bad = 0
    for e, key in enumerate(m.elem_keys):
        cks = m._corner_keys(key)
        for le in range(4):
            if (e, le) in bedges:
                continue
            a, b = cks[le], cks[(le + 1) % 4]
            mx, my = (a[0] + b[0]) // 2, (a[1] + b[1]) // 2
            if a[1] == b[1]:
                my += 1 if le == 2 else -1
            else:
                mx += 1 if le == 1 else -1
            try:
                L, _i, _j = m._locate_lattice(mx, my)
            except KeyError:
                continue  # masked quadrant of the L-shape
            if abs(L - key[0]) > 1:
                bad += 1
    return bad


def test_one_level_rule_random_refinement(rng):
    for geom in (GeometryMap("annulus", a=5.0, b=20.0),
                 GeometryMap("lshape")):
        m = build_initial_mesh(geom, 4, 4)
        for _round in range(4):
            marks = rng.choice(m.n_elems, size=max(1, m.n_elems // 5),
                               replace=False)
            m = refine(m, marks)
            assert one_level_violations(m) == 0
            assert (m.areas() > 0).all()
            for masters in m.constraints.values():
                assert sum(w for (_n, w) in masters) == pytest.approx(1.0)


def test_cascade_refinement_keeps_closure():
    # repeatedly refining the same corner forces neighbor splits
    m = annulus(2, 2)
    for _ in range(4):
        key = m.locate(0.01, 0.01)
        m = refine(m, [m.elem_keys.index(key)])
    assert one_level_violations(m) == 0


def test_locate_returns_containing_cell():
    m = refine(annulus(2, 2), [0])
    for (xi, eta) in [(0.3, 0.6), (0.05, 0.05), (0.9, 0.2)]:
        L, i, j = m.locate(xi, eta)
        s = 1 << (24 - L)
        assert i * s <= xi * m.pxmax < (i + 1) * s
        assert j * s <= eta * m.pymax < (j + 1) * s


def test_elements_in_region_survives_refinement():
    m = annulus(2, 2)
    region = {(0, 0), (1, 0)}
    assert m.elements_in(region).sum() == 2
    m2 = refine(m, np.nonzero(m.elements_in(region))[0])
    assert m2.elements_in(region).sum() == 8
    # children keep their ancestor's membership; the chord polygon grows
    # toward (but stays below) the curved sector as boundary nodes land
    # on the circles
    true_area = 0.5 * 0.25 * math.pi * (20.0 ** 2 - 5.0 ** 2)
    a1 = m.areas()[m.elements_in(region)].sum()
    a2 = m2.areas()[m2.elements_in(region)].sum()
    assert a1 < a2 < true_area


def test_interface_edges_separate_region():
    m = uniform_refine(annulus(2, 2))
    region = {(0, 0)}
    inmask = m.elements_in(region)
    edges = m.interface_edges(region)
    assert edges, "region boundary should produce interface edges"
    for (e, le) in edges:
        assert inmask[e]
        assert (e, le) not in {(be, ble) for (be, ble, _t) in m.boundary}


# ----------------------------------------------------------------- patches


def test_patch_sizes_uniform_mesh():
    m = annulus(4, 4)
    patches = m.build_patches()
    assert len(patches) == 25
    counts = sorted(len(v) for v in patches.values())
    assert counts.count(1) == 4      # corners
    assert counts.count(2) == 12     # edge vertices
    assert counts.count(4) == 9      # interior


def test_patches_exclude_hanging_and_cover_mesh():
    m = refine(annulus(3, 3), [0, 4])
    patches = m.build_patches()
    for n in patches:
        assert not m.is_hanging[n]
    covered = set()
    for elems in patches.values():
        covered.update(elems)
    assert covered == set(range(m.n_elems))


# -------------------------------------------------------------- quadrature


def test_gauss1d_degree_exactness():
    pts, wts = gauss1d(3)
    assert wts.sum() == pytest.approx(2.0)
    assert np.dot(wts, pts ** 4) == pytest.approx(2.0 / 5.0)
    assert abs(np.dot(wts, pts ** 5)) < 1e-14


def test_gauss2d_reference_square():
    pts, wts = gauss2d(2)
    assert len(wts) == 4
    assert wts.sum() == pytest.approx(4.0)
    x, y = pts[:, 0], pts[:, 1]
    assert np.dot(wts, x ** 2 * y ** 2) == pytest.approx(4.0 / 9.0)
    assert abs(np.dot(wts, x ** 3 * y)) < 1e-14


def test_polygon_area_converges_to_sector_area():
    # chord polygons underestimate the curved domain; error drops as h^2
    exact = 0.25 * math.pi * (20.0 ** 2 - 5.0 ** 2)
    errs = []
    for n in (4, 8, 16):
        errs.append(exact - annulus(n, n).areas().sum())
    assert errs[0] > errs[1] > errs[2] > 0
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)
    assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.05)


def test_graded_rule_concentrates_at_corner():
    pts, wts = graded_gauss2d(2, 0)
    assert (wts > 0).all()
    assert wts.sum() == pytest.approx(4.0)
    d_graded = np.linalg.norm(pts - [-1.0, -1.0], axis=1).min()
    d_plain = np.linalg.norm(gauss2d(2)[0] - [-1.0, -1.0], axis=1).min()
    assert d_graded < 0.1 * d_plain


def test_edge_normals_outward_unit():
    m = annulus(2, 2)
    for (e, le, t) in m.boundary:
        n = m.edge_normal(e, le)
        assert np.linalg.norm(n) == pytest.approx(1.0)
        i, j = m.edge_nodes(e, le)
        mid = 0.5 * (m.nodes[i] + m.nodes[j])
        if t == "inner":     # points toward the center
            assert np.dot(n, mid) < 0
        elif t == "outer":
            assert np.dot(n, mid) > 0
        elif t == "sym0":
            assert np.allclose(n, [0.0, -1.0], atol=1e-12)
        elif t == "sym90":
            assert np.allclose(n, [-1.0, 0.0], atol=1e-12)


def test_write_emits_all_tables():
    buf = io.StringIO()
    refine(annulus(2, 2), [1]).write(buf)
    text = buf.getvalue()
    for section in ("# nodes", "# elements", "# constraints", "# boundary"):
        assert section in text

import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from knwidth.mesh import (
    BoundarySpec,
    Mesh,
    MeshIntegrityError,
    MeshParseError,
    UnsupportedElementError,
    dump_polymesh,
    export_msh,
    generate_obstacle_channel,
    generate_rectangle,
    generate_step_domain,
    import_msh,
    load_polymesh,
    validate,
)

UNIT_SQUARE_MSH = """$MeshFormat
2.2 0 8
$EndMeshFormat
$PhysicalNames
2
1 1 "walls"
1 2 "lid"
$EndPhysicalNames
$Nodes
4
1 0 0 0
2 1 0 0
3 1 1 0
4 0 1 0
$EndNodes
$Elements
6
1 1 2 1 1 1 2
2 1 2 1 1 2 3
3 1 2 2 2 3 4
4 1 2 1 1 4 1
5 2 2 0 1 1 2 3
6 2 2 0 1 1 4 3
$EndElements
"""


def edge_multiplicity(mesh):
    c = Counter()
    for t in mesh.triangles.tolist():
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            c[frozenset((a, b))] += 1
    return c


# -- generators -------------------------------------------------------------

def test_step_polygon_corners_at_coarsest_level():
    m = generate_step_domain(22.0)
    assert validate(m).ok
    corners = {tuple(m.vertices[v]) for v in m.corners}
    assert corners == {(0, 2), (4, 2), (4, 0), (22, 0), (22, 5), (0, 5)}
    assert math.isclose(m.area(), 102.0, rel_tol=1e-12)


def test_step_fine_edges_bounded_and_tags():
    m = generate_step_domain(0.25)
    assert validate(m).ok
    assert m.edge_lengths().max() <= 0.25 * math.sqrt(2) * (1 + 1e-12)
    assert set(m.segment_tags) == {"inlet", "outlet", "wall", "step_vertical", "step_horizontal"}
    assert math.isclose(m.area(), 102.0, rel_tol=1e-12)


def test_step_tags_lie_on_expected_sides():
    m = generate_step_domain(0.5)
    for (i, j), tag in zip(m.boundary_edges, m.boundary_tags):
        p, q = m.vertices[i], m.vertices[j]
        mid = 0.5 * (p + q)
        expected = {
            "inlet": lambda x, y: x == 0 and 2 <= y <= 5,
            "outlet": lambda x, y: x == 22,
            "step_vertical": lambda x, y: x == 4 and y <= 2,
            "step_horizontal": lambda x, y: y == 2 and x <= 4,
            "wall": lambda x, y: y in (0, 5),
        }[tag]
        assert expected(*mid), (tag, mid)


def test_obstacle_area_tags_and_loop():
    h = 0.025
    m = generate_obstacle_channel(h)
    assert validate(m).ok
    assert math.isclose(m.area(), 2.2 * 0.4 - 0.05**2, rel_tol=1e-12)
    assert set(m.segment_tags) == {"inlet", "outlet", "wall", "obstacle"}
    obs = [tuple(e) for e, t in zip(m.boundary_edges.tolist(), m.boundary_tags) if t == "obstacle"]
    side = 0.05
    h_edge = side / math.ceil(side / h)
    assert len(obs) == round(4 * side / h_edge)
    nxt = dict(obs)
    start = obs[0][0]
    v, steps = start, 0
    while True:
        v = nxt[v]
        steps += 1
        if v == start:
            break
    assert steps == len(obs)


def test_obstacle_rejects_coarse_h():
    with pytest.raises(ValueError):
        generate_obstacle_channel(0.05)


@pytest.mark.parametrize("mesh", [
    generate_rectangle(2.0, 1.0, 5, 3),
    generate_step_domain(0.7),
    generate_obstacle_channel(0.04),
], ids=["rect", "step", "obstacle"])
def test_edge_incidence(mesh):
    mult = edge_multiplicity(mesh)
    boundary = {frozenset(e) for e in mesh.boundary_edges.tolist()}
    assert len(boundary) == len(mesh.boundary_edges)
    for e, c in mult.items():
        assert c == (1 if e in boundary else 2)
    assert boundary <= set(mult)


@pytest.mark.parametrize("mesh", [generate_step_domain(0.5), generate_obstacle_channel(0.04)],
                         ids=["step", "obstacle"])
def test_no_triangle_with_three_boundary_vertices(mesh):
    on_bnd = np.zeros(mesh.n_vertices, dtype=bool)
    on_bnd[mesh.boundary_edges.ravel()] = True
    assert not on_bnd[mesh.triangles].all(axis=1).any()


def test_boundary_edges_have_domain_on_left():
    m = generate_obstacle_channel(0.04)
    cent = m.vertices[m.triangles].mean(axis=1)
    owner = {}
    for k, t in enumerate(m.triangles.tolist()):
        for a, b in ((t[0], t[1]), (t[1], t[2]), (t[2], t[0])):
            owner[frozenset((a, b))] = k
    for i, j in m.boundary_edges.tolist():
        d = m.vertices[j] - m.vertices[i]
        c = cent[owner[frozenset((i, j))]] - m.vertices[i]
        assert d[0] * c[1] - d[1] * c[0] > 0


@settings(max_examples=25, deadline=None)
@given(w=st.floats(0.1, 10), h=st.floats(0.1, 10), nx=st.integers(1, 6), ny=st.integers(1, 6))
def test_rectangle_area_property(w, h, nx, ny):
    m = generate_rectangle(w, h, nx, ny)
    assert validate(m).ok
    assert math.isclose(m.area(), w * h, rel_tol=1e-12)


# -- validation ------------------------------------------------------------

def _mutate(mesh, triangles=None, edges=None, tags=None, vertices=None):
    return Mesh(mesh.vertices if vertices is None else vertices,
                mesh.triangles if triangles is None else triangles,
                mesh.boundary_edges if edges is None else edges,
                mesh.boundary_tags if tags is None else tags)


def test_validate_flipped_triangle():
    m = generate_rectangle(1, 1, 2)
    t = m.triangles.copy()
    t[3] = t[3, [0, 2, 1]]
    rep = validate(_mutate(m, triangles=t))
    assert "negative area at triangle 3" in rep.violations


def test_validate_duplicate_triangle():
    m = generate_rectangle(1, 1, 2)
    t = np.vstack([m.triangles, m.triangles[5]])
    rep = validate(_mutate(m, triangles=t))
    assert not rep.ok
    assert any("nonconforming" in v for v in rep.violations)


def test_validate_untagged_edge_and_open_loop():
    m = generate_rectangle(1, 1, 2)
    rep = validate(_mutate(m, edges=m.boundary_edges[1:], tags=m.boundary_tags[1:]))
    assert any("not tagged" in v for v in rep.violations)
    assert any("not closed" in v for v in rep.violations)


def test_validate_unused_vertex():
    m = generate_rectangle(1, 1, 1)
    v = np.vstack([m.vertices, [[5.0, 5.0]]])
    rep = validate(_mutate(m, vertices=v))
    assert any("not used" in s for s in rep.violations)


def test_validate_hanging_vertex():
    # two unit cells side by side, the right one split at its left edge midpoint
    v = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [2, 0], [2, 1], [1, 0.5]], float)
    t = np.array([[0, 1, 2], [0, 2, 3], [1, 4, 6], [6, 4, 5], [6, 5, 2]])
    e = np.array([[0, 1], [1, 4], [4, 5], [5, 2], [2, 3], [3, 0]])
    m = Mesh(v, t, e, ("b",) * 6)
    rep = validate(m)
    assert not rep.ok
    assert str(rep) != "mesh is valid"


def test_boundary_spec_requires_dirichlet():
    with pytest.raises(ValueError):
        BoundarySpec({"a": "neumann"})
    with pytest.raises(ValueError):
        BoundarySpec({"a": "dirichlet", "b": "robin"})
    assert BoundarySpec({"a": "Dirichlet", "b": "slip"}).tags_of("slip") == ["b"]


# -- MSH and POLYMESH ------------------------------------------------------

def test_import_unit_square():
    m = import_msh(UNIT_SQUARE_MSH)
    assert (m.n_vertices, m.n_triangles, len(m.boundary_edges)) == (4, 2, 4)
    assert validate(m).ok
    assert set(m.segment_tags) == {"walls", "lid"}
    assert (m.signed_areas() > 0).all()


def test_import_missing_elements():
    text = UNIT_SQUARE_MSH.split("$Elements")[0]
    with pytest.raises(MeshParseError, match=r"\$Elements"):
        import_msh(text)


def test_import_malformed_line_reports_line_number():
    text = UNIT_SQUARE_MSH.replace("3 1 1 0\n", "3 1 x 0\n")
    with pytest.raises(MeshParseError) as exc:
        import_msh(text)
    assert exc.value.lineno == 13
    assert str(exc.value).startswith("line 13:")


def test_import_unsupported_element():
    text = UNIT_SQUARE_MSH.replace("6 2 2 0 1 1 4 3", "6 3 2 0 1 1 2 3 4")
    with pytest.raises(UnsupportedElementError):
        import_msh(text)


def test_import_dangling_node():
    text = UNIT_SQUARE_MSH.replace("6 2 2 0 1 1 4 3", "6 2 2 0 1 1 4 9")
    with pytest.raises(MeshIntegrityError):
        import_msh(text)


def test_msh_round_trip_step():
    m = generate_step_domain(0.5)
    r = import_msh(export_msh(m))
    assert (r.n_vertices, r.n_triangles, len(r.boundary_edges)) == (m.n_vertices, m.n_triangles,
                                                                     len(m.boundary_edges))
    assert validate(r).ok
    assert Counter(r.boundary_tags) == Counter(m.boundary_tags)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 30.0))
def test_polymesh_round_trip_bit_exact(h):
    m = generate_step_domain(max(h, 0.3))
    r = load_polymesh(dump_polymesh(m))
    assert np.array_equal(r.vertices, m.vertices)
    assert np.array_equal(r.triangles, m.triangles)
    assert np.array_equal(r.boundary_edges, m.boundary_edges)
    assert r.boundary_tags == m.boundary_tags


def test_polymesh_bad_header():
    with pytest.raises(MeshParseError):
        load_polymesh("NOT A MESH\n")

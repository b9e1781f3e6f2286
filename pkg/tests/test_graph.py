import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from latticewave.graph import (
    BOUNDARY,
    INTERIOR,
    LEAD_PORT,
    Edge,
    GraphError,
    MetricGraph,
    Potential,
    Vertex,
    attach_lead,
    build_chain,
    build_domain_lattice,
    build_sinai_graph,
    build_square_lattice,
    build_triangular_lattice,
    detach_lead,
    graph_from_json,
    graph_to_json,
    sinai_indicator,
    triangular_position,
    validate,
)


def lattice_coords(graph, kinds=(INTERIOR, LEAD_PORT)):
    return {
        tuple(int(round(c / graph.spacing)) for c in v.position)
        for v in graph.vertices
        if v.kind in kinds
    }


def edge_coords(graph):
    pos = np.rint(graph.positions / graph.spacing).astype(int)
    return {frozenset((tuple(pos[e.j]), tuple(pos[e.n]))) for e in graph.edges}


def csgraph_components(graph):
    rows = [e.j for e in graph.edges]
    cols = [e.n for e in graph.edges]
    n = len(graph.vertices)
    adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    return connected_components(adj, directed=False)[0]


def cell_oracle(points):
    """Brute force: interior points lie in four full unit cells; an edge
    survives if both of its cells are full."""
    points = set(points)

    def full(x, y):
        return all(p in points for p in ((x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1)))

    interior = {p for p in points if all(full(p[0] - a, p[1] - b) for a in (0, 1) for b in (0, 1))}
    edges = set()
    for (x, y) in points:
        if (x + 1, y) in points and full(x, y) and full(x, y - 1):
            edges.add(frozenset(((x, y), (x + 1, y))))
        if (x, y + 1) in points and full(x, y) and full(x - 1, y):
            edges.add(frozenset(((x, y), (x, y + 1))))
    return interior, edges


# -- square lattice -----------------------------------------------------------------


def test_smallest_square_lattice():
    g = build_square_lattice(3, 3, 1.0)
    assert g.n_interior == 1
    assert len(g.edges) == 4
    assert sum(v.kind == BOUNDARY for v in g.vertices) == 4
    centre = g.interior_ids[0]
    assert g.vertices[centre].position == (1.0, 1.0)
    assert g.degrees[centre] == 4


def test_rectangle_interior_count_and_degrees():
    g = build_square_lattice(4, 5, 0.5)
    assert g.n_interior == 6
    assert np.all(g.degrees[g.interior_ids] == 4)
    assert lattice_coords(g) == {(i, j) for i in range(1, 4) for j in range(1, 3)}


@pytest.mark.parametrize("rows,cols", [(3, 7), (6, 4), (9, 9)])
def test_square_lattice_matches_brute_force(rows, cols):
    g = build_square_lattice(rows, cols, 0.25)
    interior, edges = cell_oracle((i, j) for i in range(cols) for j in range(rows))
    assert lattice_coords(g) == interior
    assert edge_coords(g) == edges
    for v in g.vertices:
        assert v.position == pytest.approx(tuple(np.rint(np.array(v.position) / 0.25) * 0.25), abs=1e-15)


@pytest.mark.parametrize("bad", [0.0, -1.0, math.inf, math.nan])
def test_bad_spacing(bad):
    with pytest.raises(GraphError):
        build_square_lattice(4, 4, bad)


def test_degenerate_extent():
    with pytest.raises(GraphError):
        build_square_lattice(2, 5, 1.0)


def test_alpha_function_applied_to_interior():
    g = build_square_lattice(5, 5, 1.0, alpha_fn=lambda p: p[0] + 10 * p[1])
    for vid in g.interior_ids:
        x, y = g.vertices[vid].position
        assert g.vertices[vid].alpha == x + 10 * y
    assert all(v.alpha == 0.0 for v in g.vertices if v.kind == BOUNDARY)


def test_infinite_alpha_rejected():
    with pytest.raises(GraphError):
        Vertex(0, (0.0,), alpha=math.inf)


# -- domain lattice -----------------------------------------------------------------


def test_full_box_indicator_equals_square_lattice():
    a = build_domain_lattice(lambda p: True, ((0, 0), (2.0, 1.5)), 0.25)
    b = build_square_lattice(7, 9, 0.25)
    assert a == b


def test_l_shape_splits_reentrant_corner():
    # 3x3 cells minus the top-right one
    g = build_domain_lattice(lambda p: not (p[0] > 2.5 and p[1] > 2.5), ((0, 0), (3, 3)), 1.0)
    assert lattice_coords(g) == {(1, 1), (2, 1), (1, 2)}
    corner = [v for v in g.vertices if v.position == (2.0, 2.0)]
    assert len(corner) == 2
    assert all(v.kind == BOUNDARY and g.degrees[v.id] == 1 for v in corner)
    assert {g.vertices[g.neighbor(g.incident[v.id][0], v.id)].position for v in corner} == {(2.0, 1.0), (1.0, 2.0)}
    assert len(g.edges) == 10
    assert sum(v.kind == BOUNDARY for v in g.vertices) == 8


def test_disconnected_domain_is_flagged():
    two_boxes = lambda p: p[0] <= 2 or p[0] >= 5
    g = build_domain_lattice(two_boxes, ((0, 0), (8, 3)), 1.0)
    assert "disconnected" in g.flags
    assert g.is_connected()


def test_empty_domain():
    with pytest.raises(GraphError):
        build_domain_lattice(lambda p: False, ((0, 0), (3, 3)), 1.0)
    with pytest.raises(GraphError):
        build_domain_lattice(lambda p: p[0] < 1.5, ((0, 0), (3, 3)), 1.0)  # one column of cells


@settings(max_examples=60, deadline=None)
@given(st.lists(st.lists(st.booleans(), min_size=7, max_size=7), min_size=7, max_size=7))
def test_random_domains_match_cell_oracle(mask):
    mask = np.array(mask)
    points = {(i, j) for i in range(7) for j in range(7) if mask[i, j]}
    interior, edges = cell_oracle(points)
    ind = lambda p: bool(mask[int(round(p[0])), int(round(p[1]))])
    if not interior:
        with pytest.raises(GraphError):
            build_domain_lattice(ind, ((0, 0), (6, 6)), 1.0)
        return
    g = build_domain_lattice(ind, ((0, 0), (6, 6)), 1.0)
    # the builder keeps the largest interior-carrying component only
    assert lattice_coords(g) <= interior
    assert edge_coords(g) <= edges
    assert csgraph_components(g) == 1
    report = validate(g)
    assert report.admissible, report.violations
    assert np.all(g.degrees[g.interior_ids] == 4)
    if "disconnected" not in g.flags:
        assert lattice_coords(g) == interior


# -- Sinai graph --------------------------------------------------------------------


def test_sinai_removal_brute_force():
    g = build_sinai_graph(9, 1.0, (4, 4), 1.5)
    removed = {(i, j) for i in range(9) for j in range(9) if (i - 4) ** 2 + (j - 4) ** 2 < 1.5**2}
    # the points within 1.5 of (4, 4): the centre, four axis and four diagonal neighbours
    assert len(removed) == 9
    present = {(i, j) for i in range(9) for j in range(9)} - removed
    interior, edges = cell_oracle(present)
    assert lattice_coords(g) == interior
    assert edge_coords(g) == edges
    assert not lattice_coords(g, kinds=(INTERIOR, BOUNDARY, LEAD_PORT)) & removed


def test_tiny_disc_between_points_removes_nothing():
    g = build_sinai_graph(9, 1.0, (3.5, 4.5), 0.3)
    assert g == build_square_lattice(9, 9, 1.0)


def test_sinai_equals_domain_lattice():
    n, ell, c, r = 31, 0.2, (3.1, 2.7), 1.3
    a = build_sinai_graph(n, ell, c, r)
    side = (n - 1) * ell
    b = build_domain_lattice(sinai_indicator(side, c, r), ((0, 0), (side, side)), ell)
    assert a == b


@pytest.mark.parametrize(
    "centre,radius",
    [((2.0, 2.0), 10.0), ((-1.0, 2.0), 0.5), ((2.0, 9.0), 0.5), ((0.3, 2.0), 0.5)],
)
def test_sinai_bad_disc(centre, radius):
    with pytest.raises(GraphError):
        build_sinai_graph(9, 0.5, centre, radius)


def test_reference_sinai_graph():
    g = build_sinai_graph(97, 0.15, (8.0, 7.4), 2.7)
    report = validate(g)
    assert report.admissible
    assert report.N0 == 4
    assert report.ell0 == report.L0 == 0.15
    assert csgraph_components(g) == 1
    assert report.connected


# -- triangular lattice -------------------------------------------------------------


def hex_indicator(radius, spacing):
    def inside(p):
        j = p[1] / (math.sqrt(3) / 2 * spacing)
        i = p[0] / spacing - 0.5 * j
        i, j = round(i), round(j)
        return max(abs(i), abs(j), abs(i + j)) <= radius

    return inside


def test_hexagonal_patch():
    g = build_triangular_lattice(((-3, -3), (3, 3)), 1.0, indicator=hex_indicator(2, 1.0))
    centre = g.vertex_at((0.0, 0.0))
    assert g.degrees[centre] == 6
    assert g.n_interior == 7
    assert np.all(g.degrees[g.interior_ids] == 6)


def test_single_triangle_has_no_interior():
    tri = {triangular_position(*ij, 1.0) for ij in ((0, 0), (1, 0), (0, 1))}
    ind = lambda p: any(abs(p[0] - q[0]) < 1e-9 and abs(p[1] - q[1]) < 1e-9 for q in tri)
    with pytest.raises(GraphError):
        build_triangular_lattice(((-1, -1), (2, 2)), 1.0, indicator=ind)


def test_large_triangular_patch_degrees():
    g = build_triangular_lattice(((0, 0), (3, 3)), 0.1)
    hist = np.bincount(g.degrees[g.interior_ids])
    assert hist.nonzero()[0].tolist() == [6]
    assert set(g.degrees[[v.id for v in g.vertices if v.kind == BOUNDARY]]) == {1}


# -- invariants over every builder ----------------------------------------------------


BUILDS = [
    lambda: build_square_lattice(6, 8, 0.3),
    lambda: build_sinai_graph(21, 0.5, (5.0, 4.6), 2.2),
    lambda: build_triangular_lattice(((0, 0), (2, 2)), 0.2),
    lambda: build_chain(7, 0.4),
    lambda: build_domain_lattice(lambda p: p[0] ** 2 + p[1] ** 2 < 4, ((-2, -2, -2), (2, 2, 2)), 0.5),
]


@pytest.mark.parametrize("build", BUILDS)
def test_embedding_and_admissibility(build):
    g = build()
    for e in g.edges:
        dist = np.linalg.norm(g.positions[e.j] - g.positions[e.n])
        assert abs(dist - e.length) <= 1e-12
    report = validate(g)
    assert report.admissible, report.violations
    assert csgraph_components(g) == 1


def test_cubic_interior_degree():
    g = build_domain_lattice(lambda p: True, ((0, 0, 0), (1, 1, 1)), 0.25)
    assert g.n_interior == 27
    assert np.all(g.degrees[g.interior_ids] == 6)


# -- validation -----------------------------------------------------------------------


def test_validate_plain_lattice():
    r = validate(build_square_lattice(5, 5, 0.2))
    assert (r.ell0, r.L0, r.N0) == (0.2, 0.2, 4)
    assert r.violations == []


def test_validate_zero_length_edge():
    vs = (Vertex(0, (0.0,)), Vertex(1, (1.0,)))
    g = MetricGraph(vs, (Edge(0, 1, 0.0),), 1)
    r = validate(g)
    assert not r.admissible
    assert any(v.startswith("(ii)") for v in r.violations)


def test_validate_disconnected():
    vs = tuple(Vertex(i, (float(i),)) for i in range(4))
    g = MetricGraph(vs, (Edge(0, 1, 1.0), Edge(2, 3, 1.0)), 1)
    r = validate(g)
    assert not r.connected and not r.admissible


def test_parallel_edges_rejected():
    vs = (Vertex(0, (0.0,)), Vertex(1, (1.0,)))
    with pytest.raises(GraphError):
        MetricGraph(vs, (Edge(0, 1, 1.0), Edge(1, 0, 1.0)), 1)


# -- leads ----------------------------------------------------------------------------


def test_reference_leads():
    g = build_sinai_graph(97, 0.15, (8.0, 7.4), 2.7)
    g2 = attach_lead(attach_lead(g, (14, 40), "incoming"), (59, 80), "outgoing")
    ports = [lead.vertex for lead in g2.leads]
    assert [g2.vertices[p].position for p in ports] == [(14 * 0.15, 40 * 0.15), (59 * 0.15, 80 * 0.15)]
    assert all(g2.vertices[p].kind == LEAD_PORT for p in ports)
    # four lattice edges plus the lead enter the Kirchhoff sum
    for p in ports:
        assert len(g2.incident[p]) + sum(lead.vertex == p for lead in g2.leads) == 5
    assert validate(g2).admissible


def test_attach_detach_round_trip():
    g = build_square_lattice(5, 5, 1.0)
    g2 = attach_lead(g, (2, 2), "incoming")
    assert g2 != g
    assert detach_lead(g2, g2.leads[0].vertex) == g


def test_lead_errors():
    g = build_square_lattice(5, 5, 1.0)
    boundary = next(v.id for v in g.vertices if v.kind == BOUNDARY)
    with pytest.raises(GraphError):
        attach_lead(g, boundary, "incoming")
    g2 = attach_lead(g, (1, 1), "incoming")
    with pytest.raises(GraphError):
        attach_lead(g2, (1, 1), "outgoing")
    with pytest.raises(GraphError):
        attach_lead(g, (2, 2), "sideways")
    with pytest.raises(GraphError):
        attach_lead(g, (0, 0), "incoming")  # corner: not a vertex


# -- serialization --------------------------------------------------------------------


def test_json_round_trip_reference_graph():
    g = attach_lead(build_sinai_graph(41, 0.15, (3.1, 2.9), 1.1), (5, 7), "incoming")
    text = graph_to_json(g)
    assert graph_from_json(text) == g
    data = json.loads(text)
    assert set(data) == {"dimension", "spacing", "vertices", "edges", "leads"}
    assert data["edges"][0]["potential"] == {"type": "zero"}


finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_subnormal=True)
potentials = st.one_of(
    st.just(Potential()),
    finite.map(Potential.const),
    st.lists(finite, min_size=2, max_size=6).map(Potential.sampled),
)


@settings(max_examples=50, deadline=None)
@given(
    st.integers(min_value=2, max_value=6),
    st.data(),
)
def test_json_round_trip_is_lossless(n, data):
    pos = data.draw(st.lists(st.tuples(finite, finite), min_size=n, max_size=n, unique=True))
    alphas = data.draw(st.lists(finite, min_size=n, max_size=n))
    kinds = data.draw(st.lists(st.sampled_from([INTERIOR, BOUNDARY]), min_size=n, max_size=n))
    vertices = tuple(Vertex(i, p, k, a) for i, (p, k, a) in enumerate(zip(pos, kinds, alphas)))
    pairs = list(itertools.combinations(range(n), 2))
    chosen = data.draw(st.lists(st.sampled_from(pairs), min_size=1, unique=True))
    edges = tuple(
        Edge(a, b, data.draw(st.floats(min_value=1e-9, max_value=1e9)), data.draw(potentials)) for a, b in chosen
    )
    spacing = data.draw(st.one_of(st.none(), st.floats(min_value=1e-6, max_value=1e6)))
    g = MetricGraph(vertices, edges, 2, spacing)
    assert graph_from_json(graph_to_json(g)) == g

"""Embedded metric graphs: data model, lattice builders, validation, JSON I/O."""
from __future__ import annotations

import itertools
import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np

INTERIOR = "interior"
BOUNDARY = "boundary"
LEAD_PORT = "lead-port"
VERTEX_KINDS = (INTERIOR, BOUNDARY, LEAD_PORT)

INCOMING = "incoming"
OUTGOING = "outgoing"

_EMBED_TOL = 1e-12


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Potential:
    """Edge potential: ``zero``, ``const`` (``value``) or ``samples``.

    Samples are equispaced over the edge coordinate, which runs from the
    second stored endpoint (x = 0) to the first (x = length).
    """

    kind: str = "zero"
    value: float = 0.0
    samples: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in ("zero", "const", "samples"):
            raise GraphError(f"unknown potential kind {self.kind!r}")
        if self.kind == "samples" and len(self.samples) < 2:
            raise GraphError("sampled potential needs at least two samples")

    @classmethod
    def const(cls, value: float) -> "Potential":
        return cls("const", float(value))

    @classmethod
    def sampled(cls, values: Iterable[float]) -> "Potential":
        return cls("samples", 0.0, tuple(float(v) for v in values))

    @property
    def is_free(self) -> bool:
        return self.kind == "zero" or (self.kind == "const" and self.value == 0.0)

    def bound(self) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "const":
            return abs(self.value)
        return max(abs(s) for s in self.samples)

    def reversed(self) -> "Potential":
        if self.kind != "samples":
            return self
        return Potential("samples", 0.0, self.samples[::-1])

    def evaluate(self, x: np.ndarray, length: float) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(x)
        if self.kind == "const":
            return np.full_like(x, self.value)
        grid = np.linspace(0.0, length, len(self.samples))
        return np.interp(x, grid, self.samples)


ZERO = Potential()


@dataclass(frozen=True)
class Vertex:
    id: int
    position: tuple[float, ...]
    kind: str = INTERIOR
    alpha: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in VERTEX_KINDS:
            raise GraphError(f"unknown vertex kind {self.kind!r}")
        if not math.isfinite(self.alpha):
            raise GraphError(f"vertex {self.id}: coupling must be finite (Dirichlet decoupling is not supported)")

    @property
    def is_interior(self) -> bool:
        return self.kind != BOUNDARY


@dataclass(frozen=True)
class Edge:
    j: int
    n: int
    length: float
    potential: Potential = ZERO

    @property
    def endpoints(self) -> tuple[int, int]:
        return (self.j, self.n)


@dataclass(frozen=True)
class Lead:
    vertex: int
    direction: str

    def __post_init__(self) -> None:
        if self.direction not in (INCOMING, OUTGOING):
            raise GraphError(f"lead direction must be incoming or outgoing, got {self.direction!r}")


@dataclass(frozen=True)
class MetricGraph:
    """Immutable metric graph embedded in R^dimension.

    Vertex ids are their positions in ``vertices``. Boundary vertices carry
    a Dirichlet condition; every other vertex carries a delta coupling.
    """

    vertices: tuple[Vertex, ...]
    edges: tuple[Edge, ...]
    dimension: int
    spacing: float | None = None
    leads: tuple[Lead, ...] = ()
    flags: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        if self.dimension not in (1, 2, 3):
            raise GraphError("dimension must be 1, 2 or 3")
        for i, v in enumerate(self.vertices):
            if v.id != i:
                raise GraphError(f"vertex ids must be 0..n-1 in order (got {v.id} at {i})")
            if len(v.position) != self.dimension:
                raise GraphError(f"vertex {i} position has wrong dimension")
        nv = len(self.vertices)
        seen = set()
        for e in self.edges:
            if not (0 <= e.j < nv and 0 <= e.n < nv) or e.j == e.n:
                raise GraphError(f"edge {e.endpoints} has invalid endpoints")
            key = frozenset(e.endpoints)
            if key in seen:
                raise GraphError(f"parallel edge between {e.j} and {e.n}")
            seen.add(key)
        for lead in self.leads:
            if not 0 <= lead.vertex < nv:
                raise GraphError(f"lead on unknown vertex {lead.vertex}")

    # -- derived views (cached; the graph never changes) --------------------

    @cached_property
    def positions(self) -> np.ndarray:
        return np.array([v.position for v in self.vertices], dtype=float).reshape(len(self.vertices), self.dimension)

    @cached_property
    def incident(self) -> tuple[tuple[int, ...], ...]:
        """Edge indices incident to each vertex."""
        inc: list[list[int]] = [[] for _ in self.vertices]
        for idx, e in enumerate(self.edges):
            inc[e.j].append(idx)
            inc[e.n].append(idx)
        return tuple(tuple(x) for x in inc)

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.array([len(x) for x in self.incident], dtype=int)

    @cached_property
    def interior_ids(self) -> np.ndarray:
        return np.array([v.id for v in self.vertices if v.is_interior], dtype=int)

    @cached_property
    def interior_index(self) -> dict[int, int]:
        return {int(vid): row for row, vid in enumerate(self.interior_ids)}

    @cached_property
    def alphas(self) -> np.ndarray:
        return np.array([v.alpha for v in self.vertices], dtype=float)

    @property
    def n_interior(self) -> int:
        return len(self.interior_ids)

    def neighbor(self, edge_index: int, vertex: int) -> int:
        e = self.edges[edge_index]
        return e.n if e.j == vertex else e.j

    def is_equilateral(self) -> bool:
        if not self.edges:
            return True
        lengths = np.array([e.length for e in self.edges])
        return bool(np.all(lengths == lengths[0]))

    def is_free(self) -> bool:
        return all(e.potential.kind == "zero" for e in self.edges)

    def vertex_at(self, position: Sequence[float], *, interior_only: bool = True, tol: float = 1e-9) -> int:
        """Id of the vertex at ``position`` (interior vertices only by default)."""
        target = np.asarray(position, dtype=float)
        d = np.linalg.norm(self.positions - target, axis=1)
        candidates = [i for i in np.flatnonzero(d <= tol) if not interior_only or self.vertices[i].is_interior]
        if not candidates:
            raise GraphError(f"no {'interior ' if interior_only else ''}vertex at {tuple(position)}")
        return int(candidates[0])

    def lattice_vertex(self, coords: Sequence[int]) -> int:
        """Interior vertex at integer lattice coordinates of a cubic lattice."""
        if self.spacing is None:
            raise GraphError("lattice coordinates need a uniform spacing")
        return self.vertex_at([c * self.spacing for c in coords])

    def components(self) -> list[list[int]]:
        seen = np.zeros(len(self.vertices), dtype=bool)
        comps = []
        for start in range(len(self.vertices)):
            if seen[start]:
                continue
            comp = [start]
            seen[start] = True
            queue = deque([start])
            while queue:
                v = queue.popleft()
                for ei in self.incident[v]:
                    w = self.neighbor(ei, v)
                    if not seen[w]:
                        seen[w] = True
                        comp.append(w)
                        queue.append(w)
            comps.append(sorted(comp))
        return comps

    def is_connected(self) -> bool:
        return len(self.components()) <= 1


# -- validation ---------------------------------------------------------------


@dataclass
class ValidationReport:
    ell0: float | None
    L0: float | None
    N0: int
    connected: bool
    violations: list[str] = field(default_factory=list)

    @property
    def admissible(self) -> bool:
        return not self.violations


def validate(graph: MetricGraph) -> ValidationReport:
    violations: list[str] = []
    lengths = np.array([e.length for e in graph.edges], dtype=float)
    ell0 = float(lengths.min()) if lengths.size else None
    L0 = float(lengths.max()) if lengths.size else None
    N0 = int(graph.degrees.max()) if len(graph.vertices) else 0
    connected = graph.is_connected()

    for idx, e in enumerate(graph.edges):
        if not e.length > 0:
            violations.append(f"(ii) edge {idx} {e.endpoints} has nonpositive length {e.length!r}")
        elif not math.isfinite(e.length):
            violations.append(f"(iii) edge {idx} {e.endpoints} has unbounded length")
        if not math.isfinite(e.potential.bound()):
            violations.append(f"(i) edge {idx} {e.endpoints} has an unbounded potential")
        dist = float(np.linalg.norm(graph.positions[e.j] - graph.positions[e.n]))
        if graph.spacing is not None and abs(dist - e.length) > _EMBED_TOL * max(1.0, e.length):
            violations.append(f"edge {idx} {e.endpoints}: length {e.length!r} differs from embedded distance {dist!r}")
    for v in graph.vertices:
        deg = graph.degrees[v.id]
        if v.kind == BOUNDARY and deg != 1:
            violations.append(f"boundary vertex {v.id} has degree {deg}, expected 1")
        if v.is_interior and deg == 0 and len(graph.vertices) > 1:
            violations.append(f"interior vertex {v.id} is isolated")
    lead_vertices = [lead.vertex for lead in graph.leads]
    for vid in lead_vertices:
        if graph.vertices[vid].kind != LEAD_PORT:
            violations.append(f"lead attached to vertex {vid} which is not marked lead-port")
    if len(set(lead_vertices)) != len(lead_vertices):
        violations.append("more than one lead on a vertex")
    if not connected:
        violations.append("graph is not connected")
    return ValidationReport(ell0=ell0, L0=L0, N0=N0, connected=connected, violations=violations)


# -- lattice builders ---------------------------------------------------------

AlphaFn = Callable[[tuple[float, ...]], float] | float | None


def _alpha_callable(alpha_fn: AlphaFn) -> Callable[[tuple[float, ...]], float]:
    if alpha_fn is None:
        return lambda _p: 0.0
    if callable(alpha_fn):
        return alpha_fn
    value = float(alpha_fn)
    return lambda _p: value


def _restricted_lattice(
    present: dict[tuple[int, ...], tuple[float, ...]],
    cells: Sequence[Sequence[tuple[int, ...]]],
    neighbor_offsets: Sequence[tuple[int, ...]],
    full_vertex_cells: int,
    full_edge_cells: int,
    spacing: float,
    dimension: int,
    alpha_fn: AlphaFn,
) -> MetricGraph:
    """Lattice restricted to ``present`` points, with boundary edges of the
    cell union deleted and boundary points split into one copy per edge."""
    alpha = _alpha_callable(alpha_fn)
    offsets = {tuple(o) for o in neighbor_offsets} | {tuple(-x for x in o) for o in neighbor_offsets}

    vertex_cells: dict[tuple[int, ...], int] = {}
    edge_cells: dict[tuple[tuple[int, ...], tuple[int, ...]], int] = {}
    for anchor in present:
        for shape in cells:
            members = [tuple(a + s for a, s in zip(anchor, off)) for off in shape]
            if not all(m in present for m in members):
                continue
            for m in members:
                vertex_cells[m] = vertex_cells.get(m, 0) + 1
            for a, b in itertools.combinations(members, 2):
                if tuple(x - y for x, y in zip(b, a)) in offsets:
                    key = (a, b) if a < b else (b, a)
                    edge_cells[key] = edge_cells.get(key, 0) + 1

    kept = sorted(key for key, count in edge_cells.items() if count == full_edge_cells)
    by_point: dict[tuple[int, ...], list[tuple[tuple[int, ...], tuple[int, ...]]]] = {}
    for key in kept:
        by_point.setdefault(key[0], []).append(key)
        by_point.setdefault(key[1], []).append(key)

    # vertex id per (point, edge); interior points share one id for all edges
    slot: dict[tuple[tuple[int, ...], tuple], int] = {}
    raw_vertices: list[tuple[tuple[float, ...], str, float]] = []
    for point in sorted(by_point):
        pos = present[point]
        if vertex_cells.get(point, 0) == full_vertex_cells:
            vid = len(raw_vertices)
            raw_vertices.append((pos, INTERIOR, float(alpha(pos))))
            for key in by_point[point]:
                slot[(point, key)] = vid
        else:
            for key in by_point[point]:
                slot[(point, key)] = len(raw_vertices)
                raw_vertices.append((pos, BOUNDARY, 0.0))
    raw_edges = [(slot[(a, key)], slot[(b, key)]) for key in kept for a, b in [key]]
    return _assemble(raw_vertices, raw_edges, spacing, dimension)


def _assemble(raw_vertices, raw_edges, spacing: float, dimension: int) -> MetricGraph:
    """Build the graph, keeping the largest component that has an interior vertex."""
    adj: list[list[int]] = [[] for _ in raw_vertices]
    for a, b in raw_edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = [False] * len(raw_vertices)
    comps = []
    for s in range(len(raw_vertices)):
        if seen[s]:
            continue
        seen[s] = True
        comp, queue = [s], deque([s])
        while queue:
            v = queue.popleft()
            for w in adj[v]:
                if not seen[w]:
                    seen[w] = True
                    comp.append(w)
                    queue.append(w)
        comps.append(sorted(comp))
    with_interior = [c for c in comps if any(raw_vertices[v][1] == INTERIOR for v in c)]
    if not with_interior:
        raise GraphError("lattice restriction has no interior vertex")
    flags: tuple[str, ...] = ()
    # pieces made only of Dirichlet vertices carry no unknowns and drop silently
    keep = max(with_interior, key=len)
    if len(with_interior) > 1:
        flags = ("disconnected",)
    new_id = {old: new for new, old in enumerate(keep)}
    vertices = tuple(
        Vertex(new_id[old], tuple(float(c) for c in raw_vertices[old][0]), raw_vertices[old][1], raw_vertices[old][2])
        for old in keep
    )
    edges = []
    for a, b in raw_edges:
        if a in new_id:
            j, n = sorted((new_id[a], new_id[b]))
            length = float(np.linalg.norm(np.subtract(vertices[j].position, vertices[n].position)))
            if abs(length - spacing) <= _EMBED_TOL * max(1.0, spacing):
                length = float(spacing)
            edges.append(Edge(j, n, length))
    edges.sort(key=lambda e: (e.j, e.n))
    return MetricGraph(vertices, tuple(edges), dimension, float(spacing), flags=flags)


def _check_spacing(spacing: float) -> None:
    if not (isinstance(spacing, (int, float)) and math.isfinite(spacing) and spacing > 0):
        raise GraphError(f"spacing must be positive and finite, got {spacing!r}")


def _cubic_cells(dimension: int):
    corners = list(itertools.product((0, 1), repeat=dimension))
    unit = [tuple(int(i == d) for i in range(dimension)) for d in range(dimension)]
    return [corners], unit, 2 ** dimension, 2 ** (dimension - 1)


def build_domain_lattice(
    indicator: Callable[[tuple[float, ...]], bool],
    bbox: tuple[Sequence[float], Sequence[float]],
    spacing: float,
    alpha_fn: AlphaFn = None,
) -> MetricGraph:
    """Cubic lattice (spacing * Z^nu) restricted to the points where ``indicator`` holds.

    Edges lying on the boundary of the union of full lattice cells are
    removed; a point on that boundary becomes one Dirichlet vertex per
    remaining incident edge.
    """
    _check_spacing(spacing)
    lo, hi = (np.asarray(b, dtype=float) for b in bbox)
    if lo.shape != hi.shape or lo.ndim != 1 or not 1 <= lo.size <= 3:
        raise GraphError("bounding box must be a pair of 1-, 2- or 3-vectors")
    if np.any(hi <= lo):
        raise GraphError("degenerate bounding box")
    dim = lo.size
    ranges = [range(math.ceil(a / spacing - 1e-9), math.floor(b / spacing + 1e-9) + 1) for a, b in zip(lo, hi)]
    present = {}
    for coords in itertools.product(*ranges):
        pos = tuple(c * spacing for c in coords)
        if indicator(pos):
            present[coords] = pos
    if not present:
        raise GraphError("indicator selects no lattice point")
    cells, unit, fv, fe = _cubic_cells(dim)
    return _restricted_lattice(present, cells, unit, fv, fe, spacing, dim, alpha_fn)


def build_square_lattice(n_rows: int, n_cols: int, spacing: float, alpha_fn: AlphaFn = None) -> MetricGraph:
    """Full ``n_cols x n_rows`` square lattice with Dirichlet perimeter.

    Vertex (i, j) sits at (i * spacing, j * spacing). Perimeter points become
    degree-one boundary vertices; corners drop out.
    """
    _check_spacing(spacing)
    if n_rows < 3 or n_cols < 3:
        # n = 2 has no interior point at all
        raise GraphError(f"degenerate extent {n_rows}x{n_cols}: need at least 3 points per side")
    present = {(i, j): (i * spacing, j * spacing) for i in range(n_cols) for j in range(n_rows)}
    cells, unit, fv, fe = _cubic_cells(2)
    return _restricted_lattice(present, cells, unit, fv, fe, spacing, 2, alpha_fn)


def build_chain(n_points: int, spacing: float, alpha_fn: AlphaFn = None) -> MetricGraph:
    """Equilateral 1D chain 0..n_points-1 with Dirichlet ends."""
    _check_spacing(spacing)
    if n_points < 3:
        raise GraphError("a chain needs at least 3 points to have an interior vertex")
    present = {(i,): (i * spacing,) for i in range(n_points)}
    cells, unit, fv, fe = _cubic_cells(1)
    return _restricted_lattice(present, cells, unit, fv, fe, spacing, 1, alpha_fn)


def sinai_indicator(side: float, disc_center: Sequence[float], disc_radius: float):
    cx, cy = (float(c) for c in disc_center)
    r2 = float(disc_radius) ** 2
    eps = 1e-12 * max(1.0, side)

    def inside(p: tuple[float, ...]) -> bool:
        x, y = p
        in_square = -eps <= x <= side + eps and -eps <= y <= side + eps
        return in_square and (x - cx) ** 2 + (y - cy) ** 2 >= r2

    return inside


def build_sinai_graph(
    n: int,
    spacing: float,
    disc_center: Sequence[float],
    disc_radius: float,
    alpha_fn: AlphaFn = None,
) -> MetricGraph:
    """``n x n`` square lattice with the lattice points strictly inside a disc removed."""
    _check_spacing(spacing)
    if n < 3:
        raise GraphError("n must be at least 3")
    if not disc_radius > 0:
        raise GraphError("disc radius must be positive")
    side = (n - 1) * spacing
    cx, cy = (float(c) for c in disc_center)
    if all((x - cx) ** 2 + (y - cy) ** 2 < disc_radius**2 for x in (0, side) for y in (0, side)):
        raise GraphError("disc covers the whole square")
    if not (0 < cx < side and 0 < cy < side):
        raise GraphError("disc center lies outside the square")
    if min(cx, cy, side - cx, side - cy) <= disc_radius:
        raise GraphError("disc must lie strictly inside the square")
    return build_domain_lattice(sinai_indicator(side, (cx, cy), disc_radius), ((0.0, 0.0), (side, side)), spacing, alpha_fn)


_SQRT3_2 = math.sqrt(3.0) / 2.0


def triangular_position(i: int, j: int, spacing: float) -> tuple[float, float]:
    return ((i + 0.5 * j) * spacing, j * _SQRT3_2 * spacing)


def build_triangular_lattice(
    extent: tuple[Sequence[float], Sequence[float]],
    spacing: float,
    alpha_fn: AlphaFn = None,
    indicator: Callable[[tuple[float, ...]], bool] | None = None,
) -> MetricGraph:
    """Triangular lattice inside the box ``extent`` (optionally cut by ``indicator``).

    Points are (i + j/2, j*sqrt(3)/2) * spacing; same boundary rules as the
    cubic builders, with triangles as cells.
    """
    _check_spacing(spacing)
    (x0, y0), (x1, y1) = (tuple(map(float, p)) for p in extent)
    if x1 <= x0 or y1 <= y0:
        raise GraphError("degenerate extent")
    eps = 1e-9 * spacing
    present = {}
    h = _SQRT3_2 * spacing
    for j in range(math.ceil(y0 / h - 1e-9), math.floor(y1 / h + 1e-9) + 1):
        shift = 0.5 * j
        for i in range(math.ceil(x0 / spacing - shift - 1e-9), math.floor(x1 / spacing - shift + 1e-9) + 1):
            pos = triangular_position(i, j, spacing)
            if not (x0 - eps <= pos[0] <= x1 + eps and y0 - eps <= pos[1] <= y1 + eps):
                continue
            if indicator is None or indicator(pos):
                present[(i, j)] = pos
    # anchored at a member vertex: up triangles at the lower left, down triangles at the bottom
    cells = [[(0, 0), (1, 0), (0, 1)], [(0, 0), (0, 1), (-1, 1)]]
    offsets = [(1, 0), (0, 1), (1, -1)]
    return _restricted_lattice(present, cells, offsets, 6, 2, spacing, 2, alpha_fn)


# -- leads ----------------------------------------------------------------------


def attach_lead(graph: MetricGraph, vertex: int | Sequence[int], direction: str) -> MetricGraph:
    """Attach a semi-infinite free lead at an interior vertex.

    ``vertex`` is a vertex id or integer lattice coordinates.
    """
    vid = int(vertex) if isinstance(vertex, (int, np.integer)) else graph.lattice_vertex(vertex)
    v = graph.vertices[vid]
    if v.kind == BOUNDARY:
        raise GraphError(f"vertex {vid} is a boundary vertex")
    if any(lead.vertex == vid for lead in graph.leads):
        raise GraphError(f"vertex {vid} already carries a lead")
    vertices = list(graph.vertices)
    vertices[vid] = replace(v, kind=LEAD_PORT)
    return replace(graph, vertices=tuple(vertices), leads=graph.leads + (Lead(vid, direction),))


def detach_lead(graph: MetricGraph, vertex: int) -> MetricGraph:
    if not any(lead.vertex == vertex for lead in graph.leads):
        raise GraphError(f"vertex {vertex} carries no lead")
    vertices = list(graph.vertices)
    vertices[vertex] = replace(vertices[vertex], kind=INTERIOR)
    leads = tuple(lead for lead in graph.leads if lead.vertex != vertex)
    return replace(graph, vertices=tuple(vertices), leads=leads)


# -- serialization --------------------------------------------------------------


def _potential_to_dict(p: Potential) -> dict:
    if p.kind == "zero":
        return {"type": "zero"}
    if p.kind == "const":
        return {"type": "const", "value": p.value}
    return {"type": "samples", "values": list(p.samples)}


def _potential_from_dict(d: dict) -> Potential:
    kind = d["type"]
    if kind == "zero":
        return ZERO
    if kind == "const":
        return Potential.const(d["value"])
    if kind == "samples":
        return Potential.sampled(d["values"])
    raise GraphError(f"unknown potential type {kind!r}")


def graph_to_dict(graph: MetricGraph) -> dict:
    return {
        "dimension": graph.dimension,
        "spacing": graph.spacing,
        "vertices": [
            {"id": v.id, "pos": list(v.position), "kind": v.kind, "alpha": v.alpha} for v in graph.vertices
        ],
        "edges": [
            {"j": e.j, "n": e.n, "length": e.length, "potential": _potential_to_dict(e.potential)}
            for e in graph.edges
        ],
        "leads": [{"vertex": lead.vertex, "direction": lead.direction} for lead in graph.leads],
    }


def graph_from_dict(data: dict) -> MetricGraph:
    vertices = tuple(
        Vertex(int(v["id"]), tuple(float(c) for c in v["pos"]), v["kind"], float(v["alpha"])) for v in data["vertices"]
    )
    edges = tuple(
        Edge(int(e["j"]), int(e["n"]), float(e["length"]), _potential_from_dict(e.get("potential", {"type": "zero"})))
        for e in data["edges"]
    )
    leads = tuple(Lead(int(lead["vertex"]), lead["direction"]) for lead in data.get("leads", []))
    spacing = data.get("spacing")
    return MetricGraph(vertices, edges, int(data["dimension"]), None if spacing is None else float(spacing), leads)


def graph_to_json(graph: MetricGraph) -> str:
    # json emits floats with repr(), the shortest round-trip form
    return json.dumps(graph_to_dict(graph), separators=(",", ":"))


def graph_from_json(text: str) -> MetricGraph:
    return graph_from_dict(json.loads(text))

"""Nodal domains, graph/billiard field comparison and convergence studies."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .billiard import BilliardGrid, continuum_current
from .graph import MetricGraph, build_square_lattice
from .spectral import adjacency_eigen_path


class UnionFind:
    """Disjoint sets with path halving and union by size."""

    def __init__(self, size: int):
        self.parent = list(range(size))
        self.size = [1] * size

    def find(self, a: int) -> int:
        parent = self.parent
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]


@dataclass
class NodalPartition:
    labels: np.ndarray  # per vertex; -1 where the value is zero or on the boundary
    count: int
    sign_map: np.ndarray  # per vertex in {-1, 0, 1}


def nodal_domains(graph: MetricGraph, vertex_vector: Sequence[float], zero_tol: float | None = None) -> NodalPartition:
    """Maximal connected sets of interior vertices on which the vector keeps one sign.

    Values with magnitude <= ``zero_tol`` (default 1e-12 * max |value|) count
    as zero and belong to no domain.
    """
    values = np.asarray(vertex_vector)
    if np.iscomplexobj(values):
        if np.any(values.imag):
            raise ValueError("nodal domains need a real vector")
        values = values.real
    if values.shape != (graph.n_interior,):
        raise ValueError(f"expected {graph.n_interior} interior values")
    if zero_tol is None:
        zero_tol = 1e-12 * (np.max(np.abs(values)) if values.size else 0.0)
    signs = np.where(np.abs(values) <= zero_tol, 0, np.sign(values)).astype(int)
    sign_map = np.zeros(len(graph.vertices), dtype=int)
    sign_map[graph.interior_ids] = signs

    uf = UnionFind(len(graph.vertices))
    for e in graph.edges:
        s = sign_map[e.j]
        if s != 0 and s == sign_map[e.n]:
            uf.union(e.j, e.n)
    labels = np.full(len(graph.vertices), -1, dtype=int)
    roots: dict[int, int] = {}
    for vid in graph.interior_ids:
        if sign_map[vid] == 0:
            continue
        root = uf.find(int(vid))
        labels[vid] = roots.setdefault(root, len(roots))
    return NodalPartition(labels, len(roots), sign_map)


# -- field comparison ----------------------------------------------------------------


@dataclass
class GraphField:
    """Complex values and current vectors at embedded graph vertices."""

    positions: np.ndarray
    values: np.ndarray
    currents: np.ndarray

    @classmethod
    def from_scattering(cls, solution) -> "GraphField":
        g = solution.graph
        ids = g.interior_ids
        return cls(g.positions[ids], np.asarray(solution.vertex_values), solution.vertex_current_field[ids])

    @classmethod
    def from_vector(cls, graph: MetricGraph, vector: Sequence[complex]) -> "GraphField":
        ids = graph.interior_ids
        return cls(graph.positions[ids], np.asarray(vector, dtype=complex), np.zeros((len(ids), graph.dimension)))


@dataclass
class ComparisonReport:
    correlation: float
    current_alignment: float
    n_points: int
    norms: tuple[float, float]
    current_points: int = 0

    def to_dict(self) -> dict:
        return {
            "correlation": self.correlation,
            "current_alignment": self.current_alignment,
            "n_points": self.n_points,
            "current_points": self.current_points,
            "norms": list(self.norms),
        }


def _sample(source, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(source, BilliardGrid):
        return source.sample(points), continuum_current(source).sample(points)
    if isinstance(source, GraphField):
        if source.positions.shape != points.shape or not np.allclose(source.positions, points, atol=1e-9):
            raise ValueError("geometry mismatch between compared fields")
        return source.values, source.currents
    raise TypeError(f"cannot compare {type(source).__name__}")


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = math.sqrt(float(a @ a) * float(b @ b))
    return float(a @ b) / denom if denom > 0 else 0.0


def compare_fields(
    first,
    second,
    *,
    exclude: Sequence[Sequence[float]] = (),
    exclude_radius: float = 0.0,
) -> ComparisonReport:
    """Density correlation and current alignment of two fields at graph vertices.

    At least one argument must be a :class:`GraphField`; its vertex positions
    are the sample points, and a billiard field is interpolated bilinearly
    there. Densities |psi|^2 are scaled to unit maximum and compared by the
    Pearson coefficient; currents by the mean cosine between vectors that are
    both nonzero. Points within ``exclude_radius`` of any ``exclude`` point
    (lead junctions, where both fields are singular) are left out.
    """
    ref = first if isinstance(first, GraphField) else second
    if not isinstance(ref, GraphField):
        raise TypeError("at least one field must live on graph vertices")
    points = ref.positions
    va, ja = _sample(first, points)
    vb, jb = _sample(second, points)
    keep = np.ones(len(points), dtype=bool)
    for p in exclude:
        keep &= np.linalg.norm(points - np.asarray(p, dtype=float), axis=1) > exclude_radius
    da = np.abs(va[keep]) ** 2
    db = np.abs(vb[keep]) ** 2
    na, nb = float(da.max()), float(db.max())
    corr = _pearson(da / (na or 1.0), db / (nb or 1.0))

    ja, jb = ja[keep], jb[keep]
    ma, mb = np.linalg.norm(ja, axis=1), np.linalg.norm(jb, axis=1)
    live = (ma > 1e-12 * (ma.max() if ma.size else 0)) & (mb > 1e-12 * (mb.max() if mb.size else 0)) & (ma > 0) & (mb > 0)
    if live.any():
        cos = np.sum(ja[live] * jb[live], axis=1) / (ma[live] * mb[live])
        align = float(np.mean(cos))
    else:
        align = 0.0
    return ComparisonReport(corr, align, int(keep.sum()), (math.sqrt(na), math.sqrt(nb)), int(live.sum()))


# -- convergence ---------------------------------------------------------------------


@dataclass
class ConvergenceReport:
    spacings: list[float]
    errors: list[float]
    energies: list[float]
    reference: float
    observed_order: float | None
    ratios: list[float]
    monotone: bool
    eps_residual: list[np.ndarray] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "spacings": self.spacings,
            "energies": self.energies,
            "errors": self.errors,
            "reference": self.reference,
            "ratios": self.ratios,
            "observed_order": self.observed_order,
            "monotone": self.monotone,
            "eps_max": [float(np.max(np.abs(e))) for e in self.eps_residual],
        }


def square_lattice_family(side: float = 1.0) -> Callable[[float], MetricGraph]:
    def build(spacing: float) -> MetricGraph:
        m = round(side / spacing)
        return build_square_lattice(m + 1, m + 1, side / m)

    return build


def convergence_study(
    geometry: Callable[[float], MetricGraph],
    spacings: Sequence[float],
    reference: float,
    *,
    mode: int = 0,
    reference_field: Callable[[np.ndarray], np.ndarray] | None = None,
) -> ConvergenceReport:
    """Continuum energy nu k^2 of eigenvalue cluster ``mode`` against ``reference``.

    ``geometry`` maps a spacing to a lattice graph. The order is the
    least-squares slope of log error against log spacing, reported only when
    the errors decrease strictly.
    """
    spacings = [float(s) for s in spacings]
    if len(spacings) < 3:
        raise ValueError("need at least three spacings")
    if any(b >= a for a, b in zip(spacings, spacings[1:])):
        raise ValueError("spacings must decrease strictly")
    errors, energies, eps = [], [], []
    for ell in spacings:
        graph = geometry(ell)
        results = adjacency_eigen_path(graph, count=mode + 4)
        res = results[mode]
        energies.append(res.energy_continuum)
        errors.append(abs(res.energy_continuum - reference))
        if reference_field is not None and res.multiplicity == 1:
            target = np.asarray(reference_field(graph.positions[graph.interior_ids]), dtype=float)
            vec = res.vertex_vector
            scale = float(target @ vec) / float(vec @ vec)
            eps.append(target - scale * vec)
    if not all(math.isfinite(e) for e in errors):
        raise ValueError("non-finite convergence error")
    ratios = [a / b if b > 0 else math.inf for a, b in zip(errors, errors[1:])]
    monotone = all(b < a for a, b in zip(errors, errors[1:])) and errors[-1] > 0
    order = None
    if monotone:
        order = float(np.polyfit(np.log(spacings), np.log(errors), 1)[0])
    return ConvergenceReport(spacings, errors, energies, float(reference), order, ratios, monotone, eps)

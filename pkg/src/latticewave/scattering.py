"""Open graphs: semi-infinite free leads attached at lead-port vertices.

The incoming lead carries exp(-ikx) + r exp(ikx), an outgoing lead
t exp(ikx), with x = 0 at the junction and x growing away from the graph.
Continuity gives r = psi_p - 1 and t = psi_p; the lead's outward derivative
enters the vertex Kirchhoff sum, which turns the dual row at the port into

    (dual row)_p - i k psi_p = -2 i k   (incoming),   0 (outgoing).
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .edges import (
    DualSystem,
    EdgeWave,
    SingularMomentumError,
    assemble_dual,
    default_tau,
    full_vertex_values,
    reconstruct,
    singular_set_distance,
)
from .graph import INCOMING, OUTGOING, Lead, MetricGraph


class ScatteringError(ValueError):
    pass


@dataclass(frozen=True)
class LeadState:
    vertex: int
    direction: str
    amplitude_in: complex
    amplitude_out: complex

    @property
    def current_into_graph(self) -> float:
        # lead current along +x (away from the graph) is k(|out|^2 - |in|^2)
        return abs(self.amplitude_in) ** 2 - abs(self.amplitude_out) ** 2


@dataclass
class ScatteringSolution:
    k: float
    graph: MetricGraph
    vertex_values: np.ndarray
    leads: list[LeadState]
    edge_waves: list[EdgeWave]
    edge_currents: np.ndarray
    vertex_current_field: np.ndarray
    system: DualSystem

    @property
    def r(self) -> complex:
        return next(s.amplitude_out for s in self.leads if s.direction == INCOMING)

    @property
    def t(self) -> complex:
        outs = [s.amplitude_out for s in self.leads if s.direction != INCOMING]
        return outs[0] if outs else 0j

    @property
    def transmission(self) -> float:
        return float(sum(abs(s.amplitude_out) ** 2 for s in self.leads if s.direction != INCOMING))

    @property
    def reflection(self) -> float:
        return float(abs(self.r) ** 2)

    @property
    def flux_error(self) -> float:
        return abs(1.0 - self.reflection - self.transmission)

    @property
    def positions(self) -> np.ndarray:
        return self.graph.positions

    def full_values(self) -> np.ndarray:
        return full_vertex_values(self.graph, self.vertex_values)

    def to_dict(self) -> dict:
        r, t = complex(self.r), complex(self.t)
        return {"k": self.k, "r": [r.real, r.imag], "t": [t.real, t.imag], "flux_error": self.flux_error}


def edge_current(wave: EdgeWave, x: float | None = None) -> float:
    """Current Im(conj(psi) psi') along the stored orientation j -> n.

    The edge coordinate grows from n towards j, hence the sign flip. On a
    free edge the value does not depend on ``x`` (default: the midpoint).
    """
    if x is None:
        x = 0.5 * wave.edge.length
    psi = complex(wave.value(x))
    dpsi = complex(wave.deriv(x))
    return -float((psi.conjugate() * dpsi).imag)


def vertex_current_field(graph: MetricGraph, currents: Sequence[float]) -> np.ndarray:
    """Vector sum of edge currents at each vertex, halved so that a straight
    chain carrying current J shows magnitude J."""
    field = np.zeros((len(graph.vertices), graph.dimension))
    pos = graph.positions
    for idx, e in enumerate(graph.edges):
        d = pos[e.n] - pos[e.j]
        norm = np.linalg.norm(d)
        if norm == 0:
            continue
        flow = currents[idx] * d / norm
        field[e.j] += 0.5 * flow
        field[e.n] += 0.5 * flow
    return field


def vertex_current_sums(graph: MetricGraph, currents: Sequence[float]) -> np.ndarray:
    """Net current leaving each vertex through its edges."""
    out = np.zeros(len(graph.vertices))
    for idx, e in enumerate(graph.edges):
        out[e.j] += currents[idx]
        out[e.n] -= currents[idx]
    return out


def scattering_system(graph: MetricGraph, k: float, *, tau: float | None = None) -> DualSystem:
    incoming = [lead for lead in graph.leads if lead.direction == INCOMING]
    if len(incoming) != 1:
        raise ScatteringError(f"need exactly one incoming lead, found {len(incoming)}")
    k = float(k)
    if not k > 0:
        raise ScatteringError("scattering needs a real positive momentum")
    base = assemble_dual(graph, k, tau=tau)
    index = graph.interior_index
    n = base.size
    shift = np.zeros(n, dtype=complex)
    rhs = np.zeros(n, dtype=complex)
    for lead in graph.leads:
        row = index[lead.vertex]
        shift[row] -= 1j * k
        if lead.direction == INCOMING:
            rhs[row] = -2j * k
    matrix = sparse.csr_matrix(base.matrix.astype(complex) + sparse.diags(shift))
    return replace(base, matrix=matrix, rhs=rhs)


def solve_scattering(graph: MetricGraph, k: float, *, tau: float | None = None) -> ScatteringSolution:
    system = scattering_system(graph, k, tau=tau)
    try:
        lu = spla.splu(sparse.csc_matrix(system.matrix))
        values = lu.solve(system.rhs)
    except RuntimeError as exc:
        raise ScatteringError(f"scattering system is singular at k = {k}") from exc
    if not np.all(np.isfinite(values)):
        raise ScatteringError(f"scattering system is singular at k = {k}")

    index = graph.interior_index
    leads = []
    for lead in graph.leads:
        psi = complex(values[index[lead.vertex]])
        if lead.direction == INCOMING:
            leads.append(LeadState(lead.vertex, lead.direction, 1.0 + 0j, psi - 1.0))
        else:
            leads.append(LeadState(lead.vertex, lead.direction, 0j, psi))
    waves = reconstruct(graph, k, values, system=system)
    currents = np.array([edge_current(w) for w in waves])
    field = vertex_current_field(graph, currents)
    return ScatteringSolution(float(k), graph, values, leads, waves, currents, field, system)


def lead_derivatives(solution: ScatteringSolution) -> dict[int, complex]:
    """Outward derivative of each lead at its junction (for Kirchhoff checks)."""
    k = solution.k
    return {s.vertex: 1j * k * (s.amplitude_out - s.amplitude_in) for s in solution.leads}


def swap_leads(graph: MetricGraph) -> MetricGraph:
    """Same graph with the roles of a two-lead setup exchanged."""
    if len(graph.leads) != 2:
        raise ScatteringError("lead swap needs exactly two leads")
    swapped = tuple(Lead(lead.vertex, OUTGOING if lead.direction == INCOMING else INCOMING) for lead in graph.leads)
    return replace(graph, leads=swapped)


def admissible_momenta(graph: MetricGraph, k_min: float, k_max: float, count: int, tau: float | None = None) -> np.ndarray:
    """``count`` equispaced momenta, without k <= 0 and those too close to the singular set."""
    tau = default_tau(graph) if tau is None else tau
    grid = np.linspace(k_min, k_max, count)
    return np.array([k for k in grid if k > 0 and singular_set_distance(graph, k) > tau])


def transmission_sweep(graph: MetricGraph, momenta: Sequence[float], *, workers: int = 1) -> list[tuple[float, float, float]]:
    """(k, |r|^2, |t|^2) per momentum; momenta in the singular set are skipped."""

    def one(k: float):
        try:
            sol = solve_scattering(graph, k)
        except SingularMomentumError:
            return None
        return (float(k), sol.reflection, sol.transmission)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        rows = list(pool.map(one, momenta))
    return [row for row in rows if row is not None]

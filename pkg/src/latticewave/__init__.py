"""Schrödinger operators on embedded lattice graphs and their continuum billiard limits."""
from .analysis import (
    ComparisonReport,
    ConvergenceReport,
    GraphField,
    NodalPartition,
    compare_fields,
    convergence_study,
    nodal_domains,
)
from .billiard import BilliardGeometry, BilliardGrid, LeadCircle, continuum_current, flux_balance, solve_closed_modes, solve_open_field
from .edges import DualSystem, EdgeBasis, assemble_dual, assemble_equilateral, elementary_basis, reconstruct
from .graph import (
    INCOMING,
    OUTGOING,
    Edge,
    Lead,
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
    validate,
)
from .scattering import ScatteringSolution, solve_scattering, transmission_sweep
from .spectral import EigenResult, adjacency_eigen_path, bloch_dispersion, eigenstates, secular_scan

__version__ = "0.1.0"

__all__ = [
    "BilliardGeometry",
    "BilliardGrid",
    "ComparisonReport",
    "ConvergenceReport",
    "DualSystem",
    "Edge",
    "EdgeBasis",
    "EigenResult",
    "GraphField",
    "INCOMING",
    "Lead",
    "LeadCircle",
    "MetricGraph",
    "NodalPartition",
    "OUTGOING",
    "Potential",
    "ScatteringSolution",
    "Vertex",
    "adjacency_eigen_path",
    "assemble_dual",
    "assemble_equilateral",
    "attach_lead",
    "bloch_dispersion",
    "build_chain",
    "build_domain_lattice",
    "build_sinai_graph",
    "build_square_lattice",
    "build_triangular_lattice",
    "compare_fields",
    "continuum_current",
    "convergence_study",
    "detach_lead",
    "eigenstates",
    "elementary_basis",
    "flux_balance",
    "graph_from_json",
    "graph_to_json",
    "nodal_domains",
    "reconstruct",
    "secular_scan",
    "solve_closed_modes",
    "solve_open_field",
    "solve_scattering",
    "transmission_sweep",
    "validate",
]

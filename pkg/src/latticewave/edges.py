"""Edge solutions, the vertex-value (dual) system and edge reconstruction.

On an edge stored as ``(j, n)`` the coordinate runs from 0 at vertex ``n``
to ``length`` at vertex ``j``. ``u`` vanishes at ``x = length`` with unit
slope there, ``v`` vanishes at ``x = 0`` with unit slope, and
``W = u(0) = -v(length)``.
"""
from __future__ import annotations

import csv
import math
from functools import lru_cache
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .graph import Edge, MetricGraph, Potential

MIN_STEPS = 256


class SingularMomentumError(ValueError):
    """k lies (numerically) in the edge Dirichlet spectrum."""


class ResidualError(ValueError):
    """Vertex values do not solve the dual system."""


def as_momentum(k) -> complex:
    k = complex(k)
    if k.imag < 0:
        raise ValueError(f"momentum must satisfy Im k >= 0, got {k!r}")
    return k


def _sin_over(kappa: complex, x):
    """sin(kappa x) / kappa, continuous at kappa = 0."""
    x = np.asarray(x)
    return x * np.sinc(kappa * x / np.pi)


@dataclass(frozen=True)
class EdgeBasis:
    k: complex
    length: float
    u_at_0: complex
    u_deriv_at_0: complex
    v_at_len: complex
    v_deriv_at_len: complex
    wronskian: complex
    kappa: complex | None = None  # closed form: sqrt(k^2 - c)
    _u_spline: CubicHermiteSpline | None = field(default=None, repr=False, compare=False)
    _v_spline: CubicHermiteSpline | None = field(default=None, repr=False, compare=False)
    _du_spline: CubicHermiteSpline | None = field(default=None, repr=False, compare=False)
    _dv_spline: CubicHermiteSpline | None = field(default=None, repr=False, compare=False)
    wronskian_drift: float = 0.0

    def u(self, x):
        if self.kappa is not None:
            return _sin_over(self.kappa, np.asarray(x) - self.length)
        return self._u_spline(x)

    def du(self, x):
        if self.kappa is not None:
            return np.cos(self.kappa * (np.asarray(x) - self.length))
        return self._du_spline(x)

    def v(self, x):
        if self.kappa is not None:
            return _sin_over(self.kappa, x)
        return self._v_spline(x)

    def dv(self, x):
        if self.kappa is not None:
            return np.cos(self.kappa * np.asarray(x))
        return self._dv_spline(x)


def _closed_form(k: complex, length: float, shift: float) -> EdgeBasis:
    kappa = np.sqrt(complex(k * k - shift))
    s = complex(_sin_over(kappa, length))
    c = complex(np.cos(kappa * length))
    return EdgeBasis(
        k=k,
        length=length,
        u_at_0=-s,
        u_deriv_at_0=c,
        v_at_len=s,
        v_deriv_at_len=c,
        wronskian=-s,
        kappa=kappa,
    )


def _n_steps(k: complex, length: float, potential: Potential) -> int:
    omega = math.sqrt(abs(k * k) + potential.bound())
    n = max(MIN_STEPS, math.ceil(256 * omega * length))
    if potential.kind == "samples":
        # put every kink of the interpolated profile on a step node
        m = len(potential.samples) - 1
        n = m * math.ceil(n / m)
    return n


def _rk4(coef, y0: complex, dy0: complex, h: float, n: int):
    """Fixed-step RK4 for y'' = coef(x) y; ``coef`` is sampled at half steps."""
    y = np.empty(n + 1, dtype=complex)
    dy = np.empty(n + 1, dtype=complex)
    y[0], dy[0] = y0, dy0
    a, b = y0, dy0
    for i in range(n):
        c0, cm, c1 = coef[2 * i], coef[2 * i + 1], coef[2 * i + 2]
        k1a, k1b = b, c0 * a
        k2a, k2b = b + 0.5 * h * k1b, cm * (a + 0.5 * h * k1a)
        k3a, k3b = b + 0.5 * h * k2b, cm * (a + 0.5 * h * k2a)
        k4a, k4b = b + h * k3b, c1 * (a + h * k3a)
        a = a + h / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a)
        b = b + h / 6.0 * (k1b + 2 * k2b + 2 * k3b + k4b)
        y[i + 1], dy[i + 1] = a, b
    return y, dy


def _integrated(k: complex, length: float, potential: Potential) -> EdgeBasis:
    n = _n_steps(k, length, potential)
    h = length / n
    fine = np.linspace(0.0, length, 2 * n + 1)
    coef = potential.evaluate(fine, length) - k * k
    x = fine[::2]
    v, dv = _rk4(coef, 0.0, 1.0, h, n)
    # integrate u from the right end with the reflected coefficient
    ur, dur = _rk4(coef[::-1], 0.0, -1.0, h, n)
    u, du = ur[::-1], -dur[::-1]
    w_profile = u * dv - du * v
    W = u[0]
    drift = float(np.max(np.abs(w_profile - W)) / max(abs(W), 1e-300))
    return EdgeBasis(
        k=k,
        length=length,
        u_at_0=complex(u[0]),
        u_deriv_at_0=complex(du[0]),
        v_at_len=complex(v[-1]),
        v_deriv_at_len=complex(dv[-1]),
        wronskian=complex(W),
        _u_spline=CubicHermiteSpline(x, u, du),
        _v_spline=CubicHermiteSpline(x, v, dv),
        _du_spline=CubicHermiteSpline(x, du, coef[::2] * u),
        _dv_spline=CubicHermiteSpline(x, dv, coef[::2] * v),
        wronskian_drift=drift,
    )


def elementary_basis(edge: Edge | tuple[float, Potential], k, *, reverse: bool = False, method: str = "auto") -> EdgeBasis:
    """Elementary solutions on an edge at momentum ``k``.

    ``reverse=True`` gives the basis with the coordinate flipped, i.e. the one
    seen from the edge's second endpoint. ``method`` is ``auto``, ``closed``
    or ``numeric``.
    """
    if isinstance(edge, Edge):
        length, potential = edge.length, edge.potential
    else:
        length, potential = edge
    k = as_momentum(k)
    if reverse:
        potential = potential.reversed()
    if method not in ("auto", "closed", "numeric"):
        raise ValueError(f"unknown method {method!r}")
    closed_ok = potential.kind in ("zero", "const")
    if k == 0 and not potential.is_free:
        raise ValueError("k = 0 is only supported on free edges")
    if method == "closed" and not closed_ok:
        raise ValueError("closed form needs a zero or constant potential")
    if method == "numeric" or not closed_ok:
        return _integrated(k, length, potential)
    shift = potential.value if potential.kind == "const" else 0.0
    return _closed_form(k, length, shift)


# -- singular set ----------------------------------------------------------------


def _dirichlet_momenta(length: float, potential: Potential, k_cap: float) -> np.ndarray:
    """Positive momenta of the edge Dirichlet problem up to ``k_cap``."""
    # quantize the cap so repeated queries at nearby k share one scan
    unit = math.pi / length
    return _dirichlet_momenta_cached(length, potential, unit * math.ceil(k_cap / unit))


@lru_cache(maxsize=256)
def _dirichlet_momenta_cached(length: float, potential: Potential, k_cap: float) -> np.ndarray:
    if potential.kind in ("zero", "const"):
        c = potential.value if potential.kind == "const" else 0.0
        n_max = math.ceil(math.sqrt(k_cap**2 + abs(c)) * length / math.pi) + 2
        kap = math.pi * np.arange(1, n_max + 1) / length
        k2 = kap**2 + c
        return np.sqrt(k2[k2 > 0])

    def w(kk: float) -> float:
        return _integrated(complex(kk), length, potential).wronskian.real

    step = math.pi / (8 * length)
    grid = np.arange(step, k_cap + step, step)
    vals = np.array([w(g) for g in grid])
    roots = []
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if fa == 0:
            roots.append(a)
        elif fa * fb < 0:
            roots.append(brentq(w, a, b, xtol=1e-14))
    return np.array(roots)


def singular_set_distance(graph: MetricGraph, k) -> float:
    """Distance from ``k`` to the Dirichlet momenta of all edges."""
    k = as_momentum(k)
    best = math.inf
    for length, potential in {(e.length, e.potential) for e in graph.edges}:
        if potential.kind == "zero":
            base = math.pi / length
            n0 = max(1, round(k.real / base))
            cand = base * np.arange(max(1, n0 - 1), n0 + 2)
        else:
            cap = abs(k) + 2 * math.pi / length + math.sqrt(potential.bound())
            cand = _dirichlet_momenta(length, potential, cap)
        if cand.size:
            best = min(best, float(np.min(np.abs(k - cand))))
    return best


def default_tau(graph: MetricGraph) -> float:
    ell0 = min(e.length for e in graph.edges) if graph.edges else 1.0
    return 1e-6 * math.pi / ell0


# -- dual system -----------------------------------------------------------------


@dataclass(frozen=True)
class DualSystem:
    k: complex
    matrix: sparse.csr_matrix
    vertex_ids: np.ndarray
    singular_distance: float
    rhs: np.ndarray
    row_scale: np.ndarray | None = field(default=None, repr=False, compare=False)  # sum of |terms| per row

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def residual(self, values: np.ndarray) -> float:
        """Relative residual ||M psi - rhs||_inf / (||M||_inf ||psi||_inf)."""
        values = np.asarray(values)
        res = self.matrix @ values - self.rhs
        scale = abs(self.matrix).sum(axis=1).max() * max(np.max(np.abs(values)), 1e-300)
        if not np.any(values) and not np.any(self.rhs):
            return 0.0
        return float(np.max(np.abs(res)) / scale)

    def to_coo_csv(self, path: str | Path) -> None:
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["row", "col", "re", "im"])
            for i in order:
                val = complex(coo.data[i])
                writer.writerow([int(coo.row[i]), int(coo.col[i]), repr(val.real), repr(val.imag)])


def _maybe_real(data: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(data) and not np.any(data.imag):
        return data.real.copy()
    return data


def _guard(graph: MetricGraph, k: complex, tau: float | None) -> float:
    dist = singular_set_distance(graph, k) if graph.edges else math.inf
    tau = default_tau(graph) if tau is None else tau
    if dist <= tau:
        raise SingularMomentumError(f"k = {k} is within {dist:.3g} of the singular set (tolerance {tau:.3g})")
    return dist


def assemble_dual(graph: MetricGraph, k, *, tau: float | None = None) -> DualSystem:
    """General dual system: for each interior vertex j

        sum_n psi_n / W_jn - (sum_n v'_jn(l_jn) / W_jn - alpha_j) psi_j = 0,

    the first sum running over interior neighbours only.
    """
    k = as_momentum(k)
    dist = _guard(graph, k, tau)
    index = graph.interior_index
    cache: dict[tuple[float, Potential, bool], EdgeBasis] = {}

    def basis(e: Edge, reverse: bool) -> EdgeBasis:
        key = (e.length, e.potential, reverse and e.potential.kind == "samples")
        if key not in cache:
            cache[key] = elementary_basis(e, k, reverse=reverse)
        return cache[key]

    n = graph.n_interior
    diag = graph.alphas[graph.interior_ids].astype(complex)
    scale = np.abs(diag)
    rows, cols, vals = [], [], []
    for e in graph.edges:
        for here, there, rev in ((e.j, e.n, False), (e.n, e.j, True)):
            row = index.get(here)
            if row is None:
                continue
            b = basis(e, rev)
            diag[row] -= b.v_deriv_at_len / b.wronskian
            scale[row] += (1.0 + abs(b.v_deriv_at_len)) / abs(b.wronskian)
            col = index.get(there)
            if col is not None:
                rows.append(row)
                cols.append(col)
                vals.append(1.0 / b.wronskian)
    rows.extend(range(n))
    cols.extend(range(n))
    vals.extend(diag)
    data = _maybe_real(np.asarray(vals, dtype=complex))
    matrix = sparse.csr_matrix((data, (rows, cols)), shape=(n, n))
    matrix.sum_duplicates()
    return DualSystem(k, matrix, graph.interior_ids.copy(), dist, np.zeros(n, dtype=complex), scale)


def interior_adjacency(graph: MetricGraph) -> sparse.csr_matrix:
    """0/1 adjacency restricted to interior vertices."""
    index = graph.interior_index
    rows, cols = [], []
    for e in graph.edges:
        a, b = index.get(e.j), index.get(e.n)
        if a is not None and b is not None:
            rows += [a, b]
            cols += [b, a]
    n = graph.n_interior
    return sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))


def assemble_equilateral(graph: MetricGraph, k, *, tau: float | None = None) -> DualSystem:
    """Equilateral free form, scaled by W = -sin(k l)/k:

        sum_n psi_n - (d_j cos(k l) + alpha_j sin(k l)/k) psi_j = 0,

    boundary neighbours counted in the degree d_j. Equals W times the
    general system row by row.
    """
    if not (graph.is_equilateral() and graph.is_free()):
        raise ValueError("equilateral assembly needs equal edge lengths and zero potentials")
    k = as_momentum(k)
    dist = _guard(graph, k, tau)
    ell = graph.edges[0].length
    ids = graph.interior_ids
    sin_over_k = complex(_sin_over(k, ell))
    diag = graph.degrees[ids] * np.cos(k * ell) + graph.alphas[ids] * sin_over_k
    matrix = interior_adjacency(graph).astype(complex) - sparse.diags(diag)
    matrix = sparse.csr_matrix(matrix)
    matrix.data = _maybe_real(matrix.data)
    return DualSystem(k, matrix, ids.copy(), dist, np.zeros(len(ids), dtype=complex))


# -- reconstruction ----------------------------------------------------------------


@dataclass(frozen=True)
class EdgeWave:
    """psi(x) = a u(x) + b v(x) on edge ``edge_index`` (x = 0 at ``edge.n``)."""

    edge_index: int
    edge: Edge
    basis: EdgeBasis
    a: complex
    b: complex

    def value(self, x):
        return self.a * self.basis.u(x) + self.b * self.basis.v(x)

    def deriv(self, x):
        return self.a * self.basis.du(x) + self.b * self.basis.dv(x)

    def outward_derivative(self, vertex: int) -> complex:
        """Derivative pointing away from ``vertex`` into the edge."""
        if vertex == self.edge.j:
            return complex(-self.deriv(self.edge.length))
        if vertex == self.edge.n:
            return complex(self.deriv(0.0))
        raise ValueError(f"vertex {vertex} is not an endpoint of edge {self.edge_index}")


def full_vertex_values(graph: MetricGraph, interior_values: Sequence[complex]) -> np.ndarray:
    values = np.zeros(len(graph.vertices), dtype=complex)
    values[graph.interior_ids] = np.asarray(interior_values)
    return values


def reconstruct(
    graph: MetricGraph,
    k,
    vertex_values: Sequence[complex],
    *,
    system: DualSystem | None = None,
    residual_tol: float = 1e-8,
) -> list[EdgeWave]:
    """Edge wavefunctions generated by interior vertex values.

    The values are checked against ``system`` (default: the homogeneous dual
    system at ``k``) and rejected if the relative residual exceeds
    ``residual_tol``.
    """
    k = as_momentum(k)
    values = np.asarray(vertex_values, dtype=complex)
    if values.shape != (graph.n_interior,):
        raise ValueError(f"expected {graph.n_interior} interior values, got shape {values.shape}")
    if system is None:
        system = assemble_dual(graph, k)
    res = system.residual(values)
    if res > residual_tol:
        raise ResidualError(f"vertex values do not solve the dual system (relative residual {res:.3g})")
    full = full_vertex_values(graph, values)
    waves = []
    cache: dict[tuple[float, Potential], EdgeBasis] = {}
    for idx, e in enumerate(graph.edges):
        key = (e.length, e.potential)
        if key not in cache:
            cache[key] = elementary_basis(e, k)
        b = cache[key]
        waves.append(EdgeWave(idx, e, b, full[e.n] / b.wronskian, -full[e.j] / b.wronskian))
    return waves


def kirchhoff_residuals(
    graph: MetricGraph,
    waves: Sequence[EdgeWave],
    vertex_values: Sequence[complex],
    extra: dict[int, complex] | None = None,
) -> np.ndarray:
    """Per interior vertex: sum of outward edge derivatives (+ ``extra``) - alpha psi."""
    full = full_vertex_values(graph, vertex_values)
    out = np.empty(graph.n_interior, dtype=complex)
    for row, vid in enumerate(graph.interior_ids):
        s = sum(waves[ei].outward_derivative(int(vid)) for ei in graph.incident[vid])
        if extra and int(vid) in extra:
            s += extra[int(vid)]
        out[row] = s - graph.alphas[vid] * full[vid]
    return out


def continuity_errors(graph: MetricGraph, waves: Sequence[EdgeWave], vertex_values: Sequence[complex]) -> np.ndarray:
    """|psi_e(endpoint) - psi_vertex| for both ends of every edge."""
    full = full_vertex_values(graph, vertex_values)
    errs = []
    for w in waves:
        errs.append(abs(complex(w.value(w.edge.length)) - full[w.edge.j]))
        errs.append(abs(complex(w.value(0.0)) - full[w.edge.n]))
    return np.array(errs)

"""Closed-graph spectra: the adjacency fast path, a secular scan, Bloch dispersion."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import brentq
from scipy.sparse import linalg as spla

from .edges import (
    assemble_dual,
    assemble_equilateral,
    default_tau,
    elementary_basis,
    interior_adjacency,
    singular_set_distance,
)
from .graph import ZERO, MetricGraph

log = logging.getLogger(__name__)

DENSE_LIMIT = 2000
CLUSTER_TOL = 1e-10
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class NotLatticeError(ValueError):
    pass


@dataclass
class EigenResult:
    k: float
    energy_graph: float
    energy_continuum: float
    vertex_vector: np.ndarray
    residual: float
    multiplicity: int = 1
    subspace: np.ndarray | None = field(default=None, repr=False)
    mu: float | None = None

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "energy_graph": self.energy_graph,
            "energy_continuum": self.energy_continuum,
            "residual": self.residual,
            "multiplicity": self.multiplicity,
        }


def _fix_sign(vec: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(vec)))
    return vec if vec[i] >= 0 else -vec


def uniform_degree(graph: MetricGraph) -> int | None:
    degs = graph.degrees[graph.interior_ids]
    return int(degs[0]) if degs.size and np.all(degs == degs[0]) else None


def _check_lattice(graph: MetricGraph) -> tuple[float, int]:
    if not graph.edges or not graph.is_equilateral():
        raise NotLatticeError("adjacency path needs an equilateral graph")
    if not graph.is_free():
        raise NotLatticeError("adjacency path needs zero edge potentials")
    if np.any(graph.alphas[graph.interior_ids] != 0):
        raise NotLatticeError("adjacency path needs Kirchhoff couplings (alpha = 0)")
    d = uniform_degree(graph)
    if d is None:
        raise NotLatticeError("interior degrees are not uniform")
    return graph.edges[0].length, d


def _adjacency_spectrum(adj: sparse.csr_matrix, d: int, count: int | None):
    n = adj.shape[0]
    if n <= DENSE_LIMIT or count is None or count + 6 >= n:
        mu, vecs = np.linalg.eigh(adj.toarray())
    else:
        # shift-invert at the band edge mu = d (A - d I is negative definite here)
        want = min(n - 2, count + 6)
        v0 = np.ones(n) / math.sqrt(n)
        mu, vecs = spla.eigsh(adj.tocsc().astype(float), k=want, sigma=float(d), which="LM", v0=v0)
    order = np.argsort(-mu, kind="stable")
    return mu[order], vecs[:, order]


def adjacency_eigen_path(
    graph: MetricGraph,
    count: int | None = None,
    *,
    branches: int = 0,
) -> list[EigenResult]:
    """Eigenmomenta of an equilateral free Kirchhoff lattice from its interior
    adjacency spectrum: A psi = mu psi with mu = d cos(k l).

    Results are ordered by increasing k; eigenvalues equal within 1e-10 are
    merged into one result carrying their multiplicity. ``count`` limits the
    number of eigenvalues (with multiplicity) taken from the top of the
    adjacency spectrum; ``branches`` adds the momenta (2 pi n +- k0 l)/l,
    n = 1..branches.
    """
    ell, d = _check_lattice(graph)
    adj = interior_adjacency(graph)
    mu, vecs = _adjacency_spectrum(adj, d, count)
    keep = np.abs(mu) < d * (1 - 1e-12)  # |mu| = d forces k into the singular set
    mu, vecs = mu[keep], vecs[:, keep]

    clusters: list[list[int]] = []
    for i, m in enumerate(mu):
        if clusters and abs(mu[clusters[-1][0]] - m) <= CLUSTER_TOL:
            clusters[-1].append(i)
        else:
            clusters.append([i])
    if count is not None:
        taken, trimmed = 0, []
        for c in clusters:
            if taken >= count:
                break
            trimmed.append(c)
            taken += len(c)
        clusters = trimmed

    results = []
    nu = graph.dimension
    for c in clusters:
        m = float(np.mean(mu[c]))
        theta = math.acos(m / d)
        sub = vecs[:, c]
        vec = _fix_sign(sub[:, 0]) if len(c) == 1 else sub[:, 0]
        ks = [theta / ell]
        for b in range(1, branches + 1):
            ks += [(2 * math.pi * b - theta) / ell, (2 * math.pi * b + theta) / ell]
        for k in ks:
            system = assemble_equilateral(graph, k)
            residual = float(np.max(np.abs(system.matrix @ sub)))
            results.append(
                EigenResult(k, k * k, nu * k * k, vec, residual, len(c), sub if len(c) > 1 else sub[:, :1], m)
            )
    results.sort(key=lambda r: r.k)
    return results


# -- secular scan -------------------------------------------------------------------


@dataclass
class SecularScan:
    k_grid: np.ndarray
    sigma_min: np.ndarray
    roots: list[EigenResult]
    skipped: list[tuple[float, float]]


def _normalized_matrix(graph: MetricGraph, k: float):
    # rows scaled by the size of their terms, so a vanishing row stays small
    system = assemble_dual(graph, k, tau=0.0)
    return sparse.csr_matrix(sparse.diags(1.0 / system.row_scale) @ system.matrix)


def _smallest_singular(m: sparse.spmatrix, want_vector: bool = False):
    n = m.shape[0]
    if n <= DENSE_LIMIT:
        _, s, vh = np.linalg.svd(m.toarray())
        return (s[-1], vh[-1].conj()) if want_vector else (s[-1], None)
    try:
        lu = spla.splu(sparse.csc_matrix(m))
    except RuntimeError:
        return 0.0, None
    x = np.ones(n, dtype=lu.U.dtype) / math.sqrt(n)
    sigma = math.inf
    for _ in range(200):
        y = lu.solve(lu.solve(x, trans="H"))
        norm = np.linalg.norm(y)
        new_sigma = 1.0 / math.sqrt(norm)
        x = y / norm
        if abs(new_sigma - sigma) <= 1e-13 * new_sigma:
            sigma = new_sigma
            break
        sigma = new_sigma
    return sigma, x


def _golden(f, a: float, b: float, tol: float) -> float:
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def secular_scan(
    graph: MetricGraph,
    k_min: float,
    k_max: float,
    samples: int,
    *,
    tau: float | None = None,
    threshold_factor: float = 1e-6,
    k_tol: float = 1e-10,
    workers: int = 1,
) -> SecularScan:
    """Roots of the general dual system located through its smallest singular value.

    Grid points within ``tau`` of the singular set are skipped. Local minima
    of the row-normalized smallest singular value are refined by golden
    section to ``k_tol`` and kept if the refined value drops below
    ``threshold_factor`` times the grid median.
    """
    if samples < 2:
        raise ValueError("need at least two samples")
    if not 0 <= k_min < k_max:
        raise ValueError("need 0 <= k_min < k_max")
    tau = default_tau(graph) if tau is None else tau
    grid = np.linspace(k_min, k_max, samples)
    admissible = np.array([k > 0 and singular_set_distance(graph, k) > tau for k in grid])
    if not admissible.any():
        raise ValueError("no admissible momentum in the requested range")

    skipped = []
    run_start = None
    for i, (k, ok) in enumerate(zip(grid, admissible)):
        if not ok and run_start is None:
            run_start = k
        if ok and run_start is not None:
            skipped.append((float(run_start), float(grid[i - 1])))
            run_start = None
    if run_start is not None:
        skipped.append((float(run_start), float(grid[-1])))

    def sigma_at(k: float) -> float:
        return float(_smallest_singular(_normalized_matrix(graph, k))[0])

    sigma = np.full(samples, np.nan)
    idx = np.flatnonzero(admissible)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        for i, s in zip(idx, pool.map(sigma_at, grid[idx])):
            sigma[i] = s
    median = float(np.nanmedian(sigma))

    roots = []
    for i in range(1, samples - 1):
        if not (admissible[i - 1] and admissible[i] and admissible[i + 1]):
            continue
        if not (sigma[i] < sigma[i - 1] and sigma[i] <= sigma[i + 1]):
            continue
        k0 = _golden(sigma_at, grid[i - 1], grid[i + 1], k_tol)
        m = _normalized_matrix(graph, k0)
        s0, vec = _smallest_singular(m, want_vector=True)
        if s0 >= threshold_factor * median:
            continue
        if vec is not None:
            phase = vec[int(np.argmax(np.abs(vec)))]
            vec = vec * (abs(phase) / phase)
            if np.max(np.abs(vec.imag)) < 1e-8 * np.max(np.abs(vec)):
                vec = vec.real
            vec = vec / np.linalg.norm(vec)
        residual = float(np.max(np.abs(assemble_dual(graph, k0, tau=0.0).matrix @ vec))) if vec is not None else math.nan
        roots.append(EigenResult(k0, k0 * k0, graph.dimension * k0 * k0, vec, residual))
    return SecularScan(grid, sigma, roots, skipped)


def eigenstates(graph: MetricGraph, count: int, *, k_max: float | None = None, samples: int | None = None) -> list[EigenResult]:
    """Lowest eigenstates: adjacency path when applicable, secular scan otherwise."""
    try:
        return adjacency_eigen_path(graph, count)
    except NotLatticeError as exc:
        log.info("falling back to secular scan: %s", exc)
    ell0 = min(e.length for e in graph.edges)
    k_max = k_max if k_max is not None else math.pi / ell0
    samples = samples or max(400, 20 * graph.n_interior)
    return secular_scan(graph, 0.0, k_max, samples).roots[:count]


# -- Bloch dispersion -----------------------------------------------------------------


def bloch_dispersion(theta: Sequence[float], spacing: float) -> float:
    """Principal momentum on the free square/cubic lattice at quasimomentum ``theta``:
    sum_i cos(theta_i l) = nu cos(k l)."""
    theta = np.asarray(theta, dtype=float)
    nu = theta.size
    c = float(np.sum(np.cos(theta * spacing))) / nu
    if abs(c) > 1 + 1e-15:
        raise ValueError(f"cosine sum {nu * c!r} outside [-{nu}, {nu}]")
    return math.acos(min(1.0, max(-1.0, c))) / spacing


def bloch_secular(theta: Sequence[float], spacing: float) -> float:
    """Same momentum from the dual equation of the one-vertex periodic cell.

    The single vertex is joined to its own translates by one edge per axis,
    with Bloch phases exp(+-i theta_i l). Its dual row, multiplied by W, reads
    2 sum_i cos(theta_i l) - 2 nu v'(l) = 0; v'(l) comes from the numerical
    edge integrator.
    """
    theta = np.asarray(theta, dtype=float)
    nu = theta.size
    target = float(np.sum(np.cos(theta * spacing)))

    def f(k: float) -> float:
        b = elementary_basis((spacing, ZERO), k, method="numeric")
        return target - nu * b.v_deriv_at_len.real

    lo, hi = 0.0, math.pi / spacing
    flo, fhi = f(lo), f(hi)
    if abs(flo) <= 1e-14:
        return lo
    if abs(fhi) <= 1e-14:
        return hi
    if flo * fhi > 0:
        raise ValueError("quasimomentum outside the band")
    return brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)

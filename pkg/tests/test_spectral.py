import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latticewave.edges import assemble_dual
from latticewave.graph import Edge, MetricGraph, Potential, Vertex, build_chain, build_sinai_graph, build_square_lattice
from latticewave.spectral import (
    NotLatticeError,
    adjacency_eigen_path,
    bloch_dispersion,
    bloch_secular,
    eigenstates,
    secular_scan,
)


def grid_adjacency_oracle(m, n):
    """Interior adjacency of an m x n grid as a Kronecker sum of path graphs."""
    def path(p):
        return np.diag(np.ones(p - 1), 1) + np.diag(np.ones(p - 1), -1)

    return np.kron(path(m), np.eye(n)) + np.kron(np.eye(m), path(n))


def rectangle_momenta(m, n, ell):
    mu = np.linalg.eigvalsh(grid_adjacency_oracle(m, n))
    mu = mu[np.abs(mu) < 4 * (1 - 1e-12)]
    return np.sort(np.arccos(mu / 4) / ell)


def expand(results):
    return np.sort(np.concatenate([[r.k] * r.multiplicity for r in results]))


@pytest.mark.parametrize("m,n", [(1, 1), (3, 5), (7, 7), (12, 9), (12, 12)])
def test_rectangle_momenta_match_dense_oracle(m, n):
    ell = 0.3
    g = build_square_lattice(m + 2, n + 2, ell)
    ks = expand(adjacency_eigen_path(g))
    assert np.max(np.abs(ks - rectangle_momenta(n, m, ell))) <= 1e-10


def test_rectangle_closed_form_and_multiplicity():
    g = build_square_lattice(7, 7, 1 / 6)
    res = adjacency_eigen_path(g, 3)
    mu = [2 * math.cos(math.pi / 6) * 2, 2 * math.cos(math.pi / 6) + 2 * math.cos(2 * math.pi / 6)]
    assert res[0].multiplicity == 1 and res[1].multiplicity == 2
    assert res[0].mu == pytest.approx(mu[0], abs=1e-13)
    assert res[1].mu == pytest.approx(mu[1], abs=1e-13)
    assert res[1].subspace.shape == (25, 2)
    # continuum energy rescaled by the dimension
    assert res[0].energy_continuum == pytest.approx(2 * res[0].k ** 2)


def test_adjacency_vectors_solve_dual_system():
    g = build_sinai_graph(25, 0.2, (2.4, 2.5), 1.0)
    for r in adjacency_eigen_path(g, 8):
        m = assemble_dual(g, r.k).matrix
        assert np.max(np.abs(m @ r.subspace)) <= 1e-9 * abs(m).max()
        assert r.residual <= 1e-12


def test_branches_repeat_momenta():
    g = build_square_lattice(5, 5, 0.5)
    res = adjacency_eigen_path(g, 1, branches=1)
    k0 = res[0].k
    assert [r.k for r in res] == pytest.approx([k0, 2 * math.pi / 0.5 - k0, 2 * math.pi / 0.5 + k0])


def test_sparse_path_agrees_with_closed_form():
    # 48 x 48 interior points: above the dense limit
    m = 48
    ell = 1 / (m + 1)
    g = build_square_lattice(m + 2, m + 2, ell)
    res = adjacency_eigen_path(g, 6)
    p = np.arange(1, 5)
    mu = np.sort((2 * np.cos(p[:, None] * np.pi / (m + 1)) + 2 * np.cos(p[None, :] * np.pi / (m + 1))).ravel())[::-1]
    expected = np.arccos(mu / 4) / ell
    got = expand(res)[:6]
    assert np.max(np.abs(got - expected[:6])) <= 1e-10


def test_not_lattice():
    vs = (Vertex(0, (0.0,), "boundary"), Vertex(1, (1.0,)), Vertex(2, (3.0,), "boundary"))
    g = MetricGraph(vs, (Edge(1, 0, 1.0), Edge(2, 1, 2.0)), 1)
    with pytest.raises(NotLatticeError):
        adjacency_eigen_path(g)
    g2 = build_square_lattice(5, 5, 1.0, alpha_fn=0.5)
    with pytest.raises(NotLatticeError):
        adjacency_eigen_path(g2)


# -- secular scan ---------------------------------------------------------------------


def two_edge_interval(a, b, alpha=0.0):
    vs = (Vertex(0, (0.0,), "boundary"), Vertex(1, (a,), alpha=alpha), Vertex(2, (a + b,), "boundary"))
    return MetricGraph(vs, (Edge(1, 0, a), Edge(2, 1, b)), 1)


def test_secular_scan_recovers_interval_spectrum():
    a, b = 0.7, 1.3
    g = two_edge_interval(a, b)
    scan = secular_scan(g, 0.0, 12.0, 1500)
    expected = [n * math.pi / (a + b) for n in range(1, 8) if n * math.pi / (a + b) < 12]
    # momenta where the eigenfunction vanishes at the inner vertex are invisible to the dual system
    visible = [k for k in expected if abs(math.sin(k * a)) > 1e-3]
    got = [r.k for r in scan.roots]
    assert got == pytest.approx(visible, abs=1e-9)


def test_secular_scan_with_delta_coupling():
    # interval of length 2 with a delta at the midpoint: odd modes unaffected,
    # even modes solve  2 k cot(k) = -alpha  ->  tan(k) = -2k/alpha
    alpha = 3.0
    g = two_edge_interval(1.0, 1.0, alpha)
    scan = secular_scan(g, 0.05, 9.0, 2000)
    from scipy.optimize import brentq

    f = lambda k: 2 * k * math.cos(k) / math.sin(k) + alpha
    roots = []
    for n in range(3):
        lo, hi = n * math.pi + 1e-9, (n + 1) * math.pi - 1e-9
        roots.append(brentq(f, lo, hi, xtol=1e-15))
    assert [r.k for r in scan.roots] == pytest.approx([r for r in roots if r < 9.0], abs=1e-9)


def test_secular_scan_matches_adjacency_path():
    g = build_sinai_graph(15, 0.25, (1.8, 1.6), 0.6)
    path = adjacency_eigen_path(g, 5)
    k_max = path[-1].k + 0.05
    scan = secular_scan(g, 0.0, k_max, 500, workers=2)
    simple = [r.k for r in path if r.multiplicity == 1]
    got = [r.k for r in scan.roots]
    for k in simple:
        assert min(abs(k - x) for x in got) <= 1e-9


def test_secular_scan_skips_singular_set():
    g = build_chain(5, 0.5)
    scan = secular_scan(g, 0.0, 8 * math.pi, 401)  # grid hits k = 2 pi exactly
    k_sing = 2 * math.pi
    assert any(a - 1e-12 <= k_sing <= b + 1e-12 for a, b in scan.skipped)
    assert all(abs(r.k - k_sing) > 1e-6 for r in scan.roots)


def test_secular_scan_input_errors():
    g = build_chain(4, 1.0)
    with pytest.raises(ValueError):
        secular_scan(g, 2.0, 1.0, 10)
    with pytest.raises(ValueError):
        secular_scan(g, 0.0, 1.0, 1)


def test_eigenstates_fallback_with_potential():
    a, b = 0.7, 1.3
    vs = (Vertex(0, (0.0,), "boundary"), Vertex(1, (a,)), Vertex(2, (a + b,), "boundary"))
    c = 2.0
    g = MetricGraph(vs, (Edge(1, 0, a, Potential.const(c)), Edge(2, 1, b, Potential.const(c))), 1)
    res = eigenstates(g, 2, k_max=6.0, samples=1500)
    expected = [math.sqrt((n * math.pi / (a + b)) ** 2 + c) for n in (1, 2)]
    assert [r.k for r in res] == pytest.approx(expected, abs=1e-9)


# -- Bloch dispersion -----------------------------------------------------------------


@settings(max_examples=100, deadline=None)
@given(
    st.floats(min_value=0.01, max_value=1.0),
    st.floats(min_value=-1.0, max_value=1.0),
    st.floats(min_value=-1.0, max_value=1.0),
)
def test_dispersion_identity(ell, a, b):
    theta = np.array([a, b]) * math.pi / ell
    k = bloch_dispersion(theta, ell)
    assert abs(math.cos(theta[0] * ell) + math.cos(theta[1] * ell) - 2 * math.cos(k * ell)) <= 1e-12
    assert 0 <= k <= math.pi / ell


@pytest.mark.parametrize("theta", [(0.3, 1.2), (2.0, -0.5), (4.1, 3.3)])
def test_dispersion_from_numeric_secular_equation(theta):
    ell = 0.4
    assert bloch_secular(theta, ell) == pytest.approx(bloch_dispersion(theta, ell), abs=1e-9)


def test_dispersion_small_spacing_limit():
    theta = np.array([1.1, 0.7])
    gaps = []
    ells = [0.2, 0.1, 0.05, 0.025]
    for ell in ells:
        k = bloch_dispersion(theta, ell)
        gaps.append(abs(2 * k * k - theta @ theta))
    order = np.polyfit(np.log(ells), np.log(gaps), 1)[0]
    assert order == pytest.approx(2.0, abs=0.05)


def test_dispersion_one_and_three_dimensions():
    assert bloch_dispersion([0.3], 1.0) == pytest.approx(0.3)
    th = np.array([0.2, 0.4, 0.6])
    k = bloch_dispersion(th, 0.5)
    assert 3 * math.cos(0.5 * k) == pytest.approx(np.cos(0.5 * th).sum(), abs=1e-14)

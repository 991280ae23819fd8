import numpy as np
import pytest
from hypothesis import given, strategies as st

from cvna import _kernels
from cvna.graph import (
    GraphGenerationError,
    build_system,
    complete_digraph,
    generate_k_regular,
    write_edge_list,
)


def check_invariants(g):
    d = g.k // 2
    adj = g.adjacency()
    assert g.in_neighbors.shape == (g.n, d) == g.out_neighbors.shape
    assert not adj.diagonal().any()
    assert (adj.sum(axis=1) == d).all()
    assert (adj.sum(axis=0) == d).all()
    # rows have no repeated entries, so no parallel arcs
    assert adj.sum() == g.n * d
    for i in range(g.n):
        assert set(g.out_neighbors[i]) == set(np.flatnonzero(adj[:, i]))


def test_saturated_degree_gives_complete_digraph():
    g = generate_k_regular(4, 6, seed=1)
    assert g.n_arcs == 12
    assert (g.adjacency() == ~np.eye(4, dtype=bool)).all()


def test_degree_two_is_union_of_cycles():
    g = generate_k_regular(3, 2, seed=3)
    check_invariants(g)
    succ = g.in_neighbors[:, 0]
    assert sorted(succ) == [0, 1, 2]
    assert (succ != np.arange(3)).all()


def test_seeded_generation_is_deterministic():
    a = generate_k_regular(100, 10, seed=7)
    b = generate_k_regular(100, 10, seed=7)
    check_invariants(a)
    assert np.array_equal(a.arcs()[1], b.arcs()[1])
    assert a == b
    assert a != generate_k_regular(100, 10, seed=8)


@given(n=st.integers(2, 60), frac=st.floats(0, 1), seed=st.integers(0, 2**32 - 1))
def test_generated_graphs_satisfy_invariants(n, frac, seed):
    d = int(round(frac * (n - 1)))
    check_invariants(generate_k_regular(n, 2 * d, seed=seed))


@pytest.mark.parametrize("n,k", [(500, 20), (500, 600), (500, 996), (2000, 3000), (1000, 1998)])
def test_dense_and_sparse_regimes(n, k):
    check_invariants(generate_k_regular(n, k, seed=0))


def test_empty_graph_for_zero_degree():
    g = generate_k_regular(5, 0, seed=0)
    assert g.n_arcs == 0
    assert g.in_neighbors.shape == (5, 0)


@pytest.mark.parametrize("n,k", [(10, 3), (10, 20), (4, 8), (0, 0), (5, -2)])
def test_invalid_degree_rejected(n, k):
    with pytest.raises(ValueError):
        generate_k_regular(n, k, seed=0)


def test_repair_failure_is_reported(monkeypatch):
    monkeypatch.setattr(_kernels, "repair_arcs", lambda src, dst, mult, rand, e: (e, rand.size))
    with pytest.raises(GraphGenerationError):
        generate_k_regular(200, 40, seed=0, max_retries=0)


def test_neighbour_arrays_are_read_only():
    g = generate_k_regular(20, 6, seed=0)
    with pytest.raises(ValueError):
        g.in_neighbors[0, 0] = 1


def test_edge_list_round_trip(tmp_path):
    g = generate_k_regular(30, 8, seed=2)
    path = write_edge_list(g, tmp_path / "edges.csv")
    arcs = np.loadtxt(path, delimiter=",", dtype=int)
    adj = np.zeros((30, 30), dtype=bool)
    adj[arcs[:, 0], arcs[:, 1]] = True
    assert arcs.shape == (120, 2)
    assert (adj == g.adjacency()).all()


def test_system_on_three_cycle():
    sys_ = build_system(generate_k_regular(3, 2, seed=0), 2.0)
    assert sys_.exposure == 2.0
    assert np.array_equal(sys_.interbank_liabilities, [2, 2, 2])
    assert np.array_equal(sys_.net_external_assets, [1, 1, 1])
    assert np.array_equal(sys_.initial_equity, [1, 1, 1])


def test_system_on_complete_four():
    sys_ = build_system(complete_digraph(4), 8.0)
    mat = sys_.exposure_matrix()
    assert sys_.exposure == pytest.approx(8 / 3)
    np.testing.assert_allclose(mat.sum(axis=1), 8.0)
    np.testing.assert_allclose(mat.sum(axis=0), 8.0)


def test_zero_leverage_has_no_exposure():
    sys_ = build_system(generate_k_regular(10, 4, seed=0), 0.0)
    assert not sys_.exposure_matrix().any()


@given(n=st.integers(2, 30), d=st.integers(1, 10), lev=st.floats(0, 16), seed=st.integers(0, 1000))
def test_exposure_rows_and_columns_sum_to_leverage(n, d, lev, seed):
    d = min(d, n - 1)
    mat = build_system(generate_k_regular(n, 2 * d, seed=seed), lev).exposure_matrix()
    np.testing.assert_allclose(mat.sum(axis=1), lev, atol=1e-12)
    np.testing.assert_allclose(mat.sum(axis=0), lev, atol=1e-12)


@pytest.mark.parametrize("lev,delta", [(-1.0, 0.0), (1.0, 1.0), (1.0, -0.1)])
def test_build_system_validates(lev, delta):
    with pytest.raises(ValueError):
        build_system(generate_k_regular(4, 2, seed=0), lev, delta)

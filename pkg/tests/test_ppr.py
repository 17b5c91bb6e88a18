import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dense_ppr_oracle, dense_ppr_solve, multi_component_graph
from deepnoderank.datasets import erdos_renyi
from deepnoderank.graph import Graph, to_transition
from deepnoderank.ppr import (PersonalizedPageRank, PPRConfig, PPRError, ppr, ppr_batch, ppr_matrix,
                              shrink_probe)


def _cliques(k=5):
    A = np.zeros((2 * k, 2 * k))
    A[:k, :k] = 1
    A[k:, k:] = 1
    np.fill_diagonal(A, 0)
    return Graph.from_adjacency(A)


def _cycle(n):
    A = np.zeros((n, n))
    A[np.arange(n), (np.arange(n) + 1) % n] = 1
    return Graph.from_adjacency(A)


def test_probe_returns_component():
    T = to_transition(_cliques())
    keep = shrink_probe(T, 1, PPRConfig(spread_percent=0.9))
    assert keep.tolist() == [0, 1, 2, 3, 4]


def test_probe_aborts_on_large_cycle():
    assert shrink_probe(to_transition(_cycle(10)), 0, PPRConfig(spread_percent=0.3)) is None


def test_probe_isolated_seed():
    A = np.zeros((4, 4))
    A[1, 2] = 1
    assert shrink_probe(to_transition(Graph.from_adjacency(A)), 0).tolist() == [0]


def test_probe_stops_after_spread_step():
    # a 30-node path keeps growing one node per step
    A = np.zeros((30, 30))
    A[np.arange(29), np.arange(1, 30)] = 1
    cfg = PPRConfig(spread_step=5, spread_percent=1.0)
    assert shrink_probe(to_transition(Graph.from_adjacency(A)), 0, cfg) is None


def test_self_loop():
    g = Graph.from_adjacency(np.array([[1.0]]))
    for d in (0.1, 0.5, 0.9):
        np.testing.assert_array_equal(ppr(to_transition(g), 0, PPRConfig(damping=d)).values, [1.0])


def test_two_cycle_closed_form(cycle2):
    exact = dense_ppr_solve(cycle2.adjacency, 0, 0.5)
    np.testing.assert_allclose(exact, [2 / 3, 1 / 3], atol=1e-15)
    vec = ppr(to_transition(cycle2), 0, PPRConfig(damping=0.5))
    assert np.abs(vec.values - [2 / 3, 1 / 3]).max() <= 1e-6
    tight = ppr(to_transition(cycle2), 0, PPRConfig(damping=0.5, epsilon=1e-12))
    assert np.abs(tight.values - [2 / 3, 1 / 3]).max() <= 1e-9


def test_unreachable_is_zero():
    A = np.zeros((3, 3))
    A[0, 1] = 1
    A[2, 1] = 1
    T = to_transition(Graph.from_adjacency(A))
    for cfg in (PPRConfig(), PPRConfig(spread_percent=1.0), PPRConfig(shrink=False)):
        assert ppr(T, 0, cfg).values[2] == 0.0
    assert ppr(T, 0, PPRConfig(spread_percent=1.0)).shrunk


def test_batch_examples():
    T = to_transition(erdos_renyi(10, 0.3, seed=1))
    assert ppr_batch(T, []) == []
    a, b = ppr_batch(T, [3, 3])
    np.testing.assert_array_equal(a.values, b.values)
    assert ppr_matrix(T, []).shape == (0, 10)


def test_batch_all_nodes_match_oracle():
    g = erdos_renyi(10, 0.3, seed=7)
    T = to_transition(g)
    M = ppr_matrix(T, range(10), PPRConfig(epsilon=1e-10)).toarray()
    for s in range(10):
        assert np.abs(M[s] - dense_ppr_oracle(g.adjacency, s, 0.5)).max() <= 1e-8


def test_batch_threads_keep_order():
    T = to_transition(erdos_renyi(30, 0.2, seed=2))
    seeds = [5, 1, 29, 0, 5, 17]
    serial = ppr_matrix(T, seeds).toarray()
    threaded = ppr_matrix(T, seeds, n_jobs=4).toarray()
    np.testing.assert_array_equal(serial, threaded)


def test_batch_error_names_seed():
    T = to_transition(erdos_renyi(5, 0.5, seed=0))
    with pytest.raises(PPRError) as info:
        ppr_batch(T, [0, 99])
    assert info.value.seed == 99


@pytest.mark.parametrize("kwargs", [dict(damping=0), dict(damping=1), dict(epsilon=0), dict(max_steps=0),
                                    dict(spread_percent=0), dict(norm="linf")])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        PPRConfig(**kwargs)


def test_max_steps_reports_nonconvergence(cycle2):
    vec = ppr(to_transition(cycle2), 0, PPRConfig(max_steps=2, shrink=False))
    assert not vec.converged
    assert vec.iterations_used == 2


def test_l2_norm(cycle2):
    vec = ppr(to_transition(cycle2), 0, PPRConfig(norm="l2", epsilon=1e-12))
    np.testing.assert_allclose(vec.values, [2 / 3, 1 / 3], atol=1e-11)


def test_residuals_finite_and_decreasing():
    vec = ppr(to_transition(erdos_renyi(40, 0.2, seed=4)), 0, PPRConfig(shrink=False))
    r = np.array(vec.residuals)
    assert np.isfinite(r).all()
    assert r[-1] <= 1e-6
    assert r[-1] < r[0]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(5, 40), st.floats(0.1, 0.5), st.floats(0.1, 0.9))
def test_oracle_equivalence(seed, n, p, damping):
    g = erdos_renyi(n, p, seed=seed)
    T = to_transition(g)
    s = seed % n
    vec = ppr(T, s, PPRConfig(damping=damping, epsilon=1e-10))
    assert np.abs(vec.values - dense_ppr_oracle(g.adjacency, s, damping)).max() <= 1e-8


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_shrink_neutral_and_mass(seed):
    g = multi_component_graph(seed)
    T = to_transition(g)
    for s in range(g.n_nodes):
        on = ppr(T, s, PPRConfig(spread_percent=0.9))
        off = ppr(T, s, PPRConfig(shrink=False))
        assert np.abs(on.values - off.values).max() <= 1e-10
        assert abs(on.values.sum() - 1) <= 1e-6
        assert (on.values >= 0).all()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(3, 25))
def test_permutation_equivariance(seed, n):
    g = erdos_renyi(n, 0.3, seed=seed, weighted=True)
    perm = np.random.default_rng(seed).permutation(n)
    T, Tp = to_transition(g), to_transition(g.permuted(perm))
    for u in range(n):
        a = ppr(T, u).values
        b = ppr(Tp, perm[u]).values
        assert np.abs(b[perm] - a).max() <= 1e-12


def test_estimator_matches_function():
    g = erdos_renyi(12, 0.3, seed=5)
    est = PersonalizedPageRank(damping=0.7)
    out = est.fit(g).transform([2, 4])
    T = to_transition(g)
    np.testing.assert_array_equal(out[0], ppr(T, 2, PPRConfig(damping=0.7)).values)
    assert est.fit_transform(g.adjacency).shape == (12, 12)
    np.testing.assert_array_equal(est.transform(), est.transform(np.arange(12)))
    assert est.get_params()["damping"] == 0.7


def test_estimator_rejects_bad_nodes():
    est = PersonalizedPageRank().fit(erdos_renyi(5, 0.5, seed=0))
    with pytest.raises(IndexError):
        est.transform([7])

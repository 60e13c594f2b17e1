import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loadshift.socialgraph import (
    FjResult,
    GraphParamError,
    OpinionState,
    SocialGraph,
    WsParams,
    export_graph,
    fj_run,
    fj_step,
    generate_ws_graph,
    import_graph,
)


def two_node_graph(a_ii, mu):
    adjacency = np.array([[0.0, 1.0], [1.0, 0.0]])
    return SocialGraph(
        n=2,
        adjacency=adjacency,
        self_confidence=np.asarray(a_ii, dtype=float),
        susceptibility=np.asarray(mu, dtype=float),
    )


def fj_fixed_point_oracle(graph, initial):
    # Direct linear solve of (I - M) sigma = b implied by the update rule;
    # independent of the iterative path.
    mu = graph.susceptibility
    a_ii = graph.self_confidence
    m = np.diag(mu * a_ii) + (mu * (1.0 - a_ii))[:, None] * graph.adjacency
    b = (1.0 - mu) * initial
    return np.linalg.solve(np.eye(graph.n) - m, b)


class TestGenerateWsGraph:
    def test_unrewired_ring_has_uniform_half_weights(self):
        graph = generate_ws_graph(WsParams(n=4, k=2, p_rewire=0.0, seed=1))
        for i in range(4):
            row = graph.adjacency[i]
            assert row[i] == 0.0
            neighbors = np.nonzero(row)[0]
            assert len(neighbors) == 2
            assert np.allclose(row[neighbors], 0.5)

    def test_row_sums_survive_full_rewiring(self):
        graph = generate_ws_graph(WsParams(n=4, k=2, p_rewire=1.0, seed=3))
        sums = graph.adjacency.sum(axis=1)
        assert np.allclose(sums, 1.0, atol=1e-12)
        assert np.all(np.diag(graph.adjacency) == 0.0)

    def test_clustering_beats_random_graph_of_same_density(self):
        # Oracle: mean clustering of 100 Erdos-Renyi samples with the same
        # number of edges.
        params = WsParams(n=40, k=4, p_rewire=0.1, seed=11)
        graph = generate_ws_graph(params)
        g = nx.from_numpy_array((graph.adjacency > 0).astype(int))
        ws_clustering = nx.average_clustering(g)
        m = g.number_of_edges()
        er = [
            nx.average_clustering(nx.gnm_random_graph(40, m, seed=1000 + s))
            for s in range(100)
        ]
        assert ws_clustering > float(np.mean(er))

    def test_invalid_params_rejected(self):
        with pytest.raises(GraphParamError):
            generate_ws_graph(WsParams(n=4, k=5, p_rewire=0.1))
        with pytest.raises(GraphParamError):
            generate_ws_graph(WsParams(n=4, k=4, p_rewire=0.1))
        with pytest.raises(GraphParamError):
            generate_ws_graph(WsParams(n=4, k=2, p_rewire=1.5))

    def test_same_seed_same_graph(self):
        params = WsParams(n=30, k=4, p_rewire=0.3, seed=99)
        g1 = generate_ws_graph(params)
        g2 = generate_ws_graph(params)
        assert np.array_equal(g1.adjacency, g2.adjacency)

    def test_connected_after_heavy_rewiring(self):
        graph = generate_ws_graph(WsParams(n=50, k=4, p_rewire=0.9, seed=5))
        g = nx.from_numpy_array((graph.adjacency > 0).astype(int))
        assert nx.is_connected(g)


class TestFjStep:
    def test_fully_stubborn_agents_never_move(self):
        graph = two_node_graph(a_ii=[0.5, 0.5], mu=[0.0, 0.0])
        state = OpinionState(
            initial=np.array([0.3, 0.9]), current=np.array([0.3, 0.9])
        )
        for _ in range(10):
            state = fj_step(graph, state)
        assert np.allclose(state.current, [0.3, 0.9])

    def test_symmetric_averaging_reaches_midpoint_fixed_point(self):
        graph = two_node_graph(a_ii=[0.5, 0.5], mu=[1.0, 1.0])
        state = OpinionState(initial=np.array([0.0, 1.0]), current=np.array([0.0, 1.0]))
        state = fj_step(graph, state)
        assert np.allclose(state.current, [0.5, 0.5])
        again = fj_step(graph, state)
        assert np.allclose(again.current, [0.5, 0.5])

    def test_follower_copies_stubborn_leader(self):
        graph = two_node_graph(a_ii=[0.5, 0.0], mu=[0.0, 1.0])
        state = OpinionState(initial=np.array([0.2, 0.8]), current=np.array([0.2, 0.8]))
        state = fj_step(graph, state)
        assert np.allclose(state.current, [0.2, 0.2])

    def test_dimension_mismatch_raises(self):
        graph = two_node_graph(a_ii=[0.5, 0.5], mu=[0.5, 0.5])
        state = OpinionState(initial=np.zeros(3), current=np.zeros(3))
        with pytest.raises(ValueError):
            fj_step(graph, state)


class TestFjRun:
    def test_symmetric_case_converges_fast(self):
        graph = two_node_graph(a_ii=[0.5, 0.5], mu=[1.0, 1.0])
        state = OpinionState(initial=np.array([0.0, 1.0]), current=np.array([0.0, 1.0]))
        result = fj_run(graph, state, tol=1e-10)
        assert result.converged
        assert result.steps <= 2
        assert np.allclose(result.state.current, [0.5, 0.5])

    def test_matches_linear_solve_on_random_graphs(self):
        rng = np.random.default_rng(7)
        for trial in range(20):
            n = int(rng.integers(3, 25))
            k = 2 * int(rng.integers(1, max(2, n // 2 - 1)))
            k = min(k, n - 1 - (n % 2 == 0))
            if k % 2:
                k -= 1
            k = max(k, 2)
            graph = generate_ws_graph(
                WsParams(n=n, k=k, p_rewire=float(rng.uniform(0, 1)), seed=trial),
                susceptibility=rng.uniform(0.05, 0.95, size=n),
                self_confidence=rng.uniform(0.0, 1.0, size=n),
            )
            initial = rng.uniform(0, 1, size=n)
            state = OpinionState(initial=initial, current=initial.copy())
            result = fj_run(graph, state, tol=1e-13, max_steps=200_000)
            expected = fj_fixed_point_oracle(graph, initial)
            assert result.converged
            assert np.max(np.abs(result.state.current - expected)) < 1e-9

    def test_reported_convergence_is_consistent(self):
        graph = generate_ws_graph(
            WsParams(n=10, k=4, p_rewire=0.2, seed=2),
            susceptibility=0.7,
            self_confidence=0.4,
        )
        initial = np.linspace(0.1, 0.9, 10)
        state = OpinionState(initial=initial, current=initial.copy())
        result = fj_run(graph, state, tol=1e-9)
        assert result.converged
        after = fj_step(graph, result.state)
        assert np.max(np.abs(after.current - result.state.current)) < 1e-9

    def test_trajectory_fans_to_clustered_levels(self):
        # 40-node heterogeneous run: spread shrinks but does not collapse
        # to the strict consensus of the memoryless averaging model.
        rng = np.random.default_rng(123)
        graph = generate_ws_graph(
            WsParams(n=40, k=4, p_rewire=0.1, seed=123),
            susceptibility=rng.uniform(0.3, 0.9, size=40),
            self_confidence=rng.uniform(0.2, 0.6, size=40),
        )
        initial = rng.uniform(0.05, 0.95, size=40)
        state = OpinionState(initial=initial, current=initial.copy())
        result = fj_run(graph, state, record=True)
        assert result.converged
        final = result.state.current
        assert np.std(final) < np.std(initial)
        assert np.std(final) > 0.01
        assert result.trajectory.shape[1] == 40

    @given(
        lo=st.floats(0.0, 0.45),
        width=st.floats(0.05, 0.5),
        seed=st.integers(0, 10_000),
    )
    @settings(max_examples=25, deadline=None)
    def test_iterates_stay_inside_initial_interval(self, lo, width, seed):
        hi = min(lo + width, 1.0)
        rng = np.random.default_rng(seed)
        graph = generate_ws_graph(
            WsParams(n=12, k=4, p_rewire=0.3, seed=seed),
            susceptibility=rng.uniform(0, 1, size=12),
            self_confidence=rng.uniform(0, 1, size=12),
        )
        initial = rng.uniform(lo, hi, size=12)
        state = OpinionState(initial=initial, current=initial.copy())
        for _ in range(50):
            state = fj_step(graph, state)
            assert np.all(state.current >= lo - 1e-12)
            assert np.all(state.current <= hi + 1e-12)


def test_graph_round_trips_through_edge_list(tmp_path):
    rng = np.random.default_rng(17)
    graph = generate_ws_graph(
        WsParams(n=15, k=4, p_rewire=0.4, seed=17),
        susceptibility=rng.uniform(0, 1, size=15),
        self_confidence=rng.uniform(0, 1, size=15),
    )
    path = tmp_path / "graph.txt"
    export_graph(graph, path)
    back = import_graph(path)
    assert back.n == graph.n
    assert np.array_equal(back.adjacency, graph.adjacency)
    assert np.array_equal(back.susceptibility, graph.susceptibility)
    assert np.array_equal(back.self_confidence, graph.self_confidence)

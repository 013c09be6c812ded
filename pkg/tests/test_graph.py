import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dimp import graph
from dimp.graph import GraphError, SwitchingDigraph


def two_snapshot(dwell=10.0):
    labels = [0, 1, 2, 3, 4]
    g1 = graph.edges_to_adjacency([(0, 1), (2, 3), (1, 4)], labels)
    g2 = graph.edges_to_adjacency([(1, 2), (3, 4)], labels)
    return SwitchingDigraph((g1, g2), ((0, dwell), (1, dwell)), labels)


def static(edges, labels):
    return SwitchingDigraph((graph.edges_to_adjacency(edges, labels),), ((0, 1.0),), labels)


def test_adjacency_inside_first_dwell():
    g = two_snapshot()
    assert g.slot_at(5.0) == 0
    np.testing.assert_array_equal(g.adjacency_at(5.0), g.snapshots[0])


def test_adjacency_at_switch_instant_is_new_snapshot():
    g = two_snapshot()
    assert g.schedule[g.slot_at(10.0)][0] == 1
    assert g.schedule[g.slot_at(20.0)][0] == 0


def test_adjacency_periodic_wraparound():
    g = two_snapshot()
    assert g.schedule[g.slot_at(g.period + 5.0)][0] == 0
    assert g.schedule[g.slot_at(1000 * g.period + 15.0)][0] == 1


def test_negative_time_rejected():
    with pytest.raises(GraphError):
        two_snapshot().slot_at(-1.0)


def test_switch_times_listed_at_boundaries():
    g = two_snapshot()
    assert g.switch_times(0.0, 45.0) == [10.0, 20.0, 30.0, 40.0]
    assert g.switch_times(10.0, 10.0) == []


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 200, allow_nan=False))
def test_adjacency_piecewise_constant_between_switches(t):
    g = two_snapshot()
    nxt = next(s for s in g.switch_times(t, t + 25.0))
    mid = t + 0.5 * (nxt - t)
    if nxt - t > 1e-9:
        np.testing.assert_array_equal(g.adjacency_at(t), g.adjacency_at(mid))


def test_laplacian_single_edge():
    a = graph.edges_to_adjacency([(0, 1)], [0, 1])
    np.testing.assert_array_equal(graph.laplacian(a), [[0, 0], [-1, 1]])


def test_laplacian_empty_graph():
    np.testing.assert_array_equal(graph.laplacian(np.zeros((3, 3))), np.zeros((3, 3)))


def test_laplacian_complete_three_nodes():
    a = np.ones((3, 3)) - np.eye(3)
    expected = 3 * np.eye(3) - np.ones((3, 3))
    np.testing.assert_array_equal(graph.laplacian(a), expected)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 8))
def test_laplacian_rows_sum_to_zero(seed, n):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 4, (n, n)).astype(float)
    assert np.all(graph.laplacian(a).sum(axis=1) == 0.0)
    b = rng.uniform(0, 2, (n, n))
    assert np.max(np.abs(graph.laplacian(b).sum(axis=1))) <= 1e-12


def test_reduced_laplacian_examples():
    lap = graph.laplacian(graph.edges_to_adjacency([(0, 1)], [0, 1]))
    np.testing.assert_array_equal(graph.reduced_laplacian(lap), [[1]])
    np.testing.assert_array_equal(graph.reduced_laplacian(np.zeros((3, 3))), np.zeros((2, 2)))


def test_reduced_laplacian_first_snapshot():
    g = two_snapshot()
    red = graph.reduced_laplacian(graph.laplacian(g.snapshots[0]))
    # rows: agent 1 hears node 0, agent 3 hears 2, agent 4 hears 1
    expected = np.array([[1, 0, 0, 0], [0, 0, 0, 0], [0, -1, 1, 0], [-1, 0, 0, 1]], float)
    np.testing.assert_array_equal(red, expected)


def test_two_snapshot_network_has_uniform_spanning_tree():
    assert graph.uniformly_contains_spanning_tree(two_snapshot(), root=0, T=20.0)


def test_single_snapshot_of_switching_network_is_not_enough():
    g = two_snapshot()
    assert not graph.has_spanning_tree(g.snapshots[0], g.labels, root=0)
    assert not graph.has_spanning_tree(g.snapshots[1], g.labels, root=0)


def test_short_window_fails_and_names_window():
    res = graph.uniformly_contains_spanning_tree(two_snapshot(), root=0, T=5.0)
    assert not res
    assert "no spanning tree" in res.reason


def test_disconnected_static_graph():
    assert not graph.uniformly_contains_spanning_tree(static([(0, 1)], [0, 1, 2]), root=0)


@pytest.mark.parametrize("T", [0.1, 1.0, 50.0])
def test_chain_static(T):
    assert graph.uniformly_contains_spanning_tree(static([(0, 1), (1, 2)], [0, 1, 2]), root=0, T=T)


def test_aperiodic_schedule_is_flagged():
    labels = [0, 1]
    a = graph.edges_to_adjacency([(0, 1)], labels)
    g = SwitchingDigraph((a,), ((0, 5.0),), labels, periodic=False)
    res = graph.uniformly_contains_spanning_tree(g, root=0, T=1.0)
    assert res.ok and res.horizon_limited


def sync_network():
    labels = [1, 2, 3, 4, 5]
    g1 = graph.edges_to_adjacency([(1, 2), (2, 3), (3, 4)], labels)
    g2 = graph.edges_to_adjacency([(3, 1), (4, 5), (2, 4)], labels)
    return SwitchingDigraph((g1, g2), ((0, 3.0), (1, 3.0)), labels)


def test_sync_network_rooted_component():
    assert graph.rooted_component_check(sync_network(), [1, 2, 3])


def test_root_with_inbound_edge_is_rejected():
    g = static([(0, 1), (1, 0)], [0, 1])
    res = graph.rooted_component_check(g, [0])
    assert not res
    assert "enters V_r" in res.reason


def test_complete_graph_all_roots():
    labels = [0, 1, 2, 3]
    edges = [(i, j) for i in labels for j in labels if i != j]
    assert graph.rooted_component_check(static(edges, labels), labels)


def test_wrong_root_set_not_closed_component():
    # {1, 2} is closed but not strongly connected
    g = static([(1, 2), (2, 3)], [1, 2, 3])
    assert not graph.rooted_component_check(g, [1, 2])


def test_empty_root_set_rejected():
    with pytest.raises(GraphError):
        graph.rooted_component_check(sync_network(), [])


def test_unknown_edge_node():
    with pytest.raises(GraphError):
        graph.edges_to_adjacency([(0, 9)], [0, 1])


def _random_tree_graph(rng, n):
    labels = list(range(n + 1))
    edges = [(int(rng.integers(0, v)), v) for v in range(1, n + 1)]
    snaps = [[] for _ in range(int(rng.integers(1, 4)))]
    for e in edges:
        snaps[int(rng.integers(0, len(snaps)))].append(e)
    mats = tuple(graph.edges_to_adjacency(s, labels) for s in snaps)
    sched = tuple((i, float(rng.uniform(0.5, 3.0))) for i in range(len(mats)))
    return SwitchingDigraph(mats, sched, labels)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 7))
def test_time_averaged_reduced_laplacian_is_positive_stable(seed, n):
    g = _random_tree_graph(np.random.default_rng(seed), n)
    assert graph.uniformly_contains_spanning_tree(g, root=0)
    avg = sum(d * graph.reduced_laplacian(graph.laplacian(g.snapshots[s])) for s, d in g.schedule) / g.period
    assert np.min(np.linalg.eigvals(avg).real) > 0

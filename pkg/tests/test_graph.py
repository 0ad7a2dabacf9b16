import json
import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_joints, random_connected_graph
from wavesource import (
    GraphValidationError,
    NetworkGraph,
    SpectrumError,
    build_laplacian,
    check_identifiability_condition3,
    find_joints,
    is_strategic_set,
    load_topology,
    spectral_decompose,
)
from wavesource.graph import joint_violations, unobserved_modes

R2 = math.sqrt(2.0)


@st.composite
def connected_graphs(draw, max_nodes=12):
    n = draw(st.integers(2, max_nodes))
    seed = draw(st.integers(0, 2**32 - 1))
    extra = draw(st.floats(0.0, 0.8))
    return random_connected_graph(np.random.default_rng(seed), n, extra)


class TestNetworkGraph:
    def test_self_loop_rejected(self):
        with pytest.raises(GraphValidationError, match=r"self-loop at node 2"):
            NetworkGraph.from_edges(3, [(1, 2), (2, 2)])

    def test_out_of_range_rejected(self):
        with pytest.raises(GraphValidationError, match=r"\(1, 7\)"):
            NetworkGraph.from_edges(3, [(1, 7)])

    def test_duplicate_rejected_in_either_orientation(self):
        with pytest.raises(GraphValidationError, match="duplicate edge"):
            NetworkGraph.from_edges(3, [(1, 2), (2, 1)])

    def test_relabel_is_isomorphic(self, five_graph):
        perm = [3, 1, 5, 2, 4]
        g2 = five_graph.relabel(perm)
        lap, lap2 = build_laplacian(five_graph), build_laplacian(g2)
        p = np.zeros((5, 5))
        for k, new in enumerate(perm):
            p[new - 1, k] = 1.0
        np.testing.assert_array_equal(p @ lap @ p.T, lap2)

    def test_json_and_edge_list_agree(self, tmp_path, five_graph):
        js = tmp_path / "g.json"
        js.write_text(json.dumps(five_graph.to_dict()))
        el = tmp_path / "g.txt"
        el.write_text("# five nodes\n" + "\n".join(f"{u} {v}" for u, v in sorted(five_graph.edges)) + "\n")
        assert load_topology(js) == five_graph == load_topology(el)

    def test_edge_list_declares_isolated_nodes(self, tmp_path):
        p = tmp_path / "g.txt"
        p.write_text("nodes 4\n1 2\n2 3\n")
        g = load_topology(p)
        assert g.n_nodes == 4 and not g.is_connected


class TestLaplacian:
    def test_five_node_matrix(self, five_graph):
        expected = np.array(
            [
                [-2, 0, 0, 1, 1],
                [0, -3, 1, 1, 1],
                [0, 1, -2, 1, 0],
                [1, 1, 1, -4, 1],
                [1, 1, 0, 1, -3],
            ],
            dtype=float,
        )
        np.testing.assert_array_equal(build_laplacian(five_graph), expected)

    @settings(max_examples=100, deadline=None)
    @given(connected_graphs())
    def test_rows_sum_to_zero_and_symmetric(self, g):
        lap = build_laplacian(g)
        np.testing.assert_array_equal(lap, lap.T)
        np.testing.assert_allclose(lap.sum(axis=1), 0.0, atol=0)


class TestSpectrum:
    def test_five_node_eigenvalues(self, five_spectrum):
        expected = [0.0, -3 + R2, -3.0, -3 - R2, -5.0]
        np.testing.assert_allclose(five_spectrum.eigenvalues, expected, atol=1e-12)
        np.testing.assert_allclose(five_spectrum.omegas, [0, 1.259, 1.732, 2.10, 2.236], atol=5e-3)

    def test_constant_mode_first(self, five_spectrum):
        np.testing.assert_allclose(five_spectrum.mode(1), np.full(5, 1 / math.sqrt(5)), atol=1e-12)
        assert five_spectrum.omegas[0] == 0.0

    def test_sign_convention(self, five_spectrum):
        for n in range(1, 6):
            v = five_spectrum.mode(n)
            assert v[np.argmax(np.abs(v) >= np.abs(v).max() - 1e-12)] > 0

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    @settings(max_examples=100, deadline=None)
    @given(connected_graphs())
    def test_reconstructs_laplacian(self, g):
        lap = build_laplacian(g)
        sp = spectral_decompose(lap)
        np.testing.assert_allclose(sp.reconstruct(), lap, atol=1e-10)
        np.testing.assert_allclose(sp.vectors.T @ sp.vectors, np.eye(g.n_nodes), atol=1e-10)
        assert np.all(np.diff(sp.eigenvalues) <= 1e-12)

    def test_repeated_eigenvalues_warn(self):
        star = NetworkGraph.from_edges(4, [(1, 2), (1, 3), (1, 4)])
        with pytest.warns(RuntimeWarning, match="repeated"):
            sp = spectral_decompose(build_laplacian(star))
        assert not sp.distinctness_ok

    def test_asymmetric_rejected(self):
        with pytest.raises(SpectrumError, match="symmetric"):
            spectral_decompose(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_arrays_read_only(self, five_spectrum):
        with pytest.raises(ValueError):
            five_spectrum.vectors[0, 0] = 1.0


class TestStrategic:
    def test_observers_one_two_strategic(self, five_spectrum):
        rep = is_strategic_set(five_spectrum, [1, 2])
        assert rep.is_strategic and rep.failing_modes == []

    def test_node_four_is_soft(self, five_spectrum):
        rep = is_strategic_set(five_spectrum, [4])
        assert not rep.is_strategic
        assert rep.failing_modes == [2, 3, 4]

    @pytest.mark.parametrize("k", [1, 2, 3, 5])
    def test_other_single_nodes_strategic(self, five_spectrum, k):
        assert is_strategic_set(five_spectrum, [k]).is_strategic

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    @settings(max_examples=60, deadline=None)
    @given(connected_graphs(max_nodes=9), st.data())
    def test_superset_monotone(self, g, data):
        sp = spectral_decompose(build_laplacian(g))
        nodes = list(g.nodes)
        base = data.draw(st.lists(st.sampled_from(nodes), min_size=1, unique=True))
        extra = data.draw(st.lists(st.sampled_from(nodes), unique=True))
        small = set(unobserved_modes(sp, base))
        big = set(unobserved_modes(sp, sorted(set(base) | set(extra))))
        assert big <= small

    def test_out_of_range_node(self, five_spectrum):
        with pytest.raises(GraphValidationError):
            is_strategic_set(five_spectrum, [6])


class TestJoints:
    def test_single_joint(self, joint4_graph):
        rep = find_joints(joint4_graph)
        assert rep.joints == {4}
        assert len(rep.biconnected_components) == 2

    def test_nine_node_joint(self, nine_graph):
        rep = find_joints(nine_graph)
        assert rep.joints == {5}
        sides = sorted(sorted(rep.component_nodes(c)) for c in range(2))
        assert sides == [[1, 2, 3, 4, 5], [5, 6, 7, 8, 9]]

    def test_tree_needs_four_sensors(self, tree_graph):
        rep = find_joints(tree_graph)
        assert rep.joints == {3, 4}
        assert rep.recommended_nodes == [1, 2, 5, 6]

    def test_biconnected_graph_has_no_joint(self, five_graph):
        rep = find_joints(five_graph)
        assert rep.joints == set()
        assert len(rep.biconnected_components) == 1

    def test_violation_names_unobserved_side(self, nine_graph):
        rep = find_joints(nine_graph)
        assert joint_violations(nine_graph, rep, 1, 2) == [{"joint": 5, "unobserved_side": [6, 7, 8, 9]}]
        assert joint_violations(nine_graph, rep, 1, 7) == []

    @settings(max_examples=200, deadline=None)
    @given(connected_graphs())
    def test_matches_brute_force_and_networkx(self, g):
        rep = find_joints(g)
        assert set(rep.joints) == brute_force_joints(g)
        ng = nx.Graph()
        ng.add_nodes_from(g.nodes)
        ng.add_edges_from(g.edges)
        assert set(rep.joints) == set(nx.articulation_points(ng))
        ours = sorted(sorted(b) for b in rep.biconnected_components)
        theirs = sorted(sorted(tuple(sorted(e)) for e in b) for b in nx.biconnected_component_edges(ng))
        assert ours == theirs


class TestCondition3:
    def test_five_node_passes_with_nonzero_determinants(self, five_spectrum):
        rep = check_identifiability_condition3(five_spectrum, 1, 100.0, 1, 2)
        assert rep.passed
        # independent check: every reduced determinant is far from zero
        a = five_spectrum.laplacian + (math.pi / 100.0) ** 2 * np.eye(5)
        cols = [2, 3, 4]
        for p, q in rep.conditions:
            rows = [r for r in range(5) if r not in (p - 1, q - 1)]
            assert abs(np.linalg.det(a[np.ix_(rows, cols)])) > 1e-3

    def test_nine_node_same_side_fails(self, nine_graph):
        sp = spectral_decompose(build_laplacian(nine_graph))
        rep = check_identifiability_condition3(sp, 1, 100.0, 1, 2)
        assert not rep.passed
        assert {(6, 7), (6, 8), (6, 9), (7, 8), (7, 9), (8, 9)} <= set(rep.singular_pairs)

    def test_nine_node_across_joint_passes(self, nine_graph):
        sp = spectral_decompose(build_laplacian(nine_graph))
        assert check_identifiability_condition3(sp, 1, 100.0, 1, 7).passed

    def test_same_observers_rejected(self, five_spectrum):
        with pytest.raises(GraphValidationError):
            check_identifiability_condition3(five_spectrum, 1, 100.0, 2, 2)

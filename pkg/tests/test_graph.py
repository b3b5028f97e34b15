import json

import numpy as np
import pytest

from fedfuse.graph import (
    SimilarityNetwork,
    build_knn_graph,
    compute_sketch,
    incidence_matrix,
    network_from_json,
    network_to_json,
)

from oracles import brute_knn_edges, laplacian_from_edges, welford_mean_std


def sketches_at(positions):
    return [compute_sketch([[p]], client_id=i + 1) for i, p in enumerate(positions)]


class TestComputeSketch:
    def test_single_row(self):
        sk = compute_sketch([[0.5, -0.2]])
        assert np.allclose(sk.values, [0.5, -0.2, 0.0, 0.0])

    def test_identical_datasets_give_identical_sketches(self):
        data = np.random.default_rng(0).uniform(-1, 1, size=(20, 4))
        a = compute_sketch(data.copy(), client_id=1)
        b = compute_sketch(data.copy(), client_id=2)
        assert np.array_equal(a.values, b.values)

    def test_matches_streaming_oracle(self):
        X = np.random.default_rng(7).uniform(-1, 1, size=(100, 5))
        sk = compute_sketch(X)
        mean, std = welford_mean_std(X)
        assert np.abs(sk.values - np.concatenate([mean, std])).max() < 1e-12

    def test_empty_dataset(self):
        with pytest.raises(ValueError, match="empty client dataset"):
            compute_sketch(np.empty((0, 3)))

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            compute_sketch([[np.nan, 1.0]])


class TestBuildKnnGraph:
    def test_two_nodes(self):
        net = build_knn_graph(sketches_at([0.0, 1.0]), k=1)
        assert net.edges == ((1, 2),)

    def test_k_equals_n_minus_1_is_complete(self):
        pts = np.random.default_rng(3).normal(size=(5, 2))
        net = build_knn_graph([compute_sketch([p]) for p in pts], k=4)
        assert net.n_edges == 10

    def test_two_far_pairs(self):
        net = build_knn_graph(sketches_at([0.0, 1.0, 10.0, 11.0]), k=1)
        assert net.edges == ((1, 2), (3, 4))

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(3, 9))
        pts = rng.normal(size=(n, 3))
        sketches = [compute_sketch([p], client_id=i + 1) for i, p in enumerate(pts)]
        for k in range(1, n):
            net = build_knn_graph(sketches, k)
            assert set(net.edges) == brute_knn_edges(net_points(sketches), k)

    def test_relabeling_invariance(self):
        rng = np.random.default_rng(12)
        pts = rng.normal(size=(6, 2))
        sketches = [compute_sketch([p]) for p in pts]
        net = build_knn_graph(sketches, k=2)
        perm = rng.permutation(6)
        permuted = [compute_sketch([pts[i]]) for i in perm]
        net_p = build_knn_graph(permuted, k=2)
        # position j in the permuted list is original node perm[j]
        inv = {int(p) + 1: j + 1 for j, p in enumerate(perm)}
        remapped = {tuple(sorted((inv[i], inv[j]))) for i, j in net.edges}
        assert remapped == set(net_p.edges)

    def test_edge_count_bounds(self):
        rng = np.random.default_rng(5)
        for n, k in ((4, 1), (6, 2), (8, 3), (10, 9)):
            sketches = [compute_sketch([p]) for p in rng.normal(size=(n, 2))]
            m = build_knn_graph(sketches, k).n_edges
            assert k * n / 2 <= m <= k * n

    def test_k_out_of_range(self):
        sk = sketches_at([0.0, 1.0, 2.0])
        with pytest.raises(ValueError, match="k must be"):
            build_knn_graph(sk, 0)
        with pytest.raises(ValueError, match="k must be"):
            build_knn_graph(sk, 3)

    def test_too_few_clients(self):
        with pytest.raises(ValueError, match="at least 2"):
            build_knn_graph(sketches_at([0.0]), 1)

    def test_mismatched_sketch_lengths(self):
        bad = [compute_sketch([[0.0]]), compute_sketch([[0.0, 1.0]])]
        with pytest.raises(ValueError, match="disagree on length"):
            build_knn_graph(bad, 1)


def net_points(sketches):
    return np.stack([s.values for s in sketches])


class TestIncidenceMatrix:
    def test_single_edge_column(self):
        Q = incidence_matrix(SimilarityNetwork(2, ((1, 2),), 1))
        assert np.array_equal(Q, [[1.0], [-1.0]])

    def test_path_laplacian(self):
        Q = incidence_matrix(SimilarityNetwork(3, ((1, 2), (2, 3)), 1))
        expect = np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1]], dtype=float)
        assert np.array_equal(Q @ Q.T, expect)

    def test_empty_edge_set(self):
        Q = incidence_matrix(SimilarityNetwork(4, (), 1))
        assert Q.shape == (4, 0)
        assert np.array_equal(Q @ Q.T, np.zeros((4, 4)))

    def test_column_structure(self):
        net = SimilarityNetwork(5, ((1, 3), (2, 5), (3, 4)), 1)
        Q = incidence_matrix(net)
        assert np.array_equal(np.sort(Q, axis=0)[[0, -1]], [[-1.0] * 3, [1.0] * 3])
        assert np.abs(Q).sum(axis=0).tolist() == [2.0] * 3
        assert Q.sum(axis=0).tolist() == [0.0] * 3

    @pytest.mark.parametrize("seed", range(4))
    def test_gram_equals_laplacian(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(3, 9))
        sketches = [compute_sketch([p]) for p in rng.normal(size=(n, 2))]
        net = build_knn_graph(sketches, k=min(2, n - 1))
        Q = incidence_matrix(net)
        L = laplacian_from_edges(n, net.edges)
        assert np.abs(Q @ Q.T - L).max() < 1e-12


class TestNetworkValidation:
    def test_self_loop_rejected(self):
        with pytest.raises(ValueError, match="invalid"):
            SimilarityNetwork(3, ((2, 2),), 1)

    def test_duplicate_edge_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            SimilarityNetwork(3, ((1, 2), (1, 2)), 1)

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError, match="invalid"):
            SimilarityNetwork(3, ((1, 4),), 1)


class TestNetworkJson:
    def test_round_trip(self):
        net = SimilarityNetwork(4, ((1, 2), (2, 4)), 2)
        assert network_from_json(network_to_json(net)) == net

    def test_schema(self):
        payload = json.loads(network_to_json(SimilarityNetwork(2, ((1, 2),), 1)))
        assert payload == {"n_nodes": 2, "k": 1, "edges": [[1, 2]]}

    def test_malformed_json(self):
        with pytest.raises(ValueError, match="not valid JSON"):
            network_from_json("{nope")

    def test_missing_key(self):
        with pytest.raises(ValueError, match="missing key"):
            network_from_json('{"n_nodes": 2, "edges": []}')

    def test_bad_edges_shape(self):
        with pytest.raises(ValueError, match="list of"):
            network_from_json('{"n_nodes": 2, "k": 1, "edges": [[1, 2, 3]]}')

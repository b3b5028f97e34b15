"""Client-similarity network built from per-client data sketches.

Nodes are clients (1-based indices). Edges join clients whose locally
computed sketches are close in Euclidean distance; the incidence matrix of
the network is the coupling operator consumed by the personalized-block
solver.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SketchVector",
    "SimilarityNetwork",
    "compute_sketch",
    "build_knn_graph",
    "incidence_matrix",
    "network_to_json",
    "network_from_json",
]


@dataclass(frozen=True)
class SketchVector:
    """Compact summary of one client's local data.

    ``values`` holds the per-feature means followed by the per-feature
    population standard deviations, so its length is twice the feature
    count. Only sketches ever leave a client, never raw rows.
    """

    client_id: int
    values: np.ndarray


def compute_sketch(features, client_id: int = 0) -> SketchVector:
    """Summarize a client's feature table as column means and stds.

    Standard deviations use the population convention (divisor n); a
    single-row table therefore has zero std in every column.
    """
    X = np.asarray(features, dtype=float)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D feature table, got shape {X.shape}")
    if X.shape[0] == 0:
        raise ValueError("empty client dataset")
    if not np.isfinite(X).all():
        raise ValueError("client dataset contains non-finite values")
    values = np.concatenate([X.mean(axis=0), X.std(axis=0)])
    values.setflags(write=False)
    return SketchVector(client_id=client_id, values=values)


@dataclass(frozen=True)
class SimilarityNetwork:
    """Undirected KNN graph over clients.

    Nodes are 1-based; every edge is stored once as ``(i, j)`` with
    ``i < j``. ``k`` records the neighbor count used at construction.
    """

    n_nodes: int
    edges: tuple[tuple[int, int], ...]
    k: int

    def __post_init__(self) -> None:
        if self.n_nodes < 1:
            raise ValueError("network needs at least one node")
        seen = set()
        for i, j in self.edges:
            if not (1 <= i < j <= self.n_nodes):
                raise ValueError(
                    f"edge ({i}, {j}) invalid for a {self.n_nodes}-node network"
                )
            if (i, j) in seen:
                raise ValueError(f"duplicate edge ({i}, {j})")
            seen.add((i, j))

    @property
    def n_edges(self) -> int:
        return len(self.edges)


def build_knn_graph(sketches: list[SketchVector], k: int) -> SimilarityNetwork:
    """Union-symmetrized K-nearest-neighbor graph over client sketches.

    Node ``n`` corresponds to ``sketches[n-1]``. An edge (i, j) exists iff
    j is among i's k nearest sketches by Euclidean distance or vice versa.
    Distance ties are broken in favor of the lower node index, which makes
    the construction reproducible across platforms.
    """
    n = len(sketches)
    if n < 2:
        raise ValueError("need at least 2 clients to build a similarity network")
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must be in [1, {n - 1}], got {k}")
    lengths = {np.asarray(s.values).shape for s in sketches}
    if len(lengths) != 1:
        raise ValueError(f"sketches disagree on length: {sorted(lengths)}")

    points = np.stack([np.asarray(s.values, dtype=float) for s in sketches])
    diff = points[:, None, :] - points[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=2))

    edges: set[tuple[int, int]] = set()
    for i in range(n):
        order = sorted((dist[i, j], j) for j in range(n) if j != i)
        for _, j in order[:k]:
            a, b = (i, j) if i < j else (j, i)
            edges.add((a + 1, b + 1))
    return SimilarityNetwork(n_nodes=n, edges=tuple(sorted(edges)), k=k)


def incidence_matrix(network: SimilarityNetwork) -> np.ndarray:
    """Node-edge incidence matrix of the network (N x M).

    Column m corresponds to ``network.edges[m] = (i, j)`` and carries +1 at
    row i-1 and -1 at row j-1. Multiplying a per-client matrix by this
    operator stacks the edgewise differences column by column.
    """
    Q = np.zeros((network.n_nodes, network.n_edges))
    for m, (i, j) in enumerate(network.edges):
        Q[i - 1, m] = 1.0
        Q[j - 1, m] = -1.0
    return Q


def network_to_json(network: SimilarityNetwork) -> str:
    """Serialize as ``{"n_nodes", "k", "edges"}`` with 1-based indices."""
    payload = {
        "n_nodes": network.n_nodes,
        "k": network.k,
        "edges": [[i, j] for i, j in network.edges],
    }
    return json.dumps(payload)


def network_from_json(text: str) -> SimilarityNetwork:
    """Inverse of :func:`network_to_json`, with schema validation."""
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"network file is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ValueError("network file must hold a JSON object")
    for key in ("n_nodes", "k", "edges"):
        if key not in payload:
            raise ValueError(f"network file missing key {key!r}")
    edges = payload["edges"]
    if not isinstance(edges, list) or any(
        not isinstance(e, list) or len(e) != 2 for e in edges
    ):
        raise ValueError("network 'edges' must be a list of [i, j] pairs")
    return SimilarityNetwork(
        n_nodes=int(payload["n_nodes"]),
        edges=tuple((int(i), int(j)) for i, j in edges),
        k=int(payload["k"]),
    )

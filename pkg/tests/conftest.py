import os
from pathlib import Path

import numpy as np
import pytest

from gridlay.graph import Graph


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "mutag: needs the MUTAG TU-format dataset on disk"
    )


def mutag_dir() -> Path | None:
    """Locate MUTAG flat files: $GRIDLAY_DATA/MUTAG or <repo>/data/MUTAG."""
    candidates = []
    env = os.environ.get("GRIDLAY_DATA")
    if env:
        candidates.append(Path(env) / "MUTAG")
    candidates.append(Path(__file__).resolve().parents[1] / "data" / "MUTAG")
    for c in candidates:
        if (c / "MUTAG_A.txt").is_file():
            return c
    return None


requires_mutag = pytest.mark.skipif(
    mutag_dir() is None,
    reason="MUTAG dataset not present (place TU files under data/MUTAG "
    "or set GRIDLAY_DATA); see README",
)


def tu_dataset_dir(name: str) -> Path | None:
    env = os.environ.get("GRIDLAY_DATA")
    candidates = []
    if env:
        candidates.append(Path(env) / name)
    candidates.append(Path(__file__).resolve().parents[1] / "data" / name)
    for c in candidates:
        if (c / f"{name}_A.txt").is_file():
            return c
    return None


requires_proteins = pytest.mark.skipif(
    tu_dataset_dir("PROTEINS") is None,
    reason="PROTEINS dataset not present (see README)",
)


def complete_graph(n: int) -> Graph:
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    return Graph(n, np.asarray(edges, dtype=np.int64))


def path_graph(n: int) -> Graph:
    return Graph(n, np.asarray([(i, i + 1) for i in range(n - 1)], dtype=np.int64))


def random_connected_graph(n: int, rng: np.random.Generator, p: float | None = None) -> Graph:
    """Random graph made connected by chaining a random spanning permutation."""
    if p is None:
        p = float(rng.uniform(0.2, 0.6))
    edges = {(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p}
    perm = rng.permutation(n)
    for a, b in zip(perm[:-1], perm[1:]):
        edges.add((min(int(a), int(b)), max(int(a), int(b))))
    return Graph(n, np.asarray(sorted(edges), dtype=np.int64))


def random_geometric_graph(n: int, radius: float, rng: np.random.Generator) -> Graph:
    """Connected 2D geometric graph (radius grown until connected)."""
    from gridlay.graph import connected_components

    pts = rng.uniform(0.0, 1.0, (n, 2))
    r = radius
    while True:
        d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1)
        ii, jj = np.nonzero(np.triu(d2 <= r * r, k=1))
        g = Graph(n, np.column_stack([ii, jj]))
        if len(connected_components(g)) == 1:
            return g
        r *= 1.3


def write_tiny_tu_dataset(root: Path, name: str = "TINY") -> Path:
    """Three small graphs with node labels: a triangle, an edge, a 4-path."""
    root.mkdir(parents=True, exist_ok=True)
    # graph 1: vertices 1-3 (triangle), graph 2: vertices 4-5, graph 3: 6-9
    edges = [(1, 2), (2, 1), (2, 3), (3, 2), (1, 3), (3, 1),
             (4, 5), (5, 4),
             (6, 7), (7, 6), (7, 8), (8, 7), (8, 9), (9, 8)]
    (root / f"{name}_A.txt").write_text(
        "\n".join(f"{a}, {b}" for a, b in edges) + "\n"
    )
    indicator = [1, 1, 1, 2, 2, 3, 3, 3, 3]
    (root / f"{name}_graph_indicator.txt").write_text(
        "\n".join(str(i) for i in indicator) + "\n"
    )
    (root / f"{name}_graph_labels.txt").write_text("1\n-1\n1\n")
    node_labels = [0, 1, 2, 0, 0, 2, 1, 1, 0]
    (root / f"{name}_node_labels.txt").write_text(
        "\n".join(str(v) for v in node_labels) + "\n"
    )
    return root


def floyd_warshall(g: Graph) -> np.ndarray:
    n = g.num_vertices
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0.0)
    for a, b in g.edges:
        d[a, b] = d[b, a] = 1.0
    for k in range(n):
        d = np.minimum(d, d[:, k:k + 1] + d[k:k + 1, :])
    return d

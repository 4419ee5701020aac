"""Graph data model, dataset ingestion, and hop-distance computation."""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph


class DatasetError(ValueError):
    """Raised when a dataset directory or graph file cannot be parsed."""


def _normalize_edges(edges, num_vertices: int) -> np.ndarray:
    """Canonicalize to a unique (E, 2) int64 array with i < j, sorted rows."""
    arr = np.asarray(edges, dtype=np.int64)
    if arr.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"edges must be an (E, 2) array, got shape {arr.shape}")
    if arr.min() < 0 or arr.max() >= num_vertices:
        raise ValueError("edge endpoint out of range")
    if np.any(arr[:, 0] == arr[:, 1]):
        raise ValueError("self-loops are not allowed")
    lo = np.minimum(arr[:, 0], arr[:, 1])
    hi = np.maximum(arr[:, 0], arr[:, 1])
    canon = np.unique(np.column_stack([lo, hi]), axis=0)
    return canon


@dataclass(frozen=True)
class Graph:
    """Undirected graph with optional per-vertex feature vectors and labels.

    Edges are stored canonically: unique unordered pairs (i, j) with i < j,
    sorted lexicographically. Instances are immutable and safe to share
    across threads.
    """

    num_vertices: int
    edges: np.ndarray
    features: np.ndarray | None = None
    labels: np.ndarray | None = None
    graph_label: int | None = None

    def __post_init__(self):
        if self.num_vertices < 0:
            raise ValueError("num_vertices must be non-negative")
        edges = _normalize_edges(self.edges, self.num_vertices)
        edges.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        if self.features is not None:
            feats = np.asarray(self.features, dtype=np.float64)
            if feats.ndim != 2 or feats.shape[0] != self.num_vertices:
                raise ValueError(
                    f"features must be ({self.num_vertices}, F), got {feats.shape}"
                )
            if feats.shape[1] < 1:
                raise ValueError("feature dimension must be >= 1")
            feats.setflags(write=False)
            object.__setattr__(self, "features", feats)
        if self.labels is not None:
            labs = np.asarray(self.labels, dtype=np.int64)
            if labs.shape != (self.num_vertices,):
                raise ValueError("labels must be one integer per vertex")
            labs.setflags(write=False)
            object.__setattr__(self, "labels", labs)

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency in CSR form."""
        n = self.num_vertices
        if self.num_edges == 0:
            return sp.csr_matrix((n, n), dtype=np.int8)
        i, j = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * len(i), dtype=np.int8)
        rows = np.concatenate([i, j])
        cols = np.concatenate([j, i])
        return sp.csr_matrix((data, (rows, cols)), shape=(n, n))

    @cached_property
    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.num_vertices, dtype=np.int64)
        if self.num_edges:
            np.add.at(deg, self.edges[:, 0], 1)
            np.add.at(deg, self.edges[:, 1], 1)
        deg.setflags(write=False)
        return deg

    def subgraph(self, vertices) -> "Graph":
        """Induced subgraph on `vertices`, relabeled 0..k-1 in the given order."""
        verts = np.asarray(sorted(int(v) for v in vertices), dtype=np.int64)
        if len(np.unique(verts)) != len(verts):
            raise ValueError("duplicate vertices in subgraph selection")
        index = -np.ones(self.num_vertices, dtype=np.int64)
        index[verts] = np.arange(len(verts))
        if self.num_edges:
            mask = (index[self.edges[:, 0]] >= 0) & (index[self.edges[:, 1]] >= 0)
            sub_edges = index[self.edges[mask]]
        else:
            sub_edges = np.empty((0, 2), dtype=np.int64)
        feats = self.features[verts] if self.features is not None else None
        labs = self.labels[verts] if self.labels is not None else None
        return Graph(len(verts), sub_edges, feats, labs, self.graph_label)


@dataclass(frozen=True)
class DistanceMatrix:
    """All-pairs graph-theoretic (hop) distances with a finite sentinel for
    unreachable pairs."""

    n: int
    d: np.ndarray
    disconnected_sentinel: float

    def __post_init__(self):
        d = np.asarray(self.d, dtype=np.float64)
        if d.shape != (self.n, self.n):
            raise ValueError("distance matrix shape mismatch")
        d.setflags(write=False)
        object.__setattr__(self, "d", d)


def shortest_path_distances(g: Graph) -> DistanceMatrix:
    """Hop-count distances between all vertex pairs (unweighted BFS).

    Unreachable pairs receive a finite sentinel: twice the largest finite
    distance observed in the graph (2.0 when no pair is connected at all),
    which keeps downstream stress energies finite while pushing separate
    components apart.
    """
    n = g.num_vertices
    if n == 0:
        return DistanceMatrix(0, np.zeros((0, 0)), 2.0)
    d = csgraph.shortest_path(g.adjacency, method="D", unweighted=True, directed=False)
    finite = d[np.isfinite(d)]
    max_finite = float(finite.max()) if finite.size else 0.0
    sentinel = 2.0 * max_finite if max_finite >= 1.0 else 2.0
    d = np.where(np.isfinite(d), d, sentinel)
    return DistanceMatrix(n, d, sentinel)


def connected_components(g: Graph) -> list[np.ndarray]:
    """Maximal connected vertex sets, each sorted ascending, ordered by
    smallest member."""
    n = g.num_vertices
    if n == 0:
        return []
    _, labels = csgraph.connected_components(g.adjacency, directed=False)
    comps: dict[int, list[int]] = {}
    for v, lab in enumerate(labels):
        comps.setdefault(int(lab), []).append(v)
    out = [np.asarray(sorted(vs), dtype=np.int64) for vs in comps.values()]
    out.sort(key=lambda a: int(a[0]))
    return out


# ---------------------------------------------------------------------------
# Ingestion
# ---------------------------------------------------------------------------

def _read_int_lines(path: Path, what: str) -> list[int]:
    try:
        values = []
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            line = line.strip()
            if not line:
                continue
            try:
                values.append(int(float(line)))
            except ValueError as exc:
                raise DatasetError(f"{path.name}:{lineno}: bad {what} value {line!r}") from exc
        return values
    except OSError as exc:
        raise DatasetError(f"cannot read {path}: {exc}") from exc


def load_tu_dataset(path, name: str) -> list[Graph]:
    """Load a TU-Dortmund flat-file benchmark into a list of Graphs.

    Expects `<name>_A.txt` (1-indexed comma-separated edge rows),
    `<name>_graph_indicator.txt` and `<name>_graph_labels.txt`; the
    optional `<name>_node_labels.txt` is one-hot encoded into per-vertex
    features over the distinct labels observed in the dataset.
    """
    root = Path(path)
    adj_path = root / f"{name}_A.txt"
    ind_path = root / f"{name}_graph_indicator.txt"
    lab_path = root / f"{name}_graph_labels.txt"
    for p in (adj_path, ind_path, lab_path):
        if not p.is_file():
            raise DatasetError(f"missing dataset file: {p}")

    indicator = np.asarray(_read_int_lines(ind_path, "graph indicator"), dtype=np.int64)
    total_nodes = len(indicator)
    if total_nodes == 0:
        raise DatasetError(f"{ind_path.name}: empty graph indicator")
    graph_ids = np.unique(indicator)

    graph_labels = _read_int_lines(lab_path, "graph label")
    if len(graph_labels) != len(graph_ids):
        raise DatasetError(
            f"{lab_path.name}: {len(graph_labels)} labels for {len(graph_ids)} graphs"
        )

    node_labels = None
    nl_path = root / f"{name}_node_labels.txt"
    if nl_path.is_file():
        node_labels = np.asarray(_read_int_lines(nl_path, "node label"), dtype=np.int64)
        if len(node_labels) != total_nodes:
            raise DatasetError(
                f"{nl_path.name}: {len(node_labels)} labels for {total_nodes} nodes"
            )
        distinct = np.unique(node_labels)
        one_hot = np.zeros((total_nodes, len(distinct)), dtype=np.float64)
        one_hot[np.arange(total_nodes), np.searchsorted(distinct, node_labels)] = 1.0

    edges_raw: list[tuple[int, int]] = []
    for lineno, line in enumerate(adj_path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise DatasetError(f"{adj_path.name}:{lineno}: expected two columns")
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise DatasetError(f"{adj_path.name}:{lineno}: bad vertex index") from exc
        if not (1 <= a <= total_nodes and 1 <= b <= total_nodes):
            raise DatasetError(f"{adj_path.name}:{lineno}: dangling vertex index")
        edges_raw.append((a - 1, b - 1))

    # Per-graph vertex ranges; TU files number nodes consecutively by graph.
    first_node: dict[int, int] = {}
    counts: dict[int, int] = {}
    for node, gid in enumerate(indicator):
        gid = int(gid)
        first_node.setdefault(gid, node)
        counts[gid] = counts.get(gid, 0) + 1

    per_graph_edges: dict[int, list[tuple[int, int]]] = {int(g): [] for g in graph_ids}
    for lineno, (a, b) in enumerate(edges_raw, start=1):
        ga, gb = int(indicator[a]), int(indicator[b])
        if ga != gb:
            raise DatasetError(f"{adj_path.name}:{lineno}: edge crosses graphs {ga} and {gb}")
        if a != b:
            per_graph_edges[ga].append((a - first_node[ga], b - first_node[ga]))

    graphs = []
    for k, gid in enumerate(int(g) for g in graph_ids):
        n = counts[gid]
        start = first_node[gid]
        feats = one_hot[start:start + n] if node_labels is not None else None
        try:
            graphs.append(
                Graph(
                    num_vertices=n,
                    edges=np.asarray(per_graph_edges[gid], dtype=np.int64).reshape(-1, 2),
                    features=feats,
                    graph_label=int(graph_labels[k]),
                )
            )
        except ValueError as exc:
            raise DatasetError(f"{name} graph {gid}: {exc}") from exc
    return graphs


def load_json_graph(path) -> Graph:
    """Read the JSON graph format `{"n", "edges", "features"?, "labels"?,
    "graph_label"?}`."""
    p = Path(path)
    try:
        payload = json.loads(p.read_text())
    except OSError as exc:
        raise DatasetError(f"cannot read {p}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{p.name}: invalid JSON: {exc}") from exc
    try:
        return Graph(
            num_vertices=int(payload["n"]),
            edges=np.asarray(payload.get("edges", []), dtype=np.int64).reshape(-1, 2),
            features=payload.get("features"),
            labels=payload.get("labels"),
            graph_label=payload.get("graph_label"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"{p.name}: {exc}") from exc


def save_json_graph(g: Graph, path) -> None:
    payload: dict = {"n": g.num_vertices, "edges": g.edges.tolist()}
    if g.features is not None:
        payload["features"] = g.features.tolist()
    if g.labels is not None:
        payload["labels"] = g.labels.tolist()
    if g.graph_label is not None:
        payload["graph_label"] = g.graph_label
    Path(path).write_text(json.dumps(payload))


def load_edge_list(path) -> Graph:
    """Read a whitespace-separated 0-indexed edge list; n = max index + 1."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise DatasetError(f"cannot read {p}: {exc}") from exc
    edges = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise DatasetError(f"{p.name}:{lineno}: expected two columns")
        try:
            edges.append((int(parts[0]), int(parts[1])))
        except ValueError as exc:
            raise DatasetError(f"{p.name}:{lineno}: bad vertex index") from exc
    if not edges:
        raise DatasetError(f"{p.name}: no edges found")
    n = int(max(max(e) for e in edges)) + 1
    return Graph(n, np.asarray(edges, dtype=np.int64))

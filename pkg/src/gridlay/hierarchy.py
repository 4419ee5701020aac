"""Hierarchical layout: balanced spectral partitioning, connectivity graphs,
recursive layout of subgraphs, and composition into one global grid."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.linalg

from .graph import Graph, connected_components
from .layout import GridLayout, LayoutConfig, gpgl

EIG_TOL = 1e-8
EIG_MAX_ITERS = 5000
_PARENT_RETRIES = 10


class GridCapacityError(ValueError):
    """A layout does not fit the grid it must be embedded in."""


@dataclass(frozen=True)
class Partition:
    """Disjoint cover of a graph's vertices into non-empty parts."""

    parts: list
    part_of: np.ndarray
    used_fallback: bool = False

    def __post_init__(self):
        seen = np.concatenate([np.asarray(p) for p in self.parts]) if self.parts else np.array([])
        n = len(self.part_of)
        if len(seen) != n or len(np.unique(seen)) != n:
            raise ValueError("parts must partition the vertex set")
        if any(len(p) == 0 for p in self.parts):
            raise ValueError("empty part")

    @property
    def num_parts(self) -> int:
        return len(self.parts)


@dataclass(frozen=True)
class HierarchyConfig:
    """Recursion parameters: subgraphs per internal node and the two grid
    sizes (parent level, leaf level)."""

    fanout: int = 32
    parent_grid: tuple[int, int] = (16, 16)
    child_grid: tuple[int, int] = (16, 16)
    layout_cfg: LayoutConfig = field(default_factory=LayoutConfig)

    def __post_init__(self):
        if self.fanout < 2:
            raise ValueError("fanout must be at least 2")
        if min(self.parent_grid) < 1 or min(self.child_grid) < 1:
            raise ValueError("grid dimensions must be positive")
        if self.fanout > self.parent_grid[0] * self.parent_grid[1]:
            raise ValueError(
                f"fanout {self.fanout} exceeds parent grid capacity "
                f"{self.parent_grid[0] * self.parent_grid[1]}"
            )


@dataclass
class PartitionNode:
    """One node of the recursion tree: a vertex subset, its cell within the
    parent grid, and child nodes (empty for leaves)."""

    vertices: np.ndarray
    placement: tuple[int, int] | None
    depth: int
    children: list = field(default_factory=list)
    ncut_fallback: bool = False
    leaf_layout: GridLayout | None = None

    def to_json_dict(self) -> dict:
        return {
            "vertices": self.vertices.tolist(),
            "placement": list(self.placement) if self.placement is not None else None,
            "depth": self.depth,
            "ncut_fallback": self.ncut_fallback,
            "children": [c.to_json_dict() for c in self.children],
        }


@dataclass
class PartitionTree:
    """Recursion tree plus the grids it composes into."""

    root: PartitionNode
    depth: int
    parent_grid: tuple[int, int]
    child_grid: tuple[int, int]
    anchor: tuple[int, int] = (0, 0)

    @property
    def grid_shape(self) -> tuple[int, int]:
        w = self.child_grid[0] * self.parent_grid[0] ** max(self.depth - 1, 0)
        h = self.child_grid[1] * self.parent_grid[1] ** max(self.depth - 1, 0)
        return (w, h)

    def to_json_dict(self) -> dict:
        return {
            "depth": self.depth,
            "parent_grid": list(self.parent_grid),
            "child_grid": list(self.child_grid),
            "anchor": list(self.anchor),
            "grid_shape": list(self.grid_shape),
            "root": self.root.to_json_dict(),
        }

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict()))


# ---------------------------------------------------------------------------
# Balanced normalized cut
# ---------------------------------------------------------------------------

def normalized_cut(g: Graph, j: int, balance_factor: float = 2.0) -> Partition:
    """Split a graph into `j` non-empty, approximately equal parts.

    Recursive spectral bisection: each step splits a part along a sweep of
    the generalized Laplacian eigenvector, choosing the threshold with the
    lowest normalized-cut value among those keeping every eventual part
    within `balance_factor` times the ideal size. The default factor 2
    guarantees max part size <= 2 * ceil(n / j); callers needing parts to
    fit a fixed window may tighten it (>= 1 always remains feasible).
    """
    n = g.num_vertices
    if not 1 <= j <= n:
        raise ValueError(f"need 1 <= j <= {n}, got {j}")
    if balance_factor < 1.0:
        raise ValueError("balance_factor must be >= 1")
    bound = math.ceil(balance_factor * math.ceil(n / j))
    adj_list = _adjacency_lists(g)

    comps = connected_components(g)
    fallback = False
    pieces: list[np.ndarray] = []
    if len(comps) == 1:
        pieces, fallback = _split_with_quota(np.arange(n), j, bound, adj_list, g)
    else:
        quotas = _component_quotas([len(c) for c in comps], j, n)
        zero_quota: list[np.ndarray] = []
        for comp, quota in zip(comps, quotas):
            if quota == 0:
                zero_quota.append(comp)
            elif quota == 1:
                pieces.append(comp)
            else:
                sub, fb = _split_with_quota(comp, quota, bound, adj_list, g)
                pieces.extend(sub)
                fallback = fallback or fb
        # Quota-less components ride along with the currently smallest part.
        for comp in sorted(zero_quota, key=len, reverse=True):
            k = min(range(len(pieces)), key=lambda i: (len(pieces[i]), int(pieces[i][0])))
            pieces[k] = np.asarray(sorted(np.concatenate([pieces[k], comp])), dtype=np.int64)

    pieces = [np.asarray(sorted(p), dtype=np.int64) for p in pieces]
    pieces.sort(key=lambda p: int(p[0]))
    part_of = np.empty(n, dtype=np.int64)
    for idx, p in enumerate(pieces):
        part_of[p] = idx
    return Partition(pieces, part_of, used_fallback=fallback)


def _adjacency_lists(g: Graph) -> list[np.ndarray]:
    adj = g.adjacency
    return [adj.indices[adj.indptr[v]:adj.indptr[v + 1]] for v in range(g.num_vertices)]


def _component_quotas(sizes: list[int], j: int, n: int) -> list[int]:
    """Largest-remainder allocation of j part-quotas across components,
    capped at component size."""
    ideal = [s * j / n for s in sizes]
    quotas = [min(int(x), s) for x, s in zip(ideal, sizes)]
    remainders = sorted(
        range(len(sizes)),
        key=lambda i: (-(ideal[i] - int(ideal[i])), -sizes[i], i),
    )
    deficit = j - sum(quotas)
    k = 0
    while deficit > 0:
        i = remainders[k % len(remainders)]
        if quotas[i] < sizes[i]:
            quotas[i] += 1
            deficit -= 1
        k += 1
        if k > 4 * len(sizes) * (j + 1):
            raise RuntimeError("quota allocation failed")  # pragma: no cover
    return quotas


def _split_with_quota(
    verts: np.ndarray, quota: int, bound: int, adj_list, g: Graph
) -> tuple[list[np.ndarray], bool]:
    """Recursively bisect `verts` until `quota` parts exist, keeping each
    side's size compatible with its own quota share of `bound`. Both the
    eigenvector and the sweep objective live on the induced subgraph."""
    if quota == 1:
        return [np.asarray(verts, dtype=np.int64)], False
    verts = np.asarray(verts, dtype=np.int64)
    local = {int(v): i for i, v in enumerate(verts)}
    neighbors = [
        np.asarray([local[int(u)] for u in adj_list[v] if int(u) in local], dtype=np.int64)
        for v in verts
    ]
    order, fallback = _bisection_order(len(verts), neighbors, verts)
    k, qa, qb = _best_threshold(order, neighbors, quota, bound)
    left, right = verts[order[:k]], verts[order[k:]]
    parts_a, fa = _split_with_quota(left, qa, bound, adj_list, g)
    parts_b, fb = _split_with_quota(right, qb, bound, adj_list, g)
    return parts_a + parts_b, fallback or fa or fb


def _bisection_order(m: int, neighbors, verts: np.ndarray) -> tuple[np.ndarray, bool]:
    """Local vertex order for the sweep: by eigenvector value for connected
    parts, by connected component (then index) otherwise."""
    if m <= 2:
        return np.arange(m, dtype=np.int64), False
    comp_ids = _local_components(m, neighbors)
    if comp_ids.max() > 0:
        # Disconnected part: group whole components (largest first) so the
        # sweep can realize zero-cut thresholds.
        sizes = np.bincount(comp_ids)
        rank = {c: r for r, c in enumerate(np.argsort(-sizes, kind="stable"))}
        order = sorted(range(m), key=lambda i: (rank[int(comp_ids[i])], int(verts[i])))
        return np.asarray(order, dtype=np.int64), False
    fiedler = _fiedler_vector(m, neighbors)
    if fiedler is None:
        return _bfs_order(m, neighbors), True
    return np.lexsort((verts, fiedler)), False


def _local_components(m: int, neighbors) -> np.ndarray:
    comp = -np.ones(m, dtype=np.int64)
    cid = 0
    for start in range(m):
        if comp[start] >= 0:
            continue
        stack = [start]
        comp[start] = cid
        while stack:
            v = stack.pop()
            for u in neighbors[v]:
                if comp[u] < 0:
                    comp[u] = cid
                    stack.append(u)
        cid += 1
    return comp


def _bfs_order(m: int, neighbors) -> np.ndarray:
    start = 0
    seen = np.zeros(m, dtype=bool)
    seen[start] = True
    queue = [start]
    order = []
    while queue:
        v = queue.pop(0)
        order.append(v)
        for u in sorted(int(u) for u in neighbors[v]):
            if not seen[u]:
                seen[u] = True
                queue.append(u)
    return np.asarray(order, dtype=np.int64)


def _fiedler_vector(m: int, neighbors) -> np.ndarray | None:
    """Second-smallest generalized eigenvector of (D - W) x = lambda D x for a
    connected induced subgraph, via deflated inverse iteration on the
    symmetric normalized Laplacian. None when the solver fails to converge."""
    w = np.zeros((m, m))
    for v, ns in enumerate(neighbors):
        w[v, ns] = 1.0
    deg = w.sum(axis=1)
    dm12 = 1.0 / np.sqrt(deg)
    lsym = -(dm12[:, None] * w * dm12[None, :])
    np.fill_diagonal(lsym, lsym.diagonal() + 1.0)
    u0 = np.sqrt(deg)
    u0 /= np.linalg.norm(u0)
    a = lsym + 2.0 * np.outer(u0, u0)
    try:
        chol = scipy.linalg.cho_factor(a, check_finite=False)
    except scipy.linalg.LinAlgError:
        return None
    rng = np.random.default_rng(20240801 + m)
    v = rng.standard_normal(m)
    v -= (u0 @ v) * u0
    v /= np.linalg.norm(v)
    for _ in range(EIG_MAX_ITERS):
        v = scipy.linalg.cho_solve(chol, v, check_finite=False)
        v -= (u0 @ v) * u0
        nrm = np.linalg.norm(v)
        if nrm == 0 or not np.isfinite(nrm):
            return None
        v /= nrm
        lv = lsym @ v
        theta = v @ lv
        if np.linalg.norm(lv - theta * v) <= EIG_TOL:
            return dm12 * v
    return None


def _best_threshold(order: np.ndarray, neighbors, quota: int, bound: int):
    """Sweep the ordered (local) vertices, returning (k, quota_left,
    quota_right) for the feasible prefix size with minimum normalized-cut
    value on the induced subgraph. Ties prefer the more balanced split,
    then the smaller k."""
    m = len(order)
    qm, qM = quota // 2, quota - quota // 2
    in_prefix = np.zeros(m, dtype=bool)
    vol_total = sum(len(ns) for ns in neighbors)
    cut = 0
    vol1 = 0
    best = None
    for k in range(1, m):
        v = int(order[k - 1])
        internal = int(in_prefix[neighbors[v]].sum()) if len(neighbors[v]) else 0
        cut += len(neighbors[v]) - 2 * internal
        vol1 += len(neighbors[v])
        in_prefix[v] = True
        assign = _feasible_assignment(k, m - k, qm, qM, bound)
        if assign is None:
            continue
        vol2 = vol_total - vol1
        value = _ncut_value(cut, vol1, vol2)
        key = (value, abs(2 * k - m), k)
        if best is None or key < best[0]:
            best = (key, k, assign)
    if best is None:
        raise RuntimeError(
            f"no feasible bisection threshold for part of size {m} with quota {quota}"
        )  # pragma: no cover - windows are non-empty by construction
    _, k, (qa, qb) = best
    return k, qa, qb


def _feasible_assignment(s1: int, s2: int, qm: int, qM: int, bound: int):
    first = ((qM, qm),) if s1 >= s2 else ((qm, qM),)
    for qa, qb in first + ((qm, qM), (qM, qm)):
        if qa <= s1 <= qa * bound and qb <= s2 <= qb * bound:
            return qa, qb
    return None


def _ncut_value(cut: int, vol1: int, vol2: int) -> float:
    def side(c, v):
        if c == 0:
            return 0.0
        if v == 0:
            return math.inf
        return c / v
    return side(cut, vol1) + side(cut, vol2)


def ncut_value_of_bipartition(g: Graph, side: set) -> float:
    """Normalized-cut value of an explicit bipartition (used by tests and
    diagnostics)."""
    deg = g.degrees
    vol1 = int(sum(deg[v] for v in side))
    vol2 = int(deg.sum()) - vol1
    cut = 0
    for a, b in g.edges:
        if (int(a) in side) != (int(b) in side):
            cut += 1
    return _ncut_value(cut, vol1, vol2)


# ---------------------------------------------------------------------------
# Connectivity graph and composition
# ---------------------------------------------------------------------------

def connectivity_graph(g: Graph, p: Partition) -> Graph:
    """Graph over parts: an edge wherever any original edge crosses two parts."""
    if len(p.part_of) != g.num_vertices:
        raise ValueError("partition does not match graph")
    if g.num_edges:
        pa = p.part_of[g.edges[:, 0]]
        pb = p.part_of[g.edges[:, 1]]
        mask = pa != pb
        cross = np.column_stack([pa[mask], pb[mask]])
    else:
        cross = np.empty((0, 2), dtype=np.int64)
    return Graph(p.num_parts, cross)


def fit_into_grid(path_placements, s_p: tuple[int, int], s_c: tuple[int, int]) -> tuple[int, int]:
    """Absolute cell of a leaf from its chain of relative placements.

    `path_placements` runs leaf to root: entry 0 is the cell inside the leaf
    grid (bounded by `s_c`), later entries are cells inside parent grids
    (bounded by `s_p`). The composition is mixed-radix:
    a = p0 + sum_m p_m * s_c * s_p^(m-1), entrywise.
    """
    if not path_placements:
        raise ValueError("empty placement path")
    s_p = np.asarray(s_p, dtype=np.int64)
    s_c = np.asarray(s_c, dtype=np.int64)
    out = np.asarray(path_placements[0], dtype=np.int64).copy()
    if np.any(out < 0) or np.any(out >= s_c):
        raise GridCapacityError(f"leaf placement {tuple(out)} outside child grid {tuple(s_c)}")
    scale = s_c.copy()
    for depth, placement in enumerate(path_placements[1:], start=1):
        p = np.asarray(placement, dtype=np.int64)
        if np.any(p < 0) or np.any(p >= s_p):
            raise GridCapacityError(
                f"placement {tuple(p)} at level {depth} outside parent grid {tuple(s_p)}"
            )
        out += p * scale
        scale *= s_p
    return int(out[0]), int(out[1])


def recursion_depth(num_vertices: int, fanout: int) -> int:
    """Number of layout levels: round(log_fanout(n)), at least 1."""
    if num_vertices <= 1:
        return 1
    t = int(math.floor(math.log(num_vertices) / math.log(fanout) + 0.5))
    return max(t, 1)


def hgpgl(g: Graph, cfg: HierarchyConfig) -> tuple[GridLayout, PartitionTree]:
    """Hierarchical layout of a large graph.

    Computes the recursion depth from the vertex count; a single level lays
    the graph out directly on the child grid, otherwise the graph is split
    into `fanout` balanced parts, the part-connectivity graph is placed on
    the parent grid, each part recurses, and leaf cells compose into one
    global grid of (child_grid * parent_grid^(depth-1)) cells.
    """
    if g.num_vertices == 0:
        raise ValueError("cannot lay out an empty graph")
    cells = np.zeros((g.num_vertices, 2), dtype=np.int64)
    depth = recursion_depth(g.num_vertices, cfg.fanout)
    root = _hgpgl_node(g, np.arange(g.num_vertices), cfg, cells,
                       placement=None, path="root", depth=depth)
    tree = PartitionTree(root, root.depth, cfg.parent_grid, cfg.child_grid)
    return GridLayout.from_cells(cells), tree


def _hgpgl_node(
    g: Graph,
    verts: np.ndarray,
    cfg: HierarchyConfig,
    cells: np.ndarray,
    placement: tuple[int, int] | None,
    path: str,
    depth: int,
) -> PartitionNode:
    # The depth budget is fixed at the root and decrements per level: uniform
    # leaf depth is what makes the mixed-radix cell composition collision-free
    # (an oversized part recomputing its own depth could otherwise recurse
    # deeper and overflow its block).
    sub = g.subgraph(verts)
    node = PartitionNode(vertices=np.asarray(verts, dtype=np.int64), placement=placement, depth=depth)

    if depth <= 1:
        layout = _leaf_layout(sub, cfg, path)
        node.leaf_layout = layout
        cells[verts] = layout.cells
        return node

    # Tighter-than-contract balance so leaf layouts fit the child grid.
    part = normalized_cut(sub, cfg.fanout, balance_factor=1.5)
    node.ncut_fallback = part.used_fallback
    conn = connectivity_graph(sub, part)
    parent_layout = _parent_layout(conn, cfg, path)

    block = np.asarray(cfg.child_grid, dtype=np.int64) * (
        np.asarray(cfg.parent_grid, dtype=np.int64) ** (depth - 2)
    )
    for i, local_part in enumerate(part.parts):
        child_verts = verts[local_part]
        px, py = (int(parent_layout.cells[i, 0]), int(parent_layout.cells[i, 1]))
        child = _hgpgl_node(g, child_verts, cfg, cells, placement=(px, py),
                            path=f"{path}/{i}", depth=depth - 1)
        node.children.append(child)
        cells[child_verts, 0] += px * int(block[0])
        cells[child_verts, 1] += py * int(block[1])
    return node


def _leaf_layout(sub: Graph, cfg: HierarchyConfig, path: str) -> GridLayout:
    """Lay a leaf subgraph on the child grid, retrying seeds (different local
    minima have different spans) before giving up."""
    base = cfg.layout_cfg
    last = None
    for attempt in range(_PARENT_RETRIES):
        layout = gpgl(sub, replace(base, seed=base.seed + attempt))
        last = layout
        if layout.n == 0 or (
            layout.bounding_box[2] < cfg.child_grid[0]
            and layout.bounding_box[3] < cfg.child_grid[1]
        ):
            return layout
    raise GridCapacityError(
        f"subgraph {path} ({sub.num_vertices} vertices) layout spans "
        f"{last.bounding_box[2] + 1}x{last.bounding_box[3] + 1} cells, "
        f"exceeding child grid {cfg.child_grid} after {_PARENT_RETRIES} seed attempts"
    )


def _parent_layout(conn: Graph, cfg: HierarchyConfig, path: str) -> GridLayout:
    """Lay the connectivity graph on the parent grid; retries seeds until the
    placement is overlap-free so child blocks never collide."""
    base = cfg.layout_cfg
    for attempt in range(_PARENT_RETRIES):
        layout = gpgl(conn, replace(base, seed=base.seed + attempt))
        fits = (
            layout.bounding_box[2] < cfg.parent_grid[0]
            and layout.bounding_box[3] < cfg.parent_grid[1]
        )
        if layout.vertex_loss_count == 0 and fits:
            return layout
    raise GridCapacityError(
        f"could not place the {conn.num_vertices}-part connectivity graph of {path} "
        f"onto the {cfg.parent_grid} parent grid without overlap "
        f"after {_PARENT_RETRIES} attempts"
    )

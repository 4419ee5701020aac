import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridlay.graph import Graph
from gridlay.hierarchy import (
    GridCapacityError,
    HierarchyConfig,
    Partition,
    connectivity_graph,
    fit_into_grid,
    hgpgl,
    ncut_value_of_bipartition,
    normalized_cut,
    recursion_depth,
)
from gridlay.layout import LayoutConfig

from conftest import (
    complete_graph,
    path_graph,
    random_connected_graph,
    random_geometric_graph,
)


def brute_force_best_ncut(g: Graph) -> float:
    n = g.num_vertices
    best = math.inf
    for mask in range(1, 2 ** (n - 1)):
        side = {v for v in range(n) if (mask >> v) & 1}
        best = min(best, ncut_value_of_bipartition(g, side))
    return best


def two_triangles_with_bridge() -> Graph:
    return Graph(6, [[0, 1], [1, 2], [0, 2], [3, 4], [4, 5], [3, 5], [2, 3]])


class TestNormalizedCut:
    def test_two_triangles_split_exactly(self):
        part = normalized_cut(two_triangles_with_bridge(), 2)
        got = sorted(tuple(p.tolist()) for p in part.parts)
        assert got == [(0, 1, 2), (3, 4, 5)]
        ours = ncut_value_of_bipartition(
            two_triangles_with_bridge(), set(part.parts[0].tolist())
        )
        assert ours == pytest.approx(brute_force_best_ncut(two_triangles_with_bridge()))

    def test_path8_splits_at_middle(self):
        part = normalized_cut(path_graph(8), 2)
        got = sorted(tuple(p.tolist()) for p in part.parts)
        assert got == [(0, 1, 2, 3), (4, 5, 6, 7)]

    def test_single_part(self):
        g = random_connected_graph(7, np.random.default_rng(0))
        part = normalized_cut(g, 1)
        assert part.num_parts == 1
        assert part.parts[0].tolist() == list(range(7))

    def test_too_many_parts_rejected(self):
        with pytest.raises(ValueError):
            normalized_cut(path_graph(3), 4)

    def test_spectral_quality_vs_brute_force(self):
        rng = np.random.default_rng(101)
        for _ in range(15):
            n = int(rng.integers(4, 13))
            g = random_connected_graph(n, rng)
            part = normalized_cut(g, 2)
            ours = ncut_value_of_bipartition(g, set(part.parts[0].tolist()))
            best = brute_force_best_ncut(g)
            assert ours <= 1.5 * best + 1e-12

    @settings(max_examples=25, deadline=None)
    @given(st.integers(4, 24), st.integers(2, 6), st.integers(0, 10_000))
    def test_partition_always_covers(self, n, j, seed):
        g = random_connected_graph(n, np.random.default_rng(seed))
        j = min(j, n)
        part = normalized_cut(g, j)
        assert part.num_parts == j
        all_vertices = sorted(v for p in part.parts for v in p.tolist())
        assert all_vertices == list(range(n))
        for idx, p in enumerate(part.parts):
            assert len(p) > 0
            assert all(part.part_of[v] == idx for v in p)

    def test_balance_bound_geometric(self):
        rng = np.random.default_rng(512)
        g = random_geometric_graph(512, 0.08, rng)
        part = normalized_cut(g, 16)
        bound = 2 * math.ceil(512 / 16)
        assert max(len(p) for p in part.parts) <= bound

    def test_balance_bound_disconnected(self):
        # two components of very different size
        edges = [(i, i + 1) for i in range(59)] + [(60, 61), (61, 62)]
        g = Graph(63, edges)
        part = normalized_cut(g, 4)
        assert part.num_parts == 4
        assert max(len(p) for p in part.parts) <= 2 * math.ceil(63 / 4)

    def test_tighter_balance_factor(self):
        rng = np.random.default_rng(99)
        g = random_geometric_graph(256, 0.1, rng)
        part = normalized_cut(g, 8, balance_factor=1.25)
        assert max(len(p) for p in part.parts) <= math.ceil(1.25 * math.ceil(256 / 8))


class TestConnectivityGraph:
    def test_bridge_becomes_single_edge(self):
        g = two_triangles_with_bridge()
        part = normalized_cut(g, 2)
        conn = connectivity_graph(g, part)
        assert conn.num_vertices == 2
        assert conn.edges.tolist() == [[0, 1]]

    def test_components_give_edgeless(self):
        g = Graph(4, [[0, 1], [2, 3]])
        part = Partition(
            [np.asarray([0, 1]), np.asarray([2, 3])], np.asarray([0, 0, 1, 1])
        )
        conn = connectivity_graph(g, part)
        assert conn.num_edges == 0

    def test_k6_in_three_pairs_gives_k3(self):
        g = complete_graph(6)
        part = Partition(
            [np.asarray([0, 1]), np.asarray([2, 3]), np.asarray([4, 5])],
            np.asarray([0, 0, 1, 1, 2, 2]),
        )
        conn = connectivity_graph(g, part)
        assert conn.num_vertices == 3
        assert conn.edges.tolist() == [[0, 1], [0, 2], [1, 2]]


class TestFitIntoGrid:
    def test_two_level_example(self):
        assert fit_into_grid([(7, 2), (3, 5)], (16, 16), (16, 16)) == (55, 82)

    def test_origin(self):
        assert fit_into_grid([(0, 0), (0, 0)], (16, 16), (16, 16)) == (0, 0)

    def test_single_level_is_identity(self):
        assert fit_into_grid([(7, 2)], (16, 16), (16, 16)) == (7, 2)

    def test_out_of_bounds_rejected(self):
        with pytest.raises(GridCapacityError):
            fit_into_grid([(16, 0), (0, 0)], (16, 16), (16, 16))
        with pytest.raises(GridCapacityError):
            fit_into_grid([(0, 0), (0, 16)], (16, 16), (16, 16))

    def test_injective_and_in_bounds_two_levels(self):
        s_p, s_c = (4, 4), (3, 3)
        seen = set()
        for px in range(4):
            for py in range(4):
                for cx in range(3):
                    for cy in range(3):
                        cell = fit_into_grid([(cx, cy), (px, py)], s_p, s_c)
                        assert cell not in seen
                        seen.add(cell)
                        assert 0 <= cell[0] < 12 and 0 <= cell[1] < 12
        assert len(seen) == 12 * 12

    def test_three_levels_match_block_arithmetic(self):
        cell = fit_into_grid([(1, 2), (3, 0), (2, 1)], (4, 4), (3, 3))
        assert cell == (1 + 3 * 3 + 2 * 3 * 4, 2 + 0 + 1 * 3 * 4)


class TestRecursionDepth:
    def test_values(self):
        assert recursion_depth(40, 32) == 1
        assert recursion_depth(2048, 32) == 2
        assert recursion_depth(1, 32) == 1
        assert recursion_depth(32 ** 2, 32) == 2


class TestHGPGL:
    def test_small_graph_single_level(self):
        g = random_connected_graph(40, np.random.default_rng(1))
        grid, tree = hgpgl(g, HierarchyConfig(layout_cfg=LayoutConfig(seed=0)))
        assert tree.depth == 1
        assert not tree.root.children
        assert grid.n == 40

    def test_two_level_vertex_conservation(self):
        rng = np.random.default_rng(7)
        g = random_geometric_graph(120, 0.12, rng)  # round(log_8 120) == 2
        cfg = HierarchyConfig(
            fanout=8, parent_grid=(8, 8), child_grid=(12, 12),
            layout_cfg=LayoutConfig(seed=0),
        )
        grid, tree = hgpgl(g, cfg)
        assert tree.depth == 2
        assert len(tree.root.children) == 8
        leaf_union = sorted(
            v for c in tree.root.children for v in c.vertices.tolist()
        )
        assert leaf_union == list(range(120))
        assert sum(len(o) for o in grid.occupancy.values()) == 120
        gw, gh = tree.grid_shape
        assert (gw, gh) == (96, 96)
        assert grid.cells.min() >= 0
        assert grid.cells[:, 0].max() < gw
        assert grid.cells[:, 1].max() < gh

    def test_children_fill_disjoint_blocks(self):
        rng = np.random.default_rng(13)
        g = random_geometric_graph(80, 0.15, rng)  # round(log_6 80) == 2
        cfg = HierarchyConfig(
            fanout=6, parent_grid=(6, 6), child_grid=(10, 10),
            layout_cfg=LayoutConfig(seed=2),
        )
        grid, tree = hgpgl(g, cfg)
        blocks = set()
        for child in tree.root.children:
            bx, by = child.placement
            assert 0 <= bx < 6 and 0 <= by < 6
            assert (bx, by) not in blocks
            blocks.add((bx, by))
            for v in child.vertices:
                cx, cy = grid.cells[v]
                assert bx * 10 <= cx < (bx + 1) * 10
                assert by * 10 <= cy < (by + 1) * 10

    def test_capacity_validation(self):
        with pytest.raises(ValueError, match="capacity"):
            HierarchyConfig(fanout=300, parent_grid=(16, 16))

    def test_deterministic(self):
        rng = np.random.default_rng(23)
        g = random_geometric_graph(120, 0.15, rng)
        cfg = HierarchyConfig(
            fanout=4, parent_grid=(8, 8), child_grid=(12, 12),
            layout_cfg=LayoutConfig(seed=5),
        )
        a, _ = hgpgl(g, cfg)
        b, _ = hgpgl(g, cfg)
        assert np.array_equal(a.cells, b.cells)

    def test_tree_json_serializes(self, tmp_path):
        g = random_connected_graph(30, np.random.default_rng(3))
        grid, tree = hgpgl(g, HierarchyConfig(layout_cfg=LayoutConfig(seed=0)))
        path = tmp_path / "tree.json"
        tree.save_json(path)
        import json

        payload = json.loads(path.read_text())
        assert payload["depth"] == 1
        assert sorted(payload["root"]["vertices"]) == list(range(30))

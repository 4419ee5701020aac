"""Command-line surface: layout, hierarchical layout, augmentation export,
corpus statistics, benchmarking, rendering, and manifest-based reruns.

Exit codes: 0 success, 2 usage or input problems, 3 numeric/solver failures.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from statistics import mean, stdev

import numpy as np

from . import __version__
from .export import ExportConfig, GridOverflowError, augment, export_npy
from .graph import (
    DatasetError,
    Graph,
    load_edge_list,
    load_json_graph,
    load_tu_dataset,
)
from .hierarchy import (
    GridCapacityError,
    HierarchyConfig,
    connectivity_graph,
    hgpgl,
    normalized_cut,
)
from .layout import (
    GridLayout,
    LayoutConfig,
    OptimizationError,
    gpgl,
    gpgl_pipeline,
    vertex_loss_ratio,
)
from .pointcloud import (
    PointCloudError,
    delaunay_graph,
    knn_graph,
    load_xyz,
    load_xyz_binary,
)
from .render import (
    colors_from_features,
    colors_from_partition,
    render_layout,
    write_image,
)
from .hierarchy import PartitionTree, PartitionNode

MANIFEST_SCHEMA = 1


def _err(msg: str) -> None:
    print(f"gridlay: {msg}", file=sys.stderr)


def _threads(args) -> int:
    if getattr(args, "threads", None):
        return max(1, int(args.threads))
    env = os.environ.get("GRIDLAY_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(Path(path).read_bytes())
    return h.hexdigest()


def _write_manifest(path: Path, command: str, args, timings_ms: dict,
                    outputs: list[Path], measurements: list[Path] = ()) -> None:
    # `outputs` reproduce bitwise on rerun; `measurements` hold wall-clock
    # readings (bench reports), which cannot.
    stored = {k: v for k, v in vars(args).items() if k not in ("func", "command")}
    payload = {
        "schema": MANIFEST_SCHEMA,
        "tool": "gridlay",
        "version": __version__,
        "command": command,
        "args": stored,
        "seed": stored.get("seed"),
        "timings_ms": timings_ms,
        "outputs": [
            {"path": str(p), "sha256": _sha256(p)} for p in sorted(outputs, key=str)
        ],
        "measurements": [str(p) for p in sorted(measurements, key=str)],
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))


def _load_graph_file(path: str) -> Graph:
    p = Path(path)
    if p.suffix == ".json":
        return load_json_graph(p)
    return load_edge_list(p)


def _load_cloud(path: str):
    p = Path(path)
    if p.suffix in (".xyzb", ".bin"):
        return load_xyz_binary(p)
    return load_xyz(p)


def _graph_or_cloud(path: str, graph_from: str, knn_k: int) -> Graph:
    p = Path(path)
    if p.suffix in (".xyz", ".xyzb", ".bin", ".pts"):
        cloud = _load_cloud(path)
        if graph_from == "knn":
            return knn_graph(cloud, knn_k)
        return delaunay_graph(cloud)
    return _load_graph_file(path)


def _parse_grid(text: str) -> tuple[int, int]:
    if "x" in text:
        w, h = text.lower().split("x", 1)
        return (int(w), int(h))
    side = int(text)
    return (side, side)


def _layout_cfg(args) -> LayoutConfig:
    return LayoutConfig(
        alpha=args.alpha,
        lam=args.lam,
        seed=args.seed,
        init=getattr(args, "init", "circular"),
        max_iters_kk=getattr(args, "max_iters_kk", 500),
        max_iters_gpgl=getattr(args, "max_iters_gpgl", 1000),
        grad_tol=getattr(args, "grad_tol", 1e-4),
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_layout(args) -> int:
    g = _load_graph_file(args.input)
    cfg = _layout_cfg(args)
    t0 = time.perf_counter()
    solution, grid = gpgl_pipeline(g, cfg)
    elapsed = 1000.0 * (time.perf_counter() - t0)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    grid.save_json(out)
    _write_manifest(Path(str(out) + ".manifest.json"), "layout", args,
                    {"layout_ms": elapsed}, [out])
    print(
        f"energy={solution.energy:.6g} iterations={solution.iterations} "
        f"vertex_loss={grid.vertex_loss_count} bbox_side={grid.bbox_side()}"
    )
    return 0


def cmd_hlayout(args) -> int:
    g = _graph_or_cloud(args.input, args.graph_from, args.knn_k)
    cfg = HierarchyConfig(
        fanout=args.fanout,
        parent_grid=_parse_grid(args.parent_grid),
        child_grid=_parse_grid(args.child_grid),
        layout_cfg=_layout_cfg(args),
    )
    t0 = time.perf_counter()
    grid, tree = hgpgl(g, cfg)
    elapsed = 1000.0 * (time.perf_counter() - t0)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    grid.save_json(out)
    tree_path = out.with_name(out.stem + ".tree.json")
    tree.save_json(tree_path)
    _write_manifest(Path(str(out) + ".manifest.json"), "hlayout", args,
                    {"hlayout_ms": elapsed}, [out, tree_path])
    gw, gh = tree.grid_shape
    print(
        f"levels={tree.depth} grid={gw}x{gh} vertices={g.num_vertices} "
        f"vertex_loss={grid.vertex_loss_count}"
    )
    return 0


def _load_corpus(args) -> tuple[str, list[Graph]]:
    root = Path(args.input)
    if getattr(args, "name", None):
        return args.name, load_tu_dataset(root, args.name)
    files = sorted(root.glob("*.json"))
    if not files:
        raise DatasetError(f"no .json graphs found in {root}")
    return root.name, [load_json_graph(f) for f in files]


def cmd_augment(args) -> int:
    name, graphs = _load_corpus(args)
    cfg = _layout_cfg(args)
    export_cfg = ExportConfig(
        window=_parse_grid(args.window), pooling=args.pooling, overflow=args.overflow
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def job(item):
        gid, g = item
        t0 = time.perf_counter()
        grids = augment(g, args.copies, cfg, export_cfg)
        written = []
        for i, grid in enumerate(grids):
            seed = cfg.seed + i
            path = out_dir / f"{name}_{gid}_{seed}.npy"
            export_npy(grid, path)
            written.append(path)
            written.append(path.with_suffix(".json"))
        return gid, 1000.0 * (time.perf_counter() - t0), written

    timings = {}
    outputs: list[Path] = []
    workers = _threads(args)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, enumerate(graphs)))
    else:
        results = [job(item) for item in enumerate(graphs)]
    for gid, ms, written in results:
        timings[str(gid)] = ms
        outputs.extend(written)
    _write_manifest(out_dir / "manifest.json", "augment", args,
                    timings, outputs)
    print(f"wrote {len(outputs) // 2} tensors for {len(graphs)} graphs to {out_dir}")
    return 0


def cmd_stats(args) -> int:
    name, graphs = _load_corpus(args)
    inits = [s.strip() for s in args.inits.split(",") if s.strip()]
    n_graphs = len(graphs)
    avg_nodes = mean(g.num_vertices for g in graphs)
    avg_edges = mean(g.num_edges for g in graphs)
    avg_degree = mean(
        (2.0 * g.num_edges / g.num_vertices) if g.num_vertices else 0.0 for g in graphs
    )
    max_degree = max((int(g.degrees.max()) if g.num_vertices else 0) for g in graphs)

    base = _layout_cfg(args)
    workers = _threads(args)
    loss: dict[str, float] = {}
    for init in inits:
        cfg = replace(base, init=init)

        def job(g: Graph) -> GridLayout:
            return gpgl(g, cfg)

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                layouts = list(pool.map(job, graphs))
        else:
            layouts = [job(g) for g in graphs]
        loss[init] = vertex_loss_ratio(layouts, graphs)

    header = ["dataset", "num_graphs", "avg_nodes", "avg_edges", "avg_degree", "max_degree"]
    row = [name, str(n_graphs), f"{avg_nodes:.2f}", f"{avg_edges:.2f}",
           f"{avg_degree:.2f}", str(max_degree)]
    for init in inits:
        header.append(f"loss_{init}")
        row.append(f"{loss[init]:.2f}")
    csv = ",".join(header) + "\n" + ",".join(row) + "\n"
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(csv)
    _write_manifest(Path(str(out) + ".manifest.json"), "stats", args, {}, [out])
    sys.stdout.write(csv)
    return 0


def cmd_render(args) -> int:
    grid = GridLayout.load_json(args.input)
    graph = _load_graph_file(args.graph) if args.graph else None
    colors = None
    if args.tree:
        tree = _tree_from_json(json.loads(Path(args.tree).read_text()))
        colors = colors_from_partition(tree, grid.n)
    elif graph is not None:
        colors = colors_from_features(graph)
    window = _parse_grid(args.window) if args.window else None
    img = render_layout(
        grid, vertex_colors=colors, window=window, scale=args.scale,
        graph=graph, draw_edges=args.edges,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_image(img, out)
    _write_manifest(Path(str(out) + ".manifest.json"), "render", args, {}, [out])
    print(f"wrote {img.shape[1]}x{img.shape[0]} image to {out}")
    return 0


def _tree_from_json(payload: dict) -> PartitionTree:
    def node(d: dict) -> PartitionNode:
        return PartitionNode(
            vertices=np.asarray(d["vertices"], dtype=np.int64),
            placement=tuple(d["placement"]) if d.get("placement") else None,
            depth=d["depth"],
            children=[node(c) for c in d.get("children", [])],
            ncut_fallback=d.get("ncut_fallback", False),
        )
    return PartitionTree(
        root=node(payload["root"]),
        depth=payload["depth"],
        parent_grid=tuple(payload["parent_grid"]),
        child_grid=tuple(payload["child_grid"]),
        anchor=tuple(payload.get("anchor", (0, 0))),
    )


def cmd_bench(args) -> int:
    if args.reps < 1:
        raise DatasetError("need at least one repetition")
    p = Path(args.input)
    is_cloud = p.suffix in (".xyz", ".xyzb", ".bin", ".pts")
    samples: dict[str, list[float]] = {}

    def record(phase: str, ms: float) -> None:
        samples.setdefault(phase, []).append(ms)

    cfg = _layout_cfg(args)
    hier = HierarchyConfig(
        fanout=args.fanout,
        parent_grid=_parse_grid(args.parent_grid),
        child_grid=_parse_grid(args.child_grid),
        layout_cfg=cfg,
    )
    for _ in range(args.reps):
        if is_cloud:
            cloud = _load_cloud(args.input)
            t0 = time.perf_counter()
            g = knn_graph(cloud, args.knn_k) if args.graph_from == "knn" else delaunay_graph(cloud)
            record("graph_construction", 1000.0 * (time.perf_counter() - t0))
        else:
            g = _load_graph_file(args.input)
        t0 = time.perf_counter()
        part = normalized_cut(g, min(args.fanout, g.num_vertices))
        record("normalized_cut", 1000.0 * (time.perf_counter() - t0))
        t0 = time.perf_counter()
        connectivity_graph(g, part)
        record("connectivity_graph", 1000.0 * (time.perf_counter() - t0))
        t0 = time.perf_counter()
        gpgl(g, cfg)
        record("gpgl_flat", 1000.0 * (time.perf_counter() - t0))
        t0 = time.perf_counter()
        hgpgl(g, hier)
        record("hgpgl", 1000.0 * (time.perf_counter() - t0))

    lines = ["phase,mean_ms,std_ms,n"]
    for phase, values in samples.items():
        sd = stdev(values) if len(values) > 1 else 0.0
        lines.append(f"{phase},{mean(values):.3f},{sd:.3f},{len(values)}")
    csv = "\n".join(lines) + "\n"
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(csv)
    _write_manifest(Path(str(out) + ".manifest.json"), "bench", args, {},
                    outputs=[], measurements=[out])
    sys.stdout.write(csv)
    flat = sorted(samples["gpgl_flat"])[len(samples["gpgl_flat"]) // 2]
    hier_t = sorted(samples["hgpgl"])[len(samples["hgpgl"]) // 2]
    if hier_t > 0:
        print(f"speedup_flat_over_hier={flat / hier_t:.2f}")
    return 0


def cmd_rerun(args) -> int:
    payload = json.loads(Path(args.manifest).read_text())
    command = payload["command"]
    if command not in COMMANDS:
        raise DatasetError(f"manifest names unknown command {command!r}")
    ns = argparse.Namespace(**payload["args"])
    return COMMANDS[command](ns)


COMMANDS = {
    "layout": cmd_layout,
    "hlayout": cmd_hlayout,
    "augment": cmd_augment,
    "stats": cmd_stats,
    "render": cmd_render,
    "bench": cmd_bench,
}


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def _add_layout_flags(sp, with_init=True):
    sp.add_argument("--alpha", type=float, default=1.25)
    sp.add_argument("--lambda", dest="lam", type=float, default=1000.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--max-iters-kk", dest="max_iters_kk", type=int, default=500)
    sp.add_argument("--max-iters-gpgl", dest="max_iters_gpgl", type=int, default=1000)
    sp.add_argument("--grad-tol", dest="grad_tol", type=float, default=1e-4)
    if with_init:
        sp.add_argument("--init", choices=["circular", "spectral", "random"],
                        default="circular")


def _add_threads_flag(sp):
    # accepted everywhere; single-item commands simply have nothing to fan out
    sp.add_argument("--threads", type=int, default=None)


def _add_hier_flags(sp):
    sp.add_argument("--fanout", type=int, default=32)
    sp.add_argument("--parent-grid", dest="parent_grid", default="16",
                    help="WxH cells, e.g. 16 or 16x8")
    sp.add_argument("--child-grid", dest="child_grid", default="16",
                    help="WxH cells per leaf block")


def _add_cloud_flags(sp):
    sp.add_argument("--graph-from", dest="graph_from",
                    choices=["delaunay", "knn"], default="delaunay")
    sp.add_argument("--knn-k", dest="knn_k", type=int, default=5)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridlay",
        description="Topology-preserving integer-grid layouts for graphs and point clouds.",
    )
    parser.add_argument("--version", action="version", version=f"gridlay {__version__}")
    sub = parser.add_subparsers(dest="command")

    sp = sub.add_parser("layout", help="lay one graph onto the integer grid")
    sp.add_argument("input", help="graph file (.json or edge list)")
    sp.add_argument("--out", required=True)
    _add_layout_flags(sp)
    _add_threads_flag(sp)
    sp.set_defaults(func=cmd_layout)

    sp = sub.add_parser("hlayout", help="hierarchical layout for large graphs")
    sp.add_argument("input", help="graph file or point cloud (.xyz/.xyzb)")
    sp.add_argument("--out", required=True)
    _add_layout_flags(sp)
    _add_hier_flags(sp)
    _add_cloud_flags(sp)
    _add_threads_flag(sp)
    sp.set_defaults(func=cmd_hlayout)

    sp = sub.add_parser("augment", help="export augmented feature grids for a corpus")
    sp.add_argument("input", help="TU dataset dir (with --name) or a dir of .json graphs")
    sp.add_argument("--name", default=None, help="TU dataset name")
    sp.add_argument("--copies", type=int, default=1)
    sp.add_argument("--window", default="32", help="HxW export window, e.g. 32 or 32x48")
    sp.add_argument("--pooling", choices=["average", "max"], default="average")
    sp.add_argument("--overflow", choices=["error", "grow"], default="error")
    sp.add_argument("--out-dir", dest="out_dir", required=True)
    _add_layout_flags(sp, with_init=False)
    _add_threads_flag(sp)
    sp.set_defaults(func=cmd_augment, init="circular")

    sp = sub.add_parser("stats", help="corpus statistics and vertex-loss ratios")
    sp.add_argument("input")
    sp.add_argument("--name", default=None)
    sp.add_argument("--inits", default="circular,spectral,random")
    sp.add_argument("--out", required=True)
    _add_layout_flags(sp, with_init=False)
    _add_threads_flag(sp)
    sp.set_defaults(func=cmd_stats, init="circular")

    sp = sub.add_parser("render", help="render a layout to a static image")
    sp.add_argument("input", help="layout JSON")
    sp.add_argument("--graph", default=None, help="graph file for feature colors/edges")
    sp.add_argument("--tree", default=None, help="partition tree JSON for part colors")
    sp.add_argument("--window", default=None)
    sp.add_argument("--scale", type=int, default=16)
    sp.add_argument("--edges", action="store_true")
    sp.add_argument("--out", required=True, help=".ppm or .png output")
    _add_threads_flag(sp)
    sp.set_defaults(func=cmd_render)

    sp = sub.add_parser("bench", help="time pipeline phases")
    sp.add_argument("input")
    sp.add_argument("--reps", type=int, default=3)
    sp.add_argument("--out", required=True)
    _add_layout_flags(sp, with_init=False)
    _add_hier_flags(sp)
    _add_cloud_flags(sp)
    _add_threads_flag(sp)
    sp.set_defaults(func=cmd_bench, init="circular")

    sp = sub.add_parser("rerun", help="re-execute a command from its manifest")
    sp.add_argument("manifest")
    sp.set_defaults(func=cmd_rerun)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except (GridCapacityError, GridOverflowError, OptimizationError) as exc:
        _err(str(exc))
        return 3
    except (DatasetError, PointCloudError) as exc:
        _err(str(exc))
        return 2
    except (ValueError, OSError) as exc:
        _err(str(exc))
        return 2


if __name__ == "__main__":
    sys.exit(main())

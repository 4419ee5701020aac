"""Static raster rendering of grid layouts (PPM always, PNG via Pillow)."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .graph import Graph
from .hierarchy import PartitionTree
from .layout import GridLayout

PALETTE = np.asarray(
    [
        (31, 119, 180), (255, 127, 14), (44, 160, 44), (214, 39, 40),
        (148, 103, 189), (140, 86, 75), (227, 119, 194), (127, 127, 127),
        (188, 189, 34), (23, 190, 207), (174, 199, 232), (255, 187, 120),
        (152, 223, 138), (255, 152, 150), (197, 176, 213), (196, 156, 148),
        (247, 182, 210), (199, 199, 199), (219, 219, 141), (158, 218, 229),
    ],
    dtype=np.uint8,
)
EDGE_COLOR = np.asarray((90, 90, 90), dtype=np.uint8)


def colors_from_features(g: Graph) -> np.ndarray:
    """Per-vertex color from the argmax feature channel."""
    if g.features is None:
        return np.tile(PALETTE[0], (g.num_vertices, 1))
    idx = np.argmax(g.features, axis=1) % len(PALETTE)
    return PALETTE[idx]


def colors_from_partition(tree: PartitionTree, n: int) -> np.ndarray:
    """Per-vertex color from the top-level part index."""
    colors = np.tile(PALETTE[0], (n, 1))
    children = tree.root.children or [tree.root]
    for i, child in enumerate(children):
        colors[child.vertices] = PALETTE[i % len(PALETTE)]
    return colors


def render_layout(
    layout: GridLayout,
    vertex_colors: np.ndarray | None = None,
    window: tuple[int, int] | None = None,
    scale: int = 16,
    graph: Graph | None = None,
    draw_edges: bool = False,
) -> np.ndarray:
    """Rasterize a grid layout to an (H, W, 3) uint8 image; cell (x, y) maps
    to the pixel block at column x, row y. Background is black."""
    if scale < 1:
        raise ValueError("scale must be >= 1")
    cells = layout.cells - layout.cells.min(axis=0) if layout.n else layout.cells
    if window is None:
        w = int(cells[:, 0].max()) + 1 if layout.n else 1
        h = int(cells[:, 1].max()) + 1 if layout.n else 1
    else:
        w, h = window
    img = np.zeros((h * scale, w * scale, 3), dtype=np.uint8)
    if vertex_colors is None:
        vertex_colors = np.tile(PALETTE[0], (layout.n, 1))

    if draw_edges and graph is not None:
        half = scale // 2
        for a, b in graph.edges:
            x0, y0 = (int(cells[a, 0]) * scale + half, int(cells[a, 1]) * scale + half)
            x1, y1 = (int(cells[b, 0]) * scale + half, int(cells[b, 1]) * scale + half)
            _draw_line(img, x0, y0, x1, y1)

    seen: set[tuple[int, int]] = set()
    for v in range(layout.n):
        x, y = int(cells[v, 0]), int(cells[v, 1])
        if (x, y) in seen:
            continue
        seen.add((x, y))
        if 0 <= x < w and 0 <= y < h:
            img[y * scale:(y + 1) * scale, x * scale:(x + 1) * scale] = vertex_colors[v]
    return img


def _draw_line(img: np.ndarray, x0: int, y0: int, x1: int, y1: int) -> None:
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    h, w = img.shape[:2]
    while True:
        if 0 <= y0 < h and 0 <= x0 < w:
            img[y0, x0] = EDGE_COLOR
        if x0 == x1 and y0 == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def write_ppm(img: np.ndarray, path) -> None:
    h, w = img.shape[:2]
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.astype(np.uint8).tobytes())


def read_ppm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if not raw.startswith(b"P6"):
        raise ValueError("not a binary PPM file")
    parts = raw.split(b"\n", 3)
    w, h = (int(t) for t in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w, 3)


def write_image(img: np.ndarray, path) -> None:
    """PPM for `.ppm`, PNG (via Pillow) for `.png`."""
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        write_ppm(img, path)
    elif path.suffix.lower() == ".png":
        from PIL import Image

        Image.fromarray(img, mode="RGB").save(path, format="PNG")
    else:
        raise ValueError(f"unsupported image format {path.suffix!r} (use .ppm or .png)")

"""Dense feature-grid tensors from grid layouts: window cropping, top-left
alignment, overlap pooling, NPY serialization with a JSON sidecar, and
layout-based data augmentation."""
from __future__ import annotations

import ast
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .graph import Graph
from .layout import GridLayout, LayoutConfig, gpgl

POOLING_MODES = ("average", "max")
OVERFLOW_MODES = ("error", "grow")


class GridOverflowError(ValueError):
    """A layout does not fit the export window."""


@dataclass(frozen=True)
class ExportConfig:
    window: tuple[int, int] = (32, 32)  # (height, width)
    pooling: str = "average"
    overflow: str = "error"

    def __post_init__(self):
        if min(self.window) < 1:
            raise ValueError("window dimensions must be >= 1")
        if self.pooling not in POOLING_MODES:
            raise ValueError(f"pooling must be one of {POOLING_MODES}")
        if self.overflow not in OVERFLOW_MODES:
            raise ValueError(f"overflow must be one of {OVERFLOW_MODES}")


@dataclass(frozen=True)
class FeatureGrid:
    """H x W x C tensor of vertex features on grid cells, plus the occupancy
    mask and the vertex-to-cell assignment that produced it."""

    height: int
    width: int
    channels: int
    data: np.ndarray          # (H, W, C) float32, zero at unmasked cells
    mask: np.ndarray          # (H, W) bool
    assignment: np.ndarray    # (n, 2) int64 cells, (x, y)
    pooled_cells: list        # cells holding more than one vertex
    graph_label: int | None = None
    grown: bool = False       # window was enlarged to fit the layout

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.shape != (self.height, self.width, self.channels):
            raise ValueError("data shape mismatch")
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != (self.height, self.width):
            raise ValueError("mask shape mismatch")
        assignment = np.asarray(self.assignment, dtype=np.int64)
        data.setflags(write=False)
        mask.setflags(write=False)
        assignment.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "assignment", assignment)


def to_feature_grid(g: Graph, layout: GridLayout, cfg: ExportConfig) -> FeatureGrid:
    """Write each vertex's feature vector at its (top-left aligned) cell,
    pooling co-located vertices per `cfg.pooling`; all other cells are zero.
    """
    if g.features is None:
        raise ValueError("graph has no vertex features to export")
    if layout.n != g.num_vertices:
        raise ValueError("layout does not cover the graph's vertices")
    cells = layout.cells - layout.cells.min(axis=0)
    need_w = int(cells[:, 0].max()) + 1
    need_h = int(cells[:, 1].max()) + 1
    height, width = cfg.window
    grown = False
    if need_w > width or need_h > height:
        if cfg.overflow == "error":
            raise GridOverflowError(
                f"layout needs a {need_h}x{need_w} window but the export window "
                f"is {height}x{width}"
            )
        height, width = max(height, need_h), max(width, need_w)
        grown = True

    feats = g.features
    channels = feats.shape[1]
    data = np.zeros((height, width, channels), dtype=np.float64)
    mask = np.zeros((height, width), dtype=bool)
    pooled = []
    by_cell: dict[tuple[int, int], list[int]] = {}
    for v, (x, y) in enumerate(cells):
        by_cell.setdefault((int(x), int(y)), []).append(v)
    for (x, y), members in sorted(by_cell.items()):
        if cfg.pooling == "average":
            value = feats[members].mean(axis=0)
        else:
            value = feats[members].max(axis=0)
        data[y, x] = value
        mask[y, x] = True
        if len(members) > 1:
            pooled.append((x, y))
    return FeatureGrid(
        height=height, width=width, channels=channels,
        data=data.astype(np.float32), mask=mask, assignment=cells,
        pooled_cells=pooled, graph_label=g.graph_label, grown=grown,
    )


# ---------------------------------------------------------------------------
# NPY v1.0 writer/reader (C-order little-endian float32) plus JSON sidecar
# ---------------------------------------------------------------------------

_NPY_MAGIC = b"\x93NUMPY"
_HEADER_ALIGN = 64


def npy_bytes(array: np.ndarray) -> bytes:
    """Serialize a float32 array as NPY version 1.0, C order."""
    arr = np.ascontiguousarray(array, dtype="<f4")
    shape = ", ".join(str(s) for s in arr.shape)
    if arr.ndim == 1:
        shape += ","
    header = "{'descr': '<f4', 'fortran_order': False, 'shape': (%s), }" % shape
    prefix_len = len(_NPY_MAGIC) + 2 + 2
    total = prefix_len + len(header) + 1
    pad = (-total) % _HEADER_ALIGN
    header = header + " " * pad + "\n"
    out = bytearray()
    out += _NPY_MAGIC
    out += bytes([1, 0])
    out += len(header).to_bytes(2, "little")
    out += header.encode("latin1")
    out += arr.tobytes(order="C")
    return bytes(out)


def parse_npy(raw: bytes) -> np.ndarray:
    """Parse NPY bytes (version 1.0, '<f4', C order)."""
    if raw[:6] != _NPY_MAGIC:
        raise ValueError("not an NPY file")
    major, minor = raw[6], raw[7]
    if (major, minor) != (1, 0):
        raise ValueError(f"unsupported NPY version {major}.{minor}")
    hlen = int.from_bytes(raw[8:10], "little")
    header = raw[10:10 + hlen].decode("latin1")
    meta = ast.literal_eval(header)
    if meta["descr"] != "<f4" or meta["fortran_order"]:
        raise ValueError(f"unsupported NPY layout: {meta}")
    shape = tuple(meta["shape"])
    count = int(np.prod(shape)) if shape else 1
    payload = raw[10 + hlen:10 + hlen + 4 * count]
    if len(payload) != 4 * count:
        raise ValueError("truncated NPY payload")
    return np.frombuffer(payload, dtype="<f4").reshape(shape)


def mask_rle_encode(mask: np.ndarray) -> list[int]:
    """Row-major run lengths, alternating and starting with the zero run."""
    flat = np.asarray(mask, dtype=bool).ravel(order="C")
    runs: list[int] = []
    current = False
    count = 0
    for bit in flat:
        if bool(bit) == current:
            count += 1
        else:
            runs.append(count)
            current = bool(bit)
            count = 1
    runs.append(count)
    return runs


def mask_rle_decode(runs: list[int], shape: tuple[int, int]) -> np.ndarray:
    total = shape[0] * shape[1]
    flat = np.zeros(total, dtype=bool)
    pos = 0
    value = False
    for run in runs:
        flat[pos:pos + run] = value
        pos += run
        value = not value
    if pos != total:
        raise ValueError("run-length data does not match mask shape")
    return flat.reshape(shape)


def export_npy(grid: FeatureGrid, path) -> None:
    """Write `<path>` as NPY plus a `.json` sidecar carrying the mask (RLE),
    the vertex-to-cell assignment, pooled cells, and the graph label.
    Byte-for-byte deterministic."""
    path = Path(path)
    sidecar = path.with_suffix(".json")
    try:
        path.write_bytes(npy_bytes(grid.data))
        payload = {
            "mask_rle": mask_rle_encode(grid.mask),
            "assignment": grid.assignment.tolist(),
            "pooled_cells": [list(c) for c in grid.pooled_cells],
            "graph_label": grid.graph_label,
        }
        sidecar.write_text(json.dumps(payload, sort_keys=True, separators=(",", ":")))
    except OSError as exc:
        raise OSError(f"cannot write export files at {path}: {exc}") from exc


def read_npy(path) -> np.ndarray:
    return parse_npy(Path(path).read_bytes())


def read_feature_grid(path) -> FeatureGrid:
    """Rebuild a FeatureGrid from an exported NPY file and its sidecar."""
    path = Path(path)
    data = parse_npy(path.read_bytes())
    meta = json.loads(path.with_suffix(".json").read_text())
    h, w, c = data.shape
    mask = mask_rle_decode(meta["mask_rle"], (h, w))
    return FeatureGrid(
        height=h, width=w, channels=c, data=data, mask=mask,
        assignment=np.asarray(meta["assignment"], dtype=np.int64).reshape(-1, 2),
        pooled_cells=[tuple(cell) for cell in meta["pooled_cells"]],
        graph_label=meta.get("graph_label"),
    )


def augment(
    g: Graph, k: int, cfg: LayoutConfig, export_cfg: ExportConfig
) -> list[FeatureGrid]:
    """k feature grids from k layouts of the same graph, using seed-shuffled
    circular starts with seeds cfg.seed .. cfg.seed + k - 1."""
    if k < 1:
        raise ValueError("need k >= 1 copies")
    grids = []
    for i in range(k):
        layout = gpgl(g, replace(cfg, init="circular", seed=cfg.seed + i))
        grids.append(to_feature_grid(g, layout, export_cfg))
    return grids

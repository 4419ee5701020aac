"""Graphs from 3D point clouds: k-nearest-neighbor graphs and the 1-skeleton
of an incremental Delaunay tetrahedralization.

Geometric predicates are determinant-based with a relative epsilon band;
borderline cases are re-evaluated on a copy of the points carrying a
deterministic index-seeded jitter, so every near-tie resolves the same way
on every run.
"""
from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np

from .graph import Graph

PREDICATE_BAND = 1e-12
JITTER_SCALE = 1e-9


class PointCloudError(ValueError):
    """Raised for unreadable or inconsistent point-cloud inputs."""


class DegenerateCloudError(PointCloudError):
    """The cloud spans fewer dimensions than the triangulation needs."""


@dataclass(frozen=True)
class PointCloud:
    """3D points with optional per-point integer part labels."""

    points: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise PointCloudError(f"points must be (n, 3), got {pts.shape}")
        if pts.shape[0] == 0:
            raise PointCloudError("point cloud is empty")
        if not np.all(np.isfinite(pts)):
            raise PointCloudError("points must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            labs = np.asarray(self.labels, dtype=np.int64)
            if labs.shape != (pts.shape[0],):
                raise PointCloudError("labels must be one integer per point")
            labs.setflags(write=False)
            object.__setattr__(self, "labels", labs)

    @property
    def n(self) -> int:
        return self.points.shape[0]


def load_xyz(path) -> PointCloud:
    """Read whitespace-separated text with 3 or 4 columns (x y z [label])."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise PointCloudError(f"cannot read {p}: {exc}") from exc
    pts, labs = [], []
    ncols = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (3, 4):
            raise PointCloudError(f"{p.name}:{lineno}: expected 3 or 4 columns")
        if ncols is None:
            ncols = len(parts)
        elif len(parts) != ncols:
            raise PointCloudError(f"{p.name}:{lineno}: inconsistent column count")
        try:
            pts.append([float(parts[0]), float(parts[1]), float(parts[2])])
            if ncols == 4:
                labs.append(int(float(parts[3])))
        except ValueError as exc:
            raise PointCloudError(f"{p.name}:{lineno}: bad value") from exc
    if not pts:
        raise PointCloudError(f"{p.name}: no points")
    return PointCloud(np.asarray(pts), np.asarray(labs) if labs else None)


def save_xyz(pc: PointCloud, path) -> None:
    lines = []
    for i in range(pc.n):
        x, y, z = pc.points[i]
        if pc.labels is not None:
            lines.append(f"{x:.17g} {y:.17g} {z:.17g} {int(pc.labels[i])}")
        else:
            lines.append(f"{x:.17g} {y:.17g} {z:.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_xyz_binary(path) -> PointCloud:
    """Binary layout: int64 LE count, n*3 float32 coordinates, then an
    optional n*1 int32 label block."""
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise PointCloudError(f"{path}: truncated header")
    (n,) = struct.unpack("<q", raw[:8])
    body = raw[8:]
    need = n * 12
    if n < 1 or len(body) < need:
        raise PointCloudError(f"{path}: truncated point block")
    pts = np.frombuffer(body[:need], dtype="<f4").reshape(n, 3).astype(np.float64)
    rest = body[need:]
    labels = None
    if rest:
        if len(rest) != 4 * n:
            raise PointCloudError(f"{path}: malformed label block")
        labels = np.frombuffer(rest, dtype="<i4").astype(np.int64)
    return PointCloud(pts, labels)


def save_xyz_binary(pc: PointCloud, path) -> None:
    parts = [struct.pack("<q", pc.n), pc.points.astype("<f4").tobytes()]
    if pc.labels is not None:
        parts.append(pc.labels.astype("<i4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def normalize_points(points: np.ndarray) -> np.ndarray:
    """Center on the bounding-box midpoint and scale the box diagonal to 1."""
    pts = np.asarray(points, dtype=np.float64)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    diag = float(np.linalg.norm(hi - lo))
    out = pts - (lo + hi) / 2.0
    if diag > 0:
        out /= diag
    return out


# ---------------------------------------------------------------------------
# k-nearest-neighbor graph
# ---------------------------------------------------------------------------

def knn_graph(pc: PointCloud, k: int) -> Graph:
    """Symmetrized k-nearest-neighbor graph; ties break toward lower index."""
    n = pc.n
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < {n}, got {k}")
    pts = normalize_points(pc.points)
    sq = np.einsum("ij,ij->i", pts, pts)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (pts @ pts.T)
    np.fill_diagonal(d2, np.inf)
    idx = np.arange(n)
    edges = set()
    for i in range(n):
        order = np.lexsort((idx, d2[i]))[:k]
        for j in order:
            a, b = (i, int(j)) if i < j else (int(j), i)
            edges.add((a, b))
    edge_arr = np.asarray(sorted(edges), dtype=np.int64).reshape(-1, 2)
    return Graph(n, edge_arr, features=pts, labels=pc.labels)


# ---------------------------------------------------------------------------
# Geometric predicates
# ---------------------------------------------------------------------------

def _index_jitter(n: int, dim: int) -> np.ndarray:
    """Deterministic per-(index, axis) jitter in [-JITTER_SCALE, JITTER_SCALE].
    Uses an avalanche mix so index patterns cannot survive into the jitter."""
    i = np.arange(n, dtype=np.uint64)[:, None]
    a = np.arange(dim, dtype=np.uint64)[None, :]
    x = i * np.uint64(0x9E3779B97F4A7C15) + a * np.uint64(0xBF58476D1CE4E5B9) + np.uint64(0x94D049BB133111EB)
    with np.errstate(over="ignore"):
        x ^= x >> np.uint64(33)
        x *= np.uint64(0xFF51AFD7ED558CCD)
        x ^= x >> np.uint64(33)
        x *= np.uint64(0xC4CEB9FE1A85EC53)
        x ^= x >> np.uint64(33)
    h = (x & np.uint64(0xFFFFFFFF)).astype(np.float64)
    return (h / 2.0 ** 32 - 0.5) * (2.0 * JITTER_SCALE)


def _det_rows(rows: np.ndarray) -> tuple[float, float]:
    """Determinant and a magnitude scale (product of row norms) for banding."""
    det = float(np.linalg.det(rows))
    norms = np.sqrt((rows * rows).sum(axis=1))
    scale = float(np.prod(np.maximum(norms, 1e-300)))
    return det, scale


class _Predicates:
    """Sign predicates on the original coordinates with jittered fallback."""

    def __init__(self, pts: np.ndarray):
        self.pts = pts
        self.jit = pts + _index_jitter(pts.shape[0], pts.shape[1])

    def _resolved_sign(self, build_rows) -> int:
        det, scale = _det_rows(build_rows(self.pts))
        if abs(det) > PREDICATE_BAND * scale:
            return 1 if det > 0 else -1
        det_j, _ = _det_rows(build_rows(self.jit))
        if det_j > 0:
            return 1
        if det_j < 0:
            return -1
        return 0

    def orient(self, verts, q_id=None, q_point=None) -> int:
        """Sign of the (simplex) volume spanned by verts plus an optional
        extra point given by id or coordinates."""
        def rows(coords):
            base = coords[verts[0]]
            extra = [coords[v] - base for v in verts[1:]]
            if q_id is not None:
                extra.append(coords[q_id] - base)
            elif q_point is not None:
                extra.append(np.asarray(q_point, dtype=np.float64) - base)
            return np.asarray(extra)
        return self._resolved_sign(rows)

    def in_sphere(self, verts, p_id: int) -> bool:
        """Whether p_id lies strictly inside the circumsphere of the
        (d+1)-vertex simplex `verts` (row-order independent)."""
        def sphere_rows(coords):
            p = coords[p_id]
            rel = np.asarray([coords[v] - p for v in verts])
            return np.column_stack([rel, (rel * rel).sum(axis=1)])
        def orient_rows(coords):
            base = coords[verts[0]]
            return np.asarray([coords[v] - base for v in verts[1:]])
        s_in = self._resolved_sign(sphere_rows)
        s_or = self._resolved_sign(orient_rows)
        # The in-sphere/orientation sign relation alternates with dimension.
        parity = 1 if self.pts.shape[1] % 2 == 0 else -1
        return s_in != 0 and s_in == parity * s_or


# ---------------------------------------------------------------------------
# Incremental Bowyer-Watson with a symbolic bounding simplex
# ---------------------------------------------------------------------------

class _Triangulator:
    """Simplices live in flat arrays; ghost simplices (one vertex at the
    symbolic bounding corner GHOST) stand in for the super-simplex and are
    dropped at the end."""

    GHOST = -1

    def __init__(self, pts: np.ndarray):
        self.d = pts.shape[1]
        self.pts = pts
        self.pred = _Predicates(pts)
        cap = 512
        self.sv = np.full((cap, self.d + 1), -2, dtype=np.int64)
        self.alive = np.zeros(cap, dtype=bool)
        self.is_ghost = np.zeros(cap, dtype=bool)
        self.centers = np.zeros((cap, self.d))
        self.r2 = np.zeros(cap)
        self.gsign = np.zeros(cap, dtype=np.int8)
        self.count = 0
        self.face_map: dict[tuple, list[int]] = {}
        self.interior_ref: np.ndarray | None = None

    def _grow(self) -> None:
        cap = len(self.alive)
        new = 2 * cap
        self.sv = np.vstack([self.sv, np.full((cap, self.d + 1), -2, dtype=np.int64)])
        self.alive = np.concatenate([self.alive, np.zeros(cap, dtype=bool)])
        self.is_ghost = np.concatenate([self.is_ghost, np.zeros(cap, dtype=bool)])
        self.centers = np.vstack([self.centers, np.zeros((cap, self.d))])
        self.r2 = np.concatenate([self.r2, np.zeros(cap)])
        self.gsign = np.concatenate([self.gsign, np.zeros(cap, dtype=np.int8)])
        assert len(self.alive) == new

    def _circumsphere(self, vids) -> tuple[np.ndarray, float]:
        ids = list(vids)
        for coords in (self.pts, self.pred.jit):
            base = coords[ids[0]]
            rest = coords[ids[1:]]
            a = 2.0 * (rest - base)
            b = np.einsum("ij,ij->i", rest, rest) - base @ base
            try:
                c = np.linalg.solve(a, b)
                return c, float(((base - c) ** 2).sum())
            except np.linalg.LinAlgError:
                continue
        raise PointCloudError("degenerate simplex with no resolvable circumsphere")

    def _add_simplex(self, vids: tuple[int, ...]) -> int:
        if self.count == len(self.alive):
            self._grow()
        sid = self.count
        self.count += 1
        self.sv[sid] = vids
        self.alive[sid] = True
        if self.GHOST in vids:
            real = tuple(v for v in vids if v != self.GHOST)
            sign = self.pred.orient(real, q_point=self.interior_ref)
            if sign == 0:
                raise PointCloudError("cannot orient hull face against interior")
            self.is_ghost[sid] = True
            self.gsign[sid] = sign
        else:
            c, rr = self._circumsphere(vids)
            self.centers[sid] = c
            self.r2[sid] = rr
        for face in combinations(sorted(vids), self.d):
            self.face_map.setdefault(face, []).append(sid)
        return sid

    def _remove_simplex(self, sid: int) -> None:
        self.alive[sid] = False
        for face in combinations(sorted(self.sv[sid].tolist()), self.d):
            owners = self.face_map.get(face)
            if owners is not None:
                owners.remove(sid)
                if not owners:
                    del self.face_map[face]

    def seed(self, init_ids: list[int]) -> None:
        self.interior_ref = self.pts[init_ids].mean(axis=0)
        self._add_simplex(tuple(init_ids))
        for face in combinations(init_ids, self.d):
            self._add_simplex(tuple(face) + (self.GHOST,))

    def _bad_simplices(self, p_id: int) -> list[int]:
        p = self.pts[p_id]
        bad: set[int] = set()
        live = self.alive[: self.count]

        fin = np.nonzero(live & ~self.is_ghost[: self.count])[0]
        margins = np.empty(0)
        if fin.size:
            d2 = ((self.centers[fin] - p) ** 2).sum(axis=1)
            r2 = self.r2[fin]
            margins = r2 - d2
            band = PREDICATE_BAND * np.maximum(np.maximum(r2, d2), 1e-30)
            bad.update(int(s) for s in fin[margins > band])
            for s in fin[np.abs(margins) <= band]:
                if self.pred.in_sphere(tuple(self.sv[s].tolist()), p_id):
                    bad.add(int(s))

        gho = np.nonzero(live & self.is_ghost[: self.count])[0]
        if gho.size:
            faces = np.asarray(
                [[v for v in self.sv[s] if v != self.GHOST] for s in gho], dtype=np.int64
            )
            base = self.pts[faces[:, 0]]
            rows = [self.pts[faces[:, k]] - base for k in range(1, self.d)]
            rows.append(p[None, :] - base)
            mats = np.stack(rows, axis=1)
            dets = np.linalg.det(mats)
            scales = np.prod(
                np.maximum(np.sqrt((mats * mats).sum(axis=2)), 1e-300), axis=1
            )
            borderline = np.abs(dets) <= PREDICATE_BAND * scales
            for k, sid in enumerate(gho):
                if borderline[k]:
                    s = self.pred.orient(tuple(faces[k].tolist()), q_id=p_id)
                else:
                    s = 1 if dets[k] > 0 else -1
                if s != 0 and s != int(self.gsign[sid]):
                    bad.add(int(sid))
        if not bad:
            return []

        # Flood from the deepest containment so one borderline verdict cannot
        # leave a disconnected cavity.
        def depth(s: int) -> float:
            if self.is_ghost[s]:
                return math.inf
            return float(self.r2[s] - ((self.centers[s] - p) ** 2).sum())

        start = max(bad, key=depth)
        component = {start}
        stack = [start]
        while stack:
            sid = stack.pop()
            for face in combinations(sorted(self.sv[sid].tolist()), self.d):
                for other in self.face_map.get(face, ()):
                    if other in bad and other not in component:
                        component.add(other)
                        stack.append(other)
        return sorted(component)

    def insert(self, p_id: int) -> None:
        bad = self._bad_simplices(p_id)
        if not bad:
            raise PointCloudError(
                f"point {p_id} is inside no circumsphere; triangulation state is inconsistent"
            )
        face_count: dict[tuple, int] = {}
        for sid in bad:
            for face in combinations(sorted(self.sv[sid].tolist()), self.d):
                face_count[face] = face_count.get(face, 0) + 1
        for sid in bad:
            self._remove_simplex(sid)
        for face, cnt in face_count.items():
            if cnt == 1:
                self._add_simplex(face + (p_id,))

    def finite_simplices(self) -> list[tuple[int, ...]]:
        live = np.nonzero(self.alive[: self.count] & ~self.is_ghost[: self.count])[0]
        return [tuple(int(v) for v in self.sv[s]) for s in live]


def _independent_seed(pts: np.ndarray) -> list[int] | None:
    """First d+1 affinely independent points by index order. Fatter seed
    simplices are preferred (graded thresholds) so the interior reference
    point stays well clear of every hull face."""
    n, d = pts.shape
    for threshold in (1e-3, 1e-6, PREDICATE_BAND):
        chosen = [0]
        for i in range(1, n):
            if len(chosen) == d + 1:
                break
            m = pts[chosen[1:] + [i]] - pts[chosen[0]]
            sv = np.linalg.svd(m, compute_uv=False)
            if sv.size and sv[-1] > threshold * max(1.0, float(sv[0])):
                chosen.append(i)
        if len(chosen) == d + 1:
            return chosen
    return None


def triangulate(points: np.ndarray) -> list[tuple[int, ...]]:
    """Delaunay simplices (vertex-index tuples) of distinct points in 2 or 3
    dimensions. Raises DegenerateCloudError when the cloud spans fewer
    dimensions than required."""
    pts = np.asarray(points, dtype=np.float64)
    n, d = pts.shape
    if n < d + 1:
        raise DegenerateCloudError(f"need at least {d + 1} points, got {n}")
    seed_ids = _independent_seed(pts)
    if seed_ids is None:
        raise DegenerateCloudError("points are degenerate for this dimension")
    tri = _Triangulator(pts)
    tri.seed(seed_ids)
    chosen = set(seed_ids)
    for p_id in range(n):
        if p_id not in chosen:
            tri.insert(p_id)
    return tri.finite_simplices()


def _edges_from_simplices(simplices) -> set[tuple[int, int]]:
    edges: set[tuple[int, int]] = set()
    for simplex in simplices:
        for a, b in combinations(sorted(simplex), 2):
            edges.add((a, b))
    return edges


def delaunay_graph(pc: PointCloud) -> Graph:
    """Graph whose edges are the 1-skeleton of the Delaunay
    tetrahedralization of the (normalized) cloud; always connected.

    Fewer than 5 distinct points give a complete graph. A fully coplanar
    cloud falls back to a planar triangulation on its best-fit plane (with a
    UserWarning); a collinear cloud degrades to a chain. Duplicate points
    attach to their first occurrence.
    """
    pts = normalize_points(pc.points)
    _, first_idx, inverse = np.unique(pts, axis=0, return_index=True, return_inverse=True)
    orig_of_rep = np.sort(first_idx)
    rep_points = pts[orig_of_rep]
    rank_of_uniq = np.empty(len(first_idx), dtype=np.int64)
    rank_of_uniq[np.argsort(first_idx)] = np.arange(len(first_idx))
    rep_index = rank_of_uniq[inverse]

    m = rep_points.shape[0]
    if m <= pts.shape[1] + 1:
        edges = {(a, b) for a, b in combinations(range(m), 2)}
    else:
        try:
            edges = _edges_from_simplices(triangulate(rep_points))
        except DegenerateCloudError:
            edges = _planar_fallback(rep_points)

    full_edges = {(int(orig_of_rep[a]), int(orig_of_rep[b])) for a, b in edges}
    for i in range(pc.n):
        rep = int(orig_of_rep[rep_index[i]])
        if rep != i:
            full_edges.add((min(i, rep), max(i, rep)))
    edge_arr = np.asarray(sorted(full_edges), dtype=np.int64).reshape(-1, 2)
    return Graph(pc.n, edge_arr, features=pts, labels=pc.labels)


def _planar_fallback(pts3: np.ndarray) -> set[tuple[int, int]]:
    centered = pts3 - pts3.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    coords2 = centered @ vt[:2].T
    try:
        edges = _edges_from_simplices(triangulate(coords2))
        warnings.warn(
            "point cloud is coplanar; triangulating on its best-fit plane", stacklevel=3
        )
        return edges
    except DegenerateCloudError:
        warnings.warn(
            "point cloud is collinear; connecting points as a chain", stacklevel=3
        )
        t = centered @ vt[0]
        order = np.lexsort((np.arange(len(t)), t))
        return {
            (min(int(order[i]), int(order[i + 1])), max(int(order[i]), int(order[i + 1])))
            for i in range(len(order) - 1)
        }

"""Penalized stress layout: energies, gradients, minimization, rounding.

The optimizer places graph vertices in the plane so Euclidean distances track
graph hop distances, adds a hinge penalty that pushes every vertex pair at
least `alpha` apart, and rounds the result onto the integer grid.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import DistanceMatrix, Graph, shortest_path_distances

# Distances are clamped below this inside energies and gradients so coincident
# points yield large-but-finite values instead of NaN.
DIST_EPS = 1e-9
# Below this separation a pair counts as exactly coincident and gets a
# deterministic tie-break direction in the gradient.
COINCIDENT_EPS = 1e-12

INIT_STRATEGIES = ("circular", "spectral", "random")


class OptimizationError(RuntimeError):
    """Non-finite objective or gradient encountered during minimization."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


@dataclass(frozen=True)
class LayoutConfig:
    """Solver parameters: hinge threshold `alpha`, penalty weight `lam`,
    iteration caps for the two minimization stages, and the init strategy."""

    alpha: float = 1.25
    lam: float = 1000.0
    max_iters_kk: int = 500
    max_iters_gpgl: int = 1000
    grad_tol: float = 1e-4
    seed: int = 0
    init: str = "circular"

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if self.init not in INIT_STRATEGIES:
            raise ValueError(f"init must be one of {INIT_STRATEGIES}")


@dataclass(frozen=True)
class ContinuousLayout:
    """Real-valued vertex coordinates plus solver bookkeeping."""

    coords: np.ndarray
    energy: float | None = None
    converged: bool = False
    iterations: int = 0
    init_fallback: bool = False

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ValueError(f"coords must be (n, 2), got {coords.shape}")
        if coords.size and not np.all(np.isfinite(coords)):
            raise ValueError("coords must be finite")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    @property
    def n(self) -> int:
        return self.coords.shape[0]


@dataclass(frozen=True)
class GridLayout:
    """Integer cell per vertex, with overlap accounting."""

    cells: np.ndarray
    occupancy: dict
    vertex_loss_count: int
    bounding_box: tuple[int, int, int, int]

    @classmethod
    def from_cells(cls, cells: np.ndarray) -> "GridLayout":
        cells = np.asarray(cells, dtype=np.int64)
        if cells.ndim != 2 or cells.shape[1] != 2:
            raise ValueError(f"cells must be (n, 2), got {cells.shape}")
        occupancy: dict[tuple[int, int], list[int]] = {}
        for v, (x, y) in enumerate(cells):
            occupancy.setdefault((int(x), int(y)), []).append(v)
        loss = cells.shape[0] - len(occupancy)
        if cells.shape[0]:
            bbox = (
                int(cells[:, 0].min()), int(cells[:, 1].min()),
                int(cells[:, 0].max()), int(cells[:, 1].max()),
            )
        else:
            bbox = (0, 0, -1, -1)
        cells = cells.copy()
        cells.setflags(write=False)
        return cls(cells, occupancy, loss, bbox)

    @property
    def n(self) -> int:
        return self.cells.shape[0]

    def bbox_side(self) -> int:
        """Longest side of the bounding box, in cells."""
        x0, y0, x1, y1 = self.bounding_box
        if x1 < x0:
            return 0
        return max(x1 - x0, y1 - y0) + 1

    def to_json_dict(self) -> dict:
        return {
            "cells": self.cells.tolist(),
            "loss": self.vertex_loss_count,
            "bbox": list(self.bounding_box),
        }

    @classmethod
    def from_json_dict(cls, payload: dict) -> "GridLayout":
        return cls.from_cells(np.asarray(payload["cells"], dtype=np.int64))

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict()))

    @classmethod
    def load_json(cls, path) -> "GridLayout":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Energies and gradients
# ---------------------------------------------------------------------------

def _pair_direction(i: int, j: int) -> np.ndarray:
    """Deterministic pseudo-random unit vector for an exactly coincident pair."""
    h = ((i * 73856093) ^ (j * 19349663)) & 0xFFFFFFFF
    angle = 2.0 * math.pi * (h / 2.0 ** 32)
    return np.array([math.cos(angle), math.sin(angle)])


def _inverse_hop_matrix(s: np.ndarray) -> np.ndarray:
    """1/s with a harmless diagonal (the diagonal never enters pair sums)."""
    s_safe = np.array(s, dtype=np.float64)
    np.fill_diagonal(s_safe, 1.0)
    return 1.0 / s_safe


def _stress_eval(
    x: np.ndarray, inv_s: np.ndarray, alpha: float, lam: float
) -> tuple[float, float, np.ndarray]:
    """Hot path shared by the public energy/gradient functions and the solver
    closures; `inv_s` comes from _inverse_hop_matrix. Buffers are reused and
    the hinge term touches only the active pairs."""
    n = x.shape[0]
    if n < 2:
        return 0.0, 0.0, np.zeros_like(x)
    # Differences first: exactly translation-invariant up to input rounding,
    # unlike the norm-expansion form which cancels catastrophically when the
    # layout sits far from the origin.
    dx = x[:, 0:1] - x[:, 0:1].T
    dy = x[:, 1:2] - x[:, 1:2].T
    np.multiply(dx, dx, out=dx)
    np.multiply(dy, dy, out=dy)
    dx += dy
    d = np.sqrt(dx, out=dx)
    np.fill_diagonal(d, 1.0)  # diagonal never enters pair sums

    coincident: list[tuple[int, int]] = []
    if float(d.min()) < COINCIDENT_EPS:
        coincident = [tuple(p) for p in np.argwhere(np.triu(d < COINCIDENT_EPS, k=1))]
    np.maximum(d, DIST_EPS, out=d)

    ratio = np.multiply(d, inv_s, out=dy)  # dy buffer now holds d/s
    ratio -= 1.0
    e_kk = 0.25 * float(np.einsum("ij,ij->", ratio, ratio))  # 0.5 per pair, counted twice

    w = np.multiply(ratio, inv_s, out=ratio)
    w /= d

    e_sep = 0.0
    if lam > 0:
        active = d < alpha
        np.fill_diagonal(active, False)
        if active.any():
            vals = d[active]
            e_sep = 0.5 * lam * float((alpha / vals - 1.0).sum())
            w[active] -= lam * alpha / (vals * vals * vals)

    # Coincident pairs get a tie-break direction instead of the matrix term.
    for i, j in coincident:
        w[i, j] = w[j, i] = 0.0

    grad = w.sum(axis=1)[:, None] * x
    grad -= w @ x

    for i, j in coincident:
        i, j = int(i), int(j)
        u = _pair_direction(i, j)
        fprime = (d[i, j] * inv_s[i, j] - 1.0) * inv_s[i, j]
        if lam > 0 and d[i, j] < alpha:
            fprime -= lam * alpha / d[i, j] ** 2
        grad[i] += fprime * u
        grad[j] -= fprime * u
    return e_kk, e_sep, grad


def stress_value_grad(
    x: np.ndarray,
    s: np.ndarray,
    alpha: float,
    lam: float,
) -> tuple[float, float, np.ndarray]:
    """Stress energy, separation penalty, and their combined gradient.

    Both energies sum over unordered pairs i < j. Distances are clamped at
    DIST_EPS; exactly coincident pairs receive a deterministic tie-break
    direction in the gradient.
    """
    return _stress_eval(np.asarray(x, dtype=np.float64), _inverse_hop_matrix(s), alpha, lam)


def kk_energy(layout: ContinuousLayout, dist: DistanceMatrix) -> float:
    """Stress energy: sum over pairs i < j of 0.5 * (d_ij / s_ij - 1)^2."""
    if layout.n != dist.n:
        raise ValueError("layout and distance matrix disagree on n")
    e_kk, _, _ = stress_value_grad(layout.coords, dist.d, alpha=1.0, lam=0.0)
    return e_kk


def separation_penalty(layout: ContinuousLayout, alpha: float, lam: float) -> float:
    """Hinge penalty: lam * sum over pairs i < j of max(0, alpha/d_ij - 1)."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if lam < 0:
        raise ValueError("lam must be non-negative")
    n = layout.n
    s = np.ones((n, n))
    _, e_sep, _ = stress_value_grad(layout.coords, s, alpha=alpha, lam=lam)
    return e_sep


def gpgl_gradient(
    layout: ContinuousLayout, dist: DistanceMatrix, cfg: LayoutConfig
) -> np.ndarray:
    """Gradient of the combined energy (stress + separation) per vertex."""
    if layout.n != dist.n:
        raise ValueError("layout and distance matrix disagree on n")
    _, _, grad = stress_value_grad(layout.coords, dist.d, cfg.alpha, cfg.lam)
    return grad


def gpgl_energy(layout: ContinuousLayout, dist: DistanceMatrix, cfg: LayoutConfig) -> float:
    e_kk, e_sep, _ = stress_value_grad(layout.coords, dist.d, cfg.alpha, cfg.lam)
    return e_kk + e_sep


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def init_layout(g: Graph, strategy: str, seed: int) -> ContinuousLayout:
    """Build a starting layout: `circular` (seed-shuffled order on a circle of
    radius n/2pi), `spectral` (two smallest-nonzero Laplacian eigenvectors,
    rescaled to the mean hop distance), or `random` (uniform in a square of
    side sqrt(n)). Deterministic given (strategy, seed)."""
    if strategy not in INIT_STRATEGIES:
        raise ValueError(f"unknown init strategy {strategy!r}")
    n = g.num_vertices
    if n == 0:
        return ContinuousLayout(np.zeros((0, 2)))
    if n == 1:
        return ContinuousLayout(np.zeros((1, 2)))

    if strategy == "random":
        rng = np.random.default_rng(seed)
        return ContinuousLayout(rng.uniform(0.0, math.sqrt(n), size=(n, 2)))

    if strategy == "spectral":
        coords = _spectral_coords(g)
        if coords is None:
            base = _circular_coords(n, seed)
            return ContinuousLayout(base, init_fallback=True)
        return ContinuousLayout(coords)

    return ContinuousLayout(_circular_coords(n, seed))


def _circular_coords(n: int, seed: int) -> np.ndarray:
    radius = n / (2.0 * math.pi)
    order = np.random.default_rng(seed).permutation(n)
    angles = 2.0 * math.pi * np.arange(n) / n
    coords = np.empty((n, 2))
    coords[order, 0] = radius * np.cos(angles)
    coords[order, 1] = radius * np.sin(angles)
    return coords


def _spectral_coords(g: Graph) -> np.ndarray | None:
    n = g.num_vertices
    if n < 3:
        return None
    adj = g.adjacency.toarray().astype(np.float64)
    lap = np.diag(adj.sum(axis=1)) - adj
    eigvals, eigvecs = np.linalg.eigh(lap)
    tol = 1e-8 * max(1.0, float(abs(eigvals[-1])))
    nonzero = np.where(eigvals > tol)[0]
    if len(nonzero) < 2:
        return None
    coords = eigvecs[:, nonzero[:2]].copy()
    dist = shortest_path_distances(g)
    iu = np.triu_indices(n, k=1)
    target = float(dist.d[iu].mean())
    diffs = coords[:, None, :] - coords[None, :, :]
    current = float(np.sqrt((diffs ** 2).sum(-1))[iu].mean())
    if current > 0:
        coords *= target / current
    return coords


# ---------------------------------------------------------------------------
# Minimization: limited-memory quasi-Newton with backtracking line search
# ---------------------------------------------------------------------------

_HISTORY = 10
_ARMIJO_C1 = 1e-4
_MIN_STEP = 1e-16


def minimize(objective, x0: ContinuousLayout, max_iters: int, grad_tol: float) -> ContinuousLayout:
    """Minimize `objective(coords) -> (value, grad)` starting from x0.

    Limited-memory quasi-Newton (two-loop recursion, history 10) with
    Armijo backtracking. Accepted-step values are monotone non-increasing;
    `converged` is set when the gradient infinity-norm drops below
    `grad_tol` within `max_iters` iterations.
    """
    x = np.array(x0.coords, dtype=np.float64)
    f, g = objective(x)
    if not (np.isfinite(f) and np.all(np.isfinite(g))):
        raise OptimizationError("non-finite objective at start", iteration=0)

    s_hist: list[np.ndarray] = []
    y_hist: list[np.ndarray] = []
    rho_hist: list[float] = []

    iters = 0
    converged = float(np.abs(g).max(initial=0.0)) < grad_tol
    while not converged and iters < max_iters:
        d = _two_loop_direction(g, s_hist, y_hist, rho_hist)
        gtd = float(np.sum(g * d))
        if not np.isfinite(gtd) or gtd >= 0.0:
            d = -g
            gtd = -float(np.sum(g * g))
            s_hist.clear(); y_hist.clear(); rho_hist.clear()

        step = 1.0
        accepted = False
        while step >= _MIN_STEP:
            x_new = x + step * d
            f_new, g_new = objective(x_new)
            if not (np.isfinite(f_new) and np.all(np.isfinite(g_new))):
                raise OptimizationError("non-finite objective during line search",
                                        iteration=iters + 1)
            if f_new <= f + _ARMIJO_C1 * step * gtd:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break  # line search stalled; return best point so far

        s_vec = x_new - x
        y_vec = g_new - g
        sy = float(np.sum(s_vec * y_vec))
        if sy > 1e-12 * math.sqrt(float(np.sum(s_vec * s_vec)) * float(np.sum(y_vec * y_vec)) + 1e-300):
            s_hist.append(s_vec); y_hist.append(y_vec); rho_hist.append(1.0 / sy)
            if len(s_hist) > _HISTORY:
                s_hist.pop(0); y_hist.pop(0); rho_hist.pop(0)

        x, f, g = x_new, f_new, g_new
        iters += 1
        converged = float(np.abs(g).max(initial=0.0)) < grad_tol

    return ContinuousLayout(x, energy=float(f), converged=converged, iterations=iters)


def _two_loop_direction(g, s_hist, y_hist, rho_hist) -> np.ndarray:
    q = -g.copy()
    if not s_hist:
        return q
    alphas = []
    for s_vec, y_vec, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
        a = rho * float(np.sum(s_vec * q))
        q -= a * y_vec
        alphas.append(a)
    y_last = y_hist[-1]
    gamma = 1.0 / (rho_hist[-1] * float(np.sum(y_last * y_last)))
    q *= gamma
    for (s_vec, y_vec, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
        b = rho * float(np.sum(y_vec * q))
        q += (a - b) * s_vec
    return q


# ---------------------------------------------------------------------------
# Full pipeline
# ---------------------------------------------------------------------------

def round_half_away(x: np.ndarray) -> np.ndarray:
    """Elementwise round with halves going away from zero."""
    return np.copysign(np.floor(np.abs(x) + 0.5), x).astype(np.int64)


def gpgl_pipeline(
    g: Graph, cfg: LayoutConfig, dist: DistanceMatrix | None = None
) -> tuple[ContinuousLayout, GridLayout]:
    """Run the full layout pipeline and return both the continuous solution
    and the rounded grid layout.

    Stages: hop distances -> stress-only minimization from the configured
    init -> penalized minimization warm-started at the stress solution ->
    translate the bounding box to the origin -> round to integer cells.
    """
    n = g.num_vertices
    if n == 0:
        raise ValueError("cannot lay out an empty graph")
    if n == 1:
        sol = ContinuousLayout(np.zeros((1, 2)), energy=0.0, converged=True, iterations=0)
        return sol, GridLayout.from_cells(np.zeros((1, 2), dtype=np.int64))

    if dist is None:
        dist = shortest_path_distances(g)
    inv_s = _inverse_hop_matrix(dist.d)

    x0 = init_layout(g, cfg.init, cfg.seed)

    def kk_obj(x):
        e_kk, _, grad = _stress_eval(x, inv_s, cfg.alpha, 0.0)
        return e_kk, grad

    def full_obj(x):
        e_kk, e_sep, grad = _stress_eval(x, inv_s, cfg.alpha, cfg.lam)
        return e_kk + e_sep, grad

    warm = minimize(kk_obj, x0, cfg.max_iters_kk, cfg.grad_tol)
    final = minimize(full_obj, warm, cfg.max_iters_gpgl, cfg.grad_tol)
    if x0.init_fallback:
        final = ContinuousLayout(final.coords, energy=final.energy,
                                 converged=final.converged,
                                 iterations=final.iterations, init_fallback=True)

    shifted = final.coords - final.coords.min(axis=0)
    cells = round_half_away(shifted)
    return final, GridLayout.from_cells(cells)


def gpgl(g: Graph, cfg: LayoutConfig) -> GridLayout:
    """Penalized stress layout rounded onto the integer grid."""
    return gpgl_pipeline(g, cfg)[1]


def vertex_loss_ratio(
    layouts: list[GridLayout], graphs: list[Graph], mode: str = "macro"
) -> float:
    """Percentage of vertices lost to cell sharing.

    `macro` (default) averages the per-graph percentage over graphs;
    `micro` pools all vertices before taking the ratio.
    """
    if not layouts or len(layouts) != len(graphs):
        raise ValueError("need equal-length, non-empty layout and graph lists")
    if mode == "macro":
        ratios = [
            100.0 * lay.vertex_loss_count / g.num_vertices
            for lay, g in zip(layouts, graphs)
        ]
        return float(np.mean(ratios))
    if mode == "micro":
        total_loss = sum(lay.vertex_loss_count for lay in layouts)
        total_n = sum(g.num_vertices for g in graphs)
        return 100.0 * total_loss / total_n
    raise ValueError("mode must be 'macro' or 'micro'")

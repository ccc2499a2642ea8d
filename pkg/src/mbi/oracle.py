"""Independent ground truth for checking the mechanism.

Nothing here touches the differentiation engine: losses are plain numpy
callables over a stacked action array of shape ``(M, n)`` (a batch of ``M``
points in ``n`` action dimensions) returning ``(M,)`` loss values.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import GridTooLarge, NonPositiveLambda

GRID_GUARD = 10**8
_CHUNK = 1 << 20


@dataclass(frozen=True)
class GridSpec:
    bounds: Sequence[tuple[float, float]]
    resolution: int

    def __post_init__(self):
        if self.resolution < 3:
            raise ValueError("grid resolution must be >= 3")
        for lo, hi in self.bounds:
            if not lo < hi:
                raise ValueError(f"grid bounds need lo < hi, got ({lo}, {hi})")

    @property
    def size(self) -> int:
        return self.resolution ** len(self.bounds)

    @property
    def pitch(self) -> np.ndarray:
        return np.array([(hi - lo) / (self.resolution - 1) for lo, hi in self.bounds])

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, self.resolution) for lo, hi in self.bounds]


def grid_search_min(loss: Callable[[np.ndarray], np.ndarray], grid: GridSpec) -> tuple[np.ndarray, float]:
    """Exhaustive minimum over the grid.

    Points are visited in lexicographic order (first coordinate slowest) and
    only a strictly smaller value replaces the incumbent, so ties resolve to
    the lexicographically smallest point.  Evaluation is chunked; chunks are
    reduced in order, which keeps the result deterministic.
    """
    if grid.size > GRID_GUARD:
        raise GridTooLarge(f"{grid.size} grid points exceed the guard of {GRID_GUARD}")
    axes = grid.axes()
    shape = tuple(a.size for a in axes)
    total = grid.size
    best_val = np.inf
    best_idx = 0
    for start in range(0, total, _CHUNK):
        flat = np.arange(start, min(start + _CHUNK, total))
        idx = np.unravel_index(flat, shape)
        pts = np.stack([ax[i] for ax, i in zip(axes, idx)], axis=1)
        vals = np.asarray(loss(pts), dtype=float)
        k = int(np.argmin(vals))  # first occurrence of the minimum
        if vals[k] < best_val:
            best_val = float(vals[k])
            best_idx = start + k
    idx = np.unravel_index(best_idx, shape)
    return np.array([ax[i] for ax, i in zip(axes, idx)]), best_val


def refine_grid_min(loss, center: Sequence[float], half_width: float,
                    resolution: int = 201, levels: int = 4, shrink: float = 10.0):
    """Nested grid search: repeatedly re-centre a shrinking box on the grid argmin."""
    c = np.asarray(center, dtype=float)
    w = float(half_width)
    val = np.inf
    for _ in range(levels):
        grid = GridSpec([(ci - w, ci + w) for ci in c], resolution)
        c, val = grid_search_min(loss, grid)
        w /= shrink
    return c, val


def grid_local_minima(loss, grid: GridSpec, refine: bool = True) -> list[np.ndarray]:
    """Interior grid points strictly below all their neighbours, optionally refined.

    Refinement re-runs a nested grid search in a box of two pitches around
    each candidate, which pins a smooth minimum far below the coarse pitch.
    """
    if grid.size > GRID_GUARD:
        raise GridTooLarge(f"{grid.size} grid points exceed the guard of {GRID_GUARD}")
    axes = grid.axes()
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    vals = np.asarray(loss(pts), dtype=float).reshape(mesh[0].shape)
    d = vals.ndim
    inner = tuple(slice(1, -1) for _ in range(d))
    core = vals[inner]
    is_min = np.ones(core.shape, dtype=bool)
    for off in itertools.product((-1, 0, 1), repeat=d):
        if not any(off):
            continue
        sl = tuple(slice(1 + o, vals.shape[k] - 1 + o) for k, o in enumerate(off))
        is_min &= core < vals[sl]
    found = []
    pitch = float(grid.pitch.max())
    for idx in zip(*np.nonzero(is_min)):
        p = np.array([axes[k][i + 1] for k, i in enumerate(idx)])
        if refine:
            p, _ = refine_grid_min(loss, p, 2 * pitch, resolution=41, levels=4, shrink=10.0)
        found.append(p)
    return found


def central_diff_batched(loss, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a batched loss at one point, all coordinates in one call."""
    x = np.asarray(x, dtype=float)
    n = x.size
    e = np.eye(n) * h
    vals = np.asarray(loss(np.concatenate([x + e, x - e])), dtype=float)
    return (vals[:n] - vals[n:]) / (2 * h)


def quadratic_kkt_solution(lambdas: Sequence[float], y_star: float) -> np.ndarray:
    """Minimiser of ``(sum x - Y*)^2 + sum lam_i x_i^2``.

    Stationarity gives ``lam_i x_i = Y* - sum x`` for every agent, so
    ``x_i = c / lam_i`` with ``c = Y* / (1 + sum 1/lam_j)``.
    """
    lam = np.asarray(lambdas, dtype=float)
    if lam.size == 0 or (lam <= 0).any():
        raise NonPositiveLambda("every lambda must be positive")
    c = y_star / (1.0 + np.sum(1.0 / lam))
    return c / lam


def quadratic_loss(x: np.ndarray, lambdas, y_star: float) -> np.ndarray:
    """``(sum x - Y*)^2 + sum lam_i x_i^2`` for a batch ``x`` of shape (M, N)."""
    x = np.atleast_2d(x)
    lam = np.asarray(lambdas, dtype=float)
    return (x.sum(axis=1) - y_star) ** 2 + (x * x) @ lam


def quadratic_fit(loss, n: int, h: float = 1.0) -> tuple[np.ndarray, np.ndarray, float]:
    """Recover ``H, g, f0`` of a quadratic ``f(x) = f0 + g.x + x.H.x/2`` by differences at 0.

    Central differences of a quadratic are exact, so only rounding error
    remains.
    """
    def f(x):
        return float(loss(x[None, :])[0])

    e = np.eye(n) * h
    f0 = f(np.zeros(n))
    fp = np.array([f(e[j]) for j in range(n)])
    fm = np.array([f(-e[j]) for j in range(n)])
    g = (fp - fm) / (2 * h)
    H = np.empty((n, n))
    for j in range(n):
        H[j, j] = (fp[j] - 2 * f0 + fm[j]) / h**2
    for j, k in itertools.combinations(range(n), 2):
        fpp = f(e[j] + e[k])
        fpm = f(e[j] - e[k])
        fmp = f(-e[j] + e[k])
        fmm = f(-e[j] - e[k])
        H[j, k] = H[k, j] = (fpp - fpm - fmp + fmm) / (4 * h * h)
    return H, g, f0


def quadratic_minimizer(loss, n: int) -> tuple[np.ndarray, float]:
    """Minimiser and minimum of a strictly convex quadratic loss."""
    H, g, _ = quadratic_fit(loss, n)
    x = np.linalg.solve(H, -g)
    return x, float(loss(x[None, :])[0])


@dataclass(frozen=True)
class ConvexityReport:
    samples: int
    violations: int
    worst_gap: float
    example: tuple | None = None

    @property
    def convex(self) -> bool:
        return self.violations == 0


def convexity_probe(loss: Callable[[np.ndarray], float], samples: int, domain: GridSpec,
                    seed: int = 0, tol: float = 1e-9) -> ConvexityReport:
    """Midpoint-convexity test ``f((a+b)/2) <= (f(a)+f(b))/2 + tol`` on random pairs.

    ``loss`` takes a single point (1-D array) and returns a float.
    """
    if samples < 100:
        raise ValueError("convexity probe needs at least 100 samples")
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in domain.bounds])
    hi = np.array([b[1] for b in domain.bounds])
    a = rng.uniform(lo, hi, size=(samples, lo.size))
    b = rng.uniform(lo, hi, size=(samples, lo.size))
    violations = 0
    worst = -np.inf
    example = None
    for p, q in zip(a, b):
        gap = float(loss((p + q) / 2)) - 0.5 * (float(loss(p)) + float(loss(q)))
        if gap > worst:
            worst = gap
        if gap > tol:
            violations += 1
            if example is None:
                example = (p.copy(), q.copy())
    return ConvexityReport(samples, violations, worst, example)


def lipschitz_probe(grad: Callable[[np.ndarray], np.ndarray], samples: int, domain: GridSpec,
                    seed: int = 0) -> float:
    """Largest observed ``|grad(a) - grad(b)| / |a - b|`` over random pairs."""
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in domain.bounds])
    hi = np.array([b[1] for b in domain.bounds])
    best = 0.0
    for _ in range(samples):
        p, q = rng.uniform(lo, hi), rng.uniform(lo, hi)
        d = np.linalg.norm(p - q)
        if d > 0:
            best = max(best, float(np.linalg.norm(grad(p) - grad(q)) / d))
    return best

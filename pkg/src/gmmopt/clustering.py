"""k-means as a bound-optimization problem.

The objective is the within-cluster sum of squares with the assignment
minimized out per point. Freezing the assignments z gives the quadratic
bound family; its minimizer is the per-cluster mean. The touching bound at
centers w assigns every point to its nearest center.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import (Biased, GmmProblem, Greedy, RandomWalk, RunContext,
                     SelectorKind, StochasticSubset, UnsupportedSelectorError)
from .rng import Purpose
from .walks import constrained_walk


@dataclass(frozen=True)
class Dataset:
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError("points must be a nonempty 2-D array")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points contain non-finite values")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def fingerprint(self) -> str:
        import hashlib
        return hashlib.sha256(np.ascontiguousarray(self.points).tobytes()).hexdigest()


@dataclass(frozen=True)
class Centers:
    mu: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if mu.ndim != 2 or mu.shape[0] < 1:
            raise ValueError("mu must be a k x dim array with k >= 1")
        if not np.all(np.isfinite(mu)):
            raise ValueError("centers contain non-finite values")
        object.__setattr__(self, "mu", mu)

    @property
    def k(self) -> int:
        return self.mu.shape[0]

    def ravel(self) -> np.ndarray:
        return self.mu.ravel()


def distances_sq(data: Dataset, centers: Centers) -> np.ndarray:
    """(n, k) squared Euclidean distances via the subtraction form (the
    inner-product expansion is cancellation-prone), accumulated one
    coordinate at a time: vectorized over (n, k) yet performing the same
    per-element operation sequence as a per-center loop, so results on 2-D
    data are bit-identical to the textbook formula."""
    pts = data.points
    mu = centers.mu
    diff = pts[:, 0:1] - mu[None, :, 0]
    out = diff * diff
    for d in range(1, pts.shape[1]):
        diff = pts[:, d:d + 1] - mu[None, :, d]
        out += diff * diff
    return out


def objective(data: Dataset, centers: Centers) -> float:
    """Sum over points of the squared distance to the nearest center."""
    return float(distances_sq(data, centers).min(axis=1).sum())


def bound_value(data: Dataset, centers: Centers, config: np.ndarray) -> float:
    """Sum of squared distances under a frozen assignment; touches the
    objective exactly when the assignment is nearest-center."""
    d2 = distances_sq(data, centers)
    return float(d2[np.arange(data.n), config].sum())


def touching_assignment(data: Dataset, centers: Centers) -> np.ndarray:
    """Nearest-center assignment; ties go to the lowest cluster index."""
    return distances_sq(data, centers).argmin(axis=1).astype(np.int64)


def optimize_bound(data: Dataset, config: np.ndarray, k: int,
                   respawn_dead: bool = False) -> Centers:
    """Minimize the frozen-assignment bound: per-cluster means.

    A cluster with no assigned points does not appear in the bound, so any
    center minimizes it; the default collapses dead centers onto the origin
    (reproducing the classic pathology of the mean update). With
    `respawn_dead`, each dead center is instead placed on the point
    currently farthest from its assigned center (deterministic order) --
    also a minimizer, but one that revives the cluster next iteration.
    """
    pts = data.points
    mu = np.zeros((k, data.dim))
    dead = []
    for j in range(k):
        members = pts[config == j]
        if len(members):
            mu[j] = members.mean(axis=0)
        else:
            dead.append(j)
    if respawn_dead and dead:
        d2 = distances_sq(data, Centers(mu))
        cur = d2[np.arange(data.n), config].copy()
        for j in dead:
            far = int(np.argmax(cur))
            mu[j] = pts[far]
            cur[far] = -1.0  # do not reuse the same point for another dead center
    return Centers(mu)


def random_walk_select(data: Dataset, centers_prev: Centers, v_prev: float,
                       walk_steps: int, rng: np.random.Generator,
                       tol: float = 0.0) -> np.ndarray:
    """Sample an assignment from the valid set at `centers_prev`.

    The walk starts from the touching assignment (the one configuration
    guaranteed valid), proposes single-point reassignments (uniform point,
    uniform other cluster) and accepts whenever the incrementally-updated
    bound value at the frozen centers stays within the budget.
    """
    table = distances_sq(data, centers_prev)
    z0 = table.argmin(axis=1).astype(np.int64)
    z, _, _ = constrained_walk(table, z0, v_prev, walk_steps, rng, tol=tol)
    return z


def init_forgy(data: Dataset, k: int, rng: np.random.Generator) -> tuple[Centers, np.ndarray]:
    """k distinct points chosen uniformly become the centers."""
    if k > data.n:
        raise ValueError(f"forgy needs k <= n, got k={k}, n={data.n}")
    idx = rng.choice(data.n, size=k, replace=False)
    centers = Centers(data.points[idx].copy())
    return centers, touching_assignment(data, centers)


def init_random_partition(data: Dataset, k: int, rng: np.random.Generator) -> tuple[Centers, np.ndarray]:
    """Uniform random assignment; centers are the bound minimizer for it."""
    z = rng.integers(0, k, size=data.n, dtype=np.int64)
    return optimize_bound(data, z, k), z


def init_kmeanspp(data: Dataset, k: int, rng: np.random.Generator) -> tuple[Centers, np.ndarray]:
    """D^2-weighted seeding: first center uniform, each next drawn with
    probability proportional to the squared distance to the nearest
    already-chosen center (exact weights, no approximation)."""
    if k > data.n:
        raise ValueError(f"k-means++ needs k <= n, got k={k}, n={data.n}")
    pts = data.points
    centers = np.empty((k, data.dim))
    first = int(rng.integers(data.n))
    centers[0] = pts[first]
    diff = pts - centers[0]
    closest = np.einsum("ij,ij->i", diff, diff)
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            # all mass on already-seeded points: fall back to uniform choice
            idx = int(rng.integers(data.n))
        else:
            idx = int(rng.choice(data.n, p=closest / total))
        centers[j] = pts[idx]
        diff = pts - centers[j]
        closest = np.minimum(closest, np.einsum("ij,ij->i", diff, diff))
    out = Centers(centers)
    return out, touching_assignment(data, out)


INITIALIZERS = {
    "forgy": init_forgy,
    "random-partition": init_random_partition,
    "kmeans++": init_kmeanspp,
}


class ClusteringProblem(GmmProblem):
    """Engine adapter. Solutions are the flattened (k, dim) center matrix.

    The distance matrix for a given solution is reused across the several
    evaluations the engine makes per iteration (a two-slot cache keyed by
    the solution bytes; values identical to a fresh computation).
    """

    def __init__(self, data: Dataset, k: int, respawn_dead: bool = False):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.data = data
        self.k = k
        self.respawn_dead = respawn_dead
        self._cache: list[tuple[bytes, np.ndarray]] = []

    @property
    def dim(self) -> int:
        return self.k * self.data.dim

    def _centers(self, w: np.ndarray) -> Centers:
        return Centers(np.asarray(w, dtype=float).reshape(self.k, self.data.dim))

    def _distances(self, w: np.ndarray) -> np.ndarray:
        key = np.asarray(w, dtype=float).tobytes()
        for cached_key, d2 in self._cache:
            if cached_key == key:
                return d2
        d2 = distances_sq(self.data, self._centers(w))
        self._cache = [(key, d2)] + self._cache[:1]
        return d2

    def objective(self, w: np.ndarray) -> float:
        return float(self._distances(w).min(axis=1).sum())

    def bound_value(self, w: np.ndarray, config: np.ndarray) -> float:
        d2 = self._distances(w)
        return float(d2[np.arange(self.data.n), config].sum())

    def optimize_bound(self, config: np.ndarray) -> np.ndarray:
        return optimize_bound(self.data, config, self.k,
                              respawn_dead=self.respawn_dead).ravel()

    def touching_config(self, w: np.ndarray) -> np.ndarray:
        return self._distances(w).argmin(axis=1).astype(np.int64)

    def select(self, kind: SelectorKind, w_prev: np.ndarray,
               config_prev: np.ndarray, v_prev: float, t: int,
               ctx: RunContext) -> np.ndarray:
        if isinstance(kind, RandomWalk):
            rng = ctx.stream(Purpose.SELECT, t)
            steps = kind.steps_per_example * self.data.n
            table = self._distances(w_prev)
            z0 = table.argmin(axis=1).astype(np.int64)
            z, _, _ = constrained_walk(table, z0, v_prev, steps, rng,
                                       tol=ctx.tol)
            return z
        if isinstance(kind, (StochasticSubset, Biased)):
            raise UnsupportedSelectorError(
                f"clustering does not implement selector {kind!r}")
        raise UnsupportedSelectorError(f"unknown selector {kind!r}")

    def strong_convexity(self, config: np.ndarray) -> float | None:
        """The bound Hessian is block-diagonal with 2|I_j| per used center;
        with a dead cluster the bound is flat in that block."""
        counts = np.bincount(config, minlength=self.k)
        if np.any(counts == 0):
            return None
        return 2.0

"""Latent structural SVM as a bound-optimization problem.

The training objective is the regularized average of per-example terms
    max_{y,z} (w . phi(x_i, y, z) + loss(y, y_i)) - max_z w . phi(x_i, y_i, z).
Freezing each example's latent value z_i linearizes the subtracted term and
yields a convex piecewise-quadratic upper bound; the concave-convex
procedure (CCCP) is the greedy instance that re-imputes z_i to the argmax
under the previous model every iteration.

Bound minimization is a QP (the n-slack formulation) solved with cvxopt;
the dual multipliers certify optimality and provide a near-zero element of
the bound's subdifferential at the returned minimizer.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from cvxopt import matrix, solvers

from .engine import (Biased, GmmProblem, RandomWalk, RunContext, SelectorKind,
                     SolverError, StochasticSubset, UnsupportedSelectorError)
from .rng import Purpose
from .walks import constrained_walk


@dataclass(frozen=True)
class StructuredExample:
    """One training example: opaque context x, label y, and the dense
    feature table phi of shape (label_count, latent_count, dim)."""
    x: object
    y: int
    phi: np.ndarray

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        if phi.ndim != 3:
            raise ValueError("phi must have shape (labels, latents, dim)")
        if not np.all(np.isfinite(phi)):
            raise ValueError("phi has non-finite entries")
        object.__setattr__(self, "phi", phi)

    @property
    def latent_count(self) -> int:
        return self.phi.shape[1]


class LssvmProblem:
    """Training set plus loss table and regularization strength.

    Feature tables are stacked into PHI with shape (n, Y, Zmax, d); examples
    with fewer latent values than Zmax are padded and masked.
    """

    def __init__(self, examples: list[StructuredExample], lam: float,
                 delta: np.ndarray):
        if lam <= 0:
            raise ValueError("lam must be > 0")
        delta = np.asarray(delta, dtype=float)
        if delta.ndim != 2 or delta.shape[0] != delta.shape[1]:
            raise ValueError("delta must be square")
        if np.any(delta < 0) or np.any(np.diag(delta) != 0):
            raise ValueError("delta must be nonnegative with zero diagonal")
        if delta.shape[0] < 2:
            raise ValueError("need at least two labels")
        n = len(examples)
        if n < 1:
            raise ValueError("need at least one example")
        ycount = delta.shape[0]
        d = examples[0].phi.shape[2]
        zmax = max(ex.latent_count for ex in examples)
        self.PHI = np.zeros((n, ycount, zmax, d))
        self.z_sizes = np.empty(n, dtype=np.int64)
        self.y = np.empty(n, dtype=np.int64)
        for i, ex in enumerate(examples):
            if ex.phi.shape[0] != ycount or ex.phi.shape[2] != d:
                raise ValueError(f"example {i} feature table shape mismatch")
            if not 0 <= ex.y < ycount:
                raise ValueError(f"example {i} label out of range")
            zi = ex.latent_count
            self.PHI[i, :, :zi, :] = ex.phi
            self.z_sizes[i] = zi
            self.y[i] = ex.y
        self.examples = examples
        self.lam = float(lam)
        self.delta = delta
        self.n = n
        self.label_count = ycount
        self.zmax = zmax
        self.d = d
        # mask of padded latent slots, used to exclude them from maxima
        self.invalid = np.zeros((n, zmax), dtype=bool)
        for i in range(n):
            self.invalid[i, self.z_sizes[i]:] = True

    def scores(self, w: np.ndarray) -> np.ndarray:
        """(n, Y, Zmax) table of w . phi; padded slots are -inf."""
        s = self.PHI @ np.asarray(w, dtype=float)
        if self.invalid.any():
            s[self.invalid[:, None, :].repeat(self.label_count, axis=1)] = -np.inf
        return s

    def own_scores(self, w: np.ndarray) -> np.ndarray:
        """(n, Zmax) scores of the true-label block per latent value."""
        return self.scores(w)[np.arange(self.n), self.y]

    def _augmented_max(self, s: np.ndarray) -> np.ndarray:
        aug = s + self.delta[:, self.y].T[:, :, None]
        return aug.reshape(self.n, -1).max(axis=1)


def objective(problem: LssvmProblem, w: np.ndarray) -> float:
    """(lam/2)||w||^2 + mean_i [loss-augmented max - best own-label score].
    The bracketed term is nonnegative: the augmented max dominates the
    subtracted term at (y_i, argmax_z)."""
    w = np.asarray(w, dtype=float)
    s = problem.scores(w)
    own = s[np.arange(problem.n), problem.y].max(axis=1)
    hinge = problem._augmented_max(s) - own
    return float(problem.lam / 2.0 * w @ w + hinge.mean())


def bound_value(problem: LssvmProblem, w: np.ndarray, z: np.ndarray) -> float:
    """Objective with the subtracted max replaced by the frozen latent z."""
    w = np.asarray(w, dtype=float)
    s = problem.scores(w)
    own = s[np.arange(problem.n), problem.y, z]
    hinge = problem._augmented_max(s) - own
    return float(problem.lam / 2.0 * w @ w + hinge.mean())


def touching_assignment(problem: LssvmProblem, w: np.ndarray) -> np.ndarray:
    """Per-example argmax of the true-label score over latent values; this
    is exactly the CCCP imputation. Ties go to the lowest latent index."""
    return problem.own_scores(w).argmax(axis=1).astype(np.int64)


def hinge_terms(problem: LssvmProblem, w: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Per-example loss term with the latent fixed (the bound's data term)."""
    s = problem.scores(w)
    own = s[np.arange(problem.n), problem.y, z]
    return problem._augmented_max(s) - own


def predict(problem: LssvmProblem, w: np.ndarray, phi: np.ndarray) -> tuple[int, int]:
    """Exhaustive argmax of w . phi over (label, latent); lowest-index ties."""
    s = np.asarray(phi, dtype=float) @ np.asarray(w, dtype=float)
    flat = int(s.argmax())
    return flat // s.shape[1], flat % s.shape[1]


def training_error(problem: LssvmProblem, w: np.ndarray) -> float:
    s = problem.scores(w)
    masked = np.where(np.isneginf(s), -np.inf, s)
    pred = masked.reshape(problem.n, -1).argmax(axis=1) // problem.zmax
    return float(np.mean(pred != problem.y))


# --------------------------------------------------------------------------
# bound minimization (n-slack QP via cvxopt)

@dataclass(frozen=True)
class SolverConfig:
    """Inner QP settings. tau_qp is the certified optimality gap target,
    relative to max(1, |bound value|); tau_grad bounds the norm of the
    constructed subgradient at the minimizer."""
    tau_qp: float = 1e-6
    tau_grad: float = 1e-5
    maxiters: int = 200
    abstol: float = 1e-10
    reltol: float = 1e-10
    feastol: float = 1e-9


@dataclass(frozen=True)
class SolveInfo:
    gap: float
    subgrad_norm: float
    bound: float


def optimize_bound(problem: LssvmProblem, z: np.ndarray,
                   solver: SolverConfig = SolverConfig()) -> tuple[np.ndarray, SolveInfo]:
    """Minimize the frozen-latent bound.

    Variables (w, xi); constraints xi_i >= w.(phi(i,y,zz) - phi(i,y_i,z_i))
    + loss(y, y_i) over all (i, y, zz). The bound is lam-strongly convex in
    w, so the minimizer is unique. The cvxopt duality gap certifies
    tau_qp-optimality; the constraint multipliers give a convex combination
    of active rows whose residual is a subgradient of the bound at w*,
    reported as `subgrad_norm`.
    """
    n, Y, Z, d = problem.n, problem.label_count, problem.zmax, problem.d
    base = problem.PHI[np.arange(n), problem.y, z]
    A = problem.PHI.reshape(n, Y * Z, d) - base[:, None, :]
    C = np.repeat(problem.delta[:, problem.y].T, Z, axis=1).reshape(n, Y * Z)
    # padded latent slots must never constrain: push them far below
    if problem.invalid.any():
        pad = np.tile(problem.invalid[:, None, :], (1, Y, 1)).reshape(n, Y * Z)
        C = C.copy()
        C[pad] = -1e12
    m = n * Y * Z
    G = np.zeros((m, d + n))
    G[:, :d] = A.reshape(m, d)
    G[np.arange(m), d + np.arange(m) // (Y * Z)] = -1.0
    h = -C.reshape(m)
    P = np.zeros((d + n, d + n))
    P[:d, :d] = problem.lam * np.eye(d)
    q = np.zeros(d + n)
    q[d:] = 1.0 / n

    opts = {"show_progress": False, "maxiters": solver.maxiters,
            "abstol": solver.abstol, "reltol": solver.reltol,
            "feastol": solver.feastol}
    sol = solvers.qp(matrix(P), matrix(q), matrix(G), matrix(h), options=opts)
    w = np.array(sol["x"]).ravel()[:d]
    b_val = bound_value(problem, w, z)
    gap = float(sol["gap"])
    tau = solver.tau_qp * max(1.0, abs(b_val))
    if sol["status"] != "optimal" and gap > tau:
        raise SolverError(
            f"bound QP did not reach tolerance: status={sol['status']}, "
            f"gap={gap:.3e} > {tau:.3e}")

    zdual = np.asarray(sol["z"]).ravel()
    g = problem.lam * w.copy()
    scores = A @ w + C
    for i in range(n):
        zi = zdual[i * Y * Z:(i + 1) * Y * Z].clip(min=0.0)
        tot = zi.sum()
        if tot <= 1e-14 / n:
            beta = np.zeros(Y * Z)
            beta[int(np.argmax(scores[i]))] = 1.0
        else:
            beta = zi / tot
        g += (A[i].T @ beta) / n
    return w, SolveInfo(gap=gap, subgrad_norm=float(np.linalg.norm(g)), bound=b_val)


# --------------------------------------------------------------------------
# selectors

def _repair_to_validity(problem: LssvmProblem, w_prev: np.ndarray,
                        proposal: np.ndarray, v_prev: float,
                        tol: float) -> tuple[np.ndarray, list[np.ndarray]]:
    """Walk a proposal back toward the touching assignment until valid.

    Examples are restored to their touching value in order of largest
    per-example bound decrease; the touching assignment itself is always
    valid, so this terminates. Returns the repaired assignment and the
    sequence of intermediate candidates (for bias audits).
    """
    own = problem.own_scores(w_prev)
    z_touch = own.argmax(axis=1).astype(np.int64)
    zc = proposal.copy()
    considered = [zc.copy()]
    bv = bound_value(problem, w_prev, zc)
    if bv <= v_prev + tol:
        return zc, considered
    idx = np.arange(problem.n)
    dec = (own[idx, z_touch] - own[idx, zc]) / problem.n
    for i in np.argsort(-dec, kind="stable"):
        if bv <= v_prev + tol:
            break
        if zc[i] == z_touch[i]:
            continue
        bv -= dec[i]
        zc[i] = z_touch[i]
        considered.append(zc.copy())
    return zc, considered


def subset_size(n: int, t: int) -> int:
    """Ramp schedule for the stochastic subset selector: full re-imputation
    from iteration 10 on."""
    return min(n, int(np.ceil(n * t / 10.0)))


def select_stochastic_subset(problem: LssvmProblem, w_prev: np.ndarray,
                             z_prev: np.ndarray, v_prev: float, t: int,
                             rng: np.random.Generator,
                             tol: float = 0.0) -> np.ndarray:
    """Re-impute a uniformly sampled subset of examples to the touching
    value, keep the rest at the previous assignment, and repair to
    validity if the kept ones violate the threshold."""
    size = subset_size(problem.n, t)
    chosen = rng.choice(problem.n, size=size, replace=False) if size else np.empty(0, dtype=int)
    z_touch = touching_assignment(problem, w_prev)
    proposal = z_prev.copy()
    proposal[chosen] = z_touch[chosen]
    repaired, _ = _repair_to_validity(problem, w_prev, proposal, v_prev, tol)
    return repaired


def random_walk_select(problem: LssvmProblem, w_prev: np.ndarray, v_prev: float,
                       walk_steps: int, rng: np.random.Generator,
                       tol: float = 0.0) -> np.ndarray:
    """Single-coordinate walk over assignments, started at the touching
    configuration. Changing z_i only moves the subtracted linear term, so
    the per-example cost table is -own_score/n plus a constant."""
    own = problem.own_scores(w_prev)
    table = -own / problem.n
    table = np.where(np.isneginf(table), np.inf, table)  # padded slots never chosen
    z0 = own.argmax(axis=1).astype(np.int64)
    const = bound_value(problem, w_prev, z0) - float(table[np.arange(problem.n), z0].sum())
    z, _, _ = constrained_walk(table, z0, v_prev - const, walk_steps, rng,
                               tol=tol, sizes=problem.z_sizes)
    return z


def fold_assignment(n: int, folds: int, rng: np.random.Generator) -> np.ndarray:
    """Round-robin fold ids after one seeded shuffle; fixed per run."""
    perm = rng.permutation(n)
    out = np.empty(n, dtype=np.int64)
    out[perm] = np.arange(n) % folds
    return out


def train_fold_models(problem: LssvmProblem, z_prev: np.ndarray,
                      fold_of: np.ndarray, folds: int,
                      solver: SolverConfig) -> list[np.ndarray]:
    """One model per fold, trained on the complementary examples with their
    latents frozen at the previous assignment."""
    models = []
    for k in range(folds):
        keep = np.flatnonzero(fold_of != k)
        sub = LssvmProblem([problem.examples[i] for i in keep], problem.lam,
                           problem.delta)
        w_k, _ = optimize_bound(sub, z_prev[keep], solver)
        models.append(w_k)
    return models


def example_loss(problem: LssvmProblem, w: np.ndarray, i: int) -> np.ndarray:
    """Per-latent loss of example i under model w: the example's hinge term
    with the latent fixed to each candidate value."""
    s = problem.PHI[i] @ np.asarray(w, dtype=float)
    s = np.where(problem.invalid[i][None, :], -np.inf, s)
    aug = float((s + problem.delta[:, problem.y[i]][:, None]).max())
    return aug - s[problem.y[i]]


def multifold_bias(problem: LssvmProblem, fold_models: list[np.ndarray],
                   fold_of: np.ndarray, z: np.ndarray) -> float:
    """Bias value of an assignment: minus the sum over examples of the
    held-out-model loss at the assigned latent. Each example is scored by
    the model of the fold that excludes it."""
    total = 0.0
    for i in range(problem.n):
        total += float(example_loss(problem, fold_models[fold_of[i]], i)[z[i]])
    return -total


def multifold_bias_select(problem: LssvmProblem, w_prev: np.ndarray,
                          z_prev: np.ndarray, v_prev: float, folds: int,
                          solver: SolverConfig, rng_folds: np.random.Generator,
                          tol: float = 0.0, audit: bool = False):
    """Deterministic selector that mimics multi-fold weakly-supervised
    training: each example's latent is proposed as the loss minimizer under
    the model trained without its fold, then the proposal is repaired to
    validity. Loss ties break toward the touching (greedy) choice, else to
    the lowest latent index.

    The proposal maximizes the fold-model bias among per-example choices,
    and each repair step only lowers the bias, so the returned assignment
    maximizes the bias among the candidates considered.
    """
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if problem.n < folds:
        raise ValueError("need at least as many examples as folds")
    fold_of = fold_assignment(problem.n, folds, rng_folds)
    models = train_fold_models(problem, z_prev, fold_of, folds, solver)
    z_touch = touching_assignment(problem, w_prev)
    proposal = np.empty(problem.n, dtype=np.int64)
    for i in range(problem.n):
        losses = example_loss(problem, models[fold_of[i]], i)
        best = losses.min()
        ties = np.flatnonzero(losses <= best)
        proposal[i] = z_touch[i] if z_touch[i] in ties else int(ties[0])
    repaired, considered = _repair_to_validity(problem, w_prev, proposal,
                                               v_prev, tol)
    if audit:
        return repaired, considered, models, fold_of
    return repaired


# --------------------------------------------------------------------------
# engine adapter & serialization

class LatentSvmProblem(GmmProblem):
    def __init__(self, problem: LssvmProblem,
                 solver: SolverConfig = SolverConfig()):
        self.p = problem
        self.solver = solver
        self.last_solve: SolveInfo | None = None

    @property
    def dim(self) -> int:
        return self.p.d

    def objective(self, w: np.ndarray) -> float:
        return objective(self.p, w)

    def bound_value(self, w: np.ndarray, config: np.ndarray) -> float:
        return bound_value(self.p, w, config)

    def optimize_bound(self, config: np.ndarray) -> np.ndarray:
        w, info = optimize_bound(self.p, config, self.solver)
        self.last_solve = info
        return w

    def touching_config(self, w: np.ndarray) -> np.ndarray:
        return touching_assignment(self.p, w)

    def select(self, kind: SelectorKind, w_prev: np.ndarray,
               config_prev: np.ndarray, v_prev: float, t: int,
               ctx: RunContext) -> np.ndarray:
        if isinstance(kind, RandomWalk):
            rng = ctx.stream(Purpose.SELECT, t)
            steps = kind.steps_per_example * self.p.n
            return random_walk_select(self.p, w_prev, v_prev, steps, rng,
                                      tol=ctx.tol)
        if isinstance(kind, StochasticSubset):
            rng = ctx.stream(Purpose.SELECT, t)
            return select_stochastic_subset(self.p, w_prev, config_prev,
                                            v_prev, t, rng, tol=ctx.tol)
        if isinstance(kind, Biased):
            if kind.bias_id != "multifold":
                raise UnsupportedSelectorError(
                    f"unknown bias {kind.bias_id!r} for latent-svm")
            folds = int(kind.params.get("folds", 10))
            return multifold_bias_select(self.p, w_prev, config_prev, v_prev,
                                         folds, self.solver,
                                         ctx.stream(Purpose.FOLDS),
                                         tol=ctx.tol)
        raise UnsupportedSelectorError(f"unknown selector {kind!r}")

    def strong_convexity(self, config: np.ndarray) -> float | None:
        return self.p.lam


def save_weights(path, w: np.ndarray, problem: LssvmProblem) -> None:
    """Flat JSON dump with shape metadata for audits."""
    payload = {"d": problem.d, "label_count": problem.label_count,
               "lambda": problem.lam,
               "w": [repr(float(v)) for v in np.asarray(w, dtype=float)]}
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True)


def load_weights(path) -> tuple[np.ndarray, dict]:
    with open(path) as fh:
        payload = json.load(fh)
    w = np.array([float(v) for v in payload.pop("w")])
    return w, payload

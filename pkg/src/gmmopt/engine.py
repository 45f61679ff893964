"""Generic bound-optimization engine with relaxed bound selection.

Minimizes a lower-bounded objective F by repeatedly selecting an upper
bound from a problem-defined family and minimizing it. Classic
majorization-minimization requires each bound to touch F at the previous
iterate; here a bound is admissible as soon as its value at the previous
iterate is below a validity threshold v that concedes only an
eta-fraction of the current bound-objective gap, which leaves room for
stochastic or biased bound choices while keeping the convergence
guarantees (non-increasing bound values, F(w_t) <= F(w_0), summable gaps).

The engine is problem-agnostic: a problem exposes objective evaluation,
bound evaluation for a latent configuration, the bound minimizer, the
touching configuration, and its non-greedy selectors.
"""
from __future__ import annotations

import abc
import csv
import time
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .rng import Purpose, stream


class GmmError(Exception):
    """Base class for engine errors."""


class ConfigError(GmmError):
    """Invalid run or experiment configuration."""


class SelectorError(GmmError):
    """A selector produced an invalid bound; this signals a bug, since the
    touching configuration is always admissible."""


class SolverError(GmmError):
    """An inner bound minimization failed to reach its tolerance."""


class UnsupportedSelectorError(ConfigError):
    """The problem does not implement the requested selector."""


# --------------------------------------------------------------------------
# selector kinds

@dataclass(frozen=True)
class Greedy:
    """Touching bound: recovers the classic MM step (bias g(b, w) = -b(w))."""


@dataclass(frozen=True)
class RandomWalk:
    """Uniform-ish sample from the valid set via a single-coordinate walk."""
    steps_per_example: int = 10

    def __post_init__(self):
        if self.steps_per_example < 1:
            raise ConfigError("steps_per_example must be >= 1")


@dataclass(frozen=True)
class StochasticSubset:
    """Re-impute a growing random subset of latents, keep the rest."""


@dataclass(frozen=True)
class Biased:
    """Deterministic selector maximizing a problem-defined bias over the
    valid set. `bias_id` names the bias; `params` are bias-specific."""
    bias_id: str
    params: Mapping = field(default_factory=dict)


SelectorKind = Greedy | RandomWalk | StochasticSubset | Biased


# --------------------------------------------------------------------------
# run context & problem interface

@dataclass(frozen=True)
class RunContext:
    """Per-run constants handed to problem selectors."""
    seed: int
    tol: float
    epsilon: float

    def stream(self, purpose: Purpose, index: int = 0) -> np.random.Generator:
        return stream(self.seed, purpose, index)


class GmmProblem(abc.ABC):
    """Contract the engine consumes.

    Latent configurations are integer arrays (one latent per example);
    solutions are flat float vectors.
    """

    @property
    @abc.abstractmethod
    def dim(self) -> int: ...

    @abc.abstractmethod
    def objective(self, w: np.ndarray) -> float: ...

    @abc.abstractmethod
    def bound_value(self, w: np.ndarray, config: np.ndarray) -> float: ...

    @abc.abstractmethod
    def optimize_bound(self, config: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def touching_config(self, w: np.ndarray) -> np.ndarray: ...

    @abc.abstractmethod
    def select(self, kind: SelectorKind, w_prev: np.ndarray,
               config_prev: np.ndarray, v_prev: float, t: int,
               ctx: RunContext) -> np.ndarray:
        """Return a latent configuration with bound_value(w_prev, .) <= v_prev
        (+ tolerance). Called for every non-greedy selector kind."""

    def strong_convexity(self, config: np.ndarray) -> float | None:
        """Strong-convexity modulus of the bound indexed by `config`, or None
        when the bound is not strongly convex (skips that diagnostic)."""
        return None


# --------------------------------------------------------------------------
# configuration & state

@dataclass(frozen=True)
class GmmConfig:
    """Engine knobs. epsilon=None resolves to 1e-6 * max(1, |F(w0)|)."""
    eta: float
    epsilon: float | None = None
    max_iters: int = 500
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.eta <= 1.0):
            raise ConfigError(f"eta must be in (0, 1], got {self.eta}")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if self.max_iters < 1:
            raise ConfigError(f"max_iters must be >= 1, got {self.max_iters}")


@dataclass(frozen=True)
class GmmState:
    """Engine state after iteration t."""
    t: int
    w: np.ndarray
    v: float
    d: float
    bound_value: float
    objective_value: float
    eta: float


@dataclass(frozen=True)
class IterationRecord:
    t: int
    objective: float
    bound: float
    v: float
    d: float
    latent_changes: int
    wall_ms: float


TRACE_COLUMNS = ("t", "objective", "bound", "v", "d", "latent_changes", "wall_ms")

STATUS_CONVERGED = "converged-by-gap"
STATUS_MAX_ITERS = "max-iters"


@dataclass
class RunTrace:
    """Full history of one run. records[0] is the initial state (t = 0,
    bound := F(w0) = the first bound's value at w0)."""
    records: list[IterationRecord]
    solutions: list[np.ndarray]
    final_config: np.ndarray
    status: str
    eta: float
    epsilon: float
    seed: int
    tol: float
    strong_convexity: float | None

    @property
    def iterations(self) -> int:
        return self.records[-1].t

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.records])

    @property
    def bounds(self) -> np.ndarray:
        return np.array([r.bound for r in self.records])

    @property
    def gaps(self) -> np.ndarray:
        return np.array([r.d for r in self.records])

    @property
    def thresholds(self) -> np.ndarray:
        return np.array([r.v for r in self.records])

    @property
    def final_objective(self) -> float:
        return self.records[-1].objective

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRACE_COLUMNS)
            for r in self.records:
                writer.writerow([r.t, repr(r.objective), repr(r.bound),
                                 repr(r.v), repr(r.d), r.latent_changes,
                                 f"{r.wall_ms:.3f}"])


def numeric_tolerance(f0: float) -> float:
    """Relative comparison slack used by all inequality checks."""
    return 1e-9 * max(1.0, abs(f0))


def default_epsilon(f0: float) -> float:
    return 1e-6 * max(1.0, abs(f0))


# --------------------------------------------------------------------------
# core operations

def validity_threshold(state: GmmState) -> float:
    """Threshold below which the next bound must sit at the current iterate:
    v_t = b_t(w_t) - eta * d_t."""
    return state.bound_value - state.eta * state.d


def is_valid(problem: GmmProblem, candidate: np.ndarray, w_prev: np.ndarray,
             v_prev: float, tol: float | None = None) -> bool:
    """Membership test for the valid set: b_candidate(w_prev) <= v_prev."""
    if tol is None:
        tol = numeric_tolerance(v_prev)
    return problem.bound_value(w_prev, candidate) <= v_prev + tol


def run(problem: GmmProblem, w0: np.ndarray, cfg: GmmConfig,
        selector: SelectorKind, z0: np.ndarray | None = None) -> RunTrace:
    """Execute the bound-optimization loop.

    Per iteration: select an admissible bound (its value at the previous
    iterate at most v), minimize it, measure the gap d between the bound and
    the objective at the minimizer, tighten v by eta * d, and stop once
    d < epsilon (or at max_iters). Deterministic given (problem, w0, cfg,
    selector, z0).

    `z0` is the latent configuration that produced w0, used only as the
    reference for latent-change counting and as the subset selector's
    initial kept assignment; it defaults to the touching configuration.
    """
    w = np.asarray(w0, dtype=float)
    if w.shape != (problem.dim,):
        raise ConfigError(f"w0 has shape {w.shape}, expected ({problem.dim},)")
    if not np.all(np.isfinite(w)):
        raise ConfigError("w0 has non-finite entries")

    f0 = problem.objective(w)
    if not np.isfinite(f0):
        raise GmmError("objective at w0 is not finite; malformed problem data")
    tol = numeric_tolerance(f0)
    epsilon = cfg.epsilon if cfg.epsilon is not None else default_epsilon(f0)
    ctx = RunContext(seed=cfg.seed, tol=tol, epsilon=epsilon)

    z_prev = problem.touching_config(w) if z0 is None else np.asarray(z0).copy()
    v = f0
    records = [IterationRecord(0, f0, f0, v, 0.0, 0, 0.0)]
    solutions = [w.copy()]
    status = STATUS_MAX_ITERS
    strong_m: float | None = np.inf

    t_start = time.perf_counter()
    for t in range(1, cfg.max_iters + 1):
        if isinstance(selector, Greedy):
            z_t = problem.touching_config(w)
        else:
            z_t = problem.select(selector, w, z_prev, v, t, ctx)

        b_at_prev = problem.bound_value(w, z_t)
        if b_at_prev > v + tol:
            raise SelectorError(
                f"selector returned an invalid bound at t={t}: "
                f"b(w_prev)={b_at_prev!r} > v={v!r}")

        w_new = problem.optimize_bound(z_t)
        b_val = problem.bound_value(w_new, z_t)
        if b_val > b_at_prev + tol:
            raise SolverError(
                f"bound minimizer increased the bound at t={t}: "
                f"{b_val!r} > {b_at_prev!r}")
        f_val = problem.objective(w_new)
        d = b_val - f_val
        if d < -tol:
            raise GmmError(f"negative gap at t={t}: d={d!r}; bound family is "
                           "not an upper bound on the objective")
        d = max(d, 0.0)
        v = b_val - cfg.eta * d

        m = problem.strong_convexity(z_t)
        strong_m = None if (m is None or strong_m is None) else min(strong_m, m)

        changes = int(np.sum(z_t != z_prev))
        wall_ms = (time.perf_counter() - t_start) * 1e3
        records.append(IterationRecord(t, f_val, b_val, v, d, changes, wall_ms))
        solutions.append(w_new.copy())
        w, z_prev = w_new, z_t

        if d < epsilon:
            status = STATUS_CONVERGED
            break

    if strong_m is not None and not np.isfinite(strong_m):
        strong_m = None
    return RunTrace(records=records, solutions=solutions, final_config=z_prev,
                    status=status, eta=cfg.eta, epsilon=epsilon, seed=cfg.seed,
                    tol=tol, strong_convexity=strong_m)


# --------------------------------------------------------------------------
# diagnostics

@dataclass(frozen=True)
class DiagnosticReport:
    """Numerical checks of the convergence-proof inequalities on a trace.

    bounds_monotone      : b_t(w_t) non-increasing over t
    safety               : F(w_t) <= F(w_0) for all t
    gap_sum_vs_lower     : eta * sum d_t <= F(w_0) - F_lb
    gap_sum_prefix       : eta * sum_{t<=T} d_t <= F(w_0) - v_T per prefix
    solution_convergence : sum ||w_t - w_{t-1}||^2 <= (2/m)(F(w_0) - F_lb);
                           None when no modulus is available (check skipped)
    """
    bounds_monotone: bool
    safety: bool
    gap_sum_vs_lower: bool
    gap_sum_prefix: bool
    solution_convergence: bool | None
    skipped_reason: str | None = None

    @property
    def ok(self) -> bool:
        checks = [self.bounds_monotone, self.safety, self.gap_sum_vs_lower,
                  self.gap_sum_prefix]
        if self.solution_convergence is not None:
            checks.append(self.solution_convergence)
        return all(checks)


def check_theorem_diagnostics(trace: RunTrace, f_lower_bound: float) -> DiagnosticReport:
    """Verify that a completed run satisfies the convergence inequalities.

    Any failure indicates an engine bug (or a bound family that is not a
    true upper bound). The prefix form uses the threshold v_T rather than
    the bound value b_T(w_T): the telescoped sum bounds eta * sum_{t<=T} d_t
    by F(w_0) - v_T, which is weaker by exactly eta * d_T than the b_T form
    (the b_T form is falsifiable on 4-point k-means instances).
    """
    tol = trace.tol
    f0 = trace.records[0].objective
    bounds = trace.bounds
    gaps = trace.gaps[1:]
    thresholds = trace.thresholds

    monotone = bool(np.all(np.diff(bounds) <= tol))
    safety = bool(np.all(trace.objectives <= f0 + tol))
    total = trace.eta * gaps.sum()
    vs_lower = bool(total <= f0 - f_lower_bound + tol)
    prefix_sums = trace.eta * np.cumsum(gaps)
    prefix = bool(np.all(prefix_sums <= f0 - thresholds[1:] + tol))

    m = trace.strong_convexity
    if m is None or m <= 0:
        sol_conv = None
        reason = "no strong-convexity modulus for this run (e.g. a dead cluster)"
    else:
        moves = [float(np.sum((a - b) ** 2))
                 for a, b in zip(trace.solutions[1:], trace.solutions[:-1])]
        sol_conv = bool(sum(moves) <= (2.0 / m) * (f0 - f_lower_bound) + tol)
        reason = None
    return DiagnosticReport(bounds_monotone=monotone, safety=safety,
                            gap_sum_vs_lower=vs_lower, gap_sum_prefix=prefix,
                            solution_convergence=sol_conv,
                            skipped_reason=reason)


def stationarity_gap(problem: GmmProblem, w: np.ndarray) -> float:
    """Norm of the solution change after one greedy (touching) step.

    At a converged run this is the assertable surrogate for a vanishing
    gradient: the objective is only piecewise differentiable, but a
    fixed point of the greedy step is a stationary point.
    """
    z = problem.touching_config(np.asarray(w, dtype=float))
    w_next = problem.optimize_bound(z)
    return float(np.linalg.norm(w_next - w))

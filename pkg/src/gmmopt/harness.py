"""Experiment runner: seeded multi-trial executions and aggregation.

A trial is one optimization run; trial i always derives its initialization
from stream (base_seed + i, INIT), so different methods compared under the
same base seed receive bit-identical initial states. Aggregation is a
deterministic fold over trial indices regardless of worker scheduling, and
stats.json contains no wall-clock data, so reruns are byte-identical.
"""
from __future__ import annotations

import dataclasses
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import clustering, data, engine, latentsvm
from .engine import (Biased, ConfigError, GmmConfig, Greedy, RandomWalk,
                     RunTrace, SelectorKind, StochasticSubset)
from .rng import Purpose, stream

SELECTOR_NAMES = ("greedy", "walk", "subset", "multifold")
CLUSTER_INITS = tuple(clustering.INITIALIZERS)
LSSVM_INITS = ("random", "adversarial", "true", "zero")


def make_selector(name: str, walk_steps: int = 10, folds: int = 10) -> SelectorKind:
    if name == "greedy":
        return Greedy()
    if name == "walk":
        return RandomWalk(steps_per_example=walk_steps)
    if name == "subset":
        return StochasticSubset()
    if name == "multifold":
        return Biased("multifold", {"folds": folds})
    raise ConfigError(f"unknown selector {name!r}; expected one of {SELECTOR_NAMES}")


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str                    # "clustering" | "latent-svm"
    dataset: str                    # gmm20 | gmm200 | file:<path> | latent-shift
    selector: str = "greedy"
    eta: float = 1.0
    epsilon: float | None = None
    max_iters: int = 500
    trials: int = 1
    seed: int = 0
    out: str | None = None
    init: str = "random-partition"
    k: int = 20
    walk_steps: int = 10
    folds: int = 10
    respawn_dead: bool = False
    workers: int = 0                # 0 -> os.cpu_count()
    data_seed: int = 0
    drop_cols: tuple[int, ...] = ()
    # latent-shift task parameters
    task_n: int = 33
    task_labels: int = 3
    task_shift: float = 1.0
    task_noise: float = 0.1
    task_lambda: float = 0.4

    def __post_init__(self):
        if self.problem not in ("clustering", "latent-svm"):
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not (0.0 < self.eta <= 1.0):
            raise ConfigError(f"eta must be in (0, 1], got {self.eta}")
        if self.selector not in SELECTOR_NAMES:
            raise ConfigError(f"unknown selector {self.selector!r}")
        if self.problem == "clustering" and self.init not in CLUSTER_INITS:
            raise ConfigError(f"unknown clustering init {self.init!r}")
        if self.problem == "latent-svm" and self.init not in LSSVM_INITS:
            raise ConfigError(f"unknown latent-svm init {self.init!r}")

    @property
    def method_label(self) -> str:
        return f"{self.selector}/eta={self.eta:g}"


@dataclass(frozen=True)
class TrialResult:
    trial: int
    seed: int
    final_objective: float
    iterations: int
    status: str
    latent_changed_vs_init: int


@dataclass
class TrialStats:
    """Mean/std (population)/best of final objectives over trials, plus
    iteration-count statistics and the per-trial rows."""
    method: str
    init: str
    dataset_fingerprint: str
    results: list[TrialResult]

    @property
    def finals(self) -> np.ndarray:
        return np.array([r.final_objective for r in self.results])

    @property
    def iters(self) -> np.ndarray:
        return np.array([r.iterations for r in self.results], dtype=float)

    @property
    def mean(self) -> float:
        return float(self.finals.mean())

    @property
    def std(self) -> float:
        return float(self.finals.std())  # population (ddof=0)

    @property
    def best(self) -> float:
        return float(self.finals.min())

    @property
    def mean_iters(self) -> float:
        return float(self.iters.mean())

    @property
    def std_iters(self) -> float:
        return float(self.iters.std())

    def to_json_dict(self, cfg: ExperimentConfig) -> dict:
        return {
            "config": dataclasses.asdict(cfg),
            "dataset_fingerprint": self.dataset_fingerprint,
            "method": self.method,
            "init": self.init,
            "trials": len(self.results),
            "objective": {"mean": self.mean, "std": self.std, "best": self.best},
            "iterations": {"mean": self.mean_iters, "std": self.std_iters},
            "per_trial": [dataclasses.asdict(r) for r in self.results],
        }


# --------------------------------------------------------------------------
# dataset / problem materialization

def make_clustering_dataset(cfg: ExperimentConfig) -> clustering.Dataset:
    name = cfg.dataset
    if name == "gmm20":
        spec = dataclasses.replace(data.GMM20, seed=cfg.data_seed)
        return data.gen_mixture(spec)[0]
    if name == "gmm200":
        spec = dataclasses.replace(data.GMM200, seed=cfg.data_seed)
        return data.gen_mixture(spec)[0]
    if name.startswith("file:"):
        return data.load_csv(name[5:], drop_cols=cfg.drop_cols)
    raise ConfigError(f"unknown clustering dataset {cfg.dataset!r}")


def make_lssvm_task(cfg: ExperimentConfig):
    if cfg.dataset != "latent-shift":
        raise ConfigError(f"unknown latent-svm dataset {cfg.dataset!r}")
    return data.gen_latent_shift_task(cfg.task_n, cfg.task_labels,
                                      cfg.task_shift, cfg.task_noise,
                                      cfg.data_seed, lam=cfg.task_lambda)


def _lssvm_fingerprint(problem: latentsvm.LssvmProblem) -> str:
    import hashlib
    return hashlib.sha256(np.ascontiguousarray(problem.PHI).tobytes()).hexdigest()


def lssvm_initial_assignment(cfg: ExperimentConfig, problem, truth,
                             trial_seed: int) -> np.ndarray:
    rng = stream(trial_seed, Purpose.INIT)
    if cfg.init == "random":
        return np.array([rng.integers(problem.z_sizes[i])
                         for i in range(problem.n)], dtype=np.int64)
    if cfg.init == "adversarial":
        return data.adversarial_shifts(truth)
    if cfg.init == "true":
        return truth.true_shift.copy()
    if cfg.init == "zero":
        return np.zeros(problem.n, dtype=np.int64)
    raise ConfigError(f"unknown init {cfg.init!r}")


# --------------------------------------------------------------------------
# single trial

def run_clustering_trial(cfg: ExperimentConfig, dataset: clustering.Dataset,
                         trial: int) -> tuple[TrialResult, RunTrace]:
    trial_seed = cfg.seed + trial
    problem = clustering.ClusteringProblem(dataset, cfg.k,
                                           respawn_dead=cfg.respawn_dead)
    init_fn = clustering.INITIALIZERS[cfg.init]
    centers, z0 = init_fn(dataset, cfg.k, stream(trial_seed, Purpose.INIT))
    gcfg = GmmConfig(eta=cfg.eta, epsilon=cfg.epsilon,
                     max_iters=cfg.max_iters, seed=trial_seed)
    selector = make_selector(cfg.selector, cfg.walk_steps, cfg.folds)
    trace = engine.run(problem, centers.ravel(), gcfg, selector, z0=z0)
    changed = int(np.sum(trace.final_config != z0))
    return TrialResult(trial, trial_seed, trace.final_objective,
                       trace.iterations, trace.status, changed), trace


def run_lssvm_trial(cfg: ExperimentConfig, problem, truth,
                    trial: int) -> tuple[TrialResult, RunTrace]:
    trial_seed = cfg.seed + trial
    adapter = latentsvm.LatentSvmProblem(problem)
    z0 = lssvm_initial_assignment(cfg, problem, truth, trial_seed)
    w0, _ = latentsvm.optimize_bound(problem, z0, adapter.solver)
    gcfg = GmmConfig(eta=cfg.eta, epsilon=cfg.epsilon,
                     max_iters=cfg.max_iters, seed=trial_seed)
    selector = make_selector(cfg.selector, cfg.walk_steps, cfg.folds)
    trace = engine.run(adapter, w0, gcfg, selector, z0=z0)
    changed = int(np.sum(trace.final_config != z0))
    return TrialResult(trial, trial_seed, trace.final_objective,
                       trace.iterations, trace.status, changed), trace


def _trial_worker(args):
    cfg, trial = args
    if cfg.problem == "clustering":
        dataset = make_clustering_dataset(cfg)
        result, trace = run_clustering_trial(cfg, dataset, trial)
    else:
        problem, truth = make_lssvm_task(cfg)
        result, trace = run_lssvm_trial(cfg, problem, truth, trial)
    return result, trace


# --------------------------------------------------------------------------
# experiments

def run_experiment(cfg: ExperimentConfig,
                   keep_traces: bool = False) -> TrialStats | tuple[TrialStats, list[RunTrace]]:
    """Run cfg.trials seeded trials and aggregate.

    Emits stats.json, results.csv and one trace CSV per trial when cfg.out
    is set. Trials run in a process pool when workers != 1; aggregation
    order is by trial index, independent of completion order.
    """
    if cfg.problem == "clustering":
        dataset = make_clustering_dataset(cfg)
        fingerprint = dataset.fingerprint()
        jobs = [(cfg, t) for t in range(cfg.trials)]
        runner = lambda job: run_clustering_trial(job[0], dataset, job[1])
    else:
        problem, truth = make_lssvm_task(cfg)
        fingerprint = _lssvm_fingerprint(problem)
        jobs = [(cfg, t) for t in range(cfg.trials)]
        runner = lambda job: run_lssvm_trial(job[0], problem, truth, job[1])

    workers = cfg.workers if cfg.workers > 0 else (os.cpu_count() or 1)
    workers = min(workers, cfg.trials)
    if workers <= 1:
        outputs = [runner(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outputs = list(pool.map(_trial_worker, jobs))

    results = [out[0] for out in outputs]
    traces = [out[1] for out in outputs]
    stats = TrialStats(method=cfg.method_label, init=cfg.init,
                       dataset_fingerprint=fingerprint, results=results)
    if cfg.out:
        out_dir = Path(cfg.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        stats_path = out_dir / "stats.json"
        if stats_path.exists():
            previous = json.loads(stats_path.read_text())
            if previous.get("dataset_fingerprint") not in (None, fingerprint):
                raise ConfigError(
                    f"{stats_path} was produced from a different dataset "
                    f"(fingerprint mismatch); refusing to overwrite")
        write_stats_json(stats_path, stats, cfg)
        write_results_csv(out_dir / "results.csv", stats)
        for t, trace in enumerate(traces):
            trace.to_csv(out_dir / f"trace_trial_{t:03d}.csv")
    if keep_traces:
        return stats, traces
    return stats


def sweep_eta(cfg: ExperimentConfig, eta_list: list[float]) -> dict[float, TrialStats]:
    """run_experiment per eta with shared per-trial initializations (the
    same base seed yields identical init streams). Writes a long-format CSV
    (eta, trial, final_objective, iters) when cfg.out is set."""
    if not eta_list:
        raise ConfigError("eta_list must be nonempty")
    out = {}
    for eta in eta_list:
        sub = dataclasses.replace(cfg, eta=float(eta), out=None)
        out[float(eta)] = run_experiment(sub)
    if cfg.out:
        out_dir = Path(cfg.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        with open(out_dir / "sweep.csv", "w") as fh:
            fh.write("eta,trial,final_objective,iters\n")
            for eta in sorted(out):
                for r in out[eta].results:
                    fh.write(f"{eta:g},{r.trial},{r.final_objective!r},{r.iterations}\n")
    return out


class ComparisonError(ValueError):
    pass


COMPARE_COLUMNS = ("method", "init", "mean", "std", "best", "mean_iters", "std_iters")


def compare_report(stats_list: list[TrialStats]) -> str:
    """Aligned-text table, one row per (method, init). Refuses to compare
    stats computed on different datasets."""
    if not stats_list:
        raise ComparisonError("nothing to compare")
    prints = {s.dataset_fingerprint for s in stats_list}
    if len(prints) != 1:
        raise ComparisonError("dataset fingerprints differ; refusing to compare")
    rows = [COMPARE_COLUMNS]
    for s in stats_list:
        rows.append((s.method, s.init, f"{s.mean:.6g}", f"{s.std:.6g}",
                     f"{s.best:.6g}", f"{s.mean_iters:.2f}", f"{s.std_iters:.2f}"))
    widths = [max(len(str(r[c])) for r in rows) for c in range(len(rows[0]))]
    lines = ["  ".join(str(cell).ljust(w) for cell, w in zip(row, widths)).rstrip()
             for row in rows]
    return "\n".join(lines)


def compare_csv(path, stats_list: list[TrialStats]) -> None:
    prints = {s.dataset_fingerprint for s in stats_list}
    if len(prints) != 1:
        raise ComparisonError("dataset fingerprints differ; refusing to compare")
    with open(path, "w") as fh:
        fh.write(",".join(COMPARE_COLUMNS) + "\n")
        for s in stats_list:
            fh.write(f"{s.method},{s.init},{s.mean!r},{s.std!r},{s.best!r},"
                     f"{s.mean_iters!r},{s.std_iters!r}\n")


def write_stats_json(path, stats: TrialStats, cfg: ExperimentConfig) -> None:
    with open(path, "w") as fh:
        json.dump(stats.to_json_dict(cfg), fh, sort_keys=True, indent=1)
        fh.write("\n")


def write_results_csv(path, stats: TrialStats) -> None:
    with open(path, "w") as fh:
        fh.write("trial,seed,final_objective,iterations,status,latent_changed_vs_init\n")
        for r in stats.results:
            fh.write(f"{r.trial},{r.seed},{r.final_objective!r},{r.iterations},"
                     f"{r.status},{r.latent_changed_vs_init}\n")


# --------------------------------------------------------------------------
# flat key = value config files

_CONFIG_KEYS = {
    "problem": str, "dataset": str, "selector": str, "eta": float,
    "epsilon": lambda s: None if s == "" else float(s), "max-iters": int,
    "trials": int, "seed": int, "out": str, "init": str, "k": int,
    "walk-steps": int, "folds": int, "respawn-dead": lambda s: s.lower() in ("1", "true", "yes"),
    "workers": int, "data-seed": int,
    "task-n": int, "task-labels": int, "task-shift": float,
    "task-noise": float, "task-lambda": float,
}

_KEY_TO_FIELD = {k: k.replace("-", "_") for k in _CONFIG_KEYS}


def parse_config_file(path) -> dict:
    """Flat `key = value` lines; `#` starts a comment. Unknown keys are
    config errors (reported by name)."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in _CONFIG_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                out[_KEY_TO_FIELD[key]] = _CONFIG_KEYS[key](value)
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: "
                                  f"{value!r}") from None
    return out


def build_config(file_values: dict, overrides: dict) -> ExperimentConfig:
    """File values first, CLI flag overrides win."""
    merged = dict(file_values)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    if "problem" not in merged:
        raise ConfigError("missing required key 'problem'")
    if "dataset" not in merged:
        raise ConfigError("missing required key 'dataset'")
    try:
        return ExperimentConfig(**merged)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None

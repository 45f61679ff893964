"""Seeded synthetic datasets and file loaders.

Clustering data comes from a 2-D isotropic Gaussian mixture with
rejection-sampled means on a square (a "GMM-200"-style family). The latent
structural SVM tasks are planted-prototype problems: each example is a 2-D
base point plus a per-shift patch vector; a discrete latent shift selects
which patch (and which translated coordinates) the feature map exposes.
All generation is Philox-keyed and bit-reproducible per seed.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import Dataset
from .latentsvm import LssvmProblem, StructuredExample
from .rng import Purpose, stream

_REJECTION_CAP = 1_000_000


@dataclass(frozen=True)
class MixtureSpec:
    components: int
    sigma: float
    square_side: float
    min_separation: float  # pairwise mean distance floor, in sigmas
    samples_per_component: int
    seed: int

    def __post_init__(self):
        if self.components < 1 or self.samples_per_component < 1:
            raise ValueError("components and samples_per_component must be >= 1")
        if self.sigma <= 0 or self.square_side <= 0:
            raise ValueError("sigma and square_side must be > 0")
        if self.min_separation * self.sigma >= self.square_side:
            raise ValueError("separation floor exceeds the square side; "
                             "mean placement is infeasible")


GMM200 = MixtureSpec(components=200, sigma=1.0, square_side=70.0,
                     min_separation=2.5, samples_per_component=50, seed=0)
GMM20 = MixtureSpec(components=20, sigma=1.0, square_side=25.0,
                    min_separation=2.5, samples_per_component=50, seed=0)


def gen_mixture(spec: MixtureSpec) -> tuple[Dataset, np.ndarray]:
    """Sample the mixture; returns the points and their component labels.

    Means are drawn uniformly on the square and rejected until every pair
    is at least min_separation * sigma apart (capped attempts).
    """
    rng = stream(spec.seed, Purpose.DATAGEN)
    floor = spec.min_separation * spec.sigma
    means = np.empty((spec.components, 2))
    placed = 0
    attempts = 0
    while placed < spec.components:
        attempts += 1
        if attempts > _REJECTION_CAP:
            raise RuntimeError(
                f"could not place {spec.components} means at separation "
                f"{floor} within {_REJECTION_CAP} attempts")
        cand = rng.uniform(0.0, spec.square_side, size=2)
        if placed and np.min(np.linalg.norm(means[:placed] - cand, axis=1)) < floor:
            continue
        means[placed] = cand
        placed += 1
    n = spec.components * spec.samples_per_component
    labels = np.repeat(np.arange(spec.components), spec.samples_per_component)
    points = means[labels] + spec.sigma * rng.standard_normal((n, 2))
    return Dataset(points), labels


# --------------------------------------------------------------------------
# latent-shift task

SHIFT_VALUES = np.array([-1.0, 0.0, 1.0])
COORD_SCALE = 0.02
_JUNK_SCALE = 1.6
_TWIN_RHO = 0.7
_ANCHOR_FRACTION = 0.7
_SIGNAL_GAIN = 16.0
_SIGNAL_NOISE = 6.0
_DISTRACTOR_SCALE = 0.45


@dataclass(frozen=True)
class LatentShiftTruth:
    """Ground truth of a generated task, for audits and adversarial inits."""
    points: np.ndarray        # observed 2-D base points
    labels: np.ndarray
    true_shift: np.ndarray    # indices into SHIFT_VALUES
    planted_w: np.ndarray | None  # margin-realizing weights (noise == 0 only)
    distractors: np.ndarray   # indices of the no-signal examples


def gen_latent_shift_task(n: int, label_count: int, shift_magnitude: float,
                          noise: float, seed: int,
                          lam: float = 0.4) -> tuple[LssvmProblem, LatentShiftTruth]:
    """Planted-prototype classification with a latent horizontal shift.

    Each example carries one patch vector per candidate shift, drawn from a
    per-class orthonormal frame (classes occupy disjoint slices of the
    patch space). At the true shift the patch is the shared class prototype
    plus a private component; at the two wrong shifts it is a private
    "background" direction and a correlated shrunk twin of it, which a
    model fits exactly and therefore sticks to under greedy re-imputation.
    A few anchor examples per class leak the prototype into their
    background patch, and with noise > 0 a few distractor examples carry no
    signal at all. Together these control how hard a bad initial
    imputation is to escape: greedy re-imputation is a fixed point of it,
    while selectors that score held-out examples see the shared prototype
    and walk out.

    With noise == 0 the construction is exact: every patch is orthogonal
    to the prototypes except the pure-prototype signals, and the returned
    planted weights achieve zero loss on every example, so the objective
    equals the regularizer term alone.
    """
    if label_count < 2:
        raise ValueError("label_count must be >= 2")
    if n < 2 * label_count:
        raise ValueError("need n >= 2 * label_count")
    rng = stream(seed, Purpose.TASK)
    Y = label_count
    nc = int(np.ceil(n / Y))
    q_sub = 2 * nc + 3
    q = Y * q_sub
    y = (np.arange(n) % Y).astype(np.int64)
    zstar = rng.integers(0, 3, size=n).astype(np.int64)

    # per-class orthonormal frame: prototype + one background and one spare
    # direction per member, all inside the class's slice of patch space
    protos = np.zeros((Y, q))
    junk_dir = np.zeros((n, q))
    spare_dir = np.zeros((n, q))
    for yy in range(Y):
        frame = np.linalg.qr(rng.standard_normal((q_sub, q_sub)))[0]
        sl = slice(yy * q_sub, (yy + 1) * q_sub)
        protos[yy, sl] = frame[0]
        for j, i in enumerate(np.flatnonzero(y == yy)):
            junk_dir[i, sl] = frame[1 + j]
            spare_dir[i, sl] = frame[1 + nc + j]

    bands = (np.arange(Y) - (Y - 1) / 2.0)
    base = np.stack([bands[y] + noise * rng.standard_normal(n),
                     noise * rng.standard_normal(n)], axis=1)
    x_obs = base.copy()
    x_obs[:, 0] -= SHIFT_VALUES[zstar] * shift_magnitude

    patch_norm = _JUNK_SCALE * np.sqrt(q)
    junk_scale = np.full(n, 1.0)
    per_class = max(1, int(np.ceil((n // Y) / 3)))
    anchors = np.concatenate([np.flatnonzero(y == yy)[:per_class]
                              for yy in range(Y)])
    if noise > 0:
        pool = np.setdiff1d(np.arange(n), anchors)
        count = min(min(3, max(1, n // 8)), len(pool))
        distractors = np.sort(rng.choice(pool, size=count, replace=False))
        junk_scale[distractors] = _DISTRACTOR_SCALE
    else:
        distractors = np.empty(0, dtype=np.int64)

    patches = np.zeros((n, 3, q))
    for i in range(n):
        z_heavy = (zstar[i] + 1) % 3
        z_light = 3 - zstar[i] - z_heavy
        main = junk_scale[i] * patch_norm * junk_dir[i]
        if i in anchors:
            main = (np.sqrt(1 - _ANCHOR_FRACTION) * main +
                    np.sqrt(_ANCHOR_FRACTION) * patch_norm * protos[y[i]])
        patches[i, z_heavy] = main
        patches[i, z_light] = (_TWIN_RHO * main +
                               np.sqrt(1 - _TWIN_RHO ** 2) * junk_scale[i]
                               * patch_norm * spare_dir[i])
        if i in distractors:
            patches[i, zstar[i]] = 0.9 * junk_scale[i] * patch_norm * spare_dir[i]
        elif noise > 0:
            patches[i, zstar[i]] = (_SIGNAL_GAIN * protos[y[i]] +
                                    _SIGNAL_NOISE * spare_dir[i])
        else:
            patches[i, zstar[i]] = _SIGNAL_GAIN * protos[y[i]]
        if shift_magnitude == 0:
            # all three views coincide, so every slot exposes the true patch
            patches[i, z_heavy] = patches[i, zstar[i]]
            patches[i, z_light] = patches[i, zstar[i]]

    d = Y * (3 + q)
    examples = []
    for i in range(n):
        phi = np.zeros((Y, 3, d))
        for yy in range(Y):
            off = yy * (3 + q)
            for zz in range(3):
                phi[yy, zz, off] = COORD_SCALE * (x_obs[i, 0] + SHIFT_VALUES[zz] * shift_magnitude)
                phi[yy, zz, off + 1] = COORD_SCALE * x_obs[i, 1]
                phi[yy, zz, off + 2] = COORD_SCALE
                phi[yy, zz, off + 3:off + 3 + q] = patches[i, zz]
        examples.append(StructuredExample(x=(x_obs[i, 0], x_obs[i, 1]), y=int(y[i]), phi=phi))

    delta = 1.0 - np.eye(Y)
    problem = LssvmProblem(examples, lam, delta)

    planted = None
    if noise == 0:
        planted = np.zeros(d)
        for yy in range(Y):
            off = yy * (3 + q)
            planted[off + 3:off + 3 + q] = (2.0 / _SIGNAL_GAIN) * protos[yy]
    truth = LatentShiftTruth(points=x_obs, labels=y, true_shift=zstar,
                             planted_w=planted, distractors=distractors)
    return problem, truth


def adversarial_shifts(truth: LatentShiftTruth) -> np.ndarray:
    """All-wrong initial latent assignment (cyclic offset of the truth,
    landing on each example's heavyweight junk patch)."""
    return ((truth.true_shift + 1) % 3).astype(np.int64)


# --------------------------------------------------------------------------
# CSV I/O

def load_csv(path, drop_cols: tuple[int, ...] = ()) -> Dataset:
    """Load a numeric table; delimiter (comma vs whitespace) is sniffed from
    the first data row. Non-numeric cells are reported with their position."""
    rows = []
    ncols = None
    delim = None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if delim is None:
                delim = "," if "," in line else None  # None -> whitespace split
            parts = [p for p in (line.split(delim) if delim else line.split()) if p != ""]
            if ncols is None:
                ncols = len(parts)
            elif len(parts) != ncols:
                raise ValueError(f"{path}: row {lineno} has {len(parts)} columns, "
                                 f"expected {ncols}")
            vals = []
            for col, p in enumerate(parts):
                if col in drop_cols:
                    continue
                try:
                    vals.append(float(p))
                except ValueError:
                    raise ValueError(f"{path}: non-numeric cell at row {lineno}, "
                                     f"column {col}: {p!r}") from None
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no rows")
    return Dataset(np.array(rows))


def dump_points_csv(path, points: np.ndarray, labels=None) -> None:
    pts = np.asarray(points, dtype=float)
    with open(path, "w") as fh:
        for i in range(pts.shape[0]):
            cells = [repr(float(v)) for v in pts[i]]
            if labels is not None:
                cells.append(str(int(labels[i])))
            fh.write(",".join(cells) + "\n")


def dump_latent_shift_csv(path, truth: LatentShiftTruth) -> None:
    """Audit columns: x1, x2, y, true_shift. Patch vectors are regenerable
    from the seed and are not serialized."""
    with open(path, "w") as fh:
        fh.write("x1,x2,y,true_shift\n")
        for i in range(len(truth.labels)):
            fh.write(f"{float(truth.points[i, 0])!r},{float(truth.points[i, 1])!r},"
                     f"{int(truth.labels[i])},{int(SHIFT_VALUES[truth.true_shift[i]])}\n")

import numpy as np
import pytest

from gmmopt import clustering as cl
from gmmopt import data


@pytest.fixture
def toy4():
    """4 points / 2 clusters; small enough to enumerate all 16 assignments."""
    pts = np.array([[0.0, 0.0], [1.2, 0.0], [1.4, 0.0], [2.0, 0.0]])
    return cl.Dataset(pts)


@pytest.fixture
def blobs():
    rng = np.random.default_rng(np.random.Philox(key=[42, 0]))
    centers = np.array([[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]])
    pts = np.concatenate([c + rng.standard_normal((15, 2)) for c in centers])
    return cl.Dataset(pts)


@pytest.fixture
def shift_toy():
    """8-example binary latent-shift task (enumeration-sized)."""
    return data.gen_latent_shift_task(8, 2, 1.0, 0.1, seed=11)


def brute_force_kmeans(points: np.ndarray, k: int) -> float:
    """Global optimum of the clustering objective by enumerating all k^n
    assignments (vectorized via per-cluster sufficient statistics)."""
    n = points.shape[0]
    sq = (points ** 2).sum()
    best = np.inf
    configs = np.stack(np.meshgrid(*[np.arange(k)] * n, indexing="ij"),
                       axis=-1).reshape(-1, n)
    for start in range(0, configs.shape[0], 4096):
        batch = configs[start:start + 4096]
        onehot = np.eye(k)[batch]                      # (b, n, k)
        counts = onehot.sum(axis=1)                    # (b, k)
        sums = np.einsum("bnk,nd->bkd", onehot, points)
        with np.errstate(divide="ignore", invalid="ignore"):
            contrib = np.where(counts > 0,
                               (sums ** 2).sum(axis=2) / counts, 0.0)
        wss = sq - contrib.sum(axis=1)
        best = min(best, float(wss.min()))
    return best

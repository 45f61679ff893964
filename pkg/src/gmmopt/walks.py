"""Budget-constrained random walk over per-example latent choices.

Both problem instantiations reduce their bound families to a table cost:
the bound value at the frozen solution is `offset + sum_i table[i, z_i]`.
A walk step proposes one coordinate change (uniform example, uniform
alternative value) and accepts iff the incrementally-updated total stays
under the validity budget. The incremental total is resynced from the table
every 1024 accepted steps to keep float drift below 1e-9 relative.
"""
from __future__ import annotations

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a hard dep, kept for safety
    njit = None

_RESYNC_EVERY = 1024


def _walk_py(table, sizes, z, total, budget, tol, prop_i, prop_u):
    accepts = 0
    n = table.shape[0]
    for step in range(prop_i.shape[0]):
        i = prop_i[step]
        m = sizes[i] - 1
        if m <= 0:
            continue
        r = int(prop_u[step] * m)
        if r == m:
            r = m - 1
        alt = r + (1 if r >= z[i] else 0)
        delta = table[i, alt] - table[i, z[i]]
        if total + delta <= budget + tol:
            z[i] = alt
            total += delta
            accepts += 1
            if accepts % _RESYNC_EVERY == 0:
                total = 0.0
                for j in range(n):
                    total += table[j, z[j]]
    return z, total, accepts


if njit is not None:
    _walk_jit = njit(cache=True)(_walk_py)
else:  # pragma: no cover
    _walk_jit = _walk_py


def constrained_walk(table, z0, budget, steps, rng, tol=0.0, sizes=None):
    """Run `steps` single-coordinate proposals starting from `z0`.

    table   : (n, max_choices) float64 per-example costs
    z0      : length-n int64 starting assignment (must satisfy the budget)
    budget  : acceptance threshold on sum_i table[i, z_i]
    rng     : numpy Generator supplying the proposal stream
    sizes   : per-example number of valid choices (defaults to full width)

    Returns (z, total, accepts); `total` is the incrementally-maintained
    cost of `z`, exposed so audits can compare it to a fresh recomputation.
    """
    table = np.ascontiguousarray(table, dtype=np.float64)
    n, width = table.shape
    if sizes is None:
        sizes = np.full(n, width, dtype=np.int64)
    else:
        sizes = np.asarray(sizes, dtype=np.int64)
    z = np.asarray(z0, dtype=np.int64).copy()
    total = float(table[np.arange(n), z].sum())
    if steps <= 0:
        return z, total, 0
    prop_i = rng.integers(0, n, size=steps, dtype=np.int64)
    prop_u = rng.random(steps)
    z, total, accepts = _walk_jit(table, sizes, z, total, float(budget),
                                  float(tol), prop_i, prop_u)
    return z, float(total), int(accepts)

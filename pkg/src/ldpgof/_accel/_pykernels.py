"""Pure numpy implementation of the fused column accumulators."""
from __future__ import annotations

import numpy as np

LOG_TINY = -36.7368005696771  # log(2**-53)
CHUNK_ELEMENTS = 1 << 18


def laplace_from_uniform(u: np.ndarray) -> np.ndarray:
    """Inverse-CDF map of ``U[0, 1)`` variates to Laplace(1)."""
    t = 2.0 * np.minimum(u, 1.0 - u)
    with np.errstate(divide="ignore"):
        w = np.copysign(np.log(t), u - 0.5)
    w[t == 0.0] = LOG_TINY
    return w


def laplace_fill(rng: np.random.Generator, size: int) -> np.ndarray:
    return laplace_from_uniform(rng.random(size))


def column_moments(rng, bins, hits, sigma, center, squares):
    n = bins.shape[0]
    N = center.shape[0]
    sums = np.zeros(N)
    sq = np.zeros(N)
    rows = max(1, CHUNK_ELEMENTS // max(N, 1))
    for start in range(0, n, rows):
        stop = min(n, start + rows)
        z = sigma * laplace_from_uniform(rng.random((stop - start, N))) - center
        b = bins[start:stop]
        hit = np.flatnonzero(b >= 0)
        z[hit, b[hit]] += hits[start:stop][hit]
        sums += z.sum(axis=0)
        if squares:
            sq += np.einsum("ij,ij->j", z, z)
    return sums, sq

"""Hot kernels with a compiled core and a numpy fallback.

The compiled extension is used when it imports and ``LDPGOF_PURE`` is unset;
both backends consume the uniform stream in the same row-major order, so they
agree up to floating-point summation order.
"""
from __future__ import annotations

import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if not os.environ.get("LDPGOF_PURE"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _pykernels


def get_backend(name: str | None = None):
    """Kernel module by name (``"cython"`` or ``"python"``), default the active one."""
    if name is None:
        return _impl
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


def column_moments(rng: np.random.Generator, bins, hits, sigma: float, center,
                   squares: bool = True, backend: str | None = None):
    """Per-column sum and sum of squares of ``hit_ij + sigma W_ij - center_j``.

    Args:
        rng: Generator whose bit stream supplies the Laplace noise.
        bins: Bin index of each row (``-1`` when the row hits no column).
        hits: Value added at ``(i, bins[i])``.
        sigma: Laplace scale.
        center: Per-column offset subtracted from every entry.
        squares: Skip the sum of squares when False.
    """
    bins = np.ascontiguousarray(bins, dtype=np.int64)
    hits = np.ascontiguousarray(hits, dtype=np.float64)
    center = np.ascontiguousarray(center, dtype=np.float64)
    return get_backend(backend).column_moments(rng, bins, hits, float(sigma), center, bool(squares))


def laplace_fill(rng: np.random.Generator, size: int, backend: str | None = None) -> np.ndarray:
    return get_backend(backend).laplace_fill(rng, int(size))

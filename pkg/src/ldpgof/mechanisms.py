"""Privatisation channels and privacy audits.

Channels:

* kernel scores plus Laplace noise (non-interactive, first half of the sample);
* randomized-response tail bits (both protocols);
* bin indicators plus Laplace noise, then clipped +-c*tau bits whose law depends
  on the first round only through the published bin estimates (interactive).
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ._accel import column_moments
from ._accel._pykernels import laplace_from_uniform
from .kernels import SmoothingKernel, scaled_eval
from .tuning import BulkPartition


class PrivacyViolation(AssertionError):
    """An audited likelihood ratio exceeded ``e^alpha``."""


class BatchKind(str, Enum):
    KERNEL_MATRIX = "KERNEL_MATRIX"
    TAIL_BITS = "TAIL_BITS"
    BIN_MATRIX = "BIN_MATRIX"
    CLIPPED_BITS = "CLIPPED_BITS"


@dataclass(frozen=True)
class PrivacyParams:
    alpha: float
    c_alpha: float
    z_alpha: float
    tau: float | None = None

    @classmethod
    def from_alpha(cls, alpha: float, n: int | None = None) -> "PrivacyParams":
        """Channel constants for level ``alpha``.

        The channels are private for any ``alpha > 0``; the restriction to
        ``(0, 1]`` needed by the tests' variance bounds lives in ``TestConfig``.
        """
        if not (alpha > 0.0 and math.isfinite(alpha)):
            raise ValueError("alpha must be a positive finite number")
        ea = math.exp(alpha)
        c = (ea + 1.0) / math.expm1(alpha)
        z = math.exp(2 * alpha) - math.exp(-2 * alpha)
        tau = None if n is None else 1.0 / math.sqrt(n * alpha * alpha)
        return cls(alpha, c, z, tau)


@dataclass(frozen=True)
class PrivatizedBatch:
    kind: BatchKind
    values: np.ndarray = field(repr=False)
    params: PrivacyParams
    partition: BulkPartition | None = None

    @property
    def n(self) -> int:
        return int(self.values.shape[0])


# ---------------------------------------------------------------------------
# channels


def kernel_rows(X, part: BulkPartition, k: SmoothingKernel):
    """Bin index and kernel value ``psi_h(x_j - X_i)`` of each observation.

    Each observation touches at most its own bin, so no row has more than one
    nonzero kernel entry.
    """
    X = np.asarray(X, dtype=float)
    bins = part.bin_index(X)
    inside = bins >= 0
    vals = np.zeros(X.shape)
    vals[inside] = scaled_eval(k, part.h, part.centers[bins[inside]] - X[inside])
    return bins, vals


def laplace_matrix(rng, shape) -> np.ndarray:
    """Laplace(1) draws by inverse CDF of the generator's uniform stream."""
    return laplace_from_uniform(np.asarray(rng.random(shape), dtype=float))


def ni_kernel_privatize(X, part: BulkPartition, k: SmoothingKernel, p: PrivacyParams,
                        rng) -> PrivatizedBatch:
    """``Z_ij = psi_h(x_j - X_i) + (2 ||psi|| / (alpha h)) W_ij``."""
    X = np.asarray(X, dtype=float)
    bins, vals = kernel_rows(X, part, k)
    sigma = 2.0 * k.sup_norm / (p.alpha * part.h)
    Z = sigma * laplace_matrix(rng, (X.size, part.N))
    hit = np.flatnonzero(bins >= 0)
    Z[hit, bins[hit]] += vals[hit]
    return PrivatizedBatch(BatchKind.KERNEL_MATRIX, Z, p, part)


def rr_tail_privatize(X, B, p: PrivacyParams, rng) -> PrivatizedBatch:
    """``+-c_alpha`` with ``P(+c_alpha) = (1 + 1{X outside B} / c_alpha) / 2``."""
    X = np.asarray(X, dtype=float)
    outside = (X < B[0]) | (X > B[1])
    prob = 0.5 * (1.0 + outside / p.c_alpha)
    Z = np.where(rng.random(X.size) < prob, p.c_alpha, -p.c_alpha)
    return PrivatizedBatch(BatchKind.TAIL_BITS, Z, p)


def int_bin_privatize(X, part: BulkPartition, p: PrivacyParams, rng) -> PrivatizedBatch:
    """``Z_ij = 1{X_i in B_j} + (2/alpha) W_ij``."""
    X = np.asarray(X, dtype=float)
    bins = part.bin_index(X)
    Z = (2.0 / p.alpha) * laplace_matrix(rng, (X.size, part.N))
    hit = np.flatnonzero(bins >= 0)
    Z[hit, bins[hit]] += 1.0
    return PrivatizedBatch(BatchKind.BIN_MATRIX, Z, p, part)


def estimate_phat(batch: PrivatizedBatch) -> np.ndarray:
    if batch.kind is not BatchKind.BIN_MATRIX:
        raise ValueError("estimate_phat needs a BIN_MATRIX batch")
    return batch.values.mean(axis=0)


def clip(x, tau: float):
    """``max(-tau, min(x, tau))``."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    out = np.clip(np.asarray(x, dtype=float), -tau, tau)
    return float(out) if out.ndim == 0 else out


def second_round_bias(X, part: BulkPartition, phat, p0, p: PrivacyParams) -> np.ndarray:
    """Per-observation ``P(+c tau) - 1/2`` scaled by 2, i.e. ``clip_j / (c tau)``."""
    if p.tau is None:
        raise ValueError("privacy params need tau for the interactive protocol")
    phat = np.asarray(phat, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    if phat.shape != (part.N,) or p0.shape != (part.N,):
        raise ValueError("phat and p0 need one entry per bin")
    clipped = clip(phat - p0, p.tau)
    bins = part.bin_index(X)
    q = np.zeros(np.shape(X))
    inside = bins >= 0
    q[inside] = np.atleast_1d(clipped)[bins[inside]] / (p.c_alpha * p.tau)
    return q


def int_second_round(X, part: BulkPartition, phat, p0, p: PrivacyParams,
                     rng) -> PrivatizedBatch:
    """Bits ``+-c tau`` correlated with the clipped first-round discrepancy of the holder's bin."""
    X = np.asarray(X, dtype=float)
    q = second_round_bias(X, part, phat, p0, p)
    mag = p.c_alpha * p.tau
    Z = np.where(rng.random(X.size) < 0.5 * (1.0 + q), mag, -mag)
    return PrivatizedBatch(BatchKind.CLIPPED_BITS, Z, p, part)


# fused paths used by the Monte Carlo harness ---------------------------------


def ni_kernel_moments(X, part, k, p, rng, f0_centers, backend=None):
    """Column sums and sums of squares of ``Z_ij - f_0(x_j)`` without building ``Z``.

    Consumes the generator exactly like :func:`ni_kernel_privatize`.
    """
    bins, vals = kernel_rows(X, part, k)
    sigma = 2.0 * k.sup_norm / (p.alpha * part.h)
    return column_moments(rng, bins, vals, sigma, f0_centers, True, backend=backend)


def int_bin_phat(X, part, p, rng, backend=None):
    """Column means of the bin matrix without building it."""
    bins = part.bin_index(X)
    X = np.asarray(X)
    sums, _ = column_moments(rng, bins, np.ones(X.size), 2.0 / p.alpha, np.zeros(part.N),
                             False, backend=backend)
    return sums / X.size


# ---------------------------------------------------------------------------
# audits


def _check(ratio, alpha, what):
    if ratio > math.exp(alpha) + 1e-12:
        raise PrivacyViolation(f"{what}: likelihood ratio {ratio!r} exceeds e^alpha={math.exp(alpha)!r}")
    return ratio


def _rr_table(kind, p: PrivacyParams, n_bins: int, clip_grid: int) -> np.ndarray:
    # rows: input class (tail, bin_1..bin_N); columns: output (+, -)
    kind = BatchKind(kind)
    c = p.c_alpha
    if kind is BatchKind.TAIL_BITS:
        probs = [(0.5 * (1 + 1 / c), 0.5 * (1 - 1 / c))]
        probs += [(0.5, 0.5)] * n_bins
    elif kind is BatchKind.CLIPPED_BITS:
        tau = p.tau if p.tau is not None else 1.0
        s = np.linspace(-tau, tau, clip_grid)
        probs = [(0.5, 0.5)]
        probs += [(0.5 * (1 + v / (c * tau)), 0.5 * (1 - v / (c * tau))) for v in s]
    else:
        raise ValueError("audit_rr only handles finite-alphabet channels")
    return np.array(probs)


def audit_rr_outputs(kind, p: PrivacyParams, n_bins: int = 3,
                     clip_grid: int = 201) -> dict[str, float]:
    """Worst-case likelihood ratio of each output symbol of a two-point channel.

    Returns ``{"plus": r_plus, "minus": r_minus}``, each the largest ratio
    ``P(z | x) / P(z | x')`` over input pairs for that output. For tail bits
    ``plus = 2 e^alpha / (e^alpha + 1)`` and ``minus = (e^alpha + 1) / 2``.
    """
    P = _rr_table(kind, p, n_bins, clip_grid)
    return {name: float(P[:, j].max() / P[:, j].min()) for j, name in enumerate(("plus", "minus"))}


def audit_rr(kind, p: PrivacyParams, n_bins: int = 3, clip_grid: int = 201) -> float:
    """Exact worst-case likelihood ratio of a two-point output channel.

    Input classes are the tail and every bin. For clipped bits the clip value of
    each bin is public and adversarial, so it ranges over a grid on
    ``[-tau, tau]`` that includes both endpoints. The result is the max over
    both output symbols (see :func:`audit_rr_outputs`).
    """
    worst = max(audit_rr_outputs(kind, p, n_bins, clip_grid).values())
    return _check(worst, p.alpha, BatchKind(kind).value)


def audit_laplace(y1: float, y2: float, part: BulkPartition, k: SmoothingKernel | None,
                  p: PrivacyParams) -> float:
    """Worst-case output density ratio of the Laplace channels for inputs ``y1, y2``.

    With ``k=None`` the bin-indicator channel (scale ``2/alpha``) is audited.
    """
    if k is None:
        rows = []
        for y in (y1, y2):
            r = np.zeros(part.N)
            j = int(part.bin_index(y))
            if j >= 0:
                r[j] = 1.0
            rows.append(r)
        sigma = 2.0 / p.alpha
    else:
        rows = []
        for y in (y1, y2):
            bins, vals = kernel_rows(np.array([y]), part, k)
            r = np.zeros(part.N)
            if bins[0] >= 0:
                r[bins[0]] = vals[0]
            rows.append(r)
        sigma = 2.0 * k.sup_norm / (p.alpha * part.h)
    ratio = math.exp(float(np.abs(rows[0] - rows[1]).sum()) / sigma)
    return _check(ratio, p.alpha, "laplace")


def audit_laplace_grid(part: BulkPartition, k: SmoothingKernel | None, p: PrivacyParams,
                       points: int = 201) -> float:
    """Sup of :func:`audit_laplace` over pairs from a grid covering the bulk and beyond."""
    pad = part.length * 0.1 + part.h
    grid = np.linspace(part.lo - pad, part.hi + pad, points)
    grid = np.unique(np.concatenate([grid, part.centers, part.edges()]))
    if k is None:
        r = np.zeros((grid.size, part.N))
        b = part.bin_index(grid)
        r[b >= 0, b[b >= 0]] = 1.0
        sigma = 2.0 / p.alpha
    else:
        bins, vals = kernel_rows(grid, part, k)
        r = np.zeros((grid.size, part.N))
        r[bins >= 0, bins[bins >= 0]] = vals[bins >= 0]
        sigma = 2.0 * k.sup_norm / (p.alpha * part.h)
    worst = 0.0
    for i in range(grid.size):
        worst = max(worst, float(np.abs(r - r[i]).sum(axis=1).max()))
    return _check(math.exp(worst / sigma), p.alpha, "laplace grid")


# ---------------------------------------------------------------------------
# serialization


def write_batch_csv(batch: PrivatizedBatch, fh) -> None:
    """``i,j,value,kind`` rows; values written with ``repr`` so they round-trip exactly."""
    fh.write("i,j,value,kind\n")
    V = batch.values
    kind = batch.kind.value
    if V.ndim == 1:
        for i, v in enumerate(V.tolist()):
            fh.write(f"{i},0,{v!r},{kind}\n")
    else:
        for i, row in enumerate(V.tolist()):
            for j, v in enumerate(row):
                fh.write(f"{i},{j},{v!r},{kind}\n")


def read_batch_csv(fh, params: PrivacyParams, partition=None) -> PrivatizedBatch:
    header = fh.readline().strip()
    if header != "i,j,value,kind":
        raise ValueError(f"unexpected header {header!r}")
    rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    if not rows:
        raise ValueError("empty batch file")
    kind = BatchKind(rows[0][3])
    i = np.array([int(r[0]) for r in rows])
    j = np.array([int(r[1]) for r in rows])
    v = np.array([float(r[2]) for r in rows])
    if kind in (BatchKind.TAIL_BITS, BatchKind.CLIPPED_BITS):
        out = np.empty(i.max() + 1)
        out[i] = v
    else:
        out = np.empty((i.max() + 1, j.max() + 1))
        out[i, j] = v
    return PrivatizedBatch(kind, out, params, partition)


def write_batch_binary(batch: PrivatizedBatch, fh) -> None:
    """JSON header line, then columns of little-endian float64."""
    V = np.atleast_2d(batch.values.T).T if batch.values.ndim == 1 else batch.values
    head = {"kind": batch.kind.value, "rows": int(V.shape[0]), "cols": int(V.shape[1]),
            "dtype": "<f8", "order": "columnar"}
    fh.write((json.dumps(head, sort_keys=True) + "\n").encode())
    fh.write(np.asfortranarray(V, dtype="<f8").tobytes(order="F"))


def read_batch_binary(fh, params: PrivacyParams, partition=None) -> PrivatizedBatch:
    head = json.loads(fh.readline().decode())
    raw = fh.read()
    V = np.frombuffer(raw, dtype="<f8").reshape((head["rows"], head["cols"]), order="F").astype(float)
    kind = BatchKind(head["kind"])
    if kind in (BatchKind.TAIL_BITS, BatchKind.CLIPPED_BITS):
        V = V[:, 0].copy()
    return PrivatizedBatch(kind, V, params, partition)


def batch_to_csv_text(batch: PrivatizedBatch) -> str:
    buf = io.StringIO()
    write_batch_csv(batch, buf)
    return buf.getvalue()

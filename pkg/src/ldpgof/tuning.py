"""Bulk set, bandwidth and bin-partition selection."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from . import densities as dens


class Mechanism(str, Enum):
    NI = "ni"
    INTERACTIVE = "interactive"

    @classmethod
    def parse(cls, value) -> "Mechanism":
        if isinstance(value, Mechanism):
            return value
        v = str(value).strip().lower()
        if v in ("ni", "non-interactive", "noninteractive"):
            return cls.NI
        if v in ("int", "interactive"):
            return cls.INTERACTIVE
        raise ValueError(f"unknown mechanism {value!r}; use 'ni' or 'interactive'")


class Interval(NamedTuple):
    lo: float
    hi: float

    @property
    def length(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class BulkPartition:
    """``N`` bins ``[x_j - h, x_j + h]`` tiling ``[lo, hi]`` exactly.

    Points are assigned to bins half-open (``[left, right)``) except the last bin,
    which is closed, so every point of the bulk belongs to exactly one bin.
    """

    lo: float
    hi: float
    h: float
    N: int
    centers: np.ndarray = field(repr=False, compare=False)

    @property
    def B(self) -> Interval:
        return Interval(self.lo, self.hi)

    @property
    def length(self) -> float:
        return self.hi - self.lo

    def edges(self) -> np.ndarray:
        return self.lo + 2.0 * self.h * np.arange(self.N + 1)

    def bin_index(self, x):
        """Bin of each point (``-1`` outside the bulk)."""
        x = np.asarray(x, dtype=float)
        j = np.floor((x - self.lo) / (2.0 * self.h)).astype(np.int64)
        j = np.where(x == self.hi, self.N - 1, j)
        j = np.minimum(j, self.N - 1)
        return np.where((x >= self.lo) & (x <= self.hi), j, -1)

    def __eq__(self, other):
        if not isinstance(other, BulkPartition):
            return NotImplemented
        return (self.lo, self.hi, self.h, self.N) == (other.lo, other.hi, other.h, other.N) \
            and np.array_equal(self.centers, other.centers)

    def __hash__(self):
        return hash((self.lo, self.hi, self.h, self.N))


@dataclass(frozen=True)
class TestConfig:
    """Per-phase sample size, privacy/smoothness/risk levels and mechanism."""

    __test__ = False  # not a pytest class

    n: int
    alpha: float
    beta: float = 1.0
    L: float = 20.0
    gamma: float = 0.2
    mechanism: Mechanism = Mechanism.NI

    def __post_init__(self):
        object.__setattr__(self, "mechanism", Mechanism.parse(self.mechanism))
        if int(self.n) != self.n or self.n < 2:
            raise ValueError("n must be an integer >= 2")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]: the variance bounds of the "
                             "privatised statistics are only established there")
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]: only first-order smoothness is supported")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1): it is the total error budget of the test")
        if not self.L > 0:
            raise ValueError("L must be positive")

    @property
    def n_alpha2(self) -> float:
        return self.n * self.alpha ** 2

    def check_null(self, null: dens.NullDensity) -> float:
        L0 = null.L0(self.beta)
        if not self.L > L0:
            raise ValueError(f"L={self.L} must exceed the null's Hoelder constant L0={L0:.6g}")
        return L0


def bandwidth(config: TestConfig, B, c_h: float = 1.0, *, strict: bool = False) -> float:
    """Bandwidth of the order prescribed for each mechanism.

    ``NI``: ``c_h |B|^{-1/(4b+3)} (n a^2)^{-2/(4b+3)}``;
    interactive: ``c_h (|B| n a^2)^{-1/(2b+1)}``.

    With ``strict=True`` a bandwidth of at least ``|B|/2`` (fewer than one bin)
    raises ``ValueError``; otherwise the caller is expected to clamp.
    """
    length = float(B[1]) - float(B[0])
    m = config.n_alpha2
    if not (length > 0 and m > 0):
        raise ValueError("bandwidth needs |B| > 0 and n alpha^2 > 0")
    b = config.beta
    if config.mechanism is Mechanism.NI:
        h = c_h * length ** (-1.0 / (4 * b + 3)) * m ** (-2.0 / (4 * b + 3))
    else:
        h = c_h * (length * m) ** (-1.0 / (2 * b + 1))
    if strict and h >= length / 2:
        raise ValueError(f"n alpha^2 = {m:g} is too small: bandwidth {h:.4g} leaves fewer than one bin")
    return h


def partition(B, h_target: float) -> BulkPartition:
    """Exact tiling of ``B`` by ``N = max(1, round(|B| / (2 h_target)))`` bins."""
    lo, hi = float(B[0]), float(B[1])
    if not hi > lo:
        raise ValueError(f"cannot partition degenerate interval [{lo}, {hi}]")
    if not h_target > 0:
        raise ValueError("target bandwidth must be positive")
    N = max(1, int(math.floor((hi - lo) / (2.0 * h_target) + 0.5)))
    h = (hi - lo) / (2.0 * N)
    centers = lo + (2.0 * np.arange(1, N + 1) - 1.0) * h
    return BulkPartition(lo, hi, h, N, centers)


def _level_threshold(beta, m, mechanism):
    if mechanism is Mechanism.NI:
        return (3 * beta + 3) / (4 * beta + 3), -2 * beta / (4 * beta + 3)
    return (beta + 1) / (2 * beta + 1), -beta / (2 * beta + 1)


def solve_slowvary_edge(A: float, beta: float, m: float, mechanism: Mechanism,
                        rtol: float = 1e-6) -> float:
    """Largest ``a`` with ``log(2)^A / log(2+a)^A >= a^p m^q + m^{-1/2}``."""
    p, q = _level_threshold(beta, m, mechanism)
    l2 = math.log(2.0)

    def gap(a):
        return (l2 / math.log(2.0 + a)) ** A - (a ** p * m ** q + m ** -0.5)

    lo = 1.0 if gap(1.0) >= 0 else 0.0
    hi = max(m * m, 2.0)
    if gap(lo) < 0:
        raise ValueError(f"n alpha^2 = {m:g} too small for a nonempty bulk set")
    if gap(hi) >= 0:
        return hi
    return brentq(gap, lo, hi, rtol=rtol, xtol=1e-300)


def bulk_set(d: dens.NullDensity, config: TestConfig, geometry: str = "upper") -> Interval:
    """Closed-form bulk interval for a catalog density.

    ``geometry="lower"`` shrinks compact-support families (spiky, beta) away
    from their zeros as in the lower-bound constructions.
    """
    m = config.n_alpha2
    b = config.beta
    ni = config.mechanism is Mechanism.NI
    fam = d.family
    if fam == "uniform":
        return Interval(d.a, d.b)
    if fam == "spiky":
        top = 2.0 * d.peak
        if geometry == "lower":
            T = m ** (-2 * b / (4 * b + 3)) if ni else m ** (-b / (2 * b + 1))
            return Interval(T, top - T)
        return Interval(0.0, top)
    if fam == "beta":
        if geometry == "lower":
            e = 2 * b / (4 * b + 3) if ni else b / (2 * b + 1)
            left = m ** (-e / (d.a - 1)) if d.a > 1 else 0.0
            right = m ** (-e / (d.b - 1)) if d.b > 1 else 0.0
            return Interval(left, 1.0 - right)
        return Interval(0.0, 1.0)
    if m <= 1.0:
        raise ValueError("n alpha^2 must exceed 1 for tail-decaying nulls")
    if fam == "normal":
        T = math.sqrt((4 * b / (4 * b + 3) if ni else 2 * b / (2 * b + 1)) * math.log(m))
        return Interval(-T, T)
    if fam == "exponential":
        T = (2 * b / (4 * b + 3) if ni else b / (2 * b + 1)) * math.log(m) / d.lam
        return Interval(0.0, T)
    if fam == "pareto":
        k = d.k
        e = 2 * b / (k * (4 * b + 3) + 3 * b + 3) if ni else b / (k * (2 * b + 1) + b + 1)
        T = m ** e
        if not T > d.a:
            raise ValueError(f"n alpha^2 = {m:g} too small: bulk edge {T:.4g} <= a = {d.a:g}")
        return Interval(d.a, T)
    if fam == "cauchy":
        T = m ** (2 * b / (7 * b + 6)) if ni else m ** (b / (3 * b + 2))
        return Interval(-T, T)
    if fam == "slowvary":
        return Interval(0.0, solve_slowvary_edge(d.A, b, m, config.mechanism))
    raise ValueError(f"no bulk-set rule for family {fam!r}")


def resolve_bulk(d: dens.NullDensity, config: TestConfig, bulk: str = "auto") -> Interval:
    """Interpret the ``--bulk auto|full|interval:a,b`` option."""
    if bulk == "auto":
        return bulk_set(d, config)
    if bulk == "full":
        lo, hi = d.support
        if math.isinf(lo) or math.isinf(hi):
            raise ValueError("--bulk full needs a compactly supported null")
        return Interval(lo, hi)
    if bulk.startswith("interval:"):
        a, b = (float(v) for v in bulk.split(":", 1)[1].split(","))
        if not b > a:
            raise ValueError("bulk interval must satisfy a < b")
        return Interval(a, b)
    raise ValueError(f"unknown bulk option {bulk!r}")


def psi_rate(B, h: float, config: TestConfig) -> float:
    """Bulk-dependent part of the separation bound at bandwidth ``h``."""
    length = float(B[1]) - float(B[0])
    m = config.n_alpha2
    bias = length * h ** config.beta
    if config.mechanism is Mechanism.NI:
        var = length ** 0.75 / (h ** 0.75 * math.sqrt(m))
    else:
        var = math.sqrt(length / (h * m))
    return bias + var + 1.0 / math.sqrt(m)


def theoretical_exponent(family: str, mechanism, beta: float = 1.0, k: float | None = None) -> float:
    """Power of ``n alpha^2`` in the separation rate (log factors dropped)."""
    mech = Mechanism.parse(mechanism)
    b = beta
    if family in ("uniform", "normal", "beta", "spiky", "exponential"):
        return -2 * b / (4 * b + 3) if mech is Mechanism.NI else -b / (2 * b + 1)
    if family == "cauchy":
        return -2 * b / (7 * b + 6) if mech is Mechanism.NI else -b / (3 * b + 2)
    if family == "pareto":
        if k is None:
            raise ValueError("pareto exponent needs k")
        if mech is Mechanism.NI:
            return -2 * k * b / (k * (4 * b + 3) + 3 * b + 3)
        return -k * b / (k * (2 * b + 1) + b + 1)
    raise ValueError(f"no closed-form exponent for {family!r}")


def design_partition(d: dens.NullDensity, config: TestConfig, c_h: float = 1.0,
                   bulk: str = "auto") -> BulkPartition:
    """Bulk set plus bandwidth rule, clamped to at least one bin."""
    B = resolve_bulk(d, config, bulk)
    h = bandwidth(config, B, c_h)
    return partition(B, min(h, B.length / 2.0))


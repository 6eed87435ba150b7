"""Test statistics, thresholds, the decision rule and Monte Carlo moment oracles."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import densities as dens
from . import mechanisms as mech
from .kernels import SmoothingKernel, integrate_interval, scaled_eval
from .tuning import BulkPartition, Mechanism, TestConfig


# ---------------------------------------------------------------------------
# statistics


def stat_S_from_moments(sums, sq, n: int) -> float:
    """U-statistic from column sums and sums of squares of the centred matrix."""
    if n < 2:
        raise ValueError("S_B needs n >= 2")
    sums = np.asarray(sums, dtype=float)
    sq = np.asarray(sq, dtype=float)
    return float(np.sum(sums * sums - sq) / (n * (n - 1.0)))


def stat_S(batch: mech.PrivatizedBatch, f0_at_centers) -> float:
    """Bin-wise degenerate U-statistic in ``O(nN)``.

    Uses ``sum_{i != k} a_i a_k = (sum a_i)^2 - sum a_i^2`` per column.
    """
    if batch.kind is not mech.BatchKind.KERNEL_MATRIX:
        raise ValueError("stat_S needs a KERNEL_MATRIX batch")
    A = batch.values - np.asarray(f0_at_centers, dtype=float)[None, :]
    # correctly rounded column sums make the value independent of row order
    sums = [math.fsum(col) for col in A.T]
    sq = [math.fsum(col * col) for col in A.T]
    return stat_S_from_moments(sums, sq, A.shape[0])


def stat_S_naive(Z, f0_at_centers) -> float:
    """Direct double sum over ordered pairs ``i != k``; quadratic reference."""
    A = np.asarray(Z, dtype=float) - np.asarray(f0_at_centers, dtype=float)[None, :]
    n, N = A.shape
    if n < 2:
        raise ValueError("S_B needs n >= 2")
    off = ~np.eye(n, dtype=bool)
    total = [math.fsum(np.outer(A[:, j], A[:, j])[off]) for j in range(N)]
    return math.fsum(total) / (n * (n - 1))


def stat_T(batch: mech.PrivatizedBatch, tail0: float) -> float:
    """Mean tail bit minus the null tail mass."""
    if batch.kind is not mech.BatchKind.TAIL_BITS:
        raise ValueError("stat_T needs a TAIL_BITS batch")
    return float(np.mean(batch.values) - tail0)


def clip_correction(phat, p0, tau: float) -> float:
    """``sum_j p0_j clip(phat_j - p0_j, tau)``."""
    p0 = np.asarray(p0, dtype=float)
    return float(np.dot(p0, np.clip(np.asarray(phat, dtype=float) - p0, -tau, tau)))


def stat_D(batch: mech.PrivatizedBatch, phat, p0, tau: float) -> float:
    """Second-round mean corrected by the null-weighted clipped discrepancies."""
    if batch.kind is not mech.BatchKind.CLIPPED_BITS:
        raise ValueError("stat_D needs a CLIPPED_BITS batch")
    if np.shape(phat) != np.shape(p0):
        raise ValueError("phat and p0 must have the same length")
    return float(np.mean(batch.values) - clip_correction(phat, p0, tau))


# ---------------------------------------------------------------------------
# thresholds and decision


def thresholds_ni(config: TestConfig, part: BulkPartition, kernel: SmoothingKernel,
                  L0: float) -> tuple[float, float]:
    """``t1 = 1.5 L0^2 C^2 N h^{2b} + 196 |psi|^2 sqrt(N) / (g n a^2 h^2)`` and ``t2``."""
    h, N = part.h, part.N
    m, g = config.n_alpha2, config.gamma
    cb = kernel.c_beta(config.beta)
    bias = 1.5 * L0 ** 2 * cb ** 2 * N * h ** (2 * config.beta)
    noise = 196.0 * kernel.sup_norm ** 2 * math.sqrt(N) / (g * m * h * h)
    return bias + noise, tail_threshold(config)


def thresholds_int(config: TestConfig) -> tuple[float, float]:
    """``t1 = 2 sqrt(5) / (n a^2 sqrt(g))`` and the shared tail threshold."""
    t1 = 2.0 * math.sqrt(5.0) / (config.n_alpha2 * math.sqrt(config.gamma))
    return t1, tail_threshold(config)


def tail_threshold(config: TestConfig) -> float:
    return math.sqrt(20.0 / (config.n_alpha2 * config.gamma))


@dataclass(frozen=True)
class TestOutcome:
    __test__ = False

    mechanism: str
    stat_main: float
    stat_tail: float
    t1: float
    t2: float
    reject: bool

    def to_dict(self) -> dict:
        return asdict(self)


def decide(stat_main: float, stat_tail: float, t1: float, t2: float,
           mechanism="ni") -> TestOutcome:
    """Reject when either statistic reaches its threshold (ties reject)."""
    reject = bool(stat_main >= t1 or stat_tail >= t2)
    return TestOutcome(Mechanism.parse(mechanism).value, float(stat_main), float(stat_tail),
                       float(t1), float(t2), reject)


# ---------------------------------------------------------------------------
# moment oracles


@dataclass
class Check:
    """One comparison of an empirical moment with its theoretical value or bound."""

    name: str
    passed: bool
    margin: float  # positive when the check passes with room to spare
    detail: str = ""


@dataclass
class MomentReport:
    statistic: str
    reps: int
    empirical_mean: float
    mean_se: float
    empirical_var: float
    var_se: float
    theoretical_mean: float
    theoretical_var: float | None = None
    var_bound: float | None = None
    extras: dict = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def sample_moments(x) -> tuple[float, float, float, float]:
    """Mean, its SE, unbiased variance and the SE of that variance estimate."""
    x = np.asarray(x, dtype=float)
    R = x.size
    if R < 4:
        raise ValueError("need at least 4 replications")
    mean = float(x.mean())
    var = float(x.var(ddof=1))
    m4 = float(np.mean((x - mean) ** 4))
    var_se = math.sqrt(max(m4 - var * var, 0.0) / R)
    return mean, math.sqrt(var / R), var, var_se


def _two_sided(name, emp, theo, se):
    gap = abs(emp - theo)
    return Check(name, gap <= 3 * se, 3 * se - gap, f"|{emp:.6g} - {theo:.6g}| vs 3*SE={3 * se:.3g}")


def _upper(name, emp, bound, se):
    return Check(name, emp <= bound + 3 * se, bound + 3 * se - emp,
                 f"{emp:.6g} <= {bound:.6g} (+3*SE={3 * se:.3g})")


def _lower(name, emp, bound, se):
    return Check(name, emp >= bound - 3 * se, emp - bound + 3 * se,
                 f"{emp:.6g} >= {bound:.6g} (-3*SE={3 * se:.3g})")


def smoothed_at_centers(f, part: BulkPartition, kernel: SmoothingKernel) -> np.ndarray:
    """``[psi_h * f](x_j)`` for every bin centre."""
    h = part.h
    if kernel.name == "boxcar":
        e = part.edges()
        return np.asarray(f.mass(e[:-1], e[1:]), dtype=float) / (2.0 * h)
    out = np.empty(part.N)
    for j, c in enumerate(part.centers):
        g = lambda y, c=c: float(scaled_eval(kernel, h, c - y)) * float(f.pdf(y))
        pts = [c]
        alt = getattr(f, "partition", None)
        if alt is not None:
            pts += list(alt.edges()) + list(alt.centers)
        out[j] = integrate_interval(g, c - h, c + h, points=pts)
    return out


def outside_mass(f, B) -> float:
    """``int`` of ``f`` off the interval ``B``."""
    if isinstance(f, dens.NullDensity):
        return dens.tail_mass(f, B)
    if isinstance(f, dens.AlternativeDensity):
        # the perturbation integrates to zero over each bump, which lives in its bulk
        inner = f.partition
        off = dens.tail_mass(f.base, B)
        lo = max(B[0], inner.lo)
        hi = min(B[1], inner.hi)
        pert_in = float(f.mass(lo, hi) - f.base.mass(lo, hi)) if hi > lo else 0.0
        return off - pert_in
    return 1.0 - float(f.mass(B[0], B[1]))


def bin_masses(f, part: BulkPartition) -> np.ndarray:
    e = part.edges()
    return np.asarray(f.mass(e[:-1], e[1:]), dtype=float)


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def moment_oracle_S(f, f0: dens.NullDensity, part: BulkPartition, kernel: SmoothingKernel,
                    config: TestConfig, reps: int = 1000, seed=0, backend=None) -> MomentReport:
    """Monte Carlo check of the mean identity and the variance bound of ``S_B``."""
    rng = _rng(seed)
    n, a = config.n, config.alpha
    h, N = part.h, part.N
    params = mech.PrivacyParams.from_alpha(a)
    f0c = np.asarray(f0.pdf(part.centers), dtype=float)
    bias = smoothed_at_centers(f, part, kernel) - f0c
    theo_mean = float(np.sum(bias ** 2))
    s = kernel.sup_norm
    bound = (36 * s * s / (n * a * a * h * h) * theo_mean
             + 164 * s ** 4 * N / (n * (n - 1) * a ** 4 * h ** 4))
    vals = np.empty(reps)
    for r in range(reps):
        X = f.sample(n, rng)
        sums, sq = mech.ni_kernel_moments(X, part, kernel, params, rng, f0c, backend=backend)
        vals[r] = stat_S_from_moments(sums, sq, n)
    mean, se, var, var_se = sample_moments(vals)
    rep = MomentReport("S_B", reps, mean, se, var, var_se, theo_mean, var_bound=bound)
    rep.checks.append(_two_sided("mean", mean, theo_mean, se))
    # the bound is inflated by the relative Monte Carlo error of the variance estimate
    rel = var_se / var if var > 0 else 0.0
    rep.checks.append(_upper("variance_bound", var, bound, bound * rel))
    return rep


def moment_oracle_T(f, f0: dens.NullDensity, B, config: TestConfig, reps: int = 1000,
                    seed=0) -> MomentReport:
    """Monte Carlo check of the exact mean and variance of ``T_B``."""
    rng = _rng(seed)
    n = config.n
    params = mech.PrivacyParams.from_alpha(config.alpha)
    tail0 = dens.tail_mass(f0, B)
    tail_f = outside_mass(f, B)
    theo_mean = tail_f - tail0
    theo_var = (params.c_alpha ** 2 - tail_f ** 2) / n
    vals = np.empty(reps)
    for r in range(reps):
        X = f.sample(n, rng)
        vals[r] = stat_T(mech.rr_tail_privatize(X, B, params, rng), tail0)
    mean, se, var, var_se = sample_moments(vals)
    rep = MomentReport("T_B", reps, mean, se, var, var_se, theo_mean, theoretical_var=theo_var)
    rep.checks.append(_two_sided("mean", mean, theo_mean, se))
    rep.checks.append(_two_sided("variance", var, theo_var, var_se))
    return rep


def d_tau(p, p0, tau: float) -> float:
    """``sum_j |p_j - p0_j| min(|p_j - p0_j|, tau)``."""
    g = np.abs(np.asarray(p, dtype=float) - np.asarray(p0, dtype=float))
    return float(np.sum(g * np.minimum(g, tau)))


def interactive_D(f, part: BulkPartition, p0, params: mech.PrivacyParams, n: int, rng,
                  backend=None) -> tuple[float, np.ndarray]:
    """One draw of ``D_B`` (two rounds on fresh samples of size ``n``) and its ``phat``."""
    X1 = f.sample(n, rng)
    phat = mech.int_bin_phat(X1, part, params, rng, backend=backend)
    X2 = f.sample(n, rng)
    q = mech.second_round_bias(X2, part, phat, p0, params)
    mag = params.c_alpha * params.tau
    bits = np.where(rng.random(n) < 0.5 * (1.0 + q), mag, -mag)
    return float(bits.mean() - clip_correction(phat, p0, params.tau)), phat


def moment_oracle_D(f, f0: dens.NullDensity, part: BulkPartition, config: TestConfig,
                    reps: int = 1000, seed=0, backend=None) -> MomentReport:
    """Monte Carlo check of the mean identity, mean lower bound and variance bound of ``D_B``.

    The mean identity needs ``E[clip(phat_j - p0_j)]``, which is estimated from an
    independent replay of the first round.
    """
    rng = _rng(seed)
    n, a = config.n, config.alpha
    params = mech.PrivacyParams.from_alpha(a, n)
    tau = params.tau
    p = bin_masses(f, part)
    p0 = bin_masses(f0, part)
    dt = d_tau(p, p0, tau)
    lower = dt / 6.0 - 6.0 * tau / math.sqrt(n)
    m = n * a * a
    bound = 5.0 / (m * m) + 67.0 * dt / m
    vals = np.empty(reps)
    for r in range(reps):
        vals[r], _ = interactive_D(f, part, p0, params, n, rng, backend=backend)
    replay = np.empty((reps, part.N))
    for r in range(reps):
        phat = mech.int_bin_phat(f.sample(n, rng), part, params, rng, backend=backend)
        replay[r] = np.clip(phat - p0, -tau, tau)
    diff = p - p0
    ident = replay @ diff
    ident_mean = float(ident.mean())
    ident_se = float(ident.std(ddof=1) / math.sqrt(reps))
    mean, se, var, var_se = sample_moments(vals)
    null_case = bool(np.all(diff == 0.0))
    rep = MomentReport("D_B", reps, mean, se, var, var_se,
                       0.0 if null_case else ident_mean, var_bound=bound,
                       extras={"D_tau": dt, "mean_lower_bound": lower, "tau": tau})
    if null_case:
        rep.checks.append(_two_sided("null_mean", mean, 0.0, se))
    else:
        rep.checks.append(_two_sided("mean_identity", mean, ident_mean, math.hypot(se, ident_se)))
    rep.checks.append(_lower("mean_lower_bound", mean, lower, se))
    rep.checks.append(_upper("variance_bound", var, bound, var_se))
    return rep

"""End-to-end trials, risk estimation, radius bisection and rate fits."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .. import densities as dens
from .. import mechanisms as mech
from .. import statistics as st
from .. import tuning
from ..kernels import KERNELS, sine_wave
from ..tuning import Mechanism, TestConfig
from . import seeds

RADIUS_LABEL = "mechanism-specific separation estimate"
WILSON_Z = float(sps.norm.ppf(0.975))
# With L = 20 the Hoelder cap on delta sits below the detection radius at every
# grid n, so every point is censored; L = 60 leaves room above it.
RATE_L = 60.0


def worker_count() -> int:
    env = os.environ.get("LDPGOF_THREADS")
    if env:
        try:
            v = int(env)
        except ValueError:
            raise ValueError("LDPGOF_THREADS must be a positive integer") from None
        if v < 1:
            raise ValueError("LDPGOF_THREADS must be a positive integer")
        return v
    return os.cpu_count() or 1


def parallel_map(fn, items, workers: int | None = None) -> list:
    """``map`` over a thread pool; results come back in input order."""
    items = list(items)
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# intervals


def wilson_interval(k: int, n: int, z: float = WILSON_Z) -> tuple[float, float]:
    """Wilson score interval for ``k`` successes in ``n`` trials."""
    if n <= 0 or not 0 <= k <= n:
        raise ValueError("need 0 <= k <= n and n > 0")
    p = k / n
    den = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return lo, hi


@dataclass(frozen=True)
class Rate:
    k: int
    n: int

    @property
    def value(self) -> float:
        return self.k / self.n

    @property
    def interval(self) -> tuple[float, float]:
        return wilson_interval(self.k, self.n)


@dataclass(frozen=True)
class RiskEstimate:
    type1: Rate
    type2: Rate | None

    @property
    def risk(self) -> float:
        return self.type1.value + (self.type2.value if self.type2 else math.nan)

    @property
    def risk_interval(self) -> tuple[float, float]:
        a, b = self.type1.interval
        if self.type2 is None:
            return math.nan, math.nan
        c, d = self.type2.interval
        return a + c, b + d

    @property
    def reps(self) -> int:
        return self.type1.n


# ---------------------------------------------------------------------------
# pipeline


def alternative_partition(part: tuning.BulkPartition) -> tuning.BulkPartition:
    """Bumps covering consecutive pairs of test bins.

    A bump whose support is exactly one test bin integrates to zero on it, so it
    is invisible to bin-average statistics. Each bump here spans two test bins
    exactly; with an odd bin count the last test bin is left unperturbed.
    """
    N = part.N // 2
    if N < 1:
        raise ValueError("the test partition has a single bin; no alternative bump fits "
                         "on a pair of bins")
    h = 2.0 * part.h
    centers = part.lo + (2.0 * np.arange(1, N + 1) - 1.0) * h
    return tuning.BulkPartition(part.lo, part.lo + 2.0 * h * N, h, N, centers)


def sign_pattern(pattern: str, N: int, master_seed: int = 0) -> np.ndarray:
    if pattern == "ones":
        return np.ones(N)
    if pattern == "alternating":
        return np.where(np.arange(N) % 2 == 0, 1.0, -1.0)
    if pattern.startswith("seed:"):
        g = seeds.generator(master_seed, seeds.ARM_SIGNS, int(pattern[5:]))
        return np.where(g.random(N) < 0.5, -1.0, 1.0)
    raise ValueError(f"unknown sign pattern {pattern!r}; use ones, alternating or seed:K")


@dataclass
class TestPipeline:
    """Everything about one test that does not depend on the data."""

    __test__ = False

    config: TestConfig
    null: dens.NullDensity
    part: tuning.BulkPartition
    kernel: object
    L0: float
    params: mech.PrivacyParams
    tail0: float
    f0_centers: np.ndarray
    p0: np.ndarray
    closed_form_thresholds: tuple[float, float]

    @classmethod
    def build(cls, config: TestConfig, null: dens.NullDensity, c_h: float = 1.0,
              bulk: str = "auto", kernel: str = "boxcar") -> "TestPipeline":
        L0 = config.check_null(null)
        part = tuning.design_partition(null, config, c_h, bulk)
        k = KERNELS[kernel]()
        params = mech.PrivacyParams.from_alpha(config.alpha, config.n)
        if config.mechanism is Mechanism.NI:
            thr = st.thresholds_ni(config, part, k, L0)
        else:
            thr = st.thresholds_int(config)
        return cls(config, null, part, k, L0, params, dens.tail_mass(null, part.B),
                   np.asarray(null.pdf(part.centers), dtype=float), st.bin_masses(null, part), thr)

    @property
    def split(self) -> int:
        return 2 if self.config.mechanism is Mechanism.NI else 3

    def statistics(self, f, rng_data, rng_noise, backend=None) -> tuple[float, float]:
        """Main and tail statistics on one fresh sample of size ``split * n`` from ``f``."""
        n = self.config.n
        X = f.sample(self.split * n, rng_data)
        p = self.params
        if self.config.mechanism is Mechanism.NI:
            sums, sq = mech.ni_kernel_moments(X[:n], self.part, self.kernel, p, rng_noise,
                                              self.f0_centers, backend=backend)
            main = st.stat_S_from_moments(sums, sq, n)
        else:
            phat = mech.int_bin_phat(X[:n], self.part, p, rng_noise, backend=backend)
            bits = mech.int_second_round(X[n:2 * n], self.part, phat, self.p0, p, rng_noise)
            main = st.stat_D(bits, phat, self.p0, p.tau)
        tail = st.stat_T(mech.rr_tail_privatize(X[-n:], self.part.B, p, rng_noise), self.tail0)
        return main, tail

    def alternative(self, delta: float, signs="alternating", master_seed: int = 0):
        apart = alternative_partition(self.part)
        s = sign_pattern(signs, apart.N, master_seed) if isinstance(signs, str) else signs
        return dens.make_alternative(self.null, apart, delta, s, L=self.config.L,
                                     beta=self.config.beta)

    def delta_max(self) -> float:
        apart = alternative_partition(self.part)
        return dens.delta_max(self.null, apart, sine_wave(), self.config.L, self.config.beta)[0]


# ---------------------------------------------------------------------------
# experiment spec and trials


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment: a configuration, a null, an optional alternative and seeding."""

    config: TestConfig
    null_spec: str
    delta: float | None = None  # None means the data are drawn from the null
    signs: str = "alternating"
    reps: int = 500
    master_seed: int = 0
    point: int = 0
    c_h: float = 1.0
    bulk: str = "auto"
    thresholds: str = "closed-form"  # or "calibrated"
    calib_reps: int = 2000

    def __post_init__(self):
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if self.thresholds not in ("closed-form", "calibrated"):
            raise ValueError("thresholds must be 'closed-form' or 'calibrated'")

    def pipeline(self) -> TestPipeline:
        return TestPipeline.build(self.config, dens.parse_density(self.null_spec), self.c_h,
                                  self.bulk)


@dataclass
class Context:
    """A built pipeline together with the thresholds in force."""

    spec: ExperimentSpec
    pipe: TestPipeline
    t1: float
    t2: float

    @classmethod
    def prepare(cls, spec: ExperimentSpec) -> "Context":
        pipe = spec.pipeline()
        if spec.thresholds == "closed-form":
            t1, t2 = pipe.closed_form_thresholds
        else:
            t1, t2 = calibrate(pipe, spec.master_seed, spec.point, spec.calib_reps)
        return cls(spec, pipe, t1, t2)

    def density(self, delta):
        if delta is None:
            return self.pipe.null
        return self.pipe.alternative(delta, self.spec.signs, self.spec.master_seed)

    def outcome(self, f, arm: int, trial: int) -> st.TestOutcome:
        rd, rn = seeds.trial_streams(self.spec.master_seed, arm, self.spec.point, trial)
        main, tail = self.pipe.statistics(f, rd, rn)
        return st.decide(main, tail, self.t1, self.t2, self.pipe.config.mechanism)

    def count_rejections(self, f, arm: int, reps: int, workers=None) -> int:
        res = parallel_map(lambda i: self.outcome(f, arm, i).reject, range(reps), workers)
        return int(sum(res))


def run_trial(spec: ExperimentSpec, trial_index: int, ctx: Context | None = None) -> st.TestOutcome:
    """One full test on fresh data; deterministic in ``(master_seed, trial_index)``."""
    ctx = ctx or Context.prepare(spec)
    arm = seeds.ARM_NULL if spec.delta is None else seeds.ARM_ALT
    return ctx.outcome(ctx.density(spec.delta), arm, trial_index)


def empirical_upper_threshold(values, level: float) -> float:
    """Smallest threshold whose empirical exceedance (``>=``) rate is at most ``level``."""
    v = np.sort(np.asarray(values, dtype=float))
    R = v.size
    k = int(math.floor(level * R))
    if k >= R:
        return -math.inf
    return float(np.nextafter(v[R - k - 1], math.inf))


def calibrate(pipe: TestPipeline, master_seed: int, point: int = 0, reps: int = 2000,
              workers=None) -> tuple[float, float]:
    """Null-quantile thresholds; each statistic gets half the ``gamma/2`` type-I budget."""
    def one(i):
        rd, rn = seeds.trial_streams(master_seed, seeds.ARM_CALIB, point, i)
        return pipe.statistics(pipe.null, rd, rn)

    res = np.array(parallel_map(one, range(reps), workers))
    level = pipe.config.gamma / 4.0
    return empirical_upper_threshold(res[:, 0], level), empirical_upper_threshold(res[:, 1], level)


def estimate_risk(spec: ExperimentSpec, ctx: Context | None = None, workers=None) -> RiskEstimate:
    """Type-I and type-II error rates with Wilson intervals."""
    ctx = ctx or Context.prepare(spec)
    k1 = ctx.count_rejections(ctx.pipe.null, seeds.ARM_NULL, spec.reps, workers)
    t2 = None
    if spec.delta is not None:
        k2 = spec.reps - ctx.count_rejections(ctx.density(spec.delta), seeds.ARM_ALT,
                                              spec.reps, workers)
        t2 = Rate(k2, spec.reps)
    return RiskEstimate(Rate(k1, spec.reps), t2)


# ---------------------------------------------------------------------------
# separation radius


@dataclass
class RadiusResult:
    n: int
    alpha: float
    delta: float
    delta_max: float
    l1_distance: float
    status: str  # "ok", "censored" or "inconclusive"
    type1: Rate
    t1: float
    t2: float
    evaluations: list = field(default_factory=list)  # (delta, type2 Rate)
    label: str = RADIUS_LABEL

    @property
    def censored(self) -> bool:
        return self.status != "ok"


def l1_of_delta(pipe: TestPipeline, delta: float) -> float:
    apart = alternative_partition(pipe.part)
    return sine_wave().c1 * delta * apart.N * math.sqrt(apart.h)


def estimate_radius(spec: ExperimentSpec, target_gamma: float | None = None,
                    rel_width: float = 0.05, max_steps: int = 30, ctx: Context | None = None,
                    workers=None) -> RadiusResult:
    """Bisect the perturbation size until the estimated risk crosses ``target_gamma``.

    Bisection stops once the bracket is narrower than ``rel_width`` (relative) or
    the risk intervals at both of its ends contain the target; the crossing is
    then interpolated linearly. The same alternative-arm streams are reused for
    every ``delta`` so risk is a smooth function of ``delta`` within one bisection.
    """
    ctx = ctx or Context.prepare(spec)
    pipe = ctx.pipe
    target = spec.config.gamma if target_gamma is None else target_gamma
    reps = spec.reps
    type1 = Rate(ctx.count_rejections(pipe.null, seeds.ARM_NULL, reps, workers), reps)
    dmax = pipe.delta_max()
    evals: list[tuple[float, Rate]] = []

    def risk_at(delta):
        acc = ctx.count_rejections(ctx.density(delta), seeds.ARM_ALT, reps, workers)
        r = RiskEstimate(type1, Rate(reps - acc, reps))
        evals.append((delta, r.type2))
        return r

    def result(delta, status):
        return RadiusResult(spec.config.n, spec.config.alpha, delta, dmax, l1_of_delta(pipe, delta),
                            status, type1, ctx.t1, ctx.t2, sorted(evals, key=lambda e: e[0]))

    def inverted():
        pts = sorted(evals, key=lambda e: e[0])
        for i, (_, ra) in enumerate(pts):
            for _, rb in pts[i + 1:]:
                if rb.interval[0] > ra.interval[1]:
                    return True
        return False

    top = risk_at(dmax)
    if top.risk > target:
        return result(dmax, "censored")
    lo, hi = 0.0, dmax
    r_lo, r_hi = None, top
    for _ in range(max_steps):
        if hi - lo <= rel_width * hi:
            break
        if r_lo is not None and _covers(r_lo, target) and _covers(r_hi, target):
            break  # both ends are statistically at the target
        mid = 0.5 * (lo + hi)
        r = risk_at(mid)
        if inverted():
            return result(mid, "inconclusive")
        if r.risk <= target:
            hi, r_hi = mid, r
        else:
            lo, r_lo = mid, r
    if r_lo is None:
        return result(hi, "ok")
    # linear interpolation of the point risks across the final bracket
    w = (r_lo.risk - target) / (r_lo.risk - r_hi.risk)
    return result(lo + w * (hi - lo), "ok")


def _covers(r: RiskEstimate, target: float) -> bool:
    a, b = r.risk_interval
    return a <= target <= b


# ---------------------------------------------------------------------------
# rate fits


@dataclass
class RateFit:
    n_alpha2: list
    rho_hat: list
    slope: float
    slope_se: float
    intercept: float
    theoretical_exponent: float

    @property
    def gap(self) -> float:
        return abs(self.slope - self.theoretical_exponent)


def fit_rate(n_alpha2, rho_hat, theoretical_exponent: float, censored=None) -> RateFit:
    """OLS of ``log rho`` on ``log(n alpha^2)`` over uncensored points."""
    x = np.asarray(n_alpha2, dtype=float)
    y = np.asarray(rho_hat, dtype=float)
    keep = np.ones(x.size, bool) if censored is None else ~np.asarray(censored, bool)
    x, y = x[keep], y[keep]
    if x.size < 4:
        raise ValueError(f"rate fit needs at least 4 uncensored grid points, got {x.size}")
    if np.any(np.diff(x) <= 0):
        raise ValueError("grid must be strictly increasing in n alpha^2")
    res = sps.linregress(np.log(x), np.log(y))
    return RateFit(x.tolist(), y.tolist(), float(res.slope), float(res.stderr),
                   float(res.intercept), float(theoretical_exponent))


def rate_grid(points: int = 8, start_exp: int = 10) -> list[int]:
    return [2 ** (start_exp + i) for i in range(points)]


def run_rates(null_spec: str, mechanism, ns, alpha: float = 0.5, beta: float = 1.0,
              gamma: float = 0.2, L: float = RATE_L, reps: int = 500, master_seed: int = 0,
              thresholds: str = "calibrated", calib_reps: int = 2000, c_h: float = 1.0,
              bulk: str = "auto", signs: str = "alternating", workers=None, progress=None):
    """Radius at each grid point, then the slope fit against the closed-form exponent.

    The fit is ``None`` when fewer than four grid points are uncensored.
    """
    mech_ = Mechanism.parse(mechanism)
    results = []
    for point, n in enumerate(ns):
        cfg = TestConfig(n=n, alpha=alpha, beta=beta, L=L, gamma=gamma, mechanism=mech_)
        spec = ExperimentSpec(cfg, null_spec, delta=0.0, signs=signs, reps=reps,
                              master_seed=master_seed, point=point, c_h=c_h, bulk=bulk,
                              thresholds=thresholds, calib_reps=calib_reps)
        ctx = Context.prepare(spec)
        results.append(estimate_radius(spec, ctx=ctx, workers=workers))
        if progress:
            progress(results[-1])
    null = dens.parse_density(null_spec)
    expo = tuning.theoretical_exponent(null.family, mech_, beta, getattr(null, "k", None))
    try:
        fit = fit_rate([r.n * alpha ** 2 for r in results], [r.l1_distance for r in results],
                       expo, [r.censored for r in results])
    except ValueError:
        fit = None
    return results, fit

"""Null-density catalog, tail masses, bulk minima and perturbed alternatives.

Every catalog member exposes closed-form ``pdf``, ``cdf``, ``sf`` and
``quantile`` functions, so sampling is by inverse CDF and tail masses are exact.
Intervals are plain ``(lo, hi)`` pairs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .kernels import WaveKernel, integrate_interval, sine_wave

MAX_CONSECUTIVE_REJECTIONS = 10**6


class NullDensity:
    """Base class for catalog densities."""

    family: str = ""
    support: tuple[float, float] = (-math.inf, math.inf)

    def pdf(self, x):
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError

    def sf(self, x):
        return 1.0 - self.cdf(x)

    def quantile(self, u):
        raise NotImplementedError

    def mode(self) -> float:
        raise NotImplementedError

    # Hölder data -------------------------------------------------------
    holder_beta_max: float = 1.0

    def lipschitz(self) -> float:
        """Sup of ``|f_0'|`` over the support interior."""
        raise NotImplementedError

    def oscillation(self) -> float:
        """``sup f_0 - inf f_0`` over the support."""
        lo, hi = self.support
        low = 0.0 if (math.isinf(lo) or math.isinf(hi)) else min(self.pdf(lo), self.pdf(hi))
        return float(self.pdf(self.mode())) - float(low)

    def L0(self, beta: float = 1.0) -> float:
        """Hölder-``beta`` constant of the density on its support.

        For a Lipschitz density ``min(Lip d, osc) <= Lip**beta osc**(1-beta) d**beta``.
        """
        if beta > self.holder_beta_max + 1e-12:
            raise ValueError(f"{self.spec()} is not Hölder with exponent {beta}")
        return self.lipschitz() ** beta * self.oscillation() ** (1.0 - beta)

    # Interval helpers --------------------------------------------------
    def mass(self, a, b):
        """``int_a^b f_0``, vectorised over the endpoints."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        return np.where(b > a, self.cdf(b) - self.cdf(a), 0.0)

    def sup_on(self, a: float, b: float) -> float:
        m = self.mode()
        if a <= m <= b:
            return float(self.pdf(m))
        return float(max(self.pdf(a), self.pdf(b)))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be >= 1")
        return self.quantile(rng.random(n))

    def spec(self) -> str:
        raise NotImplementedError

    def __repr__(self):
        return f"NullDensity({self.spec()})"


def _arr(x):
    return np.asarray(x, dtype=float)


def _out(v):
    v = np.asarray(v, dtype=float)
    return float(v) if v.ndim == 0 else v


class Uniform(NullDensity):
    family = "uniform"

    def __init__(self, a: float = 0.0, b: float = 1.0):
        if not b > a:
            raise ValueError("uniform requires a < b")
        self.a, self.b = float(a), float(b)
        self.support = (self.a, self.b)

    def pdf(self, x):
        x = _arr(x)
        return _out(np.where((x >= self.a) & (x <= self.b), 1.0 / (self.b - self.a), 0.0))

    def cdf(self, x):
        return _out(np.clip((_arr(x) - self.a) / (self.b - self.a), 0.0, 1.0))

    def sf(self, x):
        return _out(np.clip((self.b - _arr(x)) / (self.b - self.a), 0.0, 1.0))

    def quantile(self, u):
        return _out(self.a + (self.b - self.a) * _arr(u))

    def mode(self):
        return 0.5 * (self.a + self.b)

    def lipschitz(self):
        return 0.0

    def oscillation(self):
        return 0.0

    def L0(self, beta=1.0):
        return 0.0

    def sup_on(self, a, b):
        return 1.0 / (self.b - self.a)

    def spec(self):
        return f"uniform:{self.a:g},{self.b:g}"


class Normal(NullDensity):
    family = "normal"
    support = (-math.inf, math.inf)

    def pdf(self, x):
        x = _arr(x)
        return _out(np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi))

    def cdf(self, x):
        return _out(special.ndtr(_arr(x)))

    def sf(self, x):
        return _out(special.ndtr(-_arr(x)))

    def quantile(self, u):
        return _out(special.ndtri(_arr(u)))

    def mode(self):
        return 0.0

    def lipschitz(self):
        return math.exp(-0.5) / math.sqrt(2.0 * math.pi)

    def oscillation(self):
        return 1.0 / math.sqrt(2.0 * math.pi)

    def spec(self):
        return "normal"


class Beta(NullDensity):
    family = "beta"
    support = (0.0, 1.0)

    def __init__(self, a: float, b: float):
        if a < 1 or b < 1:
            raise ValueError("beta densities need a >= 1 and b >= 1 to be Hölder continuous")
        self.a, self.b = float(a), float(b)
        self._logB = special.betaln(self.a, self.b)
        caps = [c - 1.0 for c in (self.a, self.b) if c > 1.0]
        self.holder_beta_max = min([1.0] + caps)

    def pdf(self, x):
        x = _arr(x)
        inside = (x >= 0.0) & (x <= 1.0)
        xc = np.clip(x, 0.0, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            logp = (special.xlogy(self.a - 1.0, xc) + special.xlog1py(self.b - 1.0, -xc)
                    - self._logB)
        return _out(np.where(inside, np.exp(logp), 0.0))

    def cdf(self, x):
        return _out(special.betainc(self.a, self.b, np.clip(_arr(x), 0.0, 1.0)))

    def sf(self, x):
        return _out(special.betainc(self.b, self.a, np.clip(1.0 - _arr(x), 0.0, 1.0)))

    def quantile(self, u):
        return _out(special.betaincinv(self.a, self.b, _arr(u)))

    def mode(self):
        if self.a == 1.0 and self.b == 1.0:
            return 0.5
        return (self.a - 1.0) / (self.a + self.b - 2.0)

    def _derivative(self, x):
        # product-rule form stays finite at the endpoints when a, b >= 2
        x = _arr(x)
        a, b = self.a, self.b
        with np.errstate(divide="ignore", invalid="ignore"):
            d = ((a - 1.0) * x ** (a - 2.0) * (1.0 - x) ** (b - 1.0)
                 - (b - 1.0) * x ** (a - 1.0) * (1.0 - x) ** (b - 2.0))
        return d * math.exp(-self._logB)

    def lipschitz(self):
        for c in (self.a, self.b):
            if 1.0 < c < 2.0:
                return math.inf
        # |f'| is maximal at an inflection point or an endpoint; a dense grid
        # refined by a local optimiser is plenty for these smooth shapes.
        from scipy.optimize import minimize_scalar

        grid = np.linspace(0.0, 1.0, 20001)
        d = np.abs(self._derivative(grid))
        k = int(np.nanargmax(d))
        lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
        res = minimize_scalar(lambda t: -abs(float(self._derivative(t))), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-13})
        return float(max(d[k], -res.fun))

    def L0(self, beta=1.0):
        if beta > self.holder_beta_max + 1e-12:
            raise ValueError(f"{self.spec()} is not Hölder with exponent {beta}")
        lip = self.lipschitz()
        if math.isfinite(lip):
            return lip ** beta * self.oscillation() ** (1.0 - beta)
        return _grid_holder(self.pdf, 0.0, 1.0, beta) * 1.01

    def spec(self):
        return f"beta:{self.a:g},{self.b:g}"


def _grid_holder(f, lo, hi, beta, m=3001):
    # endpoints carry the roughness for x**c shapes, so refine geometrically there
    inner = np.linspace(lo, hi, m)
    geo = np.geomspace(1e-10, 0.5, 400) * (hi - lo)
    x = np.unique(np.concatenate([inner, lo + geo, hi - geo]))
    fx = f(x)
    best = 0.0
    for i in range(x.size - 1):
        d = x[i + 1:] - x[i]
        r = np.abs(fx[i + 1:] - fx[i]) / d ** beta
        best = max(best, float(r.max()))
    return best


class Cauchy(NullDensity):
    family = "cauchy"
    support = (-math.inf, math.inf)

    def __init__(self, a: float = 1.0):
        if not a > 0:
            raise ValueError("cauchy scale must be positive")
        self.a = float(a)

    def pdf(self, x):
        x = _arr(x)
        return _out(self.a / (math.pi * (x * x + self.a * self.a)))

    def cdf(self, x):
        return _out(0.5 + np.arctan(_arr(x) / self.a) / math.pi)

    def sf(self, x):
        return _out(0.5 - np.arctan(_arr(x) / self.a) / math.pi)

    def quantile(self, u):
        return _out(self.a * np.tan(math.pi * (_arr(u) - 0.5)))

    def mode(self):
        return 0.0

    def lipschitz(self):
        return 3.0 * math.sqrt(3.0) / (8.0 * math.pi * self.a * self.a)

    def oscillation(self):
        return 1.0 / (math.pi * self.a)

    def spec(self):
        return f"cauchy:{self.a:g}"


class Pareto(NullDensity):
    family = "pareto"

    def __init__(self, a: float = 1.0, k: float = 1.0):
        if not (a > 0 and k > 0):
            raise ValueError("pareto needs a > 0 and k > 0")
        self.a, self.k = float(a), float(k)
        self.support = (self.a, math.inf)

    def pdf(self, x):
        x = _arr(x)
        with np.errstate(divide="ignore"):
            v = self.k * self.a ** self.k / np.where(x >= self.a, x, 1.0) ** (self.k + 1.0)
        return _out(np.where(x >= self.a, v, 0.0))

    def cdf(self, x):
        return _out(1.0 - self.sf(x))

    def sf(self, x):
        x = np.maximum(_arr(x), self.a)
        return _out((self.a / x) ** self.k)

    def quantile(self, u):
        return _out(self.a * (1.0 - _arr(u)) ** (-1.0 / self.k))

    def mode(self):
        return self.a

    def lipschitz(self):
        return self.k * (self.k + 1.0) / (self.a * self.a)

    def oscillation(self):
        return self.k / self.a

    def spec(self):
        return f"pareto:{self.a:g},{self.k:g}"


class Exponential(NullDensity):
    family = "exponential"
    support = (0.0, math.inf)

    def __init__(self, lam: float = 1.0):
        if not lam > 0:
            raise ValueError("exponential rate must be positive")
        self.lam = float(lam)

    def pdf(self, x):
        x = _arr(x)
        return _out(np.where(x >= 0.0, self.lam * np.exp(-self.lam * np.maximum(x, 0.0)), 0.0))

    def cdf(self, x):
        return _out(-np.expm1(-self.lam * np.maximum(_arr(x), 0.0)))

    def sf(self, x):
        return _out(np.exp(-self.lam * np.maximum(_arr(x), 0.0)))

    def quantile(self, u):
        return _out(-np.log1p(-_arr(u)) / self.lam)

    def mode(self):
        return 0.0

    def lipschitz(self):
        return self.lam ** 2

    def oscillation(self):
        return self.lam

    def spec(self):
        return f"exp:{self.lam:g}"


class Spiky(NullDensity):
    """Triangular density of height ``sqrt(L0)`` on ``[0, 2/sqrt(L0)]``."""

    family = "spiky"

    def __init__(self, L0: float = 1.0):
        if not L0 > 0:
            raise ValueError("spiky slope must be positive")
        self.slope = float(L0)
        self.peak = 1.0 / math.sqrt(self.slope)
        self.support = (0.0, 2.0 * self.peak)

    def pdf(self, x):
        x = _arr(x)
        v = np.where(x <= self.peak, self.slope * x, 2.0 * math.sqrt(self.slope) - self.slope * x)
        return _out(np.where((x >= 0.0) & (x <= 2.0 * self.peak), v, 0.0))

    def cdf(self, x):
        x = np.clip(_arr(x), 0.0, 2.0 * self.peak)
        left = 0.5 * self.slope * x * x
        right = 1.0 - 0.5 * self.slope * (2.0 * self.peak - x) ** 2
        return _out(np.where(x <= self.peak, left, right))

    def sf(self, x):
        x = np.clip(_arr(x), 0.0, 2.0 * self.peak)
        left = 1.0 - 0.5 * self.slope * x * x
        right = 0.5 * self.slope * (2.0 * self.peak - x) ** 2
        return _out(np.where(x <= self.peak, left, right))

    def quantile(self, u):
        u = _arr(u)
        left = np.sqrt(2.0 * np.minimum(u, 0.5) / self.slope)
        right = 2.0 * self.peak - np.sqrt(2.0 * np.minimum(1.0 - u, 0.5) / self.slope)
        return _out(np.where(u <= 0.5, left, right))

    def mode(self):
        return self.peak

    def lipschitz(self):
        return self.slope

    def oscillation(self):
        return math.sqrt(self.slope)

    def spec(self):
        return f"spiky:{self.slope:g}"


class SlowVary(NullDensity):
    """``A log(2)^A / ((x+2) log(x+2)^(A+1))`` on ``[0, inf)``."""

    family = "slowvary"
    support = (0.0, math.inf)

    def __init__(self, A: float = 1.0):
        if not A > 0:
            raise ValueError("slowvary exponent must be positive")
        self.A = float(A)
        self._c = math.log(2.0) ** self.A

    def pdf(self, x):
        x = _arr(x)
        xp = np.maximum(x, 0.0) + 2.0
        v = self.A * self._c / (xp * np.log(xp) ** (self.A + 1.0))
        return _out(np.where(x >= 0.0, v, 0.0))

    def cdf(self, x):
        return _out(1.0 - self.sf(x))

    def sf(self, x):
        xp = np.maximum(_arr(x), 0.0) + 2.0
        return _out(self._c / np.log(xp) ** self.A)

    def quantile(self, u):
        u = _arr(u)
        # upper quantiles exceed the float range quickly; they map to +inf (off any bulk)
        with np.errstate(over="ignore"):
            return _out(np.exp(math.log(2.0) * (1.0 - u) ** (-1.0 / self.A)) - 2.0)

    def mode(self):
        return 0.0

    def lipschitz(self):
        l2 = math.log(2.0)
        return self.A * (l2 + self.A + 1.0) / (4.0 * l2 * l2)

    def oscillation(self):
        return self.A / (2.0 * math.log(2.0))

    def spec(self):
        return f"slowvary:{self.A:g}"


def parse_density(text: str) -> NullDensity:
    """Build a catalog density from a CLI string such as ``pareto:1,2``."""
    name, _, rest = text.strip().partition(":")
    try:
        args = [float(v) for v in rest.split(",")] if rest else []
    except ValueError:
        raise ValueError(f"malformed density parameters in {text!r}") from None
    table = {
        "uniform": (Uniform, (0, 2)),
        "normal": (Normal, (0, 0)),
        "beta": (Beta, (2, 2)),
        "cauchy": (Cauchy, (0, 1)),
        "pareto": (Pareto, (2, 2)),
        "exp": (Exponential, (0, 1)),
        "exponential": (Exponential, (0, 1)),
        "spiky": (Spiky, (0, 1)),
        "slowvary": (SlowVary, (0, 1)),
    }
    if name not in table:
        raise ValueError(f"unknown density {name!r}; expected one of "
                         "uniform:a,b normal beta:a,b cauchy:a pareto:a,k exp:lambda "
                         "spiky:L0 slowvary:A")
    cls, (lo, hi) = table[name]
    if not lo <= len(args) <= hi:
        raise ValueError(f"density {name!r} takes between {lo} and {hi} parameters")
    return cls(*args)


def _check_interval(B):
    lo, hi = float(B[0]), float(B[1])
    if not (lo <= hi) or math.isnan(lo) or math.isnan(hi):
        raise ValueError(f"malformed interval {B!r}")
    return lo, hi


def tail_mass(d: NullDensity, B) -> float:
    """Exact mass of ``d`` outside the interval ``B``."""
    lo, hi = _check_interval(B)
    return float(d.cdf(lo) + d.sf(hi))


def c0(d: NullDensity, B) -> float:
    """Minimum of the density over the compact interval ``B``.

    Catalog members are unimodal (or monotone), so the minimum sits at an endpoint.
    """
    lo, hi = _check_interval(B)
    if math.isinf(lo) or math.isinf(hi):
        raise ValueError("c0 needs a compact interval")
    return float(min(d.pdf(lo), d.pdf(hi)))


# ---------------------------------------------------------------------------
# perturbed alternatives


@dataclass(frozen=True)
class AlternativeDensity:
    """``f_0 + delta * sum_j sign_j * psi_j`` with ``psi_j = h^{-1/2} wave((x - x_j)/h)``."""

    base: NullDensity
    partition: object
    delta: float
    signs: np.ndarray
    wave: WaveKernel = field(default_factory=sine_wave)

    @property
    def amplitude(self) -> float:
        """Peak height of one bump."""
        return self.delta * self.wave.sup_norm / math.sqrt(self.partition.h)

    def perturbation(self, x):
        x = _arr(x)
        part = self.partition
        j = part.bin_index(x)
        inside = j >= 0
        jj = np.where(inside, j, 0)
        t = (x - part.centers[jj]) / part.h
        v = self.delta * self.signs[jj] * self.wave.eval(t) / math.sqrt(part.h)
        return np.where(inside, v, 0.0)

    def pdf(self, x):
        return _out(self.base.pdf(x) + self.perturbation(x))

    def mass(self, a, b):
        """``int_a^b f_nu`` using the wave's exact antiderivative."""
        a = _arr(a)
        b = _arr(b)
        part = self.partition
        total = self.base.mass(a, b)
        h = part.h
        for j in range(part.N):
            lo = (np.maximum(a, part.centers[j] - h) - part.centers[j]) / h
            hi = (np.minimum(b, part.centers[j] + h) - part.centers[j]) / h
            total = total + self.delta * self.signs[j] * math.sqrt(h) * self.wave.integral(lo, hi)
        return _out(total)

    def l1_distance(self) -> float:
        """Closed-form ``||f_nu - f_0||_1``."""
        return self.wave.c1 * self.delta * self.partition.N * math.sqrt(self.partition.h)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Exact draws: inverse CDF off the bulk, rejection on it."""
        if n < 1:
            raise ValueError("n must be >= 1")
        base = self.base
        lo, hi = self.partition.lo, self.partition.hi
        F_lo, S_hi = float(base.cdf(lo)), float(base.sf(hi))
        tail = F_lo + S_hi
        u = rng.random(n)
        out = np.empty(n)
        off = u < tail
        # off-bulk: reuse u (uniform on [0, tail)) to pick the left or right tail
        uo = u[off]
        left = uo < F_lo
        xo = np.empty(uo.size)
        xo[left] = base.quantile(uo[left])
        xo[~left] = base.quantile(1.0 - S_hi + (uo[~left] - F_lo))
        out[off] = xo
        m = int(np.count_nonzero(~off))
        if m:
            out[~off] = self._rejection(m, rng, lo, hi)
        return out

    def _rejection(self, m, rng, lo, hi):
        env = self.base.sup_on(lo, hi) + self.amplitude
        got = []
        have = 0
        streak = 0
        while have < m:
            k = max(64, int(1.25 * (m - have) * env * (hi - lo)) + 16)
            x = lo + (hi - lo) * rng.random(k)
            v = rng.random(k) * env
            acc = v <= self.pdf(x)
            idx = np.flatnonzero(acc)
            if idx.size == 0:
                streak += k
                if streak >= MAX_CONSECUTIVE_REJECTIONS:
                    raise RuntimeError("rejection sampler stalled: alternative density is malformed")
                continue
            streak = k - 1 - int(idx[-1])
            take = x[idx[: m - have]]
            got.append(take)
            have += take.size
        return np.concatenate(got)


def delta_max(base: NullDensity, partition, wave: WaveKernel, L: float, beta: float = 1.0):
    """Largest admissible perturbation size and which constraint binds.

    Returns ``(delta, binding)`` with ``binding`` in ``{"nonnegativity", "hoelder"}``.
    """
    h = partition.h
    L0 = base.L0(beta)
    if not L > L0:
        raise ValueError(f"alternative class constant L={L} must exceed L0={L0:.6g}")
    nonneg = math.sqrt(h) * c0(base, (partition.lo, partition.hi)) / wave.sup_norm
    hoelder = math.sqrt(h) * 0.5 * (1.0 - L0 / L) * h ** beta * L / wave.holder_constant(beta)
    if nonneg <= hoelder:
        return nonneg, "nonnegativity"
    return hoelder, "hoelder"


def make_alternative(base: NullDensity, partition, delta: float, signs=None,
                     wave: WaveKernel | None = None, L: float = 20.0,
                     beta: float = 1.0) -> AlternativeDensity:
    """Perturb ``base`` by signed waves on each bin of ``partition``.

    Raises:
        ValueError: if ``delta`` exceeds the admissible bound; the message names
            the violated condition.
    """
    wave = wave or sine_wave()
    if signs is None:
        signs = np.ones(partition.N)
    signs = np.asarray(signs, dtype=float)
    if signs.shape != (partition.N,) or not np.all(np.abs(signs) == 1.0):
        raise ValueError("signs must be a +-1 vector with one entry per bin")
    if delta < 0:
        raise ValueError("delta must be non-negative")
    dmax, _ = delta_max(base, partition, wave, L, beta)
    h = partition.h
    nonneg = math.sqrt(h) * c0(base, (partition.lo, partition.hi)) / wave.sup_norm
    if delta > nonneg * (1 + 1e-12):
        raise ValueError(f"delta={delta:.6g} breaks the nonnegativity condition (max {nonneg:.6g})")
    if delta > dmax * (1 + 1e-12):
        raise ValueError(f"delta={delta:.6g} breaks the Hoelder condition (max {dmax:.6g})")
    return AlternativeDensity(base, partition, float(delta), signs, wave)


def sample(d, n: int, rng: np.random.Generator) -> np.ndarray:
    return d.sample(n, rng)


def bulk_mass_integral(d, a: float, b: float) -> float:
    """Quadrature of ``d.pdf`` on ``[a, b]``; independent check for ``mass``."""
    return integrate_interval(lambda x: float(d.pdf(x)), a, b)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from ldpgof import densities as dens
from ldpgof import tuning
from ldpgof.kernels import integrate_interval, sine_wave

CATALOG = ["uniform:0,1", "uniform:-2,3", "normal", "beta:2,2", "beta:3,5", "beta:1.5,2",
           "cauchy:1", "cauchy:0.5", "pareto:1,2", "pareto:2,0.5", "exp:1", "exp:3",
           "spiky:4", "slowvary:1", "slowvary:2.5"]


def test_known_values():
    assert dens.parse_density("pareto:1,2").pdf(2.0) == pytest.approx(0.25)
    assert dens.tail_mass(dens.Exponential(1.0), (0.0, math.log(4))) == pytest.approx(0.25)
    assert dens.Spiky(4.0).cdf(0.5) == pytest.approx(0.5)
    assert dens.SlowVary(1.0).sf(0.0) == pytest.approx(1.0)
    assert dens.c0(dens.Normal(), (-1, 1)) == pytest.approx(math.exp(-0.5) / math.sqrt(2 * math.pi))


@pytest.mark.parametrize("spec", CATALOG)
def test_pdf_integrates_to_cdf_increments(spec):
    d = dens.parse_density(spec)
    lo, hi = d.quantile(0.05), d.quantile(0.9)
    q = integrate_interval(lambda x: float(d.pdf(x)), lo, hi, points=[d.mode()])
    assert float(d.mass(lo, hi)) == pytest.approx(q, rel=1e-9)
    assert float(d.cdf(hi)) + float(d.sf(hi)) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("spec", CATALOG)
@given(u=st.floats(1e-6, 1 - 1e-6))
@settings(max_examples=40, deadline=None)
def test_quantile_inverts_cdf(spec, u):
    d = dens.parse_density(spec)
    q = d.quantile(u)
    if math.isfinite(q):  # slowvary quantiles overflow for u close to 1
        assert float(d.cdf(q)) == pytest.approx(u, abs=1e-9)


@pytest.mark.parametrize("spec", CATALOG)
def test_inverse_cdf_sampler_matches_law(spec):
    d = dens.parse_density(spec)
    x = d.sample(4000, np.random.default_rng(11))
    assert stats.kstest(x, d.cdf).pvalue > 1e-3


@pytest.mark.parametrize("spec", ["normal", "beta:2,2", "beta:3,5", "cauchy:1", "cauchy:0.5",
                                  "pareto:1,2", "exp:3", "spiky:4", "slowvary:1", "slowvary:2.5"])
def test_lipschitz_constants_match_finite_differences(spec):
    d = dens.parse_density(spec)
    lo, hi = d.support
    lo = max(lo, -60.0)
    hi = min(hi, 60.0)
    x = np.linspace(lo, hi, 400001)
    x = x[(x > d.support[0]) & (x < d.support[1])]
    fd = np.max(np.abs(np.diff(d.pdf(x)) / np.diff(x)))
    assert fd <= d.lipschitz() * (1 + 1e-6)
    assert fd == pytest.approx(d.lipschitz(), rel=1e-3)


def test_holder_constants():
    assert dens.Uniform(0, 1).L0(1.0) == 0.0
    b = dens.Beta(2, 2)  # 6x(1-x): slope 6 at the ends, peak 1.5
    assert b.L0(1.0) == pytest.approx(6.0, rel=1e-9)
    assert b.L0(0.5) == pytest.approx(math.sqrt(6.0 * 1.5), rel=1e-9)
    rough = dens.Beta(1.5, 2)
    assert rough.holder_beta_max == pytest.approx(0.5)
    with pytest.raises(ValueError):
        rough.L0(1.0)
    x = np.linspace(0, 1, 3001)
    fx = rough.pdf(x)
    worst = max(float(np.max(np.abs(fx[i + 1:] - fx[i]) / (x[i + 1:] - x[i]) ** 0.5))
                for i in range(0, x.size - 1, 7))
    assert worst <= rough.L0(0.5)


@pytest.mark.parametrize("text", ["foo", "beta:0.5,2", "uniform:1,1", "pareto:1", "exp:x",
                                  "cauchy:-1", "normal:1"])
def test_parse_density_rejects_bad_input(text):
    with pytest.raises(ValueError):
        dens.parse_density(text)


def test_c0_needs_compact_interval():
    with pytest.raises(ValueError):
        dens.c0(dens.Normal(), (-math.inf, 1.0))


# ---------------------------------------------------------------------------
# alternatives


def _alt(base="uniform:0,1", B=(0.0, 1.0), h=0.05, frac=0.8, seed=0, L=20.0):
    d = dens.parse_density(base)
    part = tuning.partition(B, h)
    dmax, _ = dens.delta_max(d, part, sine_wave(), L)
    signs = np.where(np.random.default_rng(seed).random(part.N) < 0.5, -1.0, 1.0)
    return dens.make_alternative(d, part, frac * dmax, signs, L=L), dmax


def test_l1_distance_closed_form_example():
    # (4 / pi) * 0.01 * 10 * sqrt(0.05)
    part = tuning.partition((0, 1), 0.05)
    alt = dens.make_alternative(dens.Uniform(0, 1), part, 0.01)
    assert alt.l1_distance() == pytest.approx(0.028470, abs=1e-6)


@pytest.mark.parametrize("base,B", [("uniform:0,1", (0, 1)), ("normal", (-1.2, 1.2)),
                                    ("exp:1", (0, 1.5)), ("beta:2,2", (0.1, 0.9))])
def test_alternative_integrates_to_one_and_mass_is_exact(base, B):
    alt, _ = _alt(base, B, h=0.1)
    e = alt.partition.edges()
    total = dens.tail_mass(alt.base, B) + sum(
        integrate_interval(lambda x: float(alt.pdf(x)), a, b, points=[0.5 * (a + b)])
        for a, b in zip(e[:-1], e[1:]))
    assert total == pytest.approx(1.0, abs=1e-10)
    a, b = B[0] + 0.13, B[1] - 0.07
    q = integrate_interval(lambda x: float(alt.pdf(x)), a, b, points=list(e) + list(alt.partition.centers))
    assert float(alt.mass(a, b)) == pytest.approx(q, abs=1e-10)


def test_alternative_sampler_matches_law():
    alt, _ = _alt("normal", (-1.0, 1.0), h=0.25, frac=1.0)
    x = alt.sample(20000, np.random.default_rng(5))
    res = stats.kstest(x, lambda t: alt.mass(-np.inf, t))
    assert res.pvalue > 1e-3


def test_alternative_nonnegative_up_to_delta_max():
    alt, _ = _alt("exp:1", (0.0, 2.0), h=0.1, frac=1.0)
    x = np.linspace(-0.5, 2.5, 20001)
    assert np.min(alt.pdf(x)) >= -1e-12


def test_make_alternative_names_the_violated_condition():
    d = dens.Uniform(0, 1)
    wide = tuning.partition((0, 1), 0.5)  # nonnegativity binds
    dmax, which = dens.delta_max(d, wide, sine_wave(), 20.0)
    assert which == "nonnegativity"
    with pytest.raises(ValueError, match="nonnegativity"):
        dens.make_alternative(d, wide, 1.01 * dmax)
    narrow = tuning.partition((0, 1), 0.01)  # Hoelder binds
    dmax, which = dens.delta_max(d, narrow, sine_wave(), 20.0)
    assert which == "hoelder"
    with pytest.raises(ValueError, match="Hoelder"):
        dens.make_alternative(d, narrow, 1.01 * dmax)


def test_alternative_respects_hoelder_class():
    L, beta = 20.0, 1.0
    d = dens.Normal()
    part = tuning.partition((-1, 1), 0.02)
    dmax, _ = dens.delta_max(d, part, sine_wave(), L, beta)
    alt = dens.make_alternative(d, part, dmax, np.ones(part.N), L=L)
    x = np.linspace(-1.1, 1.1, 200001)
    slope = np.max(np.abs(np.diff(alt.pdf(x)) / np.diff(x)))
    assert slope <= L


def test_make_alternative_validates_signs():
    part = tuning.partition((0, 1), 0.1)
    with pytest.raises(ValueError):
        dens.make_alternative(dens.Uniform(0, 1), part, 0.01, signs=np.zeros(part.N))
    with pytest.raises(ValueError):
        dens.make_alternative(dens.Uniform(0, 1), part, -0.01)

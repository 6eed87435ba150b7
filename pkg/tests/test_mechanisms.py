import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ldpgof import densities as dens
from ldpgof import mechanisms as mech
from ldpgof import tuning
from ldpgof.kernels import boxcar
from ldpgof.mechanisms import BatchKind, PrivacyParams


class ZeroNoise:
    """Generator stub whose uniforms sit at the Laplace median, so every draw is 0."""

    def random(self, size=None):
        return np.full(size, 0.5)


@given(st.floats(1e-4, 1.0))
@settings(max_examples=100, deadline=None)
def test_privacy_params_invariants(alpha):
    p = PrivacyParams.from_alpha(alpha)
    assert p.c_alpha > 1
    assert p.c_alpha * math.expm1(alpha) == pytest.approx(math.exp(alpha) + 1, rel=1e-12)
    assert p.z_alpha > 0


def test_privacy_params_tau_and_range():
    assert PrivacyParams.from_alpha(0.5, 400).tau == pytest.approx(0.1)
    assert PrivacyParams.from_alpha(math.log(3)).c_alpha == pytest.approx(2.0)
    with pytest.raises(ValueError):
        PrivacyParams.from_alpha(0.0)


def test_kernel_channel_without_noise():
    part = tuning.partition((0.0, 1.0), 0.05)
    X = np.array([part.centers[2], 1.7])
    b = mech.ni_kernel_privatize(X, part, boxcar(), PrivacyParams.from_alpha(0.5), ZeroNoise())
    assert b.kind is BatchKind.KERNEL_MATRIX
    expected = np.zeros(part.N)
    expected[2] = 10.0
    np.testing.assert_allclose(b.values[0], expected)
    assert np.all(b.values[1] == 0.0)


def test_kernel_channel_touches_at_most_one_column():
    part = tuning.partition((0.0, 1.0), 0.1)
    X = np.random.default_rng(0).uniform(-0.2, 1.2, 500)
    b = mech.ni_kernel_privatize(X, part, boxcar(), PrivacyParams.from_alpha(0.5), ZeroNoise())
    assert np.all(np.count_nonzero(b.values, axis=1) <= 1)


def test_kernel_channel_noise_scale_and_column_means():
    # alpha = 0.5, h = 0.1, boxcar: scale 2 * 0.5 / (0.5 * 0.1) = 20
    part = tuning.partition((0.0, 1.0), 0.1)
    k = boxcar()
    p = PrivacyParams.from_alpha(0.5)
    rng = np.random.default_rng(1)
    X = rng.random(100000)
    b = mech.ni_kernel_privatize(X, part, k, p, rng)
    bins, vals = mech.kernel_rows(X, part, k)
    noise = b.values.copy()
    noise[np.arange(X.size), bins] -= vals
    assert np.var(noise[:, 0]) == pytest.approx(2 * 20.0 ** 2, rel=0.05)
    # column means estimate f0(x_j) = 1
    col = b.values.mean(axis=0)
    se = b.values.std(axis=0) / math.sqrt(X.size)
    assert np.all(np.abs(col - 1.0) <= 3 * se)


def test_tail_bits_law():
    p = PrivacyParams.from_alpha(math.log(3))  # c_alpha = 2
    rng = np.random.default_rng(2)
    out = mech.rr_tail_privatize(np.full(100000, 5.0), (0, 1), p, rng)
    assert set(np.unique(out.values)) == {-2.0, 2.0}
    assert np.mean(out.values > 0) == pytest.approx(0.75, abs=3 * math.sqrt(0.75 * 0.25 / 1e5))
    inside = mech.rr_tail_privatize(np.full(100000, 0.3), (0, 1), p, rng)
    assert np.mean(inside.values > 0) == pytest.approx(0.5, abs=3 * math.sqrt(0.25 / 1e5))


def test_tail_bits_mean_is_tail_probability():
    p = PrivacyParams.from_alpha(0.7)
    d = dens.Exponential(1.0)
    B = (0.0, math.log(4))
    rng = np.random.default_rng(3)
    Z = mech.rr_tail_privatize(d.sample(100000, rng), B, p, rng).values
    assert abs(Z.mean() - 0.25) <= 3 * p.c_alpha / math.sqrt(1e5)


def test_bin_channel_without_noise():
    part = tuning.partition((0.0, 1.5), 0.25)  # N = 3
    b = mech.int_bin_privatize(np.array([0.7]), part, PrivacyParams.from_alpha(0.5), ZeroNoise())
    np.testing.assert_array_equal(b.values, [[0.0, 1.0, 0.0]])


def test_bin_channel_column_means_are_bin_masses():
    part = tuning.partition((-1.0, 1.0), 0.25)
    d = dens.Normal()
    rng = np.random.default_rng(4)
    b = mech.int_bin_privatize(d.sample(100000, rng), part, PrivacyParams.from_alpha(0.5), rng)
    phat = mech.estimate_phat(b)
    e = part.edges()
    p = d.mass(e[:-1], e[1:])
    se = b.values.std(axis=0) / math.sqrt(1e5)
    assert np.all(np.abs(phat - p) <= 3 * se)
    assert np.var(b.values[:, 0] - (part.bin_index(0) == 0)) > 0


def test_estimate_phat_examples():
    p = PrivacyParams.from_alpha(0.5)
    b = mech.PrivatizedBatch(BatchKind.BIN_MATRIX, np.array([[0.4], [0.6]]), p)
    np.testing.assert_allclose(mech.estimate_phat(b), [0.5])
    z = mech.PrivatizedBatch(BatchKind.BIN_MATRIX, np.zeros((3, 4)), p)
    assert np.all(mech.estimate_phat(z) == 0)
    with pytest.raises(ValueError):
        mech.estimate_phat(mech.PrivatizedBatch(BatchKind.TAIL_BITS, np.zeros(3), p))


def test_clip_examples():
    assert mech.clip(0.5, 0.2) == 0.2
    assert mech.clip(-0.5, 0.2) == -0.2
    assert mech.clip(0.1, 0.2) == 0.1
    with pytest.raises(ValueError):
        mech.clip(0.1, 0.0)


@given(x=st.floats(-10, 10), y=st.floats(-10, 10), tau=st.floats(1e-3, 5))
def test_clip_is_bounded_and_1_lipschitz(x, y, tau):
    cx, cy = mech.clip(x, tau), mech.clip(y, tau)
    assert abs(cx) <= tau
    assert abs(cx - cy) <= abs(x - y) + 1e-15


def test_second_round_conditional_law():
    part = tuning.partition((0.0, 1.0), 0.25)
    p = PrivacyParams.from_alpha(math.log(3), 100)  # c_alpha = 2, tau = 1/sqrt(100 ln(3)^2)
    p0 = np.array([0.5, 0.5])
    phat = p0 + np.array([10 * p.tau, 0.0])  # clipped to tau in bin 0
    q = mech.second_round_bias(np.array([0.1, 0.9, 3.0]), part, phat, p0, p)
    np.testing.assert_allclose(0.5 * (1 + q), [0.75, 0.5, 0.5])
    rng = np.random.default_rng(5)
    bits = mech.int_second_round(np.full(100000, 0.1), part, phat, p0, p, rng)
    mag = p.c_alpha * p.tau
    assert set(np.unique(bits.values)) == {-mag, mag}
    assert np.mean(bits.values > 0) == pytest.approx(0.75, abs=3 * math.sqrt(0.1875 / 1e5))


def test_second_round_fair_when_phat_equals_p0():
    part = tuning.partition((0.0, 1.0), 0.1)
    p = PrivacyParams.from_alpha(0.5, 1000)
    p0 = np.full(part.N, 0.1)
    q = mech.second_round_bias(np.linspace(0, 1, 50), part, p0, p0, p)
    assert np.all(q == 0)


def test_second_round_depends_on_first_round_only_through_phat():
    part = tuning.partition((0.0, 1.0), 0.1)
    p = PrivacyParams.from_alpha(0.5, 1000)
    rng = np.random.default_rng(6)
    X1 = rng.random(1000)
    phat = mech.estimate_phat(mech.int_bin_privatize(X1, part, p, rng))
    p0 = np.full(part.N, 0.1)
    X2 = rng.random(200)
    law = mech.second_round_bias(X2, part, phat, p0, p)
    # a permuted first-round sample with the same published phat gives the same law
    law_perm = mech.second_round_bias(X2, part, phat.copy(), p0, p)
    np.testing.assert_array_equal(law, law_perm)
    a = mech.int_second_round(X2, part, phat, p0, p, np.random.default_rng(7))
    b = mech.int_second_round(X2, part, phat.copy(), p0, p, np.random.default_rng(7))
    np.testing.assert_array_equal(a.values, b.values)


# ---------------------------------------------------------------------------
# audits


def test_audit_rr_examples():
    p = PrivacyParams.from_alpha(math.log(3), 100)
    tail = mech.audit_rr_outputs("TAIL_BITS", p)
    assert tail["plus"] == pytest.approx(1.5, abs=1e-12)
    # the -c output is the binding one: P(-c | bin) / P(-c | tail) = (e^a + 1) / 2
    assert tail["minus"] == pytest.approx(2.0, abs=1e-12)
    assert mech.audit_rr("TAIL_BITS", p) == pytest.approx(2.0, abs=1e-12)
    assert mech.audit_rr("CLIPPED_BITS", p) == pytest.approx(3.0, abs=1e-12)


@given(st.floats(-3, 0))
@settings(max_examples=60, deadline=None)
def test_audit_rr_within_budget_on_log_grid(log10_alpha):
    alpha = 10 ** log10_alpha
    p = PrivacyParams.from_alpha(alpha, 1000)
    ea = math.exp(alpha)
    tail = mech.audit_rr_outputs("TAIL_BITS", p)
    assert tail["plus"] == pytest.approx(2 * ea / (ea + 1), abs=1e-12)
    assert tail["minus"] == pytest.approx((ea + 1) / 2, abs=1e-12)
    assert mech.audit_rr("TAIL_BITS", p) <= ea + 1e-12
    assert mech.audit_rr("CLIPPED_BITS", p) <= ea + 1e-12


def test_audit_rr_catches_a_broken_channel():
    p = PrivacyParams.from_alpha(0.5, 100)
    broken = PrivacyParams(p.alpha, 0.5 * p.c_alpha, p.z_alpha, p.tau)
    with pytest.raises(mech.PrivacyViolation):
        mech.audit_rr("CLIPPED_BITS", broken)
    with pytest.raises(ValueError):
        mech.audit_rr("KERNEL_MATRIX", p)


def test_audit_laplace_examples():
    part = tuning.partition((0.0, 1.0), 0.1)
    p = PrivacyParams.from_alpha(0.8)
    k = boxcar()
    c = part.centers[3]
    assert mech.audit_laplace(c, c, part, k, p) == 1.0
    assert mech.audit_laplace(c, 2.0, part, k, p) == pytest.approx(math.exp(0.4), rel=1e-12)
    assert mech.audit_laplace(c, part.centers[4], part, k, p) == pytest.approx(math.exp(0.8), rel=1e-12)
    assert mech.audit_laplace(c, part.centers[4], part, None, p) == pytest.approx(math.exp(0.8), rel=1e-12)


@pytest.mark.parametrize("alpha", [0.01, 0.1, 0.5, 1.0])
def test_audit_laplace_grid_sup(alpha):
    part = tuning.partition((-1.0, 2.0), 0.13)
    p = PrivacyParams.from_alpha(alpha)
    assert mech.audit_laplace_grid(part, boxcar(), p) <= math.exp(alpha) + 1e-12
    assert mech.audit_laplace_grid(part, None, p) <= math.exp(alpha) + 1e-12


# ---------------------------------------------------------------------------
# determinism and serialization


def test_same_seed_same_batch():
    part = tuning.partition((0.0, 1.0), 0.1)
    p = PrivacyParams.from_alpha(0.5)
    X = np.random.default_rng(0).random(300)
    a = mech.ni_kernel_privatize(X, part, boxcar(), p, np.random.default_rng(42))
    b = mech.ni_kernel_privatize(X, part, boxcar(), p, np.random.default_rng(42))
    assert a.values.tobytes() == b.values.tobytes()


def test_fused_moments_consume_stream_like_the_matrix():
    part = tuning.partition((0.0, 1.0), 0.1)
    p = PrivacyParams.from_alpha(0.5)
    k = boxcar()
    X = np.random.default_rng(0).random(400)
    f0 = np.ones(part.N)
    Z = mech.ni_kernel_privatize(X, part, k, p, np.random.default_rng(3)).values - f0
    sums, sq = mech.ni_kernel_moments(X, part, k, p, np.random.default_rng(3), f0)
    np.testing.assert_allclose(sums, Z.sum(axis=0), rtol=1e-9, atol=1e-8)
    np.testing.assert_allclose(sq, (Z * Z).sum(axis=0), rtol=1e-9)


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(st.lists(st.lists(finite, min_size=3, max_size=3), min_size=1, max_size=6))
@settings(max_examples=50, deadline=None)
def test_matrix_round_trips_bit_exact(rows):
    V = np.array(rows, dtype=float)
    p = PrivacyParams.from_alpha(0.5)
    b = mech.PrivatizedBatch(BatchKind.KERNEL_MATRIX, V, p)
    back = mech.read_batch_csv(io.StringIO(mech.batch_to_csv_text(b)), p)
    assert back.kind is b.kind and back.values.tobytes() == V.tobytes()
    buf = io.BytesIO()
    mech.write_batch_binary(b, buf)
    buf.seek(0)
    back = mech.read_batch_binary(buf, p)
    assert back.values.tobytes() == V.tobytes()


@given(st.lists(finite, min_size=1, max_size=20))
@settings(max_examples=50, deadline=None)
def test_vector_round_trips_bit_exact(vals):
    V = np.array(vals, dtype=float)
    p = PrivacyParams.from_alpha(0.5)
    b = mech.PrivatizedBatch(BatchKind.TAIL_BITS, V, p)
    back = mech.read_batch_csv(io.StringIO(mech.batch_to_csv_text(b)), p)
    assert back.values.tobytes() == V.tobytes()
    buf = io.BytesIO()
    mech.write_batch_binary(b, buf)
    buf.seek(0)
    assert mech.read_batch_binary(buf, p).values.tobytes() == V.tobytes()


def test_csv_header_is_checked():
    with pytest.raises(ValueError):
        mech.read_batch_csv(io.StringIO("a,b\n"), PrivacyParams.from_alpha(0.5))

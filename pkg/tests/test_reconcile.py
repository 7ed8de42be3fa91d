import math

import numpy as np
import pytest

from diqkd.reconcile import (
    TAG_BITS,
    ReconciliationError,
    alice_messages,
    binary_entropy,
    degree_profile,
    error_correct,
    qber_from_sample,
    syndrome_rows,
)


def noisy_pair(n, qber, seed):
    g = np.random.default_rng(seed)
    r = g.integers(0, 2, n, dtype=np.uint8)
    s = r ^ (g.random(n) < qber).astype(np.uint8)
    return r, s


class TestEntropy:
    def test_values(self):
        np.testing.assert_allclose(binary_entropy(0.02), 0.141441, atol=1e-6)
        np.testing.assert_allclose(binary_entropy(0.11), 0.499916, atol=1e-6)
        assert binary_entropy(0.0) == 0.0
        assert binary_entropy(0.5) == 1.0

    def test_domain(self):
        with pytest.raises(ValueError):
            binary_entropy(1.5)


class TestLeakage:
    def test_message_length(self):
        # ceil(1e5 * 1.2 * h(0.02)) = 16,973
        assert syndrome_rows(100_000, 0.02, 1.2) == 16_973
        r, s = noisy_pair(100_000, 0.02, 0)
        ec = error_correct(r, s, 0.02, 1.2, seed=0)
        assert ec.n_c == 17_037
        assert ec.messages.size == ec.n_c

    def test_zero_qber(self):
        r = np.random.default_rng(1).integers(0, 2, 5000, dtype=np.uint8)
        ec = error_correct(r, r.copy(), 0.0, seed=2)
        assert ec.n_c == TAG_BITS
        assert ec.success
        np.testing.assert_array_equal(ec.corrected, r)

    def test_full_disclosure(self):
        # f h(q) >= 1 publishes the whole key.
        r, s = noisy_pair(1000, 0.3, 3)
        ec = error_correct(r, s, 0.45, 1.2, seed=3)
        assert ec.syndrome_bits == 1000
        assert ec.success
        np.testing.assert_array_equal(ec.corrected, r)

    def test_rejects_bad_efficiency(self):
        with pytest.raises(ValueError):
            syndrome_rows(10, 0.1, 0.9)


class TestCorrection:
    def test_messages_depend_on_alice_only(self):
        r, s = noisy_pair(20_000, 0.02, 4)
        ec = error_correct(r, s, 0.02, 1.3, seed=11)
        np.testing.assert_array_equal(ec.messages, alice_messages(r, 0.02, 1.3, 11))
        _, s2 = noisy_pair(20_000, 0.03, 5)
        other = error_correct(r, s2, 0.02, 1.3, seed=11)
        np.testing.assert_array_equal(ec.messages, other.messages)

    def test_success_implies_equal_keys(self):
        for seed in range(5):
            r, s = noisy_pair(20_000, 0.02, seed)
            ec = error_correct(r, s, 0.02, 1.3, seed=seed)
            assert ec.success
            np.testing.assert_array_equal(ec.corrected, r)

    def test_failure_is_reported(self):
        # Far too few syndrome bits for this error rate.
        r, s = noisy_pair(5000, 0.1, 6)
        ec = error_correct(r, s, 0.01, 1.0, seed=6, max_iter=30)
        assert not ec.success
        assert not np.array_equal(ec.corrected, r)

    def test_reproducible(self):
        r, s = noisy_pair(10_000, 0.03, 7)
        a = error_correct(r, s, 0.03, seed=9)
        b = error_correct(r, s, 0.03, seed=9)
        np.testing.assert_array_equal(a.messages, b.messages)
        np.testing.assert_array_equal(a.corrected, b.corrected)

    def test_input_validation(self):
        r, s = noisy_pair(100, 0.02, 8)
        with pytest.raises(ReconciliationError):
            error_correct(r, s[:-1], 0.02)
        with pytest.raises(ReconciliationError):
            error_correct(r, s, 0.02, alphabet_sizes=(3, 3))
        with pytest.raises(ReconciliationError):
            error_correct(r, s, 1.5)

    def test_profile_lookup(self):
        profile = degree_profile(0.0545)
        assert math.isclose(sum(profile.values()), 1.0, abs_tol=1e-6)
        assert min(profile) == 2


class TestSampling:
    def test_sample_estimate(self):
        r, s = noisy_pair(200_000, 0.05, 9)
        est, positions = qber_from_sample(r, s, 0.05, seed=1)
        assert positions.size == 10_000
        assert np.all(np.diff(positions) > 0)
        assert abs(est - 0.05) < 5 * math.sqrt(0.05 * 0.95 / positions.size)

    def test_sample_errors(self):
        r, s = noisy_pair(10, 0.05, 10)
        with pytest.raises(ValueError):
            qber_from_sample(r, s, 0.01, seed=0)
        with pytest.raises(ValueError):
            qber_from_sample(r, s, 1.0, seed=0)


def success_count(n, qber, f, seeds):
    wins = 0
    for seed in seeds:
        r, s = noisy_pair(n, qber, 1000 + seed)
        wins += error_correct(r, s, qber, f, seed=seed).success
    return wins


@pytest.mark.slow
class TestDecodingRate:
    def test_reference_point(self):
        # |R| = 1e5, QBER 0.02, f = 1.2: at least 99 of 100 seeds.
        assert success_count(100_000, 0.02, 1.2, range(100)) >= 99

    @pytest.mark.parametrize("qber", [0.01, 0.03, 0.05])
    def test_other_error_rates(self, qber):
        r, s = noisy_pair(100_000, qber, 0)
        ec = error_correct(r, s, qber, 1.2, seed=0)
        assert ec.n_c / r.size <= 1.2 * binary_entropy(qber) + (TAG_BITS + 1) / r.size
        assert success_count(100_000, qber, 1.2, range(20)) >= 19

    def test_underestimated_qber_is_caught(self):
        fails = 0
        for seed in range(100):
            r, s = noisy_pair(10_000, 0.2, 2000 + seed)
            fails += not error_correct(r, s, 0.01, 1.2, seed=seed, max_iter=50).success
        assert fails >= 99

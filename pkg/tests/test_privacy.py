import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diqkd.bell import RandomnessBound
from diqkd.privacy import (
    HashSeed,
    apply_hash,
    encode_symbols,
    key_length,
    key_length_terms,
    lemma4_bound,
    sample_hash,
)

QM = RandomnessBound.quantum()


class TestKeyLength:
    def test_clamped_half(self):
        # 2 * 100 * log2(4) = 400 and sqrt(n) = 100
        assert key_length(10_000, 100, 100.0, 1_000, 10_000, QM) == 8_500

    def test_classical_value_gives_zero(self):
        assert key_length(10_000, 100, 2.0, 0, 10_000, QM) == 0

    def test_worked_example_exact(self):
        terms = key_length_terms(707_590, 31_623, 2.80014, 36_839, 10**6, QM)
        np.testing.assert_allclose(terms.tau_argument, 2.497189105, atol=1e-8)
        np.testing.assert_allclose(terms.tau, 0.8320435374, atol=1e-9)
        np.testing.assert_allclose(terms.entropy_per_round, 0.265269074, atol=1e-8)
        assert terms.estimation_penalty == 126_492
        assert terms.sqrt_n == 1000.0
        assert terms.n_k == 23_370

    def test_negative_estimate_is_clamped(self):
        a = key_length_terms(1000, 10, -3.0, 0, 1000, QM)
        b = key_length_terms(1000, 10, 0.0, 0, 1000, QM)
        assert a.tau_argument == b.tau_argument

    def test_empty_estimation_set(self):
        assert key_length(100, 0, 2.8, 0, 100, QM) == 0

    def test_invalid_sizes(self):
        with pytest.raises(ValueError):
            key_length(10, 20, 2.0, 0, 100, QM)

    @settings(max_examples=100, deadline=None)
    @given(
        st.integers(1_000, 10**6),
        st.floats(0.0, 0.2),
        st.floats(0.0, 4.0),
        st.floats(0.0, 4.0),
        st.integers(0, 10_000),
    )
    def test_monotone_in_estimate_and_leakage(self, m, e_frac, i1, i2, n_c):
        n = 2 * m
        e = max(1, int(e_frac * m))
        lo, hi = sorted((i1, i2))
        assert key_length(m, e, lo, n_c, n, QM) <= key_length(m, e, hi, n_c, n, QM)
        assert key_length(m, e, hi, n_c + 100, n, QM) <= key_length(m, e, hi, n_c, n, QM)
        assert key_length(m, e, hi, n_c, n, QM) <= m


class TestToeplitz:
    def test_explicit_small_product(self):
        h = HashSeed(4, 2, np.array([1, 0, 1, 1, 0], np.uint8))
        t = h.matrix()
        # T[i, j] = bits[i - j + 3]
        np.testing.assert_array_equal(t, [[1, 1, 0, 1], [0, 1, 1, 0]])
        for value in range(16):
            r = np.array([(value >> k) & 1 for k in range(4)], np.uint8)
            np.testing.assert_array_equal(apply_hash(h, r), t.astype(int) @ r % 2)

    def test_zero_output(self):
        h = sample_hash(10, 0, 1)
        assert apply_hash(h, np.ones(10, np.uint8)).size == 0

    def test_zero_input_maps_to_zero(self):
        h = sample_hash(300, 40, 5)
        assert not apply_hash(h, np.zeros(300, np.uint8)).any()

    def test_reproducible(self):
        np.testing.assert_array_equal(sample_hash(50, 7, 3).bits, sample_hash(50, 7, 3).bits)
        assert not np.array_equal(sample_hash(50, 7, 3).bits, sample_hash(50, 7, 4).bits)

    def test_fft_path_matches_dense(self):
        g = np.random.default_rng(0)
        h = sample_hash(3000, 40, 11)
        r = g.integers(0, 2, 3000, dtype=np.uint8)
        assert 3000 * 40 > 1 << 16
        np.testing.assert_array_equal(apply_hash(h, r), h.matrix().astype(int) @ r % 2)

    def test_seed_length_checked(self):
        with pytest.raises(ValueError):
            HashSeed(4, 2, np.zeros(4, np.uint8))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 200), st.integers(1, 30), st.integers(0, 2**31))
    def test_linearity(self, n_in, n_out, seed):
        g = np.random.default_rng(seed)
        h = sample_hash(n_in, n_out, seed)
        r, s = g.integers(0, 2, (2, n_in), dtype=np.uint8)
        np.testing.assert_array_equal(apply_hash(h, r ^ s), apply_hash(h, r) ^ apply_hash(h, s))


class TestLemma4Bound:
    def test_values(self):
        np.testing.assert_allclose(lemma4_bound(2.0 ** -30, 10), 2.0 ** -10, rtol=1e-12)
        assert lemma4_bound(1.0, 0) == 1.0
        np.testing.assert_allclose(lemma4_bound(2.0 ** -4, 1), math.sqrt(2.0 ** -3), atol=1e-6)

    def test_domain(self):
        with pytest.raises(ValueError):
            lemma4_bound(0.0, 1)


def test_encode_symbols():
    np.testing.assert_array_equal(encode_symbols([0, 1, 2, 3], 4), [0, 0, 1, 0, 0, 1, 1, 1])
    np.testing.assert_array_equal(encode_symbols([1, 0], 2), [1, 0])

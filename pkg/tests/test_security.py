import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diqkd import security
from diqkd.bell import (
    CHSH_SCENARIO,
    BellFunctional,
    RandomnessBound,
    chsh_functional,
    deterministic_behavior,
    noisy_singlet_behavior,
    pr_box,
)
from diqkd.devices import honest_pair, local_box
from diqkd.protocol import ProtocolParams
from diqkd.security import (
    azuma_tail,
    beta0,
    distance_terms,
    good_event_bound,
    lemma1_check,
    martingale_empirical,
    psucc_bound,
    security_report,
    term2_crossover,
    theorem_distance,
)

CHSH = chsh_functional()
B0 = 8 * math.sqrt(2)


class TestBeta0:
    def test_chsh(self):
        np.testing.assert_allclose(beta0(CHSH), 11.31371, atol=1e-5)

    def test_scaling(self):
        assert beta0(CHSH.scaled(3.0)) == pytest.approx(3 * beta0(CHSH))

    def test_zero(self):
        zero = BellFunctional(CHSH_SCENARIO, np.zeros((2, 2, 2, 2)), 0.0, 0.0)
        assert beta0(zero) == 0.0


class TestAzuma:
    def test_desk_scale_value(self):
        # m n^(-3/4) = 22.37601, divided by 128
        np.testing.assert_allclose(azuma_tail(707_590, 10**6, B0), 0.8396146928, atol=1e-9)

    def test_empty(self):
        assert azuma_tail(0, 10**6, B0) == 1.0

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0, 1e9), st.floats(0, 1e9))
    def test_monotone_in_m(self, m1, m2):
        lo, hi = sorted((m1, m2))
        assert azuma_tail(hi, 1e6, B0) <= azuma_tail(lo, 1e6, B0)

    def test_rejects_zero_scale(self):
        with pytest.raises(ValueError):
            azuma_tail(10, 10, 0.0)


class TestGoodEvent:
    def test_trivial_at_desk_scale(self):
        assert good_event_bound(707_590, 10**6, 31_623, CHSH_SCENARIO, B0) == 0.0

    def test_empty_estimation(self):
        assert good_event_bound(10**9, 10**6, 0, CHSH_SCENARIO, B0) == 0.0

    def test_large_deviation_regime(self):
        n = 10**8
        m = 50 * B0**2 * n ** 0.75
        value = good_event_bound(m, n, 100, CHSH_SCENARIO, B0)
        np.testing.assert_allclose(value, 1 - 3 * math.exp(-50) - 4.0 ** -100, rtol=1e-15)


class TestDistance:
    def test_desk_scale_vacuous(self):
        terms = distance_terms(10**6, 707_590, 31_623, CHSH_SCENARIO, B0)
        np.testing.assert_allclose(math.log2(terms.term1), -499.5, atol=1e-9)
        np.testing.assert_allclose(terms.term2, 5.037688157, atol=1e-8)
        assert terms.term3 == 0.0
        assert terms.vacuous
        assert theorem_distance(10**6, 707_590, 31_623, CHSH_SCENARIO, B0) == 2.0

    def test_vanishes_at_scale(self):
        n = 1e40
        assert theorem_distance(n, 0.7 * n, 10**6, CHSH_SCENARIO, B0) < 1e-30

    def test_psucc(self):
        assert psucc_bound(0.0) == 0.5
        assert psucc_bound(2.0) == 1.0
        assert psucc_bound(2.0 ** -38) == 0.5 + 2.0 ** -40

    def test_crossover(self):
        n = term2_crossover()
        np.testing.assert_allclose(math.log10(n), 14.9288, atol=1e-4)
        assert 6 * azuma_tail(0.7 * n * 1.001, n * 1.001, B0) <= 2.0 ** -40
        assert 6 * azuma_tail(0.7 * n * 0.99, n * 0.99, B0) > 2.0 ** -40

    def test_crossover_with_sifted_fraction(self):
        n = term2_crossover(m_over_n=security.sifted_fraction)
        np.testing.assert_allclose(math.log10(n), 14.3648, atol=1e-3)


class TestReport:
    def test_fields(self):
        report = security_report(10**6, 707_590, 31_623, CHSH, n_k=23_370, status="ok")
        assert report.vacuous
        assert report.theorem_distance == 2.0
        assert report.p_succ_bound == 1.0
        assert report.factor_gap < 1.0
        text = report.to_text()
        assert "azuma_tail = 0.83961469" in text
        assert "vacuous = true" in text


class TestLemma1:
    QM = RandomnessBound.quantum()
    NS = RandomnessBound.no_signalling()

    def test_deterministic_equality(self):
        box = deterministic_behavior((0, 0), (0, 0))
        result = lemma1_check(lambda i, zs, ts: box, 1, CHSH, self.QM)
        assert result.holds
        assert abs(result.margin) <= 1e-12

    def test_pr_box_equality(self):
        box = pr_box()
        result = lemma1_check(lambda i, zs, ts: box, 1, CHSH, self.NS)
        assert result.holds
        assert abs(result.margin) <= 1e-12

    def test_singlet_two_rounds(self):
        box = noisy_singlet_behavior(1.0)
        result = lemma1_check(lambda i, zs, ts: box, 2, CHSH, self.QM)
        assert result.holds
        assert abs(result.margin) <= 1e-12
        assert result.lhs == pytest.approx(0.25)

    def test_adaptive_strategy(self):
        # Switch to a PR box once a key round has been seen.
        def strategy(i, zs, ts):
            return pr_box() if security.KEY in zs else deterministic_behavior((1, 0), (1, 1))

        assert lemma1_check(strategy, 3, CHSH, self.NS).holds

    def test_violation_detected(self):
        # A bound claiming more randomness than the singlet has must fail.
        too_strong = RandomnessBound.tabulated([(2.0, 1.0), (2.1, 0.25)])
        box = noisy_singlet_behavior(1.0)
        result = lemma1_check(lambda i, zs, ts: box, 1, CHSH, too_strong)
        assert not result.holds
        assert result.margin == pytest.approx(-0.25)

    def test_round_limit(self):
        with pytest.raises(ValueError):
            lemma1_check(lambda i, zs, ts: pr_box(), 5, CHSH, self.NS)


class TestMartingale:
    def test_deterministic_box(self):
        params = ProtocolParams(n=1024, seed=0)
        result = martingale_empirical(local_box((0, 0), (0, 0)), params, trials=20)
        # I_bar is exactly 2 every round; only the estimate fluctuates.
        assert result.holds
        assert set(result.i_bar[~np.isnan(result.i_bar)]) == {2.0}

    def test_honest_small(self):
        params = ProtocolParams(n=4096, seed=1)
        result = martingale_empirical(honest_pair(1.0), params, trials=100)
        assert result.holds
        assert result.violation_frequency <= result.azuma_tail + 5 * result.standard_error

    def test_factory_and_copy_agree(self):
        params = ProtocolParams(n=512, seed=3)
        a = martingale_empirical(honest_pair(0.9, seed=3), params, trials=5)
        b = martingale_empirical(lambda seed: honest_pair(0.9, seed=seed), params, trials=5)
        np.testing.assert_array_equal(a.i_est, b.i_est)

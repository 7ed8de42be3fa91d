import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diqkd import bell
from diqkd.bell import (
    CHSH_SCENARIO,
    TSIRELSON,
    Behavior,
    BellScenario,
    RandomnessBound,
    check_behavior,
    chsh_functional,
    deterministic_behavior,
    evaluate_functional,
    noisy_singlet_behavior,
    pr_box,
    tau_eval,
    tau_ns,
    tau_qm,
    white_noise,
)


class TestScenario:
    def test_chsh_shape(self):
        assert CHSH_SCENARIO.shape == (2, 2, 2, 2)
        assert CHSH_SCENARIO.is_chsh

    def test_rejects_empty_alphabet(self):
        with pytest.raises(ValueError):
            BellScenario(0, 2, 2, 2)


class TestFunctional:
    def test_chsh_bounds(self):
        f = chsh_functional()
        assert f.i_cl == 2.0
        assert f.i_max == 4.0
        assert f.max_abs_coefficient == 1.0

    def test_white_noise_is_zero(self):
        assert evaluate_functional(white_noise(), chsh_functional()) == pytest.approx(0.0, abs=1e-15)

    def test_all_zero_deterministic(self):
        p = deterministic_behavior((0, 0), (0, 0))
        assert evaluate_functional(p, chsh_functional()) == pytest.approx(2.0, abs=1e-15)

    def test_ideal_singlet_reaches_tsirelson(self):
        value = evaluate_functional(noisy_singlet_behavior(1.0), chsh_functional())
        np.testing.assert_allclose(value, 2.828427, atol=1e-6)

    def test_pr_box_reaches_four(self):
        assert evaluate_functional(pr_box(), chsh_functional()) == pytest.approx(4.0)

    def test_deterministic_maximum_is_classical_bound(self):
        f = chsh_functional()
        values = [
            evaluate_functional(deterministic_behavior((a0, a1), (b0, b1)), f)
            for a0 in (0, 1)
            for a1 in (0, 1)
            for b0 in (0, 1)
            for b1 in (0, 1)
        ]
        assert len(values) == 16
        assert max(values) == 2.0

    def test_scenario_mismatch(self):
        other = Behavior(BellScenario(2, 2, 3, 2), np.full((2, 2, 3, 2), 0.25))
        with pytest.raises(ValueError):
            evaluate_functional(other, chsh_functional())

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.0, 1.0))
    def test_linearity(self, alpha, nu1, nu2):
        f = chsh_functional()
        p, q = noisy_singlet_behavior(nu1), noisy_singlet_behavior(nu2)
        mixed = evaluate_functional(p.mix(q, alpha), f)
        expected = alpha * evaluate_functional(p, f) + (1 - alpha) * evaluate_functional(q, f)
        assert abs(mixed - expected) <= 1e-12


class TestCheckBehavior:
    def test_white_noise(self):
        report = check_behavior(white_noise())
        assert report.normalized and report.no_signalling
        assert report.max_violation == 0.0

    def test_unnormalized_defect(self):
        table = np.full((2, 2, 2, 2), 0.25)
        table[0, 0, 0, 0] += 0.1
        report = check_behavior(Behavior(CHSH_SCENARIO, table))
        assert not report.normalized
        np.testing.assert_allclose(report.max_violation, 0.1, atol=1e-15)

    def test_pr_box(self):
        report = check_behavior(pr_box())
        assert report.normalized and report.no_signalling
        assert report.max_violation <= 1e-15

    def test_signalling_table_detected(self):
        # Bob copies Alice's input: normalized but signalling.
        table = np.zeros((2, 2, 2, 2))
        for x in range(2):
            for y in range(2):
                table[x, x, x, y] = 1.0
        report = check_behavior(Behavior(CHSH_SCENARIO, table))
        assert report.normalized
        assert not report.no_signalling


class TestTau:
    def test_tau_qm_anchors(self):
        assert tau_qm(TSIRELSON) == 0.5
        assert tau_qm(2.0) == 1.0
        np.testing.assert_allclose(tau_qm(2.5), 0.8307190, atol=1e-6)

    def test_tau_qm_clamps(self):
        assert tau_qm(1.0) == 1.0
        assert tau_qm(-4.0) == 1.0
        assert tau_qm(3.5) == 0.5

    def test_tau_ns_anchors(self):
        assert tau_ns(2.0) == 1.0
        assert tau_ns(4.0) == 0.5
        np.testing.assert_allclose(tau_ns(TSIRELSON), 1.5 - math.sqrt(2) / 2, atol=1e-12)

    def test_printed_form_is_not_a_probability(self):
        assert bell.tau_ns_printed(3.0) < 0

    def test_tau_eval_dispatch(self):
        assert tau_eval(RandomnessBound.quantum(), TSIRELSON) == 0.5
        assert tau_eval(RandomnessBound.no_signalling(), 3.0) == pytest.approx(0.75)

    def test_tabulated_geometric_interpolation(self):
        table = RandomnessBound.tabulated([(2.0, 1.0), (4.0, 0.5)])
        np.testing.assert_allclose(tau_eval(table, 3.0), 2 ** -0.5, atol=1e-12)
        assert tau_eval(table, 10.0) == 0.5
        assert tau_eval(table, 0.0) == 1.0

    def test_tabulated_requires_two_points(self):
        with pytest.raises(ValueError):
            RandomnessBound.tabulated([(2.0, 1.0)])

    @pytest.mark.parametrize("bound", [RandomnessBound.quantum(), RandomnessBound.no_signalling()])
    def test_classical_value_gives_one(self, bound):
        assert tau_eval(bound, chsh_functional().i_cl) == 1.0

    def test_log_tau_qm_convex(self):
        grid = np.linspace(2.0, TSIRELSON, 100)
        y = np.array([-math.log2(tau_qm(v)) for v in grid])
        assert np.min(y[2:] - 2 * y[1:-1] + y[:-2]) >= -1e-9

    @settings(max_examples=200, deadline=None)
    @given(st.floats(-5.0, 5.0), st.floats(-5.0, 5.0), st.sampled_from(["quantum", "no-signalling"]))
    def test_monotone(self, i1, i2, name):
        bound = bell.bound_by_name(name)
        lo, hi = min(i1, i2), max(i1, i2)
        assert tau_eval(bound, lo) >= tau_eval(bound, hi)
        assert 0.0 < tau_eval(bound, hi) <= 1.0

    def test_bound_names(self):
        assert bell.bound_by_name("qm").kind == bell.QUANTUM
        assert bell.bound_by_name("ns").kind == bell.NO_SIGNALLING
        with pytest.raises(ValueError):
            bell.bound_by_name("bogus")

"""Finite-size security quantities and small-scale checkers for them."""

from __future__ import annotations

import copy
import itertools
import math
from dataclasses import dataclass, fields
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .bell import BellFunctional, BellScenario, Behavior, RandomnessBound, chsh_functional, evaluate_functional

DISTANCE_CAP = 2.0


def beta0(functional: BellFunctional, scenario: BellScenario | None = None) -> float:
    """Martingale difference scale ``sqrt(8) * lambda_X * lambda_Y * max |beta|``."""
    sc = scenario if scenario is not None else functional.scenario
    return math.sqrt(8.0) * sc.lambda_x * sc.lambda_y * functional.max_abs_coefficient


def azuma_exponent(m: float, n: float, difference_bound: float) -> float:
    return m * n ** -0.75 / difference_bound**2


def azuma_tail(m: float, n: float, difference_bound: float) -> float:
    """``exp(-m n^(-3/4) / beta0^2)``."""
    if difference_bound <= 0:
        raise ValueError("the difference bound must be positive")
    if n < 1 or m < 0:
        raise ValueError("need n >= 1 and m >= 0")
    return math.exp(-azuma_exponent(m, n, difference_bound))


def _alphabet_term(scenario: BellScenario, e_size: int) -> float:
    return float((scenario.lambda_a * scenario.lambda_b) ** -float(e_size))


def good_event_bound(m, n, e_size, scenario: BellScenario, difference_bound: float) -> float:
    return max(0.0, 1.0 - 3.0 * azuma_tail(m, n, difference_bound) - _alphabet_term(scenario, e_size))


@dataclass(frozen=True)
class DistanceTerms:
    term1: float
    term2: float
    term3: float

    @property
    def raw(self) -> float:
        return self.term1 + self.term2 + self.term3

    @property
    def capped(self) -> float:
        return min(DISTANCE_CAP, self.raw)

    @property
    def vacuous(self) -> bool:
        return self.raw >= 1.0


def distance_terms(n, m, e_size, scenario: BellScenario, difference_bound: float) -> DistanceTerms:
    """The three addends of the trace-distance bound on the final key."""
    return DistanceTerms(
        2.0 ** ((1.0 - math.sqrt(n)) / 2.0),
        6.0 * azuma_tail(m, n, difference_bound) if difference_bound > 0 else 6.0,
        2.0 * _alphabet_term(scenario, e_size),
    )


def theorem_distance(n, m, e_size, scenario: BellScenario, difference_bound: float) -> float:
    """Distance to an ideal key, capped at the trivial maximum 2."""
    return distance_terms(n, m, e_size, scenario, difference_bound).capped


def psucc_bound(distance: float) -> float:
    if distance < 0:
        raise ValueError("distance must be non-negative")
    return min(1.0, 0.5 + distance / 4.0)


def term2_crossover(target_log2: float = -40.0, m_over_n: Callable[[float], float] | float = 0.7, difference_bound: float = 8 * math.sqrt(2)) -> float:
    """Smallest ``n`` with ``6 exp(-m n^(-3/4) / beta0^2) <= 2^target_log2``.

    ``m_over_n`` is either a constant sifted fraction or a function of ``n``.
    """
    need = -target_log2 * math.log(2.0) + math.log(6.0)

    def excess(log_n):
        n = math.exp(log_n)
        frac = m_over_n(n) if callable(m_over_n) else m_over_n
        return frac * n**0.25 / difference_bound**2 - need

    return math.exp(brentq(excess, math.log(16.0), math.log(1e40), xtol=1e-12))


def sifted_fraction(n: float) -> float:
    """Expected ``m / n = q^2 + (1 - q)^2`` at the default test probability."""
    q = n ** -0.125
    return q * q + (1.0 - q) ** 2


@dataclass(frozen=True)
class SecurityReport:
    n: int
    m: int
    e_size: int
    q: float
    beta0: float
    azuma_exponent: float
    azuma_tail: float
    good_event_lower_bound: float
    term1: float
    term2: float
    term3: float
    theorem_distance_raw: float
    theorem_distance: float
    vacuous: bool
    p_succ_bound: float
    n_k: int
    n_c: int
    i_est: float | None
    sifted_test_probability: float
    key_rate_factor: float
    factor_gap: float
    status: str

    def as_items(self) -> list[tuple[str, object]]:
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    def to_text(self) -> str:
        """Flat ``key = value`` block; reals use 17 significant digits."""
        lines = []
        for key, value in self.as_items():
            if isinstance(value, bool):
                text = "true" if value else "false"
            elif value is None:
                text = "none"
            elif isinstance(value, float):
                text = format(value, ".17g")
            else:
                text = str(value)
            lines.append(f"{key} = {text}")
        return "\n".join(lines) + "\n"


def security_report(
    n: int,
    m: int,
    e_size: int,
    functional: BellFunctional | None = None,
    n_k: int = 0,
    q: float | None = None,
    status: str = "",
    n_c: int = 0,
    i_est: float | None = None,
    key_terms=None,
) -> SecurityReport:
    """Evaluate every bound for one set of protocol counts.

    ``factor_gap`` compares the key-length formula's ``(n^(1/8) - 1)^2`` with
    ``Pr{U=1|U=V}^(-1) = (q^2 + (1-q)^2) / q^2`` at the actual ``q``.
    """
    functional = functional if functional is not None else chsh_functional()
    sc = functional.scenario
    q = n ** -0.125 if q is None else q
    b0 = beta0(functional)
    if b0 > 0:
        tail = azuma_tail(m, n, b0)
        exponent = azuma_exponent(m, n, b0)
        good = good_event_bound(m, n, e_size, sc, b0)
    else:
        tail, exponent, good = 1.0, 0.0, 0.0
    terms = distance_terms(n, m, e_size, sc, b0)
    p1 = q * q / (q * q + (1.0 - q) ** 2) if q > 0 else 0.0
    factor = (n**0.125 - 1.0) ** 2
    gap = factor * p1 if p1 > 0 else math.inf
    return SecurityReport(
        n=int(n),
        m=int(m),
        e_size=int(e_size),
        q=float(q),
        beta0=b0,
        azuma_exponent=exponent,
        azuma_tail=tail,
        good_event_lower_bound=good,
        term1=terms.term1,
        term2=terms.term2,
        term3=terms.term3,
        theorem_distance_raw=terms.raw,
        theorem_distance=terms.capped,
        vacuous=terms.vacuous,
        p_succ_bound=psucc_bound(terms.capped),
        n_k=int(n_k),
        n_c=int(n_c),
        i_est=i_est,
        sifted_test_probability=p1,
        key_rate_factor=factor,
        factor_gap=gap,
        status=status,
    )


# -- per-round guessing product bound -------------------------------------------

KEY = ("key",)


def round_settings(scenario: BellScenario) -> list[tuple]:
    """Per-round settings ``z``: one key setting plus every test pair ``(x, y)``."""
    return [KEY] + [("test", x, y) for x in range(scenario.lambda_x) for y in range(scenario.lambda_y)]


def round_outcomes(scenario: BellScenario, z: tuple) -> list[tuple]:
    if z == KEY:
        return [(a,) for a in range(scenario.lambda_a)]
    return [(a, b) for a in range(scenario.lambda_a) for b in range(scenario.lambda_b)]


def outcome_probability(behavior: Behavior, z: tuple, t: tuple, key_input: int = 0) -> float:
    """``P(t | z)`` for one round: Alice's marginal on key rounds, the joint on test rounds."""
    if z == KEY:
        return float(behavior.marginal_a()[t[0], key_input, 0])
    return float(behavior.table[t[0], t[1], z[1], z[2]])


@dataclass(frozen=True)
class Lemma1Result:
    holds: bool
    lhs: float
    rhs: float
    margin: float
    worst_settings: tuple
    worst_outcomes: tuple
    instances: int


def lemma1_check(
    strategy: Callable[[int, tuple, tuple], Behavior],
    m: int,
    functional: BellFunctional,
    bound: RandomnessBound,
    slack: float = 1e-12,
) -> Lemma1Result:
    """Check ``P(t^m | z^m) <= tau(I_bar)^m`` over every settings and outcome sequence.

    ``strategy(i, z_history, t_history)`` returns the behavior used in round
    ``i`` given earlier settings and outcomes.  The reported instance is the
    one with the smallest ``rhs - lhs``.
    """
    if not 1 <= m <= 4:
        raise ValueError("lemma1_check supports 1 <= m <= 4 rounds")
    sc = functional.scenario
    settings = round_settings(sc)
    worst = (math.inf, 0.0, 0.0, (), ())
    count = 0

    def walk(i, zs, ts, prob, bell_sum):
        nonlocal worst, count
        if i == m:
            count += 1
            rhs = bound(bell_sum / m) ** m
            margin = rhs - prob
            if margin < worst[0]:
                worst = (margin, prob, rhs, zs, ts)
            return
        for z in settings:
            behavior = strategy(i, zs, ts)
            value = evaluate_functional(behavior, functional)
            for t in round_outcomes(sc, z):
                walk(i + 1, zs + (z,), ts + (t,), prob * outcome_probability(behavior, z, t), bell_sum + value)

    walk(0, (), (), 1.0, 0.0)
    margin, lhs, rhs, zs, ts = worst
    return Lemma1Result(margin >= -slack, lhs, rhs, margin, zs, ts, count)


# -- empirical martingale check -------------------------------------------------


@dataclass(frozen=True)
class MartingaleResult:
    trials: int
    violations: int
    violation_frequency: float
    azuma_tail: float
    standard_error: float
    holds: bool
    i_est: np.ndarray
    i_bar: np.ndarray


def martingale_empirical(devices, params, trials: int, sigmas: float = 5.0) -> MartingaleResult:
    """Frequency of ``I_bar <= |E| I_est / (m Pr{U=1|U=V}) - n^(-1/8)`` over repeated runs.

    ``devices`` is a device pair (copied and re-seeded per trial) or a
    callable ``seed -> DevicePair``.  Trial ``k`` uses protocol seed
    ``params.seed + k``.  The check asserts the frequency stays within
    ``sigmas`` Monte Carlo standard errors of the Azuma tail, where the error
    is that of a Bernoulli variable at the tail probability.
    """
    from .protocol import NoEstimate, estimate_bell, run_measurement_phase, sift, with_seed

    if trials < 1:
        raise ValueError("need at least one trial")
    p1 = params.sifted_test_probability
    shift = params.n ** -0.125
    i_est = np.full(trials, np.nan)
    i_bar = np.full(trials, np.nan)
    violations = 0
    tails = []
    for k in range(trials):
        trial_params = with_seed(params, params.seed + k)
        if callable(devices) and not hasattr(devices, "respond"):
            dev = devices(trial_params.seed)
        else:
            dev = copy.deepcopy(devices)
            dev.seed = trial_params.seed
            dev.reset()
        iid = dev.iid_behavior
        records = run_measurement_phase(trial_params, dev, record_conditionals=iid is None)
        sifted = sift(records)
        if sifted.m == 0:
            continue
        if iid is not None:
            bar = evaluate_functional(iid, params.functional)
        else:
            bar = float(records.bell_values[sifted.rounds].mean())
        try:
            est = estimate_bell(sifted, params.functional)
        except NoEstimate:
            est = 0.0
        i_est[k], i_bar[k] = est, bar
        if bar <= sifted.e_size * est / (sifted.m * p1) - shift:
            violations += 1
        tails.append(azuma_tail(sifted.m, params.n, beta0(params.functional)))
    tail = float(np.mean(tails)) if tails else 1.0
    freq = violations / trials
    se = math.sqrt(max(tail * (1.0 - tail), 1.0 / trials) / trials)
    return MartingaleResult(trials, violations, freq, tail, se, freq <= tail + sigmas * se, i_est, i_bar)


def product_settings(scenario: BellScenario, m: int):
    return itertools.product(round_settings(scenario), repeat=m)

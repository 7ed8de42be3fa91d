"""Cross-checks between closed forms and the brute-force oracles.

Each check returns a :class:`CheckResult`; the ``verify`` command and the
acceptance tests both run them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import rng
from .bell import (
    CHSH_SCENARIO,
    TSIRELSON,
    Behavior,
    RandomnessBound,
    chsh_functional,
    deterministic_behavior,
    evaluate_functional,
    noisy_singlet_behavior,
    pr_box,
    tau_ns,
    tau_ns_printed,
    tau_qm,
)
from .oracles import (
    ToeplitzFamily,
    all_vertices_no_signalling,
    classical_bound_by_enumeration,
    enumerate_ns_vertices,
    exhaustive_hash_distance,
    ns_guessing_envelope,
)
from .security import lemma1_check


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def check_vertices() -> CheckResult:
    vs = enumerate_ns_vertices(CHSH_SCENARIO)
    tables = vs.tables().reshape(len(vs), -1)
    distinct = len({t.tobytes() for t in tables}) == len(vs)
    deterministic = int(sum(np.all(np.isin(t, (0.0, 1.0))) for t in tables))
    ok = len(vs) == 24 and distinct and deterministic == 16 and all_vertices_no_signalling(vs)
    return CheckResult("ns-vertices", ok, f"{len(vs)} vertices, {deterministic} deterministic, distinct={distinct}")


def check_classical_bound() -> CheckResult:
    f = chsh_functional()
    value = classical_bound_by_enumeration(f)
    return CheckResult("classical-bound", value == f.i_cl, f"enumerated {value:g}, stored {f.i_cl:g}")


def check_tau_ns_envelope(variant: str = "closed-form", points: int = 50, tol: float = 1e-9) -> CheckResult:
    """Compare a no-signalling tau formula with the vertex envelope on ``[2, 4]``."""
    formulas: dict[str, Callable[[float], float]] = {"closed-form": tau_ns, "paper-literal": tau_ns_printed}
    if variant not in formulas:
        raise ValueError(f"unknown tau-ns variant {variant!r}")
    tau = formulas[variant]
    f = chsh_functional()
    worst = 0.0
    for value in np.linspace(2.0, 4.0, points):
        for a in range(2):
            for x in range(2):
                worst = max(worst, abs(ns_guessing_envelope(f, a, x, float(value)) - tau(float(value))))
    return CheckResult(f"tau-ns-envelope[{variant}]", worst <= tol, f"max deviation {worst:.3e} over {points} points x 4 (a,x)")


def lemma4_instances(count: int = 100, seed: int = 0):
    """Random ``(joint, input_bits, output_bits)`` cases small enough for exact enumeration.

    The first three are fixed: uniform 4-bit ``R`` with constant ``E``, a
    point mass, and uniform 6-bit ``R`` with ``E`` its first bit.
    """
    cases = []
    uniform4 = np.full((16, 1), 1 / 16)
    cases.append((uniform4, 4, 1))
    point = np.zeros((8, 1))
    point[3, 0] = 1.0
    cases.append((point, 3, 0))
    first_bit = np.zeros((64, 2))
    first_bit[np.arange(64), np.arange(64) & 1] = 1 / 64
    cases.append((first_bit, 6, 2))
    gen = rng.generator(seed, "lemma4-instances")
    while len(cases) < count:
        n_out = int(gen.integers(0, 7))
        # Seed length L + n - 1 <= 15 and work about 2^(2L + n) kept modest.
        max_l = min(10, 16 - max(n_out, 1), (20 - n_out) // 2)
        bits = int(gen.integers(1, max_l + 1))
        e_values = int(gen.integers(1, 7))
        shape = gen.integers(0, 3)
        if shape == 0:
            joint = gen.dirichlet(np.full((1 << bits) * e_values, 0.3))
        elif shape == 1:
            joint = gen.dirichlet(np.full((1 << bits) * e_values, 5.0))
        else:
            joint = np.zeros((1 << bits) * e_values)
            support = gen.choice(joint.size, size=int(gen.integers(1, joint.size + 1)), replace=False)
            joint[support] = gen.random(support.size)
            joint /= joint.sum()
        cases.append((joint.reshape(1 << bits, e_values), bits, n_out))
    return cases


def check_lemma4(count: int = 100, seed: int = 0, slack: float = 1e-12) -> CheckResult:
    worst = -math.inf
    n_out_seen = set()
    for joint, bits, n_out in lemma4_instances(count, seed):
        res = exhaustive_hash_distance(joint, ToeplitzFamily(bits, n_out), n_out)
        worst = max(worst, res.distance - res.bound)
        n_out_seen.add(n_out)
    ok = worst <= slack
    return CheckResult("lemma4-exhaustive", ok, f"{count} instances, output lengths {sorted(n_out_seen)}, max(distance - bound) = {worst:.3e}")


def collision_frequency(r: np.ndarray, r_prime: np.ndarray, n_out: int, samples: int, gen: np.random.Generator) -> float:
    """Fraction of sampled Toeplitz seeds with ``F(r) = F(r')``."""
    d = (np.asarray(r) ^ np.asarray(r_prime)).astype(np.float64)
    L = d.size
    seeds = gen.integers(0, 2, size=(samples, L + n_out - 1), dtype=np.uint8).astype(np.float64)
    j = np.arange(L)
    equal = np.ones(samples, bool)
    for i in range(n_out):
        equal &= (np.rint(seeds[:, i - j + L - 1] @ d).astype(np.int64) & 1) == 0
    return float(equal.mean())


def check_two_universality(pairs: int = 100, samples: int = 10**5, input_bits: int = 20, n_out: int = 8, seed: int = 0, sigmas: float = 5.0) -> CheckResult:
    gen = rng.generator(seed, "two-universality")
    p = 2.0**-n_out
    sigma = math.sqrt(p * (1 - p) / samples)
    worst = -math.inf
    for _ in range(pairs):
        r = gen.integers(0, 2, input_bits, dtype=np.uint8)
        r2 = r.copy()
        flips = gen.random(input_bits) < 0.5
        flips[int(gen.integers(0, input_bits))] = True
        r2 ^= flips.astype(np.uint8)
        freq = collision_frequency(r, r2, n_out, samples, gen)
        worst = max(worst, (freq - p) / sigma)
    ok = worst <= sigmas
    return CheckResult("two-universality", ok, f"{pairs} pairs x {samples} seeds, worst excess {worst:.2f} sigma (limit {sigmas:g})")


def random_ns_strategy(gen: np.random.Generator) -> Callable:
    """Two-round no-signalling strategy whose round-2 mixture depends on round 1."""
    vertices = enumerate_ns_vertices(CHSH_SCENARIO).tables()
    concentration = float(gen.choice([0.1, 0.5, 2.0]))

    def mixture():
        w = gen.dirichlet(np.full(len(vertices), concentration))
        return Behavior(CHSH_SCENARIO, np.tensordot(w, vertices, axes=1))

    first = mixture()
    second: dict = {}

    def strategy(i, zs, ts):
        if i == 0:
            return first
        key = (zs, ts)
        if key not in second:
            second[key] = mixture()
        return second[key]

    return strategy


def lemma1_witnesses():
    """Name, strategy, rounds and bound for the three equality cases."""
    qm, ns = RandomnessBound.quantum(), RandomnessBound.no_signalling()
    local = deterministic_behavior((0, 0), (0, 0))
    ideal = noisy_singlet_behavior(1.0)
    box = pr_box()
    return [
        ("deterministic box, one round, quantum tau", lambda i, z, t: local, 1, qm),
        ("PR box, one round, no-signalling tau", lambda i, z, t: box, 1, ns),
        ("ideal quantum i.i.d., two rounds, quantum tau", lambda i, z, t: ideal, 2, qm),
    ]


def check_lemma1(strategies: int = 1000, seed: int = 0, tol: float = 1e-12) -> CheckResult:
    f = chsh_functional()
    ns = RandomnessBound.no_signalling()
    gen = rng.generator(seed, "lemma1-strategies")
    violations = 0
    worst = math.inf
    # Build all strategies first so the draw order does not depend on the walk.
    built = [random_ns_strategy(gen) for _ in range(strategies)]
    for strategy in built:
        res = lemma1_check(strategy, 2, f, ns)
        violations += int(not res.holds)
        worst = min(worst, res.margin)
    witness_gaps = []
    for _, strategy, m, bound in lemma1_witnesses():
        res = lemma1_check(strategy, m, f, bound)
        witness_gaps.append(abs(res.margin))
        violations += int(not res.holds)
    tight = max(witness_gaps) <= tol
    ok = violations == 0 and tight
    return CheckResult(
        "lemma1",
        ok,
        f"{strategies} random strategies, {violations} violations, min margin {worst:.3e}, witness equality gaps {max(witness_gaps):.1e}",
    )


def check_tau_ordering(points: int = 200) -> CheckResult:
    grid = np.linspace(2.0, TSIRELSON, points)
    ok = all(tau_qm(float(v)) <= tau_ns(float(v)) + 1e-15 for v in grid)
    return CheckResult("tau-ordering", ok, f"tau_qm <= tau_ns at {points} points on [2, 2 sqrt 2]")


def check_chsh_values() -> CheckResult:
    f = chsh_functional()
    values = (evaluate_functional(pr_box(), f), evaluate_functional(noisy_singlet_behavior(1.0), f))
    ok = abs(values[0] - 4.0) < 1e-12 and abs(values[1] - TSIRELSON) < 1e-12
    return CheckResult("chsh-values", ok, f"PR box {values[0]:.12g}, ideal singlet {values[1]:.12g}")


def run_all(seed: int = 0, trials: int = 10**5, tau_ns_variant: str = "closed-form") -> list[CheckResult]:
    return [
        check_vertices(),
        check_classical_bound(),
        check_chsh_values(),
        check_tau_ordering(),
        check_tau_ns_envelope(tau_ns_variant),
        check_lemma4(seed=seed),
        check_two_universality(samples=trials, seed=seed),
        check_lemma1(seed=seed),
    ]

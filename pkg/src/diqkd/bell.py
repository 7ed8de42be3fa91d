"""Bell scenarios, behaviors, Bell functionals and randomness bounds.

A behavior is stored as a dense array indexed ``[a, b, x, y]``.  Bell
functionals share that layout for their coefficients, so evaluating one is a
single contraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

TSIRELSON = 2.0 * math.sqrt(2.0)
BEHAVIOR_TOL = 1e-12

QUANTUM = "quantum-CHSH"
NO_SIGNALLING = "no-signalling-CHSH"
TABULATED = "tabulated"


class ScenarioMismatch(ValueError):
    pass


@dataclass(frozen=True)
class BellScenario:
    """Alphabet sizes of the outputs ``A, B`` and inputs ``X, Y``."""

    lambda_a: int = 2
    lambda_b: int = 2
    lambda_x: int = 2
    lambda_y: int = 2

    def __post_init__(self):
        for name in ("lambda_a", "lambda_b", "lambda_x", "lambda_y"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return (self.lambda_a, self.lambda_b, self.lambda_x, self.lambda_y)

    @property
    def is_chsh(self) -> bool:
        return self.shape == (2, 2, 2, 2)


CHSH_SCENARIO = BellScenario(2, 2, 2, 2)


@dataclass(frozen=True, eq=False)
class Behavior:
    """Conditional distribution ``P(a, b | x, y)``.

    Construction only checks the shape and non-negativity; normalization and
    no-signalling are diagnosed by :func:`check_behavior`.
    """

    scenario: BellScenario
    table: np.ndarray

    def __post_init__(self):
        table = np.array(self.table, dtype=float)
        if table.shape != self.scenario.shape:
            raise ValueError(f"table shape {table.shape} does not match scenario {self.scenario.shape}")
        if np.any(table < 0):
            raise ValueError("behavior entries must be non-negative")
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    def marginal_a(self) -> np.ndarray:
        """``P(a | x, y)`` with shape ``(lambda_a, lambda_x, lambda_y)``."""
        return self.table.sum(axis=1)

    def marginal_b(self) -> np.ndarray:
        """``P(b | x, y)`` with shape ``(lambda_b, lambda_x, lambda_y)``."""
        return self.table.sum(axis=0)

    def mix(self, other: "Behavior", weight: float) -> "Behavior":
        """Return ``weight * self + (1 - weight) * other``."""
        if other.scenario != self.scenario:
            raise ScenarioMismatch("cannot mix behaviors of different scenarios")
        return Behavior(self.scenario, weight * self.table + (1.0 - weight) * other.table)


@dataclass(frozen=True, eq=False)
class BellFunctional:
    scenario: BellScenario
    beta: np.ndarray
    i_cl: float
    i_max: float
    name: str = ""

    def __post_init__(self):
        beta = np.array(self.beta, dtype=float)
        if beta.shape != self.scenario.shape:
            raise ValueError(f"coefficient shape {beta.shape} does not match scenario {self.scenario.shape}")
        if self.i_cl > self.i_max:
            raise ValueError("classical bound exceeds the no-signalling maximum")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)

    def scaled(self, factor: float) -> "BellFunctional":
        if factor < 0:
            raise ValueError("only non-negative rescaling preserves the classical bound")
        return BellFunctional(self.scenario, factor * self.beta, factor * self.i_cl, factor * self.i_max, self.name)

    @property
    def max_abs_coefficient(self) -> float:
        return float(np.max(np.abs(self.beta))) if self.beta.size else 0.0


def chsh_functional() -> BellFunctional:
    """CHSH with ``beta(a,b,x,y) = (-1)^(a xor b xor x*y)``."""
    a, b, x, y = np.indices(CHSH_SCENARIO.shape)
    beta = (-1.0) ** (a ^ b ^ (x & y))
    return BellFunctional(CHSH_SCENARIO, beta, i_cl=2.0, i_max=4.0, name="CHSH")


# -- standard behaviors -------------------------------------------------------


def white_noise(scenario: BellScenario = CHSH_SCENARIO) -> Behavior:
    table = np.full(scenario.shape, 1.0 / (scenario.lambda_a * scenario.lambda_b))
    return Behavior(scenario, table)


def deterministic_behavior(alice, bob, scenario: BellScenario = CHSH_SCENARIO) -> Behavior:
    """Local deterministic box with ``a = alice(x)`` and ``b = bob(y)``.

    ``alice`` and ``bob`` may be callables or sequences indexed by the input.
    """
    f = alice if callable(alice) else (lambda x, t=tuple(alice): t[x])
    g = bob if callable(bob) else (lambda y, t=tuple(bob): t[y])
    table = np.zeros(scenario.shape)
    for x in range(scenario.lambda_x):
        for y in range(scenario.lambda_y):
            table[f(x), g(y), x, y] = 1.0
    return Behavior(scenario, table)


def pr_box(flip_x: int = 0, flip_y: int = 0, flip: int = 0) -> Behavior:
    """PR box variant with ``a xor b = x*y xor flip_x*x xor flip_y*y xor flip``."""
    table = np.zeros(CHSH_SCENARIO.shape)
    for x in range(2):
        for y in range(2):
            for a in range(2):
                b = a ^ (x & y) ^ (flip_x & x) ^ (flip_y & y) ^ flip
                table[a, b, x, y] = 0.5
    return Behavior(CHSH_SCENARIO, table)


def noisy_singlet_behavior(visibility: float) -> Behavior:
    """CHSH-optimal statistics of the visibility-``nu`` maximally entangled state."""
    a, b, x, y = np.indices(CHSH_SCENARIO.shape)
    sign = (-1.0) ** (a ^ b ^ (x & y))
    return Behavior(CHSH_SCENARIO, 0.25 * (1.0 + visibility * sign / math.sqrt(2.0)))


# -- operations ---------------------------------------------------------------


def evaluate_functional(behavior: Behavior, functional: BellFunctional) -> float:
    """Bell value ``sum beta(a,b,x,y) P(a,b|x,y)``."""
    if behavior.scenario != functional.scenario:
        raise ScenarioMismatch(
            f"behavior scenario {behavior.scenario} differs from functional scenario {functional.scenario}"
        )
    return float(np.einsum("abxy,abxy->", functional.beta, behavior.table))


@dataclass(frozen=True)
class BehaviorReport:
    normalized: bool
    no_signalling: bool
    max_violation: float
    normalization_violation: float = 0.0
    signalling_violation: float = 0.0


def check_behavior(behavior: Behavior, tol: float = BEHAVIOR_TOL) -> BehaviorReport:
    """Largest violations of normalization and of the no-signalling equalities."""
    t = behavior.table
    norm = float(np.max(np.abs(t.sum(axis=(0, 1)) - 1.0)))
    pa = t.sum(axis=1)  # a, x, y
    pb = t.sum(axis=0)  # b, x, y
    sig_a = float(np.max(np.abs(pa - pa[:, :, :1]))) if pa.size else 0.0
    sig_b = float(np.max(np.abs(pb - pb[:, :1, :]))) if pb.size else 0.0
    sig = max(sig_a, sig_b)
    return BehaviorReport(
        normalized=norm <= tol,
        no_signalling=sig <= tol,
        max_violation=max(norm, sig),
        normalization_violation=norm,
        signalling_violation=sig,
    )


def tau_qm(value: float) -> float:
    """Quantum guessing-probability bound for CHSH, clamped outside ``[2, 2*sqrt(2)]``."""
    if value <= 2.0:
        return 1.0
    if value >= TSIRELSON:
        return 0.5
    return min(1.0, 0.5 * (1.0 + math.sqrt(max(0.0, 2.0 - value * value / 4.0))))


def tau_ns(value: float) -> float:
    """No-signalling guessing-probability bound for CHSH."""
    if value <= 2.0:
        return 1.0
    if value >= 4.0:
        return 0.5
    return 1.5 - value / 4.0


def tau_ns_printed(value: float) -> float:
    """The printed closed form ``1/4 - I/4``.

    Non-normative: it is negative for ``I > 1`` and exists only so the
    verification suite can show that it disagrees with the vertex envelope.
    """
    return 0.25 - value / 4.0


@dataclass(frozen=True)
class RandomnessBound:
    """A non-increasing bound ``tau(I)`` on any output's guessing probability.

    ``kind`` is one of :data:`QUANTUM`, :data:`NO_SIGNALLING` or
    :data:`TABULATED`; the tabulated kind carries ``(I, tau)`` breakpoints.
    """

    kind: str
    breakpoints: tuple[tuple[float, float], ...] = field(default=())

    def __post_init__(self):
        if self.kind not in (QUANTUM, NO_SIGNALLING, TABULATED):
            raise ValueError(f"unknown randomness bound kind {self.kind!r}")
        if self.kind == TABULATED:
            points = tuple(sorted((float(i), float(t)) for i, t in self.breakpoints))
            if len(points) < 2:
                raise ValueError("a tabulated bound needs at least two breakpoints")
            values = [t for _, t in points]
            if any(not 0.0 < t <= 1.0 for t in values):
                raise ValueError("tabulated tau values must lie in (0, 1]")
            if any(t2 > t1 for t1, t2 in zip(values, values[1:])):
                raise ValueError("tabulated tau must be non-increasing")
            object.__setattr__(self, "breakpoints", points)

    @classmethod
    def quantum(cls) -> "RandomnessBound":
        return cls(QUANTUM)

    @classmethod
    def no_signalling(cls) -> "RandomnessBound":
        return cls(NO_SIGNALLING)

    @classmethod
    def tabulated(cls, points: Sequence[tuple[float, float]]) -> "RandomnessBound":
        return cls(TABULATED, tuple(points))

    @property
    def tau_min(self) -> float:
        if self.kind == TABULATED:
            return self.breakpoints[-1][1]
        return 0.5

    def __call__(self, value: float) -> float:
        return tau_eval(self, value)


def tau_eval(bound: RandomnessBound, value: float) -> float:
    """Evaluate ``bound`` at Bell value ``value``.

    Tabulated bounds are interpolated linearly in ``-log2 tau``, which keeps
    the interpolant log-convex, and clamp to the endpoint values outside the
    breakpoint range.
    """
    if bound.kind == QUANTUM:
        return tau_qm(value)
    if bound.kind == NO_SIGNALLING:
        return tau_ns(value)
    if len(bound.breakpoints) < 2:
        raise ValueError("empty randomness-bound table")
    xs = np.array([p[0] for p in bound.breakpoints])
    ys = -np.log2([p[1] for p in bound.breakpoints])
    return float(2.0 ** -np.interp(value, xs, ys))


def bound_by_name(name: str) -> RandomnessBound:
    aliases = {
        "quantum": QUANTUM,
        "qm": QUANTUM,
        QUANTUM: QUANTUM,
        "no-signalling": NO_SIGNALLING,
        "ns": NO_SIGNALLING,
        NO_SIGNALLING: NO_SIGNALLING,
    }
    try:
        return RandomnessBound(aliases[name])
    except KeyError:
        raise ValueError(f"unknown bound {name!r}; expected quantum or no-signalling") from None

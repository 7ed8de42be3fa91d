"""Simulated measurement devices.

Devices are defined by their output statistics, not by quantum states.  The
honest pair is a referee that sees both inputs and samples the joint outcome
from the noisy-singlet correlations; security code never looks inside.

Every device answers ``respond(round_index, x, y)`` where ``x`` and ``y`` are
the *device settings*.  Key rounds use the settings in ``key_inputs``; for the
honest pair in aligned mode Bob's key setting is an extra setting ``2``
aligned with Alice's setting ``0``.

Per-round randomness is ``rng.round_uniforms(seed, "device", j)`` for round
``j``, so responses do not depend on how rounds are batched.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from . import rng
from .bell import CHSH_SCENARIO, BellScenario, Behavior, noisy_singlet_behavior, pr_box

ALIGNED = "aligned-extra-setting"
REUSE = "reuse-test-setting-0"

# Measurement angles in the x-z plane: Alice {0, pi/2}, Bob {pi/4, -pi/4, 0}.
_ALICE_ANGLES = (0.0, math.pi / 2)
_BOB_ANGLES = (math.pi / 4, -math.pi / 4, 0.0)


class DevicePair:
    """Base class: one response per round, in increasing round order."""

    scenario: BellScenario = CHSH_SCENARIO
    key_inputs: tuple[int, int] = (0, 0)

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self._last_round = -1

    def _advance(self, round_index: int):
        if round_index <= self._last_round:
            raise RuntimeError(f"round {round_index} requested after round {self._last_round}")
        self._last_round = round_index

    def respond(self, round_index: int, x: int, y: int) -> tuple[int, int]:
        raise NotImplementedError

    def respond_batch(self, rounds: np.ndarray, x: np.ndarray, y: np.ndarray):
        """Responses for many rounds; the default falls back to ``respond``."""
        a = np.empty(len(rounds), np.int64)
        b = np.empty(len(rounds), np.int64)
        for k, (j, xj, yj) in enumerate(zip(rounds, x, y)):
            a[k], b[k] = self.respond(int(j), int(xj), int(yj))
        return a, b

    def conditional_behavior(self, round_index: int) -> Behavior | None:
        """Behavior the device will use in ``round_index`` given its history so far.

        ``None`` means the device does not expose it.
        """
        return None

    @property
    def iid_behavior(self) -> Behavior | None:
        """Per-round behavior for devices that are i.i.d. across rounds."""
        return None

    def reset(self):
        self._last_round = -1


def _correlator(visibility: float, x, y):
    return visibility * np.cos(np.take(_ALICE_ANGLES, x) - np.take(_BOB_ANGLES, y))


def _sample_correlated(u: np.ndarray, corr: np.ndarray):
    """Uniform marginals with ``P(a = b) = (1 + corr) / 2`` from one uniform per round."""
    p_equal = 0.5 * (1.0 + corr)
    equal = u < p_equal
    # Rescale the leftover uniform to pick Alice's bit.
    rest = np.where(equal, u / np.maximum(p_equal, 1e-300), (u - p_equal) / np.maximum(1.0 - p_equal, 1e-300))
    a = (rest >= 0.5).astype(np.int64)
    b = np.where(equal, a, 1 - a)
    return a, b


class HonestPair(DevicePair):
    """Noisy maximally entangled pair measured with CHSH-optimal settings."""

    def __init__(self, visibility: float, seed: int = 0, key_setting_mode: str = ALIGNED):
        super().__init__(seed)
        if not 0.0 <= visibility <= 1.0:
            raise ValueError("visibility must lie in [0, 1]")
        if key_setting_mode not in (ALIGNED, REUSE):
            raise ValueError(f"unknown key setting mode {key_setting_mode!r}")
        self.visibility = float(visibility)
        self.key_setting_mode = key_setting_mode
        self.key_inputs = (0, 2) if key_setting_mode == ALIGNED else (0, 0)
        self._behavior = noisy_singlet_behavior(self.visibility)

    @property
    def iid_behavior(self) -> Behavior:
        return self._behavior

    def conditional_behavior(self, round_index: int) -> Behavior:
        return self._behavior

    @property
    def key_qber(self) -> float:
        x, y = self.key_inputs
        return 0.5 * (1.0 - float(_correlator(self.visibility, x, y)))

    def respond_batch(self, rounds, x, y):
        rounds = np.asarray(rounds)
        if rounds.size:
            if rounds[0] <= self._last_round or np.any(np.diff(rounds) <= 0):
                raise RuntimeError("rounds must be strictly increasing")
            self._last_round = int(rounds[-1])
        u = rng.round_uniforms(self.seed, "device", rounds)
        return _sample_correlated(u, _correlator(self.visibility, np.asarray(x), np.asarray(y)))

    def respond(self, round_index, x, y):
        a, b = self.respond_batch(np.array([round_index]), np.array([x]), np.array([y]))
        return int(a[0]), int(b[0])


def honest_pair(visibility: float, seed: int = 0, key_setting_mode: str = ALIGNED) -> HonestPair:
    return HonestPair(visibility, seed, key_setting_mode)


class DeterministicPair(DevicePair):
    """Stateless responses ``(a, b) = strategy(x, y)``."""

    def __init__(self, strategy: Callable[[int, int], tuple[int, int]], seed: int = 0):
        super().__init__(seed)
        self.strategy = strategy
        table = np.zeros(CHSH_SCENARIO.shape)
        for x in range(2):
            for y in range(2):
                a, b = strategy(x, y)
                table[a, b, x, y] = 1.0
        self._behavior = Behavior(CHSH_SCENARIO, table)

    @property
    def iid_behavior(self) -> Behavior:
        return self._behavior

    def conditional_behavior(self, round_index):
        return self._behavior

    def respond(self, round_index, x, y):
        self._advance(round_index)
        a, b = self.strategy(x, y)
        return int(a), int(b)

    def respond_batch(self, rounds, x, y):
        rounds = np.asarray(rounds)
        if rounds.size:
            if rounds[0] <= self._last_round or np.any(np.diff(rounds) <= 0):
                raise RuntimeError("rounds must be strictly increasing")
            self._last_round = int(rounds[-1])
        lut = np.array([[self.strategy(xi, yi) for yi in range(2)] for xi in range(2)], dtype=np.int64)
        out = lut[np.asarray(x), np.asarray(y)]
        return out[:, 0], out[:, 1]


def deterministic_pair(strategy: Callable[[int, int], tuple[int, int]], seed: int = 0) -> DeterministicPair:
    return DeterministicPair(strategy, seed)


def local_box(alice: Sequence[int], bob: Sequence[int]) -> DeterministicPair:
    """Deterministic pair with ``a = alice[x]`` and ``b = bob[y]``."""
    return DeterministicPair(lambda x, y: (alice[x], bob[y]))


class MemoryPair(DevicePair):
    """Devices whose responses may depend on the whole history.

    ``program(round_index, history, x, y, generator) -> (a, b)`` where
    ``history`` is the list of past ``(round_index, x, y, a, b)`` tuples.
    ``conditional(round_index, history) -> Behavior`` optionally exposes the
    behavior the program will follow in the next round.
    """

    def __init__(self, program, seed: int = 0, conditional=None, key_inputs=(0, 0)):
        super().__init__(seed)
        self.program = program
        self.conditional = conditional
        self.key_inputs = tuple(key_inputs)
        self.history: list[tuple[int, int, int, int, int]] = []

    def respond(self, round_index, x, y):
        self._advance(round_index)
        gen = rng.generator(self.seed, "memory-device", round_index)
        a, b = self.program(round_index, self.history, x, y, gen)
        self.history.append((round_index, x, y, int(a), int(b)))
        return int(a), int(b)

    def conditional_behavior(self, round_index):
        if self.conditional is None:
            return None
        return self.conditional(round_index, self.history)

    def reset(self):
        super().reset()
        self.history = []


def memory_pair(program, seed: int = 0, conditional=None, key_inputs=(0, 0)) -> MemoryPair:
    return MemoryPair(program, seed, conditional, key_inputs)


def pr_program(round_index, history, x, y, gen):
    a = int(gen.integers(0, 2))
    return a, a ^ (x & y)


def pr_pair(seed: int = 0) -> MemoryPair:
    """PR box realised by the referee: ``a`` uniform, ``b = a xor x*y``."""
    box = pr_box()
    return MemoryPair(pr_program, seed, conditional=lambda j, hist: box)


def honest_program(visibility: float, key_setting_mode: str = ALIGNED):
    """History-ignoring program with the honest pair's statistics."""
    key_inputs = (0, 2) if key_setting_mode == ALIGNED else (0, 0)

    def program(round_index, history, x, y, gen):
        a, b = _sample_correlated(np.array([gen.random()]), _correlator(visibility, np.array([x]), np.array([y])))
        return int(a[0]), int(b[0])

    return program, key_inputs


def device_from_config(kind: str, visibility: float = 1.0, seed: int = 0, key_setting_mode: str = ALIGNED) -> DevicePair:
    """Build a device from the CLI configuration block."""
    if kind == "honest":
        return honest_pair(visibility, seed, key_setting_mode)
    if kind == "deterministic":
        return local_box((0, 0), (0, 0))
    if kind == "pr":
        return pr_pair(seed)
    raise ValueError(f"unknown device kind {kind!r}; expected honest, deterministic or pr")


"""Privacy amplification: the key-length rule and Toeplitz hashing."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from . import rng
from .bell import CHSH_SCENARIO, BellScenario, RandomnessBound, tau_eval


@dataclass(frozen=True)
class KeyLengthTerms:
    """Intermediate quantities of the key-length formula."""

    tau_argument: float
    tau: float
    entropy_per_round: float
    raw_entropy: float
    ec_leakage: int
    estimation_penalty: float
    sqrt_n: float
    bracket: float
    n_k: int


def key_length_terms(
    m: int,
    e_size: int,
    i_est: float,
    n_c: int,
    n: int,
    bound: RandomnessBound,
    scenario: BellScenario = CHSH_SCENARIO,
) -> KeyLengthTerms:
    """Evaluate the key-length rule and keep every intermediate term.

    ``i_est`` below zero is clamped to zero before it enters the argument of
    ``tau`` (the scaling factor is only conservative for non-negative values).
    """
    if not 0 <= e_size <= m <= n:
        raise ValueError(f"need 0 <= e_size <= m <= n, got e_size={e_size}, m={m}, n={n}")
    if n_c < 0:
        raise ValueError("n_c must be non-negative")
    if n < 1:
        raise ValueError("n must be positive")
    sqrt_n = math.sqrt(n)
    penalty = 2.0 * e_size * math.log2(scenario.lambda_a * scenario.lambda_b)
    if m == 0 or e_size == 0:
        return KeyLengthTerms(math.nan, 1.0, 0.0, 0.0, n_c, penalty, sqrt_n, -math.inf, 0)
    n8 = n ** 0.125
    argument = (e_size / m) * (n8 - 1.0) ** 2 * max(i_est, 0.0) - 1.0 / n8
    tau = tau_eval(bound, argument)
    per_round = -math.log2(tau)
    raw = m * per_round
    bracket = raw - n_c - penalty - sqrt_n
    n_k = max(0, math.floor(bracket))
    return KeyLengthTerms(argument, tau, per_round, raw, n_c, penalty, sqrt_n, bracket, n_k)


def key_length(m, e_size, i_est, n_c, n, bound, scenario: BellScenario = CHSH_SCENARIO) -> int:
    """Number of secret bits ``n_K`` extractable from the published data."""
    return key_length_terms(m, e_size, i_est, n_c, n, bound, scenario).n_k


# -- Toeplitz hashing ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class HashSeed:
    """Toeplitz matrix over GF(2) with ``output_len`` rows and ``input_len`` columns.

    Entry ``T[i, j]`` is ``bits[i - j + input_len - 1]``; the first column is
    therefore ``bits[input_len - 1:]`` and the first row is
    ``bits[input_len - 1::-1]``.
    """

    input_len: int
    output_len: int
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=np.uint8)
        expected = self.input_len + self.output_len - 1 if self.output_len > 0 else 0
        if bits.shape != (expected,):
            raise ValueError(f"seed length {bits.size} != input_len + output_len - 1 = {expected}")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    def matrix(self) -> np.ndarray:
        """Dense ``output_len x input_len`` matrix (for small instances)."""
        i = np.arange(self.output_len)[:, None]
        j = np.arange(self.input_len)[None, :]
        return self.bits[i - j + self.input_len - 1] if self.output_len else np.zeros((0, self.input_len), np.uint8)


def sample_hash(input_len: int, output_len: int, seed) -> HashSeed:
    """Uniformly random Toeplitz seed drawn from the seeded stream ``seed``."""
    if output_len < 0 or input_len < 0:
        raise ValueError("lengths must be non-negative")
    if output_len == 0:
        return HashSeed(input_len, 0, np.zeros(0, np.uint8))
    gen = seed if isinstance(seed, np.random.Generator) else rng.generator(seed, "toeplitz", input_len, output_len)
    bits = gen.integers(0, 2, size=input_len + output_len - 1, dtype=np.uint8)
    return HashSeed(input_len, output_len, bits)


def apply_hash(hash_seed: HashSeed, bits) -> np.ndarray:
    """``K = T r`` over GF(2)."""
    r = np.asarray(bits, dtype=np.uint8)
    if r.shape != (hash_seed.input_len,):
        raise ValueError(f"input length {r.size} does not match hash input length {hash_seed.input_len}")
    if hash_seed.output_len == 0:
        return np.zeros(0, np.uint8)
    if hash_seed.input_len * hash_seed.output_len <= 1 << 16:
        return (hash_seed.matrix().astype(np.int64) @ r % 2).astype(np.uint8)
    conv = fftconvolve(hash_seed.bits.astype(np.float64), r.astype(np.float64))
    lo = hash_seed.input_len - 1
    counts = np.rint(conv[lo : lo + hash_seed.output_len]).astype(np.int64)
    return (counts & 1).astype(np.uint8)


def lemma4_bound(p_guess: float, n_out: int) -> float:
    """Distance bound ``sqrt(2^n_out * p_guess)`` for two-universal hashing."""
    if not 0.0 < p_guess <= 1.0:
        raise ValueError("p_guess must lie in (0, 1]")
    if n_out < 0:
        raise ValueError("n_out must be non-negative")
    return math.sqrt(2.0 ** n_out * p_guess)


def encode_symbols(symbols, alphabet_size: int) -> np.ndarray:
    """Fixed-width little-endian bit encoding of raw-key symbols."""
    width = max(1, math.ceil(math.log2(alphabet_size)))
    s = np.asarray(symbols, dtype=np.int64)
    return ((s[:, None] >> np.arange(width)) & 1).astype(np.uint8).reshape(-1)

"""Seeded, scheduling-independent randomness.

Per-round randomness is a pure function of ``(seed, stream, round_index)``:
the three words are combined and passed through the SplitMix64 finalizer,
and the top 53 bits give a double in ``[0, 1)``.  Any subset of rounds can
therefore be regenerated in any order, with identical values.

Bulk randomness that is not tied to rounds (code construction, hash seeds,
sampled positions) comes from ``numpy.random.Generator`` instances seeded by
``numpy.random.SeedSequence([seed, *labels])``.
"""

from __future__ import annotations

import zlib

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix64(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> np.uint64(30))
    z = z * _M1
    z = z ^ (z >> np.uint64(27))
    z = z * _M2
    return z ^ (z >> np.uint64(31))


def stream_id(label: str) -> int:
    """Stable 32-bit identifier for a named stream."""
    return zlib.crc32(label.encode("utf-8"))


def round_uniforms(seed: int, stream: str, rounds) -> np.ndarray:
    """Uniform doubles in ``[0, 1)`` for the given round indices."""
    rounds = np.asarray(rounds, dtype=np.uint64)
    with np.errstate(over="ignore"):
        base = _mix64(np.uint64(seed & _MASK64) * _GOLDEN + np.uint64(stream_id(stream)))
        z = _mix64(base + (rounds + np.uint64(1)) * _GOLDEN)
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def round_uniform(seed: int, stream: str, round_index: int) -> float:
    return float(round_uniforms(seed, stream, [round_index])[0])


def generator(seed: int, *labels) -> np.random.Generator:
    """Independent generator for a labelled purpose."""
    words = [int(seed) & _MASK64]
    for label in labels:
        words.append(stream_id(label) if isinstance(label, str) else int(label) & _MASK64)
    return np.random.default_rng(np.random.SeedSequence(words))

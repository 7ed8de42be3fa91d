"""One-way error correction by LDPC syndrome decoding.

Alice publishes ``C = H R || t(R)``: the syndrome of her raw key under a
sparse parity-check matrix derived from the public seed, followed by a 64-bit
Toeplitz verification tag.  ``C`` depends only on ``R`` and the public seed.
Bob runs sum-product decoding on the syndrome difference ``H R xor H S`` to
find the error pattern, then checks the tag.

Code construction (bit-exact given the seed):

* ``rows = ceil(len(R) * f * h(qber))``, capped at ``len(R)``; when the cap is
  hit the "code" is the identity and the syndrome is ``R`` itself.
* column degrees follow the shipped irregular profile whose design ratio
  ``rows / len(R)`` is nearest; the matrix itself comes from
  :func:`diqkd.ldpc.make_code` with the public seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import rng
from .ldpc import ParityCheck, decode_syndrome, make_code
from .privacy import apply_hash, sample_hash

TAG_BITS = 64
MAX_ITERATIONS = 200
FALLBACK_PROFILE = {3: 1.0}


class ReconciliationError(ValueError):
    pass


def binary_entropy(p: float) -> float:
    """``h(p) = -p log2 p - (1 - p) log2(1 - p)``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} outside [0, 1]")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def syndrome_rows(length: int, qber: float, f: float) -> int:
    if f < 1.0:
        raise ValueError("error-correction efficiency f must be >= 1")
    return min(length, math.ceil(length * f * binary_entropy(qber)))


def _load_profiles() -> list[dict]:
    text = resources.files("diqkd").joinpath("data/ldpc_profiles.json").read_text(encoding="utf-8")
    table = json.loads(text)["profiles"]
    return sorted(table, key=lambda e: e["ratio"])


_PROFILES: list[dict] | None = None


def degree_profile(ratio: float) -> dict[int, float]:
    """Variable-node degree fractions for a code with ``rows / cols = ratio``.

    Picks the shipped profile whose design ratio is closest to ``ratio`` on a
    log scale; below the table the densest-check profile is used.
    """
    global _PROFILES
    if _PROFILES is None:
        _PROFILES = _load_profiles()
    if ratio <= 0:
        return dict(FALLBACK_PROFILE)
    best = min(_PROFILES, key=lambda e: abs(math.log(e["ratio"] / ratio)))
    return {int(d): float(v) for d, v in best["nodes"].items()}


def make_parity_check(n_rows: int, n_cols: int, seed: int, profile: dict[int, float] | None = None) -> ParityCheck:
    """Seed-derived parity-check matrix; see :func:`diqkd.ldpc.make_code`."""
    if profile is None:
        profile = degree_profile(n_rows / n_cols if n_cols else 0.0)
    return make_code(n_rows, n_cols, profile, seed)


def verification_tag(bits: np.ndarray, seed: int) -> np.ndarray:
    """64-bit Toeplitz hash of ``bits`` under a seed derived from the public seed."""
    h = sample_hash(len(bits), TAG_BITS, rng.generator(seed, "ec-tag", len(bits)))
    return apply_hash(h, bits)


@dataclass(frozen=True, eq=False)
class EcResult:
    corrected: np.ndarray
    messages: np.ndarray
    n_c: int
    success: bool
    syndrome_bits: int
    iterations: int = 0
    converged: bool = False

    @property
    def tag(self) -> np.ndarray:
        return self.messages[self.syndrome_bits :]


def alice_messages(r: np.ndarray, qber_estimate: float, f: float, seed: int) -> np.ndarray:
    """The published ``C = theta(R)``: syndrome followed by the tag."""
    r = np.asarray(r, dtype=np.uint8)
    code = make_parity_check(syndrome_rows(len(r), qber_estimate, f), len(r), seed)
    return np.concatenate([code.syndrome(r), verification_tag(r, seed)])


def error_correct(
    r,
    s,
    qber_estimate: float,
    f: float = 1.2,
    seed: int = 0,
    alphabet_sizes: tuple[int, int] = (2, 2),
    max_iter: int = MAX_ITERATIONS,
) -> EcResult:
    """Correct Bob's key ``s`` towards Alice's ``r`` from one-way messages."""
    if tuple(alphabet_sizes) != (2, 2):
        raise ReconciliationError("the syndrome decoder supports binary outputs only")
    r = np.asarray(r, dtype=np.uint8)
    s = np.asarray(s, dtype=np.uint8)
    if r.shape != s.shape:
        raise ReconciliationError(f"key length mismatch: {r.size} vs {s.size}")
    if not 0.0 <= qber_estimate <= 1.0:
        raise ReconciliationError("qber estimate must lie in [0, 1]")
    code = make_parity_check(syndrome_rows(len(r), qber_estimate, f), len(r), seed)
    syndrome_a = code.syndrome(r)
    tag_a = verification_tag(r, seed)
    messages = np.concatenate([syndrome_a, tag_a])

    # Bob's side: only ``messages`` and his own key are used from here on.
    target = syndrome_a ^ code.syndrome(s)
    if code.identity:
        corrected, converged, iterations = syndrome_a.copy(), True, 0
    else:
        flips, converged, iterations = decode_syndrome(code, target, qber_estimate, max_iter)
        corrected = s ^ flips
    success = bool(np.array_equal(verification_tag(corrected, seed), messages[syndrome_a.size :]))
    return EcResult(
        corrected=corrected,
        messages=messages,
        n_c=int(messages.size),
        success=success,
        syndrome_bits=int(syndrome_a.size),
        iterations=iterations,
        converged=converged,
    )


def qber_from_sample(r, s, sample_fraction: float, seed: int):
    """Estimate the error rate from a disclosed random sample of positions.

    Returns ``(estimate, positions)``; ``positions`` is sorted and must be
    removed from both keys before error correction.
    """
    if not 0.0 < sample_fraction < 1.0:
        raise ValueError("sample_fraction must lie in (0, 1)")
    r = np.asarray(r, dtype=np.uint8)
    s = np.asarray(s, dtype=np.uint8)
    if r.shape != s.shape:
        raise ReconciliationError("key length mismatch")
    size = int(round(sample_fraction * r.size))
    if size == 0:
        raise ValueError("empty sample: sample_fraction too small for this key length")
    gen = rng.generator(seed, "qber-sample", r.size)
    positions = np.sort(gen.choice(r.size, size=size, replace=False))
    estimate = float(np.mean(r[positions] != s[positions]))
    return estimate, positions

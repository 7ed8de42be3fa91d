"""Brute-force reference computations.

These are deliberately naive: vertex enumeration of the CHSH no-signalling
polytope, enumeration of deterministic strategies, and exact enumeration of
a small Toeplitz hash family.  They exist to cross-check the closed forms
used elsewhere.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .bell import CHSH_SCENARIO, BellFunctional, BellScenario, Behavior, check_behavior, deterministic_behavior, evaluate_functional, pr_box
from .privacy import HashSeed

ENUMERATION_LIMIT = 10**6
EXACT_R_BITS = 10
EXACT_E_VALUES = 64
EXACT_SEED_BITS = 20
MIN_SAMPLED_SEEDS = 10**4


class UnsupportedScenario(ValueError):
    pass


@dataclass(frozen=True)
class NsVertexSet:
    scenario: BellScenario
    vertices: tuple[Behavior, ...]

    def __len__(self):
        return len(self.vertices)

    def tables(self) -> np.ndarray:
        return np.stack([v.table for v in self.vertices])


def enumerate_ns_vertices(scenario: BellScenario = CHSH_SCENARIO) -> NsVertexSet:
    """The 16 local deterministic boxes followed by the 8 PR-box variants."""
    if not scenario.is_chsh:
        raise UnsupportedScenario("vertex enumeration is only available for the (2,2,2,2) scenario")
    vertices = []
    for alpha, gamma, beta, delta in itertools.product((0, 1), repeat=4):
        vertices.append(deterministic_behavior(lambda x, a=alpha, g=gamma: a ^ (g & x), lambda y, b=beta, d=delta: b ^ (d & y)))
    for flip_x, flip_y, flip in itertools.product((0, 1), repeat=3):
        vertices.append(pr_box(flip_x, flip_y, flip))
    return NsVertexSet(scenario, tuple(vertices))


def _upper_hull(points: np.ndarray) -> np.ndarray:
    """Upper convex hull of 2-D points, sorted by abscissa (monotone chain)."""
    pts = sorted(set(map(tuple, points.tolist())))
    hull: list[tuple[float, float]] = []
    for p in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            # Drop the middle point unless it lies strictly above the chord.
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) >= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    # Keep only the highest point at each abscissa.
    dedup: dict[float, float] = {}
    for x, y in hull:
        dedup[x] = max(y, dedup.get(x, -math.inf))
    return np.array(sorted(dedup.items()))


def envelope_points(functional: BellFunctional, a: int, x: int) -> np.ndarray:
    vertices = enumerate_ns_vertices(functional.scenario)
    return np.array([(evaluate_functional(v, functional), v.marginal_a()[a, x, 0]) for v in vertices.vertices])


def ns_guessing_envelope(functional: BellFunctional, a: int, x: int, value: float, tol: float = 1e-12) -> float:
    """Largest ``P(a|x)`` over no-signalling mixtures with Bell value ``value``."""
    hull = _upper_hull(envelope_points(functional, a, x))
    lo, hi = hull[0, 0], hull[-1, 0]
    if not lo - tol <= value <= hi + tol:
        raise ValueError(f"Bell value {value} outside the achievable range [{lo}, {hi}]")
    return float(np.interp(min(max(value, lo), hi), hull[:, 0], hull[:, 1]))


def classical_bound_by_enumeration(functional: BellFunctional) -> float:
    """Maximum of the functional over deterministic local strategies."""
    sc = functional.scenario
    count = sc.lambda_a**sc.lambda_x * sc.lambda_b**sc.lambda_y
    if count > ENUMERATION_LIMIT:
        raise ValueError(f"{count} deterministic strategies exceed the enumeration limit")
    beta = functional.beta
    xs, ys = np.arange(sc.lambda_x), np.arange(sc.lambda_y)
    best = -math.inf
    for alice in itertools.product(range(sc.lambda_a), repeat=sc.lambda_x):
        a = np.array(alice)
        # Bob's best response splits over y once Alice is fixed.
        per_y = np.zeros((sc.lambda_b, sc.lambda_y))
        for y in ys:
            for b in range(sc.lambda_b):
                per_y[b, y] = beta[a, b, xs, y].sum()
        best = max(best, float(per_y.max(axis=0).sum()))
    return best


def guessing_probability(joint) -> float:
    """``P_guess(R|E) = sum_e max_r P(r, e)`` for a table indexed ``[r, e]``."""
    p = np.asarray(joint, dtype=float)
    return float(p.max(axis=0).sum())


# -- Toeplitz family ------------------------------------------------------------


@dataclass(frozen=True)
class ToeplitzFamily:
    """All Toeplitz matrices with ``output_len`` rows and ``input_len`` columns.

    Seed index ``s`` encodes the seed bits little-endian: bit ``k`` of ``s`` is
    ``bits[k]``.  Inputs ``r`` are encoded the same way (bit ``j`` is ``r_j``)
    and outputs as ``sum_i k_i 2^i``.
    """

    input_len: int
    output_len: int

    @property
    def seed_len(self) -> int:
        return self.input_len + self.output_len - 1 if self.output_len else 0

    @property
    def size(self) -> int:
        return 1 << self.seed_len

    def seed(self, index: int) -> HashSeed:
        bits = (index >> np.arange(self.seed_len)) & 1
        return HashSeed(self.input_len, self.output_len, bits.astype(np.uint8))

    def output_table(self, seed_bits: np.ndarray | None = None) -> np.ndarray:
        """Hash outputs ``[seed, r]`` for every input ``r`` and the given seeds (all by default)."""
        L, n = self.input_len, self.output_len
        if seed_bits is None:
            s = np.arange(self.size, dtype=np.int64)
            seed_bits = ((s[:, None] >> np.arange(self.seed_len)) & 1).astype(np.float64)
        r = np.arange(1 << L, dtype=np.int64)
        r_bits = ((r[:, None] >> np.arange(L)) & 1).astype(np.float64)
        out = np.zeros((seed_bits.shape[0], r.size), np.int64)
        j = np.arange(L)
        for i in range(n):
            window = seed_bits[:, i - j + L - 1]
            out |= ((np.rint(window @ r_bits.T).astype(np.int64) & 1) << i)
        return out


@dataclass(frozen=True)
class HashDistance:
    distance: float
    standard_error: float
    seeds: int
    exact: bool
    p_guess: float
    bound: float


def _distance_from_table(joint: np.ndarray, table: np.ndarray, n_out: int) -> np.ndarray:
    """Per-seed ``sum_{k,e} |P(k,e|f) - 2^-n P(e)|``."""
    n_r, n_e = joint.shape
    n_k = 1 << n_out
    p_e = joint.sum(axis=0)
    per_seed = np.empty(table.shape[0])
    # Chunk the seeds to bound the scatter buffer.
    chunk = max(1, (1 << 22) // max(1, n_r * n_e))
    e_idx = np.arange(n_e)
    for start in range(0, table.shape[0], chunk):
        block = table[start : start + chunk]
        f = np.arange(block.shape[0])[:, None, None]
        flat = ((f * n_k + block[:, :, None]) * n_e + e_idx[None, None, :]).ravel()
        weights = np.broadcast_to(joint[None, :, :], (block.shape[0], n_r, n_e)).ravel()
        q = np.bincount(flat, weights=weights, minlength=block.shape[0] * n_k * n_e).reshape(block.shape[0], n_k, n_e)
        per_seed[start : start + block.shape[0]] = np.abs(q - p_e[None, None, :] / n_k).sum(axis=(1, 2))
    return per_seed


def exhaustive_hash_distance(joint, family: ToeplitzFamily, n_out: int, samples: int | None = None, seed: int = 0) -> HashDistance:
    """``sum_{k,f,e} |P(k,f,e) - 2^-n P(f,e)|`` for ``K = F(R)`` with ``F`` uniform over ``family``.

    ``joint[r, e]`` is the distribution of ``(R, E)`` with ``r`` encoded as an
    integer of ``family.input_len`` bits.  With ``samples`` set, seeds are
    drawn at random and the mean is reported with its standard error.
    """
    joint = np.asarray(joint, dtype=float)
    if family.output_len != n_out:
        raise ValueError("family output length differs from n_out")
    if joint.ndim != 2 or joint.shape[0] != 1 << family.input_len:
        raise ValueError("joint must have shape (2^input_len, |E|)")
    if joint.shape[0] > 1 << EXACT_R_BITS or joint.shape[1] > EXACT_E_VALUES:
        raise ValueError("alphabet too large for this oracle")
    if np.any(joint < 0) or not math.isclose(joint.sum(), 1.0, abs_tol=1e-9):
        raise ValueError("joint is not a probability distribution")
    p_guess = guessing_probability(joint)
    bound = math.sqrt(2.0**n_out * p_guess)
    if n_out == 0:
        return HashDistance(0.0, 0.0, 1, True, p_guess, bound)
    if samples is None:
        if family.seed_len > EXACT_SEED_BITS:
            raise ValueError("family too large to enumerate; pass samples")
        per_seed = _distance_from_table(joint, family.output_table(), n_out)
        return HashDistance(float(per_seed.mean()), 0.0, per_seed.size, True, p_guess, bound)
    if samples < MIN_SAMPLED_SEEDS:
        raise ValueError(f"sampled mode needs at least {MIN_SAMPLED_SEEDS} seeds")
    gen = rng.generator(seed, "hash-distance", family.input_len, n_out)
    per_seed = np.empty(samples)
    step = 4096
    for start in range(0, samples, step):
        count = min(step, samples - start)
        bits = gen.integers(0, 2, size=(count, family.seed_len)).astype(np.float64)
        per_seed[start : start + count] = _distance_from_table(joint, family.output_table(bits), n_out)
    return HashDistance(float(per_seed.mean()), float(per_seed.std(ddof=1) / math.sqrt(samples)), samples, False, p_guess, bound)


def all_vertices_no_signalling(vertices: NsVertexSet) -> bool:
    return all(check_behavior(v).no_signalling for v in vertices.vertices)

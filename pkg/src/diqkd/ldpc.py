"""Sparse GF(2) parity-check codes and a sum-product syndrome decoder.

Columns get degrees from a node profile.  Columns whose degree reaches the
row count touch every row.  Degree-2 columns are laid along a path through a
random row permutation (column ``k`` joins rows ``path[k]`` and
``path[k + 1]``), so no subset of them sums to zero; a profile asking for more
degree-2 columns than the path has room for gets the surplus at degree 3.  The remaining sockets
are dealt to rows by water filling, which keeps row degrees within one of
each other, then shuffled; a column that hits the same row twice swaps free
sockets with random partners until its rows are distinct.  Everything is a
deterministic function of ``(n_rows, n_cols, profile, seed)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from . import rng

_LLR_CLIP = 40.0
_MIN_MAG = 1e-12


class CodeConstructionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ParityCheck:
    """Sparse parity-check matrix in edge-list form.

    Edges are stored column-major: the edges of column ``v`` are
    ``edge_rows[col_starts[v]:col_starts[v + 1]]``.  ``identity`` marks the
    degenerate full-rate case where the syndrome is the input itself.
    """

    n_rows: int
    n_cols: int
    edge_rows: np.ndarray
    col_degrees: np.ndarray
    identity: bool = False
    edge_cols: np.ndarray = field(init=False, repr=False)
    col_starts: np.ndarray = field(init=False, repr=False)
    row_order: np.ndarray = field(init=False, repr=False)
    row_starts: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        degrees = np.asarray(self.col_degrees, dtype=np.int64)
        if degrees.shape != (self.n_cols,) or int(degrees.sum()) != self.edge_rows.size:
            raise CodeConstructionError("column degrees do not match the edge list")
        edge_cols = np.repeat(np.arange(self.n_cols), degrees)
        col_starts = np.concatenate([[0], np.cumsum(degrees)])
        order = np.argsort(self.edge_rows, kind="stable")
        row_starts = np.searchsorted(self.edge_rows[order], np.arange(self.n_rows))
        if self.n_rows and not self.identity and np.any(np.diff(np.append(row_starts, order.size)) == 0):
            raise CodeConstructionError("every row needs at least one edge")
        object.__setattr__(self, "col_degrees", degrees)
        object.__setattr__(self, "edge_cols", edge_cols)
        object.__setattr__(self, "col_starts", col_starts)
        object.__setattr__(self, "row_order", order)
        object.__setattr__(self, "row_starts", row_starts)

    @property
    def n_edges(self) -> int:
        return int(self.edge_rows.size)

    def row_sum(self, per_edge: np.ndarray) -> np.ndarray:
        return np.add.reduceat(per_edge[self.row_order], self.row_starts)

    def col_sum(self, per_edge: np.ndarray) -> np.ndarray:
        return np.add.reduceat(per_edge, self.col_starts[:-1]) if self.n_edges else np.zeros(self.n_cols)

    def syndrome(self, bits) -> np.ndarray:
        bits = np.asarray(bits, dtype=np.uint8)
        if bits.shape != (self.n_cols,):
            raise ValueError(f"expected {self.n_cols} bits, got {bits.size}")
        if self.identity:
            return bits.copy()
        if self.n_rows == 0:
            return np.zeros(0, np.uint8)
        return (self.row_sum(bits[self.edge_cols].astype(np.int32)) & 1).astype(np.uint8)

    def dense(self) -> np.ndarray:
        if self.identity:
            return np.eye(self.n_cols, dtype=np.uint8)
        out = np.zeros((self.n_rows, self.n_cols), np.uint8)
        out[self.edge_rows, self.edge_cols] = 1
        return out


def identity_code(n: int) -> ParityCheck:
    return ParityCheck(n, n, np.arange(n), np.ones(n, np.int64), identity=True)


def column_degrees(n_cols: int, profile: dict[int, float]) -> np.ndarray:
    """Split ``n_cols`` columns into degree classes by node fractions.

    Counts are rounded by largest remainder so they sum to ``n_cols``; the
    highest degrees come first.
    """
    degrees = sorted(profile, reverse=True)
    fractions = np.array([profile[d] for d in degrees], dtype=float)
    fractions = fractions / fractions.sum()
    raw = fractions * n_cols
    counts = np.floor(raw).astype(np.int64)
    short = n_cols - int(counts.sum())
    if short:
        counts[np.argsort(-(raw - counts), kind="stable")[:short]] += 1
    return np.repeat(np.array(degrees, dtype=np.int64), counts)


def make_code(n_rows: int, n_cols: int, profile: dict[int, float], seed: int) -> ParityCheck:
    """Build a parity-check matrix with the given column-degree node profile."""
    if n_rows < 0 or n_cols < 0:
        raise ValueError("matrix dimensions must be non-negative")
    if n_rows >= n_cols:
        return identity_code(n_cols)
    if n_rows == 0:
        return ParityCheck(0, n_cols, np.zeros(0, np.int64), np.zeros(n_cols, np.int64))
    degrees = np.minimum(column_degrees(n_cols, profile), n_rows)
    # Degree-2 columns beyond what one path over the rows can hold become degree 3.
    if n_rows > 2:
        extra = np.flatnonzero(degrees == 2)[n_rows - 1 :]
        degrees[extra] = 3
        degrees = np.sort(degrees)[::-1].copy()
    n_edges = int(degrees.sum())
    if n_edges < n_rows:
        degrees = np.minimum(degrees + int(math.ceil(n_rows / max(n_cols, 1))), n_rows)
        n_edges = int(degrees.sum())
    gen = rng.generator(seed, "ldpc-socket", n_rows, n_cols)
    edge_cols = np.repeat(np.arange(n_cols), degrees)
    sockets = np.full(n_edges, -1, dtype=np.int64)
    starts = np.concatenate([[0], np.cumsum(degrees)])[:-1]
    load = np.zeros(n_rows, np.int64)

    # Columns that must touch every row.
    full = np.flatnonzero(degrees == n_rows)
    for v in full:
        sockets[starts[v] : starts[v] + n_rows] = np.arange(n_rows)
    load += full.size

    # Degree-2 columns form a path over a random row order, so no set of
    # them alone can sum to a codeword.
    two = np.flatnonzero(degrees == 2)[: n_rows - 1] if n_rows > 2 else np.zeros(0, np.int64)
    if two.size:
        path = gen.permutation(n_rows)
        k = np.arange(two.size)
        sockets[starts[two]] = path[k]
        sockets[starts[two] + 1] = path[k + 1]
        np.add.at(load, path[: two.size + 1], 1)
        load[path[1 : two.size]] += 1

    # Remaining sockets level the row degrees (water filling).
    free = np.flatnonzero(sockets < 0)
    quota = np.zeros(n_rows, np.int64)
    left = free.size
    level = int(load.min())
    while left > 0:
        level += 1
        short = np.flatnonzero(load + quota < level)
        if short.size > left:
            short = gen.choice(short, size=left, replace=False)
        quota[short] += 1
        left -= short.size
    pool = np.repeat(np.arange(n_rows), quota)
    gen.shuffle(pool)
    sockets[free] = pool

    for _ in range(1000):
        key = edge_cols * n_rows + sockets
        srt = np.sort(key)
        dup_keys = srt[1:][srt[1:] == srt[:-1]]
        if dup_keys.size == 0:
            break
        # Swap one offending free socket per duplicate with a random free socket.
        offenders = free[np.isin(key[free], dup_keys)]
        first = offenders[np.unique(key[offenders], return_index=True)[1]]
        partners = free[gen.integers(0, free.size, size=first.size)]
        for e, w in zip(first, partners):
            sockets[e], sockets[w] = sockets[w], sockets[e]
    else:  # pragma: no cover
        raise CodeConstructionError("could not remove repeated rows from the parity-check matrix")
    # Sort each column's rows so the edge list is canonical.
    order = np.lexsort((sockets, edge_cols))
    return ParityCheck(n_rows, n_cols, sockets[order], degrees)


_TABLE_STEP = 1.0 / 128.0
_TABLE_FROM = 1.0 / 16.0
_PHI_TABLE = -np.log(np.tanh(0.5 * np.maximum(np.arange(int(_LLR_CLIP / _TABLE_STEP) + 2) * _TABLE_STEP, _MIN_MAG)))


@numba.njit(cache=True)
def _phi(x):
    """``-log tanh(x / 2)``: exact near zero, interpolated from a table elsewhere."""
    if x < _TABLE_FROM:
        if x < _MIN_MAG:
            x = _MIN_MAG
        return -math.log(math.tanh(0.5 * x))
    if x >= _LLR_CLIP:
        return _PHI_TABLE[-2]
    pos = x / _TABLE_STEP
    k = int(pos)
    w = pos - k
    return _PHI_TABLE[k] + w * (_PHI_TABLE[k + 1] - _PHI_TABLE[k])


@numba.njit(cache=True)
def _flooding_bp(edge_rows, col_starts, row_starts, row_edges, n_cols, target, prior, max_iter):
    """Flooding sum-product; returns ``(estimate, iterations)``, negative on failure."""
    n_rows = row_starts.size - 1
    n_edges = edge_rows.size
    v2c = np.empty(n_edges)
    for v in range(n_cols):
        for e in range(col_starts[v], col_starts[v + 1]):
            v2c[e] = prior[v]
    c2v = np.zeros(n_edges)
    mags = np.empty(n_edges)
    estimate = np.zeros(n_cols, np.uint8)
    for it in range(1, max_iter + 1):
        for c in range(n_rows):
            total = 0.0
            parity = target[c]
            for k in range(row_starts[c], row_starts[c + 1]):
                e = row_edges[k]
                m = _phi(abs(v2c[e]))
                mags[e] = m
                total += m
                if v2c[e] < 0:
                    parity ^= 1
            for k in range(row_starts[c], row_starts[c + 1]):
                e = row_edges[k]
                out = _phi(total - mags[e])
                negative = parity ^ (1 if v2c[e] < 0 else 0)
                c2v[e] = -out if negative else out
        for v in range(n_cols):
            total = prior[v]
            for e in range(col_starts[v], col_starts[v + 1]):
                total += c2v[e]
            estimate[v] = 1 if total < 0 else 0
            for e in range(col_starts[v], col_starts[v + 1]):
                x = total - c2v[e]
                if x > _LLR_CLIP:
                    x = _LLR_CLIP
                elif x < -_LLR_CLIP:
                    x = -_LLR_CLIP
                v2c[e] = x
        if _satisfied(edge_rows, col_starts, n_rows, estimate, target):
            return estimate, it
    return estimate, -max_iter


@numba.njit(cache=True)
def _satisfied(edge_rows, col_starts, n_rows, estimate, target):
    parity = target.astype(np.int64)
    for v in range(estimate.size):
        if estimate[v]:
            for e in range(col_starts[v], col_starts[v + 1]):
                parity[edge_rows[e]] ^= 1
    for c in range(n_rows):
        if parity[c]:
            return False
    return True


def decode_syndrome(code: ParityCheck, target, p: float, max_iter: int = 200):
    """Sum-product search for the likeliest ``e`` with ``H e = target`` on a BSC(p).

    Flooding schedule, stopping as soon as the hard decision satisfies every
    check.  Returns ``(e, converged, iterations)``.
    """
    n = code.n_cols
    target = np.asarray(target, dtype=np.uint8)
    if target.shape != (code.n_rows,):
        raise ValueError(f"expected {code.n_rows} syndrome bits, got {target.size}")
    if code.identity:
        return target.copy(), True, 0
    if code.n_rows == 0:
        return np.zeros(n, np.uint8), True, 0
    p = min(max(p, 1e-6), 0.5 - 1e-9)
    prior = np.full(n, math.log((1.0 - p) / p))
    estimate, iterations = _flooding_bp(
        code.edge_rows.astype(np.int64),
        code.col_starts.astype(np.int64),
        np.append(code.row_starts, code.n_edges).astype(np.int64),
        code.row_order.astype(np.int64),
        n,
        target,
        prior,
        int(max_iter),
    )
    return estimate, iterations > 0, abs(int(iterations))

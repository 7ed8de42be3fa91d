"""Asymptotic key rates, critical noise and finite-size rate estimates."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect

from .bell import TSIRELSON, RandomnessBound, bound_by_name
from .devices import honest_pair
from .privacy import key_length
from .protocol import ProtocolParams, run_full_protocol
from .reconcile import binary_entropy

CSV_HEADER = ("noise", "visibility", "chsh_value", "rate_qm", "rate_ns", "rate_qm_clamped", "rate_ns_clamped")


def _as_bound(bound) -> RandomnessBound:
    return bound if isinstance(bound, RandomnessBound) else bound_by_name(bound)


def asymptotic_rate(nu: float, bound="quantum") -> float:
    """``-log2 tau(2 sqrt(2) nu) - h((1 - nu) / 2)``, unclamped."""
    if not 0.0 <= nu <= 1.0:
        raise ValueError("visibility must lie in [0, 1]")
    tau = _as_bound(bound)(TSIRELSON * nu)
    return -math.log2(tau) - binary_entropy(0.5 * (1.0 - nu))


def critical_visibility(bound="quantum", xtol: float = 1e-9) -> float:
    """Visibility at which the asymptotic rate crosses zero."""
    f = lambda nu: asymptotic_rate(nu, bound)
    lo, hi = 0.0, 1.0
    if f(lo) * f(hi) >= 0:
        raise ValueError("no sign change of the rate on [0, 1]")
    return bisect(f, lo, hi, xtol=xtol)


def critical_noise(bound="quantum") -> float:
    return 1.0 - critical_visibility(bound)


@dataclass(frozen=True)
class RatePoint:
    noise: float
    visibility: float
    chsh_value: float
    rate_qm: float
    rate_ns: float

    @property
    def rate_qm_clamped(self) -> float:
        return max(0.0, self.rate_qm)

    @property
    def rate_ns_clamped(self) -> float:
        return max(0.0, self.rate_ns)

    def row(self) -> tuple[float, ...]:
        return (self.noise, self.visibility, self.chsh_value, self.rate_qm, self.rate_ns, self.rate_qm_clamped, self.rate_ns_clamped)


def rate_curve(grid, quantum="quantum", no_signalling="no-signalling") -> list[RatePoint]:
    points = []
    for noise in grid:
        noise = float(noise)
        if not 0.0 <= noise <= 1.0:
            raise ValueError(f"noise {noise} outside [0, 1]")
        nu = 1.0 - noise
        points.append(RatePoint(noise, nu, TSIRELSON * nu, asymptotic_rate(nu, quantum), asymptotic_rate(nu, no_signalling)))
    return points


def parse_grid(spec: str) -> np.ndarray:
    """``start:end:step`` with inclusive end; a zero or wrong-signed step is an error."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise ValueError(f"grid must look like start:end:step, got {spec!r}")
    start, end, step = (float(p) for p in parts)
    if step <= 0 or end < start:
        raise ValueError(f"grid {spec!r} needs step > 0 and end >= start")
    count = int(math.floor((end - start) / step + 1e-9)) + 1
    # Round to the step's resolution so 0.01 * 3 prints as 0.03.
    digits = max(0, -int(math.floor(math.log10(step))) + 6)
    return np.round(start + step * np.arange(count), digits)


def curve_csv(points: list[RatePoint]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for p in points:
        writer.writerow([format(v, ".17g") for v in p.row()])
    return buf.getvalue()


@dataclass(frozen=True)
class FiniteSizeRate:
    n: int
    visibility: float
    trials: int
    mean: float
    std: float
    key_lengths: tuple[int, ...]
    ec_successes: int

    @property
    def mean_key_length(self) -> float:
        return float(np.mean(self.key_lengths)) if self.key_lengths else 0.0


def expected_key_length(n: int, nu: float, bound="quantum", ec_efficiency: float = 1.2, q: float | None = None, tag_bits: int = 64) -> int:
    """Key length at the expected counts: ``m = n(q^2 + (1-q)^2)``, ``|E| = n q^2``, ``I_est = 2 sqrt(2) nu``.

    Leakage is ``ceil(f h((1-nu)/2) |R|) + tag_bits`` with ``|R| = m - |E|``.
    """
    q = n ** -0.125 if q is None else q
    m = int(round(n * (q * q + (1.0 - q) ** 2)))
    e = int(round(n * q * q))
    raw = m - e
    n_c = min(raw, math.ceil(raw * ec_efficiency * binary_entropy(0.5 * (1.0 - nu)))) + tag_bits
    return key_length(m, e, TSIRELSON * nu, n_c, n, _as_bound(bound))


def finite_size_rate(n: int, nu: float, trials: int = 1, seed: int = 0, bound="quantum", ec_efficiency: float = 1.2, mode: str = "simulate", **protocol_options) -> FiniteSizeRate:
    """Mean and standard deviation of ``n_K / n`` over protocol runs with honest devices.

    ``mode="expected"`` skips simulation and evaluates the key length at the
    expected counts (one deterministic "trial"), which keeps very large ``n``
    tractable.
    """
    if n < 16:
        raise ValueError("n must be at least 16")
    if mode == "expected":
        k = expected_key_length(n, nu, bound, ec_efficiency)
        return FiniteSizeRate(n, nu, 1, k / n, 0.0, (k,), 1)
    if mode != "simulate":
        raise ValueError(f"unknown mode {mode!r}")
    lengths = []
    successes = 0
    for k in range(trials):
        params = ProtocolParams(n=n, bound=_as_bound(bound), ec_efficiency=ec_efficiency, seed=seed + k, **protocol_options)
        transcript, _ = run_full_protocol(params, honest_pair(nu, seed=seed + k))
        lengths.append(transcript.n_k)
        successes += int(transcript.ec is not None and transcript.ec.success)
    ratios = np.array(lengths, dtype=float) / n
    return FiniteSizeRate(n, nu, trials, float(ratios.mean()), float(ratios.std()), tuple(lengths), successes)

"""The four-step key-distribution protocol: measure, estimate, correct, amplify.

Round ``j`` (0-based) draws its test flags and test inputs from
``rng.round_uniforms(params.seed, stream, j)`` with one stream per variable,
so a transcript does not depend on how rounds are batched.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import IO

import numpy as np

from . import rng
from .bell import CHSH_SCENARIO, BellFunctional, BellScenario, RandomnessBound, chsh_functional, evaluate_functional
from .devices import DevicePair
from .privacy import HashSeed, KeyLengthTerms, apply_hash, key_length_terms, sample_hash
from .reconcile import EcResult, error_correct, qber_from_sample
from .security import SecurityReport, security_report

OK = "ok"
NO_ESTIMATE = "no-estimate"
EC_FAILURE = "ec-failure"
KEY_LENGTH_ZERO = "key-length-zero"

TRANSCRIPT_FORMAT = "diqkd-transcript/1"
ROUND_FIELDS = ("j", "u", "v", "x", "y", "a", "b")


class NoEstimate(RuntimeError):
    """The estimation set is empty, so no Bell value can be computed."""


def default_test_probability(n: int) -> float:
    return n ** -0.125


@dataclass(frozen=True)
class ProtocolParams:
    n: int
    q: float | None = None
    scenario: BellScenario = CHSH_SCENARIO
    functional: BellFunctional = field(default_factory=chsh_functional)
    bound: RandomnessBound = field(default_factory=RandomnessBound.quantum)
    ec_efficiency: float = 1.2
    seed: int = 0
    qber_hint: float | None = None
    qber_sample_fraction: float = 0.01

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 16:
            raise ValueError(f"n must be an integer >= 16, got {self.n!r}")
        if self.q is None:
            object.__setattr__(self, "q", default_test_probability(self.n))
        if not 0.0 <= self.q <= 1.0:
            raise ValueError(f"test probability q must lie in [0, 1], got {self.q}")
        if self.ec_efficiency < 1.0:
            raise ValueError("error-correction efficiency must be >= 1")
        if self.functional.scenario != self.scenario:
            raise ValueError("functional and scenario disagree")
        if self.qber_hint is not None and not 0.0 <= self.qber_hint <= 0.5:
            raise ValueError("qber_hint must lie in [0, 0.5]")
        if not 0.0 < self.qber_sample_fraction < 1.0:
            raise ValueError("qber_sample_fraction must lie in (0, 1)")

    @property
    def sifted_test_probability(self) -> float:
        """``Pr{U = 1 | U = V} = q^2 / (q^2 + (1 - q)^2)``."""
        q = self.q
        return q * q / (q * q + (1.0 - q) ** 2)


@dataclass(frozen=True, eq=False)
class Records:
    """Per-round data ``(U_j, V_j, X_j, Y_j, A_j, B_j)``.

    ``x`` and ``y`` hold the protocol inputs (0 on non-test rounds); the
    device may have been queried with a different key setting.
    """

    u: np.ndarray
    v: np.ndarray
    x: np.ndarray
    y: np.ndarray
    a: np.ndarray
    b: np.ndarray
    bell_values: np.ndarray | None = None

    @property
    def n(self) -> int:
        return int(self.u.size)


def run_measurement_phase(params: ProtocolParams, devices: DevicePair, record_conditionals: bool = False) -> Records:
    """Step 1: draw test flags and inputs and query the devices once per round.

    With ``record_conditionals`` the Bell value of the device's conditional
    behavior is recorded for every round (the device must expose it).
    """
    if devices.scenario != params.scenario:
        raise ValueError("devices and protocol use different Bell scenarios")
    n, q, seed = params.n, params.q, params.seed
    j = np.arange(n, dtype=np.int64)
    u = (rng.round_uniforms(seed, "alice-test", j) < q).astype(np.int8)
    v = (rng.round_uniforms(seed, "bob-test", j) < q).astype(np.int8)
    lx, ly = params.scenario.lambda_x, params.scenario.lambda_y
    x = np.where(u == 1, np.floor(rng.round_uniforms(seed, "alice-input", j) * lx), 0).astype(np.int8)
    y = np.where(v == 1, np.floor(rng.round_uniforms(seed, "bob-input", j) * ly), 0).astype(np.int8)
    key_x, key_y = devices.key_inputs
    xd = np.where(u == 1, x, key_x).astype(np.int64)
    yd = np.where(v == 1, y, key_y).astype(np.int64)
    bell_values = None
    if record_conditionals:
        bell_values = np.empty(n)
        a = np.empty(n, np.int64)
        b = np.empty(n, np.int64)
        for k in range(n):
            behavior = devices.conditional_behavior(k)
            if behavior is None:
                raise ValueError("devices do not expose their conditional behavior")
            bell_values[k] = evaluate_functional(behavior, params.functional)
            a[k], b[k] = devices.respond(k, int(xd[k]), int(yd[k]))
    else:
        a, b = devices.respond_batch(j, xd, yd)
    return Records(u, v, x, y, np.asarray(a, np.int8), np.asarray(b, np.int8), bell_values)


@dataclass(frozen=True, eq=False)
class Sifted:
    """Sifted rounds in time order, relabelled ``i = 0 .. m-1``."""

    rounds: np.ndarray
    test: np.ndarray
    records: Records

    @property
    def m(self) -> int:
        return int(self.rounds.size)

    @property
    def estimation(self) -> np.ndarray:
        """Sifted positions ``i`` with ``U_i = V_i = 1``."""
        return np.flatnonzero(self.test)

    @property
    def e_size(self) -> int:
        return int(self.test.sum())

    def _field(self, name):
        return getattr(self.records, name)[self.rounds]

    def estimation_data(self) -> np.ndarray:
        """Rows ``(a_i, b_i, x_i, y_i)`` for ``i`` in the estimation set."""
        idx = self.rounds[self.test]
        r = self.records
        return np.stack([r.a[idx], r.b[idx], r.x[idx], r.y[idx]], axis=1).astype(np.int64)

    @property
    def raw_key_alice(self) -> np.ndarray:
        return self.records.a[self.rounds[~self.test]].astype(np.uint8)

    @property
    def raw_key_bob(self) -> np.ndarray:
        return self.records.b[self.rounds[~self.test]].astype(np.uint8)

    def published(self) -> dict:
        """The estimation-step public data ``W``."""
        return {"u": self._field("u").astype(np.int64), "estimation": self.estimation_data()}


def sift(records: Records) -> Sifted:
    """Step 2: keep rounds with ``u = v``; those with ``u = v = 1`` form the estimation set."""
    rounds = np.flatnonzero(records.u == records.v)
    test = records.u[rounds] == 1
    return Sifted(rounds, test, records)


def estimate_bell(sifted: Sifted, functional: BellFunctional) -> float:
    """``I_est = lambda_X lambda_Y / |E| * sum over E of beta(a, b, x, y)``."""
    data = sifted.estimation_data()
    if data.shape[0] == 0:
        raise NoEstimate("estimation set is empty")
    sc = functional.scenario
    coefficients = functional.beta[data[:, 0], data[:, 1], data[:, 2], data[:, 3]]
    return float(sc.lambda_x * sc.lambda_y * coefficients.sum() / data.shape[0])


@dataclass(eq=False)
class Transcript:
    params: ProtocolParams
    records: Records
    sifted: Sifted
    status: str = OK
    i_est: float | None = None
    qber_estimate: float | None = None
    disclosed: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    ec: EcResult | None = None
    n_c: int = 0
    key_terms: KeyLengthTerms | None = None
    hash_seed: HashSeed | None = None
    key_alice: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint8))
    key_bob: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint8))

    @property
    def phase_boundary_round(self) -> int:
        """All measurements happen before this round index; communication after."""
        return self.params.n

    @property
    def n_k(self) -> int:
        return int(self.key_alice.size)

    @property
    def m(self) -> int:
        return self.sifted.m

    @property
    def e_size(self) -> int:
        return self.sifted.e_size

    @property
    def raw_key_alice(self) -> np.ndarray:
        return self.sifted.raw_key_alice

    @property
    def raw_key_bob(self) -> np.ndarray:
        return self.sifted.raw_key_bob

    def published(self) -> dict:
        """Everything Eve sees: ``W``, the error-correction messages and the hash seed."""
        w = self.sifted.published()
        w["ec_messages"] = self.ec.messages if self.ec is not None else np.zeros(0, np.uint8)
        w["disclosed_positions"] = self.disclosed
        if self.disclosed.size:
            w["disclosed_bits"] = self.raw_key_alice[self.disclosed]
        else:
            w["disclosed_bits"] = np.zeros(0, np.uint8)
        w["hash_seed"] = self.hash_seed.bits if self.hash_seed is not None else np.zeros(0, np.uint8)
        return w


def _without(bits: np.ndarray, positions: np.ndarray) -> np.ndarray:
    keep = np.ones(bits.size, bool)
    keep[positions] = False
    return bits[keep]


def run_full_protocol(params: ProtocolParams, devices: DevicePair) -> tuple[Transcript, SecurityReport]:
    """Run all four steps and evaluate the security bounds for the outcome.

    Aborts are outcomes, not exceptions: an empty estimation set, a failed
    verification tag or a non-positive key length all give ``n_K = 0`` with
    the corresponding ``status``.
    """
    records = run_measurement_phase(params, devices)
    sifted = sift(records)
    transcript = Transcript(params, records, sifted)

    def finish(status: str):
        transcript.status = status
        report = security_report(
            params.n,
            sifted.m,
            sifted.e_size,
            params.functional,
            n_k=transcript.n_k,
            q=params.q,
            status=status,
            n_c=transcript.n_c,
            i_est=transcript.i_est,
            key_terms=transcript.key_terms,
        )
        return transcript, report

    try:
        transcript.i_est = estimate_bell(sifted, params.functional)
    except NoEstimate:
        return finish(NO_ESTIMATE)

    r = sifted.raw_key_alice
    s = sifted.raw_key_bob
    if params.qber_hint is not None:
        qber, disclosed = params.qber_hint, np.zeros(0, np.int64)
    elif r.size:
        try:
            qber, disclosed = qber_from_sample(r, s, params.qber_sample_fraction, params.seed)
        except ValueError:
            qber, disclosed = 0.5, np.zeros(0, np.int64)
    else:
        qber, disclosed = 0.0, np.zeros(0, np.int64)
    transcript.qber_estimate = float(qber)
    transcript.disclosed = disclosed
    r_rest = _without(r, disclosed)
    s_rest = _without(s, disclosed)

    sc = params.scenario
    # Raises ReconciliationError for non-binary outputs.
    ec = error_correct(r_rest, s_rest, qber, params.ec_efficiency, params.seed, (sc.lambda_a, sc.lambda_b))
    transcript.ec = ec
    transcript.n_c = ec.n_c + int(disclosed.size)
    if not ec.success:
        return finish(EC_FAILURE)

    terms = key_length_terms(sifted.m, sifted.e_size, transcript.i_est, transcript.n_c, params.n, params.bound, sc)
    transcript.key_terms = terms
    n_k = min(terms.n_k, ec.corrected.size)
    if n_k == 0:
        return finish(KEY_LENGTH_ZERO)
    transcript.hash_seed = sample_hash(r_rest.size, n_k, rng.generator(params.seed, "pa-seed"))
    transcript.key_alice = apply_hash(transcript.hash_seed, r_rest)
    transcript.key_bob = apply_hash(transcript.hash_seed, ec.corrected)
    return finish(OK)


# -- persistence --------------------------------------------------------------


def format_real(value: float) -> str:
    """Fixed 17-significant-digit rendering used in every output file."""
    if value is None:
        return "null"
    if math.isnan(value):
        return '"nan"'
    if math.isinf(value):
        return '"inf"' if value > 0 else '"-inf"'
    return format(value, ".17g")


def _json_record(items: list[tuple[str, object]]) -> str:
    parts = []
    for key, value in items:
        if isinstance(value, bool) or value is None or isinstance(value, str):
            rendered = json.dumps(value)
        elif isinstance(value, (int, np.integer)):
            rendered = str(int(value))
        elif isinstance(value, (float, np.floating)):
            rendered = format_real(float(value))
        else:
            raise TypeError(f"cannot serialise {type(value).__name__}")
        parts.append(f"{json.dumps(key)}:{rendered}")
    return "{" + ",".join(parts) + "}"


def bits_to_hex(bits: np.ndarray) -> str:
    return np.packbits(np.asarray(bits, np.uint8)).tobytes().hex()


def hex_to_bits(text: str, length: int) -> np.ndarray:
    raw = np.frombuffer(bytes.fromhex(text), dtype=np.uint8)
    return np.unpackbits(raw)[:length].astype(np.uint8)


def _header(params: ProtocolParams) -> list[tuple[str, object]]:
    sc = params.scenario
    return [
        ("record", "header"),
        ("format", TRANSCRIPT_FORMAT),
        ("n", params.n),
        ("q", params.q),
        ("seed", params.seed),
        ("lambda_a", sc.lambda_a),
        ("lambda_b", sc.lambda_b),
        ("lambda_x", sc.lambda_x),
        ("lambda_y", sc.lambda_y),
        ("functional", params.functional.name),
        ("bound", params.bound.kind),
        ("ec_efficiency", params.ec_efficiency),
        ("qber_hint", params.qber_hint),
        ("qber_sample_fraction", params.qber_sample_fraction),
        ("phase_boundary_round", params.n),
    ]


def write_transcript(transcript: Transcript, stream: IO[str], include_rounds: bool = True):
    """Line-delimited JSON: header, one record per round, public, private, footer.

    Bit strings are written as packed big-endian hex with an explicit length.
    """
    stream.write(_json_record(_header(transcript.params)) + "\n")
    if include_rounds:
        r = transcript.records
        cols = np.stack([np.arange(r.n), r.u, r.v, r.x, r.y, r.a, r.b], axis=1).astype(np.int64)
        # One format string per line keeps the field order fixed.
        template = '{"record":"round","j":%d,"u":%d,"v":%d,"x":%d,"y":%d,"a":%d,"b":%d}\n'
        chunk = 65536
        for start in range(0, cols.shape[0], chunk):
            stream.write("".join(template % tuple(row) for row in cols[start : start + chunk].tolist()))
    ec = transcript.ec
    messages = ec.messages if ec is not None else np.zeros(0, np.uint8)
    syndrome_len = ec.syndrome_bits if ec is not None else 0
    hseed = transcript.hash_seed
    public = [
        ("record", "public"),
        ("qber_estimate", transcript.qber_estimate),
        ("disclosed_len", int(transcript.disclosed.size)),
        ("disclosed_positions", ",".join(str(int(p)) for p in transcript.disclosed)),
        ("disclosed_bits", bits_to_hex(transcript.raw_key_alice[transcript.disclosed]) if transcript.disclosed.size else ""),
        ("ec_syndrome_len", syndrome_len),
        ("ec_tag_len", int(messages.size - syndrome_len)),
        ("ec_messages_len", int(messages.size)),
        ("ec_messages", bits_to_hex(messages)),
        ("hash_input_len", hseed.input_len if hseed is not None else 0),
        ("hash_output_len", hseed.output_len if hseed is not None else 0),
        ("hash_seed_len", int(hseed.bits.size) if hseed is not None else 0),
        ("hash_seed", bits_to_hex(hseed.bits) if hseed is not None else ""),
    ]
    stream.write(_json_record(public) + "\n")
    private = [
        ("record", "private"),
        ("key_len", transcript.n_k),
        ("key_alice", bits_to_hex(transcript.key_alice)),
        ("key_bob", bits_to_hex(transcript.key_bob)),
    ]
    stream.write(_json_record(private) + "\n")
    footer = [
        ("record", "footer"),
        ("m", transcript.m),
        ("e_size", transcript.e_size),
        ("i_est", transcript.i_est),
        ("n_c", transcript.n_c),
        ("n_k", transcript.n_k),
        ("status", transcript.status),
    ]
    stream.write(_json_record(footer) + "\n")


def read_transcript(stream: IO[str]) -> dict:
    """Parse a transcript file back into plain arrays and dictionaries."""
    out: dict = {"rounds": []}
    for line in stream:
        rec = json.loads(line)
        kind = rec.pop("record")
        if kind == "round":
            out["rounds"].append(tuple(rec[k] for k in ROUND_FIELDS))
        else:
            out[kind] = rec
    out["rounds"] = np.array(out["rounds"], dtype=np.int64).reshape(-1, len(ROUND_FIELDS))
    pub = out.get("public")
    if pub is not None:
        pub["ec_messages"] = hex_to_bits(pub["ec_messages"], pub["ec_messages_len"])
        pub["hash_seed"] = hex_to_bits(pub["hash_seed"], pub["hash_seed_len"])
    return out


def with_seed(params: ProtocolParams, seed: int) -> ProtocolParams:
    return replace(params, seed=seed)

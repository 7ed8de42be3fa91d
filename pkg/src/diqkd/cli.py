"""Command-line front end.

Subcommands: ``rate-curve``, ``simulate``, ``verify``, ``security-report`` and
``pa-test``.  Options may also come from a flat ``key = value`` config file
(``--config``); flags given on the command line win.  Relative output paths
are resolved against ``$DIQKD_OUTPUT_DIR`` when it is set.

Exit codes: 0 on success (including protocol runs that end with no key),
1 when ``verify`` or ``pa-test`` finds a failing check, 2 on usage or
configuration errors.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

OUTPUT_DIR_ENV = "DIQKD_OUTPUT_DIR"
TRANSCRIPT_LIMIT = 10**7
EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE = 0, 1, 2


class ConfigError(ValueError):
    pass


def read_config(path: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for number, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{number}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if not key:
                raise ConfigError(f"{path}:{number}: empty key")
            values[key.replace("-", "_")] = value
    return values


def _count(text: str) -> int:
    """Integer that may be written as ``1e6``."""
    value = float(text)
    if not math.isfinite(value) or value != int(value):
        raise argparse.ArgumentTypeError(f"{text!r} is not an integer")
    return int(value)


def _output_path(path: str | None, default_name: str) -> Path | None:
    if path == "-":
        return None
    target = Path(path if path is not None else default_name)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not target.is_absolute():
        target = Path(base) / target
    target.parent.mkdir(parents=True, exist_ok=True)
    return target


def _emit(text: str, path: Path | None):
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text, encoding="utf-8")


def _real(v: float) -> str:
    return format(v, ".17g")


# -- commands -------------------------------------------------------------------


def cmd_rate_curve(args) -> int:
    from .rates import curve_csv, parse_grid, rate_curve

    try:
        grid = parse_grid(args.grid)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _emit(curve_csv(rate_curve(grid)), _output_path(args.out, "rates.csv"))
    return EXIT_OK


def _validate_simulation(args):
    if args.n < 16:
        raise ConfigError("n must be at least 16")
    if not 0.0 <= args.visibility <= 1.0:
        raise ConfigError("visibility must lie in [0, 1]")
    if args.q is not None and not 0.0 <= args.q <= 1.0:
        raise ConfigError("q must lie in [0, 1]")
    if args.f < 1.0:
        raise ConfigError("f must be at least 1")


def cmd_simulate(args) -> int:
    from .bell import bound_by_name
    from .devices import device_from_config
    from .protocol import ProtocolParams, format_real, run_full_protocol, write_transcript

    _validate_simulation(args)
    try:
        bound = bound_by_name(args.bound)
        devices = device_from_config(args.device, args.visibility, args.seed + 1, args.key_setting_mode)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    hint = args.qber_hint
    if hint is None and not args.sample_qber:
        # Calibrated mode: the honest model's error rate is taken as known.
        hint = getattr(devices, "key_qber", 0.0)
    params = ProtocolParams(
        n=args.n,
        q=args.q,
        bound=bound,
        ec_efficiency=args.f,
        seed=args.seed,
        qber_hint=hint,
        qber_sample_fraction=args.sample_fraction,
    )
    transcript, report = run_full_protocol(params, devices)
    lines = [
        "# run",
        "command = simulate",
        f"device = {args.device}",
        f"visibility = {format_real(args.visibility)}",
        f"seed = {args.seed}",
        f"bound = {bound.kind}",
        f"ec_efficiency = {format_real(args.f)}",
        f"qber_mode = {'calibrated' if hint is not None else 'sampled'}",
        f"qber_estimate = {format_real(transcript.qber_estimate) if transcript.qber_estimate is not None else 'none'}",
        f"disclosed_bits = {transcript.disclosed.size}",
        f"ec_success = {'true' if transcript.ec is not None and transcript.ec.success else 'false'}",
        f"keys_equal = {'true' if np.array_equal(transcript.key_alice, transcript.key_bob) else 'false'}",
        "# security",
    ]
    text = "\n".join(lines) + "\n" + report.to_text()
    _emit(text, _output_path(args.report, "report.txt"))
    if not args.no_transcript and args.n <= TRANSCRIPT_LIMIT:
        path = _output_path(args.transcript, "transcript.jsonl")
        if path is None:
            write_transcript(transcript, sys.stdout)
        else:
            with open(path, "w", encoding="utf-8") as fh:
                write_transcript(transcript, fh)
    if args.key_out:
        path = _output_path(args.key_out, "key.bin")
        data = np.packbits(transcript.key_alice).tobytes()
        if path is None:
            sys.stdout.buffer.write(data)
        else:
            path.write_bytes(data)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .checks import run_all

    if args.trials < 1:
        raise ConfigError("trials must be positive")
    results = run_all(seed=args.seed, trials=args.trials, tau_ns_variant=args.tau_ns)
    text = "".join(r.line() + "\n" for r in results)
    failed = [r.name for r in results if not r.passed]
    text += f"summary = {len(results) - len(failed)}/{len(results)} passed\n"
    if failed:
        text += "failed = " + ",".join(failed) + "\n"
    _emit(text, _output_path(args.out, "verify.txt") if args.out else None)
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def cmd_security_report(args) -> int:
    from .bell import chsh_functional
    from .protocol import default_test_probability
    from .security import security_report

    if args.n < 16:
        raise ConfigError("n must be at least 16")
    q = args.q if args.q is not None else default_test_probability(args.n)
    if not 0.0 < q < 1.0:
        raise ConfigError("q must lie in (0, 1)")
    m = args.m if args.m is not None else int(round(args.n * (q * q + (1.0 - q) ** 2)))
    e = args.e_size if args.e_size is not None else int(round(args.n * q * q))
    if not 0 <= e <= m <= args.n:
        raise ConfigError("need 0 <= e_size <= m <= n")
    report = security_report(args.n, m, e, chsh_functional(), q=q, status="bounds-only")
    source = "given" if args.m is not None or args.e_size is not None else "expected"
    _emit(f"counts = {source}\n" + report.to_text(), _output_path(args.out, "security.txt") if args.out else None)
    return EXIT_OK


def _toy_distribution(kind: str, bits: int, e_values: int, seed: int) -> np.ndarray:
    from . import rng

    size = 1 << bits
    if kind == "uniform":
        return np.full((size, e_values), 1.0 / (size * e_values))
    if kind == "point":
        joint = np.zeros((size, e_values))
        joint[0, 0] = 1.0
        return joint
    if kind == "first-bit":
        joint = np.zeros((size, 2))
        joint[np.arange(size), np.arange(size) & 1] = 1.0 / size
        return joint
    if kind == "random":
        gen = rng.generator(seed, "pa-test")
        return gen.dirichlet(np.full(size * e_values, 0.5)).reshape(size, e_values)
    raise ConfigError(f"unknown distribution {kind!r}")


def cmd_pa_test(args) -> int:
    from .oracles import ToeplitzFamily, exhaustive_hash_distance

    if not 1 <= args.input_bits <= 10:
        raise ConfigError("input-bits must lie in 1..10")
    if not 0 <= args.output_bits <= 16:
        raise ConfigError("output-bits must lie in 0..16")
    if not 1 <= args.e_values <= 64:
        raise ConfigError("e-values must lie in 1..64")
    joint = _toy_distribution(args.distribution, args.input_bits, args.e_values, args.seed)
    try:
        res = exhaustive_hash_distance(joint, ToeplitzFamily(args.input_bits, args.output_bits), args.output_bits, samples=args.samples, seed=args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    slack = 5.0 * res.standard_error + 1e-12
    holds = res.distance <= res.bound + slack
    text = (
        f"distribution = {args.distribution}\n"
        f"input_bits = {args.input_bits}\n"
        f"output_bits = {args.output_bits}\n"
        f"mode = {'exact' if res.exact else 'sampled'}\n"
        f"seeds = {res.seeds}\n"
        f"p_guess = {_real(res.p_guess)}\n"
        f"distance = {_real(res.distance)}\n"
        f"standard_error = {_real(res.standard_error)}\n"
        f"bound = {_real(res.bound)}\n"
        f"holds = {'true' if holds else 'false'}\n"
    )
    _emit(text, _output_path(args.out, "pa-test.txt") if args.out else None)
    return EXIT_OK if holds else EXIT_CHECK_FAILED


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="diqkd", description="Device-independent QKD simulator and calculator.")
    parser.add_argument("--config", help="flat key = value file; command-line flags override it")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rate-curve", help="asymptotic key rate versus noise (CSV)")
    p.add_argument("--grid", default="0:0.2:0.01", help="noise grid start:end:step (inclusive)")
    p.add_argument("--out", help="CSV path, '-' for stdout (default rates.csv)")
    p.set_defaults(run=cmd_rate_curve)

    p = sub.add_parser("simulate", help="run the full protocol once")
    p.add_argument("--n", type=_count, default=10**6)
    p.add_argument("--visibility", type=float, default=0.99)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--q", type=float, default=None, help="test probability (default n^(-1/8))")
    p.add_argument("--f", type=float, default=1.2, help="error-correction efficiency")
    p.add_argument("--bound", default="quantum", help="quantum or no-signalling")
    p.add_argument("--device", default="honest", help="honest, deterministic or pr")
    p.add_argument("--key-setting-mode", default="aligned-extra-setting")
    p.add_argument("--qber-hint", type=float, default=None, help="error rate used to size the syndrome")
    p.add_argument("--sample-qber", action="store_true", help="estimate the error rate from disclosed raw-key bits")
    p.add_argument("--sample-fraction", type=float, default=0.01)
    p.add_argument("--report", help="report path, '-' for stdout (default report.txt)")
    p.add_argument("--transcript", help="transcript path, '-' for stdout (default transcript.jsonl)")
    p.add_argument("--no-transcript", action="store_true")
    p.add_argument("--key-out", help="write Alice's key as packed bytes")
    p.set_defaults(run=cmd_simulate)

    p = sub.add_parser("verify", help="run the oracle cross-checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=_count, default=10**5, help="sampled seeds per two-universality pair")
    p.add_argument("--tau-ns", default="closed-form", choices=("closed-form", "paper-literal"))
    p.add_argument("--out", help="report path (default stdout)")
    p.set_defaults(run=cmd_verify)

    p = sub.add_parser("security-report", help="evaluate the finite-size bounds")
    p.add_argument("--n", type=_count, required=True)
    p.add_argument("--m", type=_count, default=None)
    p.add_argument("--e-size", type=_count, default=None)
    p.add_argument("--q", type=float, default=None)
    p.add_argument("--out", help="report path (default stdout)")
    p.set_defaults(run=cmd_security_report)

    p = sub.add_parser("pa-test", help="hashing distance versus its bound on a toy distribution")
    p.add_argument("--input-bits", type=int, default=4)
    p.add_argument("--output-bits", type=int, default=1)
    p.add_argument("--e-values", type=int, default=1)
    p.add_argument("--distribution", default="uniform", help="uniform, point, first-bit or random")
    p.add_argument("--samples", type=_count, default=None, help="sample seeds instead of enumerating")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="report path (default stdout)")
    p.set_defaults(run=cmd_pa_test)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    values = read_config(args.config)
    # Re-parse with config values as defaults so explicit flags still win.
    sub_parser = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest: a for a in sub_parser._actions}
    defaults = {}
    for key, raw in values.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r} for {args.command}")
        action = known[key]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        else:
            defaults[key] = action.type(raw) if action.type else raw
    sub_parser.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(parser, argv)
        return args.run(args)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    except (ConfigError, OSError) as exc:
        print(f"diqkd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

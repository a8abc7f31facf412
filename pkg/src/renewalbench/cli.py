"""Command-line front door: law inspection, path simulation, experiment
runs, the adversarial stage construction, and a self-test.

Exit codes: 0 success, 1 usage error (bad flags or subcommand), 2
validation error (well-formed invocation, bad values), 3 self-test
failure.  Every run echoes the resolved configuration, seeds included;
the echo goes to stdout when the data payload is written to a file and
to stderr when the payload itself occupies stdout, so the payload bytes
stay clean either way.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .adversary import (
    BudgetExhausted,
    advance_stage,
    audit_json,
    stage0,
    verify_stage,
)
from .evaluation import ExperimentConfig, emit_report, run_experiment
from .laws import law_from_json, law_info_text
from .paths import parse_start_mode, sample_path, dump_path
from .schemes import SchemeConfig, iter_eps, iter_log, iter_poly
from .selfcheck import run_selftest

# evaluate keeps per-event records only up to this many path positions;
# beyond it a CSV export would hold the whole event stream in memory
MAX_CSV_POSITIONS = 2_000_000

_ADVERSARY_RUNNERS = {"poly": iter_poly, "log": iter_log, "eps": iter_eps}


class _Parser(argparse.ArgumentParser):
    # the contract reserves exit code 2 for validation; usage errors
    # (argparse's default 2) must come back as 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _load_law(text: str):
    text = text.strip()
    if not text.startswith("{"):
        with open(text, "r", encoding="utf-8") as fh:
            text = fh.read()
    return law_from_json(text)


def _emit(payload: bytes, out: str | None, resolved: dict) -> None:
    echo = "# config " + json.dumps(resolved, sort_keys=True)
    if out:
        with open(out, "wb") as fh:
            fh.write(payload)
        print(echo)
    else:
        print(echo, file=sys.stderr)
        sys.stdout.buffer.write(payload)
        sys.stdout.buffer.flush()


def _cmd_law_info(args) -> int:
    law = _load_law(args.law)
    payload = (law_info_text(law) + "\n").encode()
    _emit(payload, args.out, {"law": law.provenance})
    return 0


def _cmd_simulate(args) -> int:
    law = _load_law(args.law)
    if args.length < 1:
        raise ValueError(f"length must be >= 1, got {args.length}")
    if not args.out:
        raise ValueError("simulate writes a binary path dump; --out is required")
    mode = parse_start_mode(args.mode)
    path = sample_path(law, args.length - 1, mode, seed=args.seed, stream=0)
    dump_path(path, args.out)
    print(
        "# config "
        + json.dumps(
            {
                "law": law.provenance,
                "length": args.length,
                "mode": mode.value,
                "seed": args.seed,
                "stream": 0,
                "out": args.out,
            },
            sort_keys=True,
        )
    )
    return 0


def _cmd_evaluate(args) -> int:
    base: dict = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            base = json.load(fh)
        if not isinstance(base, dict):
            raise ValueError("config file must hold a JSON object")
    if args.law:
        base["law"] = _load_law(args.law).provenance
    if args.scheme:
        base["scheme"] = args.scheme
    if args.length is not None:
        base["length"] = args.length
    if args.replicates is not None:
        base["replicates"] = args.replicates
    if args.seed is not None:
        base["base_seed"] = args.seed
    if args.mode:
        base["start_mode"] = args.mode
    scheme_config = dict(base.get("scheme_config") or {})
    if args.gamma is not None:
        scheme_config["gamma"] = args.gamma
    if args.epsilon is not None:
        scheme_config["epsilon"] = args.epsilon
    if args.alpha is not None:
        scheme_config["declared_alpha"] = args.alpha
    base["scheme_config"] = scheme_config
    for key in ("law", "scheme", "length"):
        if key not in base:
            raise ValueError(f"evaluate needs {key!r} from --config or flags")
    config = ExperimentConfig.from_json_dict(base)
    if args.format == "csv":
        if config.replicates * config.length > MAX_CSV_POSITIONS:
            raise ValueError(
                "CSV export retains every event record; limit replicates*length "
                f"to {MAX_CSV_POSITIONS} or use --format json"
            )
        if not config.keep_records:
            config = replace(config, keep_records=True)
    report = run_experiment(config)
    payload = emit_report(report, args.format) + b"\n"
    resolved = config.to_json_dict()
    resolved["format"] = args.format
    _emit(payload, args.out, resolved)
    return 0


def _cmd_adversary(args) -> int:
    scheme = args.scheme or "poly"
    if scheme not in _ADVERSARY_RUNNERS:
        raise ValueError(
            f"the staged construction needs a firing scheme, one of "
            f"{sorted(_ADVERSARY_RUNNERS)}; got {scheme!r}"
        )
    gamma = args.gamma
    epsilon = args.epsilon
    if scheme in ("poly", "log") and gamma is None:
        gamma = 0.3
    if scheme == "eps" and epsilon is None:
        epsilon = 0.1
    config = SchemeConfig(gamma=gamma, epsilon=epsilon, declared_alpha=args.alpha)
    runner = _ADVERSARY_RUNNERS[scheme]
    reps = args.replicates if args.replicates is not None else 2000
    seed = args.seed
    state = advance_stage(stage0(), runner, config, seed=seed)
    verify = verify_stage(state, runner, config, reps=reps, seed=seed + 58_000_001)
    try:
        further = advance_stage(state, runner, config, seed=seed + 1)
        next_stage = {"advanced": True, "audit": json.loads(audit_json(further))}
    except BudgetExhausted as exc:
        next_stage = {"advanced": False, "constraint": exc.constraint, "detail": str(exc)}
    resolved = {
        "scheme": scheme,
        "scheme_config": {
            "gamma": gamma,
            "epsilon": epsilon,
            "declared_alpha": args.alpha,
        },
        "seed": seed,
        "verify_reps": reps,
        "verify_seed": seed + 58_000_001,
    }
    payload = (
        json.dumps(
            {
                "audit": json.loads(audit_json(state)),
                "verify": verify,
                "next_stage": next_stage,
            },
            indent=2,
            sort_keys=True,
        ).encode()
        + b"\n"
    )
    _emit(payload, args.out, resolved)
    return 0


def _cmd_selftest(args) -> int:
    failures = run_selftest()
    return 3 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="renewalbench", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True, metavar="subcommand")

    def add(name, handler, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(handler=handler)
        return p

    p = add("law-info", _cmd_law_info, "print mean, zero frequency, and the residual table")
    p.add_argument("--law", required=True, help="law JSON (inline or a file path)")
    p.add_argument("--out", help="write the table here instead of stdout")

    p = add("simulate", _cmd_simulate, "sample one path and write a binary dump")
    p.add_argument("--law", required=True, help="law JSON (inline or a file path)")
    p.add_argument("--length", type=int, required=True, help="number of positions")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument(
        "--mode", choices=["stationary", "renewal"], default="stationary",
        help="start from the stationary window law or at a renewal",
    )
    p.add_argument("--out", required=True, help="dump file (.npz plus a JSON sidecar)")

    p = add("evaluate", _cmd_evaluate, "run a replicated experiment and write the report")
    p.add_argument("--config", help="experiment config JSON file; flags override it")
    p.add_argument("--law", help="law JSON (inline or a file path)")
    p.add_argument("--scheme", choices=["poly", "log", "offline", "eps"])
    p.add_argument("--gamma", type=float, help="exponent for poly/log firing thresholds")
    p.add_argument("--epsilon", type=float, help="occupancy slack for the eps scheme")
    p.add_argument("--alpha", type=float, help="declared power-moment order (warnings only)")
    p.add_argument("--seed", type=int, help="base seed; replicate r uses stream r")
    p.add_argument("--replicates", type=int)
    p.add_argument("--length", type=int, help="positions per replicate")
    p.add_argument("--mode", choices=["stationary", "renewal"])
    p.add_argument("--format", choices=["csv", "json"], default="json")
    p.add_argument("--out", help="write the report here instead of stdout")

    p = add("adversary", _cmd_adversary, "build stage 1, verify it, and probe the next stage")
    p.add_argument("--scheme", choices=["poly", "log", "eps"], default="poly")
    p.add_argument("--gamma", type=float, help="defaults to 0.3 for poly/log")
    p.add_argument("--epsilon", type=float, help="defaults to 0.1 for eps")
    p.add_argument("--alpha", type=float)
    p.add_argument("--seed", type=int, default=0, help="stage-search seed")
    p.add_argument("--replicates", type=int, help="verification reps (default 2000)")
    p.add_argument("--out", help="write the audit JSON here instead of stdout")

    add("selftest", _cmd_selftest, "run the curated oracle and invariant checks")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse printed the message already
        code = exc.code
        return code if isinstance(code, int) else 1
    try:
        return args.handler(args)
    except (ValueError, KeyError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command line entry point: ``swarmtrack run | validate | compare``."""

from __future__ import annotations

import argparse
import logging
import sys
import time

from swarmtrack.config import ScenarioConfig, ScenarioError, load_scenario
from swarmtrack.output import emit_results
from swarmtrack.planning import PolicyKind
from swarmtrack.simulation import run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

log = logging.getLogger("swarmtrack")


def _policy(name: str) -> PolicyKind:
    try:
        return PolicyKind.parse(name)
    except ValueError:
        choices = ", ".join(p.value for p in PolicyKind)
        raise argparse.ArgumentTypeError(f"unknown policy {name!r} (choose from {choices}, rollout-joint, rollout-seq)")


def _policy_list(text: str) -> list[PolicyKind]:
    names = [s for s in text.split(",") if s.strip()]
    if not names:
        raise argparse.ArgumentTypeError("at least one policy is required")
    out = []
    for s in names:
        p = _policy(s)
        if p not in out:
            out.append(p)
    return out


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _nonneg(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swarmtrack", description="Multi-UAV target tracking with rollout planning.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_out=True):
        p.add_argument("--scenario", required=True, help="scenario JSON path or bundled name (e.g. parkinglot)")
        p.add_argument("--trials", type=_positive, help="override experiment.trials")
        p.add_argument("--epochs", type=_positive, help="override experiment.epochs")
        p.add_argument("--seed", type=_nonneg, help="override experiment.base_seed")
        p.add_argument("--workers", type=_positive, default=1, help="parallel trial workers (default 1)")
        if with_out:
            p.add_argument("--out", required=True, help="output directory")

    run = sub.add_parser("run", help="run one policy over several trials")
    common(run)
    run.add_argument("--policy", type=_policy, help="override planning.policy")

    cmp_ = sub.add_parser("compare", help="run several policies on shared per-trial seeds")
    common(cmp_)
    cmp_.add_argument("--policies", type=_policy_list, required=True, help="comma-separated policy names")

    val = sub.add_parser("validate", help="check a scenario file and exit")
    val.add_argument("--scenario", required=True)
    return parser


def _resolved(config: ScenarioConfig, args) -> ScenarioConfig:
    exp = {}
    if args.trials is not None:
        exp["trials"] = args.trials
    if args.epochs is not None:
        exp["epochs"] = args.epochs
    if args.seed is not None:
        exp["base_seed"] = args.seed
    overrides = {"experiment": exp} if exp else {}
    if getattr(args, "policy", None) is not None:
        overrides["planning"] = {"policy": args.policy.value}
    return config.with_overrides(**overrides) if overrides else config


def _execute(config: ScenarioConfig, policies: list[PolicyKind], args) -> None:
    start = time.perf_counter()
    results = run_experiment(config, policies, workers=args.workers)
    paths = emit_results(results, args.out, config, {"command": args.command})
    log.info("finished in %.1f s", time.perf_counter() - start)
    for kind, path in paths.items():
        print(f"{kind}: {path}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = load_scenario(args.scenario)
        if args.command == "validate":
            print(f"ok: {config.name} ({len(config.agents)} agents, {config.targets.count} targets)")
            return EXIT_OK
        config = _resolved(config, args)
    except ScenarioError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"invalid scenario: cannot read {args.scenario}: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    policies = args.policies if args.command == "compare" else [config.policy()]
    try:
        _execute(config, policies, args)
    except Exception as exc:  # noqa: BLE001 - any failure here is a runtime failure
        log.debug("run failed", exc_info=True)
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

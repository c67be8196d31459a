"""Command-line entry point: run / eval / compare.

Exit codes: 0 success, 2 bad configuration or arguments, 3 training
divergence (partial outputs are kept).  Set HETNET_STEER_LOG=debug|info|...
to control log verbosity.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .engine import (
    derive_rng,
    format_comparison_table,
    run_experiment,
    STREAM_INIT,
    write_outputs,
)
from .errors import ConfigurationError, SnapshotError, TrainingDivergenceError
from .learning import SarsaParams
from .policies import POLICY_NAMES, POLICY_RLLB
from .scenario import load_scenario, reference_scenario
from .valuenet import init_weights, load_weights, save_weights

log = logging.getLogger("hetsteer")

UNTRAINED_WARN_EPISODES = 10_000  # epsilon reaches 0 here with reference parameters


def _add_common(parser: argparse.ArgumentParser, with_policy: bool) -> None:
    parser.add_argument("--scenario", metavar="PATH", help="scenario file (default: built-in reference)")
    if with_policy:
        parser.add_argument("--policy", required=True, choices=POLICY_NAMES)
    parser.add_argument("--episodes", type=int, default=1000, metavar="N")
    parser.add_argument("--seed", type=int, default=0, metavar="N")
    parser.add_argument("--out", required=True, metavar="DIR", help="output directory")
    parser.add_argument("--force", action="store_true", help="allow writing into an existing directory")
    parser.add_argument("--load-weights", metavar="PATH")
    parser.add_argument("--save-weights", metavar="PATH")
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--epsilon", type=float)
    parser.add_argument("--epsilon-dec", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hetsteer", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    _add_common(sub.add_parser("run", help="run one policy, training RLLB online"), with_policy=True)
    _add_common(sub.add_parser("eval", help="evaluate saved RLLB weights (epsilon=0, no updates)"), with_policy=False)
    _add_common(sub.add_parser("compare", help="run all three policies with a shared seed"), with_policy=False)
    return parser


def _setup_logging() -> None:
    level_name = os.environ.get("HETNET_STEER_LOG", "warning").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s")


def _load_config(args):
    if args.scenario:
        return load_scenario(args.scenario)
    return reference_scenario()


def _prepare_out_dir(args) -> Path:
    out = Path(args.out)
    if out.exists() and not args.force:
        raise ConfigurationError(f"output directory {out} exists; pass --force to write into it")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _params_from(args) -> SarsaParams:
    params = SarsaParams()
    overrides = {
        "alpha": args.alpha,
        "gamma": args.gamma,
        "epsilon": args.epsilon,
        "epsilon_dec": args.epsilon_dec,
    }
    return replace(params, **{k: v for k, v in overrides.items() if v is not None})


def cmd_run(args) -> int:
    config = _load_config(args)
    out = _prepare_out_dir(args)
    params = _params_from(args)
    qnet = None
    if args.policy == POLICY_RLLB:
        qnet = load_weights(args.load_weights) if args.load_weights else None
    elif args.load_weights or args.save_weights:
        log.warning("weight snapshot flags are ignored for policy %s", args.policy)
    result = run_experiment(
        config,
        args.policy,
        args.episodes,
        args.seed,
        out_dir=out,
        params=params,
        qnet=qnet,
    )
    if args.policy == POLICY_RLLB and args.save_weights:
        save_weights(result.qnet, args.save_weights)
        log.info("saved weights to %s", args.save_weights)
    print(format_comparison_table({args.policy: result.summary}))
    return 0


def cmd_eval(args) -> int:
    if not args.load_weights:
        raise ConfigurationError("eval needs --load-weights")
    config = _load_config(args)
    out = _prepare_out_dir(args)
    qnet = load_weights(args.load_weights)
    params = replace(_params_from(args), epsilon=0.0)
    result = run_experiment(
        config,
        POLICY_RLLB,
        args.episodes,
        args.seed,
        out_dir=out,
        params=params,
        qnet=qnet,
        train=False,
    )
    print(format_comparison_table({POLICY_RLLB: result.summary}))
    return 0


def cmd_compare(args) -> int:
    config = _load_config(args)
    out = _prepare_out_dir(args)
    params = _params_from(args)
    if args.episodes < UNTRAINED_WARN_EPISODES:
        print(
            f"warning: {args.episodes} episodes leave RLLB undertrained "
            f"(epsilon reaches 0 after {UNTRAINED_WARN_EPISODES})",
            file=sys.stderr,
        )
    summaries = {}
    rllb_net = None
    for policy in POLICY_NAMES:
        qnet = None
        if policy == POLICY_RLLB and args.load_weights:
            qnet = load_weights(args.load_weights)
        result = run_experiment(
            config,
            policy,
            args.episodes,
            args.seed,
            out_dir=out,
            params=params,
            qnet=qnet,
        )
        summaries[policy] = result.summary
        if policy == POLICY_RLLB:
            rllb_net = result.qnet
    if args.save_weights and rllb_net is not None:
        save_weights(rllb_net, args.save_weights)
    table = format_comparison_table(summaries)
    (out / "comparison.txt").write_text(table)
    print(table)
    return 0


_COMMANDS = {"run": cmd_run, "eval": cmd_eval, "compare": cmd_compare}


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigurationError, SnapshotError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingDivergenceError as exc:
        print(f"error: training diverged: {exc} (partial outputs kept)", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

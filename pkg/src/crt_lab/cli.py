"""Command line entry point: ``crt-lab {run,replicate,simulate,test}``.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import choice_task, harness, rt_task
from .engine import DEFAULT_RESAMPLES, SeedSpec, derive_stream
from .errors import ConfigurationError, CrtError, InvalidInputError

log = logging.getLogger("crt_lab")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _alpha_list(text):
    try:
        return tuple(float(a) for a in text.split(",") if a.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad alpha list {text!r}")


def _key_values(pairs):
    out = {}
    for pair in pairs or ():
        key, sep, value = pair.partition("=")
        if not sep:
            raise ConfigurationError(f"expected KEY=VALUE, got {pair!r}")
        try:
            out[key] = json.loads(value)
        except ValueError:
            out[key] = value
    return out


def _add_overrides(p):
    p.add_argument("--config", action="append", metavar="KEY=VALUE",
                   help="task config override, e.g. n_trials=200 (repeatable)")
    p.add_argument("--param", action="append", metavar="KEY=VALUE",
                   help="strategy/agent parameter override, e.g. stim_weight=1.5 (repeatable)")


def build_parser():
    parser = _Parser(prog="crt-lab", description="Conditional randomization tests for behavioral tasks")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run one batch experiment")
    run.add_argument("--task", choices=["rt", "choice"], required=True)
    run.add_argument("--scenario", required=True, help="strategy (rt) or agent (choice) name")
    run.add_argument("--resampler", choices=["conditional", "tangent"], default="conditional")
    run.add_argument("--statistic", help="mean_rt | same_trial | delayed (default per task)")
    run.add_argument("--sessions", type=int, default=1000)
    run.add_argument("--resamples", type=int, default=DEFAULT_RESAMPLES)
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--alpha", type=_alpha_list, default=(0.01, 0.05, 0.1))
    run.add_argument("--format", choices=["json", "csv"], default="json")
    run.add_argument("--out", type=Path, help="output file (default: stdout)")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--timing", action="store_true", help="include wall time in JSON output")
    _add_overrides(run)

    rep = sub.add_parser("replicate", help="run the full replication grid")
    rep.add_argument("--sessions", type=int, default=1000)
    rep.add_argument("--resamples", type=int, default=DEFAULT_RESAMPLES)
    rep.add_argument("--seed", type=int, default=harness.REPLICATION_SEED)
    rep.add_argument("--out", type=Path, help="directory for per-experiment JSON and summary.csv")
    rep.add_argument("--workers", type=int, default=1)

    sim = sub.add_parser("simulate", help="emit one simulated session as JSON")
    sim.add_argument("--task", choices=["rt", "choice"], required=True)
    sim.add_argument("--scenario", required=True)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--stream", type=int, default=0, help="stream index under the master seed")
    sim.add_argument("--out", type=Path)
    _add_overrides(sim)

    test = sub.add_parser("test", help="test a session JSON file")
    test.add_argument("session", type=Path)
    test.add_argument("--task", choices=["rt", "choice"], required=True)
    test.add_argument("--resampler", choices=["conditional", "tangent"], default="conditional")
    test.add_argument("--statistic", default="same_trial", help="choice task only")
    test.add_argument("--resamples", type=int, default=DEFAULT_RESAMPLES)
    test.add_argument("--seed", type=int, default=0)
    return parser


def _write(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def _cmd_run(args):
    statistic = args.statistic or harness.TASK_STATISTICS[args.task][0]
    spec = harness.ExperimentSpec(
        task=args.task, scenario=args.scenario, statistic=statistic,
        resampler=args.resampler, n_sessions=args.sessions, n_resamples=args.resamples,
        alpha_levels=args.alpha, master_seed=args.seed,
        config_overrides=_key_values(args.config), scenario_overrides=_key_values(args.param),
    ).validate()
    report = harness.run_experiment(spec, workers=args.workers)
    log.info("finished %d sessions in %.1f s", spec.n_sessions, report.wall_time_s)
    harness.emit_report(report, args.format, args.out, include_timing=args.timing)


def _cmd_replicate(args):
    if args.sessions < 1 or args.resamples < 1:
        raise ConfigurationError("--sessions and --resamples must be >= 1")
    results = harness.replicate_paper(args.sessions, args.resamples, args.seed, args.workers)
    if args.out is not None:
        harness.write_replication(results, args.out)
    print(harness.format_summary(harness.summary_rows(results)))


def _cmd_simulate(args):
    config_kw, scenario_kw = _key_values(args.config), _key_values(args.param)
    seed = SeedSpec(args.seed, args.stream)
    try:
        if args.task == "rt":
            strategy = rt_task.make_strategy(args.scenario, **scenario_kw)
            session = rt_task.simulate_rt_session(strategy, rt_task.RtConfig(**config_kw), derive_stream(seed))
            data = rt_task.session_to_dict(session)
        else:
            agent = choice_task.make_agent(args.scenario, **scenario_kw)
            session = choice_task.simulate_choice_session(agent, choice_task.ChoiceConfig(**config_kw), seed)
            data = choice_task.session_to_dict(session)
    except (InvalidInputError, TypeError) as exc:
        raise ConfigurationError(str(exc)) from exc
    _write(json.dumps(data) + "\n", args.out)


def _cmd_test(args):
    data = json.loads(args.session.read_text())
    seed = SeedSpec(args.seed)
    if args.task == "rt":
        outcome = rt_task.rt_crt(rt_task.session_from_dict(data), args.resamples, seed)
    else:
        session = choice_task.session_from_dict(data)
        outcome = choice_task.choice_crt(session, args.statistic, args.resampler, args.resamples, seed)
    print(json.dumps({"t_obs": outcome.t_obs, "p_value": outcome.p, "tail": outcome.tail.value,
                      "n_resamples": outcome.n_resamples}))


COMMANDS = {"run": _cmd_run, "replicate": _cmd_replicate, "simulate": _cmd_simulate, "test": _cmd_test}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CrtError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

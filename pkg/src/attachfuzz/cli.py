"""Command-line entry point.

Subcommands: ``run`` (campaign), ``compare``, ``reproduce``, ``dump-schemas``.
Campaign settings come from an optional flat ``key = value`` config file,
overridden by flags of the same name. Exit codes: 0 success or reproduced,
1 usage error, 2 runtime failure, 3 crash not reproduced.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from attachfuzz.campaign import (CampaignConfig, compare_campaigns, reproduce,
                                 run_campaign)
from attachfuzz.coverage import FeedbackMode
from attachfuzz.dissect import dump_schema_table
from attachfuzz.fuzzers import FuzzerConfig, FuzzerKind
from attachfuzz.mutation import SeedFormatError
from attachfuzz.packets import Direction
from attachfuzz.simulator import ReproMode

CONFIG_KEYS = ("mode", "direction", "feedback", "k", "beta", "replay_prob",
               "mut_prob", "iterations", "sets", "rng_seed", "out_dir", "diagnostics")


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Flat ``key = value`` settings; '#' starts a comment."""
    settings: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
        settings[key] = value
    return settings


def _truthy(value: str) -> bool:
    return value.strip().lower() in ("1", "true", "yes", "on")


def build_campaign_config(settings: dict[str, str]) -> CampaignConfig:
    kind = FuzzerKind(settings.get("mode", "random"))
    k_default = 3.0 if kind is FuzzerKind.COVERAGE else 0.5
    fuzzer = FuzzerConfig(
        kind=kind,
        k=float(settings.get("k", k_default)),
        beta=float(settings.get("beta", 4.0)),
        replay_prob=float(settings.get("replay_prob", 0.0)),
        mut_prob=float(settings["mut_prob"]) if "mut_prob" in settings else None,
        feedback=FeedbackMode(settings.get("feedback", "grey")),
        max_iterations=int(settings.get("iterations", 2000)),
        rng_seed=int(settings.get("rng_seed", 1)),
    )
    return CampaignConfig(
        fuzzer=fuzzer,
        direction=Direction(settings.get("direction", "DL")),
        sets=int(settings.get("sets", 20)),
        out_dir=Path(settings.get("out_dir", "out")),
        diagnostics=_truthy(settings.get("diagnostics", "false")),
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="attachfuzz",
                                     description="fuzz the simulated attach procedure")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a fuzzing campaign")
    run.add_argument("config_file", nargs="?", help="flat key = value settings file")
    for key in CONFIG_KEYS:
        run.add_argument(f"--{key.replace('_', '-')}", dest=key)

    cmp_p = sub.add_parser("compare", help="compare two campaign directories")
    cmp_p.add_argument("dir_a")
    cmp_p.add_argument("dir_b")
    cmp_p.add_argument("--baseline", help="no-fuzzing campaign directory (zero reference)")

    rep = sub.add_parser("reproduce", help="replay a recorded crash seed")
    rep.add_argument("seed_path")
    rep.add_argument("--mode", choices=[m.value for m in ReproMode], default="replay-all")
    rep.add_argument("--direction", choices=[d.value for d in Direction], default="DL")

    sub.add_parser("dump-schemas", help="print the dissector registry table")
    return parser


def _cmd_run(args) -> int:
    settings: dict[str, str] = {}
    if args.config_file:
        settings.update(parse_config_file(args.config_file))
    for key in CONFIG_KEYS:
        value = getattr(args, key)
        if value is not None:
            settings[key] = value
    config = build_campaign_config(settings)
    summary = run_campaign(config)
    print(f"campaign finished: {len(summary.finals_dut)} set(s), "
          f"median final DUT coverage {summary.median_dut:g}, "
          f"{summary.crashes} crash(es), {summary.hangs} hang(s)")
    print(f"outputs in {summary.out_dir}")
    return 0


def _cmd_compare(args) -> int:
    report = compare_campaigns(args.dir_a, args.dir_b, args.baseline)
    print(report.text())
    return 0


def _cmd_reproduce(args) -> int:
    code, outcome = reproduce(args.seed_path, ReproMode(args.mode),
                              Direction(args.direction))
    if code == 0:
        bug_id, effect = outcome.seed.bug
        print(f"reproduced {effect.value} {bug_id} "
              f"after {outcome.packets_exchanged} packet(s)")
    else:
        fired = outcome.seed.bug[0] if outcome.seed.bug else "no crash"
        print(f"not reproduced: iteration ended with {fired} "
              f"({outcome.packets_exchanged} packet(s))")
    return code


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "compare":
            return _cmd_compare(args)
        if args.command == "reproduce":
            return _cmd_reproduce(args)
        print(dump_schema_table())
        return 0
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, SeedFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # anything unexpected is a runtime failure
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``carnotlab run | list-scenarios | validate | show``.

Exit status: 0 when every check passes, 2 when any check fails or is
skipped, 1 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .config import ConfigError, check_scenario, parse_config, render
from .scenarios import builtin, builtin_ids, emit_report, render_csv, run_scenario

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 1, 2


def load_scenario(ref: str, seed: int | None = None):
    """A path to a TOML file, or the id of a built-in scenario."""
    path = Path(ref)
    if path.suffix == ".toml" or path.exists():
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError("<file>", f"cannot read {ref}: {exc.strerror}") from None
        s = parse_config(text)
    else:
        s = builtin(ref)
    if seed is not None:
        s = dataclasses.replace(s, seed=seed)
    check_scenario(s)
    return s


def _cmd_run(args) -> int:
    s = load_scenario(args.scenario, args.seed)
    rep = run_scenario(s, workers=args.workers)
    out = Path(args.out) if args.out else Path("runs") / s.id
    for p in emit_report(rep, args.format, out):
        print(f"wrote {p}", file=sys.stderr)
    sys.stdout.write(render_csv(rep, "checks"))
    return EXIT_OK if rep.passed else EXIT_FAIL


def _cmd_list(args) -> int:
    for sid in builtin_ids():
        print(f"{sid}\t{builtin(sid).description}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    s = load_scenario(args.scenario)
    print(f"{s.id}: ok (config sha256 {s.config_hash()})")
    return EXIT_OK


def _cmd_show(args) -> int:
    sys.stdout.write(render(load_scenario(args.scenario, args.seed)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="carnotlab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solve a scenario and write its report")
    run.add_argument("scenario", help="TOML config path or built-in scenario id")
    run.add_argument("--out", help="output directory (default runs/<id>)")
    run.add_argument("--format", choices=("csv", "json", "all"), default="all")
    run.add_argument("--seed", type=int, help="override the scenario seed")
    run.add_argument("--workers", type=int, default=1)
    run.set_defaults(fn=_cmd_run)

    ls = sub.add_parser("list-scenarios", help="list the built-in scenarios")
    ls.set_defaults(fn=_cmd_list)

    val = sub.add_parser("validate", help="parse and check a config without solving")
    val.add_argument("scenario")
    val.set_defaults(fn=_cmd_validate)

    show = sub.add_parser("show", help="print the normalised TOML of a scenario")
    show.add_argument("scenario")
    show.add_argument("--seed", type=int)
    show.set_defaults(fn=_cmd_show)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

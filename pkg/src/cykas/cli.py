"""The ``cykas`` command.

    cykas check    --protocol buggy-cykas --actors 3 --msgs 3
    cykas simulate n=20 hotspot_frac=0.1 --seed 4
    cykas sweep    --preset fig6 --seed 7
    cykas sweep    n=25,50 bandwidth_kbps=100,1000 --protocols cykas,matrix
    cykas replay   buggy-cykas-3x3.trace

Settings come from an optional ``--config`` file (one ``key = value`` per
line, ``#`` starts a comment), then from ``key=value`` arguments, then from
dedicated flags; later sources win. Unknown keys are errors.

Exit status: 0 pass, 1 property violation, 2 usage error, 3 exploration
stopped at a limit before covering the whole state space.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from itertools import product
from pathlib import Path
from typing import Callable, Optional

from . import modelcheck, netsim
from .netsim import SimConfig

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_LIMIT = 0, 1, 2, 3

# enough for MFSS at 3 x 3 (about 2.3M states); Cykas at 3 x 3 needs more
# memory than a laptop has, so it reports "incomplete" instead
DEFAULT_MAX_STATES = 3_000_000


class UsageError(Exception):
    pass


# -- settings -------------------------------------------------------------------


def _int(text: str) -> int:
    return int(text)


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str) -> Optional[float]:
    return None if text.lower() in ("", "none") else float(text)


CHECK_KEYS: dict[str, Callable[[str], object]] = {
    "protocol": str,
    "actors": _int,
    "msgs": _int,
    "script": modelcheck.parse_script,
    "max_states": _int,
    "max_depth": _int,
}


def _sim_keys() -> dict[str, Callable[[str], object]]:
    keys = {}
    for f in dataclasses.fields(SimConfig):
        default = f.default
        if f.name == "job_stddev_ms":
            keys[f.name] = _opt_float
        elif isinstance(default, bool):
            keys[f.name] = _bool
        elif isinstance(default, int):
            keys[f.name] = _int
        elif isinstance(default, float):
            keys[f.name] = float
        else:
            keys[f.name] = str
    return keys


SIM_KEYS = _sim_keys()


def read_config(path: str) -> list[tuple[str, str, str]]:
    """``(key, raw value, origin)`` triples from a config file."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    items = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"{path}:{lineno}: expected key = value, got {raw.strip()!r}")
        items.append((key.strip(), value.strip(), f"{path}:{lineno}"))
    return items


def split_overrides(pairs: list[str]) -> list[tuple[str, str, str]]:
    items = []
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep or not key:
            raise UsageError(f"expected key=value, got {pair!r}")
        items.append((key.strip(), value.strip(), f"argument {pair!r}"))
    return items


def parse_items(items, schema, multi: bool = False) -> dict:
    """Convert raw values by ``schema``. With ``multi``, comma-separated
    values become lists (for sweep grids)."""
    out = {}
    for key, raw, origin in items:
        if key not in schema:
            known = ", ".join(sorted(schema))
            raise UsageError(f"{origin}: unknown key {key!r} (known: {known})")
        convert = schema[key]
        try:
            if multi and key != "script":
                out[key] = [convert(v.strip()) for v in raw.split(",")]
            else:
                out[key] = convert(raw)
        except ValueError as exc:
            raise UsageError(f"{origin}: bad value for {key}: {exc}") from None
    return out


def gather(args, schema, multi: bool = False) -> dict:
    items = read_config(args.config) if args.config else []
    items += split_overrides(args.overrides)
    return parse_items(items, schema, multi)


def sim_config(values: dict, base: SimConfig = SimConfig()) -> SimConfig:
    try:
        return dataclasses.replace(base, **values)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# -- subcommands --------------------------------------------------------------


def cmd_check(args, out) -> int:
    values = gather(args, CHECK_KEYS)
    for key in ("protocol", "actors", "msgs", "max_states", "max_depth"):
        flag = getattr(args, key)
        if flag is not None:
            values[key] = flag
    protocol = values.get("protocol", "cykas")
    if "script" in values:
        script = values["script"]
    else:
        try:
            script = modelcheck.default_script(values.get("actors", 3), values.get("msgs", 2))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    try:
        report = modelcheck.explore(
            protocol,
            script,
            values.get("max_states", DEFAULT_MAX_STATES) or None,
            values.get("max_depth"),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None

    print(report.table(), file=out)
    if report.verdict == modelcheck.LIMIT:
        print("exploration stopped at a limit; the verdict is incomplete", file=out)
        return EXIT_LIMIT
    if report.passed:
        return EXIT_OK
    trace = args.trace or f"{report.protocol}-{len(script)}x{max(map(len, script))}.trace"
    Path(trace).write_text(modelcheck.write_trace(report))
    print(report.violation, file=out)
    print(f"counterexample ({len(report.trace)} steps) written to {trace}", file=out)
    return EXIT_VIOLATION


def cmd_simulate(args, out) -> int:
    values = gather(args, SIM_KEYS)
    if args.seed is not None:
        values["seed"] = args.seed
    cfg = sim_config(values)
    try:
        metrics = netsim.simulate(cfg, check=args.check)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out.write(netsim.format_csv([netsim.csv_row(cfg, metrics)], header=not args.no_header))
    if metrics.causal_violation:
        print(metrics.causal_violation, file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_sweep(args, out) -> int:
    values = gather(args, SIM_KEYS, multi=True)
    if args.preset:
        grid_fn, base = netsim.PRESETS[args.preset]
        # a preset fixes its own grid; other keys adjust the shared base
        scalar = {}
        for key, vals in values.items():
            if len(vals) != 1:
                raise UsageError(f"{key}: a preset takes single values, got {len(vals)}")
            scalar[key] = vals[0]
        cells = grid_fn(base=sim_config(scalar, base))
    else:
        if not values:
            raise UsageError("sweep needs --preset or at least one key=v1,v2,... grid axis")
        protocols = tuple(args.protocols.split(","))
        for name in protocols:
            if name not in netsim.SIM_PROTOCOLS:
                raise UsageError(f"unknown protocol {name!r}")
        keys = list(values)
        cells = [
            netsim.Cell(sim_config(dict(zip(keys, combo))), protocols)
            for combo in product(*(values[k] for k in keys))
        ]
    if not args.no_header:
        out.write(netsim.format_csv([], header=True))
    for cfg, metrics in netsim.run_sweep(cells, base_seed=args.seed or 0):
        out.write(netsim.format_csv([netsim.csv_row(cfg, metrics)], header=False))
        out.flush()
    return EXIT_OK


def cmd_replay(args, out) -> int:
    try:
        text = Path(args.trace_file).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read trace {args.trace_file}: {exc.strerror}") from None
    try:
        protocol, script, actions = modelcheck.read_trace(text)
        lines, verdict, violation = modelcheck.replay(protocol, script, actions)
    except ValueError as exc:
        raise UsageError(f"{args.trace_file}: {exc}") from None
    print(f"# protocol={protocol}", file=out)
    print(f"# script={modelcheck.format_script(script)}", file=out)
    for line in lines:
        print(line, file=out)
    print(f"# verdict={verdict}", file=out)
    if violation:
        print(f"# {violation}", file=out)
        return EXIT_VIOLATION
    return EXIT_OK


# -- argument parsing ------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cykas", description="Causal delivery protocols: model checking and simulation.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, overrides=True):
        p.add_argument("--config", help="key = value settings file")
        p.add_argument("--output", "-o", help="write results here instead of stdout")
        if overrides:
            p.add_argument("overrides", nargs="*", metavar="key=value")

    p = sub.add_parser("check", help="exhaustively explore a bounded scripted system")
    common(p)
    p.add_argument("--protocol", choices=sorted(modelcheck.protocols.PROTOCOLS))
    p.add_argument("--actors", type=int, help="number of processes (default 3)")
    p.add_argument("--msgs", type=int, help="application messages per process (default 2)")
    p.add_argument(
        "--max-states", dest="max_states", type=int,
        help=f"stop after this many unique states (default {DEFAULT_MAX_STATES:,}; 0 = no limit)",
    )
    p.add_argument("--max-depth", dest="max_depth", type=int)
    p.add_argument("--trace", help="counterexample file (default <protocol>-<n>x<m>.trace)")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("simulate", help="run one simulation and print a CSV row")
    common(p)
    p.add_argument("--seed", type=int)
    p.add_argument("--check", action="store_true", help="also run the causality checker")
    p.add_argument("--no-header", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run a grid of simulations and stream CSV rows")
    common(p)
    p.add_argument("--preset", choices=sorted(netsim.PRESETS))
    p.add_argument("--seed", type=int, help="base seed; cell seeds derive from it")
    p.add_argument("--protocols", default="cykas,mfss", help="for custom grids")
    p.add_argument("--no-header", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("replay", help="re-run and render a saved trace")
    common(p, overrides=False)
    p.add_argument("trace_file")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        return args.func(args, out)
    except UsageError as exc:
        print(f"cykas {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    finally:
        if out is not sys.stdout:
            out.close()

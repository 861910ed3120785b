"""Command-line front end.

Exit status: 0 on success, 1 for invalid input, 2 for runtime failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .control import tune_a0, tune_a1, well_tuned_residual
from .coordination import Strategy
from .engine import SimulationError, run
from .metrics import compare
from .scenario import Scenario, ScenarioError, apply_overrides, load_scenario, parse_units
from .weather import synth_weather

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
STRATEGY_NAMES = ("skewed", "flat", "gain", "price")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _window(text: str) -> tuple[float, float]:
    try:
        a, b = text.split(":")
        return float(a), float(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected START:STOP hours, got {text!r}")


def _scenario(args) -> Scenario:
    scenario = load_scenario(args.scenario)
    if args.set:
        scenario = apply_overrides(scenario, args.set)
    return scenario


def cmd_run(args) -> int:
    scenario = _scenario(args)
    result = run(scenario)
    result.write(args.out)
    m = result.metrics
    print(f"{scenario.name}: total discomfort {m.total_discomfort:.4f} degC h, "
          f"consumption {m.total_consumption:.6g} MWh -> {args.out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    base = _scenario(args)
    names = [s.strip() for s in args.strategies.split(",") if s.strip()]
    unknown = [s for s in names if s not in STRATEGY_NAMES]
    if unknown or not names:
        raise ScenarioError(f"unknown strategies {unknown}; choose from {STRATEGY_NAMES}")
    results = {}
    out = Path(args.out)
    for name in names:
        if name == "price":
            lam = args.lambdas or (base.strategy.lambdas if base.strategy.kind == "price" else None)
            if not lam:
                raise ScenarioError("price strategy needs --lambda")
            strategy = Strategy("price", tuple(lam))
        else:
            strategy = Strategy(name)
        scenario = dataclasses.replace(base, strategy=strategy, name=f"{base.name}:{name}")
        result = run(scenario)
        result.write(out / name)
        results[name] = result
    report = compare(results)
    text = report.to_text()
    (out / "report.txt").write_text(text, encoding="utf-8")
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def cmd_tune(args) -> int:
    source = Path(args.params)
    if source.is_file():
        try:
            data = json.loads(source.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{source}: invalid JSON ({exc})") from None
        units = parse_units(data)
    else:
        units = load_scenario(args.params).units
    rows = []
    for u in units:
        a1 = tune_a1(u)
        row = {"unit_id": u.unit_id, "residual": well_tuned_residual(u), "a1_star": a1}
        if args.Tc is not None:
            row["a0_star"] = tune_a0(dataclasses.replace(u, a1=a1), args.Tc)
        rows.append(row)
    if args.json:
        print(json.dumps(rows, indent=2))
        return EXIT_OK
    header = f"{'unit':>6} {'residual':>14} {'a1*':>12}" + (f" {'a0*':>12}" if args.Tc is not None else "")
    print(header)
    for r in rows:
        line = f"{r['unit_id']:>6} {r['residual']:>14.6f} {r['a1_star']:>12.6f}"
        if "a0_star" in r:
            line += f" {r['a0_star']:>12.6f}"
        print(line)
    return EXIT_OK


def cmd_weather(args) -> int:
    series = synth_weather(
        base=args.base,
        amplitude=args.amplitude,
        period=args.period,
        depth=args.depth,
        snap=args.snap,
        duration=args.duration,
    )
    series.write_csv(args.out)
    print(f"{len(series.time_h)} samples over [{series.start:g}, {series.end:g}] h -> {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairheat", description="Heat-deficit coordination for district heating units."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one scenario")
    p.add_argument("--scenario", required=True, help="scenario JSON path or bundled name")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a scenario field (repeatable)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="run several strategies on one scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--strategies", default=",".join(STRATEGY_NAMES))
    p.add_argument("--lambda", dest="lambdas", type=_floats, default=None,
                   help="price factors, one per unit")
    p.add_argument("--out", required=True)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("tune", help="report well-tuned heating-curve coefficients")
    p.add_argument("--params", required=True, help="unit parameter JSON, scenario file or bundled name")
    p.add_argument("--Tc", type=float, default=None, help="comfort temperature for a0*")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("weather", help="write a synthetic weather CSV")
    p.add_argument("--out", required=True)
    p.add_argument("--base", type=float, default=-2.0)
    p.add_argument("--amplitude", type=float, default=3.0)
    p.add_argument("--period", type=float, default=24.0)
    p.add_argument("--depth", type=float, default=10.0)
    p.add_argument("--snap", type=_window, default=(72.0, 120.0), metavar="START:STOP")
    p.add_argument("--duration", type=float, default=240.0)
    p.set_defaults(func=cmd_weather)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse reports usage errors with status 2, which is reserved for runtime failures
        return EXIT_INVALID if exc.code == 2 else exc.code
    try:
        return args.func(args)
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

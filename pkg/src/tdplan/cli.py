"""Command-line front end.

Exit codes: 0 success, 1 validation/planning/scheduling failure, 2 usage error.
Failures print a JSON object ``{"error": ..., "message": ..., ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import fixture_path
from .dot import to_dot
from .errors import TdplanError
from .kb import load_knowledge_base_file, parse_knowledge_base, validate_knowledge_base
from .planner import Order, PlannerConfig, deadend_causes, plan
from .scheduler import plan_and_schedule
from .simulator import estimate, without_taps

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _resolve(path: str) -> Path:
    p = Path(path)
    if p.exists():
        return p
    bundled = fixture_path(p.name)
    if bundled.exists():
        return bundled
    raise UsageError(f"knowledge base {path!r} not found")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write(text: str, out) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _config(args) -> PlannerConfig:
    try:
        return PlannerConfig(
            epsilon=args.epsilon,
            initial_p1=args.p1,
            max_expansions=args.max_expansions,
            order=Order(args.order),
            seed_order=args.seed_order,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _summary_rows(graph, schedule) -> list[tuple[str, str]]:
    return [
        ("knowledge base", graph.kb_name),
        ("expansion order", graph.order.value),
        ("states expanded", str(graph.expansions)),
        ("states total", str(len(graph.states))),
        ("state classes", ", ".join(f"{k}={v}" for k, v in graph.counts().items())),
        ("goal path", " -> ".join(v.label() for v in graph.goal_path)),
        ("goal-path probability", f"{graph.goal_path_prob:.6g}"),
        ("P1 / P2", f"{graph.p1:.6g} / {graph.p2:.6g}"),
        ("discarded mass", f"{graph.discarded_total:.6g}"),
        ("utilization", f"{schedule.utilization:.6g}"),
        ("feasible", str(schedule.feasible)),
        ("escalations", str(len(schedule.escalations))),
    ]


def _table(rows) -> str:
    width = max(len(k) for k, _ in rows)
    return "".join(f"{k:<{width}}  {v}\n" for k, v in rows)


def cmd_validate(args) -> int:
    kb = parse_knowledge_base(_resolve(args.kb).read_text())
    violations = validate_knowledge_base(kb)
    _write(_dump({"kb": kb.name, "valid": not violations,
                  "violations": [v.to_dict() for v in violations]}), args.output)
    return EXIT_FAIL if violations else EXIT_OK


def _compare(kb, args) -> str:
    rows = []
    base = _config(args)
    for order, seed in [(Order.PROBABILISTIC, None)] + [
        (Order.DEPTH_FIRST, k) for k in range(args.compare_orders)
    ]:
        cfg = PlannerConfig(base.epsilon, base.initial_p1, base.max_expansions,
                            order=order, seed_order=seed)
        try:
            g = plan(kb, cfg)
        except TdplanError as exc:
            rows.append((order.value, seed, "-", "-", "-", type(exc).__name__))
            continue
        rows.append((order.value, seed, g.expansions, len(g.goal_path) - 1,
                     f"{g.goal_path_prob:.4g}", g.counts().get("deadend", 0)))
    head = ("order", "seed", "expanded", "path_len", "goal_prob", "deadends")
    lines = ["  ".join(f"{h:>13}" for h in head)]
    lines += ["  ".join(f"{str(c):>13}" for c in r) for r in rows]
    dfs = [float(r[4]) for r in rows[1:] if r[4] != "-"]
    if dfs:
        lines.append(f"mean depth-first goal-path probability: {sum(dfs) / len(dfs):.4g}")
    return "\n".join(lines) + "\n"


def cmd_plan(args) -> int:
    kb = load_knowledge_base_file(_resolve(args.kb))
    if args.compare:
        sys.stdout.write(_compare(kb, args))
        return EXIT_OK
    graph, schedule = plan_and_schedule(kb, _config(args))
    payload = {"plan": graph.to_dict(), "schedule": schedule.to_dict(),
               "deadends": deadend_causes(graph, kb)}
    if args.output:
        _write(_dump(payload), args.output)
    if not args.quiet:
        sys.stdout.write(_table(_summary_rows(graph, schedule)))
    return EXIT_OK


def cmd_simulate(args) -> int:
    kb = load_knowledge_base_file(_resolve(args.kb))
    graph, schedule = plan_and_schedule(kb, _config(args))
    if args.drop_tap:
        schedule = without_taps(schedule, args.drop_tap)
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    report = estimate(graph, schedule, kb, args.trials, horizon=args.horizon, seed=args.seed,
                      per_cycle=args.per_cycle, workers=args.workers, trace_path=args.trace)
    _write(_dump(report.to_dict()), args.output)
    return EXIT_OK


def cmd_export_dot(args) -> int:
    kb = load_knowledge_base_file(_resolve(args.kb))
    cfg = _config(args)
    if args.no_schedule:
        graph = plan(kb, cfg)
    else:
        graph, _ = plan_and_schedule(kb, cfg)
    _write(to_dot(graph), args.output)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tdplan", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def planning_opts(p):
        p.add_argument("kb", help="knowledge-base JSON (or the name of a bundled fixture)")
        p.add_argument("--epsilon", type=float, default=0.01)
        p.add_argument("--p1", type=float, default=0.0, help="initial removal threshold")
        p.add_argument("--max-expansions", type=int, default=100_000)
        p.add_argument("--order", choices=[o.value for o in Order], default="probabilistic")
        p.add_argument("--seed-order", type=int, default=None,
                       help="shuffle depth-first expansion order with this seed")
        p.add_argument("-o", "--output", default=None)

    p = sub.add_parser("validate", help="check a knowledge base")
    p.add_argument("kb")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("plan", help="plan and schedule; print a summary")
    planning_opts(p)
    p.add_argument("-q", "--quiet", action="store_true")
    p.add_argument("--compare", action="store_true",
                   help="tabulate probabilistic vs depth-first planning")
    p.add_argument("--compare-orders", type=int, default=20)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="Monte Carlo validation of the plan")
    planning_opts(p)
    p.add_argument("--trials", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--per-cycle", type=int, default=1, help="best-effort firings per cycle")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--trace", default=None, help="write per-trial traces (JSON lines)")
    p.add_argument("--drop-tap", action="append", default=[],
                   help="remove a tap (by tap or action name) before simulating")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("export-dot", help="write the plan graph as Graphviz DOT")
    planning_opts(p)
    p.add_argument("--no-schedule", action="store_true", help="skip P1 escalation")
    p.set_defaults(func=cmd_export_dot)
    return parser


def _error(kind: str, message: str, **details) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message, **details}, sort_keys=True) + "\n")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        _error("UsageError", str(exc))
        return EXIT_USAGE
    except TdplanError as exc:
        _error(type(exc).__name__, str(exc), **exc.details())
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

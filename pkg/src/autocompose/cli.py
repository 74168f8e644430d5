"""Command-line entry point: ``autocompose mine|serve|simulate``."""
from __future__ import annotations

import argparse
import logging
import signal
import sys
import threading
from pathlib import Path

from . import fixtures
from .composer import PriceCatalog
from .decision import load_fixed_rules
from .engine import Engine
from .errors import AutocomposeError, TransportError
from .mining import (
    AssociationRule,
    FrequentItemsetTable,
    MiningConfig,
    TransactionSet,
    frequent_itemsets,
    generate_rules,
)
from .repository import Repository, load_dataset
from .simulate import load_scenario, render_report, run_scenario
from .transport import serve_peer

log = logging.getLogger("autocompose")


def _fmt(items) -> str:
    return "{" + ",".join(map(str, items)) + "}"


def render_mine_report(
    ts: TransactionSet,
    config: MiningConfig,
    table: FrequentItemsetTable,
    rules: list[AssociationRule],
) -> str:
    rows = [
        ("transactions", str(len(ts))),
        ("items", str(config.universe_size)),
        ("min_support_percent", f"{config.min_support_percent:g}"),
        ("support_threshold", str(config.support_threshold(len(ts)))),
        ("min_confidence", f"{config.min_confidence:g}"),
    ]
    # one level past the last non-empty one, to show where the search stopped
    top = table.max_level() + 1
    for k in range(1, top + 1):
        level = table.levels.get(k, [])
        rows.append((f"F{k}", " ".join(f"{_fmt(s)}:{c}" for s, c in level) or "-"))
    rows.append(("rules", str(len(rules))))
    for r in rules:
        rows.append(("rule", f"{r}\tsupport={r.support_count}\tconfidence={r.confidence:.6f}"))
    return "".join(f"{k}\t{v}\n" for k, v in rows)


def cmd_mine(args: argparse.Namespace) -> int:
    ts, config = load_dataset(args.transactions, args.config)
    table = frequent_itemsets(ts, config)
    rules = generate_rules(table, config)
    text = render_mine_report(ts, config, table, rules)
    if args.report in (None, "-"):
        sys.stdout.write(text)
    else:
        out = Path(args.report)
        out.write_text(text)
        if args.figures:
            from .plotting import plot_support

            plot_support(table, config.support_threshold(len(ts)), out.with_suffix(".png"))
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    steps = load_scenario(args.scenario)
    catalog = PriceCatalog.load(args.catalog)
    result = run_scenario(
        steps,
        None if args.empty_log else args.transactions,
        args.config,
        catalog,
        seed=args.seed,
        rules=load_fixed_rules(args.rules),
        mine_every=args.mine_every,
    )
    text = render_report(result)
    if args.report in (None, "-"):
        sys.stdout.write(text)
    else:
        out = Path(args.report)
        out.write_text(text)
        if args.figures:
            from .plotting import plot_dispatch

            plot_dispatch(result, out.with_suffix(".png"))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    repo = Repository(args.transactions, args.config, args.trigger_log, args.rule_store)
    repo.dataset()  # fail fast on bad seed files
    engine = Engine(
        repo,
        PriceCatalog.load(args.catalog),
        rules=load_fixed_rules(args.rules),
        mine_every=args.mine_every,
        local_items=args.local_items,
        remote_endpoint=args.remote,
        background_mining=True,
    )
    server = None
    if args.endpoint:
        try:
            server = serve_peer(args.endpoint, engine.peer_service)
        except TransportError as exc:
            print(f"startup error: {exc}", file=sys.stderr)
            return 3
        print(f"listening\t{server.endpoint}", flush=True)

    stop = threading.Event()

    def _stop(signum, frame):
        stop.set()

    for sig in (signal.SIGINT, signal.SIGTERM):
        signal.signal(sig, _stop)

    engine.start()
    try:
        if args.scenario:
            pending = []
            for step in load_scenario(args.scenario):
                if stop.is_set():
                    break
                if step.items is None:
                    for fut in pending:
                        _print_outcome(fut.result())
                    pending.clear()
                    engine.wait_for_mining()
                    engine.mine()
                    continue
                pending.append(engine.submit(step.items))
            for fut in pending:
                _print_outcome(fut.result())
        if server is not None:
            stop.wait()
    finally:
        if server is not None:
            server.close()
        engine.shutdown()
        runs = engine.stats.mining_runs
        unsupported = ",".join(runs[-1].unsupported) if runs else ""
        print(
            f"completed\t{engine.stats.completed}\nfailed\t{engine.stats.failed}\n"
            f"mining_runs\t{len(engine.stats.mining_runs)}\n"
            f"composites\t{','.join(c.service_id for c in engine.composer.installed) or '-'}\n"
            f"composites_unsupported\t{unsupported or '-'}",
            flush=True,
        )
    return 0


def _print_outcome(outcome) -> None:
    plan = outcome.plan.kind.value if outcome.plan else "-"
    status = "ok" if outcome.ok else f"failed: {outcome.error}"
    print(
        f"{outcome.event_id}\t{_fmt(outcome.requested_items)}\t{plan}\t"
        f"{outcome.sub_dispatch_count}\t{outcome.total_cost}\t{status}",
        flush=True,
    )


def _items(text: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",") if p]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated indices, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="autocompose", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def data_flags(p, required: bool) -> None:
        kw = {"required": True} if required else {}
        p.add_argument("--transactions", **kw, default=None if required else fixtures.path("transa.txt"),
                       help="0/1 transaction matrix")
        p.add_argument("--config", **kw, default=None if required else fixtures.path("config.txt"),
                       help="items, transactions, support percent[, min confidence]")

    mine = sub.add_parser("mine", help="mine frequent itemsets and rules from a transaction log")
    data_flags(mine, required=False)
    mine.add_argument("--report", "-o", help="output file (default: stdout)")
    mine.add_argument("--no-figures", dest="figures", action="store_false")
    mine.set_defaults(func=cmd_mine)

    serve = sub.add_parser("serve", help="run the engine")
    data_flags(serve, required=True)
    serve.add_argument("--catalog", default=fixtures.path("catalog.txt"))
    serve.add_argument("--rules", help="fixed rules file (default: built-in rules)")
    serve.add_argument("--endpoint", help="host:port to accept AC1 requests on")
    serve.add_argument("--remote", help="peer endpoint for services not held locally")
    serve.add_argument("--local-items", type=_items, help="items served locally (default: all)")
    serve.add_argument("--scenario", help="scripted requests to replay")
    serve.add_argument("--mine-every", type=int, default=25, metavar="K")
    serve.add_argument("--trigger-log")
    serve.add_argument("--rule-store")
    serve.set_defaults(func=cmd_serve)

    sim = sub.add_parser("simulate", help="replay a scenario and report dispatch metrics")
    sim.add_argument("scenario")
    data_flags(sim, required=False)
    sim.add_argument("--empty-log", action="store_true", help="start from an empty transaction log")
    sim.add_argument("--catalog", default=fixtures.path("catalog.txt"))
    sim.add_argument("--rules")
    sim.add_argument("--mine-every", type=int, default=25, metavar="K")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--report", "-o", help="output file (default: stdout)")
    sim.add_argument("--no-figures", dest="figures", action="store_false")
    sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (AutocomposeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Deterministic scenario replay for the autonomic loop.

A scenario file holds one request per line as comma-separated item indices.
A blank line is a mining checkpoint; lines starting with ``#`` are comments.
Dispatch latency is simulated: each hook invocation draws a service time from
a seeded exponential distribution, so reports depend only on scenario + seed.
"""
from __future__ import annotations

import os
import random
import shutil
import tempfile
from collections.abc import Sequence
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .composer import PriceCatalog
from .decision import DEFAULT_RULES, FixedRule
from .engine import Engine
from .errors import ContractError, ParseError
from .mining import Itemset, MiningConfig, itemset
from .repository import Repository, parse_config, serialize_config

MEAN_SERVICE_MS = 2.0
PLANNING_MS = 0.5


@dataclass(frozen=True)
class Step:
    line: int
    items: Itemset | None  # None marks a checkpoint


def parse_scenario(text: str, path: str = "<scenario>") -> list[Step]:
    lines = text.splitlines()
    steps = []
    for n, raw in enumerate(lines, start=1):
        line = raw.strip()
        if line.startswith("#"):
            continue
        if not line:
            steps.append(Step(n, None))
            continue
        parts = [p.strip() for p in line.split(",")]
        if not all(p.isdigit() for p in parts):
            raise ParseError(f"expected comma-separated item indices, got {raw!r}", path, n)
        try:
            items = itemset(int(p) for p in parts)
        except ContractError as exc:
            raise ParseError(str(exc), path, n) from None
        steps.append(Step(n, items))
    return steps


def load_scenario(path: str | os.PathLike) -> list[Step]:
    with open(path) as fh:
        return parse_scenario(fh.read(), str(path))


@dataclass(frozen=True)
class RequestRecord:
    index: int
    phase: int
    items: Itemset
    plan: str
    served_by: tuple[str, ...]
    sub_dispatch_count: int
    cost: int
    latency_ms: float
    ok: bool
    after_discovery: bool


@dataclass
class SimulationResult:
    seed: int
    records: list[RequestRecord] = field(default_factory=list)
    checkpoints: list[int] = field(default_factory=list)  # request count at each checkpoint
    mining_runs: int = 0
    composites: list[str] = field(default_factory=list)
    unsupported: list[str] = field(default_factory=list)  # as of the last mining run

    def phase_totals(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for r in self.records:
            out[r.phase] = out.get(r.phase, 0) + r.sub_dispatch_count
        return out

    def metrics(self) -> list[tuple[str, str]]:
        recs = self.records
        before = [r for r in recs if not r.after_discovery]
        after = [r for r in recs if r.after_discovery]
        mean_latency = sum(r.latency_ms for r in recs) / len(recs) if recs else 0.0
        rows: list[tuple[str, str]] = [
            ("seed", str(self.seed)),
            ("requests_served", str(sum(r.ok for r in recs))),
            ("requests_failed", str(sum(not r.ok for r in recs))),
            ("checkpoints", str(len(self.checkpoints))),
            ("mining_runs", str(self.mining_runs)),
            ("composites_installed", str(len(self.composites))),
            ("composites", ",".join(self.composites) or "-"),
            ("composites_unsupported", ",".join(self.unsupported) or "-"),
            ("sub_dispatch_total", str(sum(r.sub_dispatch_count for r in recs))),
            ("sub_dispatch_before_discovery_total", str(sum(r.sub_dispatch_count for r in before))),
            ("sub_dispatch_after_discovery_total", str(sum(r.sub_dispatch_count for r in after))),
            ("requests_before_discovery", str(len(before))),
            ("requests_after_discovery", str(len(after))),
            ("mean_dispatch_latency_ms", f"{mean_latency:.4f}"),
        ]
        for phase, total in sorted(self.phase_totals().items()):
            count = sum(1 for r in recs if r.phase == phase)
            rows.append((f"phase.{phase}.requests", str(count)))
            rows.append((f"phase.{phase}.sub_dispatch_total", str(total)))
        for r in recs:
            key = f"request.{r.index:04d}"
            rows.extend([
                (f"{key}.phase", str(r.phase)),
                (f"{key}.items", ",".join(map(str, r.items))),
                (f"{key}.plan", r.plan),
                (f"{key}.sub_dispatch_count", str(r.sub_dispatch_count)),
                (f"{key}.discovery", "after" if r.after_discovery else "before"),
                (f"{key}.cost", str(r.cost)),
                (f"{key}.latency_ms", f"{r.latency_ms:.4f}"),
            ])
        return rows


def render_report(result: SimulationResult, generated_at: datetime | None = None) -> str:
    when = (generated_at or datetime.now(timezone.utc)).isoformat(timespec="seconds")
    rows = [("generated_at", when), *result.metrics()]
    return "".join(f"{k}\t{v}\n" for k, v in rows)


def run_scenario(
    steps: Sequence[Step],
    transactions_path: str | os.PathLike | None,
    config_path: str | os.PathLike,
    catalog: PriceCatalog,
    seed: int = 0,
    rules: Sequence[FixedRule] = DEFAULT_RULES,
    mine_every: int = 25,
    workdir: str | os.PathLike | None = None,
) -> SimulationResult:
    """Replay ``steps`` against a scratch copy of the seed log.

    With ``transactions_path=None`` the log starts empty and only the item
    count and thresholds are taken from ``config_path``.
    """
    rng = random.Random(seed)
    result = SimulationResult(seed)
    with tempfile.TemporaryDirectory(prefix="autocompose-sim-") as scratch:
        root = Path(workdir) if workdir is not None else Path(scratch)
        root.mkdir(parents=True, exist_ok=True)
        tx, cfg = root / "transa.txt", root / "config.txt"
        if transactions_path is None:
            base = parse_config(Path(config_path).read_text(), str(config_path))
            tx.write_text("")
            cfg.write_text(serialize_config(MiningConfig(
                base.universe_size, 0, base.min_support_percent, base.min_confidence)))
        else:
            shutil.copyfile(transactions_path, tx)
            shutil.copyfile(config_path, cfg)
        for leftover in ("triggers.log", "rules.store"):
            (root / leftover).unlink(missing_ok=True)
        repo = Repository(tx, cfg)
        engine = Engine(repo, catalog, rules=rules, mine_every=mine_every)

        phase = 1
        for step in steps:
            if step.items is None:
                engine.mine()
                result.checkpoints.append(len(result.records))
                phase += 1
                continue
            if step.items[-1] > engine.universe_size:
                raise ParseError(f"item {step.items[-1]} outside the catalog", None, step.line)
            discovered = bool(engine.composer.installed)
            outcome = engine.request(step.items)
            latency = PLANNING_MS + sum(
                rng.expovariate(1 / MEAN_SERVICE_MS) for _ in range(outcome.sub_dispatch_count)
            )
            result.records.append(RequestRecord(
                index=len(result.records) + 1,
                phase=phase,
                items=step.items,
                plan=outcome.plan.kind.value if outcome.plan else "-",
                served_by=outcome.served_by,
                sub_dispatch_count=outcome.sub_dispatch_count,
                cost=outcome.total_cost,
                latency_ms=latency,
                ok=outcome.ok,
                after_discovery=discovered,
            ))
        result.mining_runs = len(engine.stats.mining_runs)
        if engine.stats.mining_runs:
            result.unsupported = engine.stats.mining_runs[-1].unsupported
        result.composites = [c.service_id for c in engine.composer.installed]
        engine.shutdown()
    return result

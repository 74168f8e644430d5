"""Request intake and plan selection.

A request becomes a :class:`ServiceEvent`, is matched against the fixed rule
table, and the winning rule is turned into a :class:`Plan` naming the service
handlers that will serve it.
"""
from __future__ import annotations

import enum
import itertools
import os
import threading
import time
from collections.abc import Callable, Collection, Iterable, Sequence
from dataclasses import dataclass

from .errors import ContractError, InconsistencyError, ParseError
from .mining import Itemset, is_subset, itemset
from .repository import Repository, TriggerRecord, parse_items

BUNDLE_SERVICE = "bundle"


class PlanKind(str, enum.Enum):
    PER_ITEM = "PerItem"
    BUNDLE = "Bundle"
    COMPOSITE = "Composite"


class Locality(str, enum.Enum):
    LOCAL = "Local"
    REMOTE = "Remote"


def item_service_id(item: int) -> str:
    return f"item-{item}"


def composite_service_id(items: Itemset) -> str:
    return "c-" + "-".join(str(i) for i in items)


@dataclass(frozen=True)
class ServiceEvent:
    event_id: str
    requested_items: Itemset
    received_at: float

    def __post_init__(self) -> None:
        if not self.requested_items:
            raise ContractError("a service event needs at least one item")


@dataclass(frozen=True)
class FixedRule:
    rule_id: str
    min_items: int
    max_items: int | None  # None = unbounded
    plan_kind: PlanKind
    priority: int = 0
    required: Itemset = ()

    def __post_init__(self) -> None:
        if self.min_items < 1:
            raise ContractError(f"rule {self.rule_id}: min must be >= 1")
        if self.max_items is not None and self.max_items < self.min_items:
            raise ContractError(f"rule {self.rule_id}: min > max")

    @property
    def is_catch_all(self) -> bool:
        return (
            self.plan_kind is PlanKind.PER_ITEM
            and self.min_items == 1
            and self.max_items is None
            and not self.required
        )

    def admits(self, items: Itemset) -> bool:
        n = len(items)
        if n < self.min_items or (self.max_items is not None and n > self.max_items):
            return False
        return is_subset(self.required, items)


@dataclass(frozen=True)
class Plan:
    plan_id: str
    kind: PlanKind
    target_services: tuple[str, ...]
    locality: Locality
    rule_id: str = ""


CATCH_ALL = FixedRule("per-item", 1, None, PlanKind.PER_ITEM, 0)

DEFAULT_RULES: tuple[FixedRule, ...] = (
    FixedRule("composite", 2, None, PlanKind.COMPOSITE, 30),
    FixedRule("plan1", 4, 4, PlanKind.BUNDLE, 20),
    FixedRule("plan2", 2, 2, PlanKind.BUNDLE, 20),
    CATCH_ALL,
)


def parse_fixed_rules(text: str, path: str = "<rules>") -> list[FixedRule]:
    """One rule per line: ``id min max kind priority [required]``.

    ``max`` may be ``*`` for no upper bound; ``required`` is a comma-separated
    item list. Blank lines and ``#`` comments are skipped. The per-item
    catch-all is appended when the file does not define one.
    """
    rules: list[FixedRule] = []
    seen: set[str] = set()
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (5, 6):
            raise ParseError(f"expected 5 or 6 fields, got {len(parts)}", path, n)
        rule_id, lo, hi, kind, prio = parts[:5]
        try:
            rule = FixedRule(
                rule_id,
                int(lo),
                None if hi == "*" else int(hi),
                PlanKind(kind),
                int(prio),
                parse_items(parts[5]) if len(parts) == 6 else (),
            )
        except (ValueError, ContractError) as exc:
            raise ParseError(str(exc), path, n) from None
        if rule_id in seen:
            raise ParseError(f"duplicate rule id {rule_id!r}", path, n)
        seen.add(rule_id)
        rules.append(rule)
    if not any(r.is_catch_all for r in rules):
        rules.append(CATCH_ALL if CATCH_ALL.rule_id not in seen else
                     FixedRule("per-item-default", 1, None, PlanKind.PER_ITEM, 0))
    return rules


def load_fixed_rules(path: str | os.PathLike | None = None) -> list[FixedRule]:
    if path is None:
        return list(DEFAULT_RULES)
    with open(path) as fh:
        return parse_fixed_rules(fh.read(), str(path))


def covering(composites: Iterable[Itemset], items: Itemset) -> list[Itemset]:
    return [c for c in composites if is_subset(items, c)]


def score(rule: FixedRule, items: Itemset, composites: Collection[Itemset]) -> int:
    bonus = 0
    if rule.plan_kind is PlanKind.COMPOSITE and covering(composites, items):
        bonus = 1000
    overlap = sum(1 for i in rule.required if i in items)
    return bonus + overlap


def match_rule(event: ServiceEvent, rules: Sequence[FixedRule], registry_view: Collection[Itemset]) -> FixedRule:
    """Pick the satisfied rule with the highest specificity score.

    Composite rules are satisfied only when a registered composite covers the
    request. Ties go to higher priority, then to the smaller rule id.
    """
    if not rules:
        raise ContractError("no fixed rules loaded")
    items = event.requested_items
    best = None
    best_key = None
    for rule in rules:
        if not rule.admits(items):
            continue
        if rule.plan_kind is PlanKind.COMPOSITE and not covering(registry_view, items):
            continue
        key = (score(rule, items, registry_view), rule.priority)
        if best is None or key > best_key or (key == best_key and rule.rule_id < best.rule_id):
            best, best_key = rule, key
    if best is None:
        raise ContractError(f"no rule admits event {event.event_id}; catch-all missing")
    return best


def select_plan(
    rule: FixedRule,
    event: ServiceEvent,
    registry_view: Collection[Itemset],
    local_services: Collection[str] | None = None,
) -> Plan:
    items = event.requested_items
    if rule.plan_kind is PlanKind.COMPOSITE:
        cover = covering(registry_view, items)
        if not cover:
            raise InconsistencyError(
                f"composite rule {rule.rule_id} chosen but nothing covers {items}"
            )
        chosen = min(cover, key=lambda c: (len(c), c))
        targets: tuple[str, ...] = (composite_service_id(chosen),)
    elif rule.plan_kind is PlanKind.BUNDLE:
        targets = (BUNDLE_SERVICE,)
    else:
        targets = tuple(item_service_id(i) for i in items)
    local = local_services is None or all(t in local_services for t in targets)
    return Plan(
        plan_id=f"{event.event_id}/{rule.rule_id}",
        kind=rule.plan_kind,
        target_services=targets,
        locality=Locality.LOCAL if local else Locality.REMOTE,
        rule_id=rule.rule_id,
    )


class Trigger:
    """Turns client requests into events and records each in the trigger log."""

    def __init__(
        self,
        universe_size: int,
        repository: Repository | None = None,
        clock: Callable[[], float] = time.time,
        prefix: str = "e",
    ):
        self.universe_size = universe_size
        self.repository = repository
        self.clock = clock
        self.prefix = prefix
        existing = repository.triggers() if repository is not None else []
        # resume numbering after a restart against an existing log
        self._ids = itertools.count(len(existing) + 1)
        self._lock = threading.Lock()
        self._last = existing[-1].timestamp if existing else float("-inf")

    def __call__(self, requested_items: Iterable[int], cause: str = "request") -> ServiceEvent:
        items = itemset(requested_items)
        if not items:
            raise ContractError("empty request")
        if items[-1] > self.universe_size:
            raise ContractError(f"unknown item {items[-1]}")
        with self._lock:
            now = max(self.clock(), self._last)
            self._last = now
            event = ServiceEvent(f"{self.prefix}{next(self._ids):06d}", items, now)
            if self.repository is not None:
                self.repository.record_trigger(TriggerRecord(event.event_id, items, now, cause))
        return event

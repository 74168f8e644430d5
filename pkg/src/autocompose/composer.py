"""Turns mined rules into composite services and installs them live."""
from __future__ import annotations

import logging
import os
import time
from collections.abc import Callable, Collection, Iterable, Mapping, Sequence
from dataclasses import dataclass, field

from .decision import Plan, ServiceEvent, composite_service_id
from .dispatcher import Dispatcher, HandlerRegistration, Interceptor, ServiceOutcome
from .errors import CatalogError, ParseError, RegistrationError
from .mining import AssociationRule, FrequentItemsetTable, Itemset, is_subset, maximal_itemsets
from .repository import Repository, RuleStoreEntry

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PriceCatalog:
    prices: Mapping[int, int]
    item_names: Mapping[int, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for item, price in self.prices.items():
            if price < 0:
                raise CatalogError(f"item {item} has negative price {price}")

    @classmethod
    def parse(cls, text: str, path: str = "<catalog>") -> PriceCatalog:
        """``index name price`` per line; prices are integer minor units."""
        prices: dict[int, int] = {}
        names: dict[int, str] = {}
        for n, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ParseError(f"expected 'index name price', got {raw!r}", path, n)
            try:
                idx, price = int(parts[0]), int(parts[2])
            except ValueError:
                raise ParseError(f"bad index or price in {raw!r}", path, n) from None
            if idx < 1 or price < 0:
                raise ParseError(f"index must be >= 1 and price >= 0 in {raw!r}", path, n)
            if idx in prices:
                raise ParseError(f"item {idx} priced twice", path, n)
            prices[idx] = price
            names[idx] = parts[1]
        return cls(prices, names)

    @classmethod
    def load(cls, path: str | os.PathLike) -> PriceCatalog:
        with open(path) as fh:
            return cls.parse(fh.read(), str(path))

    def covers(self, universe_size: int) -> bool:
        return all(i in self.prices for i in range(1, universe_size + 1))

    def name(self, item: int) -> str:
        return self.item_names.get(item, f"item-{item}")


def quote_cost(items: Iterable[int], catalog: PriceCatalog) -> int:
    total = 0
    for i in items:
        try:
            total += catalog.prices[i]
        except KeyError:
            raise CatalogError(f"item {i} is not in the catalog") from None
    return total


@dataclass(frozen=True)
class CompositeService:
    service_id: str
    itemset: Itemset
    source_rules: tuple[AssociationRule, ...]


def synthesize_composites(
    rules: Sequence[AssociationRule],
    table: FrequentItemsetTable,
    registry_view: Collection[Itemset] = (),
) -> list[CompositeService]:
    """One composite per maximal frequent itemset (size >= 2) backed by a rule.

    Itemsets already registered, or contained in a registered composite, are
    skipped, so repeated calls against an updated registry return nothing new.
    """
    by_items: dict[Itemset, list[AssociationRule]] = {}
    for r in rules:
        by_items.setdefault(r.items, []).append(r)
    out = []
    for items in maximal_itemsets(table, min_size=2):
        backing = by_items.get(items)
        if not backing:
            continue
        if any(is_subset(items, reg) for reg in registry_view):
            continue
        out.append(CompositeService(composite_service_id(items), items, tuple(backing)))
    return out


def quote_handler(handled: Itemset, catalog: PriceCatalog) -> Callable[[ServiceEvent, Plan], ServiceOutcome]:
    """A hook charging only the requested items this service handles."""

    def hook(event: ServiceEvent, plan: Plan) -> ServiceOutcome:
        served = [i for i in event.requested_items if i in handled]
        return ServiceOutcome(event.event_id, quote_cost(served, catalog))

    return hook


def primary_rule(composite: CompositeService) -> AssociationRule:
    # highest confidence, then the first one generated
    return max(enumerate(composite.source_rules), key=lambda p: (p[1].confidence, -p[0]))[1]


class Composer:
    """Installs composites into a dispatcher and records the rule→service link."""

    def __init__(
        self,
        dispatcher: Dispatcher,
        catalog: PriceCatalog,
        repository: Repository | None = None,
        interceptors: Sequence[Interceptor] = (),
        clock: Callable[[], float] = time.time,
    ):
        self.dispatcher = dispatcher
        self.catalog = catalog
        self.repository = repository
        self.interceptors = tuple(interceptors)
        self.clock = clock
        self.skipped: list[str] = []
        self.installed: list[CompositeService] = []

    def install(self, composites: Iterable[CompositeService]) -> int:
        entries = []
        count = 0
        for comp in composites:
            reg = HandlerRegistration(
                comp.service_id,
                comp.itemset,
                quote_handler(comp.itemset, self.catalog),
                self.interceptors,
                composite=True,
            )
            try:
                self.dispatcher.register_handler(reg)
            except RegistrationError as exc:
                log.info("skipping %s: %s", comp.service_id, exc)
                self.skipped.append(comp.service_id)
                continue
            count += 1
            self.installed.append(comp)
            entries.append(RuleStoreEntry(primary_rule(comp), self.clock(), comp.service_id))
            log.info("installed composite %s", comp.service_id)
        if self.repository is not None and entries:
            self.repository.add_rules(entries)
        return count

"""The autonomic loop: serve, log, mine, compose, register.

``Engine`` owns one dispatcher and one repository. Every completed request is
appended to the transaction log; every ``mine_every`` completions (and on an
explicit :meth:`Engine.mine`) the log is mined and new composites are
installed without stopping the dispatcher.
"""
from __future__ import annotations

import logging
import threading
import time
from collections.abc import Callable, Collection, Iterable, Sequence
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field

from .composer import Composer, CompositeService, PriceCatalog, quote_cost, quote_handler, synthesize_composites
from .decision import (
    BUNDLE_SERVICE,
    DEFAULT_RULES,
    FixedRule,
    Plan,
    ServiceEvent,
    Trigger,
    item_service_id,
)
from .dispatcher import Dispatcher, HandlerRegistration, Interceptor, ServiceOutcome
from .errors import CatalogError, ConfigError, ContractError
from .mining import (
    AssociationRule,
    FrequentItemsetTable,
    Itemset,
    frequent_itemsets,
    generate_rules,
    is_subset,
)
from .repository import Repository
from .transport import RemoteRequest, call_peer

log = logging.getLogger(__name__)

ANY_SERVICE = "*"


@dataclass
class MiningRun:
    transactions: int
    table: FrequentItemsetTable
    rules: list[AssociationRule]
    composites: list[CompositeService]
    installed: int
    # installed composites that no rule from this run backs any more; kept, only reported
    unsupported: list[str] = field(default_factory=list)


@dataclass
class EngineStats:
    completed: int = 0
    failed: int = 0
    mining_runs: list[MiningRun] = field(default_factory=list)


def audit_interceptor(logger: logging.Logger = log) -> Interceptor:
    """Logs entry and exit around a composite hook."""

    def before(service_id: str, event: ServiceEvent, plan: Plan) -> None:
        logger.debug("before %s %s", service_id, event.event_id)

    def after(service_id, event, plan, result, error) -> None:
        logger.debug("after %s %s%s", service_id, event.event_id, " (failed)" if error else "")

    return Interceptor(before, after)


class Engine:
    def __init__(
        self,
        repository: Repository,
        catalog: PriceCatalog,
        rules: Sequence[FixedRule] = DEFAULT_RULES,
        mine_every: int = 25,
        local_items: Collection[int] | None = None,
        remote_endpoint: str | None = None,
        remote_timeout: float = 5.0,
        interceptors: Sequence[Interceptor] | None = None,
        background_mining: bool = False,
        clock: Callable[[], float] = time.time,
    ):
        if mine_every < 1:
            raise ConfigError(f"mine_every must be >= 1, got {mine_every}")
        config = repository.config()
        self.universe_size = config.universe_size
        if not catalog.covers(self.universe_size):
            raise CatalogError(f"catalog does not price all {self.universe_size} items")
        self.repository = repository
        self.catalog = catalog
        self.mine_every = mine_every
        self.remote_endpoint = remote_endpoint
        self.remote_timeout = remote_timeout
        self.trigger = Trigger(self.universe_size, repository, clock=clock)
        self.dispatcher = Dispatcher(rules, remote=self._call_remote if remote_endpoint else None)
        if interceptors is None:
            interceptors = (audit_interceptor(),)
        self.composer = Composer(self.dispatcher, catalog, repository, interceptors, clock=clock)
        self.stats = EngineStats()
        self._lock = threading.Lock()
        self._waiters: dict[str, Future] = {}
        self._miner = ThreadPoolExecutor(1, thread_name_prefix="miner") if background_mining else None
        self._mining_futures: list[Future] = []

        universe = tuple(range(1, self.universe_size + 1))
        items = universe if local_items is None else sorted(set(local_items))
        for i in items:
            self.dispatcher.register_handler(
                HandlerRegistration(item_service_id(i), (i,), quote_handler((i,), catalog))
            )
        if local_items is None:
            self.dispatcher.register_handler(
                HandlerRegistration(BUNDLE_SERVICE, universe, quote_handler(universe, catalog))
            )
        self.dispatcher.add_listener(self._on_outcome)
        self._restore()

    def _restore(self) -> None:
        """Re-register composites recorded by a previous run."""
        restored = []
        for entry in self.repository.load_rules():
            if entry.composite_service and not self.dispatcher.is_registered(entry.composite_service):
                items = entry.rule.items
                restored.append(CompositeService(entry.composite_service, items, (entry.rule,)))
        for comp in restored:
            self.dispatcher.register_handler(HandlerRegistration(
                comp.service_id, comp.itemset, quote_handler(comp.itemset, self.catalog),
                self.composer.interceptors, composite=True,
            ))
            self.composer.installed.append(comp)
        if restored:
            log.info("restored %d composites from the rule store", len(restored))

    # request path

    def submit(self, items: Iterable[int]) -> Future:
        """Queue a request; the future resolves to its :class:`ServiceOutcome`."""
        event = self.trigger(items)
        fut: Future = Future()
        with self._lock:
            self._waiters[event.event_id] = fut
        try:
            self.dispatcher.submit(event)
        except Exception:
            with self._lock:
                self._waiters.pop(event.event_id, None)
            raise
        return fut

    def request(self, items: Iterable[int]) -> ServiceOutcome:
        """Serve one request synchronously on the caller's thread.

        Only valid while the dispatch loop is not running.
        """
        fut = self.submit(items)
        self.dispatcher.dispatch_next()
        return fut.result(timeout=0)

    def _on_outcome(self, outcome: ServiceOutcome) -> None:
        run_mining = False
        if outcome.ok:
            self.repository.append_transaction(outcome.requested_items)
            with self._lock:
                self.stats.completed += 1
                run_mining = self.stats.completed % self.mine_every == 0
        else:
            with self._lock:
                self.stats.failed += 1
        with self._lock:
            fut = self._waiters.pop(outcome.event_id, None)
        if fut is not None:
            fut.set_result(outcome)
        if run_mining:
            if self._miner is not None:
                self._mining_futures.append(self._miner.submit(self.mine))
            else:
                self.mine()

    # learning

    def registered_composites(self) -> set[Itemset]:
        return set(self.dispatcher.composite_view()) | {c.itemset for c in self.composer.installed}

    def mine(self) -> MiningRun:
        transactions, config = self.repository.dataset()
        table = frequent_itemsets(transactions, config)
        rules = generate_rules(table, config)
        composites = synthesize_composites(rules, table, self.registered_composites())
        installed = self.composer.install(composites)
        backed = {r.items for r in rules}
        unsupported = [c.service_id for c in self.composer.installed if c.itemset not in backed]
        run = MiningRun(len(transactions), table, rules, composites, installed, unsupported)
        with self._lock:
            self.stats.mining_runs.append(run)
        log.info(
            "mined %d transactions: %d frequent itemsets, %d rules, %d composites installed",
            len(transactions), len(table.itemsets()), len(rules), installed,
        )
        if unsupported:
            log.info("composites without a supporting rule: %s", ",".join(unsupported))
        return run

    def wait_for_mining(self) -> None:
        for fut in list(self._mining_futures):
            fut.result()

    # remote plans and the peer endpoint

    def _call_remote(self, target: str, event: ServiceEvent, plan: Plan) -> int:
        if target.startswith("item-"):
            items: Itemset = (int(target[5:]),)
        else:
            items = event.requested_items
        response = call_peer(self.remote_endpoint, RemoteRequest(target, items), self.remote_timeout)
        if not response.ok:
            raise RuntimeError(f"peer refused {target}: {response.message}")
        return response.total_cost

    def peer_service(self, request: RemoteRequest) -> int:
        """Answer an AC1 request: ``*`` runs the full pipeline, otherwise a direct quote."""
        if request.service_id == ANY_SERVICE:
            outcome = self.submit(request.items).result(timeout=30)
            if not outcome.ok:
                raise RuntimeError(outcome.error or "request failed")
            return outcome.total_cost
        reg = self.dispatcher.snapshot().get(request.service_id)
        if reg is None:
            raise LookupError(request.service_id)
        if not is_subset(request.items, reg.handled_itemset):
            raise ContractError(f"{request.service_id} does not serve items {list(request.items)}")
        return quote_cost(request.items, self.catalog)

    # lifecycle

    def start(self) -> None:
        self.dispatcher.start()

    def shutdown(self) -> None:
        self.dispatcher.shutdown(wait=True)
        if self._miner is not None:
            self._miner.shutdown(wait=True)

"""Single-loop reactor: a FIFO demultiplexer feeding an initiation dispatcher.

Handlers are looked up in a copy-on-write registry. A registration or removal
that arrives while an event is being dispatched is staged and applied once
that event finishes, so every event sees one consistent registry snapshot.
"""
from __future__ import annotations

import logging
import queue
import threading
import time
from collections.abc import Callable, Collection, Mapping, Sequence
from dataclasses import dataclass, replace
from types import MappingProxyType

from .decision import (
    DEFAULT_RULES,
    FixedRule,
    Plan,
    ServiceEvent,
    match_rule,
    select_plan,
)
from .errors import ContractError, RegistrationError, SubmissionError
from .mining import Itemset

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ServiceOutcome:
    event_id: str
    total_cost: int = 0
    served_by: tuple[str, ...] = ()
    sub_dispatch_count: int = 0
    ok: bool = True
    error: str | None = None
    plan: Plan | None = None
    requested_items: Itemset = ()
    latency: float = 0.0


Hook = Callable[[ServiceEvent, Plan], "ServiceOutcome | int"]
Before = Callable[[str, ServiceEvent, Plan], None]
After = Callable[[str, ServiceEvent, Plan, "ServiceOutcome | None", "BaseException | None"], None]
Remote = Callable[[str, ServiceEvent, Plan], "ServiceOutcome | int"]


@dataclass(frozen=True)
class Interceptor:
    """A before/after advice pair bracketing each hook call."""

    before: Before | None = None
    after: After | None = None


@dataclass(frozen=True)
class HandlerRegistration:
    service_id: str
    handled_itemset: Itemset
    handler: Hook
    interceptors: tuple[Interceptor, ...] = ()
    composite: bool = False

    def __post_init__(self) -> None:
        if not self.service_id:
            raise ContractError("service_id must be non-empty")
        if not self.handled_itemset:
            raise ContractError(f"{self.service_id}: handled itemset must be non-empty")


_STOP = object()


@dataclass
class _Stats:
    dispatched: int = 0
    failed: int = 0
    applied_ops: int = 0
    staged_ops: int = 0


class Dispatcher:
    def __init__(
        self,
        rules: Sequence[FixedRule] = DEFAULT_RULES,
        remote: Remote | None = None,
        clock: Callable[[], float] = time.perf_counter,
    ):
        self.rules = list(rules)
        self.remote = remote
        self.clock = clock
        self._queue: queue.Queue = queue.Queue()
        self._lock = threading.Lock()
        self._registry: Mapping[str, HandlerRegistration] = MappingProxyType({})
        self._ids: set[str] = set()  # registry as it will be once staged ops apply
        self._staged: list[tuple[str, object]] = []
        self._dispatching = 0
        self._closed = False
        self._listeners: list[Callable[[ServiceOutcome], None]] = []
        self._thread: threading.Thread | None = None
        self.stats = _Stats()

    # registry

    def snapshot(self) -> Mapping[str, HandlerRegistration]:
        return self._registry

    def composite_view(self, snapshot: Mapping[str, HandlerRegistration] | None = None) -> frozenset[Itemset]:
        snap = self._registry if snapshot is None else snapshot
        return frozenset(r.handled_itemset for r in snap.values() if r.composite)

    def is_registered(self, service_id: str) -> bool:
        with self._lock:
            return service_id in self._ids

    def _apply(self, ops: list[tuple[str, object]]) -> None:
        reg = dict(self._registry)
        for op, arg in ops:
            if op == "add":
                reg[arg.service_id] = arg
            else:
                del reg[arg]
        self._registry = MappingProxyType(reg)
        self.stats.applied_ops += len(ops)

    def _mutate(self, op: str, arg) -> None:
        # caller holds the lock
        if self._dispatching:
            self._staged.append((op, arg))
            self.stats.staged_ops += 1
        else:
            self._apply([(op, arg)])

    def register_handler(self, reg: HandlerRegistration) -> None:
        with self._lock:
            if reg.service_id in self._ids:
                raise RegistrationError(f"service {reg.service_id!r} already registered")
            self._ids.add(reg.service_id)
            self._mutate("add", reg)

    def remove_handler(self, service_id: str) -> None:
        with self._lock:
            if service_id not in self._ids:
                raise RegistrationError(f"service {service_id!r} is not registered")
            self._ids.discard(service_id)
            self._mutate("remove", service_id)

    # demultiplexer

    def submit(self, event: ServiceEvent) -> None:
        with self._lock:
            if self._closed:
                raise SubmissionError("dispatcher is shut down")
            self._queue.put(event)

    def pending(self) -> int:
        return self._queue.qsize()

    def add_listener(self, fn: Callable[[ServiceOutcome], None]) -> None:
        self._listeners.append(fn)

    # dispatch

    def dispatch_next(self, block: bool = True, timeout: float | None = None) -> ServiceOutcome:
        """Serve the oldest queued event. Raises ``queue.Empty`` when non-blocking and idle."""
        item = self._queue.get(block, timeout)
        if item is _STOP:
            self._queue.put(_STOP)
            raise SubmissionError("dispatcher is shut down")
        return self._dispatch(item)

    def _dispatch(self, event: ServiceEvent) -> ServiceOutcome:
        with self._lock:
            self._dispatching += 1
            snap = self._registry
        start = self.clock()
        try:
            outcome = self._serve(event, snap)
        finally:
            with self._lock:
                self._dispatching -= 1
                if not self._dispatching and self._staged:
                    staged, self._staged = self._staged, []
                    self._apply(staged)
        outcome = replace(outcome, latency=self.clock() - start)
        self.stats.dispatched += 1
        if not outcome.ok:
            self.stats.failed += 1
        for fn in self._listeners:
            try:
                fn(outcome)
            except Exception:
                log.exception("outcome listener failed for %s", event.event_id)
        return outcome

    def _serve(self, event: ServiceEvent, snap: Mapping[str, HandlerRegistration]) -> ServiceOutcome:
        composites = self.composite_view(snap)
        plan = None
        try:
            rule = match_rule(event, self.rules, composites)
            plan = select_plan(rule, event, composites, local_services=snap.keys())
        except Exception as exc:
            log.warning("planning failed for %s: %s", event.event_id, exc)
            return ServiceOutcome(event.event_id, ok=False, error=str(exc),
                                  requested_items=event.requested_items)

        total = 0
        served: list[str] = []
        calls = 0
        for target in plan.target_services:
            reg = snap.get(target)
            try:
                if reg is not None:
                    calls += 1
                    part = self._invoke(reg, event, plan)
                elif self.remote is not None:
                    calls += 1
                    part = self.remote(target, event, plan)
                else:
                    raise LookupError(f"no local handler for {target} and no remote peer")
            except Exception as exc:
                log.warning("event %s failed at %s: %s", event.event_id, target, exc)
                return ServiceOutcome(
                    event.event_id, total, tuple(served), calls, ok=False,
                    error=f"{target}: {exc}", plan=plan, requested_items=event.requested_items,
                )
            total += part.total_cost if isinstance(part, ServiceOutcome) else int(part)
            served.append(target)
        return ServiceOutcome(event.event_id, total, tuple(served), calls, plan=plan,
                              requested_items=event.requested_items)

    @staticmethod
    def _invoke(reg: HandlerRegistration, event: ServiceEvent, plan: Plan):
        entered: list[Interceptor] = []
        result = None
        error: BaseException | None = None
        try:
            for icp in reg.interceptors:
                if icp.before is not None:
                    icp.before(reg.service_id, event, plan)
                entered.append(icp)
            result = reg.handler(event, plan)
        except BaseException as exc:
            error = exc
        # afters run innermost first, and only for befores that completed
        for icp in reversed(entered):
            if icp.after is None:
                continue
            try:
                icp.after(reg.service_id, event, plan, result, error)
            except Exception as exc:
                if error is None:
                    error = exc
        if error is not None:
            raise error
        return result

    # loop

    def run(self) -> None:
        """Dispatch until :meth:`shutdown`; queued events are drained first."""
        while True:
            item = self._queue.get()
            if item is _STOP:
                self._queue.put(_STOP)
                return
            self._dispatch(item)

    def start(self) -> threading.Thread:
        if self._thread is not None:
            raise RuntimeError("dispatch loop already started")
        self._thread = threading.Thread(target=self.run, name="dispatch-loop", daemon=True)
        self._thread.start()
        return self._thread

    def shutdown(self, wait: bool = True, timeout: float | None = None) -> None:
        with self._lock:
            if self._closed:
                return
            self._closed = True
            self._queue.put(_STOP)
        if wait and self._thread is not None:
            self._thread.join(timeout)

    @property
    def closed(self) -> bool:
        return self._closed

    def local_services(self) -> Collection[str]:
        return self._registry.keys()

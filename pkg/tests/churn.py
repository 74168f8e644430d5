"""Randomized hot-insertion workload shared by the dispatcher and acceptance tests."""
from __future__ import annotations

import random
import threading
from dataclasses import dataclass, field

from autocompose.decision import ServiceEvent, composite_service_id, item_service_id
from autocompose.dispatcher import Dispatcher, HandlerRegistration, Interceptor, ServiceOutcome

UNIVERSE = 6


@dataclass
class ChurnResult:
    submitted: list[str] = field(default_factory=list)
    outcomes: list[ServiceOutcome] = field(default_factory=list)
    trace: list[tuple[str, str, str, int]] = field(default_factory=list)  # (kind, service, event, layer)
    snapshot_violations: list[str] = field(default_factory=list)
    ops_applied: int = 0
    hooks: int = 0
    failures_injected: int = 0
    staged_ops: int = 0
    final_composites: frozenset = frozenset()
    expected_composites: frozenset = frozenset()


def run_churn(seed: int, events: int = 1000, ops: int = 100, fail_every: int = 17) -> ChurnResult:
    rng = random.Random(seed)
    res = ChurnResult()
    lock = threading.Lock()
    d = Dispatcher()
    seen: dict[str, int] = {}  # event id -> id() of the registry snapshot observed
    # register/remove calls issued from inside a hook, so they always land mid-event
    deferred: dict[str, list] = {}

    def observe(event_id: str) -> None:
        snap = d.snapshot()
        with lock:
            first = seen.setdefault(event_id, id(snap))
            if first != id(snap):
                res.snapshot_violations.append(event_id)

    def interceptor(layer: int) -> Interceptor:
        def before(service_id, event, plan):
            observe(event.event_id)
            with lock:
                res.trace.append(("before", service_id, event.event_id, layer))

        def after(service_id, event, plan, result, error):
            observe(event.event_id)
            with lock:
                res.trace.append(("after", service_id, event.event_id, layer))

        return Interceptor(before, after)

    def hook_for(service_id: str):
        def hook(event: ServiceEvent, plan):
            observe(event.event_id)
            n = int(event.event_id[1:])
            with lock:
                res.trace.append(("hook", service_id, event.event_id, 0))
                res.hooks += 1
                todo = deferred.pop(event.event_id, [])
            for op in todo:
                op()
            if n % fail_every == 0:
                with lock:
                    res.failures_injected += 1
                raise RuntimeError("injected failure")
            return 1
        return hook

    def registration(service_id, items, composite=False):
        return HandlerRegistration(service_id, items, hook_for(service_id),
                                   (interceptor(1), interceptor(2)), composite)

    for i in range(1, UNIVERSE + 1):
        d.register_handler(registration(item_service_id(i), (i,)))
    d.register_handler(registration("bundle", tuple(range(1, UNIVERSE + 1))))

    pool = sorted({tuple(sorted(rng.sample(range(1, UNIVERSE + 1), rng.randint(2, 4)))) for _ in range(30)})
    live: list[tuple[int, ...]] = []
    d.add_listener(lambda o: res.outcomes.append(o))
    loop = d.start()

    op_slots = set(rng.sample(range(events), ops))
    for n in range(events):
        event_id = f"e{n + 1}"
        if n in op_slots:
            candidates = [p for p in pool if p not in live]
            if live and (not candidates or rng.random() < 0.4):
                victim = live.pop(rng.randrange(len(live)))
                op = lambda sid=composite_service_id(victim): d.remove_handler(sid)
            else:
                pick = rng.choice(candidates)
                reg = registration(composite_service_id(pick), pick, composite=True)
                op = lambda reg=reg: d.register_handler(reg)
                live.append(pick)
            with lock:
                deferred.setdefault(event_id, []).append(op)
            res.ops_applied += 1
        items = tuple(sorted(rng.sample(range(1, UNIVERSE + 1), rng.randint(1, 4))))
        event = ServiceEvent(event_id, items, float(n))
        res.submitted.append(event.event_id)
        d.submit(event)
    d.shutdown(wait=True)
    loop.join()
    res.staged_ops = d.stats.staged_ops
    res.final_composites = d.composite_view()
    res.expected_composites = frozenset(live)
    return res


def bracketing_violations(res: ChurnResult) -> list[str]:
    """Check each hook is bracketed: before(1), before(2), hook, after(2), after(1)."""
    problems = []
    by_call: dict[tuple[str, str], list[tuple[str, int]]] = {}
    for kind, service, event, layer in res.trace:
        by_call.setdefault((event, service), []).append((kind, layer))
    expected = [("before", 1), ("before", 2), ("hook", 0), ("after", 2), ("after", 1)]
    for key, seq in by_call.items():
        if seq != expected:
            problems.append(f"{key}: {seq}")
    return problems

"""Exit criteria. Each test records one PASS/FAIL line shown in the terminal summary."""
from __future__ import annotations

import random
import re
import shutil
import time
from itertools import combinations

import pytest

from autocompose import fixtures
from autocompose.cli import main
from autocompose.composer import PriceCatalog
from autocompose.decision import PlanKind
from autocompose.engine import Engine
from autocompose.errors import ProtocolError
from autocompose.mining import (
    AssociationRule,
    MiningConfig,
    TransactionSet,
    frequent_itemsets,
    generate_rules,
)
from autocompose.repository import Repository, RuleStoreEntry, load_dataset, parse_config, serialize_config
from autocompose.transport import (
    RemoteRequest,
    RemoteResponse,
    decode_request,
    decode_response,
    encode_request,
    encode_response,
)

from .churn import bracketing_violations, run_churn
from .conftest import ACCEPTANCE_LINES
from .oracles import SAMPLE_ROWS, brute_frequent, brute_rules, rows_to_masks, sets_to_masks

SAMPLE_BASKETS = [(1, 2, 3, 4), (1, 2), (1, 3, 4, 5), (2, 3, 4, 6), (1, 2, 3, 6)]


def record(number: int, title: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {number}. {title}: {detail}")
    assert ok, detail


def parse_level(text: str) -> dict[tuple[int, ...], int]:
    if text == "-":
        return {}
    out = {}
    for tok in text.split():
        items, count = re.fullmatch(r"\{([0-9,]+)\}:([0-9]+)", tok).groups()
        out[tuple(int(i) for i in items.split(","))] = int(count)
    return out


def test_1_apriori_fidelity(tmp_path):
    out = tmp_path / "mine.tsv"
    start = time.perf_counter()
    rc = main(["mine", "--report", str(out), "--no-figures"])
    elapsed = time.perf_counter() - start
    rows = dict(line.split("\t", 1) for line in out.read_text().splitlines() if not line.startswith("rule\t"))
    levels = {k: parse_level(rows[f"F{k}"]) for k in (1, 2, 3, 4)}
    oracle = brute_frequent(rows_to_masks(SAMPLE_ROWS), 6, 40)
    by_level = {k: {s: c for s, c in oracle.items() if len(s) == k} for k in (1, 2, 3, 4)}
    ok = (
        rc == 0
        and levels[1] == {(1,): 4, (2,): 4, (3,): 4, (4,): 3, (6,): 2}
        and len(levels[2]) == 8
        and levels[3] == {(1, 2, 3): 2, (1, 3, 4): 2, (2, 3, 4): 2, (2, 3, 6): 2}
        and levels[4] == {}
        and levels == by_level
        and elapsed < 1.0
    )
    record(1, "Apriori fidelity", ok,
           f"F1..F4 sizes {[len(levels[k]) for k in (1, 2, 3, 4)]} equal to 63-itemset oracle, {elapsed:.3f}s")


@pytest.fixture(scope="module")
def random_runs():
    rng = random.Random(20240601)
    runs = []
    start = time.perf_counter()
    for _ in range(200):
        universe = rng.randint(1, 8)
        n = rng.randint(0, 30)
        rows = [{i for i in range(1, universe + 1) if rng.random() < rng.uniform(0.2, 0.7)} for _ in range(n)]
        pct = rng.randint(10, 90)
        conf = rng.choice([0.2, 0.5, 0.6, 0.8, 1.0])
        cfg = MiningConfig(universe, n, pct, conf)
        table = frequent_itemsets(TransactionSet.from_rows(rows, universe), cfg)
        rules = generate_rules(table, cfg)
        runs.append((universe, rows, pct, conf, table, rules))
    return runs, time.perf_counter() - start


def test_2_oracle_equivalence(random_runs):
    runs, mining_time = random_runs
    start = time.perf_counter()
    mismatches = 0
    for universe, rows, pct, conf, table, rules in runs:
        masks = sets_to_masks(rows)
        if table.counts() != brute_frequent(masks, universe, pct):
            mismatches += 1
            continue
        got = {(r.antecedent, r.consequent): (r.support_count, r.confidence) for r in rules}
        want = brute_rules(masks, universe, pct, conf)
        if len(got) != len(rules) or got.keys() != want.keys() or any(
            got[k][0] != want[k][0] or abs(got[k][1] - float(want[k][1])) > 1e-12 for k in want
        ):
            mismatches += 1
    elapsed = mining_time + time.perf_counter() - start
    record(2, "Oracle equivalence", mismatches == 0 and elapsed < 30,
           f"{len(runs)} instances, {mismatches} mismatches, {elapsed:.2f}s")


def test_3_anti_monotonicity(random_runs):
    runs, _ = random_runs
    violations = checked = 0
    for *_, table, _rules in runs:
        for k, level in table.levels.items():
            if k < 2:
                continue
            prior = {s for s, _ in table.levels[k - 1]}
            for s, _ in level:
                checked += 1
                violations += sum(sub not in prior for sub in combinations(s, k - 1))
    record(3, "Anti-monotonicity", violations == 0, f"{checked} itemsets checked, {violations} violations")


def _seeded_engine(d):
    d.mkdir()
    for name in ("transa.txt", "config.txt", "catalog.txt"):
        shutil.copy(fixtures.path(name), d / name)
    return Engine(Repository(d / "transa.txt", d / "config.txt"), PriceCatalog.load(d / "catalog.txt"))


def test_4_composition_end_to_end(tmp_path):
    # before the checkpoint: sample log, nothing mined
    before = _seeded_engine(tmp_path / "before").request((2, 3, 6))

    eng = _seeded_engine(tmp_path / "after")
    phase1 = [eng.request(b) for b in SAMPLE_BASKETS]
    run = eng.mine()
    phase2 = [eng.request(b) for b in SAMPLE_BASKETS]
    after = eng.request((2, 3, 6))
    installed = sorted(c.service_id for c in eng.composer.installed)
    ok = (
        run.installed == 4
        and installed == ["c-1-2-3", "c-1-3-4", "c-2-3-4", "c-2-3-6"]
        and before.plan.kind is PlanKind.PER_ITEM and before.sub_dispatch_count == 3
        and after.plan.kind is PlanKind.COMPOSITE and after.sub_dispatch_count == 1
        and after.total_cost == before.total_cost
        and all(o.ok for o in phase1 + phase2)
    )
    record(4, "Composition end-to-end", ok,
           f"{run.installed} composites {installed}; {{2,3,6}} sub_dispatch {before.sub_dispatch_count} -> "
           f"{after.sub_dispatch_count}")


@pytest.fixture(scope="module")
def churn_runs():
    return [run_churn(seed, events=1000, ops=100) for seed in range(10)]


def test_5_hot_insertion_safety(churn_runs):
    failures = []
    for seed, res in enumerate(churn_runs):
        ids = [o.event_id for o in res.outcomes]
        if (len(res.outcomes) != 1000 or ids != res.submitted or res.snapshot_violations
                or res.ops_applied != 100 or res.staged_ops != 100
                or res.final_composites != res.expected_composites):
            failures.append(seed)
    record(5, "Hot-insertion safety", not failures,
           f"10 seeds x 1000 events x 100 mid-event register/remove ops; failing seeds {failures or 'none'}")


def test_6_interceptor_bracketing(churn_runs):
    hooks = problems = failed_hooks = 0
    for res in churn_runs:
        hooks += res.hooks
        failed_hooks += res.failures_injected
        problems += len(bracketing_violations(res))
        problems += sum(1 for kind, *_ in res.trace if kind == "hook") != res.hooks
    ok = problems == 0 and failed_hooks > 0
    record(6, "Interceptor bracketing", ok,
           f"{hooks} hooks ({failed_hooks} failing), {problems} bracketing violations")


REQ = re.compile(rb"AC1 REQ [\x21-\x7e]+ [1-9][0-9]*(,[1-9][0-9]*)*\n")
RESP = re.compile(rb"AC1 (OK (0|[1-9][0-9]*)|ERR [\x20-\x7e]+)\n")


def _valid_request(line: bytes) -> bool:
    if not REQ.fullmatch(line):
        return False
    items = [int(x) for x in line[:-1].rsplit(b" ", 1)[1].split(b",")]
    return all(a < b for a, b in zip(items, items[1:]))


def test_7_wire_protocol():
    rng = random.Random(7)
    visible = [chr(c) for c in range(0x21, 0x7F)]
    printable = [chr(c) for c in range(0x20, 0x7F)]
    valid_lines = []
    round_trip_failures = 0
    for n in range(10_000):
        if n % 2 == 0:
            sid = "".join(rng.choice(visible) for _ in range(rng.randint(1, 16)))
            items = tuple(sorted(rng.sample(range(1, 10_000), rng.randint(1, 8))))
            msg = RemoteRequest(sid, items)
            ok = decode_request(encode_request(msg)) == msg
            valid_lines.append(encode_request(msg))
        else:
            if rng.random() < 0.5:
                msg = RemoteResponse.success(rng.randint(0, 10**9))
            else:
                msg = RemoteResponse.failure("".join(rng.choice(printable) for _ in range(rng.randint(1, 40))))
            ok = decode_response(encode_response(msg)) == msg
            valid_lines.append(encode_response(msg))
        round_trip_failures += not ok

    malformed = crashes = accepted = 0
    while malformed < 10_000:
        kind = rng.random()
        if kind < 0.4:
            data = bytearray(rng.choice(valid_lines))
            for _ in range(rng.randint(1, 3)):
                op = rng.random()
                pos = rng.randrange(len(data) + 1)
                if op < 0.4 and pos < len(data):
                    data[pos] = rng.randrange(256)
                elif op < 0.7:
                    data.insert(pos, rng.randrange(256))
                elif pos < len(data):
                    del data[pos]
            line = bytes(data)
        elif kind < 0.7:
            line = bytes(rng.randrange(256) for _ in range(rng.randint(0, 40)))
        else:
            pieces = [b"AC1", b"AC2", b"AC", b"REQ", b"OK", b"ERR", b" ", b"  ", b",", b"1", b"0", b"x", b"\n", b"-3"]
            line = b"".join(rng.choice(pieces) for _ in range(rng.randint(1, 8)))
        is_req, is_resp = _valid_request(line), bool(RESP.fullmatch(line))
        for decode, valid in ((decode_request, is_req), (decode_response, is_resp)):
            try:
                decode(line)
                accepted += not valid
            except ProtocolError:
                accepted += valid  # a valid line must not be rejected either
            except Exception:
                crashes += 1
        if not (is_req or is_resp):
            malformed += 1
    ok = round_trip_failures == 0 and crashes == 0 and accepted == 0
    record(7, "Wire protocol", ok,
           f"10000 valid round-trips ({round_trip_failures} failures); {malformed} malformed lines, "
           f"{crashes} crashes, {accepted} misclassified")


def test_8_persistence(tmp_path):
    checks = {}
    for name in ("transa.txt", "config.txt"):
        shutil.copy(fixtures.path(name), tmp_path / name)
    repo = Repository(tmp_path / "transa.txt", tmp_path / "config.txt")
    before = (tmp_path / "transa.txt").read_bytes()
    repo.append_transaction([1, 6])
    ts, cfg = load_dataset(tmp_path / "transa.txt", tmp_path / "config.txt")
    checks["append"] = (
        (tmp_path / "transa.txt").read_bytes() == before + b"1 0 0 0 0 1\n"
        and ts.transactions[-1].items == (1, 6) and cfg.transaction_count == 6
    )
    entries = [
        RuleStoreEntry(AssociationRule((3, 6), (2,), 2, 1.0), 1.5, "c-2-3-6"),
        RuleStoreEntry(AssociationRule((1, 2), (3,), 2, 2 / 3), 2.5, None),
    ]
    repo.store_rules(entries)
    checks["rules"] = repo.load_rules() == entries
    three = parse_config("6\n5\n40\n")
    four = parse_config("6\n5\n40\n0.75\n")
    checks["config"] = (
        three == MiningConfig(6, 5, 40, 0.6) and four == MiningConfig(6, 5, 40, 0.75)
        and parse_config(serialize_config(four)) == four and parse_config(serialize_config(three)) == three
    )
    record(8, "Persistence round-trips", all(checks.values()),
           ", ".join(f"{k} {'ok' if v else 'BROKEN'}" for k, v in checks.items()))

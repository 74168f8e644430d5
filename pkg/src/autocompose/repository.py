"""Flat-file persistence: transaction matrix, mining config, trigger log, rule store.

File formats
------------
transactions  one row per transaction, ``0``/``1`` tokens separated by single
              spaces, column j set when item j was bought.
config        three lines (item count, transaction count, support percent)
              plus an optional fourth line holding the minimum confidence.
trigger log   ``event_id<TAB>items<TAB>timestamp<TAB>cause`` per line.
rule store    ``antecedent<TAB>consequent<TAB>support<TAB>confidence<TAB>
              discovered_at<TAB>service`` per line, ``-`` for no service.

Items are written as comma-separated indices, timestamps as UTC epoch seconds.
"""
from __future__ import annotations

import logging
import os
import tempfile
import threading
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError, ContractError, DuplicateIdError, ParseError, StorageError
from .mining import (
    DEFAULT_MIN_CONFIDENCE,
    AssociationRule,
    Itemset,
    MiningConfig,
    Transaction,
    TransactionSet,
    itemset,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TriggerRecord:
    event_id: str
    requested_items: Itemset
    timestamp: float
    cause: str = "request"


@dataclass(frozen=True)
class RuleStoreEntry:
    rule: AssociationRule
    discovered_at: float
    composite_service: str | None = None


def format_items(items: Iterable[int]) -> str:
    return ",".join(str(i) for i in items)


def parse_items(text: str) -> Itemset:
    if not text:
        return ()
    parts = text.split(",")
    if not all(p.isdigit() for p in parts):
        raise ValueError(f"bad item list {text!r}")
    return itemset(int(p) for p in parts)


def _format_number(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


# -- config / matrix -------------------------------------------------------

def parse_config(text: str, path: str = "<config>") -> MiningConfig:
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    if len(lines) not in (3, 4):
        raise ParseError(f"expected 3 or 4 lines, found {len(lines)}", path)
    values: list[float] = []
    for n, raw in enumerate(lines, start=1):
        tok = raw.strip()
        try:
            values.append(int(tok) if n <= 2 else float(tok))
        except ValueError:
            raise ParseError(f"not a number: {raw!r}", path, n) from None
    universe, count, support = values[:3]
    conf = values[3] if len(values) == 4 else DEFAULT_MIN_CONFIDENCE
    if support == int(support):
        support = int(support)
    try:
        return MiningConfig(int(universe), int(count), support, conf)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def serialize_config(config: MiningConfig) -> str:
    lines = [
        str(config.universe_size),
        str(config.transaction_count),
        _format_number(config.min_support_percent),
    ]
    if config.min_confidence != DEFAULT_MIN_CONFIDENCE:
        lines.append(_format_number(config.min_confidence))
    return "\n".join(lines) + "\n"


def encode_row(items: Itemset, universe_size: int) -> str:
    members = set(items)
    return " ".join("1" if j in members else "0" for j in range(1, universe_size + 1))


def parse_transactions(text: str, universe_size: int, path: str = "<transactions>") -> TransactionSet:
    lines = text.splitlines()
    while lines and not lines[-1].strip():
        lines.pop()
    rows = []
    for n, raw in enumerate(lines, start=1):
        cells = raw.rstrip().split(" ")
        if cells == [""]:
            raise ParseError("empty line", path, n)
        if len(cells) != universe_size:
            raise ParseError(f"row has {len(cells)} cells, expected {universe_size}", path, n)
        row = []
        for j, cell in enumerate(cells, start=1):
            if cell == "1":
                row.append(j)
            elif cell != "0":
                raise ParseError(f"non-binary cell {cell!r} in column {j}", path, n)
        rows.append(row)
    return TransactionSet.from_rows(rows, universe_size)


def serialize_transactions(transactions: TransactionSet) -> str:
    return "".join(
        encode_row(t.items, transactions.universe_size) + "\n" for t in transactions
    )


def load_dataset(transactions_path: str | os.PathLike, config_path: str | os.PathLike) -> tuple[TransactionSet, MiningConfig]:
    try:
        config_text = Path(config_path).read_text()
        tx_text = Path(transactions_path).read_text()
    except OSError as exc:
        raise StorageError(str(exc)) from exc
    config = parse_config(config_text, str(config_path))
    ts = parse_transactions(tx_text, config.universe_size, str(transactions_path))
    if len(ts) != config.transaction_count:
        raise ParseError(
            f"config declares {config.transaction_count} transactions, file holds {len(ts)}",
            str(transactions_path),
            len(ts) + 1 if len(ts) < config.transaction_count else config.transaction_count + 1,
        )
    return ts, config


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _durable_append(path: Path, text: str) -> None:
    with open(path, "a") as fh:
        fh.write(text)
        fh.flush()
        os.fsync(fh.fileno())


# -- the store -------------------------------------------------------------

class Repository:
    """Owner of every on-disk artifact.

    All mutations go through one lock; reads of the log and config take it too,
    so a reader never sees a row without its count bump or the reverse.
    """

    def __init__(
        self,
        transactions_path: str | os.PathLike,
        config_path: str | os.PathLike,
        trigger_log_path: str | os.PathLike | None = None,
        rule_store_path: str | os.PathLike | None = None,
    ):
        self.transactions_path = Path(transactions_path)
        self.config_path = Path(config_path)
        base = self.transactions_path.parent
        self.trigger_log_path = Path(trigger_log_path) if trigger_log_path else base / "triggers.log"
        self.rule_store_path = Path(rule_store_path) if rule_store_path else base / "rules.store"
        self._lock = threading.Lock()
        self._trigger_ids: set[str] | None = None
        self._last_trigger_ts = float("-inf")

    def dataset(self) -> tuple[TransactionSet, MiningConfig]:
        with self._lock:
            return load_dataset(self.transactions_path, self.config_path)

    def config(self) -> MiningConfig:
        with self._lock:
            return self._read_config()

    def _read_config(self) -> MiningConfig:
        try:
            text = self.config_path.read_text()
        except OSError as exc:
            raise StorageError(str(exc)) from exc
        return parse_config(text, str(self.config_path))

    def append_transaction(self, tx: Transaction | Iterable[int]) -> int:
        """Append one purchase row and bump the declared count. Returns the new count."""
        items = tx.items if isinstance(tx, Transaction) else itemset(tx)
        if not items:
            raise ContractError("empty transactions are not recorded")
        with self._lock:
            config = self._read_config()
            if items[-1] > config.universe_size:
                raise ContractError(
                    f"item {items[-1]} outside a universe of {config.universe_size}"
                )
            row = encode_row(items, config.universe_size) + "\n"
            try:
                if self.transactions_path.exists():
                    size = self.transactions_path.stat().st_size
                    if size:
                        with open(self.transactions_path, "rb") as fh:
                            fh.seek(size - 1)
                            if fh.read(1) != b"\n":
                                row = "\n" + row
                _durable_append(self.transactions_path, row)
                bumped = MiningConfig(
                    config.universe_size,
                    config.transaction_count + 1,
                    config.min_support_percent,
                    config.min_confidence,
                )
                _atomic_write(self.config_path, serialize_config(bumped))
            except OSError as exc:
                raise StorageError(f"append failed: {exc}") from exc
            return bumped.transaction_count

    # trigger log

    def _load_trigger_index(self) -> set[str]:
        if self._trigger_ids is None:
            records = self.triggers()
            self._trigger_ids = {r.event_id for r in records}
            if records:
                self._last_trigger_ts = records[-1].timestamp
        return self._trigger_ids

    def record_trigger(self, record: TriggerRecord) -> None:
        for name, value in (("event_id", record.event_id), ("cause", record.cause)):
            if not value or any(c in value for c in "\t\r\n"):
                raise ContractError(f"{name} must be non-empty and free of tabs/newlines")
        with self._lock:
            ids = self._load_trigger_index()
            if record.event_id in ids:
                raise DuplicateIdError(f"event {record.event_id!r} already logged")
            if record.timestamp < self._last_trigger_ts:
                raise ContractError("trigger timestamps must be non-decreasing")
            line = "\t".join((
                record.event_id,
                format_items(record.requested_items),
                repr(float(record.timestamp)),
                record.cause,
            ))
            try:
                _durable_append(self.trigger_log_path, line + "\n")
            except OSError as exc:
                raise StorageError(f"trigger log write failed: {exc}") from exc
            ids.add(record.event_id)
            self._last_trigger_ts = record.timestamp

    def triggers(self) -> list[TriggerRecord]:
        if not self.trigger_log_path.exists():
            return []
        out = []
        for n, raw in enumerate(self.trigger_log_path.read_text().splitlines(), start=1):
            if not raw:
                continue
            try:
                event_id, items, ts, cause = raw.split("\t")
                out.append(TriggerRecord(event_id, parse_items(items), float(ts), cause))
            except ValueError:
                raise ParseError("malformed trigger record", str(self.trigger_log_path), n) from None
        return out

    def get_trigger(self, event_id: str) -> TriggerRecord:
        for r in self.triggers():
            if r.event_id == event_id:
                return r
        raise KeyError(event_id)

    # rule store

    @staticmethod
    def _format_entry(e: RuleStoreEntry) -> str:
        r = e.rule
        return "\t".join((
            format_items(r.antecedent),
            format_items(r.consequent),
            str(r.support_count),
            repr(float(r.confidence)),
            repr(float(e.discovered_at)),
            e.composite_service or "-",
        ))

    def store_rules(self, entries: Iterable[RuleStoreEntry]) -> None:
        text = "".join(self._format_entry(e) + "\n" for e in entries)
        with self._lock:
            try:
                _atomic_write(self.rule_store_path, text)
            except OSError as exc:
                raise StorageError(f"rule store write failed: {exc}") from exc

    def add_rules(self, entries: Iterable[RuleStoreEntry]) -> None:
        text = "".join(self._format_entry(e) + "\n" for e in entries)
        if not text:
            return
        with self._lock:
            try:
                _durable_append(self.rule_store_path, text)
            except OSError as exc:
                raise StorageError(f"rule store write failed: {exc}") from exc

    def load_rules(self) -> list[RuleStoreEntry]:
        if not self.rule_store_path.exists():
            return []
        out = []
        for n, raw in enumerate(self.rule_store_path.read_text().splitlines(), start=1):
            if not raw:
                continue
            try:
                ante, cons, support, conf, when, service = raw.split("\t")
                rule = AssociationRule(parse_items(ante), parse_items(cons), int(support), float(conf))
            except ValueError:
                raise ParseError("malformed rule entry", str(self.rule_store_path), n) from None
            out.append(RuleStoreEntry(rule, float(when), None if service == "-" else service))
        return out

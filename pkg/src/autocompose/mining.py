"""Apriori frequent-itemset mining and confidence-based rule extraction.

Itemsets are plain tuples of 1-based item indices kept strictly ascending.
Every function here is pure: inputs are never mutated, and identical inputs
produce identically ordered outputs.
"""
from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

from .errors import ConfigError, ContractError

Itemset = tuple[int, ...]

DEFAULT_MIN_CONFIDENCE = 0.6


def itemset(items: Iterable[int]) -> Itemset:
    """Canonicalize ``items`` into an ascending, duplicate-free tuple."""
    out = tuple(sorted(set(items)))
    for i in out:
        if isinstance(i, bool) or not isinstance(i, int) or i < 1:
            raise ContractError(f"item indices must be positive integers, got {i!r}")
    return out


def is_subset(small: Sequence[int], big: Sequence[int]) -> bool:
    """Subset test on canonical itemsets (linear merge)."""
    j = 0
    n = len(big)
    for x in small:
        while j < n and big[j] < x:
            j += 1
        if j == n or big[j] != x:
            return False
        j += 1
    return True


def _as_fraction(x: float | int) -> Fraction:
    # str() keeps 0.7 as 7/10 rather than its binary approximation
    return Fraction(str(x))


@dataclass(frozen=True)
class Transaction:
    items: Itemset
    ordinal: int


@dataclass(frozen=True)
class TransactionSet:
    transactions: tuple[Transaction, ...]
    universe_size: int

    def __post_init__(self) -> None:
        seen = set()
        for t in self.transactions:
            if t.ordinal in seen:
                raise ContractError(f"duplicate transaction ordinal {t.ordinal}")
            seen.add(t.ordinal)
            if t.items and t.items[-1] > self.universe_size:
                raise ContractError(
                    f"transaction {t.ordinal} names item {t.items[-1]} "
                    f"outside a universe of {self.universe_size}"
                )

    @classmethod
    def from_rows(cls, rows: Iterable[Iterable[int]], universe_size: int) -> TransactionSet:
        txs = tuple(Transaction(itemset(r), n) for n, r in enumerate(rows, start=1))
        return cls(txs, universe_size)

    def __len__(self) -> int:
        return len(self.transactions)

    def __iter__(self):
        return iter(self.transactions)


@dataclass(frozen=True)
class MiningConfig:
    universe_size: int
    transaction_count: int
    min_support_percent: float
    min_confidence: float = DEFAULT_MIN_CONFIDENCE

    def __post_init__(self) -> None:
        if self.universe_size < 1:
            raise ConfigError(f"universe size must be positive, got {self.universe_size}")
        if self.transaction_count < 0:
            raise ConfigError(f"transaction count must be >= 0, got {self.transaction_count}")
        if not 0 < self.min_support_percent <= 100:
            raise ConfigError(
                f"support percent must lie in (0, 100], got {self.min_support_percent}"
            )
        if not 0 < self.min_confidence <= 1:
            raise ConfigError(f"min confidence must lie in (0, 1], got {self.min_confidence}")

    def support_threshold(self, n: int | None = None) -> int:
        """Smallest integer support count meeting ``n * minsup``."""
        n = self.transaction_count if n is None else n
        return math.ceil(n * _as_fraction(self.min_support_percent) / 100)


@dataclass(frozen=True)
class FrequentItemsetTable:
    levels: dict[int, list[tuple[Itemset, int]]] = field(default_factory=dict)

    def support(self, items: Itemset) -> int | None:
        for s, count in self.levels.get(len(items), ()):
            if s == items:
                return count
        return None

    def counts(self) -> dict[Itemset, int]:
        return {s: c for k in sorted(self.levels) for s, c in self.levels[k]}

    def itemsets(self) -> list[Itemset]:
        return [s for k in sorted(self.levels) for s, _ in self.levels[k]]

    def max_level(self) -> int:
        return max(self.levels, default=0)


@dataclass(frozen=True)
class AssociationRule:
    antecedent: Itemset
    consequent: Itemset
    support_count: int
    confidence: float

    @property
    def items(self) -> Itemset:
        return itemset(self.antecedent + self.consequent)

    def __str__(self) -> str:
        a = ",".join(map(str, self.antecedent))
        c = ",".join(map(str, self.consequent))
        return f"{{{a}}}=>{{{c}}}"


def apriori_gen(prior_level: Sequence[Itemset]) -> list[Itemset]:
    """Candidate k-itemsets from the frequent (k-1)-itemsets.

    Pairs sharing their first k-2 members are merged, then any candidate with
    a (k-1)-subset missing from ``prior_level`` is pruned.
    """
    if not prior_level:
        return []
    sizes = {len(s) for s in prior_level}
    if len(sizes) != 1:
        raise ContractError(f"prior level mixes itemset sizes {sorted(sizes)}")
    (size,) = sizes
    if size < 1:
        raise ContractError("prior level itemsets must be non-empty")
    prior = sorted(set(prior_level))
    known = set(prior)
    out: list[Itemset] = []
    for a_idx, a in enumerate(prior):
        for b in prior[a_idx + 1:]:
            if a[:-1] != b[:-1]:
                # sorted order: once the prefix differs no later b matches
                break
            cand = a + (b[-1],)
            if all(sub in known for sub in combinations(cand, size)):
                out.append(cand)
    return out


def candidates_in_transaction(candidates: Sequence[Itemset], t: Transaction) -> list[Itemset]:
    """The candidates contained in ``t``, in input order."""
    return [c for c in candidates if is_subset(c, t.items)]


def _check_config(transactions: TransactionSet, config: MiningConfig) -> None:
    if config.universe_size != transactions.universe_size:
        raise ConfigError(
            f"config declares {config.universe_size} items, data has {transactions.universe_size}"
        )
    if config.transaction_count != len(transactions):
        raise ConfigError(
            f"config declares {config.transaction_count} transactions, data has {len(transactions)}"
        )


def frequent_itemsets(transactions: TransactionSet, config: MiningConfig) -> FrequentItemsetTable:
    _check_config(transactions, config)
    if not transactions.transactions:
        return FrequentItemsetTable({})
    threshold = config.support_threshold(len(transactions))

    singles: dict[Itemset, int] = {}
    for t in transactions:
        for i in t.items:
            singles[(i,)] = singles.get((i,), 0) + 1
    level = sorted((s, c) for s, c in singles.items() if c >= threshold)

    levels: dict[int, list[tuple[Itemset, int]]] = {}
    k = 1
    while level:
        levels[k] = level
        k += 1
        cands = apriori_gen([s for s, _ in level])
        counts = dict.fromkeys(cands, 0)
        for t in transactions:
            if len(t.items) < k:
                continue
            for c in candidates_in_transaction(cands, t):
                counts[c] += 1
        level = [(c, counts[c]) for c in cands if counts[c] >= threshold]
    return FrequentItemsetTable(levels)


def generate_rules(table: FrequentItemsetTable, config: MiningConfig) -> list[AssociationRule]:
    """Every rule A=>B with A|B frequent and confidence >= ``config.min_confidence``."""
    counts = table.counts()
    min_conf = _as_fraction(config.min_confidence)
    rules: list[AssociationRule] = []
    for k in sorted(table.levels):
        if k < 2:
            continue
        for items, support in table.levels[k]:
            for r in range(1, k):
                for ante in combinations(items, r):
                    ante_support = counts.get(ante)
                    if not ante_support:
                        raise ContractError(
                            f"table is not downward closed: {ante} missing for {items}"
                        )
                    conf = Fraction(support, ante_support)
                    if conf < min_conf:
                        continue
                    cons = tuple(i for i in items if i not in ante)
                    rules.append(AssociationRule(ante, cons, support, float(conf)))
    return rules


def maximal_itemsets(table: FrequentItemsetTable, min_size: int = 1) -> list[Itemset]:
    """Frequent itemsets with no frequent proper superset, in table order."""
    sets = table.itemsets()
    out = []
    for s in sets:
        if len(s) < min_size:
            continue
        nxt = table.levels.get(len(s) + 1, ())
        # anti-monotonicity: checking direct supersets is enough
        if not any(is_subset(s, bigger) for bigger, _ in nxt):
            out.append(s)
    return out

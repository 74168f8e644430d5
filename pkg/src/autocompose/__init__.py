"""Self-adaptive service composition.

Requests are dispatched through a single-loop reactor; completed purchases
are mined with Apriori, and maximal frequent bundles backed by a confident
rule are registered as composite services while the loop keeps running.
"""
from .composer import Composer, CompositeService, PriceCatalog, quote_cost, synthesize_composites
from .decision import FixedRule, Plan, PlanKind, ServiceEvent, Trigger, match_rule, select_plan
from .dispatcher import Dispatcher, HandlerRegistration, Interceptor, ServiceOutcome
from .engine import Engine
from .mining import (
    AssociationRule,
    FrequentItemsetTable,
    MiningConfig,
    Transaction,
    TransactionSet,
    apriori_gen,
    candidates_in_transaction,
    frequent_itemsets,
    generate_rules,
)
from .repository import Repository, RuleStoreEntry, TriggerRecord, load_dataset

__all__ = [
    "AssociationRule", "Composer", "CompositeService", "Dispatcher", "Engine",
    "FixedRule", "FrequentItemsetTable", "HandlerRegistration", "Interceptor",
    "MiningConfig", "Plan", "PlanKind", "PriceCatalog", "Repository", "RuleStoreEntry",
    "ServiceEvent", "ServiceOutcome", "Transaction", "TransactionSet", "Trigger",
    "TriggerRecord", "apriori_gen", "candidates_in_transaction", "frequent_itemsets",
    "generate_rules", "load_dataset", "match_rule", "quote_cost", "select_plan",
    "synthesize_composites",
]

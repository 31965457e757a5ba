"""Forward-chaining inference over facts and rules.

Base facts are boolean expressions over data products. Rules combine facts
with boolean operators; a rule whose condition holds selects publishers and
sets its derived facts, which later rules may use. Derived-fact
dependencies must be acyclic, so the evaluation order is fixed by the
dependency graph and never by declaration order.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from ..dataspace import DataBlockView, DataProduct
from ..errors import (
    CyclicDependency,
    DuplicateName,
    EvaluationError,
    MissingProduct,
    RuleValidationError,
    UndefinedFact,
)
from ..values import canonical_json
from .expressions import (
    BOOL,
    ANY,
    Binary,
    Evaluator,
    Expression,
    FactRef,
    Literal,
    TypeMismatch,
    Unary,
    fact_refs,
    infer_type,
    parse_expression,
    product_refs,
    walk,
)

INFERENCE_PRODUCT = "inference_result"
FACT_PRODUCT_PREFIX = "fact:"
ENGINE_MODULE = "logic_engine"


@dataclass(frozen=True)
class Fact:
    name: str
    expr: Expression

    @classmethod
    def parse(cls, name: str, text: str) -> "Fact":
        return cls(name, parse_expression(text))


@dataclass(frozen=True)
class Rule:
    name: str
    condition: Expression
    actions: tuple[str, ...] = ()
    derived_facts: tuple[str, ...] = ()

    @classmethod
    def parse(
        cls,
        name: str,
        condition: str,
        actions: Iterable[str] = (),
        derived_facts: Iterable[str] = (),
    ) -> "Rule":
        return cls(name, parse_expression(condition), tuple(actions), tuple(derived_facts))


@dataclass(frozen=True)
class DependencyPlan:
    facts: tuple[Fact, ...]
    rules: tuple[Rule, ...]
    publishers: frozenset[str] = frozenset()

    @property
    def derived_facts(self) -> tuple[str, ...]:
        return tuple(d for r in self.rules for d in r.derived_facts)

    def products_needed(self) -> set[str]:
        return set().union(*(product_refs(f.expr) for f in self.facts)) if self.facts else set()


@dataclass(frozen=True)
class InferenceResult:
    fact_values: Mapping[str, bool]
    publishers_to_run: frozenset[str]
    fired_rules: tuple[str, ...]

    def to_value(self) -> dict[str, Any]:
        return {
            "fact_values": dict(sorted(self.fact_values.items())),
            "publishers_to_run": sorted(self.publishers_to_run),
            "fired_rules": list(self.fired_rules),
        }

    def to_json(self) -> str:
        return canonical_json(self.to_value())

    @classmethod
    def from_value(cls, value: Mapping[str, Any]) -> "InferenceResult":
        return cls(
            dict(value["fact_values"]),
            frozenset(value["publishers_to_run"]),
            tuple(value["fired_rules"]),
        )


def _check_rule_condition(rule: Rule) -> list[RuleValidationError]:
    problems = []
    for node in walk(rule.condition):
        if isinstance(node, Unary) and node.op == "not":
            continue
        if isinstance(node, Binary) and node.op in ("and", "or"):
            continue
        if isinstance(node, FactRef) and not node.path:
            continue
        if isinstance(node, Literal) and isinstance(node.value, bool):
            continue
        problems.append(
            RuleValidationError(
                f"rule {rule.name!r}: condition may only combine facts with "
                f"and/or/not, found {node}"
            )
        )
        break
    return problems


def _toposort(nodes: Sequence[str], edges: Mapping[str, set[str]]) -> list[str] | None:
    """Kahn's algorithm, lexicographic among ready nodes; ``None`` on a cycle."""
    indeg = {n: 0 for n in nodes}
    for src in nodes:
        for dst in edges.get(src, ()):
            indeg[dst] += 1
    ready = [n for n in nodes if indeg[n] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        n = heapq.heappop(ready)
        order.append(n)
        for dst in sorted(edges.get(n, ())):
            indeg[dst] -= 1
            if indeg[dst] == 0:
                heapq.heappush(ready, dst)
    return order if len(order) == len(nodes) else None


def _find_cycle(nodes: Sequence[str], edges: Mapping[str, set[str]]) -> list[str]:
    color = {n: 0 for n in nodes}
    stack: list[str] = []

    def dfs(n: str) -> list[str] | None:
        color[n] = 1
        stack.append(n)
        for m in sorted(edges.get(n, ())):
            if color[m] == 1:
                return stack[stack.index(m):] + [m]
            if color[m] == 0:
                found = dfs(m)
                if found:
                    return found
        stack.pop()
        color[n] = 2
        return None

    for n in sorted(nodes):
        if color[n] == 0:
            found = dfs(n)
            if found:
                return found
    return []  # pragma: no cover - only called when a cycle exists


def check_rules(
    facts: Sequence[Fact],
    rules: Sequence[Rule],
    publishers: Iterable[str] | None = None,
) -> tuple[DependencyPlan | None, list[RuleValidationError]]:
    """Validate a fact/rule set, returning the plan (if valid) and every problem found."""
    problems: list[RuleValidationError] = []

    base_names: set[str] = set()
    for f in facts:
        if f.name in base_names:
            problems.append(DuplicateName(f"duplicate fact name {f.name!r}"))
        base_names.add(f.name)
    rule_names: set[str] = set()
    derived_by: dict[str, str] = {}
    for r in rules:
        if r.name in rule_names:
            problems.append(DuplicateName(f"duplicate rule name {r.name!r}"))
        rule_names.add(r.name)
        for d in r.derived_facts:
            if d in base_names:
                problems.append(DuplicateName(f"rule {r.name!r} derives {d!r}, which is a base fact"))
            elif d in derived_by:
                problems.append(
                    DuplicateName(f"derived fact {d!r} produced by both {derived_by[d]!r} and {r.name!r}")
                )
            else:
                derived_by[d] = r.name

    for f in facts:
        try:
            t = infer_type(f.expr)
            if t not in (BOOL, ANY):
                problems.append(TypeMismatch(f"fact {f.name!r} evaluates to {t}, not boolean"))
        except TypeMismatch as exc:
            problems.append(TypeMismatch(f"fact {f.name!r}: {exc}"))
        for ref in sorted(fact_refs(f.expr)):
            if ref in derived_by:
                problems.append(
                    RuleValidationError(f"fact {f.name!r} references derived fact {ref!r}")
                )
            elif ref not in base_names:
                problems.append(UndefinedFact(f"fact {f.name!r} references undefined fact {ref!r}"))

    for r in rules:
        problems.extend(_check_rule_condition(r))
        for ref in sorted(fact_refs(r.condition)):
            if ref not in base_names and ref not in derived_by:
                problems.append(UndefinedFact(f"rule {r.name!r} references undefined fact {ref!r}"))
        if publishers is not None:
            known = set(publishers)
            for action in r.actions:
                if action not in known:
                    problems.append(
                        RuleValidationError(f"rule {r.name!r} names unknown publisher {action!r}")
                    )

    if problems:
        return None, problems

    # dependency graph over base facts and rules; derived facts collapse onto their rule
    fact_nodes = [f.name for f in facts]
    fact_edges: dict[str, set[str]] = {n: set() for n in fact_nodes}
    for f in facts:
        for ref in fact_refs(f.expr):
            fact_edges[ref].add(f.name)
    fact_order = _toposort(fact_nodes, fact_edges)
    if fact_order is None:
        return None, [CyclicDependency(_find_cycle(fact_nodes, fact_edges))]

    rule_nodes = [r.name for r in rules]
    rule_edges: dict[str, set[str]] = {n: set() for n in rule_nodes}
    for r in rules:
        for ref in fact_refs(r.condition):
            if ref in derived_by:
                rule_edges[derived_by[ref]].add(r.name)
    rule_order = _toposort(rule_nodes, rule_edges)
    if rule_order is None:
        cycle = _find_cycle(rule_nodes, rule_edges)
        by_name = {r.name: r for r in rules}
        path = []
        for a, b in zip(cycle, cycle[1:]):
            via = next(d for d in by_name[a].derived_facts if d in fact_refs(by_name[b].condition))
            path += [a, via]
        path.append(cycle[-1])
        return None, [CyclicDependency(path)]

    facts_by = {f.name: f for f in facts}
    rules_by = {r.name: r for r in rules}
    plan = DependencyPlan(
        facts=tuple(facts_by[n] for n in fact_order),
        rules=tuple(rules_by[n] for n in rule_order),
        publishers=frozenset(a for r in rules for a in r.actions),
    )
    return plan, []


def validate(
    facts: Sequence[Fact],
    rules: Sequence[Rule],
    publishers: Iterable[str] | None = None,
) -> DependencyPlan:
    """Build the evaluation plan or raise the first validation problem."""
    plan, problems = check_rules(facts, rules, publishers)
    if problems:
        raise problems[0]
    assert plan is not None
    return plan


def infer(
    plan: DependencyPlan,
    product: Mapping[str, Any] | Any,
) -> InferenceResult:
    """Evaluate a plan against product values.

    ``product`` is either a mapping of product name to value or a
    :class:`DataBlockView`.
    """
    if isinstance(product, DataBlockView):
        view = product

        def lookup(name: str) -> Any:
            entry = view.get(name)
            if entry is None:
                raise MissingProduct(name)
            return entry.value

        available = view.__contains__
    else:
        values = product

        def lookup(name: str) -> Any:
            if name not in values:
                raise MissingProduct(name)
            return values[name]

        available = values.__contains__

    fact_values: dict[str, bool] = {}

    def fact(name: str) -> bool:
        return fact_values[name]

    evaluator = Evaluator(lookup, fact)
    for f in plan.facts:
        for name in sorted(product_refs(f.expr)):
            if not available(name):
                raise MissingProduct(name, consumer=f"fact {f.name}")
        value = evaluator.eval(f.expr)
        if not isinstance(value, bool):
            raise EvaluationError(f"fact {f.name!r} evaluated to a non-boolean")
        fact_values[f.name] = value

    for r in plan.rules:
        for d in r.derived_facts:
            fact_values[d] = False
    fired: list[str] = []
    publishers: set[str] = set()
    for r in plan.rules:
        value = evaluator.eval(r.condition)
        if not isinstance(value, bool):
            raise EvaluationError(f"rule {r.name!r} condition evaluated to a non-boolean")
        for d in r.derived_facts:
            fact_values[d] = value
        if value:
            fired.append(r.name)
            publishers.update(r.actions)
    return InferenceResult(fact_values, frozenset(publishers), tuple(fired))


def run_inference(plan: DependencyPlan, view: DataBlockView) -> InferenceResult:
    """Run the plan on a cycle's view and record the result into it."""
    result = infer(plan, view)
    for name, value in sorted(result.fact_values.items()):
        view.record(DataProduct(FACT_PRODUCT_PREFIX + name, value, ENGINE_MODULE))
    view.record(DataProduct(INFERENCE_PRODUCT, result.to_value(), ENGINE_MODULE))
    return result

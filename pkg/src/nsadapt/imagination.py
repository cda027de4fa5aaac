"""Symbolic transition logging, lifted operator induction and imagined operator variants."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional, Sequence

from .symbolic import (
    Atom,
    Domain,
    LiftedOperator,
    UnknownEntity,
    bindings,
    serialize_operator,
    sorted_atoms,
)


class InsufficientData(ValueError):
    pass


class DegenerateOperator(ValueError):
    pass


@dataclass(frozen=True)
class SymbolicTransition:
    pre: frozenset
    post: frozenset
    executor_id: str
    binding: tuple[tuple[str, str], ...] = ()

    @property
    def changed(self) -> bool:
        return self.pre != self.post

    def to_json(self) -> dict:
        return {
            "executor": self.executor_id,
            "binding": dict(self.binding),
            "pre": [a.to_sexpr() for a in sorted_atoms(self.pre)],
            "post": [a.to_sexpr() for a in sorted_atoms(self.post)],
        }

    @classmethod
    def from_json(cls, payload: dict) -> SymbolicTransition:
        return cls(
            frozenset(_atom_from_sexpr(s) for s in payload["pre"]),
            frozenset(_atom_from_sexpr(s) for s in payload["post"]),
            payload["executor"],
            tuple(payload.get("binding", {}).items()),
        )


def _atom_from_sexpr(text: str) -> Atom:
    parts = text.strip()[1:-1].split()
    return Atom(parts[0], tuple(parts[1:]))


class TransitionLog:
    """Append-only record of symbolic transitions, iterated in insertion order."""

    def __init__(self, entries: Iterable[SymbolicTransition] = ()):
        self._entries: list[SymbolicTransition] = list(entries)

    def append(self, entry: SymbolicTransition) -> None:
        self._entries.append(entry)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[SymbolicTransition]:
        return iter(list(self._entries))  # snapshot: safe against appends while iterating

    def for_executor(self, executor_id: str) -> list[SymbolicTransition]:
        return [e for e in self._entries if e.executor_id == executor_id]

    def executor_ids(self) -> list[str]:
        return list(dict.fromkeys(e.executor_id for e in self._entries))

    def snapshot(self) -> TransitionLog:
        return TransitionLog(self._entries)

    def dump(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for e in self._entries:
                fh.write(json.dumps(e.to_json(), sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> TransitionLog:
        with open(path, encoding="utf-8") as fh:
            return cls(SymbolicTransition.from_json(json.loads(line)) for line in fh if line.strip())


def record_transition(log: TransitionLog, pre: Iterable[Atom], post: Iterable[Atom], executor_id: str,
                      binding: Optional[Mapping[str, str]] = None, domain: Optional[Domain] = None) -> TransitionLog:
    pre, post = frozenset(pre), frozenset(post)
    binding = dict(binding or {})
    if domain is not None:
        for atom in pre | post:
            domain.check_atom(atom)
        for ent in binding.values():
            if ent not in domain.entity_types:
                raise UnknownEntity(ent)
    log.append(SymbolicTransition(pre, post, executor_id, tuple(binding.items())))
    return log


@dataclass(frozen=True)
class InducedOperator:
    operator: LiftedOperator
    support: int
    imagined: bool = False
    executor_id: str = ""
    observed_bindings: tuple = field(default=(), compare=False)


def _lift(atoms: Iterable[Atom], inverse: Mapping[str, str]) -> frozenset:
    return frozenset(Atom(a.predicate, tuple(inverse.get(x, x) for x in a.args)) for a in atoms)


def _bound_only(atoms: Iterable[Atom], entities: set) -> frozenset:
    return frozenset(a for a in atoms if all(x in entities for x in a.args))


def _inverse(binding: Sequence[tuple[str, str]]) -> dict[str, str]:
    inv: dict[str, str] = {}
    for var, ent in binding:
        inv.setdefault(ent, var)  # repeated entities lift to the first role that names them
    return inv


def induce_operator(log: TransitionLog, executor_id: str, domain: Domain) -> InducedOperator:
    """Intersection-based lifted operator for every logged transition of ``executor_id``.

    Effects intersect the per-entry diffs; preconditions intersect the pre
    states restricted to atoms over bound entities (nullary atoms included).
    Unbound entities inside effects stay as constants.
    """
    entries = log.for_executor(executor_id)
    if not entries:
        raise InsufficientData(executor_id)
    useful = [e for e in entries if e.changed]
    if not useful:
        raise DegenerateOperator(f"{executor_id}: no logged transition changed the state")
    roles = [v for v, _ in useful[0].binding]
    for e in useful:
        if [v for v, _ in e.binding] != roles:
            raise ValueError(f"{executor_id}: inconsistent binding roles across entries")

    add = pre = delete = None
    for e in useful:
        inv = _inverse(e.binding)
        bound = set(inv)
        a = _lift(e.post - e.pre, inv)
        d = _lift(e.pre - e.post, inv)
        p = _lift(_bound_only(e.pre, bound), inv)
        add = a if add is None else add & a
        delete = d if delete is None else delete & d
        pre = p if pre is None else pre & p
    if not add and not delete:
        raise DegenerateOperator(f"{executor_id}: effects cancel out across entries")

    types = domain.entity_types
    first = useful[0].binding
    params = tuple((var, types[ent]) for var, ent in first)
    for e in useful:
        for (var, ent), (_, t) in zip(e.binding, params):
            if types[ent] != t:
                raise ValueError(f"{executor_id}: role {var} bound to entities of different types")
    op = LiftedOperator(f"learned-{executor_id}", params, pre, add, delete - add)
    support = sum(_consistent(op, e) for e in entries)
    observed = tuple(dict.fromkeys(e.binding for e in useful))
    return InducedOperator(op, support, False, executor_id, observed)


def _consistent(op: LiftedOperator, entry: SymbolicTransition) -> bool:
    sub = dict(entry.binding)
    psi = frozenset(a.substitute(sub) for a in op.preconditions)
    add = frozenset(a.substitute(sub) for a in op.add_effects)
    delete = frozenset(a.substitute(sub) for a in op.delete_effects)
    if not psi <= entry.pre or not add <= entry.post or delete & entry.post:
        return False
    ents = set(sub.values())
    predicted = (entry.pre - delete) | add
    return _bound_only(predicted, ents) == _bound_only(entry.post, ents)


def specialize(op: LiftedOperator, binding: Sequence[tuple[str, str]], name: Optional[str] = None) -> LiftedOperator:
    sub = dict(binding)

    def g(atoms):
        return frozenset(a.substitute(sub) for a in atoms)

    return LiftedOperator(name or op.name, (), g(op.preconditions), g(op.add_effects), g(op.delete_effects))


def _collapses(op: LiftedOperator, binding) -> bool:
    """True when a binding makes an add effect coincide with a delete effect (e.g. goto(Q0,Q0))."""
    sub = dict(binding)
    adds = {a.substitute(sub) for a in op.add_effects}
    return any(a.substitute(sub) in adds for a in op.delete_effects)


def imagine_operators(domain: Domain, induced: Iterable[InducedOperator]) -> list[InducedOperator]:
    """Each induced schema plus one ground variant per type-consistent binding never observed.

    Bindings under which the schema would add and delete the same atom are skipped.
    """
    out: list[InducedOperator] = []
    for ind in induced:
        out.append(ind)
        seen = set(ind.observed_bindings)
        for b in bindings(domain, ind.operator.parameters):
            if b in seen or _collapses(ind.operator, b):
                continue
            variant = specialize(ind.operator, b)
            out.append(InducedOperator(variant, 0, True, ind.executor_id, (b,)))
    return out


def imagined_only(operators: Iterable[InducedOperator]) -> list[InducedOperator]:
    return [o for o in operators if o.imagined]


def merge_into_domain(domain: Domain, operators: Iterable[InducedOperator], min_support: int = 1) -> Domain:
    """Adds qualifying operators under fresh ``learned-<executor>`` names; structural duplicates are skipped."""
    ops = list(domain.operators)
    names = {o.name for o in ops}
    for ind in operators:
        if not (ind.imagined or ind.support >= min_support):
            continue
        if any(ind.operator.same_structure(o) for o in ops):
            continue
        base = f"learned-{ind.executor_id}" if ind.executor_id else ind.operator.name
        name, n = base, 2
        while name in names:
            name, n = f"{base}-{n}", n + 1
        names.add(name)
        ops.append(ind.operator.renamed(name))
    if len(ops) == len(domain.operators):
        return domain
    return domain.with_operators(ops)


def export_operators(operators: Iterable[InducedOperator]) -> str:
    """PDDL-lite action blocks, one per operator, annotated with support."""
    chunks = []
    for ind in operators:
        tag = "imagined" if ind.imagined else f"support {ind.support}"
        chunks.append(f"  ; {ind.executor_id}: {tag}\n" + serialize_operator(ind.operator))
    return "".join(chunks)

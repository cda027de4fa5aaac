"""Typed STRIPS representation, PDDL-lite parsing/serialization and progression.

States are plain ``frozenset`` objects of :class:`Atom`. Lifted atoms use the
same class; arguments starting with ``?`` are variables, anything else names an
entity (a constant).
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import AbstractSet, Iterable, Mapping, Sequence

SymbolicState = frozenset  # frozenset[Atom]


class ParseError(ValueError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class TypingError(TypeError):
    """Undeclared type/predicate, wrong arity or ill-typed argument."""


class DuplicateName(ValueError):
    pass


class UnknownEntity(ValueError):
    pass


class NotApplicable(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Atom:
    predicate: str
    args: tuple[str, ...] = ()

    def __str__(self) -> str:
        return f"{self.predicate}({','.join(self.args)})"

    def to_sexpr(self) -> str:
        return "(" + " ".join((self.predicate,) + self.args) + ")"

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(a for a in self.args if a.startswith("?"))

    def substitute(self, binding: Mapping[str, str]) -> Atom:
        return Atom(self.predicate, tuple(binding.get(a, a) for a in self.args))


def sorted_atoms(atoms: Iterable[Atom]) -> list[Atom]:
    """Canonical order: predicate name, then argument names."""
    return sorted(atoms)


def state_key(atoms: Iterable[Atom]) -> str:
    return " ".join(a.to_sexpr() for a in sorted_atoms(atoms))


@dataclass(frozen=True)
class PredicateSchema:
    name: str
    parameter_types: tuple[str, ...] = ()

    @property
    def arity(self) -> int:
        return len(self.parameter_types)


@dataclass(frozen=True)
class LiftedOperator:
    name: str
    parameters: tuple[tuple[str, str], ...]
    preconditions: frozenset = frozenset()
    add_effects: frozenset = frozenset()
    delete_effects: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "preconditions", frozenset(self.preconditions))
        object.__setattr__(self, "add_effects", frozenset(self.add_effects))
        object.__setattr__(self, "delete_effects", frozenset(self.delete_effects))
        object.__setattr__(self, "parameters", tuple(tuple(p) for p in self.parameters))
        names = [v for v, _ in self.parameters]
        if len(set(names)) != len(names):
            raise DuplicateName(f"operator {self.name}: repeated parameter")
        declared = set(names)
        for atom in self.preconditions | self.add_effects | self.delete_effects:
            missing = set(atom.variables) - declared
            if missing:
                raise TypingError(f"operator {self.name}: undeclared variables {sorted(missing)}")
        if self.add_effects & self.delete_effects:
            raise TypingError(f"operator {self.name}: add and delete effects overlap")

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(v for v, _ in self.parameters)

    def same_structure(self, other: LiftedOperator) -> bool:
        return (
            self.parameters == other.parameters
            and self.preconditions == other.preconditions
            and self.add_effects == other.add_effects
            and self.delete_effects == other.delete_effects
        )

    def renamed(self, name: str) -> LiftedOperator:
        return LiftedOperator(name, self.parameters, self.preconditions, self.add_effects, self.delete_effects)


@dataclass(frozen=True)
class GroundOperator:
    schema: LiftedOperator
    binding: tuple[tuple[str, str], ...]

    @cached_property
    def _map(self) -> dict[str, str]:
        return dict(self.binding)

    @cached_property
    def preconditions(self) -> frozenset:
        return frozenset(a.substitute(self._map) for a in self.schema.preconditions)

    @cached_property
    def add_effects(self) -> frozenset:
        return frozenset(a.substitute(self._map) for a in self.schema.add_effects)

    @cached_property
    def delete_effects(self) -> frozenset:
        return frozenset(a.substitute(self._map) for a in self.schema.delete_effects)

    @property
    def name(self) -> str:
        return self.schema.name

    @property
    def entities(self) -> tuple[str, ...]:
        return tuple(e for _, e in self.binding)

    def __str__(self) -> str:
        return f"{self.name}({','.join(self.entities)})"

    def to_json(self) -> dict:
        return {"operator": self.name, "binding": dict(self.binding)}


@dataclass(frozen=True)
class Domain:
    name: str
    types: tuple[str, ...]
    entities: tuple[tuple[str, str], ...]  # (entity, type), declaration order
    predicates: tuple[PredicateSchema, ...]
    operators: tuple[LiftedOperator, ...] = ()

    def __post_init__(self):
        for label, names in (
            ("type", list(self.types)),
            ("entity", [e for e, _ in self.entities]),
            ("predicate", [p.name for p in self.predicates]),
            ("operator", [o.name for o in self.operators]),
        ):
            seen = set()
            for n in names:
                if n in seen:
                    raise DuplicateName(f"duplicate {label} {n!r}")
                seen.add(n)
        for e, t in self.entities:
            if t not in self.types:
                raise TypingError(f"entity {e!r} has undeclared type {t!r}")
        for p in self.predicates:
            for t in p.parameter_types:
                if t not in self.types:
                    raise TypingError(f"predicate {p.name!r} uses undeclared type {t!r}")
        for op in self.operators:
            self._check_operator(op)

    @cached_property
    def entity_types(self) -> dict[str, str]:
        return dict(self.entities)

    @cached_property
    def predicate_map(self) -> dict[str, PredicateSchema]:
        return {p.name: p for p in self.predicates}

    def operator(self, name: str) -> LiftedOperator:
        for op in self.operators:
            if op.name == name:
                return op
        raise KeyError(name)

    def entities_of(self, type_name: str) -> list[str]:
        return sorted(e for e, t in self.entities if t == type_name)

    def _check_operator(self, op: LiftedOperator) -> None:
        var_types = dict(op.parameters)
        for _, t in op.parameters:
            if t not in self.types:
                raise TypingError(f"operator {op.name!r} uses undeclared type {t!r}")
        for atom in op.preconditions | op.add_effects | op.delete_effects:
            self.check_atom(atom, var_types)

    def check_atom(self, atom: Atom, var_types: Mapping[str, str] | None = None) -> None:
        schema = self.predicate_map.get(atom.predicate)
        if schema is None:
            raise TypingError(f"undeclared predicate {atom.predicate!r}")
        if schema.arity != len(atom.args):
            raise TypingError(f"{atom}: expected {schema.arity} arguments")
        for arg, expected in zip(atom.args, schema.parameter_types):
            if arg.startswith("?"):
                actual = (var_types or {}).get(arg)
            else:
                if arg not in self.entity_types:
                    raise UnknownEntity(f"{atom}: unknown entity {arg!r}")
                actual = self.entity_types[arg]
            if actual != expected:
                raise TypingError(f"{atom}: argument {arg!r} is not of type {expected!r}")

    def with_operators(self, operators: Sequence[LiftedOperator]) -> Domain:
        return Domain(self.name, self.types, self.entities, self.predicates, tuple(operators))


@dataclass(frozen=True)
class PlanningTask:
    name: str
    domain: Domain
    initial: frozenset
    goal: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "initial", frozenset(self.initial))
        object.__setattr__(self, "goal", frozenset(self.goal))
        for atom in self.initial | self.goal:
            if any(a.startswith("?") for a in atom.args):
                raise TypingError(f"{atom}: variables are not allowed in a problem")
            self.domain.check_atom(atom)

    def with_initial(self, initial: Iterable[Atom]) -> PlanningTask:
        return PlanningTask(self.name, self.domain, frozenset(initial), self.goal)

    def with_domain(self, domain: Domain) -> PlanningTask:
        return PlanningTask(self.name, domain, self.initial, self.goal)


# semantics


def applicable(state: AbstractSet[Atom], op: GroundOperator) -> bool:
    return op.preconditions <= state


def apply(state: AbstractSet[Atom], op: GroundOperator) -> frozenset:
    if not op.preconditions <= state:
        raise NotApplicable(f"{op} is not applicable")
    return (frozenset(state) - op.delete_effects) | op.add_effects


def entails(state: AbstractSet[Atom], goal: Iterable[Atom]) -> bool:
    return frozenset(goal) <= state


def bindings(domain: Domain, parameters: Sequence[tuple[str, str]]) -> list[tuple[tuple[str, str], ...]]:
    """All type-consistent total bindings, lexicographic by entity names."""
    pools = [domain.entities_of(t) for _, t in parameters]
    names = [v for v, _ in parameters]
    return [tuple(zip(names, combo)) for combo in itertools.product(*pools)]


def ground_operators(domain: Domain) -> list[GroundOperator]:
    grounded = [
        GroundOperator(op, b) for op in domain.operators for b in bindings(domain, op.parameters)
    ]
    grounded.sort(key=lambda g: (g.name, g.entities))
    return grounded


# PDDL-lite syntax

_TOKEN = re.compile(r"\s+|;[^\n]*|\(|\)|[^\s();]+")


@dataclass
class _Tok:
    text: str
    line: int
    col: int


class _SList(list):
    line: int = 0
    col: int = 0


def _tokenize(text: str) -> list[_Tok]:
    tokens = []
    line, line_start = 1, 0
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        chunk = m.group(0)
        if not (chunk[0].isspace() or chunk[0] == ";"):
            tokens.append(_Tok(chunk, line, pos - line_start + 1))
        newlines = chunk.count("\n")
        if newlines:
            line += newlines
            line_start = pos + chunk.rindex("\n") + 1
        pos = m.end()
    return tokens


def _read(text: str):
    tokens = _tokenize(text)
    if not tokens:
        raise ParseError("empty document", 1, 1)
    stack: list[_SList] = []
    result = None
    for tok in tokens:
        if tok.text == "(":
            node = _SList()
            node.line, node.col = tok.line, tok.col
            if stack:
                stack[-1].append(node)
            stack.append(node)
        elif tok.text == ")":
            if not stack:
                raise ParseError("unbalanced ')'", tok.line, tok.col)
            node = stack.pop()
            if not stack:
                if result is not None:
                    raise ParseError("trailing content after document", tok.line, tok.col)
                result = node
        else:
            if not stack:
                raise ParseError(f"unexpected token {tok.text!r}", tok.line, tok.col)
            stack[-1].append(tok)
    if stack:
        raise ParseError("unterminated expression", stack[-1].line, stack[-1].col)
    return result


def _pos(node) -> tuple[int, int]:
    return node.line, node.col


def _word(node, what: str) -> str:
    if not isinstance(node, _Tok):
        raise ParseError(f"expected {what}", *_pos(node))
    return node.text


def _kw(node, what: str) -> str:
    return _word(node, what).lower()


def _typed_list(items, what: str) -> list[tuple[str, str]]:
    out: list[tuple[str, str]] = []
    pending: list[str] = []
    i = 0
    while i < len(items):
        tok = items[i]
        name = _word(tok, what)
        if name == "-":
            if not pending or i + 1 >= len(items):
                raise ParseError("misplaced '-' in typed list", tok.line, tok.col)
            type_name = _word(items[i + 1], "type name")
            out.extend((p, type_name) for p in pending)
            pending = []
            i += 2
            continue
        pending.append(name)
        i += 1
    if pending:
        last = items[-1]
        raise ParseError(f"untyped {what} {pending}", *_pos(last))
    return out


def _atom(node, allow_variables: bool) -> Atom:
    if not isinstance(node, _SList) or not node:
        raise ParseError("expected an atom", *_pos(node))
    parts = [_word(t, "atom symbol") for t in node]
    if parts[0].lower() in ("and", "not", "or", "forall", "exists", "when"):
        raise ParseError(f"unexpected connective {parts[0]!r}", *_pos(node))
    if not allow_variables and any(p.startswith("?") for p in parts[1:]):
        raise ParseError("variables are not allowed here", *_pos(node))
    return Atom(parts[0], tuple(parts[1:]))


def _conjunction(node, allow_variables: bool, allow_negation: bool) -> tuple[list[Atom], list[Atom]]:
    """Returns (positive, negated) atoms of an atom or an (and ...) form."""
    if not isinstance(node, _SList):
        raise ParseError("expected a formula", *_pos(node))
    if node and isinstance(node[0], _Tok) and node[0].text.lower() == "and":
        members = node[1:]
    elif not node:
        members = []
    else:
        members = [node]
    pos: list[Atom] = []
    neg: list[Atom] = []
    for m in members:
        if isinstance(m, _SList) and m and isinstance(m[0], _Tok) and m[0].text.lower() == "not":
            if not allow_negation:
                raise ParseError("negative literals are only allowed in effects", *_pos(m))
            if len(m) != 2:
                raise ParseError("'not' takes exactly one atom", *_pos(m))
            neg.append(_atom(m[1], allow_variables))
        else:
            pos.append(_atom(m, allow_variables))
    return pos, neg


def _header(root, kind: str) -> tuple[str, list]:
    if not root or _kw(root[0], "'define'") != "define":
        raise ParseError("document must start with (define ...)", *_pos(root))
    if len(root) < 2 or not isinstance(root[1], _SList) or len(root[1]) != 2:
        raise ParseError(f"expected ({kind} NAME)", *_pos(root))
    if _kw(root[1][0], kind) != kind:
        raise ParseError(f"expected ({kind} NAME)", *_pos(root[1]))
    return _word(root[1][1], "name"), list(root[2:])


def _section(node) -> str:
    if not isinstance(node, _SList) or not node:
        raise ParseError("expected a section", *_pos(node))
    key = _kw(node[0], "section keyword")
    if not key.startswith(":"):
        raise ParseError(f"expected a section keyword, got {key!r}", *_pos(node))
    return key


def _parse_action(node, types: set[str]) -> LiftedOperator:
    items = list(node[1:])
    if not items:
        raise ParseError("action needs a name", *_pos(node))
    name = _word(items[0], "action name")
    params: list[tuple[str, str]] = []
    pre: list[Atom] = []
    add: list[Atom] = []
    dele: list[Atom] = []
    i = 1
    seen = set()
    while i < len(items):
        key = _kw(items[i], "action keyword")
        if i + 1 >= len(items):
            raise ParseError(f"missing value for {key}", items[i].line, items[i].col)
        value = items[i + 1]
        if key in seen:
            raise DuplicateName(f"action {name}: repeated {key}")
        seen.add(key)
        if key == ":parameters":
            if not isinstance(value, _SList):
                raise ParseError("expected a parameter list", *_pos(value))
            params = _typed_list(list(value), "parameter")
            for v, _ in params:
                if not v.startswith("?"):
                    raise ParseError(f"parameter {v!r} must start with '?'", *_pos(value))
        elif key == ":precondition":
            pre, _ = _conjunction(value, True, False)
        elif key == ":effect":
            add, dele = _conjunction(value, True, True)
        else:
            raise ParseError(f"unknown action keyword {key!r}", items[i].line, items[i].col)
        i += 2
    for _, t in params:
        if t not in types:
            raise TypingError(f"action {name}: undeclared type {t!r}")
    return LiftedOperator(name, tuple(params), frozenset(pre), frozenset(add), frozenset(dele))


def parse_domain(text: str) -> Domain:
    root = _read(text)
    name, sections = _header(root, "domain")
    types: list[str] = []
    entities: list[tuple[str, str]] = []
    predicates: list[PredicateSchema] = []
    operators: list[LiftedOperator] = []
    seen: set[str] = set()
    for sec in sections:
        key = _section(sec)
        if key != ":action":
            if key in seen:
                raise DuplicateName(f"repeated section {key}")
            seen.add(key)
        if key == ":types":
            types = [_word(t, "type name") for t in sec[1:]]
            if "-" in types:
                raise ParseError("type hierarchies are not supported", *_pos(sec))
        elif key in (":constants", ":objects"):
            entities = _typed_list(list(sec[1:]), "entity")
        elif key == ":predicates":
            for p in sec[1:]:
                if not isinstance(p, _SList) or not p:
                    raise ParseError("expected a predicate declaration", *_pos(p))
                pname = _word(p[0], "predicate name")
                args = _typed_list(list(p[1:]), "predicate parameter")
                predicates.append(PredicateSchema(pname, tuple(t for _, t in args)))
        elif key == ":action":
            operators.append(_parse_action(sec, set(types)))
        elif key == ":requirements":
            continue
        else:
            raise ParseError(f"unknown domain section {key!r}", *_pos(sec))
    return Domain(name, tuple(types), tuple(entities), tuple(predicates), tuple(operators))


def parse_problem(text: str, domain: Domain) -> PlanningTask:
    root = _read(text)
    name, sections = _header(root, "problem")
    initial: list[Atom] = []
    goal: list[Atom] = []
    seen: set[str] = set()
    for sec in sections:
        key = _section(sec)
        if key in seen:
            raise DuplicateName(f"repeated section {key}")
        seen.add(key)
        if key == ":domain":
            ref = _word(sec[1], "domain name") if len(sec) == 2 else None
            if ref != domain.name:
                raise ParseError(f"problem refers to domain {ref!r}, expected {domain.name!r}", *_pos(sec))
        elif key == ":init":
            initial = [_atom(a, False) for a in sec[1:]]
        elif key == ":goal":
            if len(sec) != 2:
                raise ParseError("(:goal ...) takes one formula", *_pos(sec))
            goal, _ = _conjunction(sec[1], False, False)
        else:
            raise ParseError(f"unknown problem section {key!r}", *_pos(sec))
    return PlanningTask(name, domain, frozenset(initial), frozenset(goal))


def _typed(pairs: Sequence[tuple[str, str]]) -> str:
    return " ".join(f"{n} - {t}" for n, t in pairs)


def _formula(pos: Iterable[Atom], neg: Iterable[Atom] = ()) -> str:
    parts = [a.to_sexpr() for a in sorted_atoms(pos)]
    parts += [f"(not {a.to_sexpr()})" for a in sorted_atoms(neg)]
    return "(and" + "".join(" " + p for p in parts) + ")"


def serialize_operator(op: LiftedOperator) -> str:
    return (
        f"  (:action {op.name}\n"
        f"    :parameters ({_typed(op.parameters)})\n"
        f"    :precondition {_formula(op.preconditions)}\n"
        f"    :effect {_formula(op.add_effects, op.delete_effects)})\n"
    )


def serialize_domain(domain: Domain) -> str:
    preds = " ".join(
        "(" + " ".join([p.name] + [f"?x{i} - {t}" for i, t in enumerate(p.parameter_types)]) + ")"
        for p in domain.predicates
    )
    out = [
        f"(define (domain {domain.name})\n",
        f"  (:types {' '.join(domain.types)})\n",
        f"  (:constants {_typed(domain.entities)})\n",
        f"  (:predicates {preds})\n",
    ]
    out += [serialize_operator(op) for op in domain.operators]
    out.append(")\n")
    return "".join(out)


def serialize_problem(task: PlanningTask) -> str:
    init = " ".join(a.to_sexpr() for a in sorted_atoms(task.initial))
    return (
        f"(define (problem {task.name})\n"
        f"  (:domain {task.domain.name})\n"
        f"  (:init {init})\n"
        f"  (:goal {_formula(task.goal)}))\n"
    )

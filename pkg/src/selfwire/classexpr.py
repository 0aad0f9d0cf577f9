"""Class-expression language and subsumption reasoning.

Expressions cover ``owl:Thing``, ``owl:Nothing``, named classes,
intersections, and existential restrictions.  Subsumption against a set of
subclass axioms is decided by completion-rule saturation over a normalized
axiom set.  Classification builds the named-class hierarchy, and an
undirected distance on that hierarchy feeds the composer's score function.

Concrete syntax (canonical serialization uses single spaces)::

    expr := 'owl:Thing' | 'owl:Nothing' | '<' IRI '>'
          | '(and' expr+ ')' | '(some' '<' IRI '>' expr ')'

Ontology files hold one axiom per line, ``(sub <= sup)``; lines starting
with ``#`` are comments.
"""

from __future__ import annotations

import math
import threading
from collections import defaultdict, deque
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

NORM_PREFIX = "urn:selfwire:norm#"

TOP_TOKEN = "owl:Thing"
BOTTOM_TOKEN = "owl:Nothing"


class ExprSyntaxError(ValueError):
    """Raised on malformed expression text; carries the byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class OntologyError(ValueError):
    """Raised when an ontology document violates the format or its invariants."""


class InconsistentOntologyError(OntologyError):
    """Raised at load time when owl:Thing is subsumed by owl:Nothing."""


# ---------------------------------------------------------------------------
# Expression types


@dataclass(frozen=True)
class Top:
    def __repr__(self) -> str:
        return "Top"


@dataclass(frozen=True)
class Bottom:
    def __repr__(self) -> str:
        return "Bottom"


@dataclass(frozen=True)
class Named:
    iri: str


@dataclass(frozen=True)
class And:
    conjuncts: tuple["ClassExpr", ...]


@dataclass(frozen=True)
class Exists:
    role: str
    filler: "ClassExpr"


ClassExpr = Top | Bottom | Named | And | Exists

TOP = Top()
BOTTOM = Bottom()

#: Atoms are the expressions completion rules operate on.
Atom = Top | Bottom | Named


def serialize_expr(expr: ClassExpr) -> str:
    """Render an expression in the concrete syntax (canonical when the
    expression is canonical)."""
    if isinstance(expr, Top):
        return TOP_TOKEN
    if isinstance(expr, Bottom):
        return BOTTOM_TOKEN
    if isinstance(expr, Named):
        return f"<{expr.iri}>"
    if isinstance(expr, And):
        inner = " ".join(serialize_expr(c) for c in expr.conjuncts)
        return f"(and {inner})"
    if isinstance(expr, Exists):
        return f"(some <{expr.role}> {serialize_expr(expr.filler)})"
    raise TypeError(f"not a class expression: {expr!r}")


def canonicalize(expr: ClassExpr) -> ClassExpr:
    """Canonical form: intersections flattened, sorted by serialization,
    duplicates and owl:Thing removed, owl:Nothing absorbing."""
    if isinstance(expr, (Top, Bottom, Named)):
        return expr
    if isinstance(expr, Exists):
        return Exists(expr.role, canonicalize(expr.filler))
    if isinstance(expr, And):
        return and_of(expr.conjuncts)
    raise TypeError(f"not a class expression: {expr!r}")


def and_of(exprs) -> ClassExpr:
    """Canonical intersection of any number of expressions."""
    flat: list[ClassExpr] = []
    for e in exprs:
        c = canonicalize(e)
        if isinstance(c, And):
            flat.extend(c.conjuncts)
        elif isinstance(c, Bottom):
            return BOTTOM
        elif not isinstance(c, Top):
            flat.append(c)
    seen: dict[str, ClassExpr] = {}
    for c in flat:
        seen.setdefault(serialize_expr(c), c)
    ordered = [seen[k] for k in sorted(seen)]
    if not ordered:
        return TOP
    if len(ordered) == 1:
        return ordered[0]
    return And(tuple(ordered))


def expr_names(expr: ClassExpr) -> frozenset[str]:
    """All named-class IRIs occurring in the expression."""
    if isinstance(expr, Named):
        return frozenset((expr.iri,))
    if isinstance(expr, And):
        out: frozenset[str] = frozenset()
        for c in expr.conjuncts:
            out |= expr_names(c)
        return out
    if isinstance(expr, Exists):
        return expr_names(expr.filler)
    return frozenset()


def expr_roles(expr: ClassExpr) -> frozenset[str]:
    """All role IRIs occurring in the expression."""
    if isinstance(expr, Exists):
        return frozenset((expr.role,)) | expr_roles(expr.filler)
    if isinstance(expr, And):
        out: frozenset[str] = frozenset()
        for c in expr.conjuncts:
            out |= expr_roles(c)
        return out
    return frozenset()


# ---------------------------------------------------------------------------
# Parsing

_IRI_FORBIDDEN = set('<>" \t\n\r{}|^`')


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos] in " \t\r\n":
            self.pos += 1

    def at_end(self) -> bool:
        return self.pos >= len(self.text)

    def peek(self) -> str:
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def error(self, message: str, offset: int | None = None) -> ExprSyntaxError:
        return ExprSyntaxError(message, self.pos if offset is None else offset)

    def take_iri(self) -> str:
        start = self.pos
        if self.peek() != "<":
            raise self.error("expected '<'")
        self.pos += 1
        chars: list[str] = []
        while True:
            if self.at_end():
                raise self.error("unbalanced '<': missing '>'", start)
            ch = self.text[self.pos]
            if ch == ">":
                self.pos += 1
                break
            if ch == "\\":
                raise self.error(f"unknown escape '\\{self.text[self.pos + 1:self.pos + 2]}'")
            if ch in _IRI_FORBIDDEN:
                raise self.error(f"character {ch!r} not allowed in IRI")
            chars.append(ch)
            self.pos += 1
        iri = "".join(chars)
        if not iri or ":" not in iri:
            raise self.error("IRI must be non-empty and contain ':'", start)
        return iri

    def take_word(self) -> str:
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos] not in " \t\r\n()<>":
            self.pos += 1
        return self.text[start:self.pos]


def _parse_expr(sc: _Scanner) -> ClassExpr:
    sc.skip_ws()
    if sc.at_end():
        raise sc.error("unexpected end of input")
    ch = sc.peek()
    if ch == "<":
        return Named(sc.take_iri())
    if ch == "(":
        open_pos = sc.pos
        sc.pos += 1
        sc.skip_ws()
        keyword = sc.take_word()
        if keyword == "and":
            conjuncts: list[ClassExpr] = []
            while True:
                sc.skip_ws()
                if sc.at_end():
                    raise sc.error("unbalanced parentheses", open_pos)
                if sc.peek() == ")":
                    sc.pos += 1
                    break
                conjuncts.append(_parse_expr(sc))
            if not conjuncts:
                raise sc.error("'(and' needs at least one argument", open_pos)
            return And(tuple(conjuncts))
        if keyword == "some":
            sc.skip_ws()
            role = sc.take_iri()
            filler = _parse_expr(sc)
            sc.skip_ws()
            if sc.peek() != ")":
                raise sc.error("unbalanced parentheses", open_pos)
            sc.pos += 1
            return Exists(role, filler)
        raise sc.error(f"unknown operator {keyword!r}", open_pos + 1)
    if ch == ")":
        raise sc.error("unbalanced parentheses")
    word_pos = sc.pos
    word = sc.take_word()
    if word == TOP_TOKEN:
        return TOP
    if word == BOTTOM_TOKEN:
        return BOTTOM
    raise ExprSyntaxError(f"unexpected token {word!r}", word_pos)


def parse_class_expr(text: str) -> ClassExpr:
    """Parse expression text and return its canonical form."""
    sc = _Scanner(text)
    expr = _parse_expr(sc)
    sc.skip_ws()
    if not sc.at_end():
        raise sc.error(f"unexpected trailing input {sc.peek()!r}")
    return canonicalize(expr)


# ---------------------------------------------------------------------------
# Ontologies


@dataclass(frozen=True)
class Axiom:
    """A subclass axiom, read as ``sub`` is subsumed by ``sup``."""

    sub: ClassExpr
    sup: ClassExpr


@dataclass(frozen=True)
class Ontology:
    iri: str
    axioms: frozenset[Axiom]
    named_classes: frozenset[str]
    roles: frozenset[str]

    @classmethod
    def from_axioms(cls, iri: str, axioms) -> "Ontology":
        """Build an ontology, canonicalizing axioms and rejecting an
        inconsistent one (owl:Thing subsumed by owl:Nothing)."""
        canon = frozenset(
            Axiom(canonicalize(a.sub), canonicalize(a.sup)) for a in axioms
        )
        names: set[str] = set()
        roles: set[str] = set()
        for ax in canon:
            for side in (ax.sub, ax.sup):
                names |= expr_names(side)
                roles |= expr_roles(side)
        for name in sorted(names | roles):
            if name.startswith(NORM_PREFIX):
                raise OntologyError(f"IRI uses reserved prefix {NORM_PREFIX}: {name}")
        onto = cls(iri, canon, frozenset(names), frozenset(roles))
        if subsumes(onto, TOP, BOTTOM):
            raise InconsistentOntologyError(
                f"ontology {iri} is inconsistent: owl:Thing <= owl:Nothing is derivable"
            )
        return onto


def axiom_line(ax: Axiom) -> str:
    return f"({serialize_expr(ax.sub)} <= {serialize_expr(ax.sup)})"


def _parse_axiom_line(line: str, lineno: int) -> Axiom:
    sc = _Scanner(line)
    sc.skip_ws()
    try:
        if sc.peek() != "(":
            raise sc.error("axiom must start with '('")
        sc.pos += 1
        sub = _parse_expr(sc)
        sc.skip_ws()
        if not sc.text.startswith("<=", sc.pos):
            raise sc.error("expected '<='")
        sc.pos += 2
        sup = _parse_expr(sc)
        sc.skip_ws()
        if sc.peek() != ")":
            raise sc.error("unbalanced parentheses")
        sc.pos += 1
        sc.skip_ws()
        if not sc.at_end():
            raise sc.error("unexpected trailing input")
    except ExprSyntaxError as exc:
        raise OntologyError(f"line {lineno}: {exc}") from exc
    return Axiom(canonicalize(sub), canonicalize(sup))


def parse_ontology(text: str, iri: str) -> Ontology:
    """Parse an axiom-per-line ontology document."""
    axioms = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        axioms.append(_parse_axiom_line(line, lineno))
    return Ontology.from_axioms(iri, axioms)


def serialize_ontology(onto: Ontology) -> str:
    lines = sorted(axiom_line(ax) for ax in onto.axioms)
    return "\n".join(lines) + ("\n" if lines else "")


def load_ontology(path: str | Path, iri: str | None = None) -> Ontology:
    path = Path(path)
    if iri is None:
        iri = f"urn:selfwire:ontology#{path.stem}"
    return parse_ontology(path.read_text(encoding="utf-8"), iri)


def merge_ontologies(iri: str, ontologies) -> Ontology:
    axioms: set[Axiom] = set()
    for onto in ontologies:
        axioms |= onto.axioms
    return Ontology.from_axioms(iri, axioms)


# ---------------------------------------------------------------------------
# Completion-rule reasoner
#
# Axioms are normalized to the shapes A <= B, A1 ^ A2 <= B, A <= some r.B and
# some r.A <= B, with A, B atoms (named classes, owl:Thing, owl:Nothing).
# Saturation maintains, per atom A, the derived superclass set sup[A] and,
# per role r, the derived pair set {(A, B) : A <= some r.B}.  The engine is
# incremental: defining a query expression adds fresh definition axioms and
# resumes saturation, so repeated queries against one ontology stay cheap.


class _Engine:
    def __init__(self, onto: Ontology):
        self._lock = threading.RLock()
        self._fresh_count = 0
        self._defs: dict[ClassExpr, Atom] = {}
        self._tbox_nf: list[Axiom] | None = []
        # rule indexes
        self._is_a: dict[Atom, list[Atom]] = defaultdict(list)
        self._conj: dict[Atom, list[tuple[Atom, Atom]]] = defaultdict(list)
        self._ex_rhs: dict[Atom, list[tuple[str, Atom]]] = defaultdict(list)
        self._ex_lhs: dict[tuple[str, Atom], list[Atom]] = defaultdict(list)
        # saturation state
        self._sup: dict[Atom, set[Atom]] = {}
        self._sup_inv: dict[Atom, set[Atom]] = defaultdict(set)
        self._pairs: dict[str, set[tuple[Atom, Atom]]] = defaultdict(set)
        self._preds: dict[Atom, set[tuple[str, Atom]]] = defaultdict(set)
        self._queue: deque = deque()
        for ax in sorted(onto.axioms, key=axiom_line):
            self._normalize_axiom(ax.sub, ax.sup)
        self._saturate()
        self.tbox_normal_form = frozenset(self._tbox_nf or ())
        self._tbox_nf = None

    # -- normalization ------------------------------------------------

    def _fresh(self) -> Named:
        atom = Named(f"{NORM_PREFIX}{self._fresh_count}")
        self._fresh_count += 1
        return atom

    def _define(self, expr: ClassExpr) -> Atom:
        """Atom standing for ``expr``, introducing definition axioms for a
        complex expression (both directions, so definers are exact)."""
        if isinstance(expr, (Top, Bottom, Named)):
            return expr
        got = self._defs.get(expr)
        if got is not None:
            return got
        if isinstance(expr, Exists):
            filler = self._define(expr.filler)
            atom = self._fresh()
            self._defs[expr] = atom
            self._add_normal(Axiom(atom, Exists(expr.role, filler)))
            self._add_normal(Axiom(Exists(expr.role, filler), atom))
            return atom
        handles = [self._define(c) for c in expr.conjuncts]
        atom = self._fresh()
        self._defs[expr] = atom
        for h in handles:
            self._add_normal(Axiom(atom, h))
        cur = handles[0]
        for h in handles[1:-1]:
            step = self._fresh()
            self._add_normal(Axiom(And((cur, h)), step))
            cur = step
        self._add_normal(Axiom(And((cur, handles[-1])), atom))
        return atom

    def _normalize_axiom(self, sub: ClassExpr, sup: ClassExpr) -> None:
        if isinstance(sup, And):
            for c in sup.conjuncts:
                self._normalize_axiom(sub, c)
            return
        if isinstance(sub, Exists):
            lhs: ClassExpr = Exists(sub.role, self._define(sub.filler))
        elif isinstance(sub, And):
            handles = [self._define(c) for c in sub.conjuncts]
            cur = handles[0]
            for h in handles[1:-1]:
                step = self._fresh()
                self._add_normal(Axiom(And((cur, h)), step))
                cur = step
            lhs = And((cur, handles[-1]))
        else:
            lhs = sub
        if isinstance(sup, Exists):
            rhs: ClassExpr = Exists(sup.role, self._define(sup.filler))
            if not isinstance(lhs, (Top, Bottom, Named)):
                mid = self._fresh()
                self._add_normal(Axiom(lhs, mid))
                lhs = mid
        else:
            rhs = sup
        self._add_normal(Axiom(lhs, rhs))

    def _add_normal(self, ax: Axiom) -> None:
        sub, sup = ax.sub, ax.sup
        if sub == sup or isinstance(sup, Top) or isinstance(sub, Bottom):
            return
        if isinstance(sub, Exists) and isinstance(sub.filler, Bottom):
            return
        if self._tbox_nf is not None:
            self._tbox_nf.append(ax)
        if isinstance(sub, And):
            a1, a2 = sub.conjuncts
            b = sup
            assert isinstance(b, (Top, Bottom, Named))
            self._touch(a1), self._touch(a2), self._touch(b)
            self._conj[a1].append((a2, b))
            self._conj[a2].append((a1, b))
            for a in self._sup_inv[a1] & self._sup_inv[a2]:
                self._push_sup(a, b)
        elif isinstance(sub, Exists):
            filler = sub.filler
            b = sup
            assert isinstance(filler, (Top, Bottom, Named))
            assert isinstance(b, (Top, Bottom, Named))
            self._touch(filler), self._touch(b)
            self._ex_lhs[(sub.role, filler)].append(b)
            for (a, c) in list(self._pairs[sub.role]):
                if filler in self._sup[c]:
                    self._push_sup(a, b)
        elif isinstance(sup, Exists):
            a = sub
            filler = sup.filler
            assert isinstance(a, (Top, Bottom, Named))
            assert isinstance(filler, (Top, Bottom, Named))
            self._touch(a), self._touch(filler)
            self._ex_rhs[a].append((sup.role, filler))
            for s in list(self._sup_inv[a]):
                self._push_pair(sup.role, s, filler)
        else:
            a, b = sub, sup
            self._touch(a), self._touch(b)
            self._is_a[a].append(b)
            for s in list(self._sup_inv[a]):
                self._push_sup(s, b)

    # -- saturation ---------------------------------------------------

    def _touch(self, atom: Atom) -> None:
        if atom not in self._sup:
            self._sup[atom] = set()
            self._push_sup(atom, atom)
            self._push_sup(atom, TOP)

    def _push_sup(self, a: Atom, x: Atom) -> None:
        if x not in self._sup[a]:
            self._sup[a].add(x)
            self._sup_inv[x].add(a)
            self._queue.append(("s", a, x))

    def _push_pair(self, role: str, a: Atom, b: Atom) -> None:
        if (a, b) not in self._pairs[role]:
            self._pairs[role].add((a, b))
            self._preds[b].add((role, a))
            self._queue.append(("r", role, a, b))

    def _saturate(self) -> None:
        queue = self._queue
        while queue:
            item = queue.popleft()
            if item[0] == "s":
                _, a, x = item
                for b in self._is_a.get(x, ()):
                    self._push_sup(a, b)
                for (other, b) in self._conj.get(x, ()):
                    if other in self._sup[a]:
                        self._push_sup(a, b)
                for (role, b) in self._ex_rhs.get(x, ()):
                    self._touch(b)
                    self._push_pair(role, a, b)
                for (role, p) in list(self._preds.get(a, ())):
                    for c in self._ex_lhs.get((role, x), ()):
                        self._push_sup(p, c)
                    if x == BOTTOM:
                        self._push_sup(p, BOTTOM)
            else:
                _, role, a, b = item
                for x in list(self._sup[b]):
                    for c in self._ex_lhs.get((role, x), ()):
                        self._push_sup(a, c)
                if BOTTOM in self._sup[b]:
                    self._push_sup(a, BOTTOM)

    # -- queries --------------------------------------------------------

    def subsumes(self, sub: ClassExpr, sup: ClassExpr) -> bool:
        with self._lock:
            a = self._define(canonicalize(sub))
            b = self._define(canonicalize(sup))
            self._touch(a)
            self._touch(b)
            self._saturate()
            derived = self._sup[a]
            return b in derived or BOTTOM in derived


@lru_cache(maxsize=256)
def _engine(onto: Ontology) -> _Engine:
    return _Engine(onto)


def normalize_tbox(onto: Ontology) -> frozenset[Axiom]:
    """Normal-form axioms (shapes A<=B, A1^A2<=B, A<=some r.B, some r.A<=B)
    entailing exactly the input's subsumptions over its own names.  Fresh
    helper classes carry the reserved ``urn:selfwire:norm#`` prefix."""
    return _engine(onto).tbox_normal_form


def subsumes(onto: Ontology, sub: ClassExpr, sup: ClassExpr) -> bool:
    """True iff the ontology entails that ``sub`` is subsumed by ``sup``.
    Names not declared in the ontology are admitted as fresh classes."""
    return _engine(onto).subsumes(sub, sup)


EMPTY_ONTOLOGY = Ontology("urn:selfwire:ontology#empty", frozenset(), frozenset(), frozenset())


# ---------------------------------------------------------------------------
# Classification and distance


@dataclass
class Hierarchy:
    """Classified named-class hierarchy: transitive reduction of entailed
    subsumptions (``direct_super``) over equivalence groups."""

    direct_super: dict[str, frozenset[str]]
    equiv_groups: tuple[frozenset[str], ...]

    def group_of(self, name: str) -> frozenset[str]:
        for group in self.equiv_groups:
            if name in group:
                return group
        return frozenset((name,))


@lru_cache(maxsize=256)
def classify(onto: Ontology) -> Hierarchy:
    """Classify the ontology's named classes.  The reflexive/transitive
    closure of the result agrees with ``subsumes`` on every named pair."""
    eng = _engine(onto)
    names = sorted(onto.named_classes)
    above: dict[str, set[str]] = {
        a: {b for b in names if eng.subsumes(Named(a), Named(b))} for a in names
    }
    group_map: dict[str, frozenset[str]] = {}
    groups: list[frozenset[str]] = []
    for a in names:
        if a in group_map:
            continue
        group = frozenset(b for b in above[a] if a in above[b])
        groups.append(group)
        for member in group:
            group_map[member] = group
    reps = sorted(min(g) for g in groups)
    rep_of = {name: min(group_map[name]) for name in names}
    strictly_above: dict[str, set[str]] = {
        r: {rep_of[b] for b in above[r] if rep_of[b] != r} for r in reps
    }
    direct: dict[str, set[str]] = {r: set() for r in reps}
    for r in reps:
        for s in strictly_above[r]:
            if not any(s in strictly_above[mid] for mid in strictly_above[r] if mid != s):
                direct[r].add(s)
    direct_super = {
        name: frozenset(m for s in direct[rep_of[name]] for m in group_map[s])
        for name in names
    }
    return Hierarchy(direct_super, tuple(sorted(groups, key=min)))


INF = math.inf


def distance(h: Hierarchy, onto: Ontology, frm: ClassExpr, to: Named) -> int | float:
    """0 when ``frm`` is subsumed by ``to``; otherwise the shortest undirected
    path in the contracted hierarchy between any named class above ``frm``
    and ``to``; ``math.inf`` when no path exists."""
    if subsumes(onto, frm, to):
        return 0
    if to.iri not in onto.named_classes:
        return INF
    sources = {n for n in onto.named_classes if subsumes(onto, frm, Named(n))}
    if not sources:
        return INF
    rep = {name: min(h.group_of(name)) for name in onto.named_classes}
    adjacency: dict[str, set[str]] = defaultdict(set)
    for name, supers in h.direct_super.items():
        for s in supers:
            adjacency[rep[name]].add(rep[s])
            adjacency[rep[s]].add(rep[name])
    targets = {rep[n] for n in sources}
    start = rep[to.iri]
    seen = {start}
    frontier = [start]
    depth = 0
    while frontier:
        if any(node in targets for node in frontier):
            return depth
        nxt = []
        for node in frontier:
            for nb in adjacency[node]:
                if nb not in seen:
                    seen.add(nb)
                    nxt.append(nb)
        frontier = nxt
        depth += 1
    return INF

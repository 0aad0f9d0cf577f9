import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from generators import random_expr, random_ontology
from model_oracle import oracle_subsumes
from selfwire.classexpr import (
    BOTTOM,
    NORM_PREFIX,
    TOP,
    And,
    Axiom,
    Bottom,
    Exists,
    ExprSyntaxError,
    InconsistentOntologyError,
    Named,
    Ontology,
    Top,
    and_of,
    axiom_line,
    canonicalize,
    classify,
    distance,
    expr_names,
    normalize_tbox,
    parse_class_expr,
    parse_ontology,
    serialize_expr,
    subsumes,
)

A, B, C, D = (Named(f"urn:q#{x}") for x in "ABCD")
R, S = "urn:q#r", "urn:q#s"

EMPTY = Ontology.from_axioms("urn:q#empty", [])


def onto(*axioms: tuple) -> Ontology:
    return Ontology.from_axioms("urn:q#o", [Axiom(sub, sup) for sub, sup in axioms])


# -- strategies -------------------------------------------------------------

names = st.sampled_from([A, B, C, D])
roles = st.sampled_from([R, S])

exprs = st.recursive(
    st.one_of(names, st.just(TOP), st.just(BOTTOM)),
    lambda inner: st.one_of(
        st.builds(lambda cs: And(tuple(cs)), st.lists(inner, min_size=2, max_size=3)),
        st.builds(Exists, roles, inner),
    ),
    max_leaves=6,
)
canonical_exprs = exprs.map(canonicalize)


# -- parsing and canonical forms --------------------------------------------


def test_parse_keywords():
    assert parse_class_expr("owl:Thing") == TOP
    assert parse_class_expr("owl:Nothing") == BOTTOM


def test_parse_and():
    got = parse_class_expr("(and <urn:q#NamedEntity> <urn:q#Linked>)")
    assert got == And((Named("urn:q#Linked"), Named("urn:q#NamedEntity")))


def test_parse_canonicalizes_duplicates_and_top():
    assert parse_class_expr("(and <urn:a> (and <urn:a> owl:Thing))") == Named("urn:a")


def test_parse_some():
    got = parse_class_expr("(some <urn:q#r> (and <urn:q#A> <urn:q#B>))")
    assert got == Exists(R.replace("#r", "#r"), And((A, B)))


def test_and_with_bottom_collapses():
    assert parse_class_expr("(and <urn:q#A> owl:Nothing)") == BOTTOM


@pytest.mark.parametrize(
    "bad,fragment",
    [
        ("(and <urn:a>", "unbalanced"),
        ("<urn:a", "unbalanced '<'"),
        ("(or <urn:a> <urn:b>)", "unknown operator"),
        ("<urn:a\\>b>", "unknown escape"),
        ("bogus", "unexpected token"),
        ("<noscheme>", "contain ':'"),
        ("owl:Thing owl:Thing", "trailing"),
    ],
)
def test_parse_errors(bad, fragment):
    with pytest.raises(ExprSyntaxError) as err:
        parse_class_expr(bad)
    assert fragment in str(err.value)
    assert "offset" in str(err.value)


@given(canonical_exprs)
def test_parse_serialize_roundtrip(expr):
    text = serialize_expr(expr)
    assert parse_class_expr(text) == expr
    assert serialize_expr(parse_class_expr(text)) == text


@given(exprs)
def test_canonicalize_idempotent(expr):
    once = canonicalize(expr)
    assert canonicalize(once) == once


# -- subsumption -------------------------------------------------------------


@given(canonical_exprs)
def test_subsumes_reflexive(expr):
    assert subsumes(EMPTY, expr, expr)


def test_conjunct_elimination():
    assert subsumes(EMPTY, And((A, B)), A)
    assert subsumes(EMPTY, And((A, B)), B)


def test_transitivity_chain():
    assert subsumes(onto((A, B), (B, C)), A, C)


def test_not_subsumed_without_axioms():
    assert not subsumes(EMPTY, A, B)


def test_top_bottom_edges():
    assert subsumes(EMPTY, A, TOP)
    assert subsumes(EMPTY, BOTTOM, A)
    assert not subsumes(EMPTY, TOP, A)


def test_existential_monotone():
    o = onto((A, B))
    assert subsumes(o, Exists(R, A), Exists(R, B))
    assert not subsumes(o, Exists(R, B), Exists(R, A))


def test_existential_axiom_chain():
    o = onto((A, Exists(R, B)), (Exists(R, B), C))
    assert subsumes(o, A, C)


def test_unsatisfiable_class_subsumed_by_everything():
    o = onto((A, BOTTOM))
    assert subsumes(o, A, B)
    assert subsumes(o, Exists(R, A), BOTTOM)


@given(canonical_exprs, canonical_exprs, canonical_exprs)
def test_and_commutativity(a, b, x):
    assert subsumes(EMPTY, and_of([a, b]), x) == subsumes(EMPTY, and_of([b, a]), x)


@given(st.integers(0, 10**9))
@settings(max_examples=60, deadline=None)
def test_subsumes_transitive_on_random_ontologies(seed):
    rng = random.Random(seed)
    o = random_ontology(rng)
    e1, e2, e3 = (random_expr(rng) for _ in range(3))
    if subsumes(o, e1, e2) and subsumes(o, e2, e3):
        assert subsumes(o, e1, e3)


@given(st.integers(0, 10**9))
@settings(max_examples=60, deadline=None)
def test_subsumes_monotone_under_new_axioms(seed):
    rng = random.Random(seed)
    o = random_ontology(rng, max_axioms=6)
    e1, e2 = random_expr(rng), random_expr(rng)
    try:
        bigger = Ontology.from_axioms(
            o.iri + "+",
            set(o.axioms) | {Axiom(random_expr(rng, allow_bottom=False), random_expr(rng, allow_bottom=False))},
        )
    except InconsistentOntologyError:
        return
    if subsumes(o, e1, e2):
        assert subsumes(bigger, e1, e2)


@given(st.integers(0, 10**9))
@settings(max_examples=100, deadline=None)
def test_subsumes_agrees_with_model_oracle(seed):
    rng = random.Random(seed)
    o = random_ontology(rng)
    sub, sup = random_expr(rng), random_expr(rng)
    assert subsumes(o, sub, sup) == oracle_subsumes(o.axioms, sub, sup)


# -- normalization ------------------------------------------------------------


def test_normalize_already_normal():
    o = onto((A, B))
    assert normalize_tbox(o) == frozenset({Axiom(A, B)})


def test_normalize_empty():
    assert normalize_tbox(EMPTY) == frozenset()


def test_normalize_nested_filler_shape():
    o = onto((A, Exists(R, And((B, C)))))
    nf = normalize_tbox(o)
    fresh = {n for ax in nf for n in expr_names(ax.sub) | expr_names(ax.sup) if n.startswith(NORM_PREFIX)}
    assert len(fresh) == 1
    x = Named(next(iter(fresh)))
    assert nf == frozenset(
        {Axiom(A, Exists(R, x)), Axiom(x, B), Axiom(x, C), Axiom(And((B, C)), x)}
    )


def test_normalize_preserves_entailments_over_original_names():
    # checked against the model oracle on both versions
    o = onto((A, Exists(R, And((B, C)))))
    nf_onto = Ontology(o.iri + "#nf", normalize_tbox(o), frozenset(), frozenset())
    for sub in (A, B, C):
        for sup in (A, B, C, Exists(R, B), Exists(R, And((B, C)))):
            assert oracle_subsumes(o.axioms, sub, sup) == oracle_subsumes(
                nf_onto.axioms, sub, sup
            )


def test_normalize_output_shapes():
    rng = random.Random(7)
    for _ in range(40):
        o = random_ontology(rng)
        for ax in normalize_tbox(o):
            sub, sup = ax.sub, ax.sup
            if isinstance(sub, And):
                assert len(sub.conjuncts) == 2
                assert all(isinstance(c, (Named, Top, Bottom)) for c in sub.conjuncts)
                assert isinstance(sup, (Named, Top, Bottom))
            elif isinstance(sub, Exists):
                assert isinstance(sub.filler, (Named, Top, Bottom))
                assert isinstance(sup, (Named, Top, Bottom))
            else:
                assert isinstance(sup, (Named, Top, Bottom, Exists))
                if isinstance(sup, Exists):
                    assert isinstance(sup.filler, (Named, Top, Bottom))


def test_normalize_deterministic():
    rng = random.Random(11)
    o = random_ontology(rng)
    assert normalize_tbox(o) == normalize_tbox(Ontology.from_axioms(o.iri, o.axioms))


# -- classification and distance ----------------------------------------------


def test_classify_single_edge():
    h = classify(onto((A, B)))
    assert h.direct_super["urn:q#A"] == frozenset({"urn:q#B"})
    assert h.direct_super["urn:q#B"] == frozenset()


def test_classify_equivalence_group():
    h = classify(onto((A, B), (B, A)))
    assert frozenset({"urn:q#A", "urn:q#B"}) in h.equiv_groups


def test_classify_transitive_reduction():
    h = classify(onto((A, B), (B, C), (A, C)))
    assert h.direct_super["urn:q#A"] == frozenset({"urn:q#B"})
    assert h.direct_super["urn:q#B"] == frozenset({"urn:q#C"})


@given(st.integers(0, 10**9))
@settings(max_examples=60, deadline=None)
def test_classify_closure_matches_subsumes(seed):
    rng = random.Random(seed)
    o = random_ontology(rng)
    h = classify(o)
    rep = {n: min(h.group_of(n)) for n in o.named_classes}
    # reflexive/transitive closure over the contracted direct_super graph
    reach: dict[str, set[str]] = {}
    for n in sorted(o.named_classes):
        seen = {rep[n]}
        stack = [rep[n]]
        while stack:
            cur = stack.pop()
            for sup in h.direct_super[cur]:
                if rep[sup] not in seen:
                    seen.add(rep[sup])
                    stack.append(rep[sup])
        reach[n] = seen
    for a in o.named_classes:
        for b in o.named_classes:
            assert (rep[b] in reach[a]) == subsumes(o, Named(a), Named(b))


def test_distance_zero_iff_subsumed():
    o = onto((A, B))
    h = classify(o)
    assert distance(h, o, A, B) == 0
    assert distance(h, o, B, A) == 1


def test_distance_disconnected_is_inf():
    o = onto((A, B))
    h = classify(o)
    assert distance(h, o, C, D) == float("inf")


@given(st.integers(0, 10**9))
@settings(max_examples=40, deadline=None)
def test_distance_zero_iff_subsumes_property(seed):
    rng = random.Random(seed)
    o = random_ontology(rng)
    if not o.named_classes:
        return
    h = classify(o)
    frm = random_expr(rng)
    to = Named(rng.choice(sorted(o.named_classes)))
    d = distance(h, o, frm, to)
    assert (d == 0) == subsumes(o, frm, to)


# -- ontology files -----------------------------------------------------------


def test_parse_ontology_lines_and_comments():
    o = parse_ontology("# comment\n(<urn:q#A> <= <urn:q#B>)\n\n", "urn:q#f")
    assert o.axioms == frozenset({Axiom(A, B)})
    assert o.named_classes == frozenset({"urn:q#A", "urn:q#B"})


def test_parse_ontology_reports_line():
    with pytest.raises(Exception) as err:
        parse_ontology("(<urn:q#A> <= <urn:q#B>)\n(<urn:q#A> <=\n", "urn:q#f")
    assert "line 2" in str(err.value)


def test_reserved_prefix_rejected():
    with pytest.raises(Exception):
        Ontology.from_axioms("urn:q#o", [Axiom(Named(NORM_PREFIX + "0"), A)])


def test_axiom_line_roundtrip():
    ax = Axiom(And((A, B)), Exists(R, C))
    o = parse_ontology(axiom_line(ax), "urn:q#f")
    assert o.axioms == frozenset({ax})

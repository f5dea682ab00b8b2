from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from mdistinct.errors import ValidationError
from mdistinct.updates import (USS, UpdateModel, cus_disjointness, implies,
                               intersect, is_legal_update_instance, uss_of,
                               validate_update_model)


class TestUpdateModel:
    def test_uniform_shares(self, worked_model):
        assert worked_model.prob("Dyspepsia", "Gastritis") == Fraction(1, 2)
        assert worked_model.prob("LungCancer", "LungCancer") == 1
        assert worked_model.prob("Dyspepsia", "Pneumonia") == 0

    def test_from_classes(self, class_model):
        assert class_model.cus_of("Flu") == {"Flu", "Pneumonia", "LungCancer"}
        assert class_model.prob("Flu", "Pneumonia") == Fraction(1, 3)

    def test_unknown_value(self, worked_model):
        with pytest.raises(ValidationError):
            worked_model.cus_of("Migraine")

    def test_valid_models_report_nothing(self, worked_model, class_model):
        assert validate_update_model(worked_model) == []
        assert validate_update_model(class_model) == []

    def test_closure_violation_detected(self):
        # b reachable from a, but b can escape to c which a cannot reach
        model = UpdateModel(
            ("a", "b", "c"),
            {"a": frozenset("ab"), "b": frozenset("bc"), "c": frozenset("c")},
            {("a", "a"): Fraction(1, 2), ("a", "b"): Fraction(1, 2),
             ("b", "b"): Fraction(1, 2), ("b", "c"): Fraction(1, 2),
             ("c", "c"): Fraction(1)})
        problems = validate_update_model(model)
        assert any("closure" in p for p in problems)

    def test_probability_sum_checked(self):
        model = UpdateModel(("a", "b"),
                            {"a": frozenset("ab"), "b": frozenset("b")},
                            {("a", "a"): Fraction(1, 2),
                             ("a", "b"): Fraction(1, 3),
                             ("b", "b"): Fraction(1)})
        assert any("sums to" in p for p in validate_update_model(model))

    def test_zero_probability_on_cus_member(self):
        model = UpdateModel(("a", "b"),
                            {"a": frozenset("ab"), "b": frozenset("b")},
                            {("a", "a"): Fraction(1),
                             ("a", "b"): Fraction(0),
                             ("b", "b"): Fraction(1)})
        assert any("strictly positive" in p
                   for p in validate_update_model(model))


class TestUss:
    def test_canonical_order_insensitive(self):
        a = USS([{"x", "y"}, {"z"}])
        b = USS([{"z"}, {"y", "x"}])
        assert a == b
        assert hash(a) == hash(b)
        assert len(a) == 2

    def test_covers(self):
        sig = USS([{"x", "y"}, {"z"}])
        assert sig.covers("z") and not sig.covers("w")

    def test_uss_of_worked_group(self, worked_model):
        sig = uss_of(["Dyspepsia", "Pneumonia"], worked_model)
        assert sig == USS([{"Dyspepsia", "Gastritis"},
                           {"Pneumonia", "LungCancer"}])


class TestLegalInstance:
    def test_worked_positive(self, worked_model):
        sig = uss_of(["Dyspepsia", "Pneumonia"], worked_model)
        assert is_legal_update_instance(["Gastritis", "LungCancer"], sig)

    def test_size_mismatch(self):
        assert not is_legal_update_instance(["x"], USS([{"x"}, {"y"}]))

    def test_stray_value(self):
        assert not is_legal_update_instance(["x", "w"], USS([{"x"}, {"y"}]))

    def test_starved_entry(self):
        # both values sit in the first entry; the second entry gets nothing
        sig = USS([{"x", "y"}, {"z"}])
        assert not is_legal_update_instance(["x", "y"], sig)


class TestImplies:
    def test_reflexive(self, worked_model):
        sig = uss_of(["Dyspepsia", "Pneumonia"], worked_model)
        assert implies(sig, sig)

    def test_subset_entries(self):
        big = USS([{"a", "b"}, {"c", "d"}])
        small = USS([{"a"}, {"c", "d"}])
        assert implies(big, small)
        assert not implies(small, big)

    def test_needs_bijection_not_just_inclusion(self):
        # both entries of b fit only the first entry of a
        a = USS([{"a", "b"}, {"c"}])
        b = USS([{"a"}, {"b"}])
        assert not implies(a, b)

    def test_size_mismatch(self):
        assert not implies(USS([{"a"}]), USS([{"a"}, {"a", "b"}]))


class TestIntersect:
    def test_self_intersection_is_identity(self, worked_model):
        sig = uss_of(["Dyspepsia", "Pneumonia"], worked_model)
        plan = intersect(sig, sig)
        assert plan is not None
        assert plan.result == sig
        assert plan.score == 1

    def test_partial_overlap(self):
        a = USS([{"a", "b"}, {"c", "d"}])
        b = USS([{"b", "c"}, {"d", "e"}])
        plan = intersect(a, b)
        assert plan is not None
        assert plan.result == USS([{"b"}, {"d"}])
        assert plan.score == Fraction(2, 6)

    def test_no_plan_when_an_entry_cannot_pair(self):
        assert intersect(USS([{"a"}, {"b"}]), USS([{"a"}, {"c"}])) is None

    def test_absorbed_intersection(self):
        # one operand already refines the other; the intersection is the
        # finer signature itself
        coarse = USS([{"Dyspepsia", "Gastritis"},
                      {"Flu", "Pneumonia", "LungCancer"}])
        fine = USS([{"Dyspepsia", "Gastritis"}, {"Flu", "Pneumonia"}])
        plan = intersect(coarse, fine)
        assert plan is not None
        assert plan.result == fine

    def test_maximizes_total_overlap(self):
        # pairing by first-fit would score lower than the crossed pairing
        a = USS([{"a", "b", "c"}, {"c", "d"}])
        b = USS([{"c"}, {"a", "b", "c"}])
        plan = intersect(a, b)
        best = max(
            Fraction(len(a.entries[0] & b.entries[0])
                     + len(a.entries[1] & b.entries[1]),
                     len(a.entries[0] | b.entries[0])
                     + len(a.entries[1] | b.entries[1])),
            Fraction(len(a.entries[0] & b.entries[1])
                     + len(a.entries[1] & b.entries[0]),
                     len(a.entries[0] | b.entries[1])
                     + len(a.entries[1] | b.entries[0])))
        assert plan.score == best


def test_cus_disjointness(worked_model):
    assert cus_disjointness(["Dyspepsia", "Glaucoma"], worked_model)
    # Flu and Pneumonia share their whole CUS
    assert not cus_disjointness(["Flu", "Pneumonia"], worked_model)


# ---------------------------------------------------------------------------
# property tests


@st.composite
def class_models(draw):
    n = draw(st.integers(2, 10))
    values = [f"v{i}" for i in range(n)]
    # random partition into classes
    k = draw(st.integers(1, n))
    assignment = [draw(st.integers(0, k - 1)) for _ in values]
    classes: dict[int, list[str]] = {}
    for v, c in zip(values, assignment):
        classes.setdefault(c, []).append(v)
    return UpdateModel.from_classes(list(classes.values()))


@settings(max_examples=120, deadline=None)
@given(st.data())
def test_implies_licenses_every_draw(data):
    """When a implies b, any one-value-per-entry pick from b is a legal
    update instance of a."""
    model = data.draw(class_models())
    dom = model.sensitive_domain
    size = data.draw(st.integers(1, min(4, len(dom))))
    va = data.draw(st.lists(st.sampled_from(dom), min_size=size,
                            max_size=size))
    vb = data.draw(st.lists(st.sampled_from(dom), min_size=size,
                            max_size=size))
    a, b = uss_of(va, model), uss_of(vb, model)
    if not implies(a, b):
        return
    picks = [data.draw(st.sampled_from(sorted(entry))) for entry in b.entries]
    assert is_legal_update_instance(picks, a)


@settings(max_examples=120, deadline=None)
@given(st.data())
def test_intersection_result_is_coimplied(data):
    """Both operands imply the intersection signature, and its entries are
    subsets of paired operand entries."""
    model = data.draw(class_models())
    dom = model.sensitive_domain
    size = data.draw(st.integers(1, min(4, len(dom))))
    va = data.draw(st.lists(st.sampled_from(dom), min_size=size,
                            max_size=size))
    vb = data.draw(st.lists(st.sampled_from(dom), min_size=size,
                            max_size=size))
    a, b = uss_of(va, model), uss_of(vb, model)
    plan = intersect(a, b)
    if plan is None:
        return
    assert implies(a, plan.result)
    assert implies(b, plan.result)
    assert 0 < plan.score <= 1
    for i, j in enumerate(plan.pairing):
        assert plan.result.entries  # non-degenerate
        assert a.entries[i] & b.entries[j]


@settings(max_examples=150, deadline=None)
@given(st.data())
def test_closure_makes_legality_hereditary(data):
    """Closure means a legal instance's own signature is implied by the
    original: republishing the drawn values is again explainable."""
    model = data.draw(class_models())
    dom = model.sensitive_domain
    size = data.draw(st.integers(1, min(4, len(dom))))
    values = data.draw(st.lists(st.sampled_from(dom), min_size=size,
                                max_size=size))
    sig = uss_of(values, model)
    nxt = [data.draw(st.sampled_from(sorted(model.cus_of(v))))
           for v in values]
    assert is_legal_update_instance(nxt, sig)
    assert implies(sig, uss_of(nxt, model))

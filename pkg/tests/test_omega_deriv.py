import json
from dataclasses import replace

import pytest

from delta2.coding import p0, pair
from delta2.ershov import check_lowering, check_weakly_descending
from delta2.omega_deriv import (Derivation, DerivationBudgetError, DerivationError, Rule, audit_local_correctness,
                                block_change_verdict, canonical_derivation, check_forall_block_changes,
                                derivation_pair, dump_derivation, extract_f, extract_h, least_witness_bound,
                                oplus1, settle, sigma2_trace, sigma_bound_violation, trace, trace_csv, trace_sigma)
from delta2.ordinal import Cmp, Ordinal, compare, scale_finite
from delta2.spec_lang import Truth, brute_truth, parse_spec

from corpus import load

SHIFT = parse_spec("A(x,y,c) := y = x + c; B(z,u,c) := z = c;")
EARLY_FAIL = parse_spec("A(x,y,c) := true; B(z,u,c) := z = c || u < 2;")


def test_auto_bound_matches_least_pair_code():
    # p(x, y, 3) needs (x)_1 = 3; the least such code is pair(0, 3)
    expected = min(pair(a, 3) for a in range(5))
    assert least_witness_bound(SHIFT, 3, 20) == expected == 9
    d = canonical_derivation(SHIFT, 3, "auto", audit_window=20)
    assert d.X == 9
    assert audit_local_correctness(d, 4, 6).ok


def test_bound_below_every_candidate_rejected():
    with pytest.raises(DerivationError):
        canonical_derivation(SHIFT, 3, 8, audit_window=20)


def test_root_ordinal_below_K():
    d = canonical_derivation(SHIFT, 3, 9, audit_window=20)
    assert d.root.ord == Ordinal.omega_power(1, 10) + 1
    assert d.K == Ordinal.omega_power(1, 11)
    assert compare(d.root.ord, d.K) is Cmp.LT


def test_sigma_starts_at_root_and_steps_along_true_instances():
    d = canonical_derivation(EARLY_FAIL, 1, form="sigma2")
    assert trace_sigma(d, 0) == ()
    assert trace_sigma(d, 1) == (0,)
    assert trace_sigma(d, 2) == (0, 0)
    assert trace_sigma(d, 3) == oplus1((0, 0))


def test_sigma_descends_at_third_child():
    # candidate 0 holds for u = 0, 1 and fails at u = 2
    d = canonical_derivation(EARLY_FAIL, 1, form="sigma2")
    assert d.node((0, 2)).rule is Rule.REP
    assert trace_sigma(d, 4) == (0, 2)
    assert trace_sigma(d, 5) == (0, 2, 0)
    assert d.node((0, 2, 0)).candidate == 1


def tampered(spec, c, X, form, address, **changes):
    clean = Derivation(spec, c, X, form)
    node = clean.node(address)
    return Derivation(spec, c, X, form, overrides={address: replace(node, **changes)})


def test_false_int_fails_at_its_address():
    node = Derivation(SHIFT, 1, 1, "sigma2").node((0, 0))
    assert node.rule is Rule.REP
    d = tampered(SHIFT, 1, 1, "sigma2", (0, 0), rule=Rule.INT, mfml=node.sfml)
    v = audit_local_correctness(d, 4, 4)
    assert not v.ok and v.address == (0, 0) and "Int" in v.clause


def test_unequal_forall_ordinals_fail():
    d = tampered(SHIFT, 1, 1, "sigma2", (0, 1), ord=Ordinal.of(1))
    v = audit_local_correctness(d, 4, 4)
    assert not v.ok and v.address == (0,) and "share one ordinal" in v.clause


def test_non_dropping_ordinal_fails():
    d = tampered(SHIFT, 1, 1, "sigma2", (0,), ord=Ordinal.omega_power(1, 5))
    v = audit_local_correctness(d, 4, 4)
    assert not v.ok and v.address == ()


def test_rep_beyond_bound_raises():
    d = Derivation(SHIFT, 1, 0, "sigma2")
    with pytest.raises(DerivationBudgetError):
        d.node((0, 0, 0))
    assert not audit_local_correctness(d, 4, 4).ok


def test_block_verdict_examples():
    assert block_change_verdict(["a"] * 6, [1, 1, 1, 0, 0, 0], [False] * 6).ok
    ok = block_change_verdict(["a"] * 3, [1, 0, 1], [False, False, True])
    assert ok.ok and ok.max_changes == 2
    bad = block_change_verdict(["a"] * 4, [1, 0, 1, 0], [False] * 4)
    assert not bad.ok
    also_bad = block_change_verdict(["a"] * 3, [1, 0, 1], [False, False, False])
    assert not also_bad.ok


def forall_children(d, tr):
    for w, a in enumerate(tr.sigma[:tr.window + 1]):
        if tr.block[w] is not None:
            yield w, a, d.node(a)


def test_f_on_forall_children_matches_direct_oracle():
    cs = load("r1_late")
    d = canonical_derivation(cs.spec, 0)
    tr = trace(d, 200)
    seen_early = False
    for w, a, node in forall_children(d, tr):
        xb, n = node.candidate, a[-1]
        witnessed = any(cs.spec.A(p0(xb), p0(k), 0) for k in range(n + 1))
        assert tr.f[w] == (0 if d.eq_true(node.sfml) and witnessed else 1)
        if p0(xb) == 0 and n < pair(6, 0):
            seen_early = True
            assert tr.f[w] == 1
    assert seen_early


def test_h_on_entering_forall():
    cs = load("r1_three")
    d = canonical_derivation(cs.spec, 1)
    tr = trace(d, 200)
    entries = 0
    for w, a, node in forall_children(d, tr):
        if a[-1] == 0:
            entries += 1
            assert tr.h[w] == scale_finite(3, node.ord) + 2
    assert entries >= 1


@pytest.mark.parametrize("name", ["r0_shift", "r1_three", "r2_five"])
def test_full_run_window_checks(name):
    cs = load(name)
    for c in range(3):
        d = canonical_derivation(cs.spec, c)
        p = derivation_pair(d)
        _, bound = extract_h(d)
        assert bound == scale_finite(3, d.K)
        assert check_weakly_descending(p, c, 200).ok and check_lowering(p, c, 200).ok
        tr = trace(d, 200)
        assert sigma_bound_violation(tr) is None
        assert check_forall_block_changes(d, 200).ok


def test_true_side_settles_to_zero():
    cs = load("r0_shift")
    d = canonical_derivation(cs.spec, 2)
    s = settle(d, 40)
    assert brute_truth(cs.spec, 2, 50) is Truth.TRUE
    assert s.value == 0
    assert extract_f(d)(2, s.w + 50) == 0


def test_false_side_settles_to_one():
    spec = parse_spec("A(x,y,c) := 1 < x || y = 2*x + 1 && c < 3; B(z,u,c) := z = c && c < 3;")
    d = canonical_derivation(spec, 4)
    assert brute_truth(spec, 4, 30) is Truth.FALSE
    assert settle(d, 40).value == 1


def test_sigma2_trace_shift():
    d = canonical_derivation(SHIFT, 3, form="sigma2")
    p = sigma2_trace(d)
    s = settle(d, 50)
    assert s.value == 3 and p.f(3, s.w) == 3


def test_sigma2_settles_after_two_refutations():
    spec = parse_spec("A(x,y,c) := true; B(z,u,c) := z = 2 || u < z + 1;")
    d = canonical_derivation(spec, 0, form="sigma2")
    p = sigma2_trace(d)
    fs = [p.f(0, w) for w in range(60)]
    tr = trace(d, 59)
    candidates_seen = {d.node(a).candidate for w, a, _ in forall_children(d, tr)}
    assert candidates_seen == {0, 1, 2}
    assert fs[-1] == 2
    s = settle(d, 30)
    assert s.candidate == 2 and all(spec.B(2, u, 0) for u in range(201))
    for w in range(60):
        if tr.block[w] is None:
            assert fs[w] == 0
    assert check_weakly_descending(p, 0, 59).ok


def test_sigma2_trace_needs_sigma2_form():
    with pytest.raises(ValueError):
        sigma2_trace(canonical_derivation(SHIFT, 1))


def test_wrong_c_rejected():
    d = canonical_derivation(SHIFT, 1, form="sigma2")
    with pytest.raises(ValueError):
        extract_f(d)(2, 0)


def test_dumps():
    d = canonical_derivation(EARLY_FAIL, 1, form="sigma2")
    lines = dump_derivation(d, 3, 3).splitlines()
    first = json.loads(lines[0])
    assert first["address"] == [] and first["rule"] == "Exists"
    csv_text = trace_csv(trace(d, 5))
    assert csv_text.splitlines()[0] == "w,address,f,h"
    assert csv_text.splitlines()[1].startswith("0,root,")

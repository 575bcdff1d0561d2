import io
import random

import pytest
from hypothesis import given, strategies as st

from delta2.ershov import (ChainLimit, DescentViolation, WitnessPair, chain_limit, change_points,
                           check_lowering, check_weakly_descending, find_limit, limit_lemma_witness,
                           read_trace_csv, trace_csv, trace_rows, verdicts_json, window_verdicts)
from delta2.herbrand import herbrand_pair
from corpus import load
from delta2.ordinal import OMEGA, ZERO, Ordinal, parse_ordinal
from delta2.spec_lang import Truth, brute_truth, parse_spec

P = parse_ordinal


def table_pair(fs, hs, K):
    return WitnessPair(f=lambda c, w: fs[min(w, len(fs) - 1)], h=lambda c, w: hs[min(w, len(hs) - 1)], K=K)


def test_constant_zero_h_passes():
    p = WitnessPair(lambda c, w: 0, lambda c, w: ZERO, Ordinal.of(1))
    assert check_weakly_descending(p, 0, 50).ok


def test_descending_from_omega():
    hs = [OMEGA] + [Ordinal.of(n) for n in range(5, -1, -1)]
    assert check_weakly_descending(table_pair([0], hs, P("w+1")), 0, 6).ok


def test_alternating_h_fails_at_arrival():
    hs = [Ordinal.of(v) for v in (2, 3, 2, 3)]
    v = check_weakly_descending(table_pair([0], hs, Ordinal.of(5)), 0, 3)
    assert not v.ok and v.first_violation == 1


def test_h_must_stay_below_K():
    v = check_weakly_descending(table_pair([0], [Ordinal.of(5)], Ordinal.of(5)), 0, 3)
    assert not v.ok and v.first_violation == 0


def test_lowering_examples():
    const = table_pair([1], [Ordinal.of(3)], None)
    assert check_lowering(const, 0, 10).ok
    fs = [1, 1, 1, 0, 0]
    assert check_lowering(table_pair(fs, [OMEGA] * 3 + [Ordinal.of(5)] * 2, None), 0, 4).ok
    v = check_lowering(table_pair(fs, [OMEGA] * 5, None), 0, 4)
    assert not v.ok and v.first_violation == 3


def test_find_limit_constant():
    r = find_limit(table_pair([1], [ZERO], Ordinal.of(1)), 0, 20)
    assert r.observed_limit == 1 and r.last_change_w == 0 and r.changes == 0 and r.certified


def test_find_limit_hand_table():
    fs = [1, 0, 1, 1, 1, 1]
    hs = [Ordinal.of(v) for v in (4, 3, 2, 2, 2, 2)]
    r = find_limit(table_pair(fs, hs, Ordinal.of(5)), 0, 5)
    assert r.observed_limit == 1 and r.changes == 2 and r.last_change_w == 2
    assert r.reliable and not r.certified


def test_find_limit_herbrand_shift():
    cs = load("r0_shift")
    r = find_limit(herbrand_pair(cs.certificate, cs.spec), 4, 50)
    assert r.observed_limit == 0



def test_baseline_false_side():
    spec = parse_spec("A(x,y,c) := false; B(z,u,c) := false;")
    p = limit_lemma_witness(spec)
    assert p.provenance == "baseline" and p.K is None
    assert [p.f(3, w) for w in range(20)] == [1] * 20


def test_baseline_at_zero():
    # window 0: z0 = least unrefuted z <= 0, x0 likewise; each is 1 when absent
    spec = parse_spec("A(x,y,c) := y = x + c; B(z,u,c) := z = c;")
    p = limit_lemma_witness(spec)
    assert p.f(0, 0) == 0  # z=0 survives u=0 while x=0 is refuted by y=0
    assert p.f(2, 0) == 1  # z0 = 1, and x=0 survives (A(0,0,2) is false)


def test_baseline_delayed_limit():
    # x0(w) = w - 6 until z = 7 appears, so f reaches its limit only at w = 13
    spec = parse_spec("A(x,y,c) := y = x + c; B(z,u,c) := z = c;")
    p = limit_lemma_witness(spec)
    fs = [p.f(7, w) for w in range(40)]
    assert fs[:13] == [1] * 13 and fs[13:] == [0] * 27


def test_baseline_matches_brute_on_random_specs():
    rng = random.Random(3)
    for _ in range(10):
        a, b = rng.randint(0, 4), rng.randint(0, 4)
        spec = parse_spec(f"A(x,y,c) := y = x*{a} + c; B(z,u,c) := z*{b} = c || u < z;")
        p = limit_lemma_witness(spec)
        for c in range(5):
            truth = brute_truth(spec, c, 40)
            if truth is not Truth.UNKNOWN:
                assert p.f(c, 80) == (0 if truth is Truth.TRUE else 1)


def test_chain_limit_examples():
    assert chain_limit(lambda w: OMEGA, 10) == ChainLimit(OMEGA, 0)
    seq = [P("w*2"), P("w+3"), P("w+1"), Ordinal.of(5), Ordinal.of(5), Ordinal.of(5)]
    assert chain_limit(lambda w: seq[w], 5) == ChainLimit(Ordinal.of(5), 3)
    with pytest.raises(DescentViolation):
        chain_limit(lambda w: Ordinal.of(w % 2), 4)


@given(st.lists(st.integers(0, 50), min_size=1, max_size=40))
def test_chain_limit_random(values):
    chain = sorted(values, reverse=True)
    res = chain_limit(lambda w: Ordinal.of(chain[w]), len(chain) - 1)
    assert res.minimum == Ordinal.of(chain[-1])
    assert chain[res.first_w] == chain[-1] and (res.first_w == 0 or chain[res.first_w - 1] > chain[-1])


@given(st.lists(st.integers(0, 1), min_size=1, max_size=30))
def test_change_points_oracle(fs):
    assert len(change_points(fs)) == sum(1 for a, b in zip(fs, fs[1:]) if a != b)


def test_trace_csv_round_trip():
    p = WitnessPair(lambda c, w: (c + w) % 2, lambda c, w: Ordinal.of(max(0, 9 - w)), Ordinal.of(10))
    text = trace_csv(trace_rows(p, [0, 1], 9))
    assert text.splitlines()[0] == "c,w,f,h"
    back = read_trace_csv(io.StringIO(text))
    for c in (0, 1):
        fs, hs = p.sample(c, 9)
        assert back[c] == (fs, hs)


def test_trace_csv_gap_rejected():
    with pytest.raises(ValueError):
        read_trace_csv(io.StringIO("c,w,f,h\n0,0,1,0\n0,2,1,0\n"))
    with pytest.raises(ValueError):
        read_trace_csv(io.StringIO("c,w,f\n0,0,1\n"))


def test_verdicts_json_sorted_and_stable():
    fs, hs = [1, 0], [Ordinal.of(1), ZERO]
    a = verdicts_json({2: window_verdicts(fs, hs, Ordinal.of(2), 2), 0: window_verdicts(fs, hs, None, 0)})
    b = verdicts_json({0: window_verdicts(fs, hs, None, 0), 2: window_verdicts(fs, hs, Ordinal.of(2), 2)})
    assert a == b and a.index('"c": 0') < a.index('"c": 2')


def test_unknown_provenance():
    with pytest.raises(ValueError):
        WitnessPair(lambda c, w: 0, lambda c, w: ZERO, None, provenance="magic")

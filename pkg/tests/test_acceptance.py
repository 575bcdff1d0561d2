"""Acceptance criteria 1-7, one test each.

Every test prints a single PASS/FAIL line with the measured values and the
runtime limit, then asserts.
"""
import random
import time

import pytest

from delta2.cli import main
from delta2.ershov import change_points, limit_lemma_witness, lowering_verdict, weakly_descending_verdict
from delta2.herbrand import boolean_decomposition, change_bound_check, herbrand_pair, sigma2_witness_finite
from delta2.limr import LexChain, brute_lex_min, load_phi, nested_limit
from delta2.omega_deriv import (audit_local_correctness, canonical_derivation, check_forall_block_changes,
                                derivation_pair, settle, sigma_bound_violation, trace)
from delta2.ordinal import Cmp, Ordinal, add, compare, scale_finite
from delta2.spec_lang import Truth, brute_truth

from corpus import HERBRAND, LIMR, corpus_text, limr_text, load
from strategies import random_ordinal
from test_cli import merge_traces, run


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail, elapsed, limit):
        ok = ok and elapsed < limit
        with capsys.disabled():
            print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}; {elapsed:.1f}s (limit {limit}s)")
        return ok
    return emit


def test_criterion_1_ordinal_kernel(report):
    t0 = time.perf_counter()
    rng = random.Random(20261017)
    N = 10_000
    failures, chained = [], 0
    for _ in range(N):
        a, b, c = (random_ordinal(rng, 4) for _ in range(3))
        ab, ba = compare(a, b), compare(b, a)
        if ab.value != -ba.value or (ab is Cmp.EQ) != (a == b):
            failures.append(("trichotomy", a, b))
        # bias half the triples into a chain so transitivity is exercised
        if rng.random() < 0.5:
            a, b, c = sorted((a, b, c))
        if compare(a, b) is not Cmp.GT and compare(b, c) is not Cmp.GT:
            chained += 1
            if compare(a, c) is Cmp.GT:
                failures.append(("transitivity", a, b, c))
        if add(add(a, b), c) != add(a, add(b, c)):
            failures.append(("associativity", a, b, c))
    pairs = 0
    while pairs < N:
        a, b = random_ordinal(rng, 4), random_ordinal(rng, 4)
        if compare(a, b) is Cmp.EQ:
            continue
        if compare(a, b) is Cmp.GT:
            a, b = b, a
        pairs += 1
        for i in range(3):
            if compare(add(scale_finite(3, a), Ordinal.of(i)), scale_finite(3, b)) is not Cmp.LT:
                failures.append(("scale", a, b, i))
    ok = report(1, not failures,
                f"{N} triples ({chained} chained), {pairs} monotonicity pairs, {len(failures)} failures",
                time.perf_counter() - t0, 10)
    assert ok, failures[:3]


def test_criterion_2_herbrand_construction(report):
    t0 = time.perf_counter()
    W, cs_range = 200, range(51)
    problems, worst, decided, rs = [], {}, 0, set()
    for name in HERBRAND:
        inst = load(name)
        r = inst.certificate.r
        rs.add(r)
        pair = herbrand_pair(inst.certificate, inst.spec)
        if pair.K != Ordinal.of(1 + 2 * r + 2):
            problems.append(f"{name}: K = {pair.K}")
        for c in cs_range:
            fs, hs = pair.sample(c, W)
            if not weakly_descending_verdict(hs, pair.K, c).ok or not lowering_verdict(fs, hs, c).ok:
                problems.append(f"{name} c={c}: window check")
            truth = brute_truth(inst.spec, c, W)
            if truth is not Truth.UNKNOWN:
                decided += 1
                if (truth is Truth.TRUE) != (fs[W] == 0):
                    problems.append(f"{name} c={c}: limit {fs[W]} vs {truth}")
        bound = change_bound_check(pair.f, r, cs_range, W)
        if not bound.ok:
            problems.append(f"{name}: {bound.worst_changes} changes")
        worst[r] = max(worst.get(r, 0), bound.worst_changes)
    if len(HERBRAND) < 6 or rs != {0, 1, 2}:
        problems.append("corpus too small")
    if worst.get(1) != 3:
        problems.append(f"r=1 worst change count {worst.get(1)} (expected 3)")
    ok = report(2, not problems,
                f"{len(HERBRAND)} instances, c 0..50, W={W}, worst changes by r {dict(sorted(worst.items()))}, "
                f"{decided} decided limits, {len(problems)} problems",
                time.perf_counter() - t0, 30)
    assert ok, problems[:5]


def test_criterion_3_boolean_decomposition(report):
    t0 = time.perf_counter()
    W, problems, checked = 200, [], 0
    for name in HERBRAND:
        inst = load(name)
        r = inst.certificate.r
        pair = herbrand_pair(inst.certificate, inst.spec)
        rep = boolean_decomposition(pair, r)
        for c in range(51):
            checked += 1
            if rep.combination(c, W) != (pair.f(c, W) == 0):
                problems.append(f"{name} c={c}")
            if rep.N(2 * r + 2, c, W):
                problems.append(f"{name} c={c}: N_(2r+2) true")
    ok = report(3, not problems, f"{checked} (spec, c) cases at window {W}, {len(problems)} mismatches",
                time.perf_counter() - t0, 60)
    assert ok, problems[:5]


def test_criterion_4_derivation_pipeline(report):
    t0 = time.perf_counter()
    W, problems, derivations, sigma2_runs = 200, [], 0, 0
    for name in HERBRAND:
        inst = load(name)
        for c in range(11):
            d = canonical_derivation(inst.spec, c)
            derivations += 1
            audit = audit_local_correctness(d, 6, 8)
            tr = trace(d, W)
            pair = derivation_pair(d)
            checks = {
                "audit": audit.ok,
                "sigma bound": sigma_bound_violation(tr) is None,
                "block changes": check_forall_block_changes(d, W).ok,
                "descending": weakly_descending_verdict(list(tr.h), pair.K, c).ok,
                "lowering": lowering_verdict(list(tr.f), list(tr.h), c).ok,
            }
            truth = brute_truth(inst.spec, c, 100)
            if truth is not Truth.UNKNOWN:
                checks["limit"] = settle(d, 400).value == (0 if truth is Truth.TRUE else 1)
            if truth is Truth.TRUE:
                z = settle(canonical_derivation(inst.spec, c, form="sigma2"), 40).value
                sigma2_runs += 1
                checks["sigma2 z"] = all(inst.spec.B(z, u, c) for u in range(201))
            problems.extend(f"{name} c={c}: {k}" for k, v in checks.items() if not v)
    ok = report(4, not problems,
                f"{derivations} derivations over {len(HERBRAND)} specs, c 0..10, window {W}, "
                f"{sigma2_runs} sigma2 runs, {len(problems)} problems",
                time.perf_counter() - t0, 60)
    assert ok, problems[:5]


def test_criterion_5_nested_limits(report):
    t0 = time.perf_counter()
    problems, per_k = [], {}
    for name in LIMR:
        inst = load_phi(limr_text(name))
        per_k[inst.k] = per_k.get(inst.k, 0) + 1
        chain = LexChain(inst.phi, inst.k)
        res = nested_limit(inst.phi, inst.k, inst.window, chain=chain)
        brute = brute_lex_min(inst.phi, inst.k, 24)
        if res.tuple != brute:
            problems.append(f"{name}: {res.tuple} vs {brute}")
        if res.status != "ok" or res.descending_from > res.stabilization_w:
            problems.append(f"{name}: h' not settled ({res.status})")
        if any(chain.state(n).h > chain.state(n).max_g for n in range(inst.window + 1)):
            problems.append(f"{name}: h above running max of g")
    if any(per_k.get(k, 0) < 5 for k in (1, 2, 3)):
        problems.append(f"instances per k: {per_k}")
    ok = report(5, not problems, f"instances per k {dict(sorted(per_k.items()))}, {len(problems)} problems",
                time.perf_counter() - t0, 30)
    assert ok, problems[:5]


def test_criterion_6_baseline(report):
    t0 = time.perf_counter()
    W, problems, decided = 100, [], 0
    for name in HERBRAND:
        inst = load(name)
        p = limit_lemma_witness(inst.spec)
        for c in range(51):
            truth = brute_truth(inst.spec, c, W)
            if truth is Truth.UNKNOWN:
                continue
            decided += 1
            tail = {p.f(c, w) for w in range(W, 2 * W + 1)}
            if len(tail) != 1:
                problems.append(f"{name} c={c}: not constant on [W, 2W]")
            elif tail != {0 if truth is Truth.TRUE else 1}:
                problems.append(f"{name} c={c}: limit {tail} vs {truth}")
    ok = report(6, not problems, f"{decided} decided (spec, c) at W={W}, {len(problems)} problems",
                time.perf_counter() - t0, 60)
    assert ok, problems[:5]


def test_criterion_7_offline_replay(report, tmp_path):
    t0 = time.perf_counter()
    problems = []
    for name in HERBRAND:
        spec = tmp_path / f"{name}.d2"
        spec.write_text(corpus_text(name))
        inst = load(name)
        for method in ("herbrand", "baseline"):
            outs = []
            for attempt in ("a", "b"):
                out_dir = tmp_path / f"{name}_{method}_{attempt}"
                code, _, err = run("approximate", "--spec", str(spec), "--method", method, "--c-range", "0..10",
                                   "--window", "100", "--seed", "1", "--out", str(out_dir))
                if code:
                    problems.append(f"{name} {method}: exit {code} {err}")
                outs.append(out_dir)
            a, b = outs
            if any(f.read_bytes() != (b / f.name).read_bytes() for f in a.iterdir()):
                problems.append(f"{name} {method}: rerun differs")
            merged = tmp_path / f"{name}_{method}.csv"
            merge_traces(sorted(a.glob("trace_c*.csv")), merged)
            flags = ["--K", str(inst.certificate.K)] if method == "herbrand" else ["--K", "none", "--no-lowering"]
            code, out, _ = run("verify", "--pair", str(merged), *flags)
            if code or out != (a / "verdicts.json").read_text():
                problems.append(f"{name} {method}: replay differs")
    ok = report(7, not problems, f"{2 * len(HERBRAND)} exported runs replayed, {len(problems)} mismatches",
                time.perf_counter() - t0, 60)
    assert ok, problems[:5]

import random

import pytest
from hypothesis import given, strategies as st

from delta2.coding import p0, p1, pair
from delta2.spec_lang import (Bounded, DSLSyntaxError, Truth, UnboundVariableError, as_function, brute_truth,
                              eval_formula, eval_term, free_vars, parse_formula, parse_program, parse_spec,
                              parse_term, render_formula, substitute, Const)


def test_parse_spec_example():
    spec = parse_spec("A(x,y,c) := y = x + c; B(z,u,c) := z = c;")
    assert spec.A(2, 7, 5) and not spec.A(2, 6, 5)
    assert spec.B(4, 99, 4) and not spec.B(3, 0, 4)


def test_bounded_quantifier():
    prog = parse_program("B(z,u,c) := exists v <= u . v*2 = c;")
    body = prog.decls["B"].body
    assert isinstance(body, Bounded) and body.kind == "exists" and not body.strict
    fn = as_function(prog.decls["B"])
    assert fn(0, 3, 6) and not fn(0, 2, 6) and not fn(0, 9, 7)


def test_unbounded_quantifier_rejected():
    with pytest.raises(DSLSyntaxError, match="unbounded"):
        parse_program("B(z,u,c) := exists v . v = c;")


def test_scope_errors():
    with pytest.raises(UnboundVariableError):
        parse_program("A(x,y,c) := y = q;")
    with pytest.raises(DSLSyntaxError):
        parse_formula("x = ", ["x"])


def test_eval_examples():
    assert eval_term(parse_term("p0(<2,3>)"), {}) == 2
    assert eval_term(parse_term("p1(<2,3>)"), {}) == 3
    assert eval_formula(parse_formula("y = x + c"), {"x": 2, "y": 7, "c": 5})
    assert eval_formula(parse_formula("forall v <= 3 . v - 5 = 0"), {})
    assert eval_term(parse_term("3 - 5"), {}) == 0
    assert eval_formula(parse_formula("forall v < 0 . false"), {})
    assert not eval_formula(parse_formula("exists v < 0 . true"), {})


def test_tuple_terms():
    assert eval_term(parse_term("proj_3_2(tup_3(4, 5, 6))"), {}) == 5


def test_free_vars_and_substitute():
    phi = parse_formula("exists v <= u . v = c + z")
    assert free_vars(phi) == {"u", "c", "z"}
    psi = substitute(phi, {"c": Const(2), "v": Const(9)})
    assert free_vars(psi) == {"u", "z"}
    assert eval_formula(psi, {"u": 5, "z": 3})


@given(st.integers(0, 30), st.integers(0, 30), st.integers(0, 30))
def test_render_round_trip(x, y, z):
    phi = parse_formula("(x < y || !(y = z)) && forall v <= z . v*x + 1 <= y - v -> x = x")
    again = parse_formula(render_formula(phi))
    env = {"x": x, "y": y, "z": z}
    assert eval_formula(phi, env) == eval_formula(again, env)


def test_combine_tautology_and_contradiction():
    taut = parse_spec("A(x,y,c) := y = x; B(z,u,c) := u = u;")
    assert all(taut.p(x, y, c) for x in range(20) for y in range(20) for c in range(3))
    contra = parse_spec("A(x,y,c) := true; B(z,u,c) := false;")
    assert not any(contra.p(x, y, c) for x in range(20) for y in range(20) for c in range(3))


def test_combine_matches_implication():
    spec = parse_spec("A(x,y,c) := y = x + c; B(z,u,c) := z = c;")
    rng = random.Random(7)
    for _ in range(100):
        x, y, c = rng.randrange(400), rng.randrange(400), rng.randrange(6)
        direct = (not spec.A(p0(x), p0(y), c)) or spec.B(p1(x), p1(y), c)
        assert spec.p(x, y, c) == direct
    assert spec.p(pair(1, 5), pair(6, 0), 5)


def test_brute_truth_examples():
    spec = parse_spec("A(x,y,c) := y = x + c; B(z,u,c) := z = c;")
    assert brute_truth(spec, 4, 10) is Truth.TRUE
    both_false = parse_spec("A(x,y,c) := false; B(z,u,c) := false;")
    assert brute_truth(both_false, 3, 10) is Truth.FALSE
    late = parse_spec("A(x,y,c) := true; B(z,u,c) := 12 <= z;")
    assert brute_truth(late, 0, 10) is Truth.UNKNOWN
    assert brute_truth(late, 0, 20) is Truth.TRUE


def test_program_blocks():
    prog = parse_program("A(x,y,c) := true; herbrand { r = 1; t0 = 0; s0 = c + 1; }")
    block = prog.blocks["herbrand"]
    assert block["r"] == 1
    assert eval_term(block["s0"], {"c": 4}) == 5

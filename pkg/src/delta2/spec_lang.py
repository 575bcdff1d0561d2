"""A small language of arithmetic terms and bounded formulas.

Files are sequences of declarations and blocks::

    # comments run to end of line
    A(x,y,c) := y = x + c;
    B(z,u,c) := z = c;
    herbrand { r = 0; t0 = 0; s0 = c; }

Terms use ``+ * -`` (``-`` is truncated subtraction), Cantor pairing
``<a,b>`` with projections ``p0``/``p1``, and right-nested tuple coding
``tup_k(...)`` / ``proj_k_i(...)``.  Formulas use ``= <= <``, ``! && || ->``
and bounded quantifiers ``exists v <= t . phi`` / ``forall v < t . phi``.
"""
from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from . import coding


class DSLSyntaxError(ValueError):
    def __init__(self, message: str, position: int, expected: Sequence[str] = ()):
        detail = f"{message} at position {position}"
        if expected:
            detail += f" (expected {', '.join(expected)})"
        super().__init__(detail)
        self.position = position
        self.expected = tuple(expected)


class UnboundVariableError(DSLSyntaxError):
    pass


class EvaluationError(KeyError):
    """A variable was missing from the evaluation environment."""


# -- AST ---------------------------------------------------------------------

class Term:
    __slots__ = ()


@dataclass(frozen=True)
class Var(Term):
    name: str


@dataclass(frozen=True)
class Const(Term):
    value: int


@dataclass(frozen=True)
class BinOp(Term):
    op: str  # one of + * -
    left: Term
    right: Term


@dataclass(frozen=True)
class Pair(Term):
    left: Term
    right: Term


@dataclass(frozen=True)
class Proj(Term):
    index: int  # 0 or 1
    arg: Term


@dataclass(frozen=True)
class Tup(Term):
    args: Tuple[Term, ...]


@dataclass(frozen=True)
class TupProj(Term):
    arity: int
    index: int  # 1-based
    arg: Term


class Formula:
    __slots__ = ()


@dataclass(frozen=True)
class Bool(Formula):
    value: bool


@dataclass(frozen=True)
class Compare(Formula):
    op: str  # one of = <= <
    left: Term
    right: Term


@dataclass(frozen=True)
class Not(Formula):
    arg: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Bounded(Formula):
    kind: str  # "exists" or "forall"
    var: str
    strict: bool  # v < t rather than v <= t
    bound: Term
    body: Formula


@dataclass(frozen=True)
class Declaration:
    name: str
    params: Tuple[str, ...]
    body: Formula

    def __str__(self) -> str:
        return f"{self.name}({','.join(self.params)}) := {render_formula(self.body)};"


@dataclass
class Program:
    decls: Dict[str, Declaration] = field(default_factory=dict)
    blocks: Dict[str, Dict[str, "Term | int"]] = field(default_factory=dict)


# -- free variables and substitution ------------------------------------------

def free_vars(node) -> frozenset:
    if isinstance(node, Var):
        return frozenset((node.name,))
    if isinstance(node, (Const, Bool)):
        return frozenset()
    if isinstance(node, (BinOp, Pair, Compare, And, Or, Implies)):
        return free_vars(node.left) | free_vars(node.right)
    if isinstance(node, (Proj, TupProj, Not)):
        return free_vars(node.arg)
    if isinstance(node, Tup):
        return frozenset().union(*(free_vars(a) for a in node.args))
    if isinstance(node, Bounded):
        return free_vars(node.bound) | (free_vars(node.body) - {node.var})
    raise TypeError(f"not an AST node: {node!r}")


def _fresh(base: str, avoid: set) -> str:
    for i in itertools.count(1):
        name = f"{base}_{i}"
        if name not in avoid:
            return name


def substitute(node, mapping: Mapping[str, Term]):
    """Simultaneous capture-avoiding substitution of terms for variables."""
    if isinstance(node, Var):
        return mapping.get(node.name, node)
    if isinstance(node, (Const, Bool)):
        return node
    if isinstance(node, BinOp):
        return BinOp(node.op, substitute(node.left, mapping), substitute(node.right, mapping))
    if isinstance(node, Pair):
        return Pair(substitute(node.left, mapping), substitute(node.right, mapping))
    if isinstance(node, Proj):
        return Proj(node.index, substitute(node.arg, mapping))
    if isinstance(node, Tup):
        return Tup(tuple(substitute(a, mapping) for a in node.args))
    if isinstance(node, TupProj):
        return TupProj(node.arity, node.index, substitute(node.arg, mapping))
    if isinstance(node, Compare):
        return Compare(node.op, substitute(node.left, mapping), substitute(node.right, mapping))
    if isinstance(node, Not):
        return Not(substitute(node.arg, mapping))
    if isinstance(node, (And, Or, Implies)):
        return type(node)(substitute(node.left, mapping), substitute(node.right, mapping))
    if isinstance(node, Bounded):
        inner = {k: v for k, v in mapping.items() if k != node.var}
        incoming = set().union(*(free_vars(t) for t in inner.values())) if inner else set()
        var, body = node.var, node.body
        if var in incoming:
            avoid = incoming | free_vars(body) | set(inner)
            new = _fresh(var, avoid)
            body = substitute(body, {var: Var(new)})
            var = new
        return Bounded(node.kind, var, node.strict, substitute(node.bound, mapping),
                       substitute(body, inner))
    raise TypeError(f"not an AST node: {node!r}")


# -- rendering ----------------------------------------------------------------

_TERM_PREC = {"+": 1, "-": 1, "*": 2}


def render_term(t: Term, prec: int = 0) -> str:
    if isinstance(t, Var):
        return t.name
    if isinstance(t, Const):
        return str(t.value)
    if isinstance(t, BinOp):
        p = _TERM_PREC[t.op]
        s = f"{render_term(t.left, p)} {t.op} {render_term(t.right, p + 1)}"
        return f"({s})" if p < prec else s
    if isinstance(t, Pair):
        return f"<{render_term(t.left)}, {render_term(t.right)}>"
    if isinstance(t, Proj):
        return f"p{t.index}({render_term(t.arg)})"
    if isinstance(t, Tup):
        return f"tup_{len(t.args)}({', '.join(render_term(a) for a in t.args)})"
    if isinstance(t, TupProj):
        return f"proj_{t.arity}_{t.index}({render_term(t.arg)})"
    raise TypeError(f"not a term: {t!r}")


# precedence: -> 1, || 2, && 3, ! 4, atoms 5
def render_formula(phi: Formula, prec: int = 0) -> str:
    if isinstance(phi, Bool):
        return "true" if phi.value else "false"
    if isinstance(phi, Compare):
        return f"{render_term(phi.left)} {phi.op} {render_term(phi.right)}"
    if isinstance(phi, Not):
        return f"!{render_formula(phi.arg, 4)}"
    if isinstance(phi, Implies):
        s = f"{render_formula(phi.left, 2)} -> {render_formula(phi.right, 1)}"
        return f"({s})" if prec > 1 else s
    if isinstance(phi, Or):
        s = f"{render_formula(phi.left, 2)} || {render_formula(phi.right, 3)}"
        return f"({s})" if prec > 2 else s
    if isinstance(phi, And):
        s = f"{render_formula(phi.left, 3)} && {render_formula(phi.right, 4)}"
        return f"({s})" if prec > 3 else s
    if isinstance(phi, Bounded):
        rel = "<" if phi.strict else "<="
        s = f"{phi.kind} {phi.var} {rel} {render_term(phi.bound)} . {render_formula(phi.body)}"
        return f"({s})" if prec > 0 else s
    raise TypeError(f"not a formula: {phi!r}")


# -- tokenizer ----------------------------------------------------------------

_TOKENS = re.compile(r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<num>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<sym>:=|->|&&|\|\||<=|[<>=!(),.;+*\-{}])
""", re.VERBOSE)

_KEYWORDS = {"exists", "forall", "true", "false"}
_TUP = re.compile(r"tup_(\d+)$")
_PROJ = re.compile(r"proj_(\d+)_(\d+)$")


@dataclass(frozen=True)
class _Tok:
    kind: str
    text: str
    pos: int


def _tokenize(text: str) -> List[_Tok]:
    out, pos = [], 0
    while pos < len(text):
        m = _TOKENS.match(text, pos)
        if not m:
            raise DSLSyntaxError(f"unexpected character {text[pos]!r}", pos)
        if m.lastgroup != "ws":
            out.append(_Tok(m.lastgroup, m.group(), pos))
        pos = m.end()
    out.append(_Tok("eof", "", len(text)))
    return out


class _Backtrack(Exception):
    pass


class _Parser:
    def __init__(self, text: str, check_scope: bool = True):
        self.toks = _tokenize(text)
        self.i = 0
        self.check_scope = check_scope
        self.scope: List[str] = []
        self.tentative = 0

    # token helpers
    def peek(self, ahead: int = 0) -> _Tok:
        return self.toks[min(self.i + ahead, len(self.toks) - 1)]

    def at(self, *texts: str) -> bool:
        t = self.peek()
        return t.kind in ("sym", "ident") and t.text in texts

    def fail(self, message: str, expected: Sequence[str] = ()):
        if self.tentative:
            raise _Backtrack()
        raise DSLSyntaxError(message, self.peek().pos, expected)

    def expect(self, text: str) -> _Tok:
        if not self.at(text):
            got = self.peek().text or "end of input"
            self.fail(f"unexpected {got!r}", [repr(text)])
        tok = self.peek()
        self.i += 1
        return tok

    def ident(self) -> _Tok:
        tok = self.peek()
        if tok.kind != "ident" or tok.text in _KEYWORDS:
            self.fail(f"unexpected {tok.text or 'end of input'!r}", ["identifier"])
        self.i += 1
        return tok

    def number(self) -> int:
        tok = self.peek()
        if tok.kind != "num":
            self.fail(f"unexpected {tok.text or 'end of input'!r}", ["natural number"])
        self.i += 1
        return int(tok.text)

    # program level
    def program(self) -> Program:
        prog = Program()
        while self.peek().kind != "eof":
            if self.peek().kind == "ident" and self.peek(1).text == "{":
                name = self.ident().text
                if name in prog.blocks:
                    self.fail(f"duplicate block {name!r}")
                prog.blocks[name] = self.block()
            else:
                d = self.declaration()
                if d.name in prog.decls:
                    raise DSLSyntaxError(f"duplicate declaration {d.name!r}", self.peek().pos)
                prog.decls[d.name] = d
        return prog

    def declaration(self) -> Declaration:
        name = self.ident().text
        self.expect("(")
        params = [self.ident().text]
        while self.at(","):
            self.i += 1
            params.append(self.ident().text)
        self.expect(")")
        if len(set(params)) != len(params):
            self.fail(f"repeated parameter in {name}")
        self.expect(":=")
        self.scope = list(params)
        body = self.formula()
        self.scope = []
        self.expect(";")
        return Declaration(name, tuple(params), body)

    def block(self) -> Dict[str, "Term | int"]:
        self.expect("{")
        entries: Dict[str, Term | int] = {}
        saved, self.check_scope = self.check_scope, False
        while not self.at("}"):
            key = self.ident()
            if key.text in entries:
                raise DSLSyntaxError(f"duplicate entry {key.text!r}", key.pos)
            self.expect("=")
            entries[key.text] = self.number() if key.text == "r" else self.term()
            self.expect(";")
        self.check_scope = saved
        self.expect("}")
        return entries

    # formulas
    def formula(self) -> Formula:
        left = self.disjunction()
        if self.at("->"):
            self.i += 1
            return Implies(left, self.formula())
        return left

    def disjunction(self) -> Formula:
        left = self.conjunction()
        while self.at("||"):
            self.i += 1
            left = Or(left, self.conjunction())
        return left

    def conjunction(self) -> Formula:
        left = self.unary()
        while self.at("&&"):
            self.i += 1
            left = And(left, self.unary())
        return left

    def unary(self) -> Formula:
        if self.at("!"):
            self.i += 1
            return Not(self.unary())
        if self.at("exists", "forall"):
            return self.quantifier()
        return self.atom()

    def quantifier(self) -> Formula:
        kind_tok = self.peek()
        self.i += 1
        var = self.ident().text
        if self.at("<="):
            strict = False
        elif self.at("<"):
            strict = True
        else:
            if self.tentative:
                raise _Backtrack()
            raise DSLSyntaxError(f"unbounded quantifier over {var!r}", kind_tok.pos, ["'<='", "'<'"])
        self.i += 1
        bound = self.term()
        self.expect(".")
        self.scope.append(var)
        try:
            body = self.formula()
        finally:
            self.scope.pop()
        return Bounded(kind_tok.text, var, strict, bound, body)

    def atom(self) -> Formula:
        if self.at("true", "false"):
            value = self.peek().text == "true"
            self.i += 1
            return Bool(value)
        if self.at("("):
            start = self.i
            self.tentative += 1
            try:
                return self.comparison()
            except _Backtrack:
                self.i = start
            finally:
                self.tentative -= 1
            self.expect("(")
            inner = self.formula()
            self.expect(")")
            return inner
        return self.comparison()

    def comparison(self) -> Formula:
        left = self.term()
        if not self.at("=", "<=", "<"):
            self.fail(f"unexpected {self.peek().text or 'end of input'!r}", ["'='", "'<='", "'<'"])
        op = self.peek().text
        self.i += 1
        return Compare(op, left, self.term())

    # terms
    def term(self) -> Term:
        left = self.product()
        while self.at("+", "-"):
            op = self.peek().text
            self.i += 1
            left = BinOp(op, left, self.product())
        return left

    def product(self) -> Term:
        left = self.primary()
        while self.at("*"):
            self.i += 1
            left = BinOp("*", left, self.primary())
        return left

    def primary(self) -> Term:
        tok = self.peek()
        if tok.kind == "num":
            self.i += 1
            return Const(int(tok.text))
        if self.at("("):
            self.i += 1
            inner = self.term()
            self.expect(")")
            return inner
        if self.at("<"):
            self.i += 1
            left = self.term()
            self.expect(",")
            right = self.term()
            self.expect(">")
            return Pair(left, right)
        if tok.kind == "ident" and tok.text not in _KEYWORDS:
            name = tok.text
            if name in ("p0", "p1") and self.peek(1).text == "(":
                self.i += 2
                arg = self.term()
                self.expect(")")
                return Proj(int(name[1]), arg)
            m = _TUP.match(name)
            if m and self.peek(1).text == "(":
                k = int(m.group(1))
                self.i += 2
                args = [self.term()]
                while self.at(","):
                    self.i += 1
                    args.append(self.term())
                self.expect(")")
                if k < 1 or len(args) != k:
                    raise DSLSyntaxError(f"{name} takes {k} arguments, got {len(args)}", tok.pos)
                return Tup(tuple(args))
            m = _PROJ.match(name)
            if m and self.peek(1).text == "(":
                k, idx = int(m.group(1)), int(m.group(2))
                if not 1 <= idx <= k:
                    raise DSLSyntaxError(f"projection index out of range in {name}", tok.pos)
                self.i += 2
                arg = self.term()
                self.expect(")")
                return TupProj(k, idx, arg)
            self.i += 1
            if self.check_scope and name not in self.scope:
                if self.tentative:
                    raise _Backtrack()
                raise UnboundVariableError(f"unbound variable {name!r}", tok.pos)
            return Var(name)
        self.fail(f"unexpected {tok.text or 'end of input'!r}", ["term"])


def parse_program(text: str) -> Program:
    return _Parser(text).program()


def _parse_whole(text: str, variables: Optional[Iterable[str]], method: str):
    p = _Parser(text, check_scope=variables is not None)
    p.scope = list(variables or ())
    node = getattr(p, method)()
    if p.peek().kind != "eof":
        raise DSLSyntaxError(f"trailing input {p.peek().text!r}", p.peek().pos)
    return node


def parse_formula(text: str, variables: Optional[Iterable[str]] = None) -> Formula:
    """Parse a formula; when ``variables`` is given, free variables are checked."""
    return _parse_whole(text, variables, "formula")


def parse_term(text: str, variables: Optional[Iterable[str]] = None) -> Term:
    return _parse_whole(text, variables, "term")


# -- evaluation ---------------------------------------------------------------

_MISSING = object()


def _compile_term(t: Term) -> Callable[[dict], int]:
    if isinstance(t, Const):
        v = t.value
        return lambda env: v
    if isinstance(t, Var):
        name = t.name

        def var(env):
            try:
                return env[name]
            except KeyError:
                raise EvaluationError(f"no binding for variable {name!r}") from None
        return var
    if isinstance(t, BinOp):
        a, b = _compile_term(t.left), _compile_term(t.right)
        if t.op == "+":
            return lambda env: a(env) + b(env)
        if t.op == "*":
            return lambda env: a(env) * b(env)
        return lambda env: max(a(env) - b(env), 0)
    if isinstance(t, Pair):
        a, b = _compile_term(t.left), _compile_term(t.right)
        return lambda env: coding.pair(a(env), b(env))
    if isinstance(t, Proj):
        a, i = _compile_term(t.arg), t.index
        return lambda env: coding.unpair(a(env))[i]
    if isinstance(t, Tup):
        parts = [_compile_term(x) for x in t.args]
        k = len(parts)
        return lambda env: coding.encode_tuple(k, [p(env) for p in parts])
    if isinstance(t, TupProj):
        a, k, i = _compile_term(t.arg), t.arity, t.index
        return lambda env: coding.project(k, i, a(env))
    raise TypeError(f"not a term: {t!r}")


def _compile_formula(phi: Formula) -> Callable[[dict], bool]:
    if isinstance(phi, Bool):
        v = phi.value
        return lambda env: v
    if isinstance(phi, Compare):
        a, b = _compile_term(phi.left), _compile_term(phi.right)
        if phi.op == "=":
            return lambda env: a(env) == b(env)
        if phi.op == "<=":
            return lambda env: a(env) <= b(env)
        return lambda env: a(env) < b(env)
    if isinstance(phi, Not):
        a = _compile_formula(phi.arg)
        return lambda env: not a(env)
    if isinstance(phi, And):
        a, b = _compile_formula(phi.left), _compile_formula(phi.right)
        return lambda env: a(env) and b(env)
    if isinstance(phi, Or):
        a, b = _compile_formula(phi.left), _compile_formula(phi.right)
        return lambda env: a(env) or b(env)
    if isinstance(phi, Implies):
        a, b = _compile_formula(phi.left), _compile_formula(phi.right)
        return lambda env: (not a(env)) or b(env)
    if isinstance(phi, Bounded):
        bound, body, var = _compile_term(phi.bound), _compile_formula(phi.body), phi.var
        strict, want = phi.strict, phi.kind == "exists"

        def quantified(env):
            n = bound(env) - (1 if strict else 0)
            saved = env.get(var, _MISSING)
            try:
                for v in range(n + 1):
                    env[var] = v
                    if body(env) == want:
                        return want
                return not want
            finally:
                if saved is _MISSING:
                    env.pop(var, None)
                else:
                    env[var] = saved
        return quantified
    raise TypeError(f"not a formula: {phi!r}")


_compiled: Dict[object, Callable] = {}


def compiled(node) -> Callable[[dict], "int | bool"]:
    fn = _compiled.get(node)
    if fn is None:
        fn = _compile_term(node) if isinstance(node, Term) else _compile_formula(node)
        _compiled[node] = fn
    return fn


def eval_term(t: Term, env: Mapping[str, int]) -> int:
    return compiled(t)(dict(env))


def eval_formula(phi: Formula, env: Mapping[str, int]) -> bool:
    return bool(compiled(phi)(dict(env)))


def as_function(decl: Declaration) -> Callable[..., bool]:
    """Positional evaluator ``decl(v1, ..., vn) -> bool``."""
    body, params = compiled(decl.body), decl.params

    def fn(*args):
        return bool(body(dict(zip(params, args))))
    fn.__name__ = decl.name
    return fn


def term_function(t: Term, params: Sequence[str]) -> Callable[..., int]:
    body, params = compiled(t), tuple(params)
    return lambda *args: body(dict(zip(params, args)))


# -- Delta^0_2 specifications ---------------------------------------------------

@dataclass(frozen=True)
class Delta2Spec:
    """Matrices A(x,y,c) and B(z,u,c), read as  forall x exists y A <-> exists z forall u B."""

    matrix_A: Declaration
    matrix_B: Declaration

    def __post_init__(self):
        for d in (self.matrix_A, self.matrix_B):
            if len(d.params) != 3:
                raise ValueError(f"{d.name} must take exactly 3 parameters, got {len(d.params)}")
        object.__setattr__(self, "A", as_function(self.matrix_A))
        object.__setattr__(self, "B", as_function(self.matrix_B))
        object.__setattr__(self, "p_formula", combine_to_p(self))
        object.__setattr__(self, "p", as_function(Declaration("p", ("x", "y", "c"), self.p_formula)))
        object.__setattr__(self, "_truth_cache", {})

    def render(self) -> str:
        return f"{self.matrix_A}\n{self.matrix_B}\n"


def spec_from_program(prog: Program) -> Delta2Spec:
    missing = [n for n in ("A", "B") if n not in prog.decls]
    if missing:
        raise DSLSyntaxError(f"missing declaration(s) {', '.join(missing)}", 0)
    return Delta2Spec(prog.decls["A"], prog.decls["B"])


def parse_spec(text: str) -> Delta2Spec:
    return spec_from_program(parse_program(text))


def combine_to_p(spec: Delta2Spec) -> Formula:
    """The matrix of p(x,y,c)=0, i.e. A(p0(x),p0(y),c) -> B(p1(x),p1(y),c)."""
    ax, ay, ac = spec.matrix_A.params
    bz, bu, bc = spec.matrix_B.params
    x, y, c = Var("x"), Var("y"), Var("c")
    lhs = substitute(spec.matrix_A.body, {ax: Proj(0, x), ay: Proj(0, y), ac: c})
    rhs = substitute(spec.matrix_B.body, {bz: Proj(1, x), bu: Proj(1, y), bc: c})
    return Implies(lhs, rhs)


class Truth(Enum):
    TRUE = "true"
    FALSE = "false"
    UNKNOWN = "unknown"

    def __str__(self) -> str:
        return self.value


def sigma2_holds(matrix: Callable[[int, int, int], bool], c: int, candidates: int, horizon: int) -> Optional[int]:
    """Least z <= candidates with matrix(z, u, c) for every u <= horizon, else None."""
    for z in range(candidates + 1):
        if all(matrix(z, u, c) for u in range(horizon + 1)):
            return z
    return None


def brute_truth(spec: Delta2Spec, c: int, W: int) -> Truth:
    """Window verdict for  exists z forall u B(z,u,c).

    Candidates z (resp. x) range over 0..W and are checked against every
    u (resp. y) up to 2W, so a witness found near the edge of the candidate
    range still faces a full window of refutation attempts.
    """
    if W < 1:
        raise ValueError("window must be >= 1")
    key = (c, W)
    cache = spec._truth_cache
    if key not in cache:
        pos = sigma2_holds(spec.B, c, W, 2 * W) is not None
        neg = sigma2_holds(lambda x, y, c_: not spec.A(x, y, c_), c, W, 2 * W) is not None
        if pos and not neg:
            cache[key] = Truth.TRUE
        elif neg and not pos:
            cache[key] = Truth.FALSE
        else:
            cache[key] = Truth.UNKNOWN
    return cache[key]

"""Finite-level witnesses built from a Herbrand certificate.

A certificate is a list of locator terms t_i, s_i (i <= r) such that

    OR_i  A(t_i, a_i, c) -> B(s_i, b_i, c)

holds for all a_i, b_i, where t_i and s_i may mention a_j, b_j for j < i
and the parameter c.  From it we build an elementary f whose value
changes at most 1+2r times, the counter h below K = 1+2r+2, and the
Y_k / N_k decomposition into a Boolean combination of Sigma_1 predicates.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .ershov import WitnessPair, change_points
from .ordinal import Ordinal
from .spec_lang import (And, Bounded, Compare, Declaration, Delta2Spec, DSLSyntaxError, Formula, Not,
                        Or, Program, Term, Var, compiled, free_vars, parse_program, render_term,
                        spec_from_program, substitute)


class CertificateError(ValueError):
    """A certificate that is structurally malformed."""


@dataclass(frozen=True)
class HerbrandCertificate:
    r: int
    t: Tuple[Term, ...]
    s: Tuple[Term, ...]

    def __post_init__(self):
        if self.r < 0:
            raise CertificateError("r must be non-negative")
        if len(self.t) != self.r + 1 or len(self.s) != self.r + 1:
            raise CertificateError(f"expected {self.r + 1} terms t_i and s_i, got {len(self.t)} and {len(self.s)}")
        for i in range(self.r + 1):
            allowed = {"c"} | {f"a{j}" for j in range(i)} | {f"b{j}" for j in range(i)}
            for name, term in ((f"t{i}", self.t[i]), (f"s{i}", self.s[i])):
                bad = sorted(free_vars(term) - allowed)
                if bad:
                    raise CertificateError(
                        f"{name} mentions {', '.join(bad)}; only c and a_j, b_j with j < {i} are allowed")
        object.__setattr__(self, "_t", tuple(compiled(x) for x in self.t))
        object.__setattr__(self, "_s", tuple(compiled(x) for x in self.s))
        used = []
        for i in range(self.r + 1):
            later = set()
            for j in range(i + 1, self.r + 1):
                later |= free_vars(self.t[j]) | free_vars(self.s[j])
            used.append(tuple(sorted(later & ({f"a{i}", f"b{i}"}))))
        object.__setattr__(self, "_used_later", tuple(used))

    @property
    def K(self) -> Ordinal:
        return Ordinal.of(2 * self.r + 3)

    def locators(self, i: int, env: Mapping[str, int]) -> Tuple[int, int]:
        env = dict(env)
        return self._t[i](env), self._s[i](env)

    def render(self) -> str:
        entries = [f"r = {self.r};"]
        for i in range(self.r + 1):
            entries.append(f"t{i} = {render_term(self.t[i])};")
            entries.append(f"s{i} = {render_term(self.s[i])};")
        return "herbrand { " + " ".join(entries) + " }\n"


def certificate_from_block(block: Mapping[str, "Term | int"]) -> HerbrandCertificate:
    if "r" not in block:
        raise CertificateError("herbrand block needs an entry r")
    r = block["r"]
    expected = {"r"} | {f"{p}{i}" for p in "ts" for i in range(r + 1)}
    missing, extra = sorted(expected - set(block)), sorted(set(block) - expected)
    if missing:
        raise CertificateError(f"herbrand block is missing {', '.join(missing)}")
    if extra:
        raise CertificateError(f"unexpected herbrand entries {', '.join(extra)}")
    return HerbrandCertificate(r, tuple(block[f"t{i}"] for i in range(r + 1)),
                               tuple(block[f"s{i}"] for i in range(r + 1)))


def sigma2_candidates_from_block(block: Mapping[str, "Term | int"]) -> Tuple[Term, ...]:
    """Candidate terms z0, z1, ... of a ``sigma2 { ... }`` block, in index order."""
    keys = sorted(block, key=lambda k: (len(k), k))
    expected = [f"z{i}" for i in range(len(block))]
    if keys != expected:
        raise CertificateError(f"sigma2 block entries must be z0..z{len(block) - 1}, got {', '.join(keys)}")
    terms = tuple(block[k] for k in expected)
    for k, term in zip(expected, terms):
        if isinstance(term, int) or free_vars(term) - {"c"}:
            raise CertificateError(f"{k} may only mention the parameter c")
    return terms


@dataclass
class CertifiedSpec:
    """Everything a ``.d2`` file can carry."""
    spec: Delta2Spec
    certificate: Optional[HerbrandCertificate] = None
    sigma2: Tuple[Term, ...] = ()
    program: Program = field(default_factory=Program)


def load_d2(text: str) -> CertifiedSpec:
    prog = parse_program(text)
    unknown = sorted(set(prog.blocks) - {"herbrand", "sigma2"})
    if unknown:
        raise DSLSyntaxError(f"unknown block(s) {', '.join(unknown)}", 0)
    cert = certificate_from_block(prog.blocks["herbrand"]) if "herbrand" in prog.blocks else None
    cands = sigma2_candidates_from_block(prog.blocks["sigma2"]) if "sigma2" in prog.blocks else ()
    return CertifiedSpec(spec_from_program(prog), cert, cands, prog)


# -- certificate checking ------------------------------------------------------

@dataclass(frozen=True)
class CertificateVerdict:
    ok: bool
    window: int
    c_range: Tuple[int, int]
    counterexample: Optional[Dict[str, int]] = None

    def to_json(self) -> dict:
        return {"check": "certificate", "ok": self.ok, "window": self.window,
                "c_range": list(self.c_range), "counterexample": self.counterexample}


def check_certificate(cert: HerbrandCertificate, spec: Delta2Spec, c_range: Iterable[int], W: int) -> CertificateVerdict:
    """Grid check of the Herbrand disjunction for all a_i, b_i <= W.

    Once a disjunct is true every extension of the assignment satisfies the
    disjunction, so only assignments falsifying the earlier disjuncts are
    extended.
    """
    cs = list(c_range)
    span = (min(cs), max(cs)) if cs else (0, -1)

    def search(i: int, env: Dict[str, int]) -> Optional[Dict[str, int]]:
        if i > cert.r:
            return dict(env)
        ti, si = cert.locators(i, env)
        c = env["c"]
        holds_a = [a for a in range(W + 1) if spec.A(ti, a, c)]
        fails_b = [b for b in range(W + 1) if not spec.B(si, b, c)]
        for a, b in product(holds_a, fails_b):
            env[f"a{i}"], env[f"b{i}"] = a, b
            found = search(i + 1, env)
            if found is not None:
                return found
        env.pop(f"a{i}", None)
        env.pop(f"b{i}", None)
        return None

    for c in cs:
        cex = search(0, {"c": c})
        if cex is not None:
            return CertificateVerdict(False, W, span, cex)
    return CertificateVerdict(True, W, span)


# -- the approximation f -------------------------------------------------------

def f_formula(cert: HerbrandCertificate, spec: Delta2Spec) -> Formula:
    """f(c,w) = 0 as a bounded formula over the variables c and w."""
    w = Var("w")

    def A(t: Term, y: Term) -> Formula:
        x_, y_, c_ = spec.matrix_A.params
        return substitute(spec.matrix_A.body, {x_: t, y_: y, c_: Var("c")})

    def B(s: Term, u: Term) -> Formula:
        z_, u_, c_ = spec.matrix_B.params
        return substitute(spec.matrix_B.body, {z_: s, u_: u, c_: Var("c")})

    def located(i: int) -> Formula:
        return And(Compare("<=", cert.t[i], w), Compare("<=", cert.s[i], w))

    disjuncts = []
    for j in range(cert.r + 1):
        a_j, b_j = f"a{j}", f"b{j}"
        body: Formula = And(located(j), And(Bounded("exists", a_j, False, w, A(cert.t[j], Var(a_j))),
                                            Bounded("forall", b_j, False, w, B(cert.s[j], Var(b_j)))))
        for i in reversed(range(j)):
            a_i, b_i = f"a{i}", f"b{i}"
            step = And(located(i), And(A(cert.t[i], Var(a_i)), Not(B(cert.s[i], Var(b_i)))))
            body = Bounded("exists", a_i, False, w, Bounded("exists", b_i, False, w, And(step, body)))
        disjuncts.append(body)
    out = disjuncts[0]
    for d in disjuncts[1:]:
        out = Or(out, d)
    return out


def naive_f(cert: HerbrandCertificate, spec: Delta2Spec) -> Callable[[int, int], int]:
    """Reference f read straight off :func:`f_formula`; cubic or worse, use on small windows."""
    fn = compiled(f_formula(cert, spec))
    return lambda c, w: 0 if fn({"c": c, "w": w}) else 1


_INF = float("inf")


class _IntervalEngine:
    """f(c, .) on 0..horizon as a union of success intervals.

    A chain of refuted prefixes (a_0,b_0), ..., (a_{j-1},b_{j-1}) becomes
    available once w reaches every witness and every locator value seen so
    far.  Its level-j disjunct then holds on the interval from there
    (and past the locators t_j, s_j and the least a_j with A(t_j,a_j,c)) up
    to the least b_j refuting B(s_j,b_j,c).  Prefixes agreeing on every
    variable a later locator reads are interchangeable, so only the one
    with the earliest start is kept.
    """

    def __init__(self, cert: HerbrandCertificate, spec: Delta2Spec, c: int):
        self.cert, self.spec, self.c = cert, spec, c
        self.horizon = -1
        self.zero: List[bool] = []
        self.lock = threading.Lock()

    def _least(self, pred: Callable[[int], bool], limit: int):
        for v in range(limit + 1):
            if pred(v):
                return v
        return _INF

    def _build(self, horizon: int) -> None:
        cert, c, A, B = self.cert, self.c, self.spec.A, self.spec.B
        a_hits: Dict[int, List[int]] = {}
        b_fails: Dict[int, List[int]] = {}

        def hits(t: int) -> List[int]:
            if t not in a_hits:
                a_hits[t] = [a for a in range(horizon + 1) if A(t, a, c)]
            return a_hits[t]

        def fails(s: int) -> List[int]:
            if s not in b_fails:
                b_fails[s] = [b for b in range(horizon + 1) if not B(s, b, c)]
            return b_fails[s]

        intervals: List[Tuple[int, float]] = []
        level: Dict[tuple, Tuple[int, Dict[str, int]]] = {(): (0, {"c": c})}
        for i in range(cert.r + 1):
            nxt: Dict[tuple, Tuple[int, Dict[str, int]]] = {}
            used = cert._used_later[i]
            for key, (start, env) in level.items():
                ti, si = cert.locators(i, env)
                base = max(start, ti, si)
                if base > horizon:
                    continue
                ah, bf = hits(ti), fails(si)
                lo = ah[0] if ah else _INF
                hi = bf[0] if bf else _INF
                if max(base, lo) < hi and max(base, lo) <= horizon:
                    intervals.append((max(base, lo), hi))
                if i == cert.r or not ah or not bf:
                    continue
                a_vals = ah if f"a{i}" in used else ah[:1]
                b_vals = bf if f"b{i}" in used else bf[:1]
                for a in a_vals:
                    for b in b_vals:
                        st = max(base, a, b)
                        if st > horizon:
                            continue
                        k = key + tuple(v for name, v in ((f"a{i}", a), (f"b{i}", b)) if name in used)
                        if k not in nxt or nxt[k][0] > st:
                            nxt[k] = (st, {**env, f"a{i}": a, f"b{i}": b})
            level = nxt
        zero = [False] * (horizon + 1)
        for lo, hi in intervals:
            for w in range(int(lo), int(min(hi, horizon + 1))):
                zero[w] = True
        self.zero, self.horizon = zero, horizon

    def __call__(self, w: int) -> int:
        with self.lock:
            if w > self.horizon:
                self._build(max(w, 2 * self.horizon, 64))
            return 0 if self.zero[w] else 1


def build_f(cert: HerbrandCertificate, spec: Delta2Spec) -> Callable[[int, int], int]:
    engines: Dict[int, _IntervalEngine] = {}
    lock = threading.Lock()

    def f(c: int, w: int) -> int:
        with lock:
            eng = engines.get(c)
            if eng is None:
                eng = engines[c] = _IntervalEngine(cert, spec, c)
        return eng(w)

    return f


def counter_from_changes(f: Callable[[int, int], int], K: int) -> Callable[[int, int], Ordinal]:
    """h(c,0) = K-1; h drops by one (truncated) whenever f changes."""
    cache: Dict[int, List[int]] = {}
    lock = threading.Lock()

    def h(c: int, w: int) -> Ordinal:
        with lock:
            vals = cache.setdefault(c, [K - 1])
            while len(vals) <= w:
                n = len(vals)
                vals.append(vals[-1] if f(c, n) == f(c, n - 1) else max(vals[-1] - 1, 0))
            return Ordinal.of(vals[w])

    return h


def build_h(cert: HerbrandCertificate, f: Callable[[int, int], int]) -> Tuple[Callable[[int, int], Ordinal], Ordinal]:
    K = cert.K
    return counter_from_changes(f, K.finite_value()), K


def herbrand_pair(cert: HerbrandCertificate, spec: Delta2Spec) -> WitnessPair:
    f = build_f(cert, spec)
    h, K = build_h(cert, f)
    return WitnessPair(f=f, h=h, K=K, provenance="herbrand")


@dataclass(frozen=True)
class ChangeBoundVerdict:
    ok: bool
    bound: int
    window: int
    worst_c: Optional[int]
    worst_changes: int

    def to_json(self) -> dict:
        return {"check": "change_bound", "ok": self.ok, "bound": self.bound, "window": self.window,
                "worst_c": self.worst_c, "worst_changes": self.worst_changes}


def change_bound_check(f: Callable[[int, int], int], r: int, c_range: Iterable[int], W: int) -> ChangeBoundVerdict:
    """At most 1+2r changes of w -> f(c,w) on 0..W for every c."""
    bound = 1 + 2 * r
    worst_c, worst = None, -1
    for c in c_range:
        n = len(change_points([f(c, w) for w in range(W + 1)]))
        if n > worst:
            worst_c, worst = c, n
    return ChangeBoundVerdict(worst <= bound, bound, W, worst_c, max(worst, 0))


# -- Boolean decomposition ------------------------------------------------------

@dataclass(frozen=True)
class DecompositionReport:
    """Window-parameterised Y_k, N_k and their combination.

    Y_k(c, W): there are k change points w_0 < ... < w_{k-1} < W and f
    takes the value 0 right after the last of them.  N_k is the same with
    value 1.  Y_0 and N_0 read f(c,0) and N_{2r+2} is false.
    """
    f: Callable[[int, int], int]
    r: int

    def _changes(self, c: int, W: int) -> Tuple[List[int], List[int]]:
        fs = [self.f(c, w) for w in range(W + 1)]
        return fs, [w - 1 for w in change_points(fs)]

    def _after_kth(self, c: int, W: int, k: int, value: int) -> bool:
        fs, cps = self._changes(c, W)
        if k == 0:
            return fs[0] == value
        return any(fs[w + 1] == value for w in cps[k - 1:])

    def Y(self, k: int, c: int, W: int) -> bool:
        self._check_index(k)
        return self._after_kth(c, W, k, 0)

    def N(self, k: int, c: int, W: int) -> bool:
        self._check_index(k)
        if k == 2 * self.r + 2:
            return False
        return self._after_kth(c, W, k, 1)

    def _check_index(self, k: int) -> None:
        if not 0 <= k <= 2 * self.r + 2:
            raise ValueError(f"index {k} outside 0..{2 * self.r + 2}")

    def combination(self, c: int, W: int) -> bool:
        return any(self.Y(k, c, W) and not self.N(k + 1, c, W) for k in range(2 * self.r + 2))

    def table(self, c: int, W: int) -> dict:
        ks = range(2 * self.r + 3)
        return {"c": c, "window": W,
                "Y": [self.Y(k, c, W) for k in ks], "N": [self.N(k, c, W) for k in ks],
                "combination": self.combination(c, W)}


def boolean_decomposition(pair: WitnessPair, r: int) -> DecompositionReport:
    return DecompositionReport(pair.f, r)


# -- finite Sigma_2 witnesses ------------------------------------------------------

@dataclass(frozen=True)
class Sigma2Witness:
    pair: WitnessPair
    candidates: Tuple[Term, ...]
    state: Callable[[int, int], int]  # index of the current candidate, len(candidates) once all are refuted

    def exhausted(self, c: int, w: int) -> bool:
        """True when every candidate is refuted within 0..w ("no stable witness")."""
        return self.state(c, w) >= len(self.candidates)


def sigma2_witness_finite(candidates: Sequence[Term], matrix_B: "Declaration | Delta2Spec") -> Sigma2Witness:
    """f(c,w) is the first candidate not yet refuted by some u <= w.

    Once every candidate is refuted f stays at the last one.  h counts down
    from K-1, K = #candidates + 1, on every change of f.
    """
    if not candidates:
        raise CertificateError("at least one candidate term is required")
    decl = matrix_B.matrix_B if isinstance(matrix_B, Delta2Spec) else matrix_B
    B = compiled(decl.body)
    z_, u_, c_ = decl.params
    terms = tuple(candidates)
    evals = [compiled(t) for t in terms]
    states: Dict[int, List[int]] = {}
    lock = threading.Lock()

    def value(c: int, i: int) -> int:
        return evals[min(i, len(terms) - 1)]({"c": c})

    def state(c: int, w: int) -> int:
        with lock:
            seq = states.setdefault(c, [])
            while len(seq) <= w:
                n = len(seq)
                i = seq[-1] if seq else 0
                # the current candidate survived u < n already; a fresh one is checked from 0
                lo = n
                while i < len(terms) and not all(B({z_: value(c, i), u_: u, c_: c}) for u in range(lo, n + 1)):
                    i, lo = i + 1, 0
                seq.append(i)
            return seq[w]

    def f(c: int, w: int) -> int:
        return value(c, state(c, w))

    K = len(terms) + 1
    h = counter_from_changes(f, K)
    return Sigma2Witness(WitnessPair(f=f, h=h, K=Ordinal.of(K), provenance="herbrand"), terms, state)

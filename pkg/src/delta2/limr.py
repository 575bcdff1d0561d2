"""Nested limits and least tuples.

For a parameter-free bounded phi(x_1..x_k, x_{k+1}) the chain
g1, g, h, h' below tracks, step by step, a candidate for the
lexicographically least (x_1..x_k) with some x_{k+1} satisfying phi.
h' is eventually lexicographically non-increasing and its limit is that
least tuple; reading the limit off component by component is the nesting
of limit rules.
"""
from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from .coding import decode_tuple, encode_tuple
from .ordinal import Cmp
from .spec_lang import Const, Declaration, Term, as_function, compiled, free_vars, parse_program

__all__ = [
    "lex_compare", "encode_tuple", "decode_tuple", "LexChainState", "LexChain", "lex_chain",
    "brute_lex_min", "PhiInstance", "load_phi", "NestedLimit", "nested_limit", "StabilizationResult", "stabilization_search",
]


def lex_compare(k: int, xs: Sequence[int], ys: Sequence[int]) -> Cmp:
    if len(xs) != k or len(ys) != k:
        raise ValueError(f"expected two {k}-tuples, got lengths {len(xs)} and {len(ys)}")
    for x, y in zip(xs, ys):
        if x != y:
            return Cmp.LT if x < y else Cmp.GT
    return Cmp.EQ


def _phi_callable(phi: "Declaration | Callable[..., bool]", k: int) -> Callable[..., bool]:
    if isinstance(phi, Declaration):
        if len(phi.params) != k + 1:
            raise ValueError(f"{phi.name} declares {len(phi.params)} variables, expected k+1 = {k + 1}")
        return as_function(phi)
    return phi


@dataclass(frozen=True)
class LexChainState:
    n: int
    g1: int
    g: int
    h: int
    h_prime: int
    first_witness: Optional[int]  # least y <= n with phi((y)_1, ..., (y)_{k+1})
    distinct: bool  # g(0), ..., g(n) pairwise distinct
    max_g: int


class LexChain:
    """g1, g, h, h' for one phi, extended incrementally and memoised.

    g(n) asks for u <= (n)_{k+1} with phi((n)_1..(n)_k, u); the least such u
    per prefix is searched once and cached, so the whole run costs one phi
    evaluation per (prefix, u) pair.
    """

    def __init__(self, phi: "Declaration | Callable[..., bool]", k: int):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k
        self.phi = _phi_callable(phi, k)
        self.states: List[LexChainState] = []
        self._seen: set = set()
        self._least_u: Dict[Tuple[int, ...], Tuple[int, Optional[int]]] = {}  # prefix -> (scanned up to, least u)
        self.lock = threading.Lock()

    def _has_u(self, prefix: Tuple[int, ...], bound: int) -> bool:
        scanned, least = self._least_u.get(prefix, (-1, None))
        if least is not None:
            return least <= bound
        for u in range(scanned + 1, bound + 1):
            if self.phi(*prefix, u):
                self._least_u[prefix] = (u, u)
                return True
        self._least_u[prefix] = (max(scanned, bound), None)
        return False

    def _step(self) -> None:
        k, n = self.k, len(self.states)
        prev = self.states[-1] if self.states else None
        d = decode_tuple(k + 1, n)
        first = prev.first_witness if prev else None
        if first is None and self.phi(*d):
            first = n
        g1 = n if first is None else encode_tuple(k, decode_tuple(k + 1, first)[:k])
        prefix = d[:k]
        g = encode_tuple(k, prefix) if self._has_u(prefix, d[k]) else g1
        repeat = g in self._seen
        if prev is None or prev.distinct:
            h = g
        elif repeat and lex_compare(k, decode_tuple(k, g), decode_tuple(k, prev.h)) is Cmp.LT:
            h = g
        else:
            h = prev.h
        # the distinctness clause quantifies over g(0..n) for h(n+1): it is read before adding g(n+1)
        distinct = (prev is None or prev.distinct) and not repeat
        self._seen.add(g)
        self.states.append(LexChainState(n, g1, g, h, h if first is not None else 0, first, distinct,
                                         max(g, prev.max_g) if prev else g))

    def state(self, n: int) -> LexChainState:
        with self.lock:
            while len(self.states) <= n:
                self._step()
            return self.states[n]

    def h_prime(self, n: int) -> Tuple[int, ...]:
        return decode_tuple(self.k, self.state(n).h_prime)


def lex_chain(phi: "Declaration | Callable[..., bool]", k: int, n: int) -> LexChainState:
    return LexChain(phi, k).state(n)


def brute_lex_min(phi: "Declaration | Callable[..., bool]", k: int, box: int) -> Optional[Tuple[int, ...]]:
    """Lexicographically least (x_1..x_k) in [0, box]^k with phi(x_1..x_k, u) for some u <= box."""
    fn = _phi_callable(phi, k)
    for xs in itertools.product(range(box + 1), repeat=k):
        if any(fn(*xs, u) for u in range(box + 1)):
            return xs
    return None


@dataclass(frozen=True)
class PhiInstance:
    phi: Declaration
    k: int
    window: Optional[int]  # suggested W from an optional ``limr { k = ..; window = ..; }`` block


def load_phi(text: str) -> PhiInstance:
    """Read ``phi`` (or the only declaration) and an optional limr block."""
    prog = parse_program(text)
    if "phi" in prog.decls:
        decl = prog.decls["phi"]
    elif len(prog.decls) == 1:
        decl = next(iter(prog.decls.values()))
    else:
        raise ValueError("the file must declare phi (or exactly one formula)")
    block = prog.blocks.get("limr", {})

    def number(key: str) -> Optional[int]:
        v = block.get(key)
        if v is None or isinstance(v, int):
            return v
        if isinstance(v, Const):
            return v.value
        raise ValueError(f"limr.{key} must be a number")

    k = number("k")
    k = len(decl.params) - 1 if k is None else k
    if len(decl.params) != k + 1:
        raise ValueError(f"{decl.name} has {len(decl.params)} variables, expected k+1 = {k + 1}")
    return PhiInstance(decl, k, number("window"))


@dataclass(frozen=True)
class NestedLimit:
    status: str  # "ok", "unstable", "no_witness" or "empty"
    tuple: Optional[Tuple[int, ...]]
    stabilization_w: Optional[int]
    component_stabilization: Tuple[int, ...]  # last step at which the prefix of length i changed
    descending_from: Optional[int]  # h' is lex non-increasing on [descending_from, W]
    window: int
    brute_min: Optional[Tuple[int, ...]]

    @property
    def agree(self) -> bool:
        return self.tuple == self.brute_min

    def to_json(self) -> dict:
        return {"status": self.status, "tuple": None if self.tuple is None else list(self.tuple),
                "stabilization_w": self.stabilization_w,
                "component_stabilization": list(self.component_stabilization),
                "descending_from": self.descending_from, "window": self.window,
                "brute_min": None if self.brute_min is None else list(self.brute_min), "agree": self.agree}


def nested_limit(phi: "Declaration | Callable[..., bool]", k: int, W: int, box: Optional[int] = None,
                 chain: Optional[LexChain] = None) -> NestedLimit:
    """Run h' for W steps and read its limit one component at a time.

    ``box`` bounds the brute-force lex-minimum used as the oracle (default
    min(W, 24)).  The result is "unstable" when h' still changed in the
    second half of the window, and "no_witness" when the brute-force box
    has a witness but no code up to W decodes to one.
    """
    if W < 1:
        raise ValueError("window must be >= 1")
    box = min(W, 24) if box is None else box
    brute = brute_lex_min(phi, k, box)
    chain = chain or LexChain(phi, k)
    if chain.state(W).first_witness is None:
        if brute is None:
            return NestedLimit("empty", None, None, (), None, W, None)
        # phi has a witness, but no code up to W decodes to one: h' is still the placeholder 0
        return NestedLimit("no_witness", None, None, (), None, W, brute)
    values = [chain.h_prime(n) for n in range(W + 1)]
    comp = []
    for i in range(1, k + 1):
        last = 0
        for n in range(1, W + 1):
            if values[n][:i] != values[n - 1][:i]:
                last = n
        comp.append(last)
    descending_from = 0
    for n in range(W, 0, -1):
        if lex_compare(k, values[n], values[n - 1]) is Cmp.GT:
            descending_from = n
            break
    stab = comp[-1]
    status = "unstable" if stab > W // 2 else "ok"
    return NestedLimit(status, values[W], stab, tuple(comp), descending_from, W, brute)


# -- stabilisation search ---------------------------------------------------------

@dataclass(frozen=True)
class StabilizationResult:
    status: str  # "ok" or "undetermined"
    j: Optional[int]
    y: Optional[int]
    observed_limit: int
    window: int

    @property
    def agree(self) -> Optional[bool]:
        return None if self.y is None else self.y == self.observed_limit

    def to_json(self) -> dict:
        return {"status": self.status, "j": self.j, "y": self.y, "observed_limit": self.observed_limit,
                "window": self.window, "agree": self.agree}


def stabilization_search(h_chain: Sequence[int], locators: Sequence[Term],
                         witnesses: Sequence[Mapping[str, int]], W: Optional[int] = None) -> StabilizationResult:
    """Find the first j whose tail condition holds, window-relative.

    ``locators`` are m_0..m_k; m_i may read x_0..x_{i-1} and the witness
    parameters (a1, a2, b1, b2, ...).  ``witnesses`` lists the admissible
    parameter assignments; the minimisation runs over all of them jointly.
    Candidate j fixes x_0 < ... positions x_i >= m_i with a rise
    h(x_i) < h(x_i+1) for i < j, then asks that h be non-increasing from
    m_j to the end of the window; y_j is the least h(x_j) over x_j >= m_j.
    """
    hs = list(h_chain if W is None else h_chain[:W + 1])
    W = len(hs) - 1
    if W < 1:
        raise ValueError("the chain needs at least two values")
    fns = [compiled(m) for m in locators]
    for i, m in enumerate(locators):
        allowed = {f"x{l}" for l in range(i)}
        stray = {v for v in free_vars(m) if v.startswith("x") and v not in allowed}
        if stray:
            raise ValueError(f"m{i} reads {', '.join(sorted(stray))}; only x_l with l < {i} are allowed")
    rises = [x for x in range(W) if hs[x] < hs[x + 1]]
    suffix_ok = [False] * (W + 2)  # suffix_ok[m]: non-increasing on [m, W]
    suffix_ok[W] = suffix_ok[W + 1] = True
    for x in range(W - 1, -1, -1):
        suffix_ok[x] = suffix_ok[x + 1] and hs[x] >= hs[x + 1]
    suffix_min = hs[:] + [None]
    for x in range(W - 1, -1, -1):
        suffix_min[x] = min(hs[x], suffix_min[x + 1])

    for j in range(len(locators)):
        best, stable = None, False

        def walk(i: int, env: Dict[str, int]) -> None:
            nonlocal best, stable
            m = fns[i](dict(env))
            if m > W:
                return
            if i == j:
                if m >= W:  # nothing observed after m_j
                    return
                y = suffix_min[m]
                best = y if best is None else min(best, y)
                stable = stable or suffix_ok[m]
                return
            for x in rises:
                if x >= m:
                    env[f"x{i}"] = x
                    walk(i + 1, env)
            env.pop(f"x{i}", None)

        for params in witnesses:
            walk(0, dict(params))
        if stable:
            return StabilizationResult("ok", j, best, hs[W], W)
    return StabilizationResult("undetermined", None, None, hs[W], W)

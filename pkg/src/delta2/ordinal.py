"""Ordinal notations below epsilon_0 in Cantor normal form.

An ordinal is stored as a tuple of ``(exponent, coefficient)`` terms with
strictly decreasing exponents, so structural equality is ordinal equality.
The textual form is ASCII: ``w^w*2+w+3`` is omega^omega*2 + omega + 3.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from functools import total_ordering
from typing import Iterable, Tuple

MAX_DEPTH = 8
MAX_TOWER = 3


class Cmp(Enum):
    LT = -1
    EQ = 0
    GT = 1

    def __str__(self) -> str:
        return self.name


class NotationError(ValueError):
    """A term sequence that violates the Cantor normal form invariants."""

    def __init__(self, message: str, position: int | None = None):
        super().__init__(message if position is None else f"{message} (term {position})")
        self.position = position


class OrdinalSyntaxError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class OrdinalBudgetError(ValueError):
    """Raised when a notation exceeds the configured nesting or tower cap."""


@total_ordering
@dataclass(frozen=True)
class Ordinal:
    terms: Tuple[Tuple["Ordinal", int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple((e, int(k)) for e, k in self.terms))
        object.__setattr__(self, "_depth", 1 + max(e.depth for e, _ in self.terms) if self.terms else 0)
        validate(self)

    @classmethod
    def of(cls, n: int) -> "Ordinal":
        if n < 0:
            raise NotationError("negative natural")
        return ZERO if n == 0 else cls(((ZERO, n),))

    @classmethod
    def omega_power(cls, exponent: "Ordinal | int", coefficient: int = 1) -> "Ordinal":
        if isinstance(exponent, int):
            exponent = Ordinal.of(exponent)
        return cls(((exponent, coefficient),))

    @property
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def is_finite(self) -> bool:
        return all(e.is_zero for e, _ in self.terms)

    def finite_value(self) -> int:
        if not self.is_finite:
            raise ValueError(f"{self} is infinite")
        return self.terms[0][1] if self.terms else 0

    @property
    def depth(self) -> int:
        """Nesting depth: 0 for zero, 1 for naturals, 2 below w^w, ..."""
        return self._depth

    def __lt__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return compare(self, other) is Cmp.LT

    def __eq__(self, other):
        if isinstance(other, int) and not isinstance(other, bool):
            return other >= 0 and self == Ordinal.of(other)
        if not isinstance(other, Ordinal):
            return NotImplemented
        return self.terms == other.terms

    def __hash__(self):
        return hash(self.terms)

    def __add__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return add(self, other)

    def __radd__(self, other):
        other = _coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return add(other, self)

    def __str__(self) -> str:
        return render_ordinal(self)

    def __repr__(self) -> str:
        return f"Ordinal({render_ordinal(self)!r})"


def _coerce(x):
    if isinstance(x, Ordinal):
        return x
    if isinstance(x, int) and not isinstance(x, bool) and x >= 0:
        return Ordinal.of(x)
    return NotImplemented


def validate(a: Ordinal, max_depth: int | None = None) -> None:
    """Check the CNF invariants; raise NotationError naming the bad term."""
    cap = MAX_DEPTH if max_depth is None else max_depth
    prev = None
    for i, (e, k) in enumerate(a.terms):
        if not isinstance(e, Ordinal):
            raise NotationError("exponent is not an ordinal", i)
        if k < 1:
            raise NotationError("coefficient must be >= 1", i)
        if prev is not None and compare(prev, e) is not Cmp.GT:
            raise NotationError("exponents must strictly decrease", i)
        prev = e
    if a.terms and a.depth > cap:
        raise OrdinalBudgetError(f"nesting depth {a.depth} exceeds cap {cap}")


def compare(a: Ordinal, b: Ordinal) -> Cmp:
    if a is b:
        return Cmp.EQ
    for (ea, ka), (eb, kb) in zip(a.terms, b.terms):
        c = compare(ea, eb)
        if c is not Cmp.EQ:
            return c
        if ka != kb:
            return Cmp.LT if ka < kb else Cmp.GT
    la, lb = len(a.terms), len(b.terms)
    if la == lb:
        return Cmp.EQ
    return Cmp.LT if la < lb else Cmp.GT


def add(a: Ordinal, b: Ordinal) -> Ordinal:
    if b.is_zero:
        return a
    if a.is_zero:
        return b
    lead, lead_k = b.terms[0]
    head = []
    for e, k in a.terms:
        c = compare(e, lead)
        if c is Cmp.GT:
            head.append((e, k))
        elif c is Cmp.EQ:
            lead_k += k
            break
        else:
            break
    return Ordinal(tuple(head) + ((lead, lead_k),) + b.terms[1:])


ZERO = Ordinal.__new__(Ordinal)
object.__setattr__(ZERO, "terms", ())
object.__setattr__(ZERO, "_depth", 0)
ONE = Ordinal(((ZERO, 1),))
OMEGA = Ordinal(((ONE, 1),))


def scale_finite(n: int, a: Ordinal) -> Ordinal:
    """Left multiplication ``n * a`` for a positive natural ``n``.

    ``n * w^g = w^g`` whenever ``g > 0``, so only the finite tail is scaled.
    """
    if n < 1:
        raise ValueError("scale factor must be >= 1")
    if a.terms and a.terms[-1][0].is_zero:
        return Ordinal(a.terms[:-1] + ((ZERO, a.terms[-1][1] * n),))
    return a


def omega_tower(n: int, max_index: int | None = None) -> Ordinal:
    """w_0 = 1, w_{k+1} = w^(w_k)."""
    cap = MAX_TOWER if max_index is None else max_index
    if n < 0:
        raise ValueError("tower index must be non-negative")
    if n > cap:
        raise OrdinalBudgetError(f"tower index {n} exceeds cap {cap}")
    out = ONE
    for _ in range(n):
        out = Ordinal.omega_power(out)
    return out


def from_terms(pairs: Iterable[Tuple[Ordinal | int, int]]) -> Ordinal:
    return Ordinal(tuple((Ordinal.of(e) if isinstance(e, int) else e, k) for e, k in pairs))


# -- text form ---------------------------------------------------------------

_TOKEN = re.compile(r"\s*(?:(\d+)|(w)|(\^)|(\*)|(\+)|(\()|(\)))")


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _TOKEN.match(text, pos)
            if not m:
                raise OrdinalSyntaxError(f"unexpected character {text[pos]!r}", pos)
            kind = m.lastindex
            self.toks.append((kind, m.group(kind), m.start(kind)))
            pos = m.end()
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None, len(self.text))

    def take(self, kind, what):
        tok = self.peek()
        if tok[0] != kind:
            raise OrdinalSyntaxError(f"expected {what}", tok[2])
        self.i += 1
        return tok

    def sum(self) -> Ordinal:
        starts = [self.peek()[2]]
        terms = [self.term()]
        while self.peek()[0] == 5:
            self.i += 1
            starts.append(self.peek()[2])
            terms.append(self.term())
        if len(terms) > 1:
            for t, pos in zip(terms, starts):
                if t is None:
                    raise OrdinalSyntaxError("0 is not allowed as a summand", pos)
        for j in range(1, len(terms)):
            if terms[j - 1] is not None and compare(terms[j - 1][0], terms[j][0]) is not Cmp.GT:
                raise OrdinalSyntaxError("non-canonical sum: exponents must strictly decrease", starts[j])
        return Ordinal(tuple(t for t in terms if t is not None))

    def term(self):
        kind, val, pos = self.peek()
        if kind == 1:
            self.i += 1
            n = int(val)
            return None if n == 0 else (ZERO, n)
        if kind == 2:
            self.i += 1
            exp = ONE
            if self.peek()[0] == 3:
                self.i += 1
                exp = self.atom()
            coef = 1
            if self.peek()[0] == 4:
                self.i += 1
                _, digits, p = self.take(1, "coefficient")
                coef = int(digits)
                if coef < 1:
                    raise OrdinalSyntaxError("coefficient must be >= 1", p)
            return (exp, coef)
        raise OrdinalSyntaxError("expected a natural or 'w'", pos)

    def atom(self) -> Ordinal:
        kind, val, pos = self.peek()
        if kind == 1:
            self.i += 1
            return Ordinal.of(int(val))
        if kind == 2:
            self.i += 1
            if self.peek()[0] == 3:
                self.i += 1
                return Ordinal.omega_power(self.atom())
            return OMEGA
        if kind == 6:
            self.i += 1
            inner = self.sum()
            self.take(7, "')'")
            return inner
        raise OrdinalSyntaxError("expected an exponent", pos)


def parse_ordinal(text: str) -> Ordinal:
    p = _Parser(text)
    if not p.toks:
        raise OrdinalSyntaxError("empty input", 0)
    out = p.sum()
    if p.i != len(p.toks):
        raise OrdinalSyntaxError("trailing input", p.peek()[2])
    return out


def _render_exponent(e: Ordinal) -> str:
    if e.is_finite:
        return str(e.finite_value())
    if len(e.terms) == 1 and e.terms[0][1] == 1:
        return render_ordinal(e)
    return f"({render_ordinal(e)})"


def render_ordinal(a: Ordinal) -> str:
    if a.is_zero:
        return "0"
    parts = []
    for e, k in a.terms:
        if e.is_zero:
            parts.append(str(k))
            continue
        s = "w" if e == ONE else f"w^{_render_exponent(e)}"
        parts.append(s if k == 1 else f"{s}*{k}")
    return "+".join(parts)

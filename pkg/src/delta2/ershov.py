"""Witness pairs (f, h, K) and their finite-window checks.

A pair witnesses that a set is K-r.e. when h never increases, stays below
K, and strictly drops whenever f changes value.  None of that can be
certified on a finite run; everything here is relative to a window
``0..W`` and reports say so.
"""
from __future__ import annotations

import csv
import io
import json
import threading
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from .ordinal import ZERO, Cmp, Ordinal, compare, parse_ordinal, render_ordinal
from .spec_lang import Delta2Spec

PROVENANCES = ("herbrand", "derivation", "baseline", "external")


@dataclass(frozen=True)
class WitnessPair:
    f: Callable[[int, int], int]
    h: Callable[[int, int], Ordinal]
    K: Optional[Ordinal]
    provenance: str = "external"

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"unknown provenance {self.provenance!r}")

    def sample(self, c: int, W: int) -> Tuple[List[int], List[Ordinal]]:
        """f(c,w) and h(c,w) for w = 0..W."""
        return [self.f(c, w) for w in range(W + 1)], [self.h(c, w) for w in range(W + 1)]


@dataclass(frozen=True)
class Verdict:
    check: str
    ok: bool
    c: Optional[int]
    window: int
    first_violation: Optional[int] = None
    detail: str = ""

    def to_json(self) -> dict:
        return {
            "check": self.check,
            "ok": self.ok,
            "c": self.c,
            "window": self.window,
            "first_violation": self.first_violation,
            "detail": self.detail,
        }


def _as_ordinal(v) -> Ordinal:
    return v if isinstance(v, Ordinal) else Ordinal.of(v)


def weakly_descending_verdict(hs: Sequence[Ordinal], K: Optional[Ordinal], c: Optional[int] = None) -> Verdict:
    """Check K > h(w) >= h(w+1) along a sampled h.

    ``first_violation`` is the index of the first offending value.
    """
    W = len(hs) - 1
    for w, hw in enumerate(hs):
        if K is not None and compare(K, hw) is not Cmp.GT:
            return Verdict("weakly_descending", False, c, W, w,
                           f"h({w}) = {render_ordinal(hw)} is not below K = {render_ordinal(K)}")
        if w and compare(hs[w - 1], hw) is Cmp.LT:
            return Verdict("weakly_descending", False, c, W, w,
                           f"h increases from {render_ordinal(hs[w - 1])} to {render_ordinal(hw)}")
    return Verdict("weakly_descending", True, c, W)


def lowering_verdict(fs: Sequence[int], hs: Sequence[Ordinal], c: Optional[int] = None) -> Verdict:
    """Check f(w) != f(w+1) -> h(w) > h(w+1) along sampled f and h."""
    W = len(fs) - 1
    for w in range(1, len(fs)):
        if fs[w] != fs[w - 1] and compare(hs[w - 1], hs[w]) is not Cmp.GT:
            return Verdict("lowering", False, c, W, w,
                           f"f changes {fs[w - 1]} -> {fs[w]} while h stays at {render_ordinal(hs[w])}"
                           if hs[w - 1] == hs[w] else
                           f"f changes {fs[w - 1]} -> {fs[w]} without h dropping")
    return Verdict("lowering", True, c, W)


def check_weakly_descending(p: WitnessPair, c: int, W: int) -> Verdict:
    if W < 1:
        raise ValueError("window must be >= 1")
    return weakly_descending_verdict([_as_ordinal(p.h(c, w)) for w in range(W + 1)], p.K, c)


def check_lowering(p: WitnessPair, c: int, W: int) -> Verdict:
    if W < 1:
        raise ValueError("window must be >= 1")
    fs, hs = p.sample(c, W)
    return lowering_verdict(fs, [_as_ordinal(h) for h in hs], c)


def change_points(fs: Sequence[int]) -> List[int]:
    """Indices w >= 1 with fs[w] != fs[w-1]."""
    return [w for w in range(1, len(fs)) if fs[w] != fs[w - 1]]


@dataclass(frozen=True)
class LimitReport:
    c: int
    observed_limit: int
    last_change_w: int
    window: int
    changes: int
    h_first: Ordinal
    h_last: Ordinal
    certified: bool
    reliable: bool = True
    still_descending: bool = False
    note: str = "window-relative"

    def to_json(self) -> dict:
        return {
            "c": self.c,
            "observed_limit": self.observed_limit,
            "last_change_w": self.last_change_w,
            "window": self.window,
            "changes": self.changes,
            "h_first": render_ordinal(self.h_first),
            "h_last": render_ordinal(self.h_last),
            "certified": self.certified,
            "reliable": self.reliable,
            "still_descending": self.still_descending,
            "note": self.note,
        }


def limit_report(fs: Sequence[int], hs: Sequence[Ordinal], K: Optional[Ordinal], c: int,
                 reliable: bool = True) -> LimitReport:
    W = len(fs) - 1
    changes = change_points(fs)
    h_last = hs[-1]
    certified = h_last.is_zero
    if K is not None and K.is_finite and len(changes) >= K.finite_value() - 1:
        certified = True
    still = W >= 1 and compare(hs[W - 1], hs[W]) is Cmp.GT
    return LimitReport(c=c, observed_limit=fs[W], last_change_w=changes[-1] if changes else 0,
                       window=W, changes=len(changes), h_first=hs[0], h_last=h_last,
                       certified=certified and reliable, reliable=reliable, still_descending=still)


def find_limit(p: WitnessPair, c: int, W: int) -> LimitReport:
    if W < 1:
        raise ValueError("window must be >= 1")
    fs, hs = p.sample(c, W)
    hs = [_as_ordinal(h) for h in hs]
    reliable = weakly_descending_verdict(hs, p.K, c).ok
    if p.provenance != "baseline":
        reliable = reliable and lowering_verdict(fs, hs, c).ok
    return limit_report(fs, hs, p.K, c, reliable)


# -- Limit Lemma baseline -----------------------------------------------------

class _LeastUnrefuted:
    """Least z <= w with matrix(z, u, c) for all u <= w, computed incrementally.

    Refuters are memoised per z, so sweeping w upward costs one matrix
    evaluation per (z, u) pair overall.
    """

    def __init__(self, matrix: Callable[[int, int, int], bool], c: int):
        self.matrix, self.c = matrix, c
        self.checked: Dict[int, int] = {}  # z -> largest u known to satisfy the matrix
        self.refuter: Dict[int, int] = {}
        self.lock = threading.Lock()

    def _refuted_by(self, z: int, w: int) -> bool:
        if z in self.refuter:
            return self.refuter[z] <= w
        start = self.checked.get(z, -1) + 1
        for u in range(start, w + 1):
            if not self.matrix(z, u, self.c):
                self.refuter[z] = u
                return True
        if w >= start:
            self.checked[z] = w
        return False

    def __call__(self, w: int) -> int:
        with self.lock:
            for z in range(w + 1):
                if not self._refuted_by(z, w):
                    return z
            return w + 1


def limit_lemma_witness(spec: Delta2Spec) -> WitnessPair:
    """Baseline witness: f(c,w) = 0 iff z0(w) <= x0(w).

    z0(w) is the least z <= w with B(z,u,c) for all u <= w, x0(w) the least
    x <= w with not A(x,y,c) for all y <= w; each is w+1 when absent.  The
    constant h carries no information, so the pair is exempt from lowering.
    """
    searches: Dict[Tuple[str, int], _LeastUnrefuted] = {}
    lock = threading.Lock()

    def search(side: str, c: int) -> _LeastUnrefuted:
        with lock:
            key = (side, c)
            if key not in searches:
                if side == "B":
                    matrix = spec.B
                else:
                    matrix = lambda x, y, c_: not spec.A(x, y, c_)
                searches[key] = _LeastUnrefuted(matrix, c)
            return searches[key]

    def f(c: int, w: int) -> int:
        return 0 if search("B", c)(w) <= search("notA", c)(w) else 1

    return WitnessPair(f=f, h=lambda c, w: ZERO, K=None, provenance="baseline")


# -- chains -------------------------------------------------------------------

class DescentViolation(ValueError):
    def __init__(self, w: int, before: Ordinal, after: Ordinal):
        super().__init__(f"chain increases at w={w}: {render_ordinal(before)} -> {render_ordinal(after)}")
        self.w = w


@dataclass(frozen=True)
class ChainLimit:
    minimum: Ordinal
    first_w: int


def chain_limit(h_chain: Callable[[int], Ordinal], W: int) -> ChainLimit:
    """Minimum of a weakly descending chain over 0..W and where it is first attained."""
    values = [_as_ordinal(h_chain(w)) for w in range(W + 1)]
    best, best_w = values[0], 0
    for w in range(1, len(values)):
        c = compare(values[w - 1], values[w])
        if c is Cmp.LT:
            raise DescentViolation(w, values[w - 1], values[w])
        if c is Cmp.GT:
            best, best_w = values[w], w
    return ChainLimit(best, best_w)


# -- trace export ---------------------------------------------------------------

TRACE_HEADER = ("c", "w", "f", "h")


def trace_rows(p: WitnessPair, cs: Iterable[int], W: int) -> List[Tuple[int, int, int, str]]:
    rows = []
    for c in cs:
        fs, hs = p.sample(c, W)
        rows.extend((c, w, fs[w], render_ordinal(_as_ordinal(hs[w]))) for w in range(W + 1))
    return rows


def write_trace_csv(rows: Iterable[Sequence], fp) -> None:
    writer = csv.writer(fp, lineterminator="\n")
    writer.writerow(TRACE_HEADER)
    writer.writerows(rows)


def trace_csv(rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    write_trace_csv(rows, buf)
    return buf.getvalue()


def read_trace_csv(fp) -> Dict[int, Tuple[List[int], List[Ordinal]]]:
    """Parse a (c, w, f, h) trace into per-c value lists ordered by w."""
    reader = csv.DictReader(fp)
    missing = set(TRACE_HEADER) - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"trace is missing column(s) {sorted(missing)}")
    per_c: Dict[int, Dict[int, Tuple[int, Ordinal]]] = {}
    for row in reader:
        c, w = int(row["c"]), int(row["w"])
        per_c.setdefault(c, {})[w] = (int(row["f"]), parse_ordinal(row["h"]))
    out = {}
    for c, by_w in sorted(per_c.items()):
        if sorted(by_w) != list(range(len(by_w))):
            raise ValueError(f"trace for c={c} does not cover w = 0..{len(by_w) - 1} contiguously")
        out[c] = ([by_w[w][0] for w in range(len(by_w))], [by_w[w][1] for w in range(len(by_w))])
    return out


def verdicts_json(verdicts: Dict[int, Sequence[Verdict]]) -> str:
    payload = [{"c": c, "verdicts": [v.to_json() for v in vs]} for c, vs in sorted(verdicts.items())]
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def window_verdicts(fs: Sequence[int], hs: Sequence[Ordinal], K: Optional[Ordinal], c: int,
                    lowering: bool = True) -> List[Verdict]:
    out = [weakly_descending_verdict(hs, K, c)]
    if lowering:
        out.append(lowering_verdict(fs, hs, c))
    return out

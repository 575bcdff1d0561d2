"""Ordinal-annotated infinitary derivations and the tracing function.

A derivation is the sextuple (T, Seq, Rule, Mfml, Sfml, ord) over a tree of
addresses.  Children of an omega-branching (Forall) node are produced on
demand and memoised, so a derivation is usable as long as every walk stays
finite.

The only generator here is the candidate sweep for

    exists x forall y [p(x,y,c) = 0]

(or for exists z forall u B(z,u,c)): candidate k is introduced by an
Exists, its Forall closes every true instance with an Int leaf, and the
first false instance is repeated (Rep) into the block of candidate k+1.
"""
from __future__ import annotations

import csv
import io
import json
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from . import coding
from .ershov import WitnessPair
from .ordinal import ONE, ZERO, Cmp, Ordinal, compare, from_terms, render_ordinal, scale_finite
from .spec_lang import Delta2Spec

Address = Tuple[int, ...]


class DerivationError(ValueError):
    """The requested derivation would not be well founded."""


class DerivationBudgetError(DerivationError):
    """A walk left the part of the tree the ordinal assignment can support."""


class Rule(str, Enum):
    INT = "Int"
    EXISTS = "Exists"
    FORALL = "Forall"
    REP = "Rep"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Fml:
    """A closed formula of the sweep: the endformula, a candidate's universal, or one instance.

    ``kind`` is "exists", "forall" or "eq"; ``matrix`` names p or B.
    """
    kind: str
    matrix: str
    c: int
    x: Optional[int] = None
    y: Optional[int] = None

    def __str__(self) -> str:
        if self.kind == "exists":
            return f"exists x forall y {self.matrix}(x,y,{self.c})"
        if self.kind == "forall":
            return f"forall y {self.matrix}({self.x},y,{self.c})"
        return f"{self.matrix}({self.x},{self.y},{self.c})"


@dataclass(frozen=True)
class DerivationNode:
    address: Address
    seq: Tuple[Fml, ...]
    rule: Rule
    mfml: Optional[Fml]
    sfml: Optional[Fml]
    ord: Ordinal
    candidate: Optional[int] = None  # the x_b of the block this node belongs to

    def to_json(self) -> dict:
        return {"address": list(self.address), "rule": str(self.rule), "ord": render_ordinal(self.ord),
                "mfml": None if self.mfml is None else str(self.mfml),
                "sfml": None if self.sfml is None else str(self.sfml)}


def oplus1(a: Address) -> Address:
    """a + 1 on the last component; the root maps to itself."""
    return a[:-1] + (a[-1] + 1,) if a else a


def _omega_times(n: int, plus: int = 0) -> Ordinal:
    if n < 0:
        raise DerivationBudgetError("ordinal assignment ran below zero")
    terms = []
    if n:
        terms.append((ONE, n))
    if plus:
        terms.append((ZERO, plus))
    return from_terms(terms)


class Derivation:
    """Lazily materialised candidate-sweep derivation for one parameter c.

    ``overrides`` replaces individual nodes (tests use it to plant defects).
    """

    def __init__(self, spec: Delta2Spec, c: int, X: int, form: str = "delta2",
                 overrides: Optional[Mapping[Address, DerivationNode]] = None):
        if form not in ("delta2", "sigma2"):
            raise ValueError(f"unknown form {form!r}")
        self.spec, self.c, self.X, self.form = spec, c, X, form
        self.matrix_name = "p" if form == "delta2" else "B"
        self.matrix: Callable[[int, int, int], bool] = spec.p if form == "delta2" else spec.B
        self.K = _omega_times(X + 2)
        self.audit_window = 60 if form == "delta2" else 200
        self._nodes: Dict[Address, DerivationNode] = dict(overrides or {})
        self._lock = threading.Lock()
        self._truth: Dict[Tuple[int, int], bool] = {}
        self._tracer: Optional["_Tracer"] = None
        endformula = Fml("exists", self.matrix_name, c)
        self.endformula = endformula
        root = DerivationNode((), (endformula,), Rule.EXISTS, endformula, None, _omega_times(X + 1, 1), 0)
        self._nodes.setdefault((), root)

    @property
    def root(self) -> DerivationNode:
        return self._nodes[()]

    def true_eq(self, x: int, y: int) -> bool:
        key = (x, y)
        if key not in self._truth:
            self._truth[key] = bool(self.matrix(x, y, self.c))
        return self._truth[key]

    def eq_true(self, fml: Fml) -> bool:
        return fml.kind == "eq" and self.true_eq(fml.x, fml.y)

    def arity(self, node: DerivationNode) -> Optional[int]:
        """Number of children, None for omega-branching."""
        if node.rule is Rule.FORALL:
            return None
        return 0 if node.rule is Rule.INT else 1

    def node(self, address: Sequence[int]) -> DerivationNode:
        address = tuple(address)
        with self._lock:
            got = self._nodes.get(address)
        if got is not None:
            return got
        if not address:
            return self.root
        parent = self.node(address[:-1])
        made = self._make_child(parent, address[-1])
        with self._lock:
            return self._nodes.setdefault(address, made)

    def child(self, node: DerivationNode, n: int) -> DerivationNode:
        return self.node(node.address + (n,))

    def _make_child(self, parent: DerivationNode, n: int) -> DerivationNode:
        arity = self.arity(parent)
        if n < 0 or (arity is not None and n >= arity):
            raise KeyError(f"{_addr(parent.address + (n,))} is not in the tree")
        addr, k, X = parent.address + (n,), parent.candidate, self.X
        if parent.rule is Rule.EXISTS:
            inst = Fml("forall", self.matrix_name, self.c, k)
            return DerivationNode(addr, parent.seq + (inst,), Rule.FORALL, inst, inst, _omega_times(X + 1 - k), k)
        if parent.rule is Rule.FORALL:
            eq = Fml("eq", self.matrix_name, self.c, k, n)
            seq = tuple(f for f in parent.seq if f != parent.mfml) + (eq,)
            ordinal = _omega_times(X - k, 2)
            if self.true_eq(k, n):
                return DerivationNode(addr, seq, Rule.INT, eq, eq, ordinal, k)
            return DerivationNode(addr, seq, Rule.REP, None, eq, ordinal, k)
        # Rep: the same sequent, now opening the block of the next candidate
        if k + 1 > X:
            raise DerivationBudgetError(
                f"candidate {k} is refuted at {_addr(parent.address)}; no ordinal left below the bound X={X}")
        return DerivationNode(addr, parent.seq, Rule.EXISTS, self.endformula, None, _omega_times(X - k, 1), k + 1)

    def tracer(self) -> "_Tracer":
        with self._lock:
            if self._tracer is None:
                self._tracer = _Tracer(self)
            return self._tracer


def _addr(a: Address) -> str:
    return ".".join(map(str, a)) if a else "root"


def survives(spec: Delta2Spec, c: int, x: int, window: int, form: str = "delta2") -> bool:
    """Does candidate x pass every instance inside the window?

    For the p-form the window bounds both components of y = <y0, y1>, so a
    refutation needing a large pair code is still seen.
    """
    if form == "delta2":
        return all(spec.p(x, coding.pair(y0, y1), c) for y0 in range(window + 1) for y1 in range(window + 1))
    return all(spec.B(x, u, c) for u in range(window + 1))


def least_witness_bound(spec: Delta2Spec, c: int, window: int, form: str = "delta2", cap: int = 200000) -> int:
    """Least candidate x that :func:`survives` the window."""
    for x in range(cap + 1):
        if survives(spec, c, x, window, form):
            return x
    raise DerivationBudgetError(f"no candidate <= {cap} survives the window {window}")


def canonical_derivation(spec: Delta2Spec, c: int, X: "int | str" = "auto", form: str = "delta2",
                         audit_window: Optional[int] = None) -> Derivation:
    """Candidate sweep up to X; ``X="auto"`` takes the least candidate passing the window.

    The default window is 60 per component for the p-form and 200 for B.
    """
    if audit_window is None:
        audit_window = 60 if form == "delta2" else 200
    if X == "auto":
        X = least_witness_bound(spec, c, audit_window, form)
    if not any(survives(spec, c, x, audit_window, form) for x in range(X + 1)):
        raise DerivationError(f"no candidate <= {X} survives the audit window {audit_window}")
    d = Derivation(spec, c, X, form)
    d.audit_window = audit_window
    return d


# -- audit ------------------------------------------------------------------------

@dataclass(frozen=True)
class AuditVerdict:
    ok: bool
    nodes_checked: int
    address: Optional[Address] = None
    clause: str = ""

    def to_json(self) -> dict:
        return {"check": "local_correctness", "ok": self.ok, "nodes_checked": self.nodes_checked,
                "address": None if self.address is None else list(self.address), "clause": self.clause}


def _local_violation(d: Derivation, node: DerivationNode, children: List[DerivationNode]) -> Optional[str]:
    if node.mfml is not None and node.mfml not in node.seq:
        return "main formula not in the sequent"
    if node.rule is Rule.INT:
        if node.mfml is None or not d.eq_true(node.mfml):
            return "Int needs a true closed equation as main formula"
    elif node.rule is Rule.EXISTS:
        if node.mfml is None or node.mfml.kind != "exists":
            return "Exists needs an existential main formula"
        (ch,) = children
        inst = ch.sfml
        if inst is None or inst.kind != "forall" or ch.seq != node.seq + (inst,):
            return "Exists child must add an instance of the main formula"
    elif node.rule is Rule.FORALL:
        if node.mfml is None or node.mfml.kind != "forall":
            return "Forall needs a universal main formula"
        rest = tuple(f for f in node.seq if f != node.mfml)
        for n, ch in enumerate(children):
            want = Fml("eq", node.mfml.matrix, node.mfml.c, node.mfml.x, n)
            if ch.sfml != want or ch.seq != rest + (want,):
                return f"Forall child {n} must carry the instance {want}"
        if any(ch.ord != children[0].ord for ch in children):
            return "Forall children must share one ordinal (ord(a) > ord(a*<n>) = ord(a*<m>))"
    elif node.rule is Rule.REP:
        (ch,) = children
        if ch.seq != node.seq:
            return "Rep child must repeat the sequent"
    for ch in children:
        if compare(node.ord, ch.ord) is not Cmp.GT:
            return f"ordinal does not drop from {render_ordinal(node.ord)} to child {_addr(ch.address)}"
    return None


def audit_local_correctness(d: Derivation, depth_budget: int, width_budget: int) -> AuditVerdict:
    """Breadth-first audit; Forall children are sampled up to ``width_budget``.

    A Rep whose successor would exhaust the ordinal budget counts as a
    violation: the tree is not well founded there.
    """
    if depth_budget < 1 or width_budget < 1:
        raise ValueError("budgets must be >= 1")
    if compare(d.root.ord, d.K) is not Cmp.LT:
        return AuditVerdict(False, 0, (), "root ordinal must lie below K")
    frontier, checked = [d.root], 0
    for _ in range(depth_budget + 1):
        nxt = []
        for node in frontier:
            arity = d.arity(node)
            count = width_budget if arity is None else arity
            try:
                children = [d.child(node, n) for n in range(count)]
            except DerivationBudgetError as exc:
                return AuditVerdict(False, checked, node.address, str(exc))
            problem = _local_violation(d, node, children)
            checked += 1
            if problem:
                return AuditVerdict(False, checked, node.address, problem)
            nxt.extend(children)
        frontier = nxt
        if not frontier:
            break
    return AuditVerdict(True, checked)


# -- tracing ------------------------------------------------------------------------

class _Tracer:
    """sigma, f and h of one derivation, extended step by step and memoised."""

    def __init__(self, d: Derivation):
        self.d = d
        self.sigma: List[Address] = [()]
        self.f: List[int] = [1 if d.form == "delta2" else 0]
        self.h: List[Ordinal] = [self._h0()]
        self.lock = threading.Lock()
        self._a_witness: Dict[int, Optional[int]] = {}  # x_b -> least k with A((x_b)_0, (k)_0, c), found so far
        self._a_scanned: Dict[int, int] = {}

    def _h0(self) -> Ordinal:
        return scale_finite(3, self.d.root.ord) if self.d.form == "delta2" else self.d.root.ord

    def _parent_rule(self, a: Address) -> Optional[Rule]:
        return self.d.node(a[:-1]).rule if a else None

    def _next_address(self, a: Address) -> Address:
        node = self.d.node(a)
        if self._parent_rule(a) is Rule.FORALL:
            return oplus1(a) if self.d.eq_true(node.sfml) else a + (0,)
        return a + (0,)

    def _a_seen(self, xb: int, n: int) -> bool:
        """exists k <= n with A((x_b)_0, (k)_0, c)."""
        found = self._a_witness.get(xb)
        if found is not None:
            return found <= n
        spec, c, x0 = self.d.spec, self.d.c, coding.p0(xb)
        for k in range(self._a_scanned.get(xb, -1) + 1, n + 1):
            if spec.A(x0, coding.p0(k), c):
                self._a_witness[xb] = k
                self._a_scanned[xb] = k
                return True
        self._a_scanned[xb] = max(n, self._a_scanned.get(xb, -1))
        return False

    def _step(self) -> None:
        d, w = self.d, len(self.sigma) - 1
        a = self._next_address(self.sigma[w])
        node = d.node(a)
        on_forall = self._parent_rule(a) is Rule.FORALL
        fw, hw = self.f[w], self.h[w]
        if d.form == "sigma2":
            f_next = node.candidate if on_forall else 0
            h_next = node.ord
        elif not on_forall:
            f_next = 1 - fw
            h_next = scale_finite(3, node.ord)
        else:
            xb, n = node.candidate, a[-1]
            f_next = 0 if (d.eq_true(node.sfml) and self._a_seen(xb, n)) else 1
            if n == 0:
                h_next = scale_finite(3, node.ord) + 2
            elif f_next == fw:
                h_next = hw
            elif fw == 1:
                h_next = scale_finite(3, node.ord) + 1
            else:
                h_next = scale_finite(3, node.ord)
        self.sigma.append(a)
        self.f.append(f_next)
        self.h.append(h_next)

    def extend(self, w: int) -> None:
        with self.lock:
            while len(self.sigma) <= w:
                self._step()


def trace_sigma(d: Derivation, w: int) -> Address:
    t = d.tracer()
    t.extend(w)
    return t.sigma[w]


def _per_c(d: Derivation, attr: str):
    def fn(c: int, w: int):
        if c != d.c:
            raise ValueError(f"derivation was built for c={d.c}, not c={c}")
        t = d.tracer()
        t.extend(w)
        return getattr(t, attr)[w]
    return fn


def extract_f(d: Derivation) -> Callable[[int, int], int]:
    return _per_c(d, "f")


def extract_h(d: Derivation) -> Tuple[Callable[[int, int], Ordinal], Ordinal]:
    """h together with its bound 3*K (left multiplication)."""
    bound = scale_finite(3, d.K) if d.form == "delta2" else d.K
    return _per_c(d, "h"), bound


def derivation_pair(d: Derivation) -> WitnessPair:
    h, bound = extract_h(d)
    return WitnessPair(f=extract_f(d), h=h, K=bound, provenance="derivation")


def sigma2_trace(d: Derivation) -> WitnessPair:
    if d.form != "sigma2":
        raise ValueError("sigma2_trace needs a derivation of exists z forall u B")
    return derivation_pair(d)


@dataclass(frozen=True)
class Trace:
    c: int
    sigma: Tuple[Address, ...]
    f: Tuple[int, ...]
    h: Tuple[Ordinal, ...]
    block: Tuple[Optional[Address], ...]  # the Forall node sigma(w) is a child of, if any

    @property
    def window(self) -> int:
        return len(self.f) - 1


def trace(d: Derivation, W: int) -> Trace:
    """sigma, f, h on 0..W (sigma is computed one step further to see exits)."""
    t = d.tracer()
    t.extend(W + 1)
    block = tuple(a[:-1] if t._parent_rule(a) is Rule.FORALL else None for a in t.sigma[:W + 2])
    return Trace(d.c, tuple(t.sigma[:W + 2]), tuple(t.f[:W + 1]), tuple(t.h[:W + 1]), block)


def sigma_bound_violation(tr: Trace) -> Optional[int]:
    """First w where sigma(w) has length or a component above w."""
    for w, a in enumerate(tr.sigma[:tr.window + 1]):
        if len(a) > w or any(x > w for x in a):
            return w
    return None


@dataclass(frozen=True)
class BlockVerdict:
    ok: bool
    window: int
    blocks: int
    max_changes: int
    first_violation: Optional[int] = None
    detail: str = ""

    def to_json(self) -> dict:
        return {"check": "forall_block_changes", "ok": self.ok, "window": self.window, "blocks": self.blocks,
                "max_changes": self.max_changes, "first_violation": self.first_violation, "detail": self.detail}


def block_change_verdict(block: Sequence[Optional[object]], fs: Sequence[int], descends: Sequence[bool]) -> BlockVerdict:
    """At most two f-changes along each run of one Forall's children, and a
    0 -> 1 change only on the last step of its run, which then descends.

    ``block[w]`` identifies the Forall sigma(w) sits under (None off-Forall);
    ``descends[w]`` says whether the next move is a*<0>.
    """
    W = len(fs) - 1
    runs, max_changes, w = 0, 0, 0
    while w <= W:
        if block[w] is None:
            w += 1
            continue
        start = w
        while w + 1 <= W and block[w + 1] == block[start]:
            w += 1
        runs += 1
        changes = 0
        for v in range(start + 1, w + 1):
            if fs[v] != fs[v - 1]:
                changes += 1
                if fs[v - 1] == 0 and fs[v] == 1 and not (v == w and descends[v]):
                    return BlockVerdict(False, W, runs, max(max_changes, changes), v,
                                        "a 0 -> 1 change must be the last step of its block, followed by a*<0>")
        max_changes = max(max_changes, changes)
        if changes > 2:
            return BlockVerdict(False, W, runs, changes, w, f"{changes} changes inside one Forall block")
        w += 1
    return BlockVerdict(True, W, runs, max_changes)


def check_forall_block_changes(d: Derivation, window: int) -> BlockVerdict:
    tr = trace(d, window)
    descends = [tr.sigma[w + 1] == tr.sigma[w] + (0,) for w in range(window + 1)]
    return block_change_verdict(tr.block[:window + 1], tr.f, descends)


@dataclass(frozen=True)
class Settled:
    w: int
    value: int
    candidate: int


def settle(d: Derivation, min_children: int, budget: int = 2_000_000) -> Settled:
    """Run sigma until it has passed ``min_children`` children of the Forall of a
    candidate that survives the derivation's audit window.

    For the p-form, f on that block reads 0 only once a code k <= n with
    A((x_b)_0, (k)_0, c) has been passed, so ``min_children`` has to exceed
    that code for the value to be the limit.

    Raises DerivationBudgetError when that does not happen within ``budget`` steps.
    """
    t, w = d.tracer(), 0
    good: Dict[int, bool] = {}
    while w <= budget:
        t.extend(w)
        a = t.sigma[w]
        if a and t._parent_rule(a) is Rule.FORALL and a[-1] >= min_children:
            k = d.node(a).candidate
            if k not in good:
                good[k] = survives(d.spec, d.c, k, d.audit_window, d.form)
            if good[k]:
                return Settled(w, t.f[w], k)
        w += max(1, min_children // 4) if a and t._parent_rule(a) is Rule.FORALL else 1
    raise DerivationBudgetError(f"sigma did not settle within {budget} steps")


# -- dumps -------------------------------------------------------------------------

def dump_derivation(d: Derivation, depth_budget: int, width_budget: int) -> str:
    """JSON lines, breadth first, Forall children cut at ``width_budget``."""
    out, frontier = [], [d.root]
    for _ in range(depth_budget + 1):
        nxt = []
        for node in frontier:
            out.append(json.dumps(node.to_json(), sort_keys=True))
            arity = d.arity(node)
            for n in range(width_budget if arity is None else arity):
                try:
                    nxt.append(d.child(node, n))
                except DerivationBudgetError:
                    break
        frontier = nxt
    return "\n".join(out) + "\n"


def trace_csv(tr: Trace) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("w", "address", "f", "h"))
    for w in range(tr.window + 1):
        writer.writerow((w, _addr(tr.sigma[w]), tr.f[w], render_ordinal(tr.h[w])))
    return buf.getvalue()

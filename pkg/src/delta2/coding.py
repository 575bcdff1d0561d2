"""Cantor pairing and right-nested k-tuple coding."""
from __future__ import annotations

from math import isqrt
from typing import Sequence, Tuple


def pair(a: int, b: int) -> int:
    s = a + b
    return s * (s + 1) // 2 + b


def unpair(n: int) -> Tuple[int, int]:
    if n < 0:
        raise ValueError("cannot unpair a negative number")
    s = (isqrt(8 * n + 1) - 1) // 2
    b = n - s * (s + 1) // 2
    return s - b, b


def p0(n: int) -> int:
    return unpair(n)[0]


def p1(n: int) -> int:
    return unpair(n)[1]


def encode_tuple(k: int, xs: Sequence[int]) -> int:
    """<x1,...,xk> as pair(x1, <x2,...,xk>); the identity when k == 1."""
    if k < 1:
        raise ValueError("arity must be >= 1")
    if len(xs) != k:
        raise ValueError(f"expected {k} components, got {len(xs)}")
    code = xs[-1]
    for x in reversed(xs[:-1]):
        code = pair(x, code)
    return code


def decode_tuple(k: int, n: int) -> Tuple[int, ...]:
    if k < 1:
        raise ValueError("arity must be >= 1")
    out = []
    for _ in range(k - 1):
        head, n = unpair(n)
        out.append(head)
    out.append(n)
    return tuple(out)


def project(k: int, i: int, n: int) -> int:
    """The i-th component (1-based) of the k-tuple coded by n."""
    if not 1 <= i <= k:
        raise ValueError(f"projection index {i} out of range 1..{k}")
    return decode_tuple(k, n)[i - 1]

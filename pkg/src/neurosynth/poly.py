"""Sparse multivariate polynomials over named signals.

A monomial is a sorted tuple of ``(name, power)`` pairs; the empty tuple is
the constant term. A polynomial maps monomials to real coefficients.
"""

from __future__ import annotations

from collections import defaultdict
from typing import Mapping

from .dsl import Add, Constant, Div, Expr, IntPow, Mul, Neg, Sub, Var
from .errors import SynthesisError

Monomial = tuple[tuple[str, int], ...]
Poly = dict[Monomial, float]


class NonPolynomialError(SynthesisError):
    pass


def _mono_mul(a: Monomial, b: Monomial) -> Monomial:
    powers: dict[str, int] = dict(a)
    for name, k in b:
        powers[name] = powers.get(name, 0) + k
    return tuple(sorted(powers.items()))


def _clean(p: Mapping[Monomial, float]) -> Poly:
    return {m: c for m, c in p.items() if c != 0.0}


def poly_add(a: Poly, b: Poly, sign: float = 1.0) -> Poly:
    out = dict(a)
    for m, c in b.items():
        out[m] = out.get(m, 0.0) + sign * c
    return _clean(out)


def poly_mul(a: Poly, b: Poly) -> Poly:
    out: dict[Monomial, float] = defaultdict(float)
    for ma, ca in a.items():
        for mb, cb in b.items():
            out[_mono_mul(ma, mb)] += ca * cb
    return _clean(out)


def to_poly(e: Expr) -> Poly:
    """Expand an expression tree into a sparse polynomial."""
    if isinstance(e, Constant):
        return _clean({(): float(e.value)})
    if isinstance(e, Var):
        return {((e.name, 1),): 1.0}
    if isinstance(e, Add):
        return poly_add(to_poly(e.left), to_poly(e.right))
    if isinstance(e, Sub):
        return poly_add(to_poly(e.left), to_poly(e.right), -1.0)
    if isinstance(e, Mul):
        return poly_mul(to_poly(e.left), to_poly(e.right))
    if isinstance(e, Neg):
        return {m: -c for m, c in to_poly(e.operand).items()}
    if isinstance(e, Div):
        d = float(e.right.value)
        return {m: c / d for m, c in to_poly(e.left).items()}
    if isinstance(e, IntPow):
        base = to_poly(e.base)
        out: Poly = {(): 1.0}
        for _ in range(e.exponent):
            out = poly_mul(out, base)
        return out
    raise NonPolynomialError(f"cannot expand {type(e).__name__} into a polynomial")


def degree(m: Monomial) -> int:
    return sum(k for _, k in m)


def poly_degree(p: Poly) -> int:
    return max((degree(m) for m in p), default=0)


def factors(m: Monomial) -> tuple[str, ...]:
    """Monomial as a flat, sorted tuple of variable names with repetition."""
    return tuple(name for name, k in m for _ in range(k))


def eval_poly(p: Poly, env: Mapping[str, float]) -> float:
    total = 0.0
    for m, c in p.items():
        term = c
        for name, k in m:
            term *= env[name] ** k
        total += term
    return total


def format_monomial(m: Monomial) -> str:
    if not m:
        return "1"
    return "*".join(name if k == 1 else f"{name}^{k}" for name, k in m)

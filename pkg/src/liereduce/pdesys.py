"""First-order PDE systems polynomial in the derivatives: construction,
structural classification (autonomous / homogeneous / quasilinear) and the
minors of the gradient matrix used by the Monge-Ampere families."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import sympy as sp

from .symcore import Expr, JetContext, SymcoreError

__all__ = [
    "PdeError",
    "JetContext",
    "DerivMonomial",
    "PdeSystem",
    "decompose",
    "degree_in_derivatives",
    "is_autonomous",
    "homogeneity_degree",
    "is_quasilinear",
    "gradient_minors",
]


class PdeError(SymcoreError):
    """Raised for malformed systems (derivative denominators, zero equations)."""


@dataclass(frozen=True)
class DerivMonomial:
    """One collected monomial of an equation: a multiset of derivative symbols
    together with its coefficient, which is free of derivative symbols."""

    derivs: tuple[sp.Symbol, ...]
    coeff: Expr

    @property
    def degree(self) -> int:
        return len(self.derivs)

    def as_expr(self) -> Expr:
        e = self.coeff
        for s in self.derivs:
            e = e * Expr(e.ctx, s)
        return e


class PdeSystem:
    """A list of equations (left-hand sides, = 0 implicit), each polynomial in
    the derivative symbols with coefficients rational in (x, u, parameters)."""

    def __init__(self, ctx: JetContext, equations: Sequence[Expr]):
        self.ctx = ctx
        eqs = []
        dset = set(ctx.deriv_syms)
        for k, eq in enumerate(equations):
            e = ctx.expr(eq)
            if e.is_zero():
                raise PdeError(f"equation {k + 1} is identically zero")
            if e.den.free_symbols & dset:
                raise PdeError("not polynomial in derivatives")
            eqs.append(e)
        self.equations = tuple(eqs)

    def __len__(self):
        return len(self.equations)

    def __iter__(self):
        return iter(self.equations)

    def __repr__(self):
        return f"PdeSystem({len(self.equations)} equations over {self.ctx!r})"


def split_term(term: sp.Expr, dset: set) -> tuple[tuple, sp.Expr]:
    """Split one expanded product into (derivative exponent part, coefficient part)."""
    dpart = []
    rest = []
    for factor in sp.Mul.make_args(term):
        base, exp = factor.as_base_exp()
        if base in dset:
            if not (exp.is_Integer and exp > 0):
                raise PdeError("not polynomial in derivatives")
            dpart.extend([base] * int(exp))
        else:
            rest.append(factor)
    key = tuple(sorted(dpart, key=lambda s: s.name))
    return key, sp.Mul(*rest)


def decompose_equation(eq: Expr) -> list[DerivMonomial]:
    """Collect one equation into derivative monomials; the degree-0 monomial
    carries the source term."""
    ctx = eq.ctx
    dset = set(ctx.deriv_syms)
    if eq.den.free_symbols & dset:
        raise PdeError("not polynomial in derivatives")
    buckets: dict[tuple, sp.Expr] = {}
    for term in sp.Add.make_args(eq.num):
        key, coeff = split_term(term, dset)
        buckets[key] = buckets.get(key, sp.S.Zero) + coeff
    out = []
    for key in sorted(buckets, key=lambda t: (len(t), tuple(s.name for s in t))):
        coeff = sp.expand(buckets[key])
        if coeff == 0:
            continue
        out.append(DerivMonomial(key, Expr(ctx, coeff / eq.den)))
    return out


def decompose(sys: PdeSystem) -> list[list[DerivMonomial]]:
    """Per-equation monomial decomposition; summing each list reproduces the equation."""
    return [decompose_equation(eq) for eq in sys.equations]


def degree_in_derivatives(sys: PdeSystem) -> list[int]:
    """Maximal monomial degree in the derivative symbols, per equation."""
    return [max(m.degree for m in mons) for mons in decompose(sys)]


def is_autonomous(sys: PdeSystem) -> bool:
    """True iff no independent variable appears in any coefficient."""
    xs = set(sys.ctx.indep_syms)
    return all(not eq.has_any(xs) for eq in sys.equations)


def homogeneity_degree(sys: PdeSystem) -> list[int | None]:
    """Per equation: the common monomial degree if the equation is polynomially
    homogeneous in the derivatives with no derivative-free term, else None."""
    out: list[int | None] = []
    for mons in decompose(sys):
        degrees = {m.degree for m in mons}
        if len(degrees) == 1 and 0 not in degrees:
            out.append(degrees.pop())
        else:
            out.append(None)
    return out


def is_quasilinear(sys: PdeSystem) -> bool:
    """True iff every equation has derivative-degree at most one."""
    return all(d <= 1 for d in degree_in_derivatives(sys))


def _det(entries: list[list[Expr]]) -> Expr:
    k = len(entries)
    if k == 1:
        return entries[0][0]
    acc = None
    for j in range(k):
        minor = [[entries[r][c] for c in range(k) if c != j] for r in range(1, k)]
        term = entries[0][j] * _det(minor)
        if j % 2:
            term = -term
        acc = term if acc is None else acc + term
    return acc


def gradient_minors(ctx: JetContext, order: int) -> list[Expr]:
    """All order x order minors of the m x n matrix of first derivatives.

    Order 1 lists the entries row-major.  For 3 x 3 matrices the order-2
    minors are labelled complementarily (minor k = 3*(i-1)+j omits row i and
    column j), matching the usual cofactor layout; every other shape lists
    row subsets then column subsets lexicographically.
    """
    if order < 1 or order > min(ctx.m, ctx.n):
        raise PdeError(f"minor order {order} out of range for a {ctx.m}x{ctx.n} gradient")
    if order == 1:
        return [ctx.du(a, i) for a in range(1, ctx.m + 1) for i in range(1, ctx.n + 1)]
    if (ctx.m, ctx.n, order) == (3, 3, 2):
        pairs = []
        for i in range(1, 4):
            for j in range(1, 4):
                rows = tuple(r for r in (1, 2, 3) if r != i)
                cols = tuple(c for c in (1, 2, 3) if c != j)
                pairs.append((rows, cols))
    else:
        rowsets = list(itertools.combinations(range(1, ctx.m + 1), order))
        colsets = list(itertools.combinations(range(1, ctx.n + 1), order))
        pairs = [(r, c) for r in rowsets for c in colsets]
    out = []
    for rows, cols in pairs:
        entries = [[ctx.du(a, i) for i in cols] for a in rows]
        out.append(_det(entries))
    return out

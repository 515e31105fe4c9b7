"""Exact symbolic kernel: jet contexts, canonical rational expressions,
chain-rule differentiation and linear solving over the rational-function field.

Everything is exact: coefficients are arbitrary-precision rationals and an
expression is stored as a canonical numerator/denominator pair of multivariate
polynomials.  Two expressions are equal as rational functions iff their
canonical pairs coincide, so equality is decidable by normalization alone.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

import sympy as sp

__all__ = [
    "SymcoreError",
    "ZeroDenominatorError",
    "NonlinearError",
    "UndeclaredSymbolError",
    "FunctionParameter",
    "JetContext",
    "Expr",
    "normalize",
    "diff",
    "substitute",
    "equals",
    "solve_linear",
    "LinearSolution",
    "canonical_condition",
]


class SymcoreError(ValueError):
    """Base error for the symbolic kernel."""


class ZeroDenominatorError(SymcoreError):
    """Raised when an expression has an identically vanishing denominator."""


class NonlinearError(SymcoreError):
    """Raised when an equation handed to the linear solver is not affine."""


class UndeclaredSymbolError(SymcoreError):
    """Raised when an operation refers to a symbol unknown to the context."""


_NAME_KINDS = ("independent", "dependent", "derivative", "parameter", "function", "function-partial")

ExprLike = Union["Expr", int, Fraction, sp.Expr]


@dataclass(frozen=True)
class FunctionParameter:
    """Opaque smooth function of a subset of the dependent variables.

    Partial derivatives are fresh symbols generated on demand; mixed partials
    are stored under a sorted argument multiset so f;u1,u2 == f;u2,u1.
    """

    name: str
    args: tuple[str, ...]

    def partial_name(self, arg_names: Sequence[str]) -> str:
        return self.name + ";" + ",".join(arg_names)


class JetContext:
    """Symbol table for a first-order jet space.

    Declares independent variables, dependent variables, the derivative
    coordinates du_alpha/dx_i, plain parameters and opaque function
    parameters.  All symbols live in one flat namespace; name clashes are
    rejected at construction time.
    """

    def __init__(
        self,
        n: int,
        m: int,
        indep: Sequence[str] | None = None,
        dep: Sequence[str] | None = None,
        params: Sequence[str] = (),
        funcs: Mapping[str, Sequence[str]] | None = None,
    ):
        if n < 1 or m < 1:
            raise SymcoreError("need at least one independent and one dependent variable")
        indep = tuple(indep) if indep is not None else tuple(f"x{i}" for i in range(1, n + 1))
        dep = tuple(dep) if dep is not None else tuple(f"u{a}" for a in range(1, m + 1))
        if len(indep) != n or len(dep) != m:
            raise SymcoreError("variable name count does not match (n, m)")
        self.n = n
        self.m = m
        self.indep_names = indep
        self.dep_names = dep
        self.param_names = tuple(params)
        self._funcs: dict[str, FunctionParameter] = {}

        self._kinds: dict[str, str] = {}
        self._syms: dict[str, sp.Symbol] = {}
        for name in indep:
            self._declare(name, "independent")
        for name in dep:
            self._declare(name, "dependent")
        self._deriv: dict[tuple[int, int], sp.Symbol] = {}
        self._deriv_index: dict[str, tuple[int, int]] = {}
        for a, i in itertools.product(range(1, m + 1), range(1, n + 1)):
            dn = f"{dep[a - 1]}_{indep[i - 1]}"
            s = self._declare(dn, "derivative")
            self._deriv[(a, i)] = s
            self._deriv_index[dn] = (a, i)
        for name in self.param_names:
            self._declare(name, "parameter")
        self._partials: dict[tuple[str, tuple[str, ...]], sp.Symbol] = {}
        self._partial_info: dict[str, tuple[str, tuple[str, ...]]] = {}
        for fname, fargs in (funcs or {}).items():
            fargs = tuple(fargs)
            bad = [a for a in fargs if self._kinds.get(a) != "dependent"]
            if bad:
                raise SymcoreError(f"function parameter {fname} argument(s) {bad} are not dependent variables")
            self._funcs[fname] = FunctionParameter(fname, fargs)
            self._declare(fname, "function")

    def _declare(self, name: str, kind: str) -> sp.Symbol:
        if name in self._kinds:
            raise SymcoreError(f"symbol name {name!r} already declared as {self._kinds[name]}")
        s = sp.Symbol(name)
        self._kinds[name] = kind
        self._syms[name] = s
        return s

    # -- symbol access -----------------------------------------------------

    def x(self, i: int) -> "Expr":
        return self._atom(self.indep_names[i - 1])

    def u(self, a: int) -> "Expr":
        return self._atom(self.dep_names[a - 1])

    def du(self, a: int, i: int) -> "Expr":
        """Jet coordinate for the first derivative of dependent a by independent i."""
        return Expr(self, self._deriv[(a, i)])

    def param(self, name: str) -> "Expr":
        if self._kinds.get(name) != "parameter":
            raise UndeclaredSymbolError(f"{name!r} is not a declared parameter")
        return self._atom(name)

    def func(self, name: str) -> "Expr":
        if self._kinds.get(name) != "function":
            raise UndeclaredSymbolError(f"{name!r} is not a declared function parameter")
        return self._atom(name)

    def func_partial(self, name: str, *arg_names: str) -> "Expr":
        return Expr(self, self.partial_symbol(name, arg_names))

    def _atom(self, name: str) -> "Expr":
        return Expr(self, self._syms[name])

    def sym(self, name: str) -> sp.Symbol:
        s = self._syms.get(name)
        if s is None:
            raise UndeclaredSymbolError(f"undeclared symbol {name!r}")
        return s

    def has(self, name: str) -> bool:
        return name in self._kinds

    @property
    def indep_syms(self) -> tuple[sp.Symbol, ...]:
        return tuple(self._syms[n] for n in self.indep_names)

    @property
    def dep_syms(self) -> tuple[sp.Symbol, ...]:
        return tuple(self._syms[n] for n in self.dep_names)

    @property
    def deriv_syms(self) -> tuple[sp.Symbol, ...]:
        """Row-major: all derivatives of u_1, then u_2, ..."""
        return tuple(self._deriv[(a, i)] for a in range(1, self.m + 1) for i in range(1, self.n + 1))

    def deriv_index(self, s: sp.Symbol) -> tuple[int, int]:
        try:
            return self._deriv_index[s.name]
        except KeyError:
            raise UndeclaredSymbolError(f"{s} is not a derivative symbol") from None

    def kind(self, s: sp.Symbol | str) -> str | None:
        name = s if isinstance(s, str) else s.name
        return self._kinds.get(name)

    def functions(self) -> tuple[FunctionParameter, ...]:
        return tuple(self._funcs.values())

    def function_info(self, s: sp.Symbol) -> tuple[FunctionParameter, tuple[str, ...]] | None:
        """Return (function, partial multiset) if s derives from a function parameter."""
        kind = self._kinds.get(s.name)
        if kind == "function":
            return self._funcs[s.name], ()
        if kind == "function-partial":
            fname, multiset = self._partial_info[s.name]
            return self._funcs[fname], multiset
        return None

    def partial_symbol(self, fname: str, arg_names: Sequence[str]) -> sp.Symbol:
        """Partial-derivative symbol of a function parameter, generated on demand."""
        fp = self._funcs.get(fname)
        if fp is None:
            raise UndeclaredSymbolError(f"{fname!r} is not a declared function parameter")
        for a in arg_names:
            if a not in fp.args:
                raise SymcoreError(f"{fname} does not depend on {a}")
        order = {name: k for k, name in enumerate(self.dep_names)}
        multiset = tuple(sorted(arg_names, key=order.__getitem__))
        if not multiset:
            return self._syms[fname]
        key = (fname, multiset)
        s = self._partials.get(key)
        if s is None:
            pname = fp.partial_name(multiset)
            s = self._declare(pname, "function-partial")
            self._partials[key] = s
            self._partial_info[pname] = key
        return s

    # -- derived contexts --------------------------------------------------

    def with_parameters(self, *names: str) -> "JetContext":
        """A copy of this context with extra plain parameters declared."""
        ctx = JetContext(
            self.n,
            self.m,
            self.indep_names,
            self.dep_names,
            self.param_names + tuple(names),
            {f.name: f.args for f in self._funcs.values()},
        )
        return ctx

    def _signature(self):
        return (
            self.indep_names,
            self.dep_names,
            frozenset(self.param_names),
            frozenset((f.name, f.args) for f in self._funcs.values()),
        )

    def compatible(self, other: "JetContext") -> bool:
        """Contexts agree on variables and each shared name has one declaration."""
        if self is other:
            return True
        if (self.indep_names, self.dep_names) != (other.indep_names, other.dep_names):
            return False
        shared = self._kinds.keys() & other._kinds.keys()
        return all(self._kinds[k] == other._kinds[k] for k in shared)

    def expr(self, value: ExprLike) -> "Expr":
        if isinstance(value, Expr):
            if not self.compatible(value.ctx):
                raise SymcoreError("expression belongs to an incompatible context")
            return Expr(self, value.as_sympy())
        if isinstance(value, Fraction):
            return Expr(self, sp.Rational(value.numerator, value.denominator))
        return Expr(self, sp.sympify(value, rational=True))

    def parse(self, source: str) -> "Expr":
        from .dsl import parse_expression

        return parse_expression(self, source)

    def __repr__(self):
        return f"JetContext(n={self.n}, m={self.m}, indep={self.indep_names}, dep={self.dep_names})"


def _canonical_pair(e: sp.Expr) -> tuple[sp.Expr, sp.Expr]:
    """Canonical (numerator, denominator): gcd-reduced, denominator with
    integer coprime coefficients and positive leading coefficient in graded
    lexicographic order over name-sorted symbols."""
    if e.has(sp.zoo, sp.nan, sp.oo, -sp.oo):
        raise ZeroDenominatorError("zero denominator")
    e = sp.cancel(sp.together(e))
    num, den = e.as_numer_denom()
    num = sp.expand(num)
    den = sp.expand(den)
    if den == 0:
        raise ZeroDenominatorError("zero denominator")
    if num == 0:
        return sp.S.Zero, sp.S.One
    syms = sorted(num.free_symbols | den.free_symbols, key=lambda s: s.name)
    if not syms:
        v = sp.Rational(num) / sp.Rational(den)
        return v, sp.S.One
    pnum = sp.Poly(num, *syms, domain="QQ")
    pden = sp.Poly(den, *syms, domain="QQ")
    cn, prim_n = pnum.primitive()
    cd, prim_d = pden.primitive()
    scale = sp.Rational(cn) / sp.Rational(cd)
    lead = sp.Poly(prim_d.as_expr(), *syms, domain="QQ", order="grlex").LC()
    if lead < 0:
        prim_d = -prim_d
        scale = -scale
    return sp.expand(scale * prim_n.as_expr()), prim_d.as_expr()


class Expr:
    """Immutable exact rational function over a jet context.

    Canonical invariants: gcd(num, den) = 1, the denominator has coprime
    integer coefficients with positive grlex-leading coefficient, and zero is
    represented uniquely as 0/1.  All arithmetic renormalizes.
    """

    __slots__ = ("ctx", "num", "den", "_hash")

    def __init__(self, ctx: JetContext, value: sp.Expr):
        self.ctx = ctx
        self.num, self.den = _canonical_pair(sp.sympify(value, rational=True))
        self._hash = None

    def as_sympy(self) -> sp.Expr:
        return self.num if self.den == 1 else self.num / self.den

    @property
    def free_symbols(self) -> frozenset:
        return frozenset(self.num.free_symbols | self.den.free_symbols)

    def is_zero(self) -> bool:
        return self.num == 0

    def is_rational_constant(self) -> bool:
        return not self.free_symbols

    def as_fraction(self) -> Fraction:
        if self.free_symbols:
            raise SymcoreError("expression is not a rational constant")
        v = sp.Rational(self.num) / sp.Rational(self.den)
        return Fraction(int(v.p), int(v.q))

    def has_any(self, syms: Iterable[sp.Symbol]) -> bool:
        return not self.free_symbols.isdisjoint(set(syms))

    # -- arithmetic --------------------------------------------------------

    def _coerce(self, other: ExprLike) -> "Expr":
        if isinstance(other, Expr):
            if not self.ctx.compatible(other.ctx):
                raise SymcoreError("operands belong to incompatible contexts")
            return other
        return self.ctx.expr(other)

    def __add__(self, other: ExprLike) -> "Expr":
        o = self._coerce(other)
        return Expr(self.ctx, (self.num * o.den + o.num * self.den) / (self.den * o.den))

    __radd__ = __add__

    def __neg__(self) -> "Expr":
        e = Expr.__new__(Expr)
        e.ctx, e.num, e.den, e._hash = self.ctx, sp.expand(-self.num), self.den, None
        return e

    def __sub__(self, other: ExprLike) -> "Expr":
        return self + (-self._coerce(other))

    def __rsub__(self, other: ExprLike) -> "Expr":
        return (-self) + other

    def __mul__(self, other: ExprLike) -> "Expr":
        o = self._coerce(other)
        return Expr(self.ctx, (self.num * o.num) / (self.den * o.den))

    __rmul__ = __mul__

    def __truediv__(self, other: ExprLike) -> "Expr":
        o = self._coerce(other)
        if o.num == 0:
            raise ZeroDenominatorError("zero denominator")
        return Expr(self.ctx, (self.num * o.den) / (self.den * o.num))

    def __rtruediv__(self, other: ExprLike) -> "Expr":
        return self._coerce(other) / self

    def __pow__(self, k: int) -> "Expr":
        if not isinstance(k, int):
            raise SymcoreError("only integer powers are supported")
        if k < 0:
            return self.ctx.expr(1) / self ** (-k)
        return Expr(self.ctx, self.num**k / self.den**k)

    def __eq__(self, other) -> bool:
        if not isinstance(other, (Expr, int, Fraction)):
            return NotImplemented
        o = self._coerce(other)
        return self.num == o.num and self.den == o.den

    def __hash__(self):
        if self._hash is None:
            self._hash = hash((self.num, self.den))
        return self._hash

    def __repr__(self):
        from .dsl import format_expr

        return f"Expr({format_expr(self)})"

    # -- calculus ----------------------------------------------------------

    def diff(self, s: sp.Symbol | str | "Expr") -> "Expr":
        return diff(self, s)

    def substitute(self, bindings: Mapping) -> "Expr":
        return substitute(self, bindings)


def normalize(e: Expr) -> Expr:
    """Identity on the canonical representation (idempotent by construction)."""
    return Expr(e.ctx, e.as_sympy())


def _as_symbol(ctx: JetContext, s) -> sp.Symbol:
    if isinstance(s, Expr):
        if len(s.free_symbols) == 1 and s.num in s.free_symbols and s.den == 1:
            s = s.num
        else:
            raise SymcoreError("expected a single symbol")
    if isinstance(s, str):
        return ctx.sym(s)
    if isinstance(s, sp.Symbol):
        if ctx.kind(s) is None:
            raise UndeclaredSymbolError(f"undeclared symbol {s}")
        return s
    raise SymcoreError(f"cannot interpret {s!r} as a symbol")


def diff(e: Expr, s) -> Expr:
    """Exact partial derivative.

    Function parameters obey the chain rule: differentiating by a dependent
    variable u_b sends f to its generated partial symbol f;u_b, and partials
    to the corresponding higher partials (symmetric in the mixed indices).
    """
    ctx = e.ctx
    sym = _as_symbol(ctx, s)
    raw = e.as_sympy()
    total = sp.diff(raw, sym)
    if ctx.kind(sym) == "dependent":
        for g in e.free_symbols:
            info = ctx.function_info(g)
            if info is None:
                continue
            fp, multiset = info
            if sym.name in fp.args:
                higher = ctx.partial_symbol(fp.name, multiset + (sym.name,))
                total += sp.diff(raw, g) * higher
    return Expr(ctx, total)


def substitute(e: Expr, bindings: Mapping) -> Expr:
    """Simultaneous substitution of declared symbols by expressions."""
    ctx = e.ctx
    table = {}
    for key, val in bindings.items():
        sym = _as_symbol(ctx, key)
        v = val if isinstance(val, Expr) else ctx.expr(val)
        table[sym] = v.as_sympy()
    if not table:
        return normalize(e)
    return Expr(ctx, e.as_sympy().subs(table, simultaneous=True))


def equals(e1: Expr, e2: ExprLike) -> bool:
    """True iff the two expressions are equal as rational functions."""
    if isinstance(e2, Expr) and not e1.ctx.compatible(e2.ctx):
        raise SymcoreError("cannot compare expressions from incompatible contexts")
    return (e1 - e2).is_zero()


@dataclass
class LinearSolution:
    """Parametric solution of an affine system over the rational-function field.

    `solution` maps each pivot unknown to an expression in the free unknowns
    and the remaining symbols; `free` lists the designated free unknowns;
    `residual` holds the unknown-free conditions left over by elimination
    (empty iff the system is consistent for all symbol values).
    """

    solution: dict[sp.Symbol, Expr]
    free: list[sp.Symbol]
    residual: list[Expr]

    @property
    def consistent(self) -> bool:
        return not self.residual


def _complexity(e: Expr) -> int:
    return sp.count_ops(e.num) + sp.count_ops(e.den)


def solve_linear(eqs: Sequence[Expr], unknowns: Sequence) -> LinearSolution:
    """Exact Gaussian elimination of equations affine in the unknowns.

    Pivots prefer rational constants, then low-complexity entries, so the
    leftover residual conditions stay close to their natural form.  The
    returned solution substitutes back to annihilate every equation.
    """
    eqs = list(eqs)
    if not eqs and not unknowns:
        return LinearSolution({}, [], [])
    ctx = eqs[0].ctx if eqs else None
    cols: list[sp.Symbol] = []
    for s in unknowns:
        if isinstance(s, Expr):
            ctx = ctx or s.ctx
        cols.append(_as_symbol(ctx, s) if ctx is not None else s)
    if ctx is None:
        raise SymcoreError("cannot infer context")
    colset = set(cols)

    rows: list[tuple[dict[int, Expr], Expr]] = []
    zero = ctx.expr(0)
    for eq in eqs:
        if eq.den.free_symbols & colset:
            raise NonlinearError("nonlinear in unknown")
        coeffs: dict[int, Expr] = {}
        num = Expr(ctx, eq.num)
        for j, s in enumerate(cols):
            c = Expr(ctx, sp.diff(eq.num, s))
            if c.is_zero():
                continue
            if c.free_symbols & colset:
                raise NonlinearError("nonlinear in unknown")
            coeffs[j] = c
        rhs = Expr(ctx, eq.num.subs({s: 0 for s in cols}))
        rows.append((coeffs, rhs))

    pivots: list[tuple[int, dict[int, Expr], Expr]] = []  # (col, row, rhs) in elimination order
    remaining = list(range(len(rows)))
    used_cols: set[int] = set()
    while True:
        best = None
        for ri in remaining:
            coeffs, _ = rows[ri]
            for j, c in coeffs.items():
                if j in used_cols:
                    continue
                score = (0 if c.is_rational_constant() else 1, len(coeffs), _complexity(c), ri, j)
                if best is None or score < best[0]:
                    best = (score, ri, j)
        if best is None:
            break
        _, ri, j = best
        coeffs, rhs = rows[ri]
        piv = coeffs[j]
        remaining.remove(ri)
        used_cols.add(j)
        for rk in remaining:
            ck, rhsk = rows[rk]
            factor = ck.pop(j, None)
            if factor is None:
                continue
            ratio = factor / piv
            for jj, c in coeffs.items():
                if jj == j:
                    continue
                ck[jj] = ck.get(jj, zero) - ratio * c
                if ck[jj].is_zero():
                    del ck[jj]
            rows[rk] = (ck, rhsk - ratio * rhs)
        pivots.append((j, coeffs, rhs))

    residual = []
    for ri in remaining:
        _, rhs = rows[ri]
        if not rhs.is_zero():
            residual.append(rhs)

    free = [cols[j] for j in range(len(cols)) if j not in used_cols]
    solution: dict[sp.Symbol, Expr] = {}
    for j, coeffs, rhs in reversed(pivots):
        piv = coeffs[j]
        acc = -rhs
        for jj, c in coeffs.items():
            if jj == j:
                continue
            val = solution.get(cols[jj])
            if val is None:
                val = ctx.expr(cols[jj])
            acc = acc - c * val
        solution[cols[j]] = acc / piv
    return LinearSolution(solution, free, residual)


def canonical_condition(e: Expr) -> Expr:
    """Polynomial condition equivalent to e = 0: the numerator made primitive
    with positive grlex-leading coefficient.  Used to compare condition sets."""
    if e.is_zero():
        return e
    syms = sorted(e.num.free_symbols, key=lambda s: s.name)
    if not syms:
        return e.ctx.expr(1)
    p = sp.Poly(e.num, *syms, domain="QQ")
    _, prim = p.primitive()
    if sp.Poly(prim.as_expr(), *syms, domain="QQ", order="grlex").LC() < 0:
        prim = -prim
    return Expr(e.ctx, prim.as_expr())

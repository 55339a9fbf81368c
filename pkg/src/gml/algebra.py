"""Exact polynomial and rational-function arithmetic over QQ.

Polynomials are sympy ``PolyElement`` objects living in a ring with graded
lexicographic order on a declared variable list; rational functions are the
matching ``FracElement`` objects.  This module adds what the rest of the
package needs on top: a text syntax that round-trips, resultants with a
Sylvester cross-check, factorization with a size cap, and canonical
numerator/denominator pairs.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

from sympy.polys.domains import QQ
from sympy.polys.fields import FracElement, FracField
from sympy.polys.orderings import grlex
from sympy.polys.rings import PolyElement, PolyRing

MultivariatePolynomial = PolyElement
RationalFunction = FracElement

DEFAULT_FACTOR_DEGREE_CAP = 12
DEFAULT_FACTOR_VARIABLE_CAP = 6


class AlgebraError(ValueError):
    pass


@lru_cache(maxsize=None)
def _field(names: tuple[str, ...]) -> FracField:
    if len(set(names)) != len(names):
        raise AlgebraError(f"duplicate variable names in {names}")
    return FracField(names, QQ, grlex)


def frac_field(names: Iterable[str]) -> FracField:
    """Field of rational functions in ``names`` (cached per variable tuple)."""
    return _field(tuple(names))


def poly_ring(names: Iterable[str]) -> PolyRing:
    """Polynomial ring in ``names``; shares its identity with ``frac_field``."""
    return _field(tuple(names)).ring


def var_names(obj) -> tuple[str, ...]:
    r = obj.field if isinstance(obj, FracElement) else obj.ring
    return tuple(str(v) for v in r.symbols)


def gen(ring: PolyRing, name: str) -> PolyElement:
    try:
        return ring.gens[var_names(ring.zero).index(name)]
    except ValueError:
        raise AlgebraError(f"variable {name!r} not in {var_names(ring.zero)}") from None


def to_ring(p: PolyElement, ring: PolyRing) -> PolyElement:
    """Move ``p`` into ``ring`` by variable name (missing variables are an error)."""
    if p.ring is ring:
        return p
    src = var_names(p)
    dst = var_names(ring.zero)
    try:
        idx = [dst.index(n) for n in src]
    except ValueError:
        missing = [n for n in src if n not in dst]
        # a variable may be absent from the target when p does not depend on it
        used = {src[i] for mono in p.keys() for i, e in enumerate(mono) if e}
        if used & set(missing):
            raise AlgebraError(f"cannot map {sorted(used & set(missing))} into {dst}") from None
        idx = [dst.index(n) if n in dst else None for n in src]
    out = {}
    for mono, c in p.items():
        new = [0] * len(dst)
        for i, e in enumerate(mono):
            if e:
                new[idx[i]] = e
        out[tuple(new)] = c
    return ring.from_dict(out)


def to_field(f, K: FracField) -> FracElement:
    if isinstance(f, FracElement):
        if f.field is K:
            return f
        return K.new(to_ring(f.numer, K.ring), to_ring(f.denom, K.ring))
    if isinstance(f, PolyElement):
        return K.new(to_ring(f, K.ring), K.ring.one)
    return K(f)


def depends_on(p: PolyElement) -> set[str]:
    names = var_names(p)
    return {names[i] for mono in p.keys() for i, e in enumerate(mono) if e}


# ---------------------------------------------------------------------------
# text syntax

_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z_][A-Za-z_0-9]*)|(\*\*|[-+*/^()]))")


def _tokenize(text: str) -> list[tuple[str, str]]:
    pos, out = 0, []
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise AlgebraError(f"unexpected character at {pos} in {text!r}")
        num, ident, op = m.groups()
        if num is not None:
            out.append(("num", num))
        elif ident is not None:
            out.append(("id", ident))
        else:
            out.append(("op", "^" if op == "**" else op))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, text: str, K: FracField):
        self.toks = _tokenize(text)
        self.i = 0
        self.K = K
        self.names = var_names(K.one)

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None)

    def take(self, value=None):
        tok = self.peek()
        if tok[0] is None or (value is not None and tok[1] != value):
            raise AlgebraError(f"expected {value or 'token'} at token {self.i}")
        self.i += 1
        return tok

    def parse(self):
        if not self.toks:
            raise AlgebraError("empty expression")
        v = self.expr()
        if self.i != len(self.toks):
            raise AlgebraError(f"trailing input at token {self.i}")
        return v

    def expr(self):
        v = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            rhs = self.term()
            v = v + rhs if op == "+" else v - rhs
        return v

    def term(self):
        v = self.unary()
        while True:
            tok = self.peek()
            if tok in (("op", "*"), ("op", "/")):
                self.take()
                rhs = self.unary()
                if tok[1] == "*":
                    v = v * rhs
                else:
                    if rhs == 0:
                        raise AlgebraError("division by zero")
                    v = v / rhs
            elif tok[0] in ("num", "id") or tok == ("op", "("):
                v = v * self.unary()  # implicit multiplication
            else:
                return v

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take()
            return -self.unary()
        if self.peek() == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            neg = False
            if self.peek() == ("op", "-"):
                self.take()
                neg = True
            kind, val = self.take()
            if kind != "num":
                raise AlgebraError("exponent must be an integer literal")
            e = int(val)
            base = base ** e
            if neg:
                base = 1 / base
        return base

    def atom(self):
        kind, val = self.take()
        if kind == "num":
            return self.K(int(val))
        if kind == "id":
            if val not in self.names:
                raise AlgebraError(f"unknown variable {val!r}; declared {list(self.names)}")
            return self.K.gens[self.names.index(val)]
        if val == "(":
            v = self.expr()
            self.take(")")
            return v
        raise AlgebraError(f"unexpected {val!r}")


def parse_ratfun(text: str, K: FracField) -> FracElement:
    return _Parser(text, K).parse()


def parse_poly(text: str, ring: PolyRing) -> PolyElement:
    """Parse the text syntax (``s^2 - 2*s*m1 + m1^2``) into ``ring``."""
    K = _field(var_names(ring.zero))
    f = parse_ratfun(text, K)
    if not f.denom.is_ground:
        raise AlgebraError(f"{text!r} is not a polynomial")
    return to_ring(f.numer * (1 / QQ(f.denom.LC)), ring)


def _format_monomial(mono, names) -> str:
    parts = []
    for n, e in zip(names, mono):
        if e == 1:
            parts.append(n)
        elif e:
            parts.append(f"{n}^{e}")
    return "*".join(parts)


def format_poly(p: PolyElement) -> str:
    """Print in the text syntax; terms in descending graded-lex order."""
    if not p:
        return "0"
    names = var_names(p)
    out = []
    for mono, c in p.terms():
        c = Fraction(int(c.numerator), int(c.denominator))
        sign = "-" if c < 0 else "+"
        c = abs(c)
        m = _format_monomial(mono, names)
        if not m:
            body = str(c)
        elif c == 1:
            body = m
        elif c.denominator == 1:
            body = f"{c}*{m}"
        else:
            body = f"{c.numerator}/{c.denominator}*{m}"
        out.append((sign, body))
    text = ("-" if out[0][0] == "-" else "") + out[0][1]
    for sign, body in out[1:]:
        text += f" {sign} {body}"
    return text


def canonical_parts(f: FracElement) -> tuple[PolyElement, PolyElement]:
    """(num, den) with den of primitive integer content and positive leading coefficient."""
    num, den = f.numer, f.denom
    if not num:
        return num, den.ring.one
    c, den_z = den.clear_denoms()
    content, den_p = den_z.primitive()
    scale = QQ(content) / QQ(c)
    if den_p.LC < 0:
        den_p, scale = -den_p, -scale
    return num * (1 / scale), den_p


def integer_parts(f: FracElement) -> tuple[PolyElement, PolyElement]:
    """(num, den) both with integer coefficients, den positive leading coefficient."""
    num, den = canonical_parts(f)
    c, num_z = num.clear_denoms()
    return num_z, den * c


def format_ratfun(f) -> str:
    if isinstance(f, PolyElement):
        return format_poly(f)
    num, den = integer_parts(f)
    ns = format_poly(num)
    if den == 1:
        return ns
    ds = format_poly(den)
    if len(num) > 1:
        ns = f"({ns})"
    if len(den) > 1 or den.LC != 1 or sum(den.LM) > 1:
        ds = f"({ds})"
    return f"{ns}/{ds}"


# ---------------------------------------------------------------------------
# resultants


def _front_ring(ring: PolyRing, var: str) -> PolyRing:
    names = var_names(ring.zero)
    return poly_ring((var,) + tuple(n for n in names if n != var))


def _check_resultant_input(p: PolyElement, q: PolyElement, var: str) -> int:
    if p.ring is not q.ring:
        raise AlgebraError("resultant operands must share a ring")
    names = var_names(p)
    if var not in names:
        raise AlgebraError(f"{var!r} is not a variable of {names}")
    i = names.index(var)
    if max(p.degree(i), 0) == 0 and max(q.degree(i), 0) == 0:
        raise AlgebraError(f"both operands are constant in {var!r}; resultant undefined")
    return i


def poly_resultant(p: PolyElement, q: PolyElement, var: str) -> PolyElement:
    """Resultant of ``p`` and ``q`` with respect to ``var`` (subresultant PRS).

    The result lives in the input ring and does not involve ``var``.
    """
    _check_resultant_input(p, q, var)
    R2 = _front_ring(p.ring, var)
    r = to_ring(p, R2).resultant(to_ring(q, R2))
    r = R2(r) if not isinstance(r, PolyElement) else r
    return to_ring(r, p.ring)


def coefficients_in(p: PolyElement, i: int) -> list[PolyElement]:
    """Coefficients of ``p`` as a polynomial in generator ``i``, highest degree first."""
    deg = max(p.degree(i), 0)
    coeffs = [dict() for _ in range(deg + 1)]
    for mono, c in p.items():
        e = mono[i]
        m = list(mono)
        m[i] = 0
        coeffs[deg - e][tuple(m)] = c
    return [p.ring.from_dict(c) for c in coeffs]


def bareiss_det(mat: list[list[PolyElement]], ring: PolyRing) -> PolyElement:
    """Fraction-free determinant over a polynomial ring."""
    a = [row[:] for row in mat]
    n = len(a)
    if n == 0:
        return ring.one
    sign = 1
    prev = ring.one
    for k in range(n - 1):
        if not a[k][k]:
            for r in range(k + 1, n):
                if a[r][k]:
                    a[k], a[r] = a[r], a[k]
                    sign = -sign
                    break
            else:
                return ring.zero
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]).exquo(prev)
        prev = a[k][k]
    return a[n - 1][n - 1] * sign


def sylvester_resultant(p: PolyElement, q: PolyElement, var: str) -> PolyElement:
    """Resultant as the determinant of the Sylvester matrix (independent route)."""
    i = _check_resultant_input(p, q, var)
    a = coefficients_in(p, i)
    b = coefficients_in(q, i)
    m, n = len(a) - 1, len(b) - 1
    size = m + n
    if size == 0:
        return p.ring.one
    zero = p.ring.zero
    rows = []
    for r in range(n):
        rows.append([zero] * r + a + [zero] * (size - m - 1 - r))
    for r in range(m):
        rows.append([zero] * r + b + [zero] * (size - n - 1 - r))
    return bareiss_det(rows, p.ring)


# ---------------------------------------------------------------------------
# factorization


@dataclass
class Factorization:
    """``constant * prod(f**k for f, k in factors) * prod(unfactored)``."""

    constant: object
    factors: list[tuple[PolyElement, int]]
    unfactored: list[tuple[PolyElement, int]] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return not self.unfactored

    def expand(self) -> PolyElement:
        ring = (self.factors or self.unfactored or [(None, 0)])[0][0]
        acc = ring.ring.one * self.constant if ring is not None else self.constant
        for f, k in self.factors + self.unfactored:
            acc = acc * f ** k
        return acc


def total_degree(p: PolyElement) -> int:
    """Total degree; -1 for the zero polynomial."""
    return max((sum(m) for m in p.itermonoms()), default=-1)


def primitive_part(p: PolyElement) -> tuple[object, PolyElement]:
    """(c, q) with p = c*q, q integer-primitive with positive leading coefficient."""
    c, pz = p.clear_denoms()
    content, q = pz.primitive()
    scale = QQ(content) / QQ(c)
    if q.LC < 0:
        q, scale = -q, -scale
    return scale, q


def poly_factor(
    p: PolyElement,
    max_degree: int = DEFAULT_FACTOR_DEGREE_CAP,
    max_vars: int = DEFAULT_FACTOR_VARIABLE_CAP,
) -> Factorization:
    """Factor ``p`` into irreducibles over QQ.

    Squarefree parts whose total degree or variable count exceed the caps are
    returned in ``unfactored`` instead of being split.
    """
    if not p:
        raise AlgebraError("cannot factor the zero polynomial")
    const, prim = primitive_part(p)
    if prim.is_ground:
        return Factorization(const * prim.LC, [])
    factors, unfactored = [], []
    _, sqf = prim.sqf_list()
    for part, k in sqf:
        c, part = primitive_part(part)
        const *= c ** k
        if part.is_ground:
            const *= part.LC ** k
            continue
        if total_degree(part) > max_degree or len(depends_on(part)) > max_vars:
            unfactored.append((part, k))
            continue
        c2, pieces = part.factor_list()
        const *= QQ(c2) ** k
        for f, j in pieces:
            c3, f = primitive_part(f)
            const *= c3 ** (k * j)
            factors.append((f, k * j))
    # exact bookkeeping of the constant
    acc = p.ring.one
    for f, k in factors + unfactored:
        acc *= f ** k
    const = QQ(p.LC) / QQ(acc.LC)
    factors.sort(key=lambda fk: (total_degree(fk[0]), format_poly(fk[0])))
    return Factorization(const, factors, unfactored)


def normalize_factor(p: PolyElement) -> PolyElement:
    return primitive_part(p)[1]


def same_up_to_constant(p: PolyElement, q: PolyElement) -> bool:
    return normalize_factor(p) == normalize_factor(q)


def ratfun_normalize(num: PolyElement, den: PolyElement) -> FracElement:
    """Canonical rational function num/den in the field over the same variables."""
    if not den:
        raise AlgebraError("zero denominator")
    if num.ring is not den.ring:
        raise AlgebraError("numerator and denominator must share a ring")
    K = _field(var_names(num))
    return K.new(to_ring(num, K.ring), to_ring(den, K.ring))


def ratfun_diff(f: FracElement, var: str) -> FracElement:
    return f.diff(f.field.gens[var_names(f).index(var)])


def substitute(f, values: dict[str, object]):
    """Substitute rational values for variables by name (result keeps the ring)."""
    if isinstance(f, FracElement):
        return f.field.new(substitute(f.numer, values), substitute(f.denom, values))
    names = var_names(f)
    pairs = [(f.ring.gens[names.index(n)], QQ(v) if not isinstance(v, PolyElement) else v)
             for n, v in values.items() if n in names]
    return f.subs(pairs) if pairs else f


def to_fraction(c) -> Fraction:
    c = QQ.convert(c)
    return Fraction(int(c.numerator), int(c.denominator))


def ground_value(f) -> Fraction:
    """Rational value of a constant polynomial or rational function."""
    if isinstance(f, FracElement):
        if not f.numer.is_ground or not f.denom.is_ground:
            raise AlgebraError(f"{format_ratfun(f)} is not constant")
        return to_fraction(f.numer.LC) / to_fraction(f.denom.LC) if f.numer else Fraction(0)
    if not f.is_ground:
        raise AlgebraError(f"{format_poly(f)} is not constant")
    return to_fraction(f.LC) if f else Fraction(0)


def total_degree_in(p: PolyElement, names: Sequence[str]) -> int:
    idx = [i for i, n in enumerate(var_names(p)) if n in names]
    return max((sum(m[i] for i in idx) for m in p.keys()), default=0)


def qq_solve(rows: list[list], rhs: list) -> list | None:
    """One solution of ``rows * x = rhs`` over QQ (free unknowns set to 0), or None."""
    from sympy.polys.matrices import DomainMatrix

    if not rows:
        return None if any(rhs) else []
    n = len(rows[0])
    aug = DomainMatrix([[QQ(c) for c in r] + [QQ(b)] for r, b in zip(rows, rhs)], (len(rows), n + 1), QQ)
    red, pivots = aug.rref()
    if n in pivots:
        return None
    red = red.to_list()
    x = [QQ(0)] * n
    for i, p in enumerate(pivots):
        x[p] = red[i][n]
    return x


def qq_nullspace(rows: list[list], ncols: int) -> list[list]:
    """Basis of the right kernel over QQ, in reduced form (deterministic)."""
    from sympy.polys.matrices import DomainMatrix

    if not rows:
        return [[QQ(int(i == j)) for j in range(ncols)] for i in range(ncols)]
    M = DomainMatrix([[QQ(c) for c in r] for r in rows], (len(rows), ncols), QQ)
    return [list(v) for v in M.nullspace().to_list()]

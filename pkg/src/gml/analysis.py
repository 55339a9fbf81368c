"""Checks on a connection d/dx f = A_x f: pole divisor, flatness, behaviour at
infinity, partial fractions over a divisor, and a numeric cross-check against
Feynman-parameter quadrature.
"""
from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath

from .algebra import (
    AlgebraError,
    depends_on,
    format_poly,
    format_ratfun,
    gen,
    ground_value,
    poly_factor,
    poly_ring,
    primitive_part,
    qq_solve,
    ratfun_diff,
    substitute,
    to_ring,
    var_names,
)
from .graph import symanzik_polynomials

PARAMETERS = ("d",)


class ForeignFactor(AlgebraError):
    """A denominator factor outside the supplied divisor."""

    code = "analysis/foreign-factor"

    def __init__(self, factor):
        self.factor = factor
        super().__init__(f"denominator factor {format_poly(factor)} is not in the divisor")


class NumericError(RuntimeError):
    code = "analysis/numeric"


def _divisor_polys(divisor) -> list:
    return [getattr(L, "poly", L) for L in divisor]


def _is_parameter(f, parameters) -> bool:
    return depends_on(f) <= set(parameters)


def _key(f):
    return primitive_part(f)[1]


# -- partial fractions -------------------------------------------------------

@dataclass
class PartialFractionTerm:
    numerator: object
    components: tuple[int, ...]
    exponents: tuple[int, ...] = ()

    def value(self, divisor):
        K = self.numerator.field
        den = K.one
        for i, e in zip(self.components, self.exponents or (1,) * len(self.components)):
            den *= K(to_ring(divisor[i], K.ring)) ** e
        return self.numerator / den

    def to_json(self, divisor) -> dict:
        return {"numerator": format_ratfun(self.numerator),
                "components": [format_poly(divisor[i]) for i in self.components],
                "exponents": list(self.exponents)}


def _monomials(n: int, deg: int):
    for total in range(deg + 1):
        for c in itertools.combinations_with_replacement(range(n), total):
            e = [0] * n
            for i in c:
                e[i] += 1
            yield tuple(e)


def nullstellensatz_certificate(polys, max_degree: int = 4):
    """Polynomials h with sum h_i p_i = 1, or None if none of degree <= max_degree exists."""
    ring = polys[0].ring
    names = sorted(set().union(*(depends_on(p) for p in polys)), key=var_names(polys[0]).index)
    idx = [var_names(polys[0]).index(n) for n in names]

    def full(e):
        m = [0] * ring.ngens
        for i, k in zip(idx, e):
            m[i] = k
        return tuple(m)

    for D in range(max_degree + 1):
        monos = [full(e) for e in _monomials(len(names), D)]
        cols = [(i, m) for i in range(len(polys)) for m in monos]
        eq_index: dict = {}
        entries: dict = {}
        for c, (i, m) in enumerate(cols):
            for pm, coeff in polys[i].terms():
                prod = tuple(a + b for a, b in zip(pm, m))
                r = eq_index.setdefault(prod, len(eq_index))
                entries[(r, c)] = coeff
        zero = tuple([0] * ring.ngens)
        eq_index.setdefault(zero, len(eq_index))
        rows = [[0] * len(cols) for _ in eq_index]
        for (r, c), v in entries.items():
            rows[r][c] = v
        rhs = [0] * len(eq_index)
        rhs[eq_index[zero]] = 1
        sol = qq_solve(rows, rhs)
        if sol is None:
            continue
        hs = [ring.zero] * len(polys)
        for (i, m), v in zip(cols, sol):
            if v:
                hs[i] += ring({m: v})
        return hs
    return None


def leinartas_decompose(entry, divisor, parameters=PARAMETERS, max_certificate_degree: int = 4):
    """Split ``entry`` into terms N / prod L_i^e_i whose components have a common zero.

    ``divisor`` is a list of polynomials (or Landau polynomials).  Factors
    depending only on ``parameters`` count as constants.  Raises ForeignFactor
    when the denominator has a factor outside the divisor.
    """
    K = entry.field
    R = K.ring
    comps = [_key(to_ring(p, R)) for p in _divisor_polys(divisor)]
    if not entry:
        return []
    fac = poly_factor(entry.denom)
    if fac.unfactored:
        raise AlgebraError("denominator exceeds the factorization caps")
    scalar = K(R(fac.constant))
    exps = [0] * len(comps)
    for f, m in fac.factors:
        if _is_parameter(f, parameters):
            scalar *= K(f) ** m
            continue
        try:
            exps[comps.index(_key(f))] += m
        except ValueError:
            raise ForeignFactor(f) from None
    terms = {tuple(exps): K(entry.numer) / scalar}
    certs: dict = {}

    def certificate(support):
        if support not in certs:
            certs[support] = nullstellensatz_certificate([comps[i] for i in support], max_certificate_degree)
        return certs[support]

    changed = True
    while changed:
        changed = False
        for e, num in sorted(terms.items()):
            support = tuple(i for i, k in enumerate(e) if k)
            if len(support) < 2 or certificate(support) is None:
                continue
            del terms[e]
            for i, h in zip(support, certificate(support)):
                if not h:
                    continue
                e2 = list(e)
                e2[i] -= 1
                _merge(terms, tuple(e2), num * K(h))
            changed = True
            break
    # cancel components dividing the numerator
    changed = True
    while changed:
        changed = False
        for e, num in sorted(terms.items()):
            for i, k in enumerate(e):
                if not k:
                    continue
                q, r = divmod(num.numer, comps[i])
                if r:
                    continue
                del terms[e]
                e2 = list(e)
                e2[i] -= 1
                _merge(terms, tuple(e2), K.new(q, num.denom))
                changed = True
                break
            if changed:
                break
    out = []
    for e, num in sorted(terms.items(), key=lambda kv: (sum(kv[0]), kv[0])):
        support = tuple(i for i, k in enumerate(e) if k)
        out.append(PartialFractionTerm(num, support, tuple(e[i] for i in support)))
    return out


def _merge(terms, e, num):
    total = terms.get(e, num.field.zero) + num
    if total:
        terms[e] = total
    else:
        terms.pop(e, None)


# -- pole structure ----------------------------------------------------------

@dataclass
class PoleReport:
    findings: list = field(default_factory=list)
    entries_checked: int = 0

    @property
    def verdict(self) -> bool:
        return not self.findings

    def to_json(self) -> dict:
        return {"verdict": self.verdict, "entries_checked": self.entries_checked, "findings": self.findings}


def check_pole_structure(connection, divisor, parameters=PARAMETERS) -> PoleReport:
    """Every denominator factor must be a divisor member, to the first power per entry."""
    report = PoleReport()
    cache: dict = {}
    keys = None
    for A in connection:
        for i, row in enumerate(A.entries):
            for j, f in enumerate(row):
                if not f:
                    continue
                report.entries_checked += 1
                if keys is None:
                    keys = {_key(to_ring(p, f.field.ring)) for p in _divisor_polys(divisor)}
                den = f.denom
                if den not in cache:
                    cache[den] = poly_factor(den)
                fac = cache[den]
                where = {"invariant": A.invariant, "row": i, "col": j}
                for g, m in fac.unfactored:
                    report.findings.append({**where, "kind": "unfactored", "factor": format_poly(g),
                                            "multiplicity": m})
                for g, m in fac.factors:
                    if _is_parameter(g, parameters):
                        continue
                    if g not in keys:
                        report.findings.append({**where, "kind": "foreign", "factor": format_poly(g),
                                                "multiplicity": m})
                    elif m > 1:
                        report.findings.append({**where, "kind": "multiplicity", "factor": format_poly(g),
                                                "multiplicity": m})
    return report


# -- flatness ----------------------------------------------------------------

@dataclass
class FlatnessReport:
    findings: list = field(default_factory=list)
    pairs_checked: int = 0

    @property
    def verdict(self) -> bool:
        return not self.findings

    def to_json(self) -> dict:
        return {"verdict": self.verdict, "pairs_checked": self.pairs_checked, "findings": self.findings}


def _matmul(A, B, zero):
    n, m, p = len(A), len(B), len(B[0])
    out = []
    for i in range(n):
        row = []
        for k in range(p):
            acc = zero
            for j in range(m):
                if A[i][j] and B[j][k]:
                    acc += A[i][j] * B[j][k]
            row.append(acc)
        out.append(row)
    return out


def curvature(Ax, x: str, Ay, y: str):
    """d_x A_y - d_y A_x - [A_x, A_y]."""
    zero = Ax.entries[0][0].field.zero
    P = _matmul(Ax.entries, Ay.entries, zero)
    Q = _matmul(Ay.entries, Ax.entries, zero)
    n = len(P)
    return [[ratfun_diff(Ay.entries[i][j], x) - ratfun_diff(Ax.entries[i][j], y) - (P[i][j] - Q[i][j])
             for j in range(n)] for i in range(n)]


def check_flatness(connection) -> FlatnessReport:
    report = FlatnessReport()
    sizes = {(len(A.entries), *(len(r) for r in A.entries)) for A in connection}
    if len({s for t in sizes for s in t}) > 1:
        raise ValueError("connection matrices have inconsistent dimensions")
    for Ax, Ay in itertools.combinations(connection, 2):
        report.pairs_checked += 1
        M = curvature(Ax, Ax.invariant, Ay, Ay.invariant)
        for i, row in enumerate(M):
            for j, r in enumerate(row):
                if r:
                    report.findings.append({"pair": [Ax.invariant, Ay.invariant], "row": i, "col": j,
                                            "residual": format_ratfun(r)})
    return report


# -- regularity at infinity --------------------------------------------------

T = "_t"


@dataclass
class InfinityReport:
    seed: int
    lines: list = field(default_factory=list)
    findings: list = field(default_factory=list)
    resampled: int = 0

    @property
    def verdict(self) -> bool:
        return not self.findings and bool(self.lines)

    def to_json(self) -> dict:
        return {"verdict": self.verdict, "seed": self.seed, "lines": self.lines,
                "resampled": self.resampled, "findings": self.findings}


def _random_rational(rng):
    return Fraction(rng.randint(-9, 9), rng.randint(1, 3))


def restrict_to_line(connection, a: dict, b: dict):
    """A(t) = sum_x b_x A_x(a + b t) as rational functions in t (and parameters)."""
    K0 = connection[0].entries[0][0].field
    names = var_names(K0.one)
    R = poly_ring(names + (T,))
    K = R.to_field()
    t = gen(R, T)
    subs = [(gen(R, x), R(a[x]) + R(b[x]) * t) for x in a]
    n = len(connection[0].entries)
    out = [[K.zero] * n for _ in range(n)]
    for A in connection:
        for i in range(n):
            for j in range(n):
                f = A.entries[i][j]
                if not f or not b[A.invariant]:
                    continue
                den = to_ring(f.denom, R).compose(subs)
                if not den:
                    return None
                out[i][j] += K.new(to_ring(f.numer, R).compose(subs), den) * b[A.invariant]
    return out, R.gens.index(t)


def pole_order_at_infinity(f, ti: int) -> int | None:
    """Order of the pole at w = 0 of f(1/w) d(1/w)/dw; None for f = 0."""
    if not f:
        return None
    return 2 + f.numer.degree(ti) - f.denom.degree(ti)


def check_regularity_at_infinity(connection, line_count: int = 10, seed: int = 0,
                                 max_resample: int = 50) -> InfinityReport:
    if not connection:
        raise ValueError("empty connection")
    rng = random.Random(seed)
    invariants = [A.invariant for A in connection]
    report = InfinityReport(seed)
    while len(report.lines) < line_count:
        a = {x: _random_rational(rng) for x in invariants}
        b = {x: _random_rational(rng) for x in invariants}
        if not any(b.values()):
            continue
        res = restrict_to_line(connection, a, b)
        if res is None:
            report.resampled += 1
            if report.resampled > max_resample:
                raise RuntimeError("too many lines inside the polar divisor")
            continue
        M, ti = res
        line = len(report.lines)
        worst = 0
        for i, row in enumerate(M):
            for j, f in enumerate(row):
                k = pole_order_at_infinity(f, ti)
                if k is None:
                    continue
                worst = max(worst, k)
                if k > 1:
                    report.findings.append({"line": line, "row": i, "col": j, "pole_order": k})
        report.lines.append({"a": {x: str(v) for x, v in a.items()}, "b": {x: str(v) for x, v in b.items()},
                             "pole_order": worst})
    return report


# -- numeric validation ------------------------------------------------------

def _simplex_point(u):
    """Map a point of the unit cube to the simplex; returns (alphas, jacobian)."""
    alphas, rest, jac = [], mpmath.mpf(1), mpmath.mpf(1)
    for x in u:
        alphas.append(rest * x)
        jac *= rest
        rest *= 1 - x
    alphas.append(rest)
    return alphas, jac


def _mp(v) -> mpmath.mpf:
    v = Fraction(v)
    return mpmath.mpf(v.numerator) / v.denominator


def evaluate_integral(family, nu, point: dict, d_value, dps: int = 30):
    """Value of I(nu) up to the common factor i pi^(d/2), from its parametric form.

    I = (-1)^|nu| Gamma(|nu| - L d/2) / prod Gamma(nu_j)
        * int_simplex prod a^(nu-1) U^(|nu| - (L+1) d/2) F^(-(|nu| - L d/2)).
    Requires a Euclidean point (F > 0 inside the simplex) and nu >= 0.
    """
    if any(n < 0 for n in nu):
        raise NumericError("numerator indices are not supported by the quadrature")
    U, F = symanzik_polynomials(family.graph)
    R = U.ring
    with mpmath.workdps(dps):
        d = _mp(d_value)
        L = family.loops
        total = sum(nu)
        a = total - L * d / 2
        if a <= 0 and a == int(a):
            raise NumericError(f"Gamma({mpmath.nstr(a, 6)}) pole: I{tuple(nu)} diverges at d = {d_value}")
        active = [j for j, n in enumerate(nu) if n > 0]
        names = [f"alpha{family.propagators[j].edge}" for j in active]
        zero = {f"alpha{p.edge}": 0 for j, p in enumerate(family.propagators) if j not in active}
        Us, Fs = substitute(U, {**zero, **point}), substitute(F, {**zero, **point})
        idx = [var_names(Us).index(n) for n in names]

        def compiled(p):
            return [(_mp(Fraction(int(c.numerator), int(c.denominator))), [(k, mono[i]) for k, i in enumerate(idx) if mono[i]])
                    for mono, c in p.terms()]

        cU, cF = compiled(Us), compiled(Fs)

        def ev(terms, al):
            return mpmath.fsum(c * mpmath.fprod(al[k] ** e for k, e in powers) for c, powers in terms)

        bary = [mpmath.mpf(1) / len(active)] * len(active)
        if ev(cF, bary) <= 0:
            raise NumericError("point is outside the Euclidean region (F <= 0 inside the simplex)")
        pref = (-1) ** total * mpmath.gamma(a) / mpmath.fprod(mpmath.gamma(nu[j]) for j in active)
        eU, eF = total - (L + 1) * d / 2, -a

        def integrand(*u):
            al, jac = _simplex_point(u)
            val = jac * ev(cU, al) ** eU * ev(cF, al) ** eF
            for j, x in zip(active, al):
                if nu[j] != 1:
                    val *= x ** (nu[j] - 1)
            return val

        if len(active) == 1:
            return pref * integrand()
        val, err = mpmath.quad(integrand, *([[0, 1]] * (len(active) - 1)), error=True)
        if not mpmath.isfinite(val) or err > mpmath.mpf(10) ** -10 * max(1, abs(val)):
            raise NumericError(f"quadrature of I{tuple(nu)} did not converge at d = {d_value} "
                               f"(error estimate {mpmath.nstr(err, 3)}); the integral may diverge there")
        return pref * val


def _derivative(fn, x0: Fraction, h: Fraction):
    """Central differences with two Richardson steps; steps stay exact rationals."""
    D = [(fn(x0 + s) - fn(x0 - s)) / (2 * _mp(s)) for s in (h, h / 2, h / 4)]
    R1 = [(4 * D[1] - D[0]) / 3, (4 * D[2] - D[1]) / 3]
    return (16 * R1[1] - R1[0]) / 15


def numeric_validate(family, connection, point: dict, d_value, invariant: str, dps: int = 30) -> float:
    """max over masters of |finite difference - (A f)| / (1 + |f|) in one direction."""
    A = next((c for c in connection if c.invariant == invariant), None)
    if A is None:
        raise ValueError(f"no connection matrix for {invariant}")
    missing = [x for x in family.invariants if x not in point]
    if missing:
        raise ValueError(f"point lacks values for {missing}")
    point = {k: Fraction(v) for k, v in point.items()}
    masters = A.masters
    x0 = point[invariant]
    h = Fraction(1, 100) * max(1, abs(x0))
    with mpmath.workdps(dps):
        def f_at(m, x):
            return evaluate_integral(family, m, {**point, invariant: x}, d_value, dps)

        values = [evaluate_integral(family, m, point, d_value, dps) for m in masters]
        full = {**point, "d": Fraction(d_value)}
        worst = mpmath.mpf(0)
        for b, m in enumerate(masters):
            fd = _derivative(lambda x: f_at(m, x), x0, h)
            pred = mpmath.fsum(_mp(ground_value(substitute(A.entries[b][c], full))) * values[c]
                               for c in range(len(masters)) if A.entries[b][c])
            worst = max(worst, abs(fd - pred) / (1 + abs(values[b])))
        return float(worst)

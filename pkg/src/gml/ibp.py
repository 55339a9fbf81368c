"""Integration-by-parts reduction and the Gauss-Manin connection of a one-loop family.

Integrals are ``I(nu) = int d^dq / prod_j D_j^nu_j`` with ``D_j = l_j^2 - m_j^2``.
Coefficients live in the rational-function field of the kinematic invariants
and the dimension symbol ``d``.  Scaleless sectors are set to zero.

The fiber basis used here is a set of master integrals.  Any derivative
``d^beta f`` of an integral is a rational combination of masters (apply
:func:`derivative_in_invariant` repeatedly and reduce), so the bundle spanned
by masters is the one spanned by derivatives of the integral.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

from sympy.polys.domains import QQ
from sympy.polys.matrices import DomainMatrix

from .algebra import frac_field, gen, to_field, var_names
from .graph import FeynmanGraph, Kinematics, invariant_chart, qq, route_momenta, symanzik_polynomials

log = logging.getLogger(__name__)

DIM = "d"

Index = tuple[int, ...]


class IBPError(RuntimeError):
    code = "ibp/error"


class IncompleteFamily(IBPError):
    code = "ibp/incomplete-family"


class UnreducedIntegral(IBPError):
    """A requested integral is not expressible through masters with the current seeds."""

    code = "ibp/unreduced"

    def __init__(self, integrals):
        self.integrals = sorted(integrals)
        super().__init__(
            f"unreduced integrals {self.integrals[:5]}{'...' if len(self.integrals) > 5 else ''}; "
            "increase the seed range (--seed-sum)"
        )


@dataclass(frozen=True)
class Propagator:
    edge: int
    loop: tuple[Fraction, ...]
    ext: tuple[Fraction, ...]
    mass: str | None


@dataclass
class IntegralFamily:
    graph: FeynmanGraph
    loops: int
    propagators: tuple[Propagator, ...]
    kinematics: Kinematics
    field: object
    # scalar product label -> (constant, coefficient per propagator)
    sp_to_props: dict = field(repr=False, default_factory=dict)
    zero_sectors: frozenset = field(repr=False, default=frozenset())

    dimension_symbol = DIM

    @property
    def size(self) -> int:
        return len(self.propagators)

    @property
    def invariants(self) -> tuple[str, ...]:
        return self.kinematics.invariants

    @property
    def d(self):
        return self.field.gens[-1]

    def inv(self, name):
        return self.field.gens[var_names(self.field.one).index(name)]

    def sector(self, nu: Index) -> frozenset:
        return frozenset(j for j, n in enumerate(nu) if n > 0)

    def is_zero(self, nu: Index) -> bool:
        return self.sector(nu) in self.zero_sectors


def _sp_labels(L: int, E: int):
    return [("q", i, k) for i in range(L) for k in range(i, L)] + [("p", i, a) for i in range(L) for a in range(E)]


def _prop_expansion(prop: Propagator, labels, kin: Kinematics, K):
    """D_j as (constant, {label: rational}) over the scalar-product basis."""
    c, r = prop.loop, prop.ext
    coeffs = {}
    for lab in labels:
        if lab[0] == "q":
            _, i, k = lab
            v = c[i] * c[k] * (1 if i == k else 2)
        else:
            _, i, a = lab
            v = 2 * c[i] * r[a]
        if v:
            coeffs[lab] = v
    const = K.zero
    for a, ra in enumerate(r):
        for b, rb in enumerate(r):
            if ra and rb:
                const += K(kin.sp(a, b)) * qq(ra * rb)
    if prop.mass:
        const -= K(gen(K.ring, prop.mass))
    return const, coeffs


def _zero_sectors(graph: FeynmanGraph, n: int) -> frozenset:
    """Scaleless sectors: some k solves sum_j k_j alpha_j dG/dalpha_j = G for G = U + F."""
    U, F = symanzik_polynomials(graph)
    G = U + F
    zero = set()
    nalpha = len(graph.edges)
    for size in range(0, n + 1):
        for S in itertools.combinations(range(n), size):
            S = frozenset(S)
            if not S:
                zero.add(S)
                continue
            restricted = G.subs([(G.ring.gens[j], 0) for j in range(nalpha) if j not in S]) if len(S) < n else G
            monos = [m[:nalpha] for m in restricted.keys()]
            if not monos:
                zero.add(S)
                continue
            cols = sorted(S)
            rows = [[QQ(m[j]) for j in cols] + [QQ(1)] for m in set(monos)]
            aug = DomainMatrix(rows, (len(rows), len(cols) + 1), QQ)
            coef = DomainMatrix([r[:-1] for r in rows], (len(rows), len(cols)), QQ)
            if aug.rank() == coef.rank():
                zero.add(S)
    return frozenset(zero)


def family_from_graph(graph: FeynmanGraph) -> IntegralFamily:
    """Propagators D_j = l_j^2 - m_j^2 from the momentum routing, with completeness check."""
    kin = invariant_chart(graph)
    routing = route_momenta(graph)
    L = graph.loops
    E = len(kin.momenta)
    props = tuple(
        Propagator(e.id, routing.loop[e.id], routing.ext[e.id], e.mass_invariant) for e in graph.edges
    )
    K = frac_field(tuple(kin.invariants) + (DIM,))
    labels = _sp_labels(L, E)
    if len(labels) != len(props):
        raise IncompleteFamily(
            f"{len(props)} propagators for {len(labels)} scalar products; add irreducible-numerator "
            "propagators (auxiliary propagators are not supported in this version)"
        )
    consts, rows = [], []
    for p in props:
        const, coeffs = _prop_expansion(p, labels, kin, K)
        consts.append(const)
        rows.append([QQ(coeffs.get(lab, Fraction(0)).numerator, coeffs.get(lab, Fraction(0)).denominator)
                     for lab in labels])
    M = DomainMatrix(rows, (len(props), len(labels)), QQ)
    if M.rank() < len(labels):
        raise IncompleteFamily("propagators do not span the scalar products q.q and q.p")
    Minv = M.inv().to_Matrix()
    sp_to_props = {}
    for s_idx, lab in enumerate(labels):
        w = [QQ(Minv[s_idx, j].p, Minv[s_idx, j].q) for j in range(len(props))]
        const = K.zero
        for j, wj in enumerate(w):
            if wj:
                const -= consts[j] * wj
        sp_to_props[lab] = (const, w)
    fam = IntegralFamily(graph, L, props, kin, K, sp_to_props)
    fam.zero_sectors = _zero_sectors(graph, len(props))
    return fam


# ---------------------------------------------------------------------------
# integrand algebra


def _add(expr: dict, nu: Index, c):
    if not c:
        return
    v = expr.get(nu)
    v = c if v is None else v + c
    if v:
        expr[nu] = v
    else:
        expr.pop(nu, None)


def _shift(nu: Index, j: int, by: int) -> Index:
    return nu[:j] + (nu[j] + by,) + nu[j + 1:]


def _dot_with_momentum(fam: IntegralFamily, v, prop: Propagator):
    """v . l_j as (constant, {scalar-product label: rational}); v = ('q', i) or ('p', b)."""
    K = fam.field
    const, sps = K.zero, {}
    kind, idx = v
    for i, ci in enumerate(prop.loop):
        if not ci:
            continue
        if kind == "q":
            lab = ("q", min(idx, i), max(idx, i))
        else:
            lab = ("p", i, idx)
        sps[lab] = sps.get(lab, Fraction(0)) + ci
    for a, ra in enumerate(prop.ext):
        if not ra:
            continue
        if kind == "q":
            lab = ("p", idx, a)
            sps[lab] = sps.get(lab, Fraction(0)) + ra
        else:
            const += K(fam.kinematics.sp(idx, a)) * qq(ra)
    return const, sps


def _times_form(fam: IntegralFamily, expr: dict, nu: Index, pref, const, sps):
    """Add pref * (const + sum sps) * I(nu) to expr, rewriting scalar products through D_j."""
    _add(expr, nu, pref * const)
    for lab, c in sps.items():
        if not c:
            continue
        sconst, w = fam.sp_to_props[lab]
        _add(expr, nu, pref * qq(c) * sconst)
        for k, wk in enumerate(w):
            if wk:
                _add(expr, _shift(nu, k, -1), pref * qq(c) * wk)


def _drop_zero(fam: IntegralFamily, expr: dict) -> dict:
    return {nu: c for nu, c in expr.items() if not fam.is_zero(nu)}


@dataclass
class IBPIdentity:
    terms: dict
    seed: Index = ()
    generator: tuple = ()


def ibp_identity(fam: IntegralFamily, nu: Index, loop: int, vector) -> IBPIdentity:
    """0 = int d/dq_loop . (vector * prod D^-nu), scalar products rewritten through D_j."""
    K = fam.field
    expr: dict = {}
    if vector == ("q", loop):
        _add(expr, nu, fam.d)
    for j, prop in enumerate(fam.propagators):
        c = prop.loop[loop]
        if not nu[j] or not c:
            continue
        pref = K(QQ(-2 * nu[j])) * qq(c)
        const, sps = _dot_with_momentum(fam, vector, prop)
        _times_form(fam, expr, _shift(nu, j, 1), pref, const, sps)
    return IBPIdentity(_drop_zero(fam, expr), nu, (loop, vector))


def ibp_vectors(fam: IntegralFamily):
    return [("q", i) for i in range(fam.loops)] + [("p", a) for a in range(len(fam.kinematics.momenta))]


def generate_ibp_identities(fam: IntegralFamily, seeds: Iterable[Index]) -> list[IBPIdentity]:
    out = []
    vectors = ibp_vectors(fam)
    for nu in seeds:
        nu = tuple(nu)
        if len(nu) != fam.size:
            raise IBPError(f"seed {nu} has wrong length (family has {fam.size} propagators)")
        for i in range(fam.loops):
            for v in vectors:
                out.append(ibp_identity(fam, nu, i, v))
    return out


def default_seed_sum(fam: IntegralFamily) -> int:
    return fam.size + 2


def seeds_for(fam: IntegralFamily, seed_sum: int, numerators: int = 0) -> list[Index]:
    """Seeds in every nonzero sector with sum of positive indices <= seed_sum."""
    n = fam.size
    out = []
    for size in range(1, n + 1):
        for S in itertools.combinations(range(n), size):
            if frozenset(S) in fam.zero_sectors:
                continue
            extra = seed_sum - size
            if extra < 0:
                continue
            others = [j for j in range(n) if j not in S]
            for dots in _compositions_upto(extra, size):
                for nums in _compositions_upto(numerators, len(others)):
                    nu = [0] * n
                    for j, dj in zip(S, dots):
                        nu[j] = 1 + dj
                    for j, sj in zip(others, nums):
                        nu[j] = -sj
                    out.append(tuple(nu))
    return sorted(set(out), key=laporta_key)


def _compositions_upto(total: int, parts: int):
    if parts == 0:
        yield ()
        return
    for k in range(total + 1):
        for c in itertools.product(range(k + 1), repeat=parts):
            if sum(c) == k:
                yield c


def laporta_key(nu: Index):
    """Complexity: positive-index count, total |index| sum, numerator degree, then nu itself."""
    t = sum(1 for n in nu if n > 0)
    r = sum(n for n in nu if n > 0)
    s = -sum(n for n in nu if n < 0)
    return (t, r + s, s, nu)


# ---------------------------------------------------------------------------
# Laporta elimination


@dataclass
class ReductionTable:
    masters: list
    rules: dict
    pivots: dict = field(repr=False, default_factory=dict)
    zero_sectors: frozenset = field(repr=False, default=frozenset())
    field: object = None

    def reduce(self, expr: dict) -> dict:
        """Express a combination of integrals through masters; raises on unreduced terms."""
        out: dict = {}
        missing = set()
        for nu, c in expr.items():
            if frozenset(j for j, n in enumerate(nu) if n > 0) in self.zero_sectors:
                continue
            if nu in self.rules or nu in self.pivots:
                row = self._reduced(nu, missing)
                if row is None:
                    continue
                for m, cm in row.items():
                    _add(out, m, c * cm)
            elif nu in self.masters:
                _add(out, nu, c)
            else:
                missing.add(nu)
        if missing:
            raise UnreducedIntegral(missing)
        return out

    def _reduced(self, nu, missing):
        if nu in self.rules:
            return self.rules[nu]
        # iterative back-substitution, lowest complexity first
        stack, order = [nu], []
        seen = set()
        while stack:
            x = stack.pop()
            if x in seen or x in self.rules:
                continue
            seen.add(x)
            order.append(x)
            for y in self.pivots[x]:
                if y in self.pivots and y not in self.rules:
                    stack.append(y)
        for x in sorted(order, key=laporta_key):
            row: dict = {}
            ok = True
            for y, c in self.pivots[x].items():
                if y in self.rules:
                    for m, cm in self.rules[y].items():
                        _add(row, m, c * cm)
                elif y in self.masters_set:
                    _add(row, y, c)
                else:
                    missing.add(y)
                    ok = False
            if ok:
                self.rules[x] = row
        return self.rules.get(nu)

    @property
    def masters_set(self):
        return set(self.masters)


def _eliminate(rows: list[dict]) -> dict:
    """Forward elimination; each stored row is ``pivot -> -(rest)`` with the pivot maximal."""
    pivots: dict = {}
    rows = sorted(rows, key=lambda r: (laporta_key(max(r, key=laporta_key)), len(r)))
    for row in rows:
        row = dict(row)
        while row:
            top = max(row, key=laporta_key)
            if top not in pivots:
                break
            c = row[top]
            for y, cy in pivots[top].items():
                _add(row, y, c * cy)
            row.pop(top, None)
        if not row:
            continue
        top = max(row, key=laporta_key)
        inv = -1 / row.pop(top)
        pivots[top] = {y: cy * inv for y, cy in row.items()}
    return pivots


def laporta_reduce(identities: list[IBPIdentity], targets: Iterable[Index] | None = None,
                   zero_sectors: frozenset = frozenset()) -> ReductionTable:
    """Gaussian elimination of IBP identities in Laporta order.

    Masters are the non-pivot integrals needed to express ``targets`` (by default
    every non-negative integral in the system with at most one dot).
    """
    rows = [dict(i.terms) for i in identities if i.terms]
    if not rows:
        raise IBPError("no identities to reduce")
    K = next(iter(rows[0].values())).field
    pivots = _eliminate(rows)
    if targets is None:
        seen = {nu for r in rows for nu in r}
        targets = [nu for nu in seen if min(nu) >= 0 and
                   sum(n for n in nu if n > 0) <= sum(1 for n in nu if n > 0) + 1]
    targets = sorted(set(targets), key=laporta_key)
    # masters: non-pivot integrals reached from the targets
    masters = set()
    frontier = list(targets)
    visited = set()
    while frontier:
        x = frontier.pop()
        if x in visited:
            continue
        visited.add(x)
        if frozenset(j for j, n in enumerate(x) if n > 0) in zero_sectors:
            continue
        if x in pivots:
            frontier.extend(pivots[x])
        else:
            masters.add(x)
    table = ReductionTable(sorted(masters, key=laporta_key), {}, pivots, zero_sectors, K)
    bad = [m for m in table.masters if min(m) < 0]
    if bad:
        raise UnreducedIntegral(bad)
    missing: set = set()
    for t in targets:
        if t in pivots:
            table._reduced(t, missing)
    if missing:
        raise UnreducedIntegral(missing)
    return table


def reduce_family(fam: IntegralFamily, seed_sum: int | None = None, numerators: int = 1) -> ReductionTable:
    seed_sum = default_seed_sum(fam) if seed_sum is None else seed_sum
    ids = generate_ibp_identities(fam, seeds_for(fam, seed_sum, numerators))
    log.debug("%d identities from seed sum %d", len(ids), seed_sum)
    return laporta_reduce(ids, zero_sectors=fam.zero_sectors)


# ---------------------------------------------------------------------------
# derivatives and the connection


def derivative_in_invariant(fam: IntegralFamily, index: Index, invariant: str) -> dict:
    """d/d(invariant) I(index) as a finite combination of family integrals."""
    if invariant not in fam.invariants:
        raise IBPError(f"{invariant!r} is not an invariant of this family {fam.invariants}")
    index = tuple(index)
    K = fam.field
    expr: dict = {}
    for j, prop in enumerate(fam.propagators):
        if prop.mass == invariant and index[j]:
            _add(expr, _shift(index, j, 1), K(index[j]))
    for (c, b), coef in fam.kinematics.chain_rule.get(invariant, {}).items():
        coef = to_field(coef, K)
        # p_c . d/dp_b acting on D_j^-nu: -nu * 2 r_jb (p_c . l_j) D_j^-(nu+1)
        for j, prop in enumerate(fam.propagators):
            if not index[j] or not prop.ext[b]:
                continue
            pref = coef * K(QQ(-2 * index[j])) * qq(prop.ext[b])
            const, sps = _dot_with_momentum(fam, ("p", c), prop)
            _times_form(fam, expr, _shift(index, j, 1), pref, const, sps)
    return _drop_zero(fam, expr)


@dataclass
class ConnectionMatrix:
    """``d/d invariant f = A f`` over ``masters``; ``entries[b][b2]`` multiplies master b2."""

    invariant: str
    masters: list
    entries: list

    @property
    def size(self) -> int:
        return len(self.masters)


def build_connection(fam: IntegralFamily, table: ReductionTable) -> list[ConnectionMatrix]:
    out = []
    masters = table.masters
    K = fam.field
    for x in fam.invariants:
        rows = []
        for m in masters:
            red = table.reduce(derivative_in_invariant(fam, m, x))
            rows.append([red.get(m2, K.zero) for m2 in masters])
        out.append(ConnectionMatrix(x, list(masters), rows))
    return out


def scaling_weight(fam: IntegralFamily, nu: Index):
    """Mass dimension of I(nu) in units of mass squared: L d / 2 - sum nu."""
    return fam.d * QQ(fam.loops, 2) - sum(nu)


def homogeneity_check(fam: IntegralFamily, connection: list[ConnectionMatrix], index: Index | None = None):
    """Residual of sum_x x A_x - diag(weights); zero matrix when the Euler relation holds."""
    have = {c.invariant for c in connection}
    missing = [x for x in fam.invariants if x not in have]
    if missing:
        raise IBPError(f"connection lacks directions {missing}")
    masters = connection[0].masters
    K = fam.field
    n = len(masters)
    res = [[K.zero] * n for _ in range(n)]
    for c in connection:
        x = fam.inv(c.invariant)
        for i in range(n):
            for j in range(n):
                if c.entries[i][j]:
                    res[i][j] += x * c.entries[i][j]
    for i, m in enumerate(masters):
        res[i][i] -= scaling_weight(fam, m)
    if index is not None:
        i = masters.index(tuple(index))
        return [res[i]]
    return res

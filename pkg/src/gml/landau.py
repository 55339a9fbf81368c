"""Landau polynomials of a diagram by elimination over Feynman parameters.

For each stratum (a set of contracted edges, the rest on shell) the system

    dF/dalpha_e = 0            for on-shell e        (first type)
    U = 0,  dF/dalpha_e = lam * dU/dalpha_e          (second type)

is dehomogenized on every on-shell chart, the parameters are eliminated by
iterated resultants, and the resulting polynomial in the invariants is split
into irreducible factors.  Each factor is kept only if the system has a
nontrivial solution in the parameters at sampled points of its zero set
(exact test over the number field generated by the sample).
"""
from __future__ import annotations

import itertools
import logging
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

from sympy.polys.domains import QQ
from sympy.polys.groebnertools import groebner

from .algebra import (
    format_poly,
    gen,
    parse_poly,
    poly_factor,
    poly_resultant,
    poly_ring,
    primitive_part,
    to_ring,
    total_degree,
    var_names,
)
from .graph import FeynmanGraph, graph_from_json, symanzik_polynomials

log = logging.getLogger(__name__)

LAM = "_lam"
THETA = "_theta"


@dataclass(frozen=True)
class LandauStratum:
    contracted: tuple[int, ...]
    on_shell: tuple[int, ...]
    second_type: bool = False

    def label(self) -> str:
        kind = "second" if self.second_type else "first"
        return f"on-shell {list(self.on_shell)} contracted {list(self.contracted)} ({kind} type)"

    def to_json(self) -> dict:
        return {"on_shell": list(self.on_shell), "contracted": list(self.contracted),
                "second_type": self.second_type}


@dataclass
class LandauPolynomial:
    poly: object
    stratum: LandauStratum
    verified: bool | None = None

    @property
    def text(self) -> str:
        return format_poly(self.poly)

    def sort_key(self):
        return (total_degree(self.poly), len(self.poly), self.text)


@dataclass
class StratumResult:
    stratum: LandauStratum
    candidates: list[LandauPolynomial]
    degenerate_charts: list[int] = field(default_factory=list)


def _restricted(graph: FeynmanGraph, contracted):
    U, F = symanzik_polynomials(graph)
    R = U.ring
    zero = [(gen(R, f"alpha{e}"), 0) for e in contracted]
    if zero:
        U, F = U.subs(zero), F.subs(zero)
    return U, F


def landau_strata(graph: FeynmanGraph) -> list[LandauStratum]:
    """Strata with at least one loop left, largest on-shell sets first, each in both types."""
    ids = graph.edge_ids
    U, _ = symanzik_polynomials(graph)
    out = []
    for size in range(len(ids), 0, -1):
        for on in itertools.combinations(ids, size):
            contracted = tuple(e for e in ids if e not in on)
            Ur, _ = _restricted(graph, contracted)
            if not Ur:
                continue
            for second in (False, True):
                out.append(LandauStratum(contracted, on, second))
    return out


def _elim_ring(graph: FeynmanGraph):
    return poly_ring(graph.alpha_names + (LAM,) + tuple(graph.variable_order))


def _system(graph: FeynmanGraph, stratum: LandauStratum, ring):
    """Equations of the stratum in ``ring`` (alphas, lam, invariants)."""
    U, F = _restricted(graph, stratum.contracted)
    U, F = to_ring(U, ring), to_ring(F, ring)
    lam = gen(ring, LAM)
    eqs = []
    for e in stratum.on_shell:
        a = gen(ring, f"alpha{e}")
        eq = F.diff(a)
        if stratum.second_type:
            eq = eq - lam * U.diff(a)
        eqs.append(eq)
    if stratum.second_type:
        eqs.append(U)
    return eqs


def _normalized(eqs):
    out = []
    for e in eqs:
        if not e:
            continue
        p = primitive_part(e)[1]
        if p not in out:
            out.append(p)
    return out


def eliminate(eqs, variables) -> list[list]:
    """Project V(eqs) along ``variables`` by iterated resultants.

    Returns one list of polynomials per branch; a branch whose list is empty
    puts no condition on the remaining variables.  A zero resultant splits the
    system along the common factor of the pair.
    """
    eqs = _normalized(eqs)
    if any(e.is_ground for e in eqs):
        return []
    for k, x in enumerate(variables):
        xi = var_names(eqs[0]).index(x) if eqs else 0
        with_x = [e for e in eqs if e.degree(xi) > 0]
        if not with_x:
            continue
        rest = [e for e in eqs if e.degree(xi) <= 0]
        if len(with_x) == 1:
            eqs = rest
            continue
        pivot = min(with_x, key=lambda e: (e.degree(xi), len(e), format_poly(e)))
        new = []
        for e in with_x:
            if e is pivot:
                continue
            r = poly_resultant(pivot, e, x)
            if r:
                new.append(r)
                continue
            g = pivot.gcd(e)
            others = [f for f in eqs if f is not pivot and f is not e]
            return (eliminate(others + [g], variables[k:])
                    + eliminate(others + [pivot.exquo(g), e.exquo(g)], variables[k:]))
        eqs = _normalized(rest + new)
        if any(e.is_ground for e in eqs):
            return []
    return [eqs]


def _chart_candidates(graph, stratum, chart, ring):
    eqs = [e.subs([(gen(ring, f"alpha{chart}"), 1)]) for e in _system(graph, stratum, ring)]
    elim_vars = ([LAM] if stratum.second_type else []) + [f"alpha{e}" for e in stratum.on_shell if e != chart]
    branches = eliminate(eqs, elim_vars)
    if not branches:
        return [], False
    if all(not b for b in branches):
        return [], True
    polys = []
    for b in branches:
        if not b:
            continue
        g = b[0]
        for p in b[1:]:
            g = g.gcd(p)
        if not g.is_ground:
            polys.append(g)
    return polys, False


def landau_eliminate(graph: FeynmanGraph, stratum: LandauStratum, trials: int = 8, seed: int = 0,
                     details: bool = False):
    """Irreducible candidate Landau polynomials of one stratum with membership verdicts."""
    if not stratum.on_shell:
        raise ValueError("stratum needs at least one on-shell edge")
    ring = _elim_ring(graph)
    inv_ring = poly_ring(graph.variable_order)
    found: dict = {}
    degenerate = []
    for chart in stratum.on_shell:
        polys, degen = _chart_candidates(graph, stratum, chart, ring)
        if degen:
            degenerate.append(chart)
        for p in polys:
            fac = poly_factor(to_ring(p, inv_ring))
            for f, _ in fac.factors + fac.unfactored:
                if not f.is_ground and f not in found:
                    found[f] = None
    cands = []
    for f in sorted(found, key=lambda f: (total_degree(f), len(f), format_poly(f))):
        lp = LandauPolynomial(f, stratum)
        lp.verified = landau_membership_check(graph, lp, stratum, trials, seed)
        cands.append(lp)
    if details:
        return StratumResult(stratum, cands, degenerate)
    return cands


def _membership_ring(graph: FeynmanGraph):
    return poly_ring(graph.alpha_names + (LAM, THETA) + tuple(graph.variable_order))


def _solvable_at(graph, stratum, values: dict, solve_var: str, minpoly, ring) -> bool:
    """Does the stratum system have a nontrivial projective solution in the alphas?

    Every on-shell chart is tried, so solutions on the boundary of the
    parameter simplex (some alphas zero) count.
    """
    eqs = _system(graph, stratum, ring)
    theta = gen(ring, THETA)
    subs = [(gen(ring, k), QQ(v)) for k, v in values.items()]
    base = [e.compose(gen(ring, solve_var), theta).subs(subs) for e in eqs]
    h = to_ring(minpoly, ring).compose(gen(ring, solve_var), theta)
    for chart in stratum.on_shell:
        a = gen(ring, f"alpha{chart}")
        sys_ = [e.subs([(a, 1)]) for e in base]
        sys_ = [e for e in sys_ if e] + [h]
        gb = groebner(sys_, ring)
        if not (len(gb) == 1 and gb[0].is_ground):
            return True
    return False


def landau_membership_check(graph: FeynmanGraph, L: LandauPolynomial | object, stratum: LandauStratum,
                            trials: int = 8, seed: int = 0) -> bool | None:
    """Sample points of {L = 0} and test the stratum's Landau system there.

    One invariant is solved for over random integer values of the others; its
    value is an algebraic number adjoined as an extra variable with its minimal
    polynomial, so the test stays exact.  Returns True, False, or None when no
    sample was usable.
    """
    poly = L.poly if isinstance(L, LandauPolynomial) else L
    if not poly:
        raise ValueError("zero polynomial")
    names = var_names(poly)
    used = [n for n in graph.variable_order if n in names and poly.degree(names.index(n)) > 0]
    if not used:
        return None
    solve_var = min(used, key=lambda n: (poly.degree(names.index(n)), graph.variable_order.index(n)))
    si = names.index(solve_var)
    deg = poly.degree(si)
    rng = random.Random(f"{seed}:{format_poly(poly)}:{stratum.label()}")
    ring = _membership_ring(graph)
    ok = tried = 0
    for _ in range(trials):
        values = {n: rng.choice([v for v in range(-25, 26) if v]) for n in graph.variable_order if n != solve_var}
        g = poly.subs([(poly.ring.gens[names.index(n)], QQ(v)) for n, v in values.items() if n in names])
        if g.degree(si) < deg:
            continue
        tried += 1
        fac = poly_factor(g)
        if all(_solvable_at(graph, stratum, values, solve_var, h, ring) for h, _ in fac.factors):
            ok += 1
        else:
            return False
    if not tried:
        return None
    return ok == tried


@dataclass
class LandauReport:
    polynomials: list[LandauPolynomial]
    rejected: list[LandauPolynomial]
    inconclusive: list[LandauPolynomial]
    strata: list[StratumResult]

    def landau_set(self) -> list:
        return [lp.poly for lp in self.polynomials]


def _run_stratum(args):
    graph, stratum, trials, seed = args
    return landau_eliminate(graph, stratum, trials, seed, details=True)


def _run_stratum_portable(args):
    """Worker entry: plain data in and out, since sympy rings do not pickle reliably."""
    data, stratum, trials, seed = args
    res = _run_stratum((graph_from_json(data), stratum, trials, seed))
    return [(lp.text, lp.verified) for lp in res.candidates], res.degenerate_charts


def _parallel(graph, strata, trials, seed, threads):
    ring = poly_ring(graph.variable_order)
    data = graph.to_json()
    jobs = [(data, s, trials, seed) for s in strata]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        raw = list(ex.map(_run_stratum_portable, jobs))
    return [StratumResult(s, [LandauPolynomial(parse_poly(text, ring), s, v) for text, v in cands], degen)
            for s, (cands, degen) in zip(strata, raw)]


def compute_landau_set(graph: FeynmanGraph, second_type: str = "off", trials: int = 8, seed: int = 0,
                       threads: int = 1) -> LandauReport:
    """Landau set over all strata; ``second_type`` is ``off``, ``on`` or ``both``."""
    if second_type not in ("off", "on", "both"):
        raise ValueError("second_type must be off, on or both")
    keep = {"off": (False,), "on": (True,), "both": (False, True)}[second_type]
    strata = [s for s in landau_strata(graph) if s.second_type in keep]
    if threads > 1 and len(strata) > 1:
        results = _parallel(graph, strata, trials, seed, threads)
    else:
        results = [_run_stratum((graph, s, trials, seed)) for s in strata]
    verified: dict = {}
    rejected, inconclusive = [], []
    for res in results:
        for lp in res.candidates:
            if lp.verified:
                verified.setdefault(lp.poly, lp)
            elif lp.verified is None:
                inconclusive.append(lp)
            else:
                rejected.append(lp)
    polys = sorted(verified.values(), key=LandauPolynomial.sort_key)
    inconclusive = [lp for lp in inconclusive if lp.poly not in verified]
    return LandauReport(polys, rejected, inconclusive, results)

"""Feynman graphs, momentum routing, Symanzik polynomials and the invariant chart.

Conventions
-----------
* Edge ``ends = [a, b]`` means the edge momentum flows from ``a`` to ``b``.
* Every leg momentum flows *into* its vertex; the last leg carries minus the
  sum of the others.
* Propagators are ``D_e = l_e^2 - m_e^2`` and ``F = -sum_{2-forests} P^2 prod
  alpha + U * sum alpha_e m_e^2``; with this sign the Euclidean region is
  ``p^2 < 0`` with positive squared masses, where ``F > 0`` on the simplex.
* The squared mass of an edge with ``"mass": "m1"`` is the invariant ``m1sq``.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

from sympy.polys.domains import QQ

from .algebra import frac_field, gen, poly_ring, ratfun_diff, to_ring, var_names


class GraphError(ValueError):
    """Invalid diagram or kinematics description."""

    code = "input/schema"


class DegenerateKinematics(GraphError):
    code = "input/degenerate-kinematics"


@dataclass(frozen=True)
class Edge:
    id: int
    ends: tuple[Any, Any]
    mass: str | None = None

    @property
    def mass_invariant(self) -> str | None:
        return None if self.mass is None else f"{self.mass}sq"


@dataclass(frozen=True)
class Leg:
    vertex: Any
    momentum: str
    square: str | None = None


@dataclass(frozen=True)
class FeynmanGraph:
    vertices: tuple
    edges: tuple[Edge, ...]
    legs: tuple[Leg, ...]
    invariants: tuple[str, ...]
    variable_order: tuple[str, ...]
    squares: tuple[tuple[tuple[str, ...], str], ...] = ()
    name: str = ""

    @property
    def loops(self) -> int:
        return len(self.edges) - len(self.vertices) + 1

    @property
    def edge_ids(self) -> tuple[int, ...]:
        return tuple(e.id for e in self.edges)

    @property
    def alpha_names(self) -> tuple[str, ...]:
        return tuple(f"alpha{e.id}" for e in self.edges)

    @property
    def external(self) -> tuple[str, ...]:
        """Independent external momenta (all legs but the last)."""
        return tuple(leg.momentum for leg in self.legs[:-1])

    @property
    def mass_invariants(self) -> tuple[str, ...]:
        seen = []
        for e in self.edges:
            if e.mass_invariant and e.mass_invariant not in seen:
                seen.append(e.mass_invariant)
        return tuple(seen)

    def to_json(self) -> dict:
        out: dict[str, Any] = {}
        if self.name:
            out["name"] = self.name
        out["vertices"] = list(self.vertices)
        out["edges"] = [{"id": e.id, "ends": list(e.ends), "mass": e.mass} for e in self.edges]
        out["legs"] = [
            {"vertex": leg.vertex, "momentum": leg.momentum, "square": leg.square if leg.square else 0}
            for leg in self.legs
        ]
        if self.squares:
            out["squares"] = [{"momenta": list(m), "square": sq} for m, sq in self.squares]
        out["invariants"] = list(self.invariants)
        out["variable_order"] = list(self.variable_order)
        return out


_TOP_KEYS = {"name", "vertices", "edges", "legs", "invariants", "variable_order", "squares"}
_REQUIRED = {"vertices", "edges", "legs", "invariants"}


def _check_keys(obj: dict, allowed: set, required: set, where: str):
    if not isinstance(obj, dict):
        raise GraphError(f"{where}: expected an object")
    unknown = set(obj) - allowed
    if unknown:
        raise GraphError(f"{where}: unknown keys {sorted(unknown)}")
    missing = required - set(obj)
    if missing:
        raise GraphError(f"{where}: missing keys {sorted(missing)}")


def _square_value(v, where):
    if v in (None, 0, "0"):
        return None
    if not isinstance(v, str):
        raise GraphError(f"{where}: square must be an invariant name or 0")
    return v


def graph_from_json(data: dict) -> FeynmanGraph:
    """Build and validate a graph from its JSON description."""
    _check_keys(data, _TOP_KEYS, _REQUIRED, "graph")
    vertices = tuple(data["vertices"])
    if len(set(vertices)) != len(vertices) or not vertices:
        raise GraphError("graph: vertices must be a nonempty list of distinct ids")
    edges = []
    for i, e in enumerate(data["edges"]):
        _check_keys(e, {"id", "ends", "mass"}, {"id", "ends"}, f"edge[{i}]")
        ends = e["ends"]
        if not isinstance(ends, list) or len(ends) != 2 or any(v not in vertices for v in ends):
            raise GraphError(f"edge[{i}]: ends must be two declared vertices")
        mass = e.get("mass")
        if mass in (0, "0", None, ""):
            mass = None
        elif not isinstance(mass, str):
            raise GraphError(f"edge[{i}]: mass must be a symbol or 0")
        if not isinstance(e["id"], int) or isinstance(e["id"], bool):
            raise GraphError(f"edge[{i}]: id must be an integer")
        edges.append(Edge(e["id"], (ends[0], ends[1]), mass))
    if len({e.id for e in edges}) != len(edges):
        raise GraphError("graph: duplicate edge ids")
    legs = []
    for i, leg in enumerate(data["legs"]):
        _check_keys(leg, {"vertex", "momentum", "square"}, {"vertex", "momentum"}, f"leg[{i}]")
        if leg["vertex"] not in vertices:
            raise GraphError(f"leg[{i}]: undeclared vertex {leg['vertex']!r}")
        legs.append(Leg(leg["vertex"], str(leg["momentum"]), _square_value(leg.get("square"), f"leg[{i}]")))
    if len({leg.momentum for leg in legs}) != len(legs):
        raise GraphError("graph: duplicate leg momenta")
    invariants = tuple(data["invariants"])
    if len(set(invariants)) != len(invariants) or not all(isinstance(v, str) for v in invariants):
        raise GraphError("graph: invariants must be distinct symbol names")
    if "d" in invariants:
        raise GraphError("graph: 'd' is reserved for the dimension")
    order = tuple(data.get("variable_order", invariants))
    order = tuple(v for v in order if v != "d")
    if sorted(order) != sorted(invariants):
        raise GraphError("graph: variable_order must be a permutation of the invariants")
    squares = []
    for i, sq in enumerate(data.get("squares", [])):
        _check_keys(sq, {"momenta", "square"}, {"momenta", "square"}, f"squares[{i}]")
        moms = tuple(sq["momenta"])
        if any(m not in {leg.momentum for leg in legs} for m in moms):
            raise GraphError(f"squares[{i}]: unknown momentum")
        squares.append((moms, _square_value(sq["square"], f"squares[{i}]")))
    g = FeynmanGraph(vertices, tuple(edges), tuple(legs), invariants, order, tuple(squares),
                     str(data.get("name", "")))
    validate_graph(g)
    return g


def load_graph(path: str | Path) -> FeynmanGraph:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise GraphError(f"{path}: invalid JSON ({exc.msg})") from None
    return graph_from_json(data)


def _components(vertices, edges) -> list[set]:
    parent = {v: v for v in vertices}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for e in edges:
        a, b = find(e.ends[0]), find(e.ends[1])
        if a != b:
            parent[a] = b
    comps: dict[Any, set] = {}
    for v in vertices:
        comps.setdefault(find(v), set()).add(v)
    return list(comps.values())


def validate_graph(g: FeynmanGraph) -> None:
    if len(_components(g.vertices, g.edges)) != 1:
        raise GraphError("graph is disconnected")
    if g.loops < 1:
        raise GraphError("graph has no loops")
    declared = set(g.invariants)
    for e in g.edges:
        if e.mass_invariant and e.mass_invariant not in declared:
            raise GraphError(f"edge {e.id}: squared mass {e.mass_invariant!r} is not a declared invariant")
    for leg in g.legs:
        if leg.square and leg.square not in declared:
            raise GraphError(f"leg {leg.momentum}: square {leg.square!r} is not declared")
    for moms, sq in g.squares:
        if sq and sq not in declared:
            raise GraphError(f"squares: {sq!r} is not declared")


# ---------------------------------------------------------------------------
# momentum routing


@dataclass(frozen=True)
class Routing:
    """Edge momenta as coefficient vectors over (q_1..q_L) and (p_1..p_E)."""

    loop: dict[int, tuple[Fraction, ...]]
    ext: dict[int, tuple[Fraction, ...]]
    chords: tuple[int, ...]


def _spanning_tree(g: FeynmanGraph) -> list[Edge]:
    # greedy from the last declared edge so that the first edges become chords
    tree, comps = [], {v: {v} for v in g.vertices}
    for e in reversed(g.edges):
        a, b = e.ends
        if comps[a] is comps[b]:
            continue
        merged = comps[a] | comps[b]
        for v in merged:
            comps[v] = merged
        tree.append(e)
    return tree


def qq(x: Fraction):
    return QQ(x.numerator, x.denominator)


def leg_vector(g: FeynmanGraph, leg: Leg) -> tuple[Fraction, ...]:
    E = len(g.legs) - 1
    if leg is g.legs[-1]:
        return tuple(Fraction(-1) for _ in range(E))
    i = g.legs.index(leg)
    return tuple(Fraction(int(j == i)) for j in range(E))


def route_momenta(g: FeynmanGraph) -> Routing:
    """Loop momenta on the chords, tree momenta by momentum conservation."""
    tree = _spanning_tree(g)
    tree_ids = {e.id for e in tree}
    chords = tuple(e.id for e in g.edges if e.id not in tree_ids)
    L, E = len(chords), len(g.legs) - 1 if g.legs else 0
    loop = {cid: tuple(Fraction(int(i == k)) for i in range(L)) for k, cid in enumerate(chords)}
    ext = {cid: tuple(Fraction(0) for _ in range(E)) for cid in chords}
    inflow = {v: [Fraction(0)] * E for v in g.vertices}
    for leg in g.legs:
        vec = leg_vector(g, leg) if E else ()
        inflow[leg.vertex] = [a + b for a, b in zip(inflow[leg.vertex], vec)]
    remaining = list(tree)
    while remaining:
        for e in remaining:
            for v in e.ends:
                if e.ends[0] == e.ends[1]:
                    continue
                others = [x for x in remaining if x is not e and v in x.ends]
                if others:
                    continue
                # balance at leaf v: legs in + known edges in - known edges out = 0
                lq = [Fraction(0)] * L
                lp = list(inflow[v])
                for x in g.edges:
                    if x.id not in loop or x is e:
                        continue
                    sgn = (x.ends[1] == v) - (x.ends[0] == v)
                    if sgn:
                        lq = [a + sgn * b for a, b in zip(lq, loop[x.id])]
                        lp = [a + sgn * b for a, b in zip(lp, ext[x.id])]
                # e carries momentum out of v if v is its tail
                sgn = 1 if e.ends[0] == v else -1
                loop[e.id] = tuple(sgn * a for a in lq)
                ext[e.id] = tuple(sgn * a for a in lp)
                remaining.remove(e)
                break
            else:
                continue
            break
        else:
            raise GraphError("momentum routing failed")
    return Routing(loop, ext, chords)


# ---------------------------------------------------------------------------
# kinematics


@dataclass
class Kinematics:
    """Independent invariants, the Gram table and the derivative chain rule.

    ``chain_rule[x][(c, b)]`` is the coefficient of ``p_c . d/dp_b`` in
    ``d/dx``; indices run over the independent external momenta.
    """

    invariants: tuple[str, ...]
    momenta: tuple[str, ...]
    gram: dict[tuple[int, int], Any]
    chain_rule: dict[str, dict[tuple[int, int], Any]] = field(default_factory=dict)
    mass_invariants: tuple[str, ...] = ()
    gram_det: Any = None

    def sp(self, a: int, b: int):
        return self.gram[(min(a, b), max(a, b))]


def _solve_linear(rows, rhs, K):
    """Exact solve of a (possibly overdetermined) consistent system over K."""
    n = len(rows[0]) if rows else 0
    a = [[K(qq(x)) for x in r] + [y] for r, y in zip(rows, rhs)]
    piv_cols, r = [], 0
    for c in range(n):
        p = next((i for i in range(r, len(a)) if a[i][c]), None)
        if p is None:
            continue
        a[r], a[p] = a[p], a[r]
        inv = 1 / a[r][c]
        a[r] = [x * inv for x in a[r]]
        for i in range(len(a)):
            if i != r and a[i][c]:
                f = a[i][c]
                a[i] = [x - f * y for x, y in zip(a[i], a[r])]
        piv_cols.append(c)
        r += 1
    if len(piv_cols) < n:
        return None
    for i in range(r, len(a)):
        if a[i][n]:
            raise DegenerateKinematics("inconsistent squared-momentum declarations")
    return [a[i][n] for i in range(n)]


def invariant_chart(g: FeynmanGraph) -> Kinematics:
    """Solve the scalar products from the declared squares and build the chain rule."""
    E = len(g.legs) - 1 if g.legs else 0
    names = g.variable_order
    K = frac_field(names)
    R = K.ring
    pairs = [(a, b) for a in range(E) for b in range(a, E)]
    rows, rhs = [], []

    def square_row(vec):
        return [vec[a] * vec[b] * (1 if a == b else 2) for a, b in pairs]

    def value(sq):
        return K(gen(R, sq)) if sq else K.zero

    for leg in g.legs:
        if E:
            rows.append(square_row(leg_vector(g, leg)))
            rhs.append(value(leg.square))
    for moms, sq in g.squares:
        vec = [Fraction(0)] * E
        for m in moms:
            leg = next(leg for leg in g.legs if leg.momentum == m)
            vec = [x + y for x, y in zip(vec, leg_vector(g, leg))]
        rows.append(square_row(vec))
        rhs.append(value(sq))
    gram = {}
    if E:
        sol = _solve_linear(rows, rhs, K)
        if sol is None:
            raise DegenerateKinematics("declared squares do not determine all scalar products p_a.p_b")
        for (a, b), v in zip(pairs, sol):
            if not v.denom.is_ground:
                raise DegenerateKinematics("scalar products must be polynomial in the invariants")
            gram[(a, b)] = v.numer * (1 / v.denom.LC)
    masses = g.mass_invariants
    momentum_invs = tuple(x for x in g.invariants
                          if any(x in var_names(v) and v.degree(gen(R, x)) > 0 for v in gram.values()))
    kin = Kinematics(tuple(g.variable_order), g.external, gram, {}, masses)
    if not E:
        kin.gram_det = R.one
        return kin
    G = [[K(kin.sp(a, b)) for b in range(E)] for a in range(E)]
    ginv, det = _invert(G, K)
    if ginv is None:
        raise DegenerateKinematics("Gram determinant of the external momenta vanishes identically")
    kin.gram_det = det
    for x in momentum_invs:
        coeffs: dict[tuple[int, int], Any] = {}
        for a, b in pairs:
            ds = ratfun_diff(K(gram[(a, b)]), x)
            if not ds:
                continue
            w = ds if a != b else ds / 2
            for c in range(E):
                coeffs[(c, b)] = coeffs.get((c, b), K.zero) + w * ginv[a][c]
        kin.chain_rule[x] = {k: v for k, v in sorted(coeffs.items()) if v}
    return kin


def _invert(G, K):
    n = len(G)
    a = [row[:] + [K(int(i == j)) for j in range(n)] for i, row in enumerate(G)]
    det = K.one
    for c in range(n):
        p = next((i for i in range(c, n) if a[i][c]), None)
        if p is None:
            return None, K.zero
        if p != c:
            a[c], a[p] = a[p], a[c]
            det = -det
        det *= a[c][c]
        inv = 1 / a[c][c]
        a[c] = [x * inv for x in a[c]]
        for i in range(n):
            if i != c and a[i][c]:
                f = a[i][c]
                a[i] = [x - f * y for x, y in zip(a[i], a[c])]
    return [row[n:] for row in a], det


def apply_chain_rule(kin: Kinematics, invariant: str, a: int, e: int):
    """``d/d invariant`` applied to ``p_a.p_e`` through the momentum operators."""
    K = frac_field(kin.invariants)
    out = K.zero
    for (c, b), coef in kin.chain_rule.get(invariant, {}).items():
        # p_c . d/dp_b (p_a . p_e) = delta_ab p_c.p_e + delta_eb p_a.p_c
        term = K.zero
        if a == b:
            term += K(kin.sp(c, e))
        if e == b:
            term += K(kin.sp(a, c))
        out += coef * term
    return out


# ---------------------------------------------------------------------------
# Symanzik polynomials


def _is_forest(g: FeynmanGraph, edges) -> int | None:
    """Number of components if ``edges`` form a forest on all vertices, else None."""
    parent = {v: v for v in g.vertices}

    def find(v):
        while parent[v] != v:
            v = parent[v]
        return v

    for e in edges:
        a, b = find(e.ends[0]), find(e.ends[1])
        if a == b:
            return None
        parent[a] = b
    return len({find(v) for v in g.vertices})


def symanzik_ring(g: FeynmanGraph):
    return poly_ring(g.alpha_names + tuple(g.variable_order))


def symanzik_polynomials(g: FeynmanGraph):
    """U and F from spanning trees and spanning 2-forests."""
    validate_graph(g)
    R = symanzik_ring(g)
    kin = invariant_chart(g)
    alpha = {e.id: R.gens[i] for i, e in enumerate(g.edges)}
    nv = len(g.vertices)
    U = R.zero
    for tree in itertools.combinations(g.edges, nv - 1):
        if _is_forest(g, tree) == 1:
            term = R.one
            for e in g.edges:
                if e not in tree:
                    term *= alpha[e.id]
            U += term
    F0 = R.zero
    E = len(g.legs) - 1 if g.legs else 0
    if nv >= 2 and E:
        for forest in itertools.combinations(g.edges, nv - 2):
            if _is_forest(g, forest) != 2:
                continue
            comps = _components(g.vertices, forest)
            side = comps[0]
            vec = [Fraction(0)] * E
            for leg in g.legs:
                if leg.vertex in side:
                    vec = [x + y for x, y in zip(vec, leg_vector(g, leg))]
            sq = R.zero
            for a in range(E):
                for b in range(E):
                    if vec[a] and vec[b]:
                        sq += to_ring(kin.sp(a, b), R) * qq(vec[a] * vec[b])
            if not sq:
                continue
            term = R.one
            for e in g.edges:
                if e not in forest:
                    term *= alpha[e.id]
            F0 -= sq * term
    mass_term = R.zero
    for e in g.edges:
        if e.mass_invariant:
            mass_term += alpha[e.id] * gen(R, e.mass_invariant)
    return U, F0 + U * mass_term


"""Flat connections with a prescribed polar divisor.

Given polynomials L_1..L_k in z_1..z_n, an m x m connection is sought of the form

    A_mu = sum over subsets S of intersecting components  N_{mu,S}(z) / prod_{i in S} L_i

with polynomial numerators of bounded degree.  ``integrability_system`` writes
out the flatness conditions on the unknown numerator coefficients (linear plus
bilinear equations) and optional regularity-at-infinity conditions;
``solve_closed_logarithmic`` solves the sector A = sum C_i dlog L_i with
commuting constant C_i exactly.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from sympy.polys.domains import QQ

from .algebra import (
    format_ratfun,
    frac_field,
    gen,
    normalize_factor,
    parse_poly,
    poly_ring,
    qq_nullspace,
    qq_solve,
    to_ring,
    total_degree,
)
from .analysis import (
    _monomials,
    check_flatness,
    check_pole_structure,
    check_regularity_at_infinity,
    nullstellensatz_certificate,
)
from .ibp import ConnectionMatrix


@dataclass
class AnsatzProblem:
    variables: tuple[str, ...]
    divisor: list
    size: int = 1
    degree: int = 0
    regularity: bool = True

    def __post_init__(self):
        self.variables = tuple(self.variables)
        if self.size < 1:
            raise ValueError("matrix size must be at least 1")
        if self.degree < 0:
            raise ValueError("degree bound must be non-negative")
        R = self.ring
        divisor = []
        for L in self.divisor:
            L = parse_poly(L, R) if isinstance(L, str) else to_ring(L, R)
            if L.is_ground:
                raise ValueError("divisor polynomials must be non-constant")
            divisor.append(L)
        keys = [normalize_factor(L) for L in divisor]
        if len(set(keys)) != len(keys):
            raise ValueError("divisor polynomials must be pairwise non-associate")
        self.divisor = divisor

    @property
    def ring(self):
        return poly_ring(self.variables)

    @property
    def field(self):
        return frac_field(self.variables)

    @classmethod
    def from_text(cls, divisor: str, variables: str, **kw) -> "AnsatzProblem":
        names = tuple(v.strip() for v in variables.split(",") if v.strip())
        polys = [p.strip() for p in divisor.split(";") if p.strip()]
        return cls(names, polys, **kw)


@dataclass
class AnsatzCandidate:
    matrices: list  # one m x m list of rational functions per variable

    def connection(self, problem: AnsatzProblem) -> list[ConnectionMatrix]:
        masters = list(range(problem.size))
        return [ConnectionMatrix(z, masters, M) for z, M in zip(problem.variables, self.matrices)]

    def to_json(self, problem: AnsatzProblem) -> dict:
        return {z: [[format_ratfun(f) for f in row] for row in M] for z, M in zip(problem.variables, self.matrices)}


# -- the general system ------------------------------------------------------

def intersecting_subsets(divisor, max_certificate_degree: int = 4) -> list[tuple[int, ...]]:
    """Subsets of components with a common complex zero (no Nullstellensatz certificate found)."""
    out = [()]
    for r in range(1, len(divisor) + 1):
        for S in itertools.combinations(range(len(divisor)), r):
            if r == 1 or nullstellensatz_certificate([divisor[i] for i in S], max_certificate_degree) is None:
                out.append(S)
    return out


@dataclass
class IntegrabilitySystem:
    problem: AnsatzProblem
    ring: object
    unknowns: list  # labels (variable, subset, row, col, monomial exponents)
    numerators: list  # B_mu = P * A_mu as m x m polynomial matrices in ring
    clearing: object  # P = prod L_i
    equations: list = field(default_factory=list)
    regularity: list = field(default_factory=list)

    @property
    def unknown_gens(self):
        return self.ring.gens[: len(self.unknowns)]

    def _degree_in_unknowns(self, e) -> int:
        k = len(self.unknowns)
        return max(sum(m[:k]) for m in e.keys())

    @property
    def counts(self) -> dict:
        bil = sum(1 for e in self.equations if self._degree_in_unknowns(e) > 1)
        return {"unknowns": len(self.unknowns), "equations": len(self.equations),
                "bilinear": bil, "linear": len(self.equations) - bil,
                "regularity": len(self.regularity)}

    def linear_rows(self, equations) -> list[list]:
        """Coefficient rows of linear homogeneous equations in the unknowns."""
        k = len(self.unknowns)
        rows = []
        for e in equations:
            row = [QQ(0)] * k
            for m, c in e.terms():
                if sum(m[:k]) != 1 or any(m[k:]):
                    raise ValueError("equation is not linear homogeneous in the unknowns")
                row[m.index(1)] = c
            rows.append(row)
        return rows

    def coefficient_map(self) -> dict:
        """(mu, row, col, z-exponents) -> coefficient row of that term of B_mu in the unknowns."""
        k = len(self.unknowns)
        rows: dict = {}
        for mu, B in enumerate(self.numerators):
            for i, row in enumerate(B):
                for j, b in enumerate(row):
                    for m, c in b.terms():
                        rows.setdefault((mu, i, j, m[k:]), [QQ(0)] * k)[m.index(1)] += c
        return rows

    def substitute(self, values: list) -> list:
        """Equations after substituting numbers for the unknowns (zeros dropped)."""
        pairs = list(zip(self.unknown_gens, values))
        out = []
        for e in self.equations + self.regularity:
            r = e.subs(pairs)
            if r:
                out.append(r)
        return out


def _coefficients_in(p, idx: list[int]) -> dict:
    """Group the terms of p by their exponents in the variables at ``idx``."""
    groups: dict = {}
    R = p.ring
    for m, c in p.terms():
        key = tuple(m[i] for i in idx)
        rest = list(m)
        for i in idx:
            rest[i] = 0
        groups[key] = groups.get(key, R.zero) + R({tuple(rest): c})
    return groups


def integrability_system(problem: AnsatzProblem) -> IntegrabilitySystem:
    n, m = len(problem.variables), problem.size
    subsets = intersecting_subsets(problem.divisor)
    monos = list(_monomials(n, problem.degree))
    labels = [(mu, S, i, j, e) for mu in range(n) for S in subsets for i in range(m) for j in range(m)
              for e in monos]
    names = tuple(f"_c{k}" for k in range(len(labels)))
    extra = (tuple(f"_a{k}" for k in range(n)) + tuple(f"_b{k}" for k in range(n)) + ("_t",)
             if problem.regularity else ())
    R = poly_ring(names + problem.variables + extra)
    z = [gen(R, v) for v in problem.variables]
    divisor = [to_ring(L, R) for L in problem.divisor]
    P = R.one
    for L in divisor:
        P *= L
    cofactor = {}
    for S in subsets:
        q = R.one
        for i, L in enumerate(divisor):
            if i not in S:
                q *= L
        cofactor[S] = q
    B = [[[R.zero] * m for _ in range(m)] for _ in range(n)]
    for k, (mu, S, i, j, e) in enumerate(labels):
        mono = R.one
        for v, p in zip(z, e):
            mono *= v ** p
        B[mu][i][j] += R.gens[k] * mono * cofactor[S]
    system = IntegrabilitySystem(problem, R, labels, B, P)
    zi = [R.gens.index(v) for v in z]
    for mu, nu in itertools.combinations(range(n), 2):
        dPmu, dPnu = P.diff(z[mu]), P.diff(z[nu])
        for i in range(m):
            for j in range(m):
                expr = (B[nu][i][j].diff(z[mu]) * P - B[nu][i][j] * dPmu
                        - B[mu][i][j].diff(z[nu]) * P + B[mu][i][j] * dPnu)
                for k in range(m):
                    expr -= B[mu][i][k] * B[nu][k][j] - B[nu][i][k] * B[mu][k][j]
                for _, c in sorted(_coefficients_in(expr, zi).items()):
                    if c:
                        system.equations.append(c)
    if problem.regularity:
        system.regularity = _regularity_equations(system, z)
    return system


def _regularity_equations(system: IntegrabilitySystem, z) -> list:
    """deg_t sum_mu b_mu B_mu(a + b t) < deg P on a line with symbolic a, b."""
    R, problem = system.ring, system.problem
    n = len(z)
    a = [gen(R, f"_a{k}") for k in range(n)]
    b = [gen(R, f"_b{k}") for k in range(n)]
    t = gen(R, "_t")
    line = [(z[k], a[k] + b[k] * t) for k in range(n)]
    bound = total_degree(system.clearing)
    ti = R.gens.index(t)
    ab = [R.gens.index(v) for v in a + b]
    out = []
    m = problem.size
    for i in range(m):
        for j in range(m):
            total = R.zero
            for mu in range(n):
                total += b[mu] * system.numerators[mu][i][j].compose(line)
            for (k,), c in sorted(_coefficients_in(total, [ti]).items()):
                if k < bound:
                    continue
                for _, e in sorted(_coefficients_in(c, ab).items()):
                    if e:
                        out.append(e)
    return out


def closed_form_dimension(problem: AnsatzProblem) -> int:
    """Dimension, as a space of connections, of the linear system for m = 1.

    Solves the curl and regularity equations and counts the distinct 1-forms
    in the solution space (different numerator choices can give the same form).
    """
    if problem.size != 1:
        raise ValueError("closed_form_dimension needs a scalar problem")
    system = integrability_system(problem)
    rows = system.linear_rows(system.equations + system.regularity)
    basis = qq_nullspace(rows, len(system.unknowns))
    if not basis:
        return 0
    phi = [row for _, row in sorted(system.coefficient_map().items())]
    images = [[sum((r[k] * v[k] for k in range(len(v))), QQ(0)) for r in phi] for v in basis]
    return _rank(images)


def _rank(rows) -> int:
    from sympy.polys.matrices import DomainMatrix

    if not rows or not rows[0]:
        return 0
    return DomainMatrix([[QQ(c) for c in r] for r in rows], (len(rows), len(rows[0])), QQ).rank()


# -- the closed logarithmic sector ------------------------------------------

def dlog_forms(problem: AnsatzProblem) -> list[list]:
    """dlog L_i as lists of rational functions, one per variable."""
    K = problem.field
    R = K.ring
    out = []
    for L in problem.divisor:
        L = to_ring(L, R)
        out.append([K.new(L.diff(gen(R, v)), L) for v in problem.variables])
    return out


def independent_dlogs(problem: AnsatzProblem) -> list[int]:
    """Indices of a maximal set of dlog L_i independent over the constants (greedy, in order)."""
    forms = dlog_forms(problem)
    R = problem.ring
    P = R.one
    for L in problem.divisor:
        P *= L
    vectors = []
    for i, w in enumerate(forms):
        vec: dict = {}
        for mu, f in enumerate(w):
            num = f.numer * P
            q, r = divmod(num, f.denom)
            assert not r
            for mono, c in q.terms():
                vec[(mu, mono)] = c
        vectors.append(vec)
    keys = sorted(set().union(*vectors)) if vectors else []
    chosen: list[int] = []
    for i, v in enumerate(vectors):
        trial = [[vectors[j].get(k, QQ(0)) for k in keys] for j in chosen + [i]]
        if _rank(trial) == len(chosen) + 1:
            chosen.append(i)
    return chosen


def _shift_power(m: int, k: int) -> list[list]:
    return [[QQ(int(j - i == k)) for j in range(m)] for i in range(m)]


def _diag_unit(m: int, r: int) -> list[list]:
    return [[QQ(int(i == j == r)) for j in range(m)] for i in range(m)]


def solve_closed_logarithmic(problem: AnsatzProblem, triangular: bool = False) -> list[AnsatzCandidate]:
    """Basis of A = sum_i C_i dlog L_i with pairwise commuting constant C_i.

    Default: C_i diagonal.  ``triangular``: C_i upper-triangular Toeplitz, i.e.
    polynomials in the nilpotent shift.  Either family is commutative, so each
    basis element is flat; regularity at infinity holds for every dlog form.
    Dependent dlog forms are dropped so the basis is linearly independent.
    """
    m = problem.size
    K = problem.field
    forms = dlog_forms(problem)
    blocks = [_shift_power(m, k) for k in range(m)] if triangular else [_diag_unit(m, r) for r in range(m)]
    out = []
    for i in independent_dlogs(problem):
        for C in blocks:
            mats = [[[K(C[r][c]) * w for c in range(m)] for r in range(m)] for w in forms[i]]
            out.append(AnsatzCandidate(mats))
    return out


def candidate_coefficients(system: IntegrabilitySystem, candidate: AnsatzCandidate) -> list | None:
    """Values of the unknowns reproducing ``candidate`` (None if outside the ansatz)."""
    R = system.ring
    k = len(system.unknowns)
    rows_map = system.coefficient_map()
    target: dict = {}
    for mu, M in enumerate(candidate.matrices):
        for i, row in enumerate(M):
            for j, f in enumerate(row):
                if not f:
                    continue
                num = to_ring(f.numer, R) * system.clearing
                q, r = divmod(num, to_ring(f.denom, R))
                if r:
                    return None
                for mono, c in q.terms():
                    target[(mu, i, j, mono[k:])] = c
    keys = sorted(set(rows_map) | set(target))
    rows = [rows_map.get(key, [QQ(0)] * k) for key in keys]
    rhs = [target.get(key, QQ(0)) for key in keys]
    return qq_solve(rows, rhs)


# -- verification -------------------------------------------------------------

@dataclass
class AnsatzReport:
    flatness: object
    poles: object
    infinity: object

    @property
    def flat(self) -> bool:
        return self.flatness.verdict

    @property
    def regular(self) -> bool:
        return self.infinity.verdict

    @property
    def pole_clean(self) -> bool:
        return self.poles.verdict

    @property
    def verdict(self) -> bool:
        return self.flat and self.regular and self.pole_clean

    def to_json(self) -> dict:
        return {"verdict": self.verdict, "flat": self.flatness.to_json(), "poles": self.poles.to_json(),
                "infinity": self.infinity.to_json()}


def verify_ansatz(problem: AnsatzProblem, candidate: AnsatzCandidate, lines: int = 10, seed: int = 0) -> AnsatzReport:
    if len(candidate.matrices) != len(problem.variables):
        raise ValueError("one matrix per variable expected")
    for M in candidate.matrices:
        if len(M) != problem.size or any(len(r) != problem.size for r in M):
            raise ValueError("candidate matrix size does not match the problem")
    K = problem.field
    mats = [[[K(f) if not hasattr(f, "field") else f for f in row] for row in M] for M in candidate.matrices]
    conn = AnsatzCandidate(mats).connection(problem)
    return AnsatzReport(check_flatness(conn), check_pole_structure(conn, problem.divisor, parameters=()),
                        check_regularity_at_infinity(conn, lines, seed))

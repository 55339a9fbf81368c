import pytest

from gml.algebra import (
    depends_on,
    format_poly,
    gen,
    normalize_factor,
    parse_poly,
    poly_factor,
    poly_ring,
    sylvester_resultant,
    to_ring,
)
from gml.graph import symanzik_polynomials
from gml.landau import (
    LandauPolynomial,
    LandauStratum,
    compute_landau_set,
    eliminate,
    landau_eliminate,
    landau_membership_check,
    landau_strata,
)
from gml.pipeline import load_catalog

KALLEN = "s^2 + m1sq^2 + m2sq^2 - 2*s*m1sq - 2*s*m2sq - 2*m1sq*m2sq"


def inv(graph, text):
    return normalize_factor(parse_poly(text, poly_ring(graph.variable_order)))


def texts(polys):
    return {format_poly(getattr(p, "poly", p)) for p in polys}


def test_strata_counts():
    assert len(landau_strata(load_catalog("tadpole"))) == 2
    bubble = landau_strata(load_catalog("bubble-massive"))
    assert len(bubble) == 6
    assert {s.on_shell for s in bubble} == {(1, 2), (1,), (2,)}
    assert len(landau_strata(load_catalog("triangle-massless"))) == 14


def test_strata_partition_edges():
    g = load_catalog("triangle-one-mass")
    strata = landau_strata(g)
    assert strata == landau_strata(g)
    for s in strata:
        assert s.on_shell
        assert not set(s.on_shell) & set(s.contracted)
        assert set(s.on_shell) | set(s.contracted) == set(g.edge_ids)
    assert [s.second_type for s in strata[:2]] == [False, True]


def test_bubble_leading_is_kallen():
    g = load_catalog("bubble-massive")
    out = landau_eliminate(g, LandauStratum((), (1, 2), False))
    assert texts(out) == texts([inv(g, KALLEN)])
    assert all(lp.verified for lp in out)


def test_kallen_matches_sylvester_oracle():
    g = load_catalog("bubble-massive")
    U, F = symanzik_polynomials(g)
    R = U.ring
    a1, a2 = gen(R, "alpha1"), gen(R, "alpha2")
    e1 = F.diff(a1).subs([(a1, 1)])
    e2 = F.diff(a2).subs([(a1, 1)])
    res = sylvester_resultant(e1, e2, "alpha2")
    fac = poly_factor(res)
    lam = to_ring(inv(g, KALLEN), R)
    assert [f for f, _ in fac.factors if f == lam] == [lam]
    got = landau_eliminate(g, LandauStratum((), (1, 2), False))[0].poly
    # coefficient by coefficient
    assert dict(to_ring(got, R).terms()) == dict(lam.terms())


def test_kallen_threshold_root():
    # s = (m1 + m2)^2 with m1sq = a^2, m2sq = b^2
    R = poly_ring(("s", "m1sq", "m2sq", "a", "b"))
    lam = parse_poly(KALLEN, R)
    a, b = gen(R, "a"), gen(R, "b")
    assert not lam.compose([(gen(R, "s"), (a + b) ** 2), (gen(R, "m1sq"), a ** 2), (gen(R, "m2sq"), b ** 2)])


def test_massless_bubble_leading():
    g = load_catalog("bubble-massless")
    assert texts(landau_eliminate(g, LandauStratum((), (1, 2), False))) == {"s"}


def test_bubble_substratum_mass():
    g = load_catalog("bubble-massive")
    out = landau_eliminate(g, LandauStratum((2,), (1,), False))
    assert texts(out) == {"m1sq"} and out[0].verified


def test_degenerate_chart_recorded():
    g = load_catalog("bubble-massless")
    res = landau_eliminate(g, LandauStratum((2,), (1,), False), details=True)
    assert res.candidates == [] and res.degenerate_charts == [1]


def test_membership_examples():
    g = load_catalog("bubble-massive")
    lead = LandauStratum((), (1, 2), False)
    assert landau_membership_check(g, LandauPolynomial(inv(g, KALLEN), lead), lead, 20) is True
    assert landau_membership_check(g, inv(g, "s - 17"), lead, 20) is False
    t = load_catalog("tadpole")
    sub = LandauStratum((), (1,), False)
    assert landau_membership_check(t, inv(t, "msq"), sub, 5) is True


def test_membership_rejects_at_fixed_masses():
    # s = 17 with m1sq = 1, m2sq = 4 is not a threshold: lambda(17, 1, 4) != 0
    g = load_catalog("bubble-massive")
    lead = LandauStratum((), (1, 2), False)
    p = inv(g, "s - 17")
    assert landau_membership_check(g, p, lead, 5, seed=3) is False


def test_massive_bubble_set():
    g = load_catalog("bubble-massive")
    first = compute_landau_set(g, "off")
    assert texts(first.polynomials) == texts([inv(g, KALLEN), inv(g, "m1sq"), inv(g, "m2sq")])
    both = compute_landau_set(g, "both")
    assert texts(both.polynomials) == texts([inv(g, KALLEN), inv(g, "m1sq"), inv(g, "m2sq"), inv(g, "s")])
    assert texts(compute_landau_set(g, "on").polynomials) == {"s"}


def test_massless_bubble_set():
    g = load_catalog("bubble-massless")
    assert texts(compute_landau_set(g, "off").polynomials) == {"s"}
    assert texts(compute_landau_set(g, "both").polynomials) == {"s"}


def test_mass_relabeling_symmetry():
    g = load_catalog("bubble-massive")
    polys = compute_landau_set(g, "both").landau_set()
    R = polys[0].ring
    m1, m2 = gen(R, "m1sq"), gen(R, "m2sq")
    swapped = {normalize_factor(p.compose([(m1, m2), (m2, m1)])) for p in polys}
    assert swapped == set(polys)


def test_triangle_sets():
    g = load_catalog("triangle-massless")
    got = texts(compute_landau_set(g, "both").polynomials)
    lam = "p1sq^2 + p2sq^2 + p3sq^2 - 2*p1sq*p2sq - 2*p2sq*p3sq - 2*p1sq*p3sq"
    assert got == texts([inv(g, t) for t in ("p1sq", "p2sq", "p3sq", lam)])
    g = load_catalog("triangle-one-mass")
    got = texts(compute_landau_set(g, "both").polynomials)
    assert texts([inv(g, "p1sq - msq"), inv(g, "p3sq - msq"), inv(g, "msq")]) <= got


@pytest.mark.parametrize("name", ["bubble-massive", "triangle-one-mass"])
def test_emitted_polynomials_are_clean(name):
    g = load_catalog(name)
    for lp in compute_landau_set(g, "both").polynomials:
        p = lp.poly
        assert lp.verified is True
        assert depends_on(p) <= set(g.variable_order)
        assert normalize_factor(p) == p
        fac = poly_factor(p)
        assert fac.factors == [(p, 1)]


def test_parallel_matches_sequential():
    g = load_catalog("bubble-massive")
    a = compute_landau_set(g, "both", threads=1)
    b = compute_landau_set(g, "both", threads=2)
    assert [(lp.text, lp.stratum, lp.verified) for lp in a.polynomials] == \
        [(lp.text, lp.stratum, lp.verified) for lp in b.polynomials]


def test_eliminate_splits_on_common_factor():
    R = poly_ring(("x", "y", "s"))
    x, y, s = R.gens
    branches = eliminate([x * (y - s), x * (y - 1)], ["x"])
    assert [] in branches
    assert any(sorted(map(format_poly, b)) == sorted(["y - s", "y - 1"]) for b in branches)


def test_bad_arguments():
    g = load_catalog("tadpole")
    with pytest.raises(ValueError):
        compute_landau_set(g, "sometimes")
    with pytest.raises(ValueError):
        landau_eliminate(g, LandauStratum((1,), (), False))

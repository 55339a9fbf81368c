import pytest

from conftest import catalog_connection
from gml.algebra import depends_on, format_ratfun, normalize_factor, parse_poly, parse_ratfun, poly_factor
from gml.graph import graph_from_json
from gml.ibp import (
    IBPError,
    IncompleteFamily,
    UnreducedIntegral,
    build_connection,
    default_seed_sum,
    derivative_in_invariant,
    family_from_graph,
    generate_ibp_identities,
    homogeneity_check,
    ibp_identity,
    laporta_key,
    reduce_family,
    seeds_for,
)
from gml.pipeline import CATALOG, load_catalog


def fam_of(name):
    return family_from_graph(load_catalog(name))


def R(fam, text):
    return parse_ratfun(text, fam.field)


def _squares(fam):
    """Propagators as (loop coefficient, external coefficients, mass) up to overall sign of the momentum."""
    out = []
    for p in fam.propagators:
        s = p.loop[0]
        out.append((tuple(s * x for x in p.ext), p.mass))
    return out


def test_family_propagators():
    assert _squares(fam_of("tadpole")) == [((), "msq")]
    assert _squares(fam_of("bubble-massive")) == [((0,), "m1sq"), ((1,), "m2sq")]
    assert _squares(fam_of("triangle-massless")) == [((0, 0), None), ((1, 0), None), ((1, 1), None)]


def test_incomplete_family():
    sunrise = {"vertices": [1, 2],
               "edges": [{"id": i, "ends": [1, 2], "mass": "m"} for i in (1, 2, 3)],
               "legs": [{"vertex": 1, "momentum": "p", "square": "s"}, {"vertex": 2, "momentum": "p2", "square": "s"}],
               "invariants": ["s", "msq"], "variable_order": ["s", "msq"]}
    with pytest.raises(IncompleteFamily, match="irreducible-numerator"):
        family_from_graph(graph_from_json(sunrise))


def test_tadpole_identity():
    fam = fam_of("tadpole")
    ident = ibp_identity(fam, (1,), 0, ("q", 0))
    assert ident.terms == {(1,): R(fam, "d - 2"), (2,): R(fam, "-2*msq")}


def test_identity_counts():
    for name, per_seed in [("bubble-massive", 2), ("triangle-massless", 3)]:
        fam = fam_of(name)
        seeds = [(1,) * fam.size, (2,) + (1,) * (fam.size - 1)]
        assert len(generate_ibp_identities(fam, seeds)) == per_seed * len(seeds)
    assert generate_ibp_identities(fam_of("tadpole"), []) == []


def test_identity_coefficients_canonical():
    fam = fam_of("bubble-massive")
    for ident in generate_ibp_identities(fam, seeds_for(fam, 4)):
        assert len(ident.terms) >= 2
        for c in ident.terms.values():
            assert c and c.field is fam.field


def test_laporta_key_ordering():
    assert laporta_key((1, 1)) > laporta_key((2, 0))
    assert laporta_key((2, 1)) > laporta_key((1, 1))
    assert laporta_key((1, 1, -1)) > laporta_key((1, 1, 0))


def test_tadpole_reduction():
    fam = fam_of("tadpole")
    table = reduce_family(fam)
    assert table.masters == [(1,)]
    assert table.reduce({(2,): fam.field.one}) == {(1,): R(fam, "(d - 2)/(2*msq)")}


def test_massless_bubble_reduction():
    fam = fam_of("bubble-massless")
    table = reduce_family(fam)
    assert table.masters == [(1, 1)]
    one = fam.field.one
    assert table.reduce({(1, 0): one}) == {}
    assert table.reduce({(0, 1): one}) == {}


def test_massive_bubble_masters_stable():
    fam = fam_of("bubble-massive")
    small = reduce_family(fam, 5)
    big = reduce_family(fam, 7)
    assert sorted(small.masters) == sorted([(1, 1), (1, 0), (0, 1)])
    assert small.masters == big.masters


@pytest.mark.parametrize("name", CATALOG)
def test_idempotence(name):
    _, table, _ = catalog_connection(name)
    for nu, rule in list(table.rules.items()):
        assert table.reduce(rule) == rule
        assert table.reduce(table.reduce({nu: table.field.one})) == rule
    for m in table.masters:
        assert table.reduce({m: table.field.one}) == {m: table.field.one}


def test_unreduced_is_explicit():
    fam = fam_of("tadpole")
    table = reduce_family(fam, 2)
    with pytest.raises(UnreducedIntegral) as err:
        table.reduce({(9,): fam.field.one})
    assert err.value.code == "ibp/unreduced"


def test_derivative_examples():
    t = fam_of("tadpole")
    assert derivative_in_invariant(t, (1,), "msq") == {(2,): t.field.one}
    b = fam_of("bubble-massive")
    assert derivative_in_invariant(b, (1, 1), "m1sq") == {(2, 1): b.field.one}
    # (1/(2s)) p.d/dp acting on 1/(D1 D2), expanded by hand:
    # p.d/dp I(1,1) = -I(1,1) + I(0,2) - (s + m2sq - m1sq) I(1,2)
    assert derivative_in_invariant(b, (1, 1), "s") == {
        (1, 1): R(b, "-1/(2*s)"),
        (0, 2): R(b, "1/(2*s)"),
        (1, 2): R(b, "-(s + m2sq - m1sq)/(2*s)"),
    }
    with pytest.raises(IBPError):
        derivative_in_invariant(b, (1, 1), "t")


def test_connection_examples():
    fam, _, conn = catalog_connection("tadpole")
    assert [(A.invariant, format_ratfun(A.entries[0][0])) for A in conn] == [("msq", "(d - 2)/(2*msq)")]
    fam, _, conn = catalog_connection("bubble-massless")
    assert [(A.invariant, format_ratfun(A.entries[0][0])) for A in conn] == [("s", "(d - 4)/(2*s)")]


def test_massive_bubble_connection_denominators():
    fam, table, conn = catalog_connection("bubble-massive")
    assert len(conn) == 3 and all(len(A.entries) == 3 for A in conn)
    ring = fam.field.ring
    allowed = {normalize_factor(parse_poly(t, ring)) for t in
               ("s^2 + m1sq^2 + m2sq^2 - 2*s*m1sq - 2*s*m2sq - 2*m1sq*m2sq", "s", "m1sq", "m2sq")}
    for A in conn:
        for row in A.entries:
            for f in row:
                if not f:
                    continue
                for g, _ in poly_factor(f.denom).factors:
                    assert g in allowed or depends_on(g) <= {"d"}


@pytest.mark.parametrize("name", CATALOG)
def test_homogeneity_zero(name):
    fam, _, conn = catalog_connection(name)
    res = homogeneity_check(fam, conn)
    assert all(not f for row in res for f in row)


def test_homogeneity_single_row():
    fam, table, conn = catalog_connection("tadpole")
    assert homogeneity_check(fam, conn, (1,)) == [[fam.field.zero]]


def test_homogeneity_needs_all_directions():
    fam, _, conn = catalog_connection("bubble-massive")
    with pytest.raises(IBPError):
        homogeneity_check(fam, conn[:1])


def test_homogeneity_detects_error():
    fam, table, conn = catalog_connection("tadpole")
    broken = build_connection(fam, table)
    broken[0].entries[0][0] = broken[0].entries[0][0] * 2
    assert homogeneity_check(fam, broken) != [[fam.field.zero]]


@pytest.mark.parametrize("name", [n for n in CATALOG if n != "triangle-one-mass"] + [
    pytest.param("triangle-one-mass", marks=pytest.mark.slow)])
def test_seed_stability(name):
    fam, table, conn = catalog_connection(name)
    bigger = reduce_family(fam, default_seed_sum(fam) + 1)
    assert bigger.masters == table.masters
    conn2 = build_connection(fam, bigger)
    assert [A.entries for A in conn2] == [A.entries for A in conn]


def test_seed_validation():
    fam = fam_of("bubble-massive")
    with pytest.raises(IBPError):
        generate_ibp_identities(fam, [(1, 1, 1)])

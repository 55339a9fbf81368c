import math
from fractions import Fraction

import pytest
import sympy

from conftest import catalog_connection, catalog_landau
from gml.algebra import format_poly, frac_field, parse_poly, parse_ratfun
from gml.analysis import (
    ForeignFactor,
    NumericError,
    check_flatness,
    check_pole_structure,
    check_regularity_at_infinity,
    curvature,
    evaluate_integral,
    leinartas_decompose,
    nullstellensatz_certificate,
    numeric_validate,
    pole_order_at_infinity,
    restrict_to_line,
)
from gml.ibp import ConnectionMatrix
from gml.pipeline import CATALOG

ZK = frac_field(("z1", "z2"))
Z1 = frac_field(("z",))
SK = frac_field(("s", "d"))


def polys(K, *texts):
    return [parse_poly(t, K.ring) for t in texts]


def intersect(components) -> bool:
    """Independent oracle: the components have a common complex zero."""
    if not components:
        return True
    gb = sympy.groebner([sympy.sympify(format_poly(c).replace("^", "**")) for c in components])
    return list(gb.exprs) != [1]


def total(terms, divisor, K):
    acc = K.zero
    for t in terms:
        acc += t.value(divisor)
    return acc


@pytest.mark.parametrize("K,entry,divisor,expected_terms", [
    (Z1, "1/(z*(z - 1))", ("z", "z - 1"), 2),
    (ZK, "1/(z1*z2)", ("z1", "z2"), 1),
    (ZK, "(z1 + z2)/(z1*z2*(z1 - z2))", ("z1", "z2", "z1 - z2"), 1),
    (SK, "(d - 4)/(2*s)", ("s",), 1),
    (SK, "3/(d - 1)", ("s",), 1),
])
def test_leinartas_examples(K, entry, divisor, expected_terms):
    f = parse_ratfun(entry, K)
    div = polys(K, *divisor)
    terms = leinartas_decompose(f, div)
    assert total(terms, div, K) == f
    assert len(terms) == expected_terms
    for t in terms:
        assert intersect([div[i] for i in t.components])


def test_leinartas_no_common_zero_split():
    div = polys(Z1, "z", "z - 1")
    terms = leinartas_decompose(parse_ratfun("1/(z*(z - 1))", Z1), div)
    assert {(t.components, str(t.numerator)) for t in terms} == {((0,), "-1"), ((1,), "1")}


def test_leinartas_zero_and_foreign():
    assert leinartas_decompose(SK.zero, polys(SK, "s")) == []
    with pytest.raises(ForeignFactor) as err:
        leinartas_decompose(parse_ratfun("1/(s - 5)", SK), polys(SK, "s"))
    assert format_poly(err.value.factor) == "s - 5"
    assert err.value.code == "analysis/foreign-factor"


def test_nullstellensatz_certificate():
    z1, z2 = ZK.ring.gens
    ps = [z1, z1 - 1]
    h = nullstellensatz_certificate(ps)
    assert sum((a * b for a, b in zip(h, ps)), ZK.ring.zero) == 1
    assert nullstellensatz_certificate([z1, z2]) is None
    assert nullstellensatz_certificate([z1 * z2 - 1, z1], 1) is not None


@pytest.mark.parametrize("name", CATALOG)
def test_catalog_entries_decompose(name):
    fam, _, conn = catalog_connection(name)
    div = catalog_landau(name).landau_set()
    for A in conn:
        for row in A.entries:
            for f in row:
                terms = leinartas_decompose(f, div)
                assert total(terms, [parse_poly(format_poly(p), fam.field.ring) for p in div], fam.field) == f


def conn1(K, inv, text):
    return ConnectionMatrix(inv, [(1,)], [[parse_ratfun(text, K)]])


def test_pole_examples():
    bad = check_pole_structure([conn1(SK, "s", "(d - 2)/s^2")], polys(SK, "s"))
    assert not bad.verdict and bad.findings[0]["kind"] == "multiplicity" and bad.findings[0]["multiplicity"] == 2
    good = check_pole_structure([conn1(ZK, "z1", "3/(z1*z2)")], polys(ZK, "z1", "z2"))
    assert good.verdict and good.entries_checked == 1
    foreign = check_pole_structure([conn1(SK, "s", "1/(s - 5)")], polys(SK, "s"))
    assert [f["kind"] for f in foreign.findings] == ["foreign"]
    assert check_pole_structure([conn1(SK, "s", "(d - 4)/((d - 3)*s)")], polys(SK, "s")).verdict


@pytest.mark.parametrize("name", CATALOG)
def test_catalog_pole_structure(name):
    _, _, conn = catalog_connection(name)
    rep = check_pole_structure(conn, catalog_landau(name).landau_set())
    assert rep.verdict, rep.findings


def test_pole_check_catches_missing_component():
    _, _, conn = catalog_connection("bubble-massive")
    div = [p for p in catalog_landau("bubble-massive").landau_set() if format_poly(p) != "s"]
    rep = check_pole_structure(conn, div)
    assert not rep.verdict and {f["factor"] for f in rep.findings} == {"s"}


def test_flatness_examples():
    _, _, conn = catalog_connection("tadpole")
    rep = check_flatness(conn)
    assert rep.verdict and rep.pairs_checked == 0
    dlog = [ConnectionMatrix("z1", [(1,)], [[parse_ratfun("2/z1 + 1/(z1 - z2)", ZK)]]),
            ConnectionMatrix("z2", [(1,)], [[parse_ratfun("-1/(z1 - z2)", ZK)]])]
    assert check_flatness(dlog).verdict
    Np = [[ZK.zero, ZK.one], [ZK.zero, ZK.zero]]
    Nm = [[ZK.zero, ZK.zero], [ZK.one, ZK.zero]]
    z1, z2 = (ZK(g) for g in ZK.ring.gens)
    pair = [ConnectionMatrix("z1", [(1,), (2,)], [[e / z1 for e in r] for r in Np]),
            ConnectionMatrix("z2", [(1,), (2,)], [[e / z2 for e in r] for r in Nm])]
    rep = check_flatness(pair)
    assert not rep.verdict
    # curvature reduces to -[N+, N-]/(z1 z2) = -diag(1, -1)/(z1 z2)
    M = curvature(pair[0], "z1", pair[1], "z2")
    assert M == [[-1 / (z1 * z2), ZK.zero], [ZK.zero, 1 / (z1 * z2)]]


def test_flatness_dimension_mismatch():
    a = conn1(ZK, "z1", "1/z1")
    b = ConnectionMatrix("z2", [(1,), (2,)], [[ZK.zero] * 2] * 2)
    with pytest.raises(ValueError):
        check_flatness([a, b])


@pytest.mark.parametrize("name", CATALOG)
def test_catalog_flatness(name):
    _, _, conn = catalog_connection(name)
    assert check_flatness(conn).verdict


def test_infinity_examples():
    assert check_regularity_at_infinity([conn1(SK, "s", "(d - 4)/(2*s)")]).verdict
    rep = check_regularity_at_infinity([conn1(SK, "s", "s")])
    assert not rep.verdict
    assert {f["pole_order"] for f in rep.findings} == {3}
    _, _, conn = catalog_connection("bubble-massless")
    rep = check_regularity_at_infinity(conn, 10)
    assert rep.verdict and len(rep.lines) == 10


def test_pole_order_on_line():
    res = restrict_to_line([conn1(SK, "s", "1/s")], {"s": Fraction(1)}, {"s": Fraction(2)})
    M, ti = res
    assert pole_order_at_infinity(M[0][0], ti) == 1
    assert restrict_to_line([conn1(SK, "s", "1/s")], {"s": Fraction(0)}, {"s": Fraction(0)}) is not None
    assert pole_order_at_infinity(SK.zero, 0) is None


def test_infinity_deterministic():
    _, _, conn = catalog_connection("bubble-massive")
    a = check_regularity_at_infinity(conn, 4, seed=3).to_json()
    b = check_regularity_at_infinity(conn, 4, seed=3).to_json()
    assert a == b and a["verdict"]


def test_tadpole_value():
    fam, _, _ = catalog_connection("tadpole")
    val = evaluate_integral(fam, (1,), {"msq": Fraction(1)}, 3)
    assert abs(float(val) - 2 * math.sqrt(math.pi)) < 1e-12
    val = evaluate_integral(fam, (1,), {"msq": Fraction(4)}, 3)
    assert abs(float(val) - 4 * math.sqrt(math.pi)) < 1e-12


def test_massless_bubble_value():
    fam, _, _ = catalog_connection("bubble-massless")
    val = float(evaluate_integral(fam, (1, 1), {"s": Fraction(-4)}, 3))
    # d = 3, s = -4: Gamma(1/2) * int_0^1 (a(1-a))^(-1/2) da * 4^(-1/2) = sqrt(pi) * pi / 2
    assert abs(val - math.sqrt(math.pi) * math.pi / 2) < 1e-12


@pytest.mark.parametrize("name,point,tol", [
    ("tadpole", {"msq": 1}, 1e-8),
    ("bubble-massless", {"s": -1}, 1e-8),
    ("bubble-massive", {"s": -1, "m1sq": 1, "m2sq": 2}, 1e-6),
])
def test_numeric_validation(name, point, tol):
    fam, _, conn = catalog_connection(name)
    for A in conn:
        assert numeric_validate(fam, conn, point, 3, A.invariant) < tol


def test_numeric_negative_control():
    fam, _, conn = catalog_connection("tadpole")
    wrong = [ConnectionMatrix("msq", conn[0].masters, [[parse_ratfun("(d - 1)/(2*msq)", fam.field)]])]
    assert numeric_validate(fam, wrong, {"msq": 1}, 3, "msq") > 0.1


def test_numeric_errors():
    fam, _, conn = catalog_connection("bubble-massless")
    with pytest.raises(NumericError, match="Euclidean"):
        evaluate_integral(fam, (1, 1), {"s": Fraction(1)}, 3)
    tad, _, tconn = catalog_connection("tadpole")
    with pytest.raises(NumericError, match="pole"):
        evaluate_integral(tad, (1,), {"msq": Fraction(1)}, 2)
    with pytest.raises(NumericError):
        evaluate_integral(fam, (1, -1), {"s": Fraction(-1)}, 3)
    with pytest.raises(ValueError):
        numeric_validate(fam, conn, {}, 3, "s")
    with pytest.raises(ValueError):
        numeric_validate(fam, conn, {"s": -1}, 3, "t")

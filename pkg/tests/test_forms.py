import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from chernweil.forms import (ChartMap, ChartMismatch, Form, MatrixForm, d, dz, dzbar, mat_mul,
                             pullback, trace, wedge)
from chernweil.geometry import hopf_connection
from chernweil.symexpr import Chart, Coord, I, const, normalize, parse

from strategies import CHART, even_matrices, forms, points

slow = settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.too_slow])

C = CHART
x1, y1, x2, y2 = (Coord(c) for c in C.coords)


def dx(name, chart=C):
    return Form.dcoord(chart, name)


def test_wedge_examples():
    assert wedge(dx("x1"), dx("x1")).is_zero()
    # (dx + i dy) ^ (dx - i dy) = -2i dx ^ dy
    assert wedge(dz(C, 1), dzbar(C, 1)) == wedge(dx("x1"), dx("y1")) * (-2 * I)


def test_complex_volume_is_minus_four():
    vol = wedge(wedge(dz(C, 1), dzbar(C, 1)), wedge(dz(C, 2), dzbar(C, 2)))
    assert vol == Form.volume(C) * (-4)


def test_d_example():
    ch = Chart(("x", "y"))
    x = Coord("x")
    assert d(Form.dcoord(ch, "y") * x) == wedge(Form.dcoord(ch, "x"), Form.dcoord(ch, "y"))


def test_coefficient_sign_and_orientation():
    w = wedge(dx("y1"), dx("x1"))
    assert w.coefficient("x1", "y1") == normalize(const(-1))
    assert w.coefficient("y1", "x1") == normalize(const(1))
    flipped = Chart(C.coords, orientation=("y1", "x1", "x2", "y2"))
    top = Form(flipped, {(0, 1, 2, 3): const(1)})
    assert top.top() == normalize(const(-1))


def test_terms_above_dimension_vanish():
    two = wedge(dx("x1"), dx("y1"))
    assert wedge(Form.volume(C), two).is_zero()
    with pytest.raises(ValueError):
        Form(C, {(0, 0): const(1)})


def test_chart_mismatch():
    other = Chart(("a", "b"))
    with pytest.raises(ChartMismatch):
        wedge(dx("x1"), Form.dcoord(other, "a"))
    with pytest.raises(ChartMismatch):
        mat_mul(MatrixForm.identity(C, 2), MatrixForm.identity(other, 2))
    with pytest.raises(ValueError):
        mat_mul(MatrixForm.identity(C, 2), MatrixForm.identity(C, 3))


def test_trace_of_zero_and_identity_product():
    assert trace(MatrixForm.zero(C, 3)).is_zero()
    A = MatrixForm.from_fn(2, lambda i, j: dx(C.coords[i]) * Coord(C.coords[j]))
    assert mat_mul(MatrixForm.identity(C, 2), A) == A


def test_hopf_potential_derivative():
    """d of the local potential gives i dalpha ^ dalphabar / (1+|alpha|^2)^2."""
    H = hopf_connection()
    base = H.base_charts["t0"]
    a, b = Coord("a"), Coord("b")
    A = H.connection("t0").omega[0, 0]
    want = wedge(dz(base, "", "a", "b"), dzbar(base, "", "a", "b")) * (I / (1 + a * a + b * b) ** 2)
    assert d(A) == want


def test_hopf_summand_pullback_coefficient():
    H = hopf_connection()
    Cs = H.theta.chart
    z0 = Coord("x0") + I * Coord("y0")
    zb0 = Coord("x0") - I * Coord("y0")
    s = dzbar(Cs, "0") * z0 - dz(Cs, "0") * zb0
    pb = pullback(H.trivializations["t0"], s)
    a, b = Coord("a"), Coord("b")
    assert pb.coefficient("lam") == normalize(-2 * I / (1 + a * a + b * b))


def test_pullback_identity():
    f = Form(C, {(0,): x2 * y1, (1, 3): const(3) + x1})
    assert pullback(ChartMap.identity(C), f) == f


def test_text_round_trip_examples():
    f = Form(C, {(): const(2), (0, 2): x1 / (1 + y2 ** 2), (1,): I * x2})
    assert Form.from_text(C, f.to_text()) == f
    M = MatrixForm.from_fn(2, lambda i, j: f * (i + 2 * j))
    assert MatrixForm.from_text(C, 2, M.to_text()) == M
    assert Form.from_text(C, "0").is_zero()


@slow
@given(forms())
def test_d_squared_vanishes(f):
    assert d(d(f)).is_zero()


@slow
@given(st.integers(0, 2), st.integers(0, 2), st.data())
def test_graded_anticommutativity(p, q, data):
    a = data.draw(forms(p))
    b = data.draw(forms(q))
    ab, ba = wedge(a, b), wedge(b, a)
    assert ab == ba * (-1) ** (p * q)
    assert ab.is_zero() or ab.degrees() == {p + q}


@slow
@given(st.integers(0, 2), st.data())
def test_d_is_antiderivation(p, data):
    a = data.draw(forms(p, max_terms=2))
    b = data.draw(forms(max_terms=2))
    assert d(wedge(a, b)) == wedge(d(a), b) + wedge(a, d(b)) * (-1) ** p


@slow
@given(forms(max_terms=2), forms(max_terms=2), forms(max_terms=2))
def test_wedge_associative(a, b, c):
    assert wedge(wedge(a, b), c) == wedge(a, wedge(b, c))


@slow
@given(even_matrices(), even_matrices(), points)
def test_trace_cyclic(A, B, p):
    lhs = trace(mat_mul(A, B)).evaluate(p)
    rhs = trace(mat_mul(B, A)).evaluate(p)
    for k in set(lhs) | set(rhs):
        assert lhs.get(k, 0) == pytest.approx(rhs.get(k, 0), rel=1e-9, abs=1e-9)


@settings(max_examples=15, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(even_matrices(), even_matrices(), even_matrices())
def test_matrix_product_associative(A, B, Cm):
    assert mat_mul(mat_mul(A, B), Cm) == mat_mul(A, mat_mul(B, Cm))


_SRC = Chart(("s", "t", "u", "v"))
_MID = Chart(("p", "q", "r", "w"))
_poly = st.sampled_from([
    Coord("s") * Coord("t"), Coord("u") + Coord("v") ** 2, Coord("s") / (1 + Coord("t") ** 2),
    Coord("v") - Coord("u") * Coord("s"), const(2) * Coord("t"),
])


@st.composite
def chart_maps(draw, src, tgt):
    rename = dict(zip(_SRC.coords, src.coords))
    comps = []
    for _ in tgt.coords:
        e = draw(_poly)
        comps.append(parse(" ".join(rename.get(tok, tok) for tok in _tokens(str(e)))))
    return ChartMap(src, tgt, comps)


def _tokens(text):
    import re
    return re.findall(r"[A-Za-z_][A-Za-z_0-9]*|\S", text)


@slow
@given(chart_maps(_SRC, C), forms(max_terms=2))
def test_pullback_commutes_with_d(phi, f):
    assert pullback(phi, d(f)) == d(pullback(phi, f))


@slow
@given(chart_maps(_SRC, C), forms(1, max_terms=2), forms(1, max_terms=2))
def test_pullback_is_multiplicative(phi, a, b):
    assert pullback(phi, wedge(a, b)) == wedge(pullback(phi, a), pullback(phi, b))


@settings(max_examples=15, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(chart_maps(_SRC, _MID), chart_maps(_MID, C), forms(max_terms=2))
def test_pullback_of_composition(inner, outer, f):
    assert pullback(inner, pullback(outer, f)) == pullback(outer.compose(inner), f)


def test_pullback_chart_mismatch():
    phi = ChartMap(_SRC, C, [Coord("s")] * 4)
    with pytest.raises(ChartMismatch):
        pullback(phi, Form.dcoord(_SRC, "s"))
    with pytest.raises(ValueError):
        ChartMap(_SRC, C, [Coord("s")] * 3)


def test_evaluate_matrix():
    M = MatrixForm.scalars(C, [[x1, const(0)], [const(1), y1]])
    vals = M.evaluate({"x1": 2.0, "y1": 3.0})
    np.testing.assert_allclose(vals[()], [[2, 0], [1, 3]])

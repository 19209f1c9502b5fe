import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st
from scipy import integrate as sp

from chernweil.forms import Form, d, dz, dzbar, pullback, wedge
from chernweil.geometry import C2_CHART, CP2_CHART, hopf_connection
from chernweil.integrate import (QuadConfig, QuadResult, QuadratureError, fourier_coefficients, fourier_transform,
                                 integrate_chart, integrate_fiber_circle)
from chernweil.pipelines import bump, radial_integral
from chernweil.symexpr import PI, Chart, Coord, I, const, normalize

P2 = Chart(("x", "y"))
x, y = Coord("x"), Coord("y")
R2 = 1 + x * x + y * y


def vol2(coef, chart=P2):
    return Form(chart, {(0, 1): coef})


def test_radial_integral():
    r = radial_integral(QuadConfig())
    assert r.value.real == pytest.approx(1 / 8, rel=1e-9)
    assert abs(r.value.real - 1 / 8) <= 10 * r.error + 1e-15


def test_gaussian_callback_polar():
    g = lambda p: np.exp(-(p["x1"] ** 2 + p["y1"] ** 2 + p["x2"] ** 2 + p["y2"] ** 2))  # noqa: E731
    r = integrate_chart(g, QuadConfig(compactify="polar"), chart=CP2_CHART)
    assert r.value.real == pytest.approx(math.pi ** 2, rel=1e-8)
    assert abs(r.value.real - math.pi ** 2) <= 10 * r.error + 1e-15


@pytest.mark.parametrize("compactify", ["tan", "polar"])
def test_closed_form_2d(compactify):
    # int 1/(1+x^2+y^2)^2 over R^2 = pi
    r = integrate_chart(vol2(1 / R2 ** 2), QuadConfig(compactify=compactify))
    assert r.value == pytest.approx(math.pi, rel=1e-9)
    assert abs(r.value - math.pi) <= 10 * r.error + 1e-15


@pytest.mark.parametrize("compactify", ["tan", "polar"])
def test_stokes_2d(compactify):
    eta = Form(P2, {(0,): x * y / R2 ** 2, (1,): x ** 3 / R2 ** 3})
    r = integrate_chart(d(eta), QuadConfig(compactify=compactify))
    assert abs(r.value) < 1e-9


def test_complex_integrand_componentwise():
    r = integrate_chart(vol2((2 + 3 * I) / R2 ** 2))
    assert r.value == pytest.approx((2 + 3j) * math.pi, rel=1e-9)


def test_orientation_flip_is_exact():
    flipped = Chart(("x", "y"), orientation=("y", "x"))
    coef = (1 + x) / R2 ** 3
    a = integrate_chart(vol2(coef))
    b = integrate_chart(vol2(coef, flipped))
    assert b.value == -a.value


_coefs = st.sampled_from([1 / R2 ** 2, x * x / R2 ** 3, (x - y) ** 2 / R2 ** 4, const(3) / R2 ** 3])


@settings(max_examples=8, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(_coefs, _coefs, st.integers(-3, 3), st.integers(-3, 3))
def test_linearity(f, g, a, b):
    ra, rb = integrate_chart(vol2(f)), integrate_chart(vol2(g))
    rc = integrate_chart(vol2(f * a + g * b))
    bound = abs(a) * ra.error + abs(b) * rb.error + rc.error + 1e-12
    assert abs(rc.value - (a * ra.value + b * rb.value)) <= 10 * bound


def test_deterministic_and_thread_independent():
    form = vol2(x * x / R2 ** 3)
    runs = [integrate_chart(form, QuadConfig(threads=t)) for t in (1, 1, 4)]
    assert runs[0] == runs[1] == runs[2]


def test_errors():
    with pytest.raises(QuadratureError):
        integrate_chart(vol2(1 / R2), QuadConfig(max_subdiv=3))
    with pytest.raises(QuadratureError):
        integrate_chart(lambda p: np.full_like(p["x"], np.nan), chart=P2, domain={"x": (0, 1), "y": (0, 1)})
    with pytest.raises(ValueError):
        integrate_chart(Form.dcoord(P2, "x"))
    with pytest.raises(ValueError):
        integrate_chart(lambda p: 1.0)
    for bad in (dict(rtol=0), dict(max_subdiv=0), dict(compactify="log"), dict(rule="simpson")):
        with pytest.raises(ValueError):
            QuadConfig(**bad)
    assert integrate_chart(Form.zero(P2)) == QuadResult(0j, 0.0, 0)


def test_finite_domain_and_angular():
    r = integrate_chart(lambda p: p["x"] * p["y"], chart=P2, domain={"x": (0, 1), "y": (0, 2)})
    assert r.value == pytest.approx(1.0)
    lam = Chart(("lam",), angular=frozenset({"lam"}))
    r = integrate_chart(lambda p: np.cos(p["lam"]) ** 2, chart=lam)
    assert r.value == pytest.approx(math.pi, rel=1e-12)


# -- circle fibers -------------------------------------------------------------

def test_hopf_fiber_integrals():
    H = hopf_connection()
    for key in ("t0", "t1"):
        base = integrate_fiber_circle(H.local[key], "lam")
        assert base == Form.scalar(base.chart, normalize(PI * 2))
    z0 = Coord("x0") + I * Coord("y0")
    zb0 = Coord("x0") - I * Coord("y0")
    s = dzbar(C2_CHART, "0") * z0 - dz(C2_CHART, "0") * zb0
    comp = integrate_fiber_circle(pullback(H.trivializations["t0"], s), "lam")
    a, b = Coord("a"), Coord("b")
    assert comp == Form.scalar(comp.chart, -4 * I * PI / (1 + a * a + b * b))


def test_fiber_without_dlam_vanishes():
    ch = Chart(("a", "b", "lam"), angular=frozenset({"lam"}))
    f = Form(ch, {(0,): Coord("a"), (0, 1): const(2)})
    assert integrate_fiber_circle(f, "lam").is_zero()


def test_fiber_sign_bookkeeping():
    ch = Chart(("a", "lam", "b"), angular=frozenset({"lam"}))
    # da ^ dlam = -dlam ^ da, integrates to -2 pi da
    f = Form(ch, {(0, 1): const(1)})
    out = integrate_fiber_circle(f, "lam")
    assert out == Form(out.chart, {(0,): -2 * PI})


def test_fiber_commutes_with_base_wedge():
    H = hopf_connection()
    A = H.local["t0"]
    beta = Form(A.chart, {(0,): Coord("b") / (1 + Coord("a") ** 2)})
    base_beta = Form(integrate_fiber_circle(A, "lam").chart, {(0,): Coord("b") / (1 + Coord("a") ** 2)})
    # fiber-first convention: base forms pass through on the right, with a graded sign on the left
    assert integrate_fiber_circle(wedge(A, beta), "lam") == wedge(integrate_fiber_circle(A, "lam"), base_beta)
    assert integrate_fiber_circle(wedge(beta, A), "lam") == -wedge(base_beta, integrate_fiber_circle(A, "lam"))


# -- Fourier data ----------------------------------------------------------------

def _even(X):
    X = np.asarray(X, dtype=float)
    inside = np.abs(X) < 1
    return np.where(inside, np.exp(-1 / np.where(inside, 1 - X * X, 1.0)), 0.0)


def test_even_function_has_real_coefficients():
    c = fourier_coefficients(_even, 20, (-1.0, 1.0))
    assert max(abs(v.imag) for v in c.values()) < 1e-10


def test_coefficient_sum_recovers_value():
    c = fourier_coefficients(bump, 64, (-1.0, 1.0))
    assert sum(c.values()).real == pytest.approx(2 * math.pi * bump(0.0), abs=1e-6)


def test_zeroth_coefficient_matches_direct_quadrature():
    X = np.linspace(-1, 1, 200001)
    direct = sp.trapezoid(_even(X), X)
    assert fourier_transform(_even, 0, (-1.0, 1.0)).real == pytest.approx(direct, rel=1e-10)


def test_fourier_transform_of_gaussian():
    phi = lambda X: math.exp(-X * X)  # noqa: E731
    for zeta in (0.0, 1.5, 4.0):
        want = math.sqrt(math.pi) * math.exp(-zeta * zeta / 4)
        assert fourier_transform(phi, zeta, (-12.0, 12.0)) == pytest.approx(want, abs=1e-12)


def test_fourier_errors():
    with pytest.raises(ValueError):
        fourier_coefficients(_even, -1)
    with pytest.raises(QuadratureError):
        fourier_transform(lambda X: float("nan"), 2.0, (-1.0, 1.0))

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from chernweil.classes import (CohClass, JetFunction, MissingJet, TruncatedSeries, ahat_expansion, ahat_series,
                               chern_character, chern_weil_eval, genus_form, max_degree_component,
                               power_sum_expansion, word_expansion)
from chernweil.forms import Form, MatrixForm, mat_mul, trace, wedge
from chernweil.geometry import CP2_CHART, equivariant_curvature
from chernweil.symexpr import Chart, Coord, I

import oracles
from strategies import CHART, polynomials

slow = settings(max_examples=20, deadline=None, suppress_health_check=[HealthCheck.too_slow])

S2 = Chart(("a", "b"), name="S2")
THETA = Form(S2, {(0, 1): 2 / (1 + Coord("a") ** 2 + Coord("b") ** 2) ** 2})


def _block(A: MatrixForm, B: MatrixForm) -> MatrixForm:
    n, m = A.size, B.size
    zero = Form.zero(A.chart)

    def entry(i, j):
        if i < n and j < n:
            return A[i, j]
        if i >= n and j >= n:
            return B[i - n, j - n]
        return zero
    return MatrixForm.from_fn(n + m, entry)


def two_forms(n, draw):
    import itertools
    keys = list(itertools.combinations(range(4), 2))
    return MatrixForm.from_fn(n, lambda i, j: Form(CHART, {draw(st.sampled_from(keys)): draw(polynomials(max_leaves=2))}))


# -- series -----------------------------------------------------------------

def test_ahat_series_against_bernoulli_oracle():
    for trunc in (2, 8, 12):
        h = ahat_series(trunc)
        want = {k: -c * Fraction(1, 2 ** k) / 2 for k, c in oracles.log_sinhc_coefficients(trunc).items()}
        assert h.coeffs == want
    h = ahat_series(8)
    assert h[0] == 0 and h[2] == Fraction(-1, 48)


def test_ahat_expansion_coefficients():
    e = ahat_expansion(8)
    assert e[()] == 1
    assert e[(2,)] == Fraction(-1, 2 ** 2 * 12)
    assert e[(4,)] == Fraction(1, 2 ** 4 * 360)
    assert e[(2, 2)] == Fraction(1, 2 ** 4 * 288)
    assert set(e) == {(), (2,), (4,), (2, 2)}


def test_truncation_zero():
    assert ahat_series(0).coeffs == {}
    assert ahat_expansion(0) == {(): 1}


def test_series_arithmetic():
    s = TruncatedSeries([1, 1], trunc=6)
    inv = s.inverse()
    assert inv.coeffs == {k: Fraction((-1) ** k) for k in range(7)}
    assert (s * inv).coeffs == {0: 1}
    e = TruncatedSeries({1: 1}, trunc=6).exp()
    assert e.coeffs == {k: Fraction(1, math.factorial(k)) for k in range(7)}
    assert (e.log()).coeffs == {1: 1}
    with pytest.raises(ZeroDivisionError):
        TruncatedSeries({1: 1}).inverse()
    with pytest.raises(ValueError):
        TruncatedSeries({0: 2}).log()


@slow
@given(st.lists(st.fractions(-2, 2, max_denominator=5), min_size=1, max_size=6))
def test_exp_log_round_trip(cs):
    s = TruncatedSeries({k + 1: c for k, c in enumerate(cs)}, trunc=6)
    assert s.exp().log() == s


def test_power_sum_expansion_rejects_constant():
    with pytest.raises(ValueError):
        power_sum_expansion(TruncatedSeries({0: 1}), 4)


# -- genus forms --------------------------------------------------------------

def test_genus_form_of_zero_curvature():
    F = MatrixForm.zero(CHART, 3)
    assert genus_form(ahat_series(4), F, 4) == Form.scalar(CHART, 1)


def test_ahat_of_fubini_study(cp2):
    F = cp2["F"]
    A = genus_form(ahat_series(2), F, 4)
    assert A == Form.scalar(CP2_CHART, 1) + trace(mat_mul(F, F)) * Fraction(-1, 48)


@slow
@given(st.data())
def test_genus_multiplicative(data):
    F1 = two_forms(1, data.draw)
    F2 = two_forms(2, data.draw)
    s = ahat_series(4)
    lhs = genus_form(s, _block(F1, F2), 4)
    assert lhs == wedge(genus_form(s, F1, 4), genus_form(s, F2, 4)).truncate(4)
    assert lhs.scalar_part() == genus_form(s, F1, 4).scalar_part()


# -- Chern character ------------------------------------------------------------

def test_flat_chern_character():
    assert chern_character(MatrixForm.zero(CHART, 3)) == Form.scalar(CHART, 3)


def test_line_bundle_chern_character():
    for n in (-2, 1, 3):
        F = MatrixForm(((THETA * (I * n),),))
        assert chern_character(F) == Form.scalar(S2, 1) + THETA * (I * n)


def test_twisted_chern_character():
    F = MatrixForm(((THETA,),))
    assert chern_character(F, -1) == -chern_character(F)
    assert chern_character([(F, 1), (F, -1)]).is_zero()
    with pytest.raises(ValueError):
        chern_character(F, 2)
    with pytest.raises(ValueError):
        chern_character(MatrixForm.scalars(S2, [[1]]))


@slow
@given(st.data())
def test_chern_additive(data):
    F1 = two_forms(1, data.draw)
    F2 = two_forms(2, data.draw)
    assert chern_character(_block(F1, F2)) == chern_character(F1) + chern_character(F2)
    assert chern_character([(F1, 1), (F2, 1)]) == chern_character(_block(F1, F2))


# -- cohomology ring and jets -------------------------------------------------

def test_ring_nilpotency():
    r = CohClass.for_base("Upsilon", 4)
    U = r.gen("Upsilon")
    assert not (U * U).is_zero()
    assert (U ** 3).is_zero()
    s2 = CohClass.for_base("Theta", 2)
    assert (s2.gen("Theta") ** 2).is_zero()
    assert r.one().degree_part(0) == r.one()
    with pytest.raises(ValueError):
        r + s2


def test_chern_weil_eval_examples():
    ring = CohClass.for_base("Theta", 2)
    T = ring.gen("Theta")
    assert chern_weil_eval(JetFunction.constant(1), T) == ring.one()
    assert chern_weil_eval(JetFunction([0, 1]), T) == T
    # exp(iX) has jets 1, i, -1, ...
    assert chern_weil_eval(JetFunction([1, 1j, -1]), T) == ring.one() + T * 1j
    with pytest.raises(MissingJet):
        chern_weil_eval(JetFunction([1]), T)


def test_chern_weil_eval_uses_factorials():
    ring = CohClass.for_base("Upsilon", 4)
    U = ring.gen("Upsilon")
    got = chern_weil_eval(JetFunction([Fraction(1), Fraction(2), Fraction(6)]), U)
    assert got == ring.one() + U * 2 + U * U * 3


@slow
@given(st.lists(st.fractions(-5, 5, max_denominator=7), min_size=3, max_size=3),
       st.lists(st.fractions(-5, 5, max_denominator=7), min_size=3, max_size=3))
def test_chern_weil_eval_linear(j1, j2):
    ring = CohClass.for_base("Upsilon", 4)
    U = ring.gen("Upsilon") * Fraction(1, 3) + ring.gen("Upsilon") ** 2
    combo = JetFunction([a + 2 * b for a, b in zip(j1, j2)])
    assert chern_weil_eval(combo, U) == chern_weil_eval(JetFunction(j1), U) + chern_weil_eval(JetFunction(j2), U) * 2


def test_cohclass_json_and_close():
    ring = CohClass.for_base("Upsilon", 4)
    c = ring.const(-0.125) + ring.gen("Upsilon") ** 2 * 0.5
    assert c.to_json() == {"1": [-0.125, 0.0], "Upsilon^2": [0.5, 0.0]}
    assert c.isclose(c + ring.const(1e-15))


# -- [.]_max ------------------------------------------------------------------

def test_word_expansion_examples():
    assert word_expansion((2,), 4) == {0: {("FF",): 1}}
    assert word_expansion((4,), 4) == {2: {("FFMM",): 4, ("FMFM",): 2}}
    assert word_expansion((2, 2), 4) == {2: {("FF", "MM"): 2, ("FM", "FM"): 4}}


def test_max_degree_trace_square(cp2):
    E = equivariant_curvature(cp2["F"], cp2["mu"])
    r = max_degree_component(E, 4, (2,))
    assert set(r) == {0} and r[0] == trace(mat_mul(cp2["F"], cp2["F"]))


def test_max_degree_product_of_traces(cp2):
    F, mu = cp2["F"], cp2["mu"]
    E = equivariant_curvature(F, mu)
    r = max_degree_component(E, 4, (2, 2), max_x=2)
    Fm = mat_mul(F, mu)
    assert r == {2: trace(mat_mul(F, F)) * trace(mat_mul(mu, mu)) * 2 + trace(Fm) * trace(Fm) * 4}


def test_overlong_word_is_empty(cp2):
    E = equivariant_curvature(cp2["F"], MatrixForm.zero(CP2_CHART, 4))
    assert max_degree_component(E, 4, (2, 2, 2)) == {}


def test_max_degree_reassembly_numeric(cp2):
    """Graded pieces reassembled at 20 numeric X values equal direct expansion."""
    F, mu = cp2["F"], cp2["mu"]
    E = equivariant_curvature(F, mu)
    parts = max_degree_component(E, 4, (4,), max_x=4)
    rng = np.random.default_rng(4)
    p = dict(zip(CP2_CHART.coords, rng.normal(size=4)))
    Fv, mv = F.evaluate(p), mu.evaluate(p)[()]
    top = (0, 1, 2, 3)
    vals = {k: f.evaluate(p).get(top, 0) for k, f in parts.items()}
    for X in rng.normal(scale=2, size=20):
        A = dict(Fv)
        A[()] = X * mv
        P = {(): np.eye(4)}
        for _ in range(4):
            P = oracles.num_mul(P, A)
        direct = np.trace(P.get(top, np.zeros((4, 4))))
        assert sum(v * X ** k for k, v in vals.items()) == pytest.approx(direct, rel=1e-9)
    # the X^2 piece is 4 Tr(F^2 mu^2) + 2 Tr((F mu)^2)
    M = {(): mv}
    FM = oracles.num_mul(Fv, M)
    want = 4 * np.trace(oracles.num_mul(oracles.num_mul(Fv, Fv), oracles.num_mul(M, M))[top])
    want += 2 * np.trace(oracles.num_mul(FM, FM)[top])
    assert vals[2] == pytest.approx(want, rel=1e-9)

import numpy as np
import pytest

from chernweil.forms import MatrixForm, d, mat_mul, trace
from chernweil.geometry import (CP2_CHART, MOMENT_SIGN_CONVENTION, VectorField, bianchi_defect,
                                change_frame, circle_action_field, complex_frame, complex_top_coefficient,
                                curvature, equivariant_curvature, flat_torus_2d, get_geometry,
                                hopf_connection, levi_civita, lie_derivative_metric, metric_compatibility_defect,
                                moment_map)
from chernweil.manifest import expr
from chernweil.symexpr import Coord, compile_expr, const, evaluate, normalize

import oracles

PAIRS = (("x1", "y1"), ("x2", "y2"))
NAMES = CP2_CHART.coords


def _pts(n, seed):
    return np.random.default_rng(seed).normal(size=(n, 4))


def _d(p):
    return dict(zip(NAMES, p))


def test_metric_at_origin_is_identity(cp2):
    np.testing.assert_allclose(cp2["metric"].evaluate(_d([0, 0, 0, 0])), np.eye(4))


def test_hermitian_component_at_unit_point(cp2):
    h = cp2["metric"].hermitian(0, 0)
    # 2 g(d/dz1, d/dzbar1) equals h_{1 1bar} = (2*1 - 1)/4
    assert evaluate(h, _d([1, 0, 0, 0])) == pytest.approx(0.25)


def test_metric_matches_oracle_and_is_positive(cp2):
    g = cp2["metric"]
    pts = _pts(100, 3)
    for p in pts:
        np.testing.assert_allclose(g.evaluate(_d(p)), oracles.metric(p), atol=1e-14)
    assert g.is_positive_definite([_d(p) for p in pts])


def test_flat_metric_has_flat_connection():
    c = levi_civita(flat_torus_2d())
    assert c.omega.is_zero()
    assert curvature(c).is_zero()


def test_christoffel_symmetric(cp2):
    G = cp2["connection"].christoffel
    for k in range(4):
        for a in range(4):
            for b in range(4):
                assert G[k][a][b] == G[k][b][a]


def test_christoffel_against_oracle(cp2):
    G = cp2["connection"].christoffel
    p = np.array([0.3, -0.7, 0.5, 0.2])
    want = oracles.christoffel(p)
    got = np.array([[[evaluate(G[k][a][b], _d(p)).real for b in range(4)] for a in range(4)] for k in range(4)])
    np.testing.assert_allclose(got, want, atol=1e-8)


def test_metric_compatibility(cp2):
    assert all(normalize(e).is_zero() for e in metric_compatibility_defect(cp2["metric"], cp2["connection"]))


def test_bianchi(cp2):
    assert bianchi_defect(cp2["connection"], cp2["F"]).is_zero()


def test_curvature_against_oracle(cp2):
    for p in _pts(5, 11):
        R = oracles.curvature(p)
        F = cp2["F"].evaluate(_d(p))
        for (a, b), M in F.items():
            np.testing.assert_allclose(M.real, R[a, b], atol=1e-7)


def test_f_squared_diagonal(cp2):
    F2 = mat_mul(cp2["F"], cp2["F"])
    pts = _pts(100, 0)
    P = {c: pts[:, k] for k, c in enumerate(NAMES)}
    diag = compile_expr(expr("f2_diagonal"))(P)
    for i in range(4):
        for j in range(4):
            v = compile_expr(complex_top_coefficient(F2[i, j], PAIRS))(P)
            if i == j:
                np.testing.assert_allclose(v, diag, rtol=1e-9)
            else:
                assert np.max(np.abs(v)) < 1e-12
    assert complex_top_coefficient(trace(F2), PAIRS) == normalize(expr("f2_diagonal") * 4)


def test_f_squared_in_complex_frame(cp2):
    """The real-frame F^2 is the identity times the scalar in the complex frame too."""
    F2 = mat_mul(cp2["F"], cp2["F"])
    p = _d([0.2, 0.1, -0.4, 0.9])
    top = F2.evaluate(p)[(0, 1, 2, 3)]
    P = complex_frame(PAIRS, CP2_CHART)
    np.testing.assert_allclose(change_frame(top, P), top[0, 0] * np.eye(4), atol=1e-14)


def test_action_field():
    X = circle_action_field("cp2-last")
    assert [str(c) for c in X.components] == ["0", "0", "y2", "-x2"]
    assert all(evaluate(c, _d([0.4, -1.2, 0, 0])) == 0 for c in X.components)
    assert "exp(-tX)" in MOMENT_SIGN_CONVENTION
    with pytest.raises(ValueError):
        circle_action_field("no-such-action")


def test_killing(cp2):
    lie = lie_derivative_metric(cp2["metric"], cp2["field"])
    assert all(e.is_zero() for row in lie for e in row)


def test_moment_zero_and_linear(cp2):
    c = cp2["connection"]
    zero = VectorField(CP2_CHART, (const(0),) * 4)
    assert moment_map(c, zero).is_zero()
    X = cp2["field"]
    Y = VectorField(CP2_CHART, (Coord("y1"), -Coord("x1"), const(0), const(0)))
    assert moment_map(c, X.scale(3) + Y) == cp2["mu"].scale(3) + moment_map(c, Y)


def test_moment_against_oracle(cp2):
    for p in _pts(5, 5):
        np.testing.assert_allclose(cp2["mu"].evaluate(_d(p))[()].real, oracles.moment(p), atol=1e-8)


def test_trace_mu_squared(cp2):
    trmu2 = trace(mat_mul(cp2["mu"], cp2["mu"])).scalar_part()
    pts = _pts(100, 1)
    P = {c: pts[:, k] for k, c in enumerate(NAMES)}
    np.testing.assert_allclose(compile_expr(trmu2)(P), compile_expr(expr("tr_mu2"))(P), rtol=1e-9)


def test_g_mu_skew(cp2):
    for p in _pts(100, 2):
        G = cp2["metric"].evaluate(_d(p))
        gm = G @ cp2["mu"].evaluate(_d(p))[()].real
        assert np.max(np.abs(gm + gm.T)) < 1e-9


def test_trace_word_densities_against_oracle(cp2):
    """Densities of the four degree-4 words against the real volume, FD oracle."""
    F, mu = cp2["F"], cp2["mu"]
    Fm = mat_mul(F, mu)
    words = {
        "FFMM": trace(mat_mul(mat_mul(F, F), mat_mul(mu, mu))),
        "FMFM": trace(mat_mul(Fm, Fm)),
        "FF_MM": trace(mat_mul(F, F)) * trace(mat_mul(mu, mu)),
        "FM_FM": trace(Fm) * trace(Fm),
    }
    p = np.array([0.3, -0.7, 0.5, 0.2])
    ref = oracles.cp2_densities(p)
    for k, f in words.items():
        assert evaluate(f.top(), _d(p)).real == pytest.approx(ref[k], rel=1e-6)
    # frozen oracle value at this point
    assert ref["FMFM"] == pytest.approx(2.708189340, rel=1e-6)


def test_equivariant_curvature(cp2):
    F, mu = cp2["F"], cp2["mu"]
    E0 = equivariant_curvature(F, MatrixForm.zero(CP2_CHART, 4))
    assert E0.graded() == {0: F}
    E = equivariant_curvature(F, mu)
    sq = E.power(2)
    assert set(sq) == {0, 1, 2}
    assert trace(sq[0]).part(4) == trace(mat_mul(F, F))
    with pytest.raises(ValueError):
        equivariant_curvature(F, MatrixForm.zero(CP2_CHART, 3))


def test_hopf_data():
    H = hopf_connection()
    for key in ("t0", "t1"):
        curv = H.curvature[key]
        assert curv.degrees() == {2}
        assert d(curv).is_zero()
    a, b = Coord("a"), Coord("b")
    assert H.curvature["t0"].coefficient("a", "b") == normalize(2 / (1 + a * a + b * b) ** 2)


def test_registry():
    assert set(get_geometry("fubini-study-cp2")) == {"metric", "connection", "action"}
    assert get_geometry("flat-torus-2d")["action"].components[0] == normalize(const(-1))
    with pytest.raises(ValueError):
        get_geometry("s7")


def test_torus_flat_curvature_and_moment():
    g = get_geometry("flat-torus-2d")
    assert curvature(g["connection"]).is_zero()
    assert moment_map(g["connection"], g["action"]).is_zero()

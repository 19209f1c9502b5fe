"""Metrics, connections and circle actions on charts, plus the built-in geometries.

Conventions
-----------
* A Hermitian metric ``h_{i jbar}`` on complex coordinates ``z_k = x_k + i y_k``
  gives the real metric ``g(dx_i, dx_j) = g(dy_i, dy_j) = Re h_ij`` and
  ``g(dx_i, dy_j) = Im h_ij``; so ``h_{i jbar} = 2 g(d/dz_i, d/dzbar_j)`` for the
  complex-bilinear extension of ``g``.
* Circle generators follow ``X(f)(w) = d/dt f(exp(-tX) w)`` at ``t = 0``.
* Connection matrices are written in the coordinate frame:
  ``omega^k_b = Gamma^k_{ab} dx^a`` and ``F = d omega + omega ^ omega``.
* The moment of a Killing field is ``mu(X)^k_b = -d_b X^k - Gamma^k_{ab} X^a``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .forms import ChartMap, Form, MatrixForm, d, mat_mul, pullback, wedge, dz, dzbar
from .symexpr import (
    Chart, Const, Coord, Expr, I, Normal, Phase, Sqrt, compile_expr, diff,
    normalize, z, zbar,
)

__all__ = [
    "MetricChart", "Connection", "VectorField", "HopfData", "EquivariantCurvature",
    "fubini_study_cp2", "flat_torus_2d", "levi_civita", "curvature",
    "circle_action_field", "moment_map", "hopf_connection", "equivariant_curvature",
    "lie_derivative_metric", "bianchi_defect", "metric_compatibility_defect",
    "complex_frame", "change_frame", "complex_top_coefficient", "GEOMETRIES",
    "get_geometry", "MOMENT_SIGN_CONVENTION", "CP2_CHART", "C2_CHART", "TORUS_CHART",
]

MOMENT_SIGN_CONVENTION = "X(f)(w) = d/dt f(exp(-tX) w); mu(X) = L_X - nabla_X"

_N = normalize


def _zero():
    return _N(Const(0))


def _invert(M: list[list[Normal]]) -> list[list[Normal]]:
    """Exact Gauss-Jordan inverse of a matrix of rational functions."""
    n = len(M)
    A = [list(row) + [_N(Const(int(i == j))) for j in range(n)] for i, row in enumerate(M)]
    for col in range(n):
        piv = next((r for r in range(col, n) if not A[r][col].is_zero()), None)
        if piv is None:
            raise ValueError("metric is not invertible as a rational-function matrix")
        A[col], A[piv] = A[piv], A[col]
        inv = _N(Const(1)) / A[col][col]
        A[col] = [x * inv for x in A[col]]
        for r in range(n):
            if r != col and not A[r][col].is_zero():
                f = A[r][col]
                A[r] = [x - f * y for x, y in zip(A[r], A[col])]
    return [row[n:] for row in A]


@dataclass(frozen=True)
class MetricChart:
    """Riemannian metric ``g_ab`` on a chart (symmetric matrix of expressions)."""

    chart: Chart
    g: tuple
    hermitian_pairs: tuple = ()  # ((x_k, y_k), ...) when the chart is complex
    name: str = ""

    def __post_init__(self):
        n = self.chart.dim
        g = tuple(tuple(_N(e) for e in row) for row in self.g)
        if len(g) != n or any(len(r) != n for r in g):
            raise ValueError("metric must be dim x dim")
        for a in range(n):
            for b in range(a):
                if g[a][b] != g[b][a]:
                    raise ValueError("metric is not symmetric")
        object.__setattr__(self, "g", g)

    def inverse(self) -> tuple:
        inv = self.__dict__.get("_inv")
        if inv is None:
            inv = tuple(tuple(r) for r in _invert([list(r) for r in self.g]))
            object.__setattr__(self, "_inv", inv)
        return inv

    def evaluate(self, point: Mapping[str, float]) -> np.ndarray:
        n = self.chart.dim
        out = np.empty((n, n))
        fns = self._compiled()
        for a in range(n):
            for b in range(n):
                out[a, b] = fns[a][b](point).real
        return out

    def _compiled(self):
        c = self.__dict__.get("_fns")
        if c is None:
            c = [[compile_expr(e) for e in row] for row in self.g]
            object.__setattr__(self, "_fns", c)
        return c

    def is_positive_definite(self, points, threshold: float = 1e-9) -> bool:
        for p in points:
            G = self.evaluate(p)
            if not np.allclose(G, G.T) or np.linalg.eigvalsh(G).min() <= threshold:
                return False
        return True

    def hermitian(self, i: int, j: int) -> Normal:
        """``h_{i jbar} = 2 g(d/dz_i, d/dzbar_j)`` for the k-th complex pair."""
        (xi, yi), (xj, yj) = self.hermitian_pairs[i], self.hermitian_pairs[j]
        ix = self.chart.index
        g = self.g
        # d/dz = (d/dx - i d/dy)/2, d/dzbar = (d/dx + i d/dy)/2
        val = (g[ix(xi)][ix(xj)] + g[ix(yi)][ix(yj)]
               + (g[ix(xi)][ix(yj)] - g[ix(yi)][ix(xj)]) * I) / 2
        return val


@dataclass(frozen=True)
class Connection:
    """Connection 1-form matrix on a chart together with its frame description."""

    chart: Chart
    omega: MatrixForm
    frame: str = "coordinate"
    christoffel: tuple = field(default=(), compare=False)

    def __post_init__(self):
        for row in self.omega.entries:
            for e in row:
                if not e.is_zero() and e.degrees() != {1}:
                    raise ValueError("connection entries must be 1-forms")


@dataclass(frozen=True)
class VectorField:
    chart: Chart
    components: tuple

    def __post_init__(self):
        comps = tuple(_N(c) for c in self.components)
        if len(comps) != self.chart.dim:
            raise ValueError("component count must equal chart dimension")
        object.__setattr__(self, "components", comps)

    def scale(self, c) -> "VectorField":
        c = _N(c if isinstance(c, Expr) else Const(c))
        return VectorField(self.chart, tuple(c * x for x in self.components))

    def __add__(self, other: "VectorField") -> "VectorField":
        return VectorField(self.chart, tuple(a + b for a, b in zip(self.components, other.components)))

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.components)


# ---------------------------------------------------------------------------
# built-in metrics

CP2_CHART = Chart(("x1", "y1", "x2", "y2"), name="U0")


def _hermitian_to_real(chart: Chart, pairs, h) -> tuple:
    n = chart.dim
    g = [[_zero() for _ in range(n)] for _ in range(n)]
    for i, (xi, yi) in enumerate(pairs):
        for j, (xj, yj) in enumerate(pairs):
            re_, im = _N(h[i][j]).real_imag()
            a, b = chart.index(xi), chart.index(yi)
            c, e = chart.index(xj), chart.index(yj)
            g[a][c] = re_
            g[b][e] = re_
            g[a][e] = im
            g[b][c] = -im
    return tuple(tuple(r) for r in g)


def fubini_study_cp2() -> MetricChart:
    """Fubini-Study metric on the affine chart ``z0 != 0`` of CP^2."""
    chart = CP2_CHART
    zs = [z(1), z(2)]
    zbs = [zbar(1), zbar(2)]
    s = _N(1 + zs[0] * zbs[0] + zs[1] * zbs[1])
    h = [[(s * int(i == j) - _N(zbs[i] * zs[j])) / s ** 2 for j in range(2)] for i in range(2)]
    pairs = (("x1", "y1"), ("x2", "y2"))
    return MetricChart(chart, _hermitian_to_real(chart, pairs, h), pairs, "fubini-study-cp2")


TORUS_CHART = Chart(("u", "v"), angular=frozenset({"u", "v"}), name="T2")


def flat_torus_2d() -> MetricChart:
    one, zero = _N(Const(1)), _zero()
    return MetricChart(TORUS_CHART, ((one, zero), (zero, one)), (), "flat-torus-2d")


# ---------------------------------------------------------------------------
# Levi-Civita connection and curvature

def levi_civita(g: MetricChart) -> Connection:
    chart = g.chart
    n = chart.dim
    names = chart.coords
    ginv = g.inverse()
    dg = [[[diff(g.g[a][b], c) for c in names] for b in range(n)] for a in range(n)]
    # first kind: Gamma_{c,ab} = (d_a g_cb + d_b g_ca - d_c g_ab)/2
    first = [[[(dg[c][b][a] + dg[c][a][b] - dg[a][b][c]) / 2 for b in range(n)]
              for a in range(n)] for c in range(n)]
    gamma = [[[_zero() for _ in range(n)] for _ in range(n)] for _ in range(n)]
    for k in range(n):
        for a in range(n):
            for b in range(a, n):
                acc = _zero()
                for c in range(n):
                    if not ginv[k][c].is_zero() and not first[c][a][b].is_zero():
                        acc = acc + ginv[k][c] * first[c][a][b]
                gamma[k][a][b] = acc
                gamma[k][b][a] = acc
    omega = MatrixForm.from_fn(n, lambda k, b: Form(chart, {(a,): gamma[k][a][b] for a in range(n)}))
    return Connection(chart, omega, "coordinate", tuple(tuple(tuple(r) for r in m) for m in gamma))


def curvature(c: Connection) -> MatrixForm:
    return c.omega.map(d) + mat_mul(c.omega, c.omega)


def bianchi_defect(c: Connection, F: MatrixForm | None = None) -> MatrixForm:
    """``dF + omega ^ F - F ^ omega`` (zero for every connection)."""
    F = curvature(c) if F is None else F
    return F.map(d) + mat_mul(c.omega, F) - mat_mul(F, c.omega)


def metric_compatibility_defect(g: MetricChart, c: Connection) -> list:
    """All components ``d_c g_ab - Gamma^d_ca g_db - Gamma^d_cb g_ad``."""
    n = g.chart.dim
    G = c.christoffel
    out = []
    for cc, name in enumerate(g.chart.coords):
        for a in range(n):
            for b in range(n):
                v = diff(g.g[a][b], name)
                for dd in range(n):
                    v = v - G[dd][cc][a] * g.g[dd][b] - G[dd][cc][b] * g.g[a][dd]
                out.append(v)
    return out


# ---------------------------------------------------------------------------
# circle actions and moments

def circle_action_field(action: str, chart: Chart | None = None) -> VectorField:
    """Generator of ``t -> exp(-it)`` for a built-in circle action.

    ``"cp2-last"``: ``[z0:z1:z2] -> [z0:z1:g z2]`` on the chart ``U0``.
    ``"s1-translation"``: ``lam -> lam + t`` on an angular coordinate (the first one).
    """
    if action == "cp2-last":
        chart = chart or CP2_CHART
        # d/dt of exp(-it) z2 at t=0 is -i z2 = y2 - i x2
        comps = {"x2": Coord("y2"), "y2": -Coord("x2")}
        return VectorField(chart, tuple(comps.get(c, Const(0)) for c in chart.coords))
    if action == "s1-translation":
        if chart is None or not chart.angular:
            raise ValueError("s1-translation needs a chart with an angular coordinate")
        first = next(c for c in chart.coords if c in chart.angular)
        return VectorField(chart, tuple(Const(-1) if c == first else Const(0) for c in chart.coords))
    raise ValueError(f"unknown action spec {action!r}")


def lie_derivative_metric(g: MetricChart, X: VectorField) -> tuple:
    """``(L_X g)_ab = X^c d_c g_ab + g_cb d_a X^c + g_ac d_b X^c``."""
    n = g.chart.dim
    names = g.chart.coords
    dX = [[diff(X.components[c], names[a]) for a in range(n)] for c in range(n)]
    out = []
    for a in range(n):
        row = []
        for b in range(n):
            v = _zero()
            for c in range(n):
                v = v + X.components[c] * diff(g.g[a][b], names[c])
                v = v + g.g[c][b] * dX[c][a] + g.g[a][c] * dX[c][b]
            row.append(v)
        out.append(tuple(row))
    return tuple(out)


def moment_map(c: Connection, X: VectorField) -> MatrixForm:
    chart = c.chart
    n = chart.dim
    G = c.christoffel
    names = chart.coords

    def entry(k, b):
        v = -diff(X.components[k], names[b])
        for a in range(n):
            if not X.components[a].is_zero():
                v = v - G[k][a][b] * X.components[a]
        return Form.scalar(chart, v)

    return MatrixForm.from_fn(n, entry)


# ---------------------------------------------------------------------------
# frames

def complex_frame(pairs, chart: Chart) -> np.ndarray:
    """Columns express ``d/dz_k`` then ``d/dzbar_k`` in the real coordinate frame."""
    n = chart.dim
    m = len(pairs)
    P = np.zeros((n, n), dtype=complex)
    for k, (x, y) in enumerate(pairs):
        P[chart.index(x), k] = 0.5
        P[chart.index(y), k] = -0.5j
        P[chart.index(x), m + k] = 0.5
        P[chart.index(y), m + k] = 0.5j
    return P


def change_frame(values: np.ndarray, P: np.ndarray) -> np.ndarray:
    """Matrix of an endomorphism in the frame given by the columns of ``P``."""
    return np.linalg.solve(P, values @ P)


def complex_top_coefficient(form: Form, pairs) -> Normal:
    """Coefficient of the top part w.r.t. ``dz1^dzbar1^...^dzm^dzbarm``."""
    chart = form.chart
    ref = Form.scalar(chart, 1)
    for k, (x, y) in enumerate(pairs):
        ref = wedge(ref, wedge(dz(chart, x[1:], x[0], y[0]), dzbar(chart, x[1:], x[0], y[0])))
    return form.top() / ref.top()


# ---------------------------------------------------------------------------
# Hopf fibration S^3 -> CP^1

C2_CHART = Chart(("x0", "y0", "x1", "y1"), name="C2")


@dataclass(frozen=True)
class HopfData:
    """Hopf connection data on ``S^3 -> CP^1``.

    ``theta`` is the potential on C^2 (restrict to S^3); ``trivializations``
    are ``t0, t1: C x S^1 -> S^3`` on charts ``(a, b, lam)`` and
    ``(c, e, lam)``; ``local`` is the pullback of ``theta`` along each
    trivialization and ``curvature`` is the curvature 2-form on each base chart.
    """

    theta: Form
    trivializations: dict
    base_charts: dict
    local: dict
    curvature: dict

    def connection(self, key: str = "t0") -> Connection:
        """Base-chart potential (the ``lam = 0`` section) as a 1x1 connection."""
        chart = self.base_charts[key]
        A = self.local[key]
        lam = self.trivializations[key].source.index("lam")
        base = {tuple(chart.index(self.trivializations[key].source.coords[i]) for i in idx): c
                for idx, c in A.terms.items() if lam not in idx}
        return Connection(chart, MatrixForm(((Form(chart, base),),)), "principal")


def _hopf_trivialization(re_name: str, im_name: str, slot: int) -> ChartMap:
    src = Chart((re_name, im_name, "lam"), angular=frozenset({"lam"}), name=f"t{slot}")
    a, b = Coord(re_name), Coord(im_name)
    s = Sqrt(1 + a * a + b * b)
    w, wi = Phase("lam", 1), Phase("lam", -1)
    cos, sin = (w + wi) / 2, (w - wi) / (2 * I)
    # exp(i lam) (1, alpha) / s for t0; exp(i lam) (alpha, 1) / s for t1
    one = (cos / s, sin / s)
    alpha = ((a * cos - b * sin) / s, (a * sin + b * cos) / s)
    comps = one + alpha if slot == 0 else alpha + one
    return ChartMap(src, C2_CHART, comps)


def hopf_connection() -> HopfData:
    C = C2_CHART
    theta = Form.zero(C)
    for k in (0, 1):
        x, y = Coord(f"x{k}"), Coord(f"y{k}")
        # (i/2)(z dzbar - zbar dz) = x dy - y dx
        theta = theta + Form.dcoord(C, f"y{k}") * x - Form.dcoord(C, f"x{k}") * y
    trivs, bases, local, curv = {}, {}, {}, {}
    for key, (re_name, im_name, slot) in {"t0": ("a", "b", 0), "t1": ("c", "e", 1)}.items():
        t = _hopf_trivialization(re_name, im_name, slot)
        trivs[key] = t
        bases[key] = Chart((re_name, im_name), name=f"U{slot}")
        A = pullback(t, theta)
        local[key] = A
        curv[key] = None
    data = HopfData(theta, trivs, bases, local, curv)
    for key in trivs:
        curv[key] = d(data.connection(key).omega[0, 0])
    return data


# ---------------------------------------------------------------------------
# equivariant curvature

@dataclass(frozen=True)
class EquivariantCurvature:
    """``F(X) = F + X mu`` kept as a polynomial in the formal variable ``X``."""

    F: MatrixForm
    mu: MatrixForm
    variable: str = "X"

    def __post_init__(self):
        if self.F.size != self.mu.size or self.F.chart != self.mu.chart:
            raise ValueError("F and mu must share size and chart")

    @property
    def chart(self) -> Chart:
        return self.F.chart

    def graded(self) -> dict:
        out = {0: self.F}
        if not self.mu.is_zero():
            out[1] = self.mu
        return out

    def power(self, k: int, max_x: int | None = None) -> dict:
        """``F(X)^k`` as ``{X-power: MatrixForm}`` (forms above the chart dimension vanish)."""
        out = {0: MatrixForm.identity(self.chart, self.F.size)}
        g = self.graded()
        for _ in range(k):
            nxt: dict[int, MatrixForm] = {}
            for i, A in out.items():
                for j, B in g.items():
                    if max_x is not None and i + j > max_x:
                        continue
                    P = mat_mul(A, B)
                    if P.is_zero():
                        continue
                    nxt[i + j] = nxt[i + j] + P if i + j in nxt else P
            out = nxt
        return out

    def evaluate_at(self, x: complex, point: Mapping[str, float]) -> dict:
        """Numeric ``F + x mu`` at a point: ``{index set: matrix}``."""
        vals = self.F.evaluate(point)
        for idx, m in self.mu.evaluate(point).items():
            vals[idx] = vals.get(idx, 0) + x * m
        return vals


def equivariant_curvature(F: MatrixForm, mu: MatrixForm, coupling: str = "X") -> EquivariantCurvature:
    return EquivariantCurvature(F, mu, coupling)


# ---------------------------------------------------------------------------
# registry

def _cp2_bundle():
    g = fubini_study_cp2()
    c = levi_civita(g)
    return {"metric": g, "connection": c, "action": circle_action_field("cp2-last")}


def _torus_bundle():
    g = flat_torus_2d()
    c = levi_civita(g)
    return {"metric": g, "connection": c, "action": circle_action_field("s1-translation", g.chart)}


GEOMETRIES: dict[str, Callable[[], object]] = {
    "fubini-study-cp2": _cp2_bundle,
    "hopf-s3": hopf_connection,
    "flat-torus-2d": _torus_bundle,
}


def get_geometry(name: str):
    try:
        return GEOMETRIES[name]()
    except KeyError:
        raise ValueError(f"unknown geometry {name!r}; choose from {sorted(GEOMETRIES)}") from None

"""Differential forms and matrix-valued forms on a single chart.

A :class:`Form` stores its terms as ``{increasing index tuple: Normal}``;
indices refer to positions in ``chart.coords``.  Forms may be inhomogeneous
(sums of several degrees), which is what characteristic-class computations
produce.  Terms above the chart dimension cannot be represented and vanish.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .symexpr import (
    Chart, Const, Coord, Expr, I, Normal, Phase, normalize, diff, parse,
    substitute,
)

__all__ = [
    "Form", "MatrixForm", "ChartMap", "wedge", "exterior_derivative", "d",
    "trace", "mat_mul", "pullback", "dz", "dzbar", "ChartMismatch",
]


class ChartMismatch(ValueError):
    pass


def _merge_sign(a: tuple, b: tuple):
    """Sign and sorted union of two increasing index tuples (None if they overlap)."""
    if set(a) & set(b):
        return 0, None
    # count inversions: pairs (x in a, y in b) with x > y
    inv = 0
    j = 0
    for x in a:
        while j < len(b) and b[j] < x:
            j += 1
        inv += j
    return (-1 if inv % 2 else 1), tuple(sorted(a + b))


class Form:
    """Element of the exterior algebra over one chart."""

    __slots__ = ("chart", "terms")

    def __init__(self, chart: Chart, terms: Mapping[tuple, Expr] | None = None):
        clean = {}
        for idx, c in (terms or {}).items():
            idx = tuple(idx)
            if list(idx) != sorted(set(idx)) or any(not 0 <= k < chart.dim for k in idx):
                raise ValueError(f"invalid index set {idx}")
            c = normalize(c)
            if not c.is_zero():
                clean[idx] = c
        object.__setattr__(self, "chart", chart)
        object.__setattr__(self, "terms", clean)

    def __setattr__(self, k, v):
        raise AttributeError("Form is immutable")

    # constructors
    @classmethod
    def zero(cls, chart: Chart) -> "Form":
        return cls(chart)

    @classmethod
    def scalar(cls, chart: Chart, e) -> "Form":
        return cls(chart, {(): normalize(_as_expr(e))})

    @classmethod
    def dcoord(cls, chart: Chart, name: str) -> "Form":
        return cls(chart, {(chart.index(name),): normalize(Const(1))})

    @classmethod
    def volume(cls, chart: Chart) -> "Form":
        """Positive top form, i.e. the wedge of the differentials in orientation order."""
        return cls(chart, {tuple(range(chart.dim)): normalize(Const(chart.orientation_sign()))})

    # queries
    def degrees(self) -> set:
        return {len(k) for k in self.terms}

    def is_zero(self) -> bool:
        return not self.terms

    def is_homogeneous(self) -> bool:
        return len(self.degrees()) <= 1

    def degree(self) -> int:
        degs = self.degrees()
        if len(degs) > 1:
            raise ValueError("form is not homogeneous")
        return degs.pop() if degs else 0

    def part(self, k: int) -> "Form":
        """Homogeneous component of degree ``k``."""
        return Form(self.chart, {i: c for i, c in self.terms.items() if len(i) == k})

    def coefficient(self, *names: str) -> Normal:
        """Coefficient of ``d names[0] ^ d names[1] ^ ...`` (sign-adjusted for order)."""
        idx = tuple(self.chart.index(n) for n in names)
        sign = 1
        srt = list(idx)
        # bubble sort to count transpositions
        for a in range(len(srt)):
            for b in range(len(srt) - 1 - a):
                if srt[b] > srt[b + 1]:
                    srt[b], srt[b + 1] = srt[b + 1], srt[b]
                    sign = -sign
        if len(set(idx)) != len(idx):
            return normalize(Const(0))
        c = self.terms.get(tuple(srt))
        if c is None:
            return normalize(Const(0))
        return c if sign == 1 else -c

    def top(self) -> Normal:
        """Coefficient of the top part relative to the positive volume form."""
        c = self.terms.get(tuple(range(self.chart.dim)))
        if c is None:
            return normalize(Const(0))
        return c if self.chart.orientation_sign() == 1 else -c

    def truncate(self, max_degree: int) -> "Form":
        """Drop all terms of degree above ``max_degree``."""
        return Form(self.chart, {i: c for i, c in self.terms.items() if len(i) <= max_degree})

    def scalar_part(self) -> Normal:
        return self.terms.get((), normalize(Const(0)))

    # algebra
    def _check(self, other: "Form"):
        if not isinstance(other, Form):
            raise TypeError(f"expected Form, got {type(other).__name__}")
        if other.chart != self.chart:
            raise ChartMismatch("forms live on different charts")

    def __add__(self, other):
        if not isinstance(other, Form):
            other = Form.scalar(self.chart, other)
        self._check(other)
        out = dict(self.terms)
        for i, c in other.terms.items():
            out[i] = out[i] + c if i in out else c
        return Form(self.chart, out)

    __radd__ = __add__

    def __neg__(self):
        return Form(self.chart, {i: -c for i, c in self.terms.items()})

    def __sub__(self, other):
        if not isinstance(other, Form):
            other = Form.scalar(self.chart, other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Form):
            return wedge(self, other)
        e = normalize(_as_expr(other))
        return Form(self.chart, {i: c * e for i, c in self.terms.items()})

    def __rmul__(self, other):
        if isinstance(other, Form):
            return wedge(other, self)
        e = normalize(_as_expr(other))
        return Form(self.chart, {i: e * c for i, c in self.terms.items()})

    def __xor__(self, other):
        return wedge(self, other)

    def __eq__(self, other):
        if not isinstance(other, Form):
            return NotImplemented
        return self.chart == other.chart and self.terms == other.terms

    def __hash__(self):
        return hash((self.chart, tuple(sorted((k, str(v)) for k, v in self.terms.items()))))

    def map_coefficients(self, fn: Callable[[Normal], Expr]) -> "Form":
        return Form(self.chart, {i: fn(c) for i, c in self.terms.items()})

    def evaluate(self, point: Mapping[str, float]) -> dict:
        from .symexpr import evaluate
        return {i: evaluate(c, point) for i, c in self.terms.items()}

    # text format
    def basis_name(self, idx: tuple) -> str:
        if not idx:
            return "1"
        return "^".join("d" + self.chart.coords[k] for k in idx)

    def to_text(self) -> str:
        """One ``basis : coefficient`` line per term, sorted by degree then index set."""
        if not self.terms:
            return "0"
        keys = sorted(self.terms, key=lambda k: (len(k), k))
        return "\n".join(f"{self.basis_name(k)} : {self.terms[k]}" for k in keys)

    @classmethod
    def from_text(cls, chart: Chart, text: str) -> "Form":
        text = text.strip()
        if text == "0":
            return cls(chart)
        terms = {}
        for line in text.splitlines():
            basis, _, coef = line.partition(" : ")
            basis = basis.strip()
            if basis == "1":
                idx = ()
            else:
                idx = tuple(chart.index(b[1:]) for b in basis.split("^"))
            terms[idx] = parse(coef)
        return cls(chart, terms)

    def __str__(self):
        return self.to_text()

    def __repr__(self):
        return f"Form({self.to_text()!r})"


def _as_expr(e) -> Expr:
    if isinstance(e, Expr):
        return e
    if isinstance(e, str):
        return parse(e)
    from .symexpr import const
    return const(e)


def wedge(a: Form, b: Form) -> Form:
    a._check(b)
    out: dict[tuple, Normal] = {}
    for ia, ca in a.terms.items():
        for ib, cb in b.terms.items():
            sign, idx = _merge_sign(ia, ib)
            if not sign:
                continue
            c = ca * cb
            if sign < 0:
                c = -c
            out[idx] = out[idx] + c if idx in out else c
    return Form(a.chart, out)


def exterior_derivative(a: Form) -> Form:
    chart = a.chart
    out: dict[tuple, Normal] = {}
    for idx, c in a.terms.items():
        free = c.free_coords()
        for j, name in enumerate(chart.coords):
            if j in idx or name not in free:
                continue
            dc = diff(c, name)
            if dc.is_zero():
                continue
            sign, new = _merge_sign((j,), idx)
            if sign < 0:
                dc = -dc
            out[new] = out[new] + dc if new in out else dc
    return Form(chart, out)


d = exterior_derivative


def dz(chart: Chart, k, x: str = "x", y: str = "y") -> Form:
    """``dz_k = dx_k + i dy_k`` on a chart with coordinates ``x_k, y_k``."""
    return Form.dcoord(chart, f"{x}{k}") + Form.dcoord(chart, f"{y}{k}") * I


def dzbar(chart: Chart, k, x: str = "x", y: str = "y") -> Form:
    return Form.dcoord(chart, f"{x}{k}") - Form.dcoord(chart, f"{y}{k}") * I


@dataclass(frozen=True)
class MatrixForm:
    """Square matrix of forms on a common chart."""

    entries: tuple

    def __post_init__(self):
        rows = tuple(tuple(r) for r in self.entries)
        n = len(rows)
        if n == 0 or any(len(r) != n for r in rows):
            raise ValueError("MatrixForm must be square and non-empty")
        chart = rows[0][0].chart
        if any(e.chart != chart for r in rows for e in r):
            raise ChartMismatch("matrix entries live on different charts")
        object.__setattr__(self, "entries", rows)

    @property
    def size(self) -> int:
        return len(self.entries)

    @property
    def chart(self) -> Chart:
        return self.entries[0][0].chart

    def __getitem__(self, ij):
        i, j = ij
        return self.entries[i][j]

    @classmethod
    def from_fn(cls, n: int, fn: Callable[[int, int], Form]) -> "MatrixForm":
        return cls(tuple(tuple(fn(i, j) for j in range(n)) for i in range(n)))

    @classmethod
    def zero(cls, chart: Chart, n: int) -> "MatrixForm":
        return cls.from_fn(n, lambda i, j: Form.zero(chart))

    @classmethod
    def identity(cls, chart: Chart, n: int) -> "MatrixForm":
        return cls.from_fn(n, lambda i, j: Form.scalar(chart, 1) if i == j else Form.zero(chart))

    @classmethod
    def scalars(cls, chart: Chart, rows) -> "MatrixForm":
        return cls.from_fn(len(rows), lambda i, j: Form.scalar(chart, rows[i][j]))

    def map(self, fn: Callable[[Form], Form]) -> "MatrixForm":
        return MatrixForm.from_fn(self.size, lambda i, j: fn(self.entries[i][j]))

    def _check(self, other: "MatrixForm"):
        if other.size != self.size:
            raise ValueError("matrix size mismatch")
        if other.chart != self.chart:
            raise ChartMismatch("matrices live on different charts")

    def __add__(self, other: "MatrixForm"):
        self._check(other)
        return MatrixForm.from_fn(self.size, lambda i, j: self.entries[i][j] + other.entries[i][j])

    def __sub__(self, other: "MatrixForm"):
        self._check(other)
        return MatrixForm.from_fn(self.size, lambda i, j: self.entries[i][j] - other.entries[i][j])

    def __neg__(self):
        return self.map(lambda e: -e)

    def __matmul__(self, other):
        return mat_mul(self, other)

    def scale(self, c) -> "MatrixForm":
        """Entrywise multiplication by a scalar or (on the left) by a form."""
        if isinstance(c, Form):
            return self.map(lambda e: wedge(c, e))
        return self.map(lambda e: e * c)

    def is_zero(self) -> bool:
        return all(e.is_zero() for r in self.entries for e in r)

    def part(self, k: int) -> "MatrixForm":
        return self.map(lambda e: e.part(k))

    def transpose(self) -> "MatrixForm":
        return MatrixForm.from_fn(self.size, lambda i, j: self.entries[j][i])

    def power(self, k: int) -> "MatrixForm":
        if k < 0:
            raise ValueError("negative matrix power")
        out = MatrixForm.identity(self.chart, self.size)
        for _ in range(k):
            out = mat_mul(out, self)
        return out

    def evaluate(self, point: Mapping[str, float]) -> dict:
        """``{index set: complex ndarray (n x n)}`` at a point."""
        out: dict[tuple, np.ndarray] = {}
        n = self.size
        for i in range(n):
            for j in range(n):
                for idx, v in self.entries[i][j].evaluate(point).items():
                    out.setdefault(idx, np.zeros((n, n), dtype=complex))[i, j] = v
        return out

    def to_text(self) -> str:
        lines = []
        for i in range(self.size):
            for j in range(self.size):
                e = self.entries[i][j]
                if e.is_zero():
                    continue
                for line in e.to_text().splitlines():
                    lines.append(f"[{i},{j}] {line}")
        return "\n".join(lines) if lines else "0"

    @classmethod
    def from_text(cls, chart: Chart, n: int, text: str) -> "MatrixForm":
        grid = [[[] for _ in range(n)] for _ in range(n)]
        text = text.strip()
        if text != "0":
            for line in text.splitlines():
                m = re.match(r"\[(\d+),(\d+)\] (.*)", line)
                grid[int(m.group(1))][int(m.group(2))].append(m.group(3))
        return cls.from_fn(n, lambda i, j: Form.from_text(chart, "\n".join(grid[i][j]) or "0"))

    def __str__(self):
        return self.to_text()


def mat_mul(A: MatrixForm, B: MatrixForm) -> MatrixForm:
    A._check(B)
    n = A.size
    chart = A.chart

    def entry(i, j):
        acc = Form.zero(chart)
        for k in range(n):
            a, b = A.entries[i][k], B.entries[k][j]
            if a.terms and b.terms:
                acc = acc + wedge(a, b)
        return acc

    return MatrixForm.from_fn(n, entry)


def trace(M: MatrixForm) -> Form:
    acc = Form.zero(M.chart)
    for i in range(M.size):
        acc = acc + M.entries[i][i]
    return acc


@dataclass(frozen=True)
class ChartMap:
    """Smooth map between charts given by one component per target coordinate.

    ``phases`` gives ``exp(i*c)`` for angular target coordinates ``c``;
    it is only needed when target expressions contain such phases.
    """

    source: Chart
    target: Chart
    components: tuple
    phases: tuple = field(default=())

    def __post_init__(self):
        comps = tuple(normalize(_as_expr(c)) for c in self.components)
        if len(comps) != self.target.dim:
            raise ValueError("component count must equal the target dimension")
        src = set(self.source.coords)
        for c in comps:
            if not c.free_coords() <= src:
                raise ValueError(f"component {c} uses coordinates outside the source chart")
        object.__setattr__(self, "components", comps)
        ph = dict(self.phases)
        object.__setattr__(self, "phases", tuple(sorted((k, normalize(_as_expr(v))) for k, v in ph.items())))

    @classmethod
    def identity(cls, chart: Chart) -> "ChartMap":
        return cls(chart, chart, tuple(Coord(c) for c in chart.coords),
                   tuple((c, Phase(c, 1)) for c in chart.angular))

    def mapping(self) -> dict:
        return dict(zip(self.target.coords, self.components))

    def substitute(self, e: Expr) -> Normal:
        """Compose a target-chart function with this map."""
        return substitute(e, self.mapping(), dict(self.phases) or None)

    def compose(self, inner: "ChartMap") -> "ChartMap":
        """``self ∘ inner``."""
        if inner.target != self.source:
            raise ChartMismatch("cannot compose: chart mismatch")
        comps = tuple(inner.substitute(c) for c in self.components)
        phases = tuple((k, inner.substitute(v)) for k, v in self.phases)
        return ChartMap(inner.source, self.target, comps, phases)


def pullback(phi: ChartMap, a: Form) -> Form:
    if a.chart != phi.target:
        raise ChartMismatch("form does not live on the target chart of the map")
    src = phi.source
    dphi = [d(Form.scalar(src, c)) for c in phi.components]
    out = Form.zero(src)
    for idx, c in a.terms.items():
        term = Form.scalar(src, phi.substitute(c))
        for k in idx:
            term = wedge(term, dphi[k])
            if term.is_zero():
                break
        out = out + term
    return out

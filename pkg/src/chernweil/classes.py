"""Characteristic classes: genus series, Chern-Weil forms and a truncated cohomology ring."""
from __future__ import annotations

import itertools
import math
from collections import defaultdict
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .forms import Form, MatrixForm, mat_mul, trace, wedge
from .geometry import EquivariantCurvature
from .symexpr import Chart, Const, add, mul, div

__all__ = [
    "TruncatedSeries", "ahat_series", "ahat_expansion", "power_sum_expansion",
    "GradedForm", "genus_form", "chern_character", "chern_weil_eval",
    "max_degree_component", "word_expansion", "CohClass", "JetFunction",
    "MissingJet", "trace_powers",
]


# ---------------------------------------------------------------------------
# coefficient arithmetic: exact (Fraction / Const) or floating (float / complex)

def _num(x):
    if isinstance(x, Const):
        return x.re if x.im == 0 else x
    if isinstance(x, bool):
        return Fraction(int(x))
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, complex) and x.imag == 0:
        return x.real
    return x


def _exact(x) -> bool:
    return isinstance(x, (Fraction, Const, int))


def _const(x) -> Const:
    return x if isinstance(x, Const) else Const(Fraction(x))


def _float(x):
    if isinstance(x, Const):
        return complex(x)
    if isinstance(x, Fraction):
        return float(x)
    return x


def _nadd(a, b):
    if _exact(a) and _exact(b):
        return _num(add(_const(a), _const(b)))
    return _num(_float(a) + _float(b))


def _nmul(a, b):
    if _exact(a) and _exact(b):
        return _num(mul(_const(a), _const(b)))
    return _num(_float(a) * _float(b))


def _ndiv(a, b):
    if _exact(a) and _exact(b):
        return _num(div(_const(a), _const(b)))
    return _num(_float(a) / _float(b))


def _is_zero(x) -> bool:
    if isinstance(x, Const):
        return x.re == 0 and x.im == 0
    return x == 0


def _to_pair(x) -> list:
    """``[re, im]`` as floats for reports."""
    c = complex(_float(x))
    return [c.real, c.imag]


# ---------------------------------------------------------------------------
# one-variable truncated series

class TruncatedSeries:
    """Power series in one variable with exact rational coefficients, truncated at ``trunc``."""

    __slots__ = ("coeffs", "trunc", "var")

    def __init__(self, coeffs: Mapping[int, object] | Sequence = (), trunc: int = 8, var: str = "t"):
        if trunc < 0:
            raise ValueError("truncation degree must be non-negative")
        items = coeffs.items() if isinstance(coeffs, Mapping) else enumerate(coeffs)
        clean = {}
        for k, c in items:
            c = Fraction(c)
            if k < 0:
                raise ValueError("negative degree")
            if k <= trunc and c:
                clean[k] = c
        self.coeffs = clean
        self.trunc = trunc
        self.var = var

    def coeff(self, k: int) -> Fraction:
        return self.coeffs.get(k, Fraction(0))

    def __getitem__(self, k: int) -> Fraction:
        return self.coeff(k)

    def _new(self, coeffs, trunc=None):
        return TruncatedSeries(coeffs, self.trunc if trunc is None else trunc, self.var)

    def _t(self, other) -> int:
        return min(self.trunc, other.trunc)

    def __add__(self, other):
        if not isinstance(other, TruncatedSeries):
            other = self._new({0: other})
        out = dict(self.coeffs)
        for k, c in other.coeffs.items():
            out[k] = out.get(k, 0) + c
        return self._new(out, self._t(other))

    __radd__ = __add__

    def __neg__(self):
        return self._new({k: -c for k, c in self.coeffs.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        if not isinstance(other, TruncatedSeries):
            c = Fraction(other)
            return self._new({k: v * c for k, v in self.coeffs.items()})
        t = self._t(other)
        out: dict[int, Fraction] = {}
        for i, a in self.coeffs.items():
            for j, b in other.coeffs.items():
                if i + j <= t:
                    out[i + j] = out.get(i + j, 0) + a * b
        return self._new(out, t)

    __rmul__ = __mul__

    def __pow__(self, n: int):
        out = self._new({0: 1})
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, other):
        return isinstance(other, TruncatedSeries) and self.coeffs == other.coeffs and self.trunc == other.trunc

    def __repr__(self):
        terms = " + ".join(f"({c})*{self.var}^{k}" for k, c in sorted(self.coeffs.items())) or "0"
        return f"TruncatedSeries({terms}, trunc={self.trunc})"

    def inverse(self) -> "TruncatedSeries":
        c0 = self.coeff(0)
        if c0 == 0:
            raise ZeroDivisionError("series with zero constant term is not invertible")
        inv = {0: 1 / c0}
        for n in range(1, self.trunc + 1):
            s = sum((self.coeff(k) * inv.get(n - k, 0) for k in range(1, n + 1)), Fraction(0))
            inv[n] = -s / c0
        return self._new(inv)

    def __truediv__(self, other):
        if isinstance(other, TruncatedSeries):
            return self * other.inverse()
        return self * (1 / Fraction(other))

    def compose(self, inner: "TruncatedSeries") -> "TruncatedSeries":
        """``self(inner(t))``; ``inner`` must have zero constant term."""
        if inner.coeff(0) != 0:
            raise ValueError("inner series must have zero constant term")
        t = self._t(inner)
        # Horner from the top degree
        out = TruncatedSeries({0: self.coeff(t)}, t, inner.var)
        for k in range(t - 1, -1, -1):
            out = out * inner + self.coeff(k)
        return out

    def log(self) -> "TruncatedSeries":
        if self.coeff(0) != 1:
            raise ValueError("log needs constant term 1")
        u = self - 1
        lg = TruncatedSeries({m: Fraction((-1) ** (m + 1), m) for m in range(1, self.trunc + 1)}, self.trunc, self.var)
        return lg.compose(u)

    def exp(self) -> "TruncatedSeries":
        if self.coeff(0) != 0:
            raise ValueError("exp needs constant term 0")
        ex = TruncatedSeries({m: Fraction(1, math.factorial(m)) for m in range(self.trunc + 1)}, self.trunc, self.var)
        return ex.compose(self)

    def scale(self, c) -> "TruncatedSeries":
        """``t -> c t``."""
        c = Fraction(c)
        return self._new({k: v * c ** k for k, v in self.coeffs.items()})

    @classmethod
    def sinh_over_t(cls, trunc: int, var: str = "t") -> "TruncatedSeries":
        """``sinh(t)/t = sum t^(2k)/(2k+1)!``."""
        return cls({2 * k: Fraction(1, math.factorial(2 * k + 1)) for k in range(trunc // 2 + 1)}, trunc, var)


def ahat_series(truncation: int) -> TruncatedSeries:
    """``h(t) = 1/2 log((t/2)/sinh(t/2))`` exactly, up to ``t^truncation``."""
    s = TruncatedSeries.sinh_over_t(truncation).scale(Fraction(1, 2))
    return s.log() * Fraction(-1, 2)


def power_sum_expansion(s: TruncatedSeries, trunc: int) -> dict:
    """``exp(sum_k s_k p_k)`` as a polynomial in power sums ``p_k = Tr(F^k)``.

    Keys are non-increasing tuples of power-sum indices (``(4,)`` is
    ``Tr F^4``, ``(2, 2)`` is ``(Tr F^2)^2``); degree ``sum(key) <= trunc``.
    """
    if s.coeff(0) != 0:
        raise ValueError("genus series must have zero constant term")
    L = {(k,): c for k, c in s.coeffs.items() if k <= trunc}
    out = {(): Fraction(1)}
    term = {(): Fraction(1)}
    for m in range(1, trunc + 1):
        nxt: dict[tuple, Fraction] = defaultdict(Fraction)
        for a, ca in term.items():
            for b, cb in L.items():
                key = tuple(sorted(a + b, reverse=True))
                if sum(key) <= trunc:
                    nxt[key] += ca * cb / m
        term = {k: v for k, v in nxt.items() if v}
        if not term:
            break
        for k, v in term.items():
            out[k] = out.get(k, 0) + v
    return {k: v for k, v in out.items() if v}


def ahat_expansion(trunc: int = 8) -> dict:
    """Â form as a polynomial in power sums ``Tr(F^k)`` up to form degree ``trunc``.

    ``Tr(F^k)`` has form degree ``2k``, so only keys with ``2*sum(key) <= trunc`` occur.
    """
    return power_sum_expansion(ahat_series(trunc // 2), trunc // 2)


# ---------------------------------------------------------------------------
# forms graded by a formal variable X of degree 2

class GradedForm:
    """Polynomial ``sum_k X^k omega_k`` with forms ``omega_k`` on a common chart."""

    __slots__ = ("chart", "parts")

    def __init__(self, chart: Chart, parts: Mapping[int, Form] | None = None):
        self.chart = chart
        self.parts = {k: f for k, f in (parts or {}).items() if not f.is_zero()}

    @classmethod
    def of(cls, f: Form) -> "GradedForm":
        return cls(f.chart, {0: f})

    def __add__(self, other: "GradedForm") -> "GradedForm":
        out = dict(self.parts)
        for k, f in other.parts.items():
            out[k] = out[k] + f if k in out else f
        return GradedForm(self.chart, out)

    def scale(self, c) -> "GradedForm":
        return GradedForm(self.chart, {k: f * c for k, f in self.parts.items()})

    def wedge(self, other: "GradedForm", total_cap: int | None = None, max_x: int | None = None) -> "GradedForm":
        out: dict[int, Form] = {}
        for i, a in self.parts.items():
            for j, b in other.parts.items():
                k = i + j
                if max_x is not None and k > max_x:
                    continue
                if total_cap is not None:
                    cap = total_cap - 2 * k
                    if cap < 0:
                        continue
                    a2, b2 = a.truncate(cap), b.truncate(cap)
                    w = wedge(a2, b2).truncate(cap)
                else:
                    w = wedge(a, b)
                if not w.is_zero():
                    out[k] = out[k] + w if k in out else w
        return GradedForm(self.chart, out)

    def truncate(self, total_cap: int | None = None, max_x: int | None = None) -> "GradedForm":
        out = {}
        for k, f in self.parts.items():
            if max_x is not None and k > max_x:
                continue
            if total_cap is not None:
                if total_cap - 2 * k < 0:
                    continue
                f = f.truncate(total_cap - 2 * k)
            out[k] = f
        return GradedForm(self.chart, out)

    def form_degree_part(self, deg: int) -> dict:
        """``{X-power: Form}`` restricted to form degree ``deg``."""
        out = {}
        for k, f in sorted(self.parts.items()):
            p = f.part(deg)
            if not p.is_zero():
                out[k] = p
        return out

    def is_zero(self) -> bool:
        return not self.parts

    def __eq__(self, other):
        return isinstance(other, GradedForm) and self.parts == other.parts

    def __repr__(self):
        return "GradedForm(" + ", ".join(f"X^{k}: {f.to_text()!r}" for k, f in sorted(self.parts.items())) + ")"


def _graded_matrix(F) -> dict:
    if isinstance(F, EquivariantCurvature):
        return F.graded()
    return {0: F}


def _truncate_matrix(M: MatrixForm, cap: int) -> MatrixForm:
    return M.map(lambda e: e.truncate(cap))


def _gm_mul(A: dict, B: dict, total_cap, max_x) -> dict:
    out: dict[int, MatrixForm] = {}
    for i, a in A.items():
        for j, b in B.items():
            k = i + j
            if max_x is not None and k > max_x:
                continue
            if total_cap is not None:
                cap = total_cap - 2 * k
                if cap < 0:
                    continue
                P = _truncate_matrix(mat_mul(_truncate_matrix(a, cap), _truncate_matrix(b, cap)), cap)
            else:
                P = mat_mul(a, b)
            if not P.is_zero():
                out[k] = out[k] + P if k in out else P
    return out


def trace_powers(F, ks: Iterable[int], total_cap: int | None = None, max_x: int | None = None) -> dict:
    """``{k: GradedForm Tr(F^k)}`` for a curvature (plain or equivariant)."""
    base = _graded_matrix(F)
    chart = next(iter(base.values())).chart
    memo = {1: base}

    def power(k):
        if k not in memo:
            a = k // 2
            memo[k] = _gm_mul(power(a), power(k - a), total_cap, max_x)
        return memo[k]

    out = {}
    for k in ks:
        P = power(k)
        out[k] = GradedForm(chart, {x: trace(M) for x, M in P.items()}).truncate(total_cap, max_x)
    return out


def genus_form(s: TruncatedSeries, F, dim_cap: int, max_x: int | None = None):
    """``exp(sum_k s_k Tr(F^k))`` truncated at degree ``dim_cap``.

    For a plain curvature the result is a :class:`Form` truncated at form
    degree ``dim_cap``; for an :class:`EquivariantCurvature` it is a
    :class:`GradedForm` truncated at total degree ``dim_cap`` (X counts 2).
    """
    if s.coeff(0) != 0:
        raise ValueError("genus series must have zero constant term")
    plain = not isinstance(F, EquivariantCurvature)
    chart = F.chart
    ks = [k for k, c in s.coeffs.items() if c and 2 * k <= dim_cap]
    traces = trace_powers(F, ks, dim_cap, max_x) if ks else {}
    L = GradedForm(chart)
    for k in ks:
        L = L + traces[k].scale(s.coeff(k))
    result = GradedForm.of(Form.scalar(chart, 1))
    term = GradedForm.of(Form.scalar(chart, 1))
    for m in range(1, dim_cap // 2 + 1):
        term = term.wedge(L, dim_cap, max_x).scale(Fraction(1, m))
        if term.is_zero():
            break
        result = result + term
    if plain:
        return result.parts.get(0, Form.zero(chart))
    return result


def chern_character(F, twist=1) -> Form:
    """``Tr(twist * exp(F))``; ``F`` may be a list of ``(MatrixForm, twist)`` summands."""
    if isinstance(F, (list, tuple)):
        parts = [chern_character(M, t) for M, t in F]
        out = parts[0]
        for p in parts[1:]:
            out = out + p
        return out
    chart = F.chart
    t = _num(twist)
    if not _exact(t):
        raise TypeError("twist must be an exact (Gaussian rational) scalar")
    if abs(abs(complex(_float(t))) - 1) > 1e-12:
        raise ValueError("twist must have modulus 1")
    for row in F.entries:
        for e in row:
            if 0 in e.degrees() or any(dg % 2 for dg in e.degrees()):
                raise ValueError("curvature entries must be forms of positive even degree")
    acc = MatrixForm.identity(chart, F.size)
    P = acc
    for k in range(1, chart.dim // 2 + 1):
        P = mat_mul(P, F).map(lambda e, k=k: e * Fraction(1, k))
        if P.is_zero():
            break
        acc = acc + P
    return trace(acc) * t


# ---------------------------------------------------------------------------
# [.]_max extraction

def word_expansion(word: Sequence[int], form_degree: int | None = None) -> dict:
    """Expand a product of traces ``prod_j Tr(F(X)^{word_j})`` with ``F(X) = F + X mu``.

    Returns ``{X-power: {canonical word: multiplicity}}``; words are tuples of
    cyclically-normalised strings over ``"F"``/``"M"`` (``M`` is ``mu``).  With
    ``form_degree`` set only terms of that form degree (2 per ``F``) are kept.
    """
    def canonical(w: str) -> str:
        return min(w[i:] + w[:i] for i in range(len(w)))

    factors = []
    for k in word:
        counts: dict[str, int] = defaultdict(int)
        for letters in itertools.product("FM", repeat=k):
            counts[canonical("".join(letters))] += 1
        factors.append(counts)
    out: dict[int, dict] = defaultdict(lambda: defaultdict(int))
    for combo in itertools.product(*(f.items() for f in factors)):
        words = tuple(sorted(w for w, _ in combo))
        mult = math.prod(m for _, m in combo)
        nF = sum(w.count("F") for w in words)
        nM = sum(w.count("M") for w in words)
        if form_degree is not None and 2 * nF != form_degree:
            continue
        out[nM][words] += mult
    return {k: dict(v) for k, v in sorted(out.items())}


def max_degree_component(graded: EquivariantCurvature, base_top_degree: int, word: Sequence[int],
                         max_x: int | None = None) -> dict:
    """``[prod_j Tr(F(X)^{word_j})]_max`` as ``{X-power: Form}``.

    Only the component of form degree ``base_top_degree`` is kept; an
    overlong word simply yields the empty map.
    """
    traces = trace_powers(graded, sorted(set(word)), None, max_x)
    chart = graded.chart
    acc = GradedForm.of(Form.scalar(chart, 1))
    for k in word:
        acc = acc.wedge(traces[k], None, max_x)
    return acc.form_degree_part(base_top_degree)


# ---------------------------------------------------------------------------
# truncated cohomology ring

class CohClass:
    """Element of ``C[g_1, ..., g_r] / (g_j^{n_j})`` with degree-2 generators.

    ``generators`` is a tuple of ``(name, nilpotency)``; a monomial is the
    exponent tuple.  Coefficients are Fractions, exact Gaussian rationals
    (:class:`Const`) or floats / complex numbers.
    """

    __slots__ = ("generators", "terms")

    def __init__(self, generators: Sequence = (), terms: Mapping[tuple, object] | None = None):
        gens = tuple((str(n), int(p)) for n, p in generators)
        if len({n for n, _ in gens}) != len(gens):
            raise ValueError("generator names must be distinct")
        if any(p < 1 for _, p in gens):
            raise ValueError("nilpotency exponents must be >= 1")
        clean = {}
        for mono, c in (terms or {}).items():
            mono = tuple(mono)
            if len(mono) != len(gens) or any(e < 0 for e in mono):
                raise ValueError(f"bad monomial {mono}")
            if any(e >= p for e, (_, p) in zip(mono, gens)):
                continue
            c = _num(c)
            if not _is_zero(c):
                clean[mono] = c
        self.generators = gens
        self.terms = clean

    @classmethod
    def for_base(cls, generator: str, base_dim: int) -> "CohClass":
        """Zero class of the ring generated by one degree-2 class on a base of real dimension ``base_dim``."""
        return cls(((generator, base_dim // 2 + 1),))

    @classmethod
    def scalar_ring(cls) -> "CohClass":
        return cls(())

    def const(self, c) -> "CohClass":
        return CohClass(self.generators, {(0,) * len(self.generators): c})

    def one(self) -> "CohClass":
        return self.const(1)

    def zero(self) -> "CohClass":
        return CohClass(self.generators)

    def gen(self, name: str) -> "CohClass":
        names = [n for n, _ in self.generators]
        mono = tuple(int(n == name) for n in names)
        if name not in names:
            raise KeyError(name)
        return CohClass(self.generators, {mono: 1})

    def _check(self, other: "CohClass"):
        if other.generators != self.generators:
            raise ValueError("classes live in different rings")

    def __add__(self, other):
        if not isinstance(other, CohClass):
            other = self.const(other)
        self._check(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = _nadd(out[m], c) if m in out else c
        return CohClass(self.generators, out)

    __radd__ = __add__

    def __neg__(self):
        return CohClass(self.generators, {m: _nmul(-1, c) for m, c in self.terms.items()})

    def __sub__(self, other):
        if not isinstance(other, CohClass):
            other = self.const(other)
        return self + (-other)

    def __mul__(self, other):
        if not isinstance(other, CohClass):
            c = _num(other)
            return CohClass(self.generators, {m: _nmul(v, c) for m, v in self.terms.items()})
        self._check(other)
        out: dict[tuple, object] = {}
        for a, ca in self.terms.items():
            for b, cb in other.terms.items():
                m = tuple(x + y for x, y in zip(a, b))
                v = _nmul(ca, cb)
                out[m] = _nadd(out[m], v) if m in out else v
        return CohClass(self.generators, out)

    def __rmul__(self, other):
        return self * other

    def __pow__(self, n: int):
        out = self.one()
        for _ in range(n):
            out = out * self
        return out

    def coefficient(self, mono: tuple | None = None, **powers):
        if mono is None:
            mono = tuple(powers.get(n, 0) for n, _ in self.generators)
        return self.terms.get(tuple(mono), Fraction(0))

    def is_zero(self) -> bool:
        return not self.terms

    def degree_part(self, deg: int) -> "CohClass":
        return CohClass(self.generators, {m: c for m, c in self.terms.items() if 2 * sum(m) == deg})

    def __eq__(self, other):
        if not isinstance(other, CohClass):
            return NotImplemented
        if other.generators != self.generators or set(self.terms) != set(other.terms):
            return False
        return all(_is_zero(_nadd(c, _nmul(-1, other.terms[m]))) for m, c in self.terms.items())

    def __hash__(self):
        return hash((self.generators, tuple(sorted((m, str(c)) for m, c in self.terms.items()))))

    def isclose(self, other: "CohClass", rel: float = 1e-9, abs_tol: float = 1e-12) -> bool:
        self._check(other)
        for m in set(self.terms) | set(other.terms):
            a = complex(_float(self.coefficient(m)))
            b = complex(_float(other.coefficient(m)))
            if abs(a - b) > max(abs_tol, rel * max(abs(a), abs(b))):
                return False
        return True

    def monomial_name(self, mono: tuple) -> str:
        parts = []
        for (n, _), e in zip(self.generators, mono):
            if e == 1:
                parts.append(n)
            elif e > 1:
                parts.append(f"{n}^{e}")
        return "*".join(parts) or "1"

    def to_json(self) -> dict:
        """``{monomial: [re, im]}`` in increasing degree order."""
        keys = sorted(self.terms, key=lambda m: (sum(m), m))
        return {self.monomial_name(m): _to_pair(self.terms[m]) for m in keys}

    def __str__(self):
        if not self.terms:
            return "0"
        keys = sorted(self.terms, key=lambda m: (sum(m), m))
        out = []
        for m in keys:
            c = self.terms[m]
            name = self.monomial_name(m)
            cs = str(c) if not isinstance(c, Const) else f"({c})"
            out.append(cs if name == "1" else f"{cs}*{name}")
        return " + ".join(out)

    def __repr__(self):
        return f"CohClass({self})"


class MissingJet(KeyError):
    pass


class JetFunction:
    """Derivatives ``phi^(k)`` of a test function at a base point (exponential coordinates)."""

    __slots__ = ("base", "jets")

    def __init__(self, jets: Mapping[int, object] | Sequence, base: str = "Id"):
        items = jets.items() if isinstance(jets, Mapping) else enumerate(jets)
        self.jets = {int(k): _num(v) for k, v in items}
        if 0 not in self.jets:
            raise ValueError("a jet needs its order-0 value")
        self.base = base

    @classmethod
    def constant(cls, value=1, base: str = "Id") -> "JetFunction":
        """Function equal to ``value`` on a neighbourhood: all higher jets vanish."""
        return _ConstantJet(value, base)

    @classmethod
    def zero(cls, base: str = "Id") -> "JetFunction":
        return _ConstantJet(0, base)

    def jet(self, k: int):
        try:
            return self.jets[k]
        except KeyError:
            raise MissingJet(f"jet of order {k} not supplied at {self.base}") from None

    def __repr__(self):
        return f"JetFunction({self.jets}, base={self.base!r})"


class _ConstantJet(JetFunction):
    def __init__(self, value, base):
        super().__init__({0: value}, base)

    def jet(self, k: int):
        return self.jets[0] if k == 0 else Fraction(0)


def chern_weil_eval(phi: JetFunction, theta: CohClass) -> CohClass:
    """``sum_k phi^(k)(0)/k! theta^k`` in the truncated ring."""
    out = theta.zero()
    power = theta.one()
    k = 0
    while not power.is_zero():
        out = out + power * _ndiv(phi.jet(k), math.factorial(k))
        k += 1
        power = power * theta
    return out

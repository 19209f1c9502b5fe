"""Exact scalar expressions over real chart coordinates.

An :class:`Expr` is an immutable expression tree (constants, coordinates,
sums, products, quotients, integer powers, circle phases ``exp(k*i*lam)``
and square roots).  :func:`normalize` maps every tree to a :class:`Normal`
node, a unique normal form backed by a reduced multivariate fraction with
integer coefficients.

The coefficient field is QQ(coords)[i, phases, roots]: the imaginary unit,
the phases ``w = exp(i*lam)`` of angular coordinates and square roots of
irreducible radicands are adjoined as extra ring variables.  Numerators are
kept at degree <= 1 in every adjoined square root (``i`` is the square root
of -1) and denominators are kept free of them, which makes the reduced
fraction unique.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping

import numpy as np
from sympy import Symbol, factorint
from sympy.polys.domains import QQ
from sympy.polys.fields import FracField
from sympy.polys.orderings import grlex

__all__ = [
    "Expr", "Const", "Coord", "Add", "Mul", "Div", "Pow", "Phase", "Sqrt", "Pi",
    "Normal", "Chart", "I", "PI", "ZERO", "ONE", "const", "z", "zbar", "normalize",
    "diff", "evaluate", "compile_expr", "parse", "substitute", "equal",
    "fourier_mode", "EvaluationError",
]

RESERVED = frozenset({"i", "exp", "sqrt", "pi"})
_IMAG = "i"
_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")
_ZERO_THRESHOLD = 1e-300


class EvaluationError(ValueError):
    """Numeric evaluation failed (unbound coordinate or zero denominator)."""


# ---------------------------------------------------------------------------
# ring variables

@dataclass(frozen=True)
class _Var:
    name: str
    kind: str  # "coord" | "pi" | "phase" | "root" | "imag"
    coord: str = ""
    radicand: tuple = ()  # (coord names, ((monom, int coeff), ...))


_PI = "pi"
_VARS: dict[str, _Var] = {_IMAG: _Var(_IMAG, "imag"), _PI: _Var(_PI, "pi")}
_RANK = {"coord": 0, "pi": 1, "phase": 2, "root": 3, "imag": 4}


def _natural(name: str) -> tuple:
    m = re.fullmatch(r"(.*?)(\d*)", name)
    stem, digits = m.group(1), m.group(2)
    return (int(digits) if digits else -1, stem, name)


def _var_key(name: str) -> tuple:
    v = _VARS[name]
    if v.kind == "coord":
        return (0,) + _natural(name)
    if v.kind == "phase":
        return (2,) + _natural(v.coord)
    return (_RANK[v.kind], 0, name, name)


def _coord_var(name: str) -> str:
    if name not in _VARS:
        if name in RESERVED or not _NAME_RE.fullmatch(name):
            raise ValueError(f"invalid coordinate name {name!r}")
        _VARS[name] = _Var(name, "coord")
    elif _VARS[name].kind != "coord":
        raise ValueError(f"{name!r} is not a coordinate")
    return name


def _phase_var(coord: str) -> str:
    _coord_var(coord)
    name = f"exp(i*{coord})"
    _VARS.setdefault(name, _Var(name, "phase", coord=coord))
    return name


_FIELDS: dict[tuple, FracField] = {}
_NAMES: dict[int, tuple] = {}
_SPECIALS: dict[int, list] = {}


def _field(names: tuple) -> FracField:
    K = _FIELDS.get(names)
    if K is None:
        K = FracField([Symbol(n) for n in names], QQ, grlex)
        _FIELDS[names] = K
        _NAMES[id(K)] = names
    return K


def _names(K: FracField) -> tuple:
    return _NAMES[id(K)]


def _unify(f, g):
    if f.field is g.field:
        return f, g
    names = tuple(sorted(set(_names(f.field)) | set(_names(g.field)), key=_var_key))
    K = _field(names)
    return (f if f.field is K else f.set_field(K)), (g if g.field is K else g.set_field(K))


def _lift_to(f, names: Iterable[str]):
    allnames = tuple(sorted(set(_names(f.field)) | set(names), key=_var_key))
    K = _field(allnames)
    return f if f.field is K else f.set_field(K)


def _poly_from_terms(R, names: tuple, terms) -> object:
    """Build a polynomial of ring ``R`` from terms over the variables ``names``."""
    rnames = _names_of_ring(R)
    pos = [rnames.index(n) for n in names]
    out = {}
    for monom, c in terms:
        m = [0] * R.ngens
        for p, e in zip(pos, monom):
            m[p] = e
        out[tuple(m)] = QQ(c)
    return R.from_dict(out)


def _names_of_ring(R) -> tuple:
    return tuple(s.name for s in R.symbols)


def _specials(K: FracField) -> list:
    """(generator index, square polynomial) for every adjoined square root."""
    got = _SPECIALS.get(id(K))
    if got is None:
        R = K.ring
        got = []
        for idx, n in enumerate(_names(K)):
            v = _VARS[n]
            if v.kind == "imag":
                got.append((idx, R(-1)))
            elif v.kind == "root":
                got.append((idx, _poly_from_terms(R, *v.radicand)))
        _SPECIALS[id(K)] = got
    return got


def _split(P, idx: int) -> dict:
    parts: dict[int, dict] = {}
    for m, c in P.items():
        k = m[idx]
        parts.setdefault(k, {})[m[:idx] + (0,) + m[idx + 1:]] = c
    return parts


def _reduce_poly(P, idx: int, square):
    if P.degree(idx) <= 1:
        return P
    R = P.ring
    gen = R.gens[idx]
    out = R.zero
    for k, d in _split(P, idx).items():
        term = R.from_dict(d)
        if k >= 2:
            term = term * square ** (k // 2)
        if k % 2:
            term = term * gen
        out += term
    return out


def _reduce(f):
    specials = _specials(f.field)
    if not specials:
        return f
    N, D = f.numer, f.denom
    dirty = False
    for idx, sq in specials:
        if N.degree(idx) > 1:
            N, dirty = _reduce_poly(N, idx, sq), True
        if D.degree(idx) > 1:
            D, dirty = _reduce_poly(D, idx, sq), True
    R = f.field.ring
    for idx, sq in specials:
        if D.degree(idx) < 1:
            continue
        parts = _split(D, idx)
        D0 = R.from_dict(parts.get(0, {}))
        D1 = R.from_dict(parts.get(1, {}))
        N = N * (D0 - D1 * R.gens[idx])
        D = D0 * D0 - D1 * D1 * sq
        for idx2, sq2 in specials:
            N = _reduce_poly(N, idx2, sq2)
            D = _reduce_poly(D, idx2, sq2)
        dirty = True
    if not dirty:
        return f
    if D == 0:
        raise ZeroDivisionError("zero denominator detected during reduction")
    return f.field.new(N, D)


# value arithmetic (values are FracElements in one of the cached fields)

def _v_const(re_: Fraction, im: Fraction = Fraction(0)):
    if im == 0:
        return _field(())(QQ(re_.numerator, re_.denominator))
    K = _field((_IMAG,))
    return K(QQ(re_.numerator, re_.denominator)) + K(QQ(im.numerator, im.denominator)) * K.gens[0]


def _v_gen(name: str):
    K = _field((name,))
    return K.gens[0]


def _v_add(f, g):
    f, g = _unify(f, g)
    return f + g


def _v_sub(f, g):
    f, g = _unify(f, g)
    return f - g


def _v_mul(f, g):
    f, g = _unify(f, g)
    return _reduce(f * g)


def _v_inv(f):
    if f.numer == 0:
        raise ZeroDivisionError("division by the zero expression")
    return _reduce(f.field.new(f.denom, f.numer))


def _v_pow(f, n: int):
    if n < 0:
        return _v_pow(_v_inv(f), -n)
    result = f.field.one
    base = f
    while n:
        if n & 1:
            result = _v_mul(result, base)
        n >>= 1
        if n:
            base = _v_mul(base, base)
    return result


def _v_diff(f, c: str):
    K = f.field
    R = K.ring
    N, D = f.numer, f.denom
    total = K.zero
    for idx, n in enumerate(_names(K)):
        v = _VARS[n]
        if v.kind == "coord":
            if n != c:
                continue
            chain = K.one
        elif v.kind == "phase":
            if v.coord != c:
                continue
            chain = _v_mul(_v_gen(_IMAG), _v_gen(n))
        elif v.kind == "root":
            if c not in v.radicand[0]:
                continue
            p = _field(v.radicand[0])
            p = p.new(_poly_from_terms(p.ring, *v.radicand), p.ring.one)
            chain = _v_mul(_v_mul(_v_diff(p, c), _v_inv(_v_mul(_v_const(Fraction(2)), p))), _v_gen(n))
        else:
            continue
        gen = R.gens[idx]
        part = K.new(N.diff(gen) * D - N * D.diff(gen), D * D)
        total = _v_add(total, _v_mul(part, chain))
    return total


def _v_sqrt(f):
    """Square root of a rational function of real coordinates (principal branch)."""
    K = f.field
    used = {n for n, e in zip(_names(K), _degrees(f)) if e}
    if any(_VARS[n].kind != "coord" for n in used):
        raise ValueError("sqrt: radicand must be a rational function of real coordinates")
    if f.numer == 0:
        return _field(())(0)
    P = f.numer * f.denom
    Q = f.denom
    if P.is_ground:
        coeff, factors = P.LC, []
    else:
        coeff, factors = P.factor_list()
    out = _v_inv(K.new(Q, K.ring.one))
    scalar = Fraction(int(coeff.numerator), int(coeff.denominator))
    for fac, mult in factors:
        content, prim = fac.clear_denoms()
        if prim.LC < 0:
            prim = -prim
            content = -content
        scalar /= Fraction(int(content.numerator), int(content.denominator)) ** mult
        if mult // 2:
            out = _v_mul(out, _v_pow(K.new(prim, K.ring.one), mult // 2))
        if mult % 2:
            out = _v_mul(out, _root_of_poly(prim))
    if scalar < 0:
        out = _v_mul(out, _v_gen(_IMAG))
        scalar = -scalar
    # sqrt(p/q) = sqrt(p*q)/q with squarefree integer part adjoined as roots
    num = scalar.numerator * scalar.denominator
    outside = Fraction(1, scalar.denominator)
    for prime, mult in sorted(factorint(num).items()):
        outside *= Fraction(prime) ** (mult // 2)
        if mult % 2:
            out = _v_mul(out, _root_var(((), (((), prime),))))
    return _v_mul(out, _v_const(outside))


def _root_of_poly(prim):
    names = _names_of_ring(prim.ring)
    used = [k for k in range(len(names)) if prim.degree(k) > 0]
    sub = tuple(names[k] for k in used)
    terms = tuple(sorted((tuple(m[k] for k in used), int(c)) for m, c in prim.items()))
    return _root_var((sub, terms))


def _root_var(radicand: tuple):
    names, terms = radicand
    if names:
        R = _field(names).ring
        text = str(_poly_from_terms(R, names, terms))
    else:
        text = str(terms[0][1])
    name = f"sqrt({text})"
    _VARS.setdefault(name, _Var(name, "root", radicand=radicand))
    return _v_gen(name)


def _degrees(f) -> list:
    n = len(_names(f.field))
    out = [0] * n
    for P in (f.numer, f.denom):
        for m in P.keys():
            for k in range(n):
                if m[k] > out[k]:
                    out[k] = m[k]
    return out


# ---------------------------------------------------------------------------
# expression trees

class Expr:
    """Base class of immutable expression nodes."""

    __slots__ = ()

    @property
    def value(self):
        v = self.__dict__.get("_value")
        if v is None:
            v = self._compute_value()
            object.__setattr__(self, "_value", v)
        return v

    def _compute_value(self):  # pragma: no cover - abstract
        raise NotImplementedError

    def __add__(self, other):
        other = _lift(other)
        if isinstance(self, Normal) or isinstance(other, Normal):
            return Normal(_v_add(self.value, other.value))
        return add(self, other)

    def __radd__(self, other):
        return _lift(other).__add__(self)

    def __sub__(self, other):
        other = _lift(other)
        if isinstance(self, Normal) or isinstance(other, Normal):
            return Normal(_v_sub(self.value, other.value))
        return add(self, neg(other))

    def __rsub__(self, other):
        return _lift(other).__sub__(self)

    def __mul__(self, other):
        other = _lift(other)
        if isinstance(self, Normal) or isinstance(other, Normal):
            return Normal(_v_mul(self.value, other.value))
        return mul(self, other)

    def __rmul__(self, other):
        return _lift(other).__mul__(self)

    def __truediv__(self, other):
        other = _lift(other)
        if isinstance(self, Normal) or isinstance(other, Normal):
            return Normal(_v_mul(self.value, _v_inv(other.value)))
        return div(self, other)

    def __rtruediv__(self, other):
        return _lift(other).__truediv__(self)

    def __neg__(self):
        if isinstance(self, Normal):
            return Normal(-self.value)
        return neg(self)

    def __pos__(self):
        return self

    def __pow__(self, n):
        if not isinstance(n, int):
            raise TypeError("only integer powers are supported")
        if isinstance(self, Normal):
            return Normal(_v_pow(self.value, n))
        return power(self, n)

    def __str__(self):
        return _fmt(self)

    def __repr__(self):
        return f"{type(self).__name__}({_fmt(self)!r})"


@dataclass(frozen=True, repr=False)
class Const(Expr):
    re: Fraction = Fraction(0)
    im: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "re", Fraction(self.re))
        object.__setattr__(self, "im", Fraction(self.im))

    def _compute_value(self):
        return _v_const(self.re, self.im)

    @property
    def is_real(self) -> bool:
        return self.im == 0

    def __complex__(self):
        return complex(float(self.re), float(self.im))


@dataclass(frozen=True, repr=False)
class Coord(Expr):
    name: str

    def __post_init__(self):
        _coord_var(self.name)

    def _compute_value(self):
        return _v_gen(self.name)


@dataclass(frozen=True, repr=False)
class Add(Expr):
    terms: tuple

    def _compute_value(self):
        v = self.terms[0].value
        for t in self.terms[1:]:
            v = _v_add(v, t.value)
        return v


@dataclass(frozen=True, repr=False)
class Mul(Expr):
    factors: tuple

    def _compute_value(self):
        v = self.factors[0].value
        for t in self.factors[1:]:
            v = _v_mul(v, t.value)
        return v


@dataclass(frozen=True, repr=False)
class Div(Expr):
    num: Expr
    den: Expr

    def _compute_value(self):
        return _v_mul(self.num.value, _v_inv(self.den.value))


@dataclass(frozen=True, repr=False)
class Pow(Expr):
    base: Expr
    exp: int

    def _compute_value(self):
        return _v_pow(self.base.value, self.exp)


@dataclass(frozen=True, repr=False)
class Phase(Expr):
    """``exp(k*i*coord)`` for an angular coordinate."""

    coord: str
    k: int = 1

    def __post_init__(self):
        _phase_var(self.coord)

    def _compute_value(self):
        return _v_pow(_v_gen(_phase_var(self.coord)), self.k)


@dataclass(frozen=True, repr=False)
class Pi(Expr):
    """The transcendental constant pi, kept as an independent symbol."""

    def _compute_value(self):
        return _v_gen(_PI)


@dataclass(frozen=True, repr=False)
class Sqrt(Expr):
    arg: Expr

    def _compute_value(self):
        return _v_sqrt(self.arg.value)


class Normal(Expr):
    """Normal form of an expression; equality is equality of rational functions."""

    __slots__ = ("_value", "_text", "__dict__")

    def __init__(self, value):
        object.__setattr__(self, "_value", value)
        object.__setattr__(self, "_text", None)

    def __setattr__(self, k, v):
        raise AttributeError("Normal is immutable")

    def _compute_value(self):
        return self._value

    @property
    def value(self):
        return self._value

    def tree(self) -> Expr:
        """The canonical expression tree of this normal form."""
        return _canonical_tree(self._value)

    def __str__(self):
        if self._text is None:
            object.__setattr__(self, "_text", _fmt(self.tree()))
        return self._text

    def __eq__(self, other):
        if not isinstance(other, Normal):
            return NotImplemented
        f, g = _unify(self._value, other._value)
        return f == g

    def __hash__(self):
        return hash(str(self))

    def is_zero(self) -> bool:
        return self._value.numer == 0

    def is_constant(self) -> bool:
        """No dependence on coordinates (``i`` and ``pi`` may appear)."""
        return not self.free_coords()

    def constant(self) -> complex:
        """Exact value of a constant normal form as a complex number."""
        if not self.is_constant():
            raise ValueError(f"{self} is not constant")
        return evaluate(self, {})

    def free_coords(self) -> set:
        out = set()
        for n, e in zip(_names(self._value.field), _degrees(self._value)):
            if not e:
                continue
            v = _VARS[n]
            if v.kind == "coord":
                out.add(n)
            elif v.kind == "phase":
                out.add(v.coord)
            elif v.kind == "root":
                out.update(v.radicand[0])
        return out

    def real_imag(self) -> tuple["Normal", "Normal"]:
        """Split ``a + i*b`` with ``a, b`` free of the imaginary unit.

        For expressions without phases ``a`` and ``b`` are the real and
        imaginary parts on the real chart.
        """
        f = self._value
        names = _names(f.field)
        if _IMAG not in names:
            return self, Normal(f.field.zero)
        idx = names.index(_IMAG)
        R = f.field.ring
        parts = _split(f.numer, idx)
        a = f.field.new(R.from_dict(parts.get(0, {})), f.denom)
        b = f.field.new(R.from_dict(parts.get(1, {})), f.denom)
        return Normal(a), Normal(b)


ZERO = Const(0)
ONE = Const(1)
I = Const(0, 1)
PI = Pi()


def _lift(x) -> Expr:
    if isinstance(x, Expr):
        return x
    return const(x)


def const(re_, im=0) -> Const:
    """Exact constant from ints, Fractions, strings like ``'3/4'`` or integral complex."""
    if isinstance(re_, complex):
        if re_.real != int(re_.real) or re_.imag != int(re_.imag):
            raise TypeError("only exact (integral) complex literals are accepted")
        return Const(Fraction(int(re_.real)), Fraction(int(re_.imag)) + Fraction(im))
    if isinstance(re_, float) or isinstance(im, float):
        raise TypeError("floating-point constants are not exact; use Fraction")
    return Const(Fraction(re_), Fraction(im))


# smart constructors: they fix the tree shape so that printing round-trips

def add(*terms: Expr) -> Expr:
    flat = []
    c = Const(0)
    for t in terms:
        t = _lift(t)
        for u in (t.terms if isinstance(t, Add) else (t,)):
            if isinstance(u, Const):
                c = Const(c.re + u.re, c.im + u.im)
            else:
                flat.append(u)
    if c.re or c.im:
        flat.append(c)
    if not flat:
        return Const(0)
    if len(flat) == 1:
        return flat[0]
    return Add(tuple(flat))


def mul(*factors: Expr) -> Expr:
    flat = []
    c = Const(1)
    for f in factors:
        f = _lift(f)
        for u in (f.factors if isinstance(f, Mul) else (f,)):
            if isinstance(u, Const):
                c = Const(c.re * u.re - c.im * u.im, c.re * u.im + c.im * u.re)
            else:
                flat.append(u)
    if c.re == 0 and c.im == 0:
        return Const(0)
    if not flat:
        return c
    if c.re == 1 and c.im == 0:
        return flat[0] if len(flat) == 1 else Mul(tuple(flat))
    return Mul((c,) + tuple(flat))


def div(a: Expr, b: Expr) -> Expr:
    a, b = _lift(a), _lift(b)
    if isinstance(b, Const):
        if b.re == 0 and b.im == 0:
            raise ZeroDivisionError("division by constant zero")
        if isinstance(a, Const):
            d = b.re * b.re + b.im * b.im
            return Const((a.re * b.re + a.im * b.im) / d, (a.im * b.re - a.re * b.im) / d)
    return Div(a, b)


def power(b: Expr, n: int) -> Expr:
    b = _lift(b)
    if n == 0:
        return Const(1)
    if n == 1:
        return b
    if isinstance(b, Const):
        out = Const(1)
        for _ in range(abs(n)):
            out = mul(out, b)
        return div(Const(1), out) if n < 0 else out
    return Pow(b, n)


def neg(a: Expr) -> Expr:
    return mul(Const(-1), a)


def z(k: int | str, x: str = "x", y: str = "y") -> Expr:
    """Complex coordinate ``z_k = x_k + i*y_k``."""
    return add(Coord(f"{x}{k}"), mul(I, Coord(f"{y}{k}")))


def zbar(k: int | str, x: str = "x", y: str = "y") -> Expr:
    """Conjugate coordinate ``x_k - i*y_k``."""
    return add(Coord(f"{x}{k}"), mul(Const(0, -1), Coord(f"{y}{k}")))


# ---------------------------------------------------------------------------
# printing

def _fmt_fraction(q: Fraction) -> str:
    return str(q)


def _fmt_const(c: Const) -> str:
    if c.im == 0:
        return _fmt_fraction(c.re)
    if c.re == 0:
        return _fmt_imag(c.im)
    sign = " - " if c.im < 0 else " + "
    return f"({_fmt_fraction(c.re)}{sign}{_fmt_imag(abs(c.im))})"


def _fmt_imag(q: Fraction) -> str:
    if q == 1:
        return "i"
    if q == -1:
        return "-i"
    return f"{_fmt_fraction(q)}*i"


def _negative_lead(c: Const) -> bool:
    """Constant prints with a leading minus that subtraction can absorb."""
    return (c.im == 0 and c.re < 0) or (c.re == 0 and c.im < 0)


def _fmt(e: Expr) -> str:
    if isinstance(e, Normal):
        return str(e)
    if isinstance(e, Const):
        return _fmt_const(e)
    if isinstance(e, Coord):
        return e.name
    if isinstance(e, Pi):
        return "pi"
    if isinstance(e, Phase):
        k = e.k
        if k == 1:
            return f"exp(i*{e.coord})"
        if k == -1:
            return f"exp(-i*{e.coord})"
        return f"exp({k}*i*{e.coord})"
    if isinstance(e, Sqrt):
        return f"sqrt({_fmt(e.arg)})"
    if isinstance(e, Pow):
        b = e.base
        bs = _fmt(b)
        if not isinstance(b, (Coord, Pi, Phase, Sqrt, Normal)):
            bs = f"({bs})"
        elif isinstance(b, Normal):
            bs = f"({bs})"
        return f"{bs}^{e.exp}" if e.exp >= 0 else f"{bs}^({e.exp})"
    if isinstance(e, Mul):
        return _fmt_mul(e.factors)
    if isinstance(e, Div):
        n = _fmt(e.num)
        if isinstance(e.num, (Add, Div)):
            n = f"({n})"
        d = _fmt(e.den)
        if isinstance(e.den, (Add, Mul, Div)) or (
            isinstance(e.den, Const) and (e.den.im != 0 or e.den.re < 0 or e.den.re.denominator != 1)
        ):
            d = f"({d})"
        return f"{n}/{d}"
    if isinstance(e, Add):
        parts = [_fmt(e.terms[0])]
        for t in e.terms[1:]:
            if isinstance(t, Const) and _negative_lead(t):
                parts.append(" - " + _fmt_const(Const(-t.re, -t.im)))
            elif isinstance(t, Mul) and isinstance(t.factors[0], Const) and _negative_lead(t.factors[0]):
                c = t.factors[0]
                parts.append(" - " + _fmt(mul(Const(-c.re, -c.im), *t.factors[1:])))
            else:
                parts.append(" + " + _fmt(t))
        return "".join(parts)
    raise TypeError(f"cannot format {type(e).__name__}")


def _fmt_mul(factors: tuple) -> str:
    out = []
    rest = factors
    prefix = ""
    if isinstance(factors[0], Const):
        c = factors[0]
        rest = factors[1:]
        if c.im == 0 and c.re == -1:
            prefix = "-"
        elif c.re == 0 and c.im in (1, -1):
            prefix = "i*" if c.im == 1 else "-i*"
        else:
            out.append(_fmt_const(c))
    for f in rest:
        s = _fmt(f)
        if isinstance(f, (Add, Div)):
            s = f"({s})"
        out.append(s)
    return prefix + "*".join(out)


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(r"\s*(?:(\d+)|([A-Za-z_][A-Za-z_0-9]*)|(\*\*|[-+*/^()]))")


def _tokenize(text: str) -> list:
    pos = 0
    out = []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise SyntaxError(f"unexpected character at {pos}: {text[pos:pos + 10]!r}")
        num, name, op = m.groups()
        if num is not None:
            out.append(("num", int(num)))
        elif name is not None:
            out.append(("name", name))
        else:
            out.append(("op", "^" if op == "**" else op))
        pos = m.end()
    return out


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else (None, None)

    def take(self, kind=None, val=None):
        tok = self.peek()
        if tok[0] is None or (kind and tok[0] != kind) or (val is not None and tok[1] != val):
            raise SyntaxError(f"expected {val or kind}, got {tok[1]!r}")
        self.i += 1
        return tok

    def parse(self) -> Expr:
        e = self.expr()
        if self.i != len(self.toks):
            raise SyntaxError(f"trailing input at token {self.peek()[1]!r}")
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            t = self.term()
            e = add(e, t) if op == "+" else add(e, neg(t))
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            u = self.unary()
            e = mul(e, u) if op == "*" else div(e, u)
        return e

    def unary(self) -> Expr:
        if self.peek() == ("op", "-"):
            self.take()
            return neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        b = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            return power(b, self.exponent())
        return b

    def exponent(self) -> int:
        if self.peek() == ("op", "("):
            self.take()
            n = self.exponent()
            self.take("op", ")")
            return n
        sign = 1
        if self.peek() == ("op", "-"):
            self.take()
            sign = -1
        return sign * self.take("num")[1]

    def atom(self) -> Expr:
        kind, val = self.peek()
        if kind == "num":
            self.take()
            return Const(val)
        if kind == "name":
            self.take()
            if val == "i":
                return I
            if val == "pi":
                return PI
            if val in ("exp", "sqrt"):
                self.take("op", "(")
                arg = self.expr()
                self.take("op", ")")
                return Sqrt(arg) if val == "sqrt" else _phase_from(arg)
            return Coord(val)
        if (kind, val) == ("op", "("):
            self.take()
            e = self.expr()
            self.take("op", ")")
            return e
        raise SyntaxError(f"unexpected token {val!r}")


def _phase_from(arg: Expr) -> Phase:
    g = normalize(div(arg, I)) if not isinstance(arg, Normal) else arg / I
    f = g.value
    names = _names(f.field)
    if f.denom == f.field.ring.one and len(f.numer) == 1:
        (m, c), = f.numer.items()
        used = [k for k, e in enumerate(m) if e]
        if len(used) == 1 and m[used[0]] == 1 and _VARS[names[used[0]]].kind == "coord" and c.denominator == 1:
            return Phase(names[used[0]], int(c))
    raise SyntaxError("exp() accepts only integer*i*coordinate arguments")


def parse(text: str) -> Expr:
    """Parse the infix syntax produced by ``str(expr)``."""
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# normal form back to a canonical tree

def _mpq(c) -> Fraction:
    return Fraction(int(c.numerator), int(c.denominator))


def _factor_tree(name: str, e: int) -> Expr:
    v = _VARS[name]
    if v.kind == "coord":
        return power(Coord(name), e)
    if v.kind == "pi":
        return power(PI, e)
    if v.kind == "phase":
        return Phase(v.coord, e)
    if v.kind == "root":
        return power(Sqrt(_radicand_tree(v.radicand)), e)
    raise AssertionError(name)


def _radicand_tree(radicand: tuple) -> Expr:
    names, terms = radicand
    if not names:
        return Const(terms[0][1])
    K = _field(names)
    P = _poly_from_terms(K.ring, names, terms)
    return _poly_tree(P, names, None)


def _poly_tree(P, names: tuple, imag_idx) -> Expr:
    coeffs: dict[tuple, list] = {}
    for m, c in P.items():
        if imag_idx is not None and m[imag_idx]:
            key = m[:imag_idx] + (0,) + m[imag_idx + 1:]
            coeffs.setdefault(key, [Fraction(0), Fraction(0)])[1] += _mpq(c)
        else:
            coeffs.setdefault(m, [Fraction(0), Fraction(0)])[0] += _mpq(c)
    order = sorted(coeffs, key=lambda m: (sum(m), m), reverse=True)
    terms = []
    for m in order:
        re_, im = coeffs[m]
        factors = [_factor_tree(names[k], e) for k, e in enumerate(m) if e]
        terms.append(mul(Const(re_, im), *factors))
    return add(*terms)


def _canonical_tree(f) -> Expr:
    names = _names(f.field)
    imag_idx = names.index(_IMAG) if _IMAG in names else None
    num = _poly_tree(f.numer, names, imag_idx)
    if f.denom == f.field.ring.one:
        return num
    return div(num, _poly_tree(f.denom, names, None))


# ---------------------------------------------------------------------------
# public operations

def normalize(e: Expr) -> Normal:
    """Unique normal form; idempotent."""
    if isinstance(e, Normal):
        return e
    return Normal(_lift(e).value)


def equal(a: Expr, b: Expr) -> bool:
    """Equality as rational functions."""
    return normalize(a) == normalize(b)


def diff(e: Expr, c: str) -> Normal:
    """Exact partial derivative with respect to coordinate ``c``."""
    _coord_var(c)
    return Normal(_v_diff(normalize(e).value, c))


def substitute(e: Expr, mapping: Mapping[str, Expr], phases: Mapping[str, Expr] | None = None) -> Normal:
    """Replace coordinates by expressions (composition with a chart map).

    ``phases`` supplies ``exp(i*c)`` for angular coordinates ``c``; by default
    the phase of a substituted angular coordinate is left unchanged only if
    the coordinate itself is not remapped.
    """
    f = normalize(e).value
    names = _names(f.field)
    vals = []
    for n in names:
        v = _VARS[n]
        if v.kind == "coord":
            vals.append(normalize(mapping[n]).value if n in mapping else _v_gen(n))
        elif v.kind == "phase":
            if phases and v.coord in phases:
                vals.append(normalize(phases[v.coord]).value)
            elif v.coord in mapping:
                raise ValueError(f"no phase supplied for remapped angular coordinate {v.coord!r}")
            else:
                vals.append(_v_gen(n))
        elif v.kind == "root":
            rad = normalize(_radicand_tree(v.radicand))
            vals.append(_v_sqrt(substitute(rad, mapping, phases).value))
        else:
            vals.append(_v_gen(n))
    return Normal(_v_mul(_eval_poly(f.numer, vals), _v_inv(_eval_poly(f.denom, vals))))


def fourier_mode(e: Expr, coord: str, k: int = 0) -> Normal:
    """Coefficient of ``exp(k*i*coord)`` in a trigonometric polynomial in ``coord``.

    Raises ValueError when the dependence on ``coord`` is not through
    phases in the numerator (a raw coordinate, or phases in a denominator).
    """
    f = normalize(e).value
    names = _names(f.field)
    if coord in names and any(m[names.index(coord)] for P in (f.numer, f.denom) for m in P.keys()):
        raise ValueError(f"non-trigonometric dependence on {coord!r}")
    pname = f"exp(i*{coord})"
    if pname not in names:
        return Normal(f) if k == 0 else Normal(f.field.zero)
    idx = names.index(pname)
    R = f.field.ring
    dparts = _split(f.denom, idx)
    if len(dparts) != 1:
        raise ValueError(f"non-trigonometric dependence on {coord!r} (phase in a denominator)")
    (shift, dpart), = dparts.items()
    parts = _split(f.numer, idx)
    num = R.from_dict(parts.get(k + shift, {}))
    return Normal(f.field.new(num, R.from_dict(dpart)))


def _eval_poly(P, vals):
    total = _field(()).zero
    cache: dict = {}
    for m, c in P.items():
        t = _v_const(_mpq(c))
        for k, e in enumerate(m):
            if e:
                key = (k, e)
                if key not in cache:
                    cache[key] = _v_pow(vals[k], e)
                t = _v_mul(t, cache[key])
        total = _v_add(total, t)
    return total


class _CompiledPoly:
    def __init__(self, P, keep: list[int], imag_idx):
        self.re_terms = []
        self.im_terms = []
        for m, c in P.items():
            exps = tuple(m[k] for k in keep)
            if imag_idx is not None and m[imag_idx]:
                self.im_terms.append((float(c), exps))
            else:
                self.re_terms.append((float(c), exps))

    def __call__(self, powers) -> np.ndarray | complex:
        def total(terms):
            acc = 0.0
            for c, exps in terms:
                t = c
                for j, e in enumerate(exps):
                    if e:
                        t = t * powers(j, e)
                acc = acc + t
            return acc

        out = total(self.re_terms)
        if self.im_terms:
            out = out + 1j * total(self.im_terms)
        return out


def compile_expr(e: Expr) -> Callable[[Mapping[str, object]], object]:
    """Vectorised evaluator: maps ``{coord: float or ndarray}`` to complex values.

    No zero-denominator check is made; callers evaluating on arrays inspect
    the result for non-finite entries.
    """
    f = normalize(e).value
    names = _names(f.field)
    imag_idx = names.index(_IMAG) if _IMAG in names else None
    # generators left over in the field but absent from the value need no binding
    used = {k for P in (f.numer, f.denom) for m in P.monoms() for k, x in enumerate(m) if x}
    keep = [k for k, n in enumerate(names) if k != imag_idx and k in used]
    kept = [names[k] for k in keep]
    num = _CompiledPoly(f.numer, keep, imag_idx)
    den = _CompiledPoly(f.denom, keep, None)
    roots = {}
    for n in kept:
        v = _VARS[n]
        if v.kind == "root":
            roots[n] = compile_expr(_radicand_tree(v.radicand))
    needed = set()
    for n in kept:
        v = _VARS[n]
        if v.kind == "coord":
            needed.add(n)
        elif v.kind == "phase":
            needed.add(v.coord)
        elif v.kind == "root":
            needed.update(v.radicand[0])

    def run(point: Mapping[str, object]):
        missing = needed - set(point)
        if missing:
            raise EvaluationError(f"unbound coordinate(s): {sorted(missing)}")
        base = []
        for n in kept:
            v = _VARS[n]
            if v.kind == "coord":
                base.append(np.asarray(point[n]))
            elif v.kind == "phase":
                base.append(np.exp(1j * np.asarray(point[v.coord], dtype=float)))
            elif v.kind == "pi":
                base.append(np.pi)
            else:
                base.append(np.sqrt(np.asarray(roots[n](point), dtype=complex)))
        cache = {}

        def powers(j, e):
            key = (j, e)
            if key not in cache:
                cache[key] = base[j] ** e
            return cache[key]

        return num(powers), den(powers)

    def evaluator(point: Mapping[str, object]):
        n, d = run(point)
        return n / d

    evaluator.parts = run  # numerator/denominator access for zero checks
    return evaluator


def evaluate(e: Expr, point: Mapping[str, complex | float]) -> complex:
    """Evaluate at a point in double precision."""
    ev = compile_expr(e)
    n, d = ev.parts(point)
    if abs(complex(d)) < _ZERO_THRESHOLD:
        raise EvaluationError("denominator vanishes at the evaluation point")
    return complex(n / d)


# ---------------------------------------------------------------------------
# charts

@dataclass(frozen=True)
class Chart:
    """Coordinate chart: ordered real coordinates plus an orientation order.

    Angular coordinates are circle coordinates with period 2*pi; their
    phases may appear through :class:`Phase` nodes.
    """

    coords: tuple
    orientation: tuple | None = None
    angular: frozenset = field(default_factory=frozenset)
    name: str = ""

    def __post_init__(self):
        coords = tuple(self.coords)
        object.__setattr__(self, "coords", coords)
        if not coords:
            raise ValueError("a chart needs at least one coordinate")
        if len(set(coords)) != len(coords):
            raise ValueError("coordinate names must be distinct")
        for c in coords:
            _coord_var(c)
        orient = coords if self.orientation is None else tuple(self.orientation)
        if sorted(orient) != sorted(coords):
            raise ValueError("orientation must be a permutation of the coordinates")
        object.__setattr__(self, "orientation", orient)
        ang = frozenset(self.angular)
        if not ang <= set(coords):
            raise ValueError("angular coordinates must be chart coordinates")
        object.__setattr__(self, "angular", ang)

    @property
    def dim(self) -> int:
        return len(self.coords)

    def index(self, name: str) -> int:
        return self.coords.index(name)

    def coord_exprs(self) -> tuple:
        return tuple(normalize(Coord(c)) for c in self.coords)

    def orientation_sign(self) -> int:
        """Sign of the orientation order relative to the declaration order."""
        perm = [self.coords.index(c) for c in self.orientation]
        sign = 1
        seen = [False] * len(perm)
        for s in range(len(perm)):
            if seen[s]:
                continue
            j, length = s, 0
            while not seen[j]:
                seen[j] = True
                j = perm[j]
                length += 1
            if length % 2 == 0:
                sign = -sign
        return sign

"""Reference constants shipped in ``data/constants.json`` and the check record."""
from __future__ import annotations

import json
import math
from fractions import Fraction
from functools import lru_cache
from importlib import resources

from .symexpr import Normal, normalize, parse

PROVENANCE = ("literature", "derived", "trivial")

_UNITS = {"1": 1.0, "pi": math.pi, "(2pi)^2": (2 * math.pi) ** 2}


@lru_cache(maxsize=None)
def constants() -> dict:
    text = resources.files("chernweil").joinpath("data/constants.json").read_text()
    data = json.loads(text)
    for k, v in data.items():
        if v.get("provenance") not in PROVENANCE:
            raise ValueError(f"constant {k} lacks a provenance tag")
    return data


def exact(key: str) -> Fraction:
    """Rational value (in the entry's unit)."""
    return Fraction(constants()[key]["value"])


def unit(key: str) -> float:
    return _UNITS[constants()[key]["unit"]]


def value(key: str) -> float:
    return float(exact(key)) * unit(key)


def expr(key: str) -> Normal:
    return normalize(parse(constants()[key]["expr"]))


def provenance(key: str) -> str:
    return constants()[key]["provenance"]


def _jsonable(x):
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, bool):
        return x
    if isinstance(x, (int, float, str)) or x is None:
        return x
    return str(x)


class Check:
    """One comparison of a computed value against a reference."""

    __slots__ = ("name", "expected", "computed", "provenance", "abs_err", "rel_err", "tolerance", "passed",
                 "note")

    def __init__(self, name: str, expected, computed, provenance: str, rtol: float | None = None,
                 atol: float | None = None, passed: bool | None = None, note: str = ""):
        if provenance not in PROVENANCE:
            raise ValueError(f"unknown provenance {provenance!r}")
        self.name = name
        self.expected = expected
        self.computed = computed
        self.provenance = provenance
        self.note = note
        self.abs_err = self.rel_err = None
        if rtol is None and atol is None:
            self.tolerance = "exact"
            ok = expected == computed
            numeric = (Fraction, int)
            if (isinstance(expected, numeric) and isinstance(computed, numeric)
                    and not isinstance(expected, bool) and not isinstance(computed, bool)):
                self.abs_err = abs(Fraction(expected) - Fraction(computed))
        else:
            e, c = complex(expected), complex(computed)
            self.abs_err = abs(c - e)
            self.rel_err = self.abs_err / abs(e) if e else None
            lim = max(atol or 0.0, (rtol or 0.0) * abs(e))
            self.tolerance = {"rtol": rtol, "atol": atol}
            ok = self.abs_err <= lim
        self.passed = bool(ok if passed is None else passed)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "expected": _jsonable(self.expected),
            "computed": _jsonable(self.computed),
            "provenance": self.provenance,
            "abs_err": _jsonable(self.abs_err),
            "rel_err": _jsonable(self.rel_err),
            "tolerance": self.tolerance,
            "pass": self.passed,
            "note": self.note,
        }

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        err = "" if self.abs_err is None else f" (abs err {float(self.abs_err):.2e})"
        return f"[{status}] {self.name}: expected {_jsonable(self.expected)}, got {_jsonable(self.computed)}{err}"

    def __repr__(self):
        return self.line()

"""Numerical integration of top forms over charts and exact circle-fiber integration.

Improper integrals over R^n are compactified before adaptive cubature:
``tan`` substitutes ``x = tan(u)`` per axis, ``polar`` writes each
``(x_k, y_k)`` pair as ``tan(s) (cos phi, sin phi)`` and integrates phi
with the periodic trapezoidal rule (spectrally accurate for smooth periodic
data).  The adaptive engine is :func:`scipy.integrate.cubature` (globally
adaptive, nested-rule error estimates, deterministic region order).
"""
from __future__ import annotations

import math
import os
import re
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy import integrate as _sp

from .forms import Form
from .symexpr import Chart, PI, compile_expr, fourier_mode, normalize

__all__ = [
    "QuadConfig", "QuadResult", "QuadratureError", "integrate_chart",
    "integrate_fiber_circle", "fourier_coefficients", "fourier_transform",
    "THREADS_ENV",
]

THREADS_ENV = "CHERNWEIL_THREADS"


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not meet its tolerance or met a non-finite value."""


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class QuadConfig:
    rtol: float = 1e-9
    atol: float = 1e-12
    max_subdiv: int = 10**6
    compactify: str = "tan"
    rule: str = "auto"
    threads: int = field(default_factory=_default_threads)

    def __post_init__(self):
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_subdiv < 1:
            raise ValueError("max_subdiv must be >= 1")
        if self.compactify not in ("tan", "polar"):
            raise ValueError("compactify must be 'tan' or 'polar'")
        if self.rule not in ("auto", "gk21", "genz-malik"):
            raise ValueError("rule must be 'auto', 'gk21' or 'genz-malik'")


@dataclass(frozen=True)
class QuadResult:
    value: complex
    error: float
    subdivisions: int = 0

    def __complex__(self):
        return complex(self.value)

    @property
    def real(self) -> float:
        return float(np.real(self.value))


# ---------------------------------------------------------------------------
# changes of variables

def _axis_map(lo: float, hi: float):
    """(u-interval, x(u), dx/du) for one axis."""
    if math.isinf(lo) and math.isinf(hi):
        return (-math.pi / 2, math.pi / 2), np.tan, lambda u: 1 / np.cos(u) ** 2
    if math.isinf(hi):
        return (0.0, math.pi / 2), (lambda u: lo + np.tan(u)), lambda u: 1 / np.cos(u) ** 2
    if math.isinf(lo):
        return (0.0, math.pi / 2), (lambda u: hi - np.tan(u)), lambda u: 1 / np.cos(u) ** 2
    return (lo, hi), (lambda u: u), (lambda u: np.ones_like(u))


def _detect_pairs(chart: Chart) -> list:
    pairs = []
    for c in chart.coords:
        m = re.fullmatch(r"x(\w*)", c)
        if m and f"y{m.group(1)}" in chart.coords:
            pairs.append((c, f"y{m.group(1)}"))
    return pairs


def _bounds(chart: Chart, domain: Mapping) -> dict:
    bounds = {}
    for c in chart.coords:
        if c in domain:
            bounds[c] = tuple(float(v) for v in domain[c])
        elif c in chart.angular:
            bounds[c] = (0.0, 2 * math.pi)
        else:
            bounds[c] = (-math.inf, math.inf)
    return bounds


def _build_transform(chart: Chart, domain: Mapping, compactify: str, pairs):
    """Return (lower, upper, polar pairs, fn).

    ``fn(U, M)`` maps cubature nodes ``U`` to ``(points, weights)`` where each
    row of ``U`` is expanded into ``M**len(polar)`` angular nodes; the angle
    of every polar pair is integrated by the periodic trapezoidal rule.
    """
    bounds = _bounds(chart, domain)
    full = lambda c: bounds[c] == (-math.inf, math.inf)  # noqa: E731
    polar = []
    if compactify == "polar":
        if pairs is None:
            pairs = _detect_pairs(chart)
        polar = [(x, y) for x, y in pairs if full(x) and full(y)]
    in_polar = {c for p in polar for c in p}
    axes = []
    lower, upper = [], []
    for x, y in polar:
        lower.append(0.0)
        upper.append(math.pi / 2)
    for c in chart.coords:
        if c in in_polar:
            continue
        (a, b), xf, jf = _axis_map(*bounds[c])
        axes.append((c, xf, jf))
        lower.append(a)
        upper.append(b)
    npol = len(polar)

    def transform(U: np.ndarray, M: int = 1):
        n = U.shape[0]
        reps = M ** npol
        pts = {}
        jac = np.ones(n)
        for k, (c, xf, jf) in enumerate(axes):
            u = U[:, npol + k]
            pts[c] = np.repeat(xf(u), reps)
            jac = jac * jf(u)
        jac = np.repeat(jac, reps)
        if npol:
            # offset nodes avoid the symmetry axes of the integrand
            phis = (np.arange(M) + 0.5) * (2 * math.pi / M)
            grid = np.stack(np.meshgrid(*([phis] * npol), indexing="ij"), -1).reshape(reps, npol)
            w = (2 * math.pi / M) ** npol
            for k, (x, y) in enumerate(polar):
                s = U[:, k]
                r = np.tan(s)
                rr = np.repeat(r, reps)
                ph = np.tile(grid[:, k], n)
                pts[x] = rr * np.cos(ph)
                pts[y] = rr * np.sin(ph)
                jac = jac * np.repeat(r / np.cos(s) ** 2, reps)
            jac = jac * w
        return pts, jac

    return np.array(lower), np.array(upper), npol, transform


def _angular_nodes(values, lower, upper, npol, rtol, atol, max_nodes=256) -> int:
    """Smallest trapezoid node count M (a power of two, >= 4) stable under doubling."""
    if npol == 0:
        return 1
    rng = np.random.default_rng(12345)
    probe = lower + (upper - lower) * rng.uniform(0.05, 0.95, size=(16, len(lower)))
    M = 4
    prev = values(probe, M)
    while M < max_nodes:
        nxt = values(probe, 2 * M)
        if np.all(np.abs(nxt - prev) <= 1e-2 * rtol * np.abs(nxt) + 1e-2 * atol):
            return 2 * M
        M *= 2
        prev = nxt
    raise QuadratureError("angular trapezoid rule did not resolve the integrand")


def integrate_chart(omega, cfg: QuadConfig | None = None, *, chart: Chart | None = None,
                    domain: Mapping[str, tuple] | None = None, pairs=None) -> QuadResult:
    """Integrate a top-degree form (or a coefficient callback) over a chart.

    ``omega`` is a :class:`Form` of top degree, or a callable mapping
    ``{coord: ndarray}`` to values when ``chart`` is given.  ``domain``
    restricts coordinates to intervals (default: the whole line, or
    ``[0, 2 pi]`` for angular coordinates).
    """
    cfg = cfg or QuadConfig()
    if isinstance(omega, Form):
        chart = omega.chart
        if omega.degrees() - {chart.dim}:
            raise ValueError("integrate_chart needs a form of top degree")
        if omega.is_zero():
            return QuadResult(0j, 0.0, 0)
        coef = compile_expr(omega.top())
    else:
        if chart is None:
            raise ValueError("a chart is required for callback integrands")
        coef = omega
    lower, upper, npol, transform = _build_transform(chart, domain or {}, cfg.compactify, pairs)

    def values(U, M):
        pts, jac = transform(U, M)
        v = np.asarray(coef(pts), dtype=complex) * jac
        v = np.broadcast_to(v, jac.shape)
        return v.reshape(U.shape[0], -1).sum(axis=1)

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        M = _angular_nodes(values, lower, upper, npol, cfg.rtol, cfg.atol)

    def f(U):
        v = values(U, M)
        return np.stack([v.real, v.imag], axis=-1)

    # tensor Gauss-Kronrod is cheap up to 3 dimensions; Genz-Malik needs >= 2
    rule = cfg.rule
    if rule == "auto" or len(lower) < 2:
        rule = "gk21" if len(lower) <= 3 else "genz-malik"
    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    try:
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            res = _sp.cubature(f, lower, upper, rule=rule, rtol=cfg.rtol, atol=cfg.atol,
                               max_subdivisions=cfg.max_subdiv, workers=pool.map if pool else 1)
    finally:
        if pool:
            pool.shutdown()
    est = np.asarray(res.estimate)
    err = np.asarray(res.error)
    if not np.all(np.isfinite(est)):
        raise QuadratureError("non-finite value encountered during integration")
    if res.status != "converged":
        raise QuadratureError(
            f"subdivision budget exhausted ({res.subdivisions}) with error {float(np.hypot(*err)):.3e}")
    return QuadResult(complex(est[0], est[1]), float(np.hypot(err[0], err[1])), int(res.subdivisions))


# ---------------------------------------------------------------------------
# exact circle fibers

def integrate_fiber_circle(alpha: Form, fiber: str, base: Chart | None = None) -> Form:
    """Integrate over the circle coordinate ``fiber`` (dλ moved to the front).

    The ``fiber`` dependence must be through phases ``exp(k*i*fiber)``; the
    integral over ``[0, 2 pi]`` keeps the constant Fourier mode.
    """
    chart = alpha.chart
    fpos = chart.index(fiber)
    rest = tuple(c for c in chart.coords if c != fiber)
    if base is None:
        base = Chart(rest, angular=chart.angular - {fiber}, name=f"{chart.name}/{fiber}" if chart.name else "")
    elif set(base.coords) != set(rest):
        raise ValueError("base chart must consist of the non-fiber coordinates")
    two_pi = normalize(PI * 2)
    terms = {}
    for idx, c in alpha.terms.items():
        if fpos not in idx:
            continue
        sign = -1 if idx.index(fpos) % 2 else 1
        names = [chart.coords[k] for k in idx if k != fpos]
        new = sorted(base.index(n) for n in names)
        # reorder the remaining indices into base order
        perm = [base.index(n) for n in names]
        inv = sum(1 for a in range(len(perm)) for b in range(a + 1, len(perm)) if perm[a] > perm[b])
        if inv % 2:
            sign = -sign
        val = fourier_mode(c, fiber, 0) * two_pi
        if sign < 0:
            val = -val
        key = tuple(new)
        terms[key] = terms[key] + val if key in terms else val
    return Form(base, terms)


# ---------------------------------------------------------------------------
# Fourier data of test functions

def fourier_transform(phi: Callable[[float], float], zeta: float,
                      support: tuple = (-math.pi, math.pi), epsabs: float = 1e-14,
                      epsrel: float = 1e-12) -> complex:
    """``phi_hat(zeta) = int exp(i zeta X) phi(X) dX`` over ``support``."""
    a, b = support
    with warnings.catch_warnings():
        # tiny high-frequency coefficients trip the roundoff detector
        warnings.simplefilter("ignore", _sp.IntegrationWarning)
        if zeta == 0:
            re_ = _sp.quad(phi, a, b, epsabs=epsabs, epsrel=epsrel, limit=500)[0]
            return complex(re_, 0.0)
        kw = dict(epsabs=epsabs, epsrel=epsrel, limit=500, wvar=float(zeta))
        re_ = _sp.quad(phi, a, b, weight="cos", **kw)[0]
        im = _sp.quad(phi, a, b, weight="sin", **kw)[0]
    if not (math.isfinite(re_) and math.isfinite(im)):
        raise QuadratureError(f"Fourier transform at {zeta} is not finite")
    return complex(re_, im)


def fourier_coefficients(phi: Callable[[float], float], N: int,
                         support: tuple = (-math.pi, math.pi)) -> dict:
    """``{n: phi_hat(n)}`` for ``|n| <= N``; ``phi`` supported inside ``support``."""
    if N < 0:
        raise ValueError("N must be non-negative")
    return {n: fourier_transform(phi, n, support) for n in range(-N, N + 1)}

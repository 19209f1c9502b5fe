"""Distributional indices with base-cohomology coefficients.

A distributional index ``sum_gamma T_gamma * delta_gamma`` is stored as
data: for each central element ``gamma`` a map from jet order to a class in
the truncated base ring.  Pairing with a test function consumes the jets of
the function at ``gamma``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping, Sequence

from scipy import integrate as _sp
from scipy.differentiate import derivative

from .classes import (CohClass, GradedForm, JetFunction, _ndiv, ahat_expansion,
                      ahat_series, genus_form, word_expansion)
from .forms import Form
from .geometry import (MetricChart, VectorField, circle_action_field, curvature, equivariant_curvature,
                       flat_torus_2d, fubini_study_cp2, levi_civita, moment_map)
from .integrate import (QuadConfig, QuadratureError, fourier_coefficients, fourier_transform,
                        integrate_chart)
from .symexpr import I, PI, Normal, normalize

__all__ = [
    "DistributionalIndex", "FibrationSpec", "GammaCoefficient", "index_general", "index_spin_dirac",
    "pair", "cp2_fibration", "torus_fibration", "ZeroFamilyComparison", "index_zero_family_hopf",
    "zero_family_schedule", "multiplicity_chern", "MarkedClass", "one_form_fiber_pairing",
    "degree_four_weights", "cp2_bracket", "PREFACTOR_NOTE",
]

PREFACTOR_NOTE = ("fiber integrals carry (2*i*pi)^(-dim(M|B)); the spinor Chern character contributes "
                  "(2*i*pi)^n, leaving (2*pi*i)^(-n), which is -(2*pi)^(-2) for a 4-dimensional fiber")


# ---------------------------------------------------------------------------
# data types

class DistributionalIndex:
    """``sum_gamma T_gamma * delta_gamma`` with jet-coefficient classes."""

    def __init__(self, group: str, coefficients: Mapping[str, Mapping[int, CohClass]],
                 ring: CohClass, allowed_support: Sequence[str] | None = None):
        support = list(coefficients)
        if len(set(support)) != len(support):
            raise ValueError("support labels must be distinct")
        if allowed_support is not None and not set(support) <= set(allowed_support):
            raise ValueError(f"support {support} not contained in {list(allowed_support)}")
        for g, jets in coefficients.items():
            for k, c in jets.items():
                if c.generators != ring.generators:
                    raise ValueError(f"coefficient at {g}, order {k} outside the base ring")
        self.group = group
        self.ring = ring.zero()
        self.support = tuple(support)
        self.allowed_support = tuple(allowed_support) if allowed_support is not None else None
        self.coefficients = {g: dict(sorted(j.items())) for g, j in coefficients.items()}

    def coefficient(self, gamma: str, k: int = 0) -> CohClass:
        return self.coefficients.get(gamma, {}).get(k, self.ring)

    def is_zero(self) -> bool:
        return all(c.is_zero() for j in self.coefficients.values() for c in j.values())

    def to_json(self) -> dict:
        return {
            "group": self.group,
            "support": list(self.support),
            "coefficients": {g: {str(k): c.to_json() for k, c in j.items()}
                             for g, j in self.coefficients.items()},
        }

    def __repr__(self):
        body = "; ".join(f"{g}: " + ", ".join(f"k={k}: {c}" for k, c in j.items())
                         for g, j in self.coefficients.items())
        return f"DistributionalIndex({self.group}; {body})"


@dataclass(frozen=True)
class FibrationSpec:
    """Vertical geometry of ``M -> B`` together with the base ring.

    ``base_generator`` names the degree-2 class carried by the X-grading
    (``None`` for a point base).
    """

    name: str
    metric: MetricChart
    action: VectorField | None
    base_generator: str | None
    base_dim: int
    fiber_dim: int
    compactify: str = "tan"

    def __post_init__(self):
        if self.fiber_dim <= 0 or self.fiber_dim % 2:
            raise ValueError("fiber dimension must be even and positive")
        if self.metric.chart.dim != self.fiber_dim:
            raise ValueError("metric chart dimension differs from the fiber dimension")
        if self.base_dim < 0 or self.base_dim % 2:
            raise ValueError("base dimension must be even and non-negative")

    @property
    def ring(self) -> CohClass:
        if self.base_generator is None or self.base_dim == 0:
            return CohClass.scalar_ring()
        return CohClass.for_base(self.base_generator, self.base_dim)

    @property
    def max_x(self) -> int:
        return self.base_dim // 2

    def curvature_data(self):
        conn = levi_civita(self.metric)
        F = curvature(conn)
        if self.action is None:
            return F
        return equivariant_curvature(F, moment_map(conn, self.action))


def cp2_fibration() -> FibrationSpec:
    """CP^2 fiber with the Fubini-Study metric over a base carrying ``Upsilon`` (real dim 4)."""
    return FibrationSpec("fubini-study-cp2", fubini_study_cp2(), circle_action_field("cp2-last"),
                         "Upsilon", 4, 4, compactify="polar")


def torus_fibration() -> FibrationSpec:
    """Flat 2-torus over a point."""
    g = flat_torus_2d()
    return FibrationSpec("flat-torus-2d", g, None, None, 0, 2)


@dataclass
class GammaCoefficient:
    gamma: str
    jets: dict
    integrals: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# index assembly

def _as_graded(x, chart) -> GradedForm:
    if isinstance(x, GradedForm):
        return x
    if isinstance(x, Form):
        return GradedForm.of(x)
    return GradedForm.of(Form.scalar(chart, x))


def index_general(ch, ahat, spec: FibrationSpec, gamma: str = "Id",
                  cfg: QuadConfig | None = None) -> GammaCoefficient:
    """Jet coefficients of ``T_gamma`` from a Chern character and an Â density.

    ``ch`` and ``ahat`` are X-graded forms (or plain forms); ``ch`` may also
    be a number.  The
    X^k part of the top-degree component of ``ch ^ ahat`` is integrated over
    the fiber, scaled by ``(2 i pi)^(-dim(M|B))`` and placed on
    ``generator^k``; the whole class is the order-0 jet (exponential
    coordinates at ``gamma``).
    """
    cfg = cfg or QuadConfig(compactify=spec.compactify)
    chart = spec.metric.chart
    ring = spec.ring
    pref = (2j * math.pi) ** (-spec.fiber_dim)
    if isinstance(ch, (int, float, complex, Fraction)):
        # numeric constants (powers of 2*i*pi) stay outside the exact forms
        pref *= complex(ch)
        density = _as_graded(ahat, chart)
    else:
        density = _as_graded(ch, chart).wedge(_as_graded(ahat, chart))
    top = density.form_degree_part(spec.fiber_dim)
    out = GammaCoefficient(gamma, {0: ring.zero()})
    gens = ring.generators
    cls = ring.zero()
    for k, form in sorted(top.items()):
        if gens and k >= gens[0][1] or not gens and k > 0:
            out.notes.append(f"X^{k} component exceeds base nilpotency; coefficient set to 0")
            continue
        res = integrate_chart(form, cfg)
        out.integrals[k] = res
        mono = (k,) if gens else ()
        cls = cls + CohClass(ring.generators, {mono: complex(res.value) * pref})
    out.jets[0] = cls
    return out


def index_spin_dirac(spec: FibrationSpec, cfg: QuadConfig | None = None,
                     trunc: int | None = None) -> tuple[DistributionalIndex, dict]:
    """``T * delta_Id - T * delta_{-Id}`` for the spin Dirac family.

    Returns the index and a details map (integrals, notes).
    """
    if spec.name not in ("fubini-study-cp2", "flat-torus-2d"):
        raise ValueError(f"unsupported geometry {spec.name!r}")
    n = spec.fiber_dim // 2
    cap = trunc if trunc is not None else spec.fiber_dim + 2 * spec.max_x
    data = spec.curvature_data()
    ahat = genus_form(ahat_series(cap // 2), data, cap, spec.max_x)
    if isinstance(ahat, Form):
        ahat = GradedForm.of(ahat)
    # spinor Chern character at Id; at -Id the central character flips the sign
    ch = (2j * math.pi) ** n
    plus = index_general(ch, ahat, spec, "Id", cfg)
    minus_cls = -plus.jets[0]
    grp = f"Spin({spec.fiber_dim})"
    ind = DistributionalIndex(grp, {"Id": {0: plus.jets[0]}, "-Id": {0: minus_cls}}, spec.ring,
                              allowed_support=("Id", "-Id"))
    details = {"integrals": plus.integrals, "notes": plus.notes, "ahat": ahat}
    return ind, details


def pair(ind: DistributionalIndex, phis: Mapping[str, JetFunction] | Sequence[JetFunction]) -> CohClass:
    """``sum_gamma sum_k phi_gamma^(k)/k! T_gamma^(k)``; absent support points pair to 0."""
    if not isinstance(phis, Mapping):
        phis = dict(zip(ind.support, phis))
    out = ind.ring.zero()
    for g in ind.support:
        phi = phis.get(g)
        if phi is None:
            continue
        for k, c in ind.coefficients[g].items():
            out = out + c * _ndiv(phi.jet(k), math.factorial(k))
    return out


# ---------------------------------------------------------------------------
# degree-4 bookkeeping for the CP^2 fiber

_WORD_NAMES = {("FFMM",): "tr(F^2 mu^2)", ("FMFM",): "tr((F mu)^2)",
               ("FF", "MM"): "tr(F^2) tr(mu^2)", ("FM", "FM"): "tr(F mu)^2"}


def degree_four_weights(fiber_dim: int = 4, x_power: int = 2) -> dict:
    """Exact weight of each trace word in the ``X^x_power`` top part of Â(F(X))."""
    weights: dict[tuple, Fraction] = {}
    for part, coeff in ahat_expansion(fiber_dim + 2 * x_power).items():
        if not part:
            continue
        exp = word_expansion(part, fiber_dim).get(x_power, {})
        for words, mult in exp.items():
            weights[words] = weights.get(words, Fraction(0)) + coeff * mult
    return {w: c for w, c in weights.items() if c}


def cp2_bracket(values: Mapping[tuple, Fraction]) -> tuple[Fraction, Fraction]:
    """(X^2 coefficient of the fiber integral of Â, bracket = 2^4 2^3 3^2 times it).

    ``values`` maps trace words (as in :func:`degree_four_weights`) to their
    integrals in units of ``(2 pi)^2``; exact inputs give exact outputs.
    """
    weights = degree_four_weights()
    missing = set(weights) - set(values)
    if missing:
        raise KeyError(f"missing integrals for {sorted(missing)}")
    coeff = sum((weights[w] * Fraction(values[w]) for w in weights), Fraction(0))
    return coeff, coeff * (2**4 * 2**3 * 3**2)


# ---------------------------------------------------------------------------
# zero family on the Hopf fibration

def multiplicity_chern(n: int, ring: CohClass, generator: str = "Theta") -> CohClass:
    """Chern character of the line bundle of weight ``n``: ``1 + i n Theta``."""
    return ring.one() + ring.gen(generator) * complex(0, n)


@dataclass
class ZeroFamilyComparison:
    N: int
    distributional: CohClass
    closed_form: CohClass
    difference: tuple


def _jets_of(phi: Callable, jets: JetFunction | None):
    if jets is not None:
        return complex(jets.jet(0)).real, complex(jets.jet(1)).real
    d1 = derivative(phi, 0.0, initial_step=0.05, tolerances=dict(atol=1e-13, rtol=1e-12))
    if not d1.success:
        raise QuadratureError("numerical derivative of the test function did not converge")
    return float(phi(0.0)), float(d1.df)


def index_zero_family_hopf(N: int, phi: Callable[[float], float], ring: CohClass | None = None,
                           support: tuple = (-math.pi, math.pi), jets: JetFunction | None = None,
                           generator: str = "Theta") -> ZeroFamilyComparison:
    """Compare ``sum_{|n|<=N} (1 + i n Theta) phi_hat(-n)`` with ``2 pi (phi(0) + Theta phi'(0))``."""
    ring = ring if ring is not None else CohClass.for_base(generator, 2)
    coeffs = fourier_coefficients(phi, N, support)
    dist = ring.zero()
    for n in range(-N, N + 1):
        dist = dist + multiplicity_chern(n, ring, generator) * coeffs[-n]
    p0, p1 = _jets_of(phi, jets)
    closed = (ring.one() * p0 + ring.gen(generator) * p1) * (2 * math.pi)
    diff = tuple(abs(complex(dist.coefficient((k,))) - complex(closed.coefficient((k,)))) for k in (0, 1))
    return ZeroFamilyComparison(N, dist, closed, diff)


def zero_family_schedule(phi, Ns=(16, 32, 64), **kw) -> list:
    return [index_zero_family_hopf(N, phi, **kw) for N in Ns]


# ---------------------------------------------------------------------------
# One(omega) on S^1

@dataclass
class MarkedClass:
    """``prefactor * marker * cls``: a base class carrying a fiber 1-form marker."""

    marker: str
    prefactor: Normal
    cls: CohClass
    checks: list = field(default_factory=list)

    def numeric(self) -> CohClass:
        return self.cls * complex(self.prefactor.constant())

    def __str__(self):
        return f"({self.prefactor})*{self.marker}*({self.cls})"


def one_form_fiber_pairing(ring: CohClass, phi: JetFunction, phi_fn: Callable[[float], float] | None = None,
                           support: tuple = (-math.pi, math.pi), zeta_max: float = 60.0,
                           generator: str = "Theta") -> MarkedClass:
    """S^1-fiber pairing of One(omega): ``2 pi i theta (phi(0) + phi'(0) Theta)``.

    With a callable ``phi_fn`` the Fourier identities behind the closed form
    are checked numerically and recorded in ``checks``.
    """
    cls = ring.one() * phi.jet(0) + ring.gen(generator) * phi.jet(1)
    out = MarkedClass("theta", normalize(PI * I * 2), cls)
    if phi_fn is not None:
        def hat(z):
            return fourier_transform(phi_fn, z, support)
        kw = dict(limit=400, epsabs=1e-11, epsrel=1e-11)
        s0 = _sp.quad(lambda z: hat(z).real, -zeta_max, zeta_max, **kw)[0]
        # -i zeta phi_hat(zeta); the imaginary parts cancel by symmetry
        s1 = _sp.quad(lambda z: (-1j * z * hat(z)).real, -zeta_max, zeta_max, **kw)[0]
        p0, p1 = float(complex(phi.jet(0)).real), float(complex(phi.jet(1)).real)
        out.checks.append(("int phi_hat = 2 pi phi(0)", 2 * math.pi * p0, s0))
        out.checks.append(("int -i zeta phi_hat = 2 pi phi'(0)", 2 * math.pi * p1, s1))
    return out

"""The elliptic spectral curve w^2 = R(z) carrying the Weierstrass data.

The curve is

    w^2 = R(z) = (z - a)(conj(a) z - 1) / ((z - e^{i rho})(z - e^{-i rho}))

and is covered by two charts: ``Z`` (coordinate z, used for |z| <= 2) and
``U`` (coordinate u = 1/z, used for |z| > 2).  In the U chart the curve reads
w^2 = (1 - a u)(conj(a) - u) / D(u), i.e. the Z-chart numerator with a and
conj(a) exchanged over the same denominator D(x) = x^2 - 2 cos(rho) x + 1.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

INF = complex(math.inf, 0.0)
CHART_SWITCH = 2.0


class CurveError(ValueError):
    """Invalid parameters or an ill-posed point query."""


class PoleOfR(CurveError):
    pass


class AmbiguousBranch(CurveError):
    pass


class Chart(str, Enum):
    Z = "Z"
    U = "U"


def is_inf(x) -> bool:
    return cmath.isinf(complex(x))


class _Curve:
    """Shared algebra for real and complex moduli."""

    a: complex
    rho: float

    @property
    def abar(self) -> complex:
        return complex(self.a).conjugate()

    @property
    def sqrt_a(self) -> complex:
        return cmath.sqrt(self.a)

    @property
    def sqrt_abar(self) -> complex:
        return cmath.sqrt(self.abar)

    @property
    def c(self) -> complex:
        return cmath.exp(1j * self.rho)

    def numerator(self, x, chart: Chart = Chart.Z):
        a = complex(self.a)
        lead, const = (a.conjugate(), a) if chart == Chart.Z else (a, a.conjugate())
        return lead * x * x - (1.0 + abs(a) ** 2) * x + const

    def denominator(self, x):
        return x * x - 2.0 * math.cos(self.rho) * x + 1.0

    def R(self, x, chart: Chart = Chart.Z):
        return self.numerator(x, chart) / self.denominator(x)

    def dR(self, x, chart: Chart = Chart.Z):
        a = complex(self.a)
        lead = a.conjugate() if chart == Chart.Z else a
        n = self.numerator(x, chart)
        dn = 2.0 * lead * x - (1.0 + abs(a) ** 2)
        d = self.denominator(x)
        dd = 2.0 * x - 2.0 * math.cos(self.rho)
        return (dn * d - n * dd) / (d * d)

    def branch_values(self) -> tuple[complex, complex, complex, complex]:
        """z-images of the ramification points: zeros a, 1/conj(a), poles e^{+-i rho}."""
        a = complex(self.a)
        return (a, 1.0 / a.conjugate(), self.c, self.c.conjugate())

    def singular_coords(self, chart: Chart) -> np.ndarray:
        """Branch values plus the chart origin (where g has a zero or a pole)."""
        pts = []
        for zb in self.branch_values():
            x = zb if chart == Chart.Z else 1.0 / zb
            pts.append(x)
        pts.append(0.0)
        return np.array(pts, dtype=complex)


@dataclass(frozen=True)
class CurveParams(_Curve):
    """Real modulus a in (0, 1) and branch angle rho in (0, pi)."""

    a: float
    rho: float

    def __post_init__(self):
        if not (0.0 < self.a < 1.0) or not math.isfinite(self.a):
            raise CurveError(f"a must lie in (0, 1), got {self.a!r}")
        if not (0.0 < self.rho < math.pi):
            raise CurveError(f"rho must lie in (0, pi), got {self.rho!r}")

    @property
    def sqrt_a(self) -> complex:
        return complex(math.sqrt(self.a))

    @property
    def sqrt_abar(self) -> complex:
        return complex(math.sqrt(self.a))


@dataclass(frozen=True)
class GeneralCurveParams(_Curve):
    """Complex modulus; only used to reproduce the reality argument for a."""

    a: complex
    rho: float

    def __post_init__(self):
        object.__setattr__(self, "a", complex(self.a))
        if not (0.0 < self.rho < math.pi):
            raise CurveError(f"rho must lie in (0, pi), got {self.rho!r}")
        for zb in (self.c, self.c.conjugate()):
            if abs(self.a - zb) < 1e-12:
                raise CurveError("a must differ from e^{+-i rho}")
        if abs(self.a) < 1e-12:
            raise CurveError("a must be nonzero")


@dataclass(frozen=True)
class CurvePoint:
    """A point (z, w) of the curve; ``z`` or ``w`` may be ``INF``."""

    z: complex
    w: complex
    chart: Chart = Chart.Z

    @property
    def u(self) -> complex:
        if is_inf(self.z):
            return 0j
        if self.z == 0:
            return INF
        return 1.0 / self.z

    @property
    def coord(self) -> complex:
        return self.z if self.chart == Chart.Z else self.u

    @property
    def is_branch(self) -> bool:
        return self.w == 0 or is_inf(self.w)


@dataclass(frozen=True)
class MarkedPoints:
    E1: CurvePoint
    V1: CurvePoint
    E2: CurvePoint
    V2: CurvePoint


def chart_for(z) -> Chart:
    return Chart.U if is_inf(z) or abs(z) > CHART_SWITCH else Chart.Z


def rational_R(params: _Curve, z, extended: bool = False) -> complex:
    """Evaluate R(z); at z = inf return the leading-coefficient ratio conj(a)."""
    if is_inf(z):
        return params.abar
    z = complex(z)
    d = params.denominator(z)
    if abs(d) < 1e-300 or any(abs(z - zb) < 1e-14 for zb in params.branch_values()[2:]):
        if extended:
            return INF
        raise PoleOfR(f"R has a pole at z = {z}")
    return params.numerator(z) / d


def on_curve_residual(params: _Curve, p: CurvePoint) -> float:
    """|w^2 - R| / (1 + |w|^2) in the point's own chart."""
    if is_inf(p.w):
        x = p.coord
        return abs(params.denominator(x)) / (1.0 + abs(params.numerator(x, p.chart)))
    rhs = params.R(p.coord, p.chart)
    return abs(p.w * p.w - rhs) / (1.0 + abs(p.w) ** 2)


def _make_point(params: _Curve, z, w) -> CurvePoint:
    return CurvePoint(complex(z), complex(w), chart_for(z))


def point_on_curve(params: _Curve, z, w_hint, tol: float = 1e-12) -> CurvePoint:
    """Lift z to the sheet whose w is nearest ``w_hint``."""
    w_hint = complex(w_hint)
    if w_hint == 0 or is_inf(w_hint):
        raise CurveError("w_hint must be nonzero and finite")
    if is_inf(z):
        r = params.sqrt_abar
    else:
        chart = chart_for(z)
        x = complex(z) if chart == Chart.Z else 1.0 / complex(z)
        d = params.denominator(x)
        val = params.numerator(x, chart) / d if d != 0 else INF
        if not np.isfinite(val) or val == 0:
            raise AmbiguousBranch(f"z = {z} is a ramification point")
        r = cmath.sqrt(val)
    d_plus, d_minus = abs(r - w_hint), abs(r + w_hint)
    if abs(d_plus - d_minus) <= tol * (abs(r) + abs(w_hint)):
        raise AmbiguousBranch(f"both roots equidistant from w_hint at z = {z}")
    return _make_point(params, z, r if d_plus < d_minus else -r)


def marked_points(params: _Curve) -> MarkedPoints:
    s, sb = params.sqrt_a, params.sqrt_abar
    return MarkedPoints(
        E1=CurvePoint(0j, s, Chart.Z),
        V1=CurvePoint(0j, -s, Chart.Z),
        E2=CurvePoint(INF, sb, Chart.U),
        V2=CurvePoint(INF, -sb, Chart.U),
    )


def ramification_points(params: _Curve) -> tuple[CurvePoint, ...]:
    z0, z1, c, cb = params.branch_values()
    return (
        CurvePoint(z0, 0j, chart_for(z0)),
        CurvePoint(z1, 0j, chart_for(z1)),
        CurvePoint(c, INF, chart_for(c)),
        CurvePoint(cb, INF, chart_for(cb)),
    )


def _conj(x: complex) -> complex:
    return INF if is_inf(x) else complex(x).conjugate()


def _inv_conj(z: complex) -> complex:
    if is_inf(z):
        return 0j
    if z == 0:
        return INF
    return 1.0 / complex(z).conjugate()


def apply_s3(p: CurvePoint) -> CurvePoint:
    """(z, w) -> (1/conj(z), conj(w)): the rotation about the vertical axis."""
    z = _inv_conj(p.z)
    return CurvePoint(z, _conj(p.w), chart_for(z))


def apply_s(p: CurvePoint) -> CurvePoint:
    """(z, w) -> (conj(z), conj(w)): the rotation about a horizontal line."""
    z = _conj(p.z)
    return CurvePoint(z, _conj(p.w), chart_for(z))


def apply_deck(p: CurvePoint) -> CurvePoint:
    w = p.w if (p.w == 0 or is_inf(p.w)) else -p.w
    return CurvePoint(p.z, w, p.chart)


def s3_fixed_point(params: CurveParams) -> CurvePoint:
    """The point over z = -1 with w > 0; fixed by S3 and used as base point."""
    return CurvePoint(-1 + 0j, complex(math.sqrt(params.R(-1.0).real)), Chart.Z)


def random_points(params: _Curve, n: int, rng: np.random.Generator,
                  rmin: float = 0.2, rmax: float = 5.0, margin: float = 0.05) -> list[CurvePoint]:
    """Random on-curve points with log-uniform |z|, away from branch values."""
    out: list[CurvePoint] = []
    bv = params.branch_values()
    while len(out) < n:
        r = math.exp(rng.uniform(math.log(rmin), math.log(rmax)))
        z = r * cmath.exp(1j * rng.uniform(-math.pi, math.pi))
        if min(abs(z - b) for b in bv) < margin:
            continue
        w = cmath.sqrt(params.R(z))
        if rng.random() < 0.5:
            w = -w
        out.append(_make_point(params, z, w))
    return out

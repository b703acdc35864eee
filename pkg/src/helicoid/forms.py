"""Meromorphic data on the spectral curve.

Every 1-form here is written as ``multiplier * tau`` where

    tau = dz / (D(z) w)            (Z chart)
        = -du / (D(u) w)           (U chart, u = 1/z)

is the holomorphic differential.  Multipliers are meromorphic functions of
(x, w) in the chart coordinate x, so a form's coefficient with respect to dx
is ``multiplier(x, w) * tau_coeff(x, w)``.  At ramification points dx itself
degenerates and values are reported against the local uniformizer t with
x = x_b + t^2 (chart ``"T"``).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .curve import (
    Chart,
    CurveParams,
    CurvePoint,
    GeneralCurveParams,
    _Curve,
    apply_s,
    apply_s3,
    is_inf,
    marked_points,
)


class FormError(ValueError):
    pass


class FormPole(FormError):
    pass


class QuadratureError(FormError):
    pass


class InconclusiveOrder(FormError):
    pass


class NearRealModulus(FormError):
    pass


@dataclass(frozen=True)
class FormValue:
    coeff: complex
    chart: str


def _dw(params: _Curve, x, w, chart: Chart):
    """D(x) * w, evaluated as N(x) / w where |w| is large so w = inf gives 0."""
    x = np.asarray(x, dtype=complex)
    w = np.asarray(w, dtype=complex)
    with np.errstate(all="ignore"):
        big = np.abs(w) > 1.0
        via_n = params.numerator(x, chart) / w
        via_d = params.denominator(x) * w
        return np.where(big, via_n, via_d)


def tau_coeff(params: _Curve, x, w, chart: Chart):
    sign = 1.0 if chart == Chart.Z else -1.0
    with np.errstate(all="ignore"):
        return sign / _dw(params, x, w, chart)


def gauss_value(x, chart: Chart):
    x = np.asarray(x, dtype=complex)
    if chart == Chart.Z:
        return x
    with np.errstate(divide="ignore", invalid="ignore"):
        return 1.0 / x


class Form:
    """A meromorphic 1-form multiplier * tau on a fixed curve."""

    name = "form"

    def __init__(self, params: _Curve):
        self.params = params

    def multiplier(self, x, w, chart: Chart):
        raise NotImplementedError

    def coeff(self, x, w, chart: Chart):
        with np.errstate(all="ignore"):
            return self.multiplier(x, w, chart) * tau_coeff(self.params, x, w, chart)

    def poles(self) -> tuple[CurvePoint, ...]:
        return ()

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.params!r})"


class Tau(Form):
    name = "tau"

    def multiplier(self, x, w, chart):
        return np.ones(np.broadcast(np.asarray(x), np.asarray(w)).shape, dtype=complex)


def _ratio(w, s):
    """(w + s) / (w - s), finite at w = inf."""
    w = np.asarray(w, dtype=complex)
    with np.errstate(all="ignore"):
        inv = 1.0 / w
        return np.where(np.abs(w) > 1.0, (1.0 + s * inv) / (1.0 - s * inv), (w + s) / (w - s))


@dataclass(frozen=True)
class NormalizedData:
    """Real-modulus data with the multiplicative constant of Phi3 fixed.

    ``c_norm`` is chosen so that Res(Phi3, E1) = i.  ``displayed_constant`` is
    the closed-form constant -i(1 + a^2 - 2a cos rho)/(2 sqrt a) that is
    commonly quoted for this surface; ``ratio`` = c_norm / displayed_constant
    (numerically 1/2).
    """

    params: CurveParams
    c_norm: complex
    raw_residue: complex = field(default=complex("nan"))

    @property
    def displayed_constant(self) -> complex:
        a, rho = self.params.a, self.params.rho
        return -1j * (1 + a * a - 2 * a * math.cos(rho)) / (2 * math.sqrt(a))

    @property
    def ratio(self) -> complex:
        return self.c_norm / self.displayed_constant

    def scaled(self, factor: complex) -> "NormalizedData":
        return NormalizedData(self.params, self.c_norm * factor, self.raw_residue)


class Phi3(Form):
    name = "phi3"

    def __init__(self, data: NormalizedData | CurveParams, c_norm: complex | None = None):
        if isinstance(data, NormalizedData):
            params, c = data.params, data.c_norm
        else:
            params, c = data, 1.0
        if c_norm is not None:
            c = c_norm
        super().__init__(params)
        self.c_norm = complex(c)

    def multiplier(self, x, w, chart):
        return self.c_norm * _ratio(w, self.params.sqrt_a)

    def poles(self):
        m = marked_points(self.params)
        return (m.E1, m.E2)


class Phi1(Phi3):
    name = "phi1"

    def multiplier(self, x, w, chart):
        g = gauss_value(x, chart)
        with np.errstate(all="ignore"):
            return 0.5 * (1.0 / g - g) * super().multiplier(x, w, chart)


class Phi2(Phi3):
    name = "phi2"

    def multiplier(self, x, w, chart):
        g = gauss_value(x, chart)
        with np.errstate(all="ignore"):
            return 0.5j * (1.0 / g + g) * super().multiplier(x, w, chart)


class GPhi3(Phi3):
    name = "g_phi3"

    def multiplier(self, x, w, chart):
        return gauss_value(x, chart) * super().multiplier(x, w, chart)


class Phi3OverG(Phi3):
    name = "phi3_over_g"

    def multiplier(self, x, w, chart):
        with np.errstate(all="ignore"):
            return super().multiplier(x, w, chart) / gauss_value(x, chart)


def weierstrass_forms(data: NormalizedData) -> tuple[Phi1, Phi2, Phi3]:
    return Phi1(data), Phi2(data), Phi3(data)


class Eta0(Form):
    """Third-kind differential with residues i, -i at E1 = (0, sqrt a), E2 = (inf, sqrt conj a).

    In the Z chart it is (i/2) [1/z + (sqrt(conj a) z^2 + sqrt a) / (z D w)] dz.
    It is S3-symmetric (S3* eta0 = conj(eta0)) for every complex modulus.
    """

    name = "eta0"

    def multiplier(self, x, w, chart):
        p = self.params
        x = np.asarray(x, dtype=complex)
        s, sb = (p.sqrt_a, p.sqrt_abar) if chart == Chart.Z else (p.sqrt_abar, p.sqrt_a)
        with np.errstate(all="ignore"):
            return 0.5j * (_dw(p, x, w, chart) + sb * x * x + s) / x

    def poles(self):
        m = marked_points(self.params)
        return (m.E1, m.E2)


class Combination(Form):
    """base + lam * tau."""

    def __init__(self, base: Form, lam: complex, name: str | None = None):
        super().__init__(base.params)
        self.base = base
        self.lam = complex(lam)
        self.name = name or f"{base.name}+lam*tau"

    def multiplier(self, x, w, chart):
        return self.base.multiplier(x, w, chart) + self.lam

    def poles(self):
        return self.base.poles()


# --- point evaluation -------------------------------------------------------

def _same_point(p: CurvePoint, q: CurvePoint, tol: float = 1e-12) -> bool:
    if is_inf(p.z) != is_inf(q.z):
        return False
    if not is_inf(p.z) and abs(p.z - q.z) > tol * (1 + abs(p.z)):
        return False
    if is_inf(p.w) or is_inf(q.w):
        return is_inf(p.w) and is_inf(q.w)
    return abs(p.w - q.w) <= tol * (1 + abs(p.w))


def _singular_distance(params: _Curve, x: complex, chart: Chart, exclude_self: bool = True) -> float:
    pts = params.singular_coords(chart)
    d = np.abs(pts - x)
    if exclude_self:
        d = d[d > 1e-13]
    return float(d.min()) if d.size else 1.0


def _nearest_root(params: _Curve, x, chart: Chart, w_ref):
    r = np.sqrt(params.R(np.asarray(x, dtype=complex), chart))
    return np.where(np.abs(r - w_ref) <= np.abs(r + w_ref), r, -r)


def _branch_uniformizer(params: _Curve, p: CurvePoint):
    """Return (x_b, kind, lead) with w ~ lead * t (kind 'zero') or lead / t ('pole')."""
    x_b = complex(p.coord)
    if p.w == 0:
        return x_b, "zero", cmath.sqrt(params.dR(x_b, p.chart))
    dd = 2.0 * x_b - 2.0 * math.cos(params.rho)
    return x_b, "pole", cmath.sqrt(params.numerator(x_b, p.chart) / dd)


def _tau_at_branch(params: _Curve, p: CurvePoint) -> complex:
    x_b, kind, lead = _branch_uniformizer(params, p)
    sign = 1.0 if p.chart == Chart.Z else -1.0
    if kind == "zero":
        return sign * 2.0 / (params.denominator(x_b) * lead)
    dd = 2.0 * x_b - 2.0 * math.cos(params.rho)
    return sign * 2.0 / (dd * lead)


def eval_form(form: Form, p: CurvePoint) -> FormValue:
    """Coefficient of ``form`` at ``p`` in p's chart (or the uniformizer at branch points)."""
    params = form.params
    for q in form.poles():
        if _same_point(p, q):
            raise FormPole(f"{form.name} has a pole at {p}")
    if p.is_branch:
        m = complex(np.asarray(form.multiplier(np.array([p.coord]), np.array([p.w]), p.chart))[0])
        return FormValue(m * _tau_at_branch(params, p), "T")
    x = complex(p.coord)
    val = complex(np.asarray(form.coeff(np.array([x]), np.array([p.w]), p.chart))[0])
    if np.isfinite(val) and x != 0:
        return FormValue(val, p.chart.value)
    # removable 0/0 of the formula: mean value over a small circle
    r = 0.05 * _singular_distance(params, x, p.chart)
    n = 64
    xs = x + r * np.exp(2j * np.pi * np.arange(n) / n)
    ws = _nearest_root(params, xs, p.chart, p.w)
    return FormValue(complex(np.mean(form.coeff(xs, ws, p.chart))), p.chart.value)


def eval_gauss(p: CurvePoint) -> complex:
    return p.z


def eval_tau(params: _Curve, p: CurvePoint) -> FormValue:
    return eval_form(Tau(params), p)


def eval_phi3(data: NormalizedData, p: CurvePoint) -> FormValue:
    return eval_form(Phi3(data), p)


def eval_phi12(data: NormalizedData, p: CurvePoint) -> tuple[FormValue, FormValue]:
    try:
        return eval_form(Phi1(data), p), eval_form(Phi2(data), p)
    except FormPole as exc:
        raise FormPole(f"Phi1, Phi2 have double poles at the ends ({p})") from exc


def to_z_chart(value: FormValue, p: CurvePoint) -> complex:
    """Transport a U-chart coefficient to the Z chart via du = -dz / z^2."""
    if value.chart == "Z":
        return value.coeff
    if value.chart == "U":
        return -value.coeff * p.u ** 2
    raise FormError("uniformizer values cannot be transported")


# --- eta for complex moduli ---------------------------------------------------

def z1_point(gparams: GeneralCurveParams) -> complex:
    a = gparams.a
    if abs(a.imag) < 1e-6:
        raise NearRealModulus("z1 diverges as Im(a) -> 0")
    return 1j * (1 + abs(a) ** 2 - 2 * a * math.cos(gparams.rho)) / (2 * a.imag)


def p1_point(gparams: GeneralCurveParams) -> CurvePoint:
    from .curve import chart_for

    z1 = z1_point(gparams)
    return CurvePoint(z1, -gparams.sqrt_a, chart_for(z1))


def eta_general(gparams: GeneralCurveParams) -> Combination:
    """S3-symmetric form with Res(E1) = i, pinned by minimising |eta(P1)|.

    Within the symmetric family eta0 + i r tau (r real) the value at
    P1 = (z1, -sqrt a) is affine in r; r is the least-squares minimiser.
    """
    p1 = p1_point(gparams)
    e0 = Eta0(gparams)
    a0 = eval_form(e0, p1).coeff
    b0 = eval_form(Tau(gparams), p1).coeff
    r = _best_imaginary_shift(a0, b0)
    return Combination(e0, 1j * r, name="eta")


def _best_imaginary_shift(a0: complex, b0: complex) -> float:
    """argmin_r |a0 + i r b0| over real r."""
    return -float((a0 / b0).imag)


def eval_eta_general(gparams: GeneralCurveParams, p: CurvePoint) -> FormValue:
    return eval_form(eta_general(gparams), p)


def lemma3_residual(gparams: GeneralCurveParams | CurveParams) -> float:
    """min_r |(eta + i r tau)(V1)| in the Z chart.

    Zero exactly when some S3-symmetric form with residues +-i at the ends
    vanishes at V1, which the Weierstrass data requires.
    """
    v1 = marked_points(gparams).V1
    a0 = eval_form(Eta0(gparams), v1).coeff
    b0 = eval_form(Tau(gparams), v1).coeff
    q = a0 / b0
    return abs(b0) * abs(q.real)


# --- residues and orders ------------------------------------------------------

def residue(form: Form, pole: CurvePoint, radius: float, tol: float = 1e-11,
            n0: int = 64, n_max: int = 1 << 15) -> complex:
    """(1 / 2 pi i) * contour integral over a circle in the pole's chart.

    Composite trapezoid, doubled until successive values agree to ``tol``.
    """
    params = form.params
    if pole.is_branch:
        raise FormError("residues at ramification points are not supported")
    x0 = complex(pole.coord)
    dist = _singular_distance(params, x0, pole.chart)
    if radius >= 0.5 * dist:
        raise FormError(f"radius {radius} too large (nearest singular point at {dist})")
    prev = None
    n = n0
    while n <= n_max:
        th = 2 * np.pi * np.arange(n) / n
        xs = x0 + radius * np.exp(1j * th)
        ws = _nearest_root(params, xs, pole.chart, pole.w)
        val = complex(np.mean(form.coeff(xs, ws, pole.chart) * (xs - x0)))
        if prev is not None and abs(val - prev) < tol:
            return val
        prev = val
        n *= 2
    raise QuadratureError("residue quadrature did not converge")


def default_residue_radius(params: _Curve, p: CurvePoint) -> float:
    return 0.25 * _singular_distance(params, complex(p.coord), p.chart)


def normalize_residue(params: CurveParams) -> NormalizedData:
    e1 = marked_points(params).E1
    raw = residue(Phi3(params, c_norm=1.0), e1, default_residue_radius(params, e1))
    return NormalizedData(params, 1j / raw, raw)


class CurveFunction:
    name = "function"

    def __init__(self, params: _Curve):
        self.params = params

    def value(self, x, w, chart: Chart):
        raise NotImplementedError


class GaussFunction(CurveFunction):
    name = "g"

    def value(self, x, w, chart):
        return gauss_value(x, chart) * np.ones_like(np.asarray(w, dtype=complex))


class WShift(CurveFunction):
    """w - shift."""

    def __init__(self, params: _Curve, shift: complex):
        super().__init__(params)
        self.shift = complex(shift)
        self.name = f"w-({shift})"

    def value(self, x, w, chart):
        return np.asarray(w, dtype=complex) - self.shift


def _samples_near(params: _Curve, p: CurvePoint, r: float, n: int = 16):
    """Points at uniformizer distance r around p and dx/dt there."""
    phi = 2 * np.pi * (np.arange(n) + 0.37) / n
    t = r * np.exp(1j * phi)
    if p.is_branch:
        x_b, kind, lead = _branch_uniformizer(params, p)
        xs = x_b + t * t
        guess = lead * t if kind == "zero" else lead / t
        ws = _nearest_root(params, xs, p.chart, guess)
        return xs, ws, 2.0 * t
    x0 = complex(p.coord)
    xs = x0 + t
    ws = _nearest_root(params, xs, p.chart, p.w)
    return xs, ws, np.ones_like(t)


def local_order(obj: Form | CurveFunction, p: CurvePoint, r0: float | None = None,
                margin: float = 0.1) -> int:
    """Order of vanishing (negative for poles) by log-log regression.

    Uses radii r0 * {1, 1/2, 1/4, 1/8} in the local uniformizer.
    """
    params = obj.params
    if r0 is None:
        d = _singular_distance(params, complex(p.coord), p.chart)
        r0 = 0.02 * d if not p.is_branch else 0.1 * math.sqrt(d)
    radii = r0 / 2.0 ** np.arange(4)
    logs = []
    for r in radii:
        xs, ws, jac = _samples_near(params, p, r)
        if isinstance(obj, Form):
            vals = obj.coeff(xs, ws, p.chart) * jac
        else:
            vals = obj.value(xs, ws, p.chart)
        logs.append(np.mean(np.log(np.abs(vals))))
    slope = np.polyfit(np.log(radii), np.array(logs), 1)[0]
    k = int(round(slope))
    if abs(slope - k) > margin:
        raise InconclusiveOrder(f"order fit {slope:.3f} is not near an integer")
    return k


# --- symmetry defects ---------------------------------------------------------

INVOLUTIONS = {"S3": apply_s3, "S": apply_s}


def _pullback_jacobian(name: str, z: complex) -> complex:
    # derivative of z_q as a function of conj(z)
    if name == "S3":
        return -1.0 / complex(z).conjugate() ** 2
    return 1.0


def pullback_defect(form: Form, p: CurvePoint, involution: str, sign: int) -> float:
    """|I* form - sign * conj(form)| at p, relative to max(1, |form(p)|), in the Z chart."""
    q = INVOLUTIONS[involution](p)
    cp = to_z_chart(eval_form(form, p), p)
    cq = to_z_chart(eval_form(form, q), q)
    pulled = cq * _pullback_jacobian(involution, p.z)
    return abs(pulled - sign * cp.conjugate()) / max(1.0, abs(cp))


def gauss_symmetry_defect(p: CurvePoint, involution: str) -> float:
    q = INVOLUTIONS[involution](p)
    g = p.z
    expected = 1.0 / g.conjugate() if involution == "S3" else g.conjugate()
    return abs(q.z - expected) / max(1.0, abs(expected))


def conformality_defect(data: NormalizedData, p: CurvePoint) -> float:
    """|Phi1^2 + Phi2^2 + Phi3^2| / |Phi3|^2."""
    f1, f2 = eval_phi12(data, p)
    f3 = eval_phi3(data, p)
    return abs(f1.coeff ** 2 + f2.coeff ** 2 + f3.coeff ** 2) / abs(f3.coeff) ** 2


SYMMETRY_TABLE = (
    ("phi1", "S3", -1), ("phi2", "S3", -1), ("phi3", "S3", +1), ("tau", "S3", -1),
    ("phi1", "S", -1), ("phi2", "S", +1), ("phi3", "S", -1), ("tau", "S", +1),
)

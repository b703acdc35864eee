"""Sheet-consistent paths on the curve and integration of 1-forms along them.

Paths are built from line and arc pieces in a single chart.  Nodes are spaced
so that every step is at most a tenth of the distance to the nearest singular
coordinate (ramification values and the chart origin), which keeps the
nearest-root continuation of w unambiguous.  Between nodes, w at quadrature
nodes is the root nearest the linear interpolant of the node values.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .curve import Chart, CurveError, CurvePoint, _Curve, chart_for, marked_points
from .forms import Form

STEP_FRACTION = 0.1
GL_ORDER = 16
_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_ORDER)


class TransportError(CurveError):
    pass


class StepTooLarge(TransportError):
    pass


class NonConvergence(TransportError):
    pass


class PoleProximity(TransportError):
    pass


class GeometryCollision(TransportError):
    pass


# --- pieces -----------------------------------------------------------------

@dataclass(frozen=True)
class Line:
    start: complex
    end: complex

    def x(self, t):
        return self.start + (self.end - self.start) * np.asarray(t)

    def dx(self, t):
        return (self.end - self.start) * np.ones_like(np.asarray(t, dtype=float))

    def reversed(self) -> "Line":
        return Line(self.end, self.start)


@dataclass(frozen=True)
class Arc:
    center: complex
    radius: float
    theta0: float
    theta1: float

    def x(self, t):
        th = self.theta0 + (self.theta1 - self.theta0) * np.asarray(t)
        return self.center + self.radius * np.exp(1j * th)

    def dx(self, t):
        return 1j * (self.theta1 - self.theta0) * (self.x(t) - self.center)

    def reversed(self) -> "Arc":
        return Arc(self.center, self.radius, self.theta1, self.theta0)


Piece = Line | Arc


def circle(center: complex, radius: float, theta0: float = 0.0) -> tuple[Arc]:
    return (Arc(center, radius, theta0, theta0 + 2 * math.pi),)


def stadium(p: complex, q: complex, delta: float) -> tuple[Piece, ...]:
    """Counter-clockwise capsule at distance ``delta`` from the segment [p, q].

    Starts and ends at p - delta * e, e the unit vector from p to q.
    """
    e = (q - p) / abs(q - p)
    n = 1j * e
    ang = cmath.phase
    th_me = ang(-e)
    return (
        Arc(p, delta, th_me, th_me + math.pi / 2),
        Line(p - delta * n, q - delta * n),
        Arc(q, delta, ang(-n), ang(-n) + math.pi),
        Line(q + delta * n, p + delta * n),
        Arc(p, delta, ang(n), ang(n) + math.pi / 2),
    )


# --- continuation -------------------------------------------------------------

def _roots(params: _Curve, x, chart: Chart):
    with np.errstate(all="ignore"):
        return np.sqrt(params.R(np.asarray(x, dtype=complex), chart))


def continue_roots(params: _Curve, x, w_start: complex, chart: Chart = Chart.Z,
                   min_margin: float = STEP_FRACTION) -> np.ndarray:
    """Nearest-root continuation of w along chart coordinates ``x``."""
    x = np.asarray(x, dtype=complex)
    r = _roots(params, x, chart)
    if not np.all(np.isfinite(r)):
        raise TransportError("samples hit a pole of R")
    if np.any(np.abs(r) < 1e-300):
        raise TransportError("samples hit a ramification point")
    w_start = complex(w_start)
    s0 = 1.0 if abs(r[0] - w_start) <= abs(r[0] + w_start) else -1.0
    if len(x) == 1:
        return np.array([s0 * r[0]])
    prev, cur = r[:-1], r[1:]
    same = np.abs(cur - prev)
    flip = np.abs(cur + prev)
    near = np.minimum(same, flip)
    far = np.maximum(same, flip)
    margin = (far - near) / (far + near)
    if np.any(margin < min_margin):
        k = int(np.argmin(margin))
        raise StepTooLarge(f"root-choice margin {margin[k]:.3f} below {min_margin} at step {k}")
    signs = np.concatenate([[s0], s0 * np.cumprod(np.where(flip < same, -1.0, 1.0))])
    return signs * r


def continue_rows(params: _Curve, x: np.ndarray, w_start: np.ndarray, chart: Chart = Chart.Z,
                  min_margin: float = STEP_FRACTION) -> np.ndarray:
    """Row-wise continuation: ``x`` has shape (n_paths, n_samples), column 0 the starts."""
    x = np.asarray(x, dtype=complex)
    r = _roots(params, x, chart)
    if not np.all(np.isfinite(r)):
        raise TransportError("samples hit a pole of R")
    w_start = np.asarray(w_start, dtype=complex)
    s0 = np.where(np.abs(r[:, 0] - w_start) <= np.abs(r[:, 0] + w_start), 1.0, -1.0)
    prev, cur = r[:, :-1], r[:, 1:]
    same = np.abs(cur - prev)
    flip = np.abs(cur + prev)
    with np.errstate(invalid="ignore"):
        margin = np.abs(flip - same) / (flip + same)
    if np.any(margin < min_margin):
        raise StepTooLarge(f"root-choice margin {np.nanmin(margin):.3f} below {min_margin}")
    steps = np.where(flip < same, -1.0, 1.0)
    signs = np.concatenate([s0[:, None], s0[:, None] * np.cumprod(steps, axis=1)], axis=1)
    return signs * r


def continue_w(params: _Curve, z_samples: Sequence[complex], w_start: complex) -> list[CurvePoint]:
    """Track w along base-sphere samples; the chart follows each sample."""
    z = np.asarray(z_samples, dtype=complex)
    bv = np.array(params.branch_values())
    if np.any(np.min(np.abs(z[:, None] - bv[None, :]), axis=1) < 1e-6):
        raise TransportError("samples pass within 1e-6 of a ramification value")
    ws = continue_roots(params, z, w_start, Chart.Z)
    return [CurvePoint(complex(zz), complex(ww), chart_for(zz)) for zz, ww in zip(z, ws)]


# --- paths --------------------------------------------------------------------

def _singular_distance(params: _Curve, x: np.ndarray, chart: Chart) -> np.ndarray:
    s = params.singular_coords(chart)
    return np.min(np.abs(np.asarray(x)[..., None] - s), axis=-1)


def _piece_nodes(params: _Curve, piece: Piece, chart: Chart, fraction: float) -> np.ndarray:
    ts = [0.0]
    t = 0.0
    while t < 1.0:
        x = complex(piece.x(t))
        speed = abs(complex(piece.dx(t)))
        d = float(_singular_distance(params, np.array([x]), chart)[0])
        if d < 1e-9:
            raise GeometryCollision(f"path passes through a singular point near {x}")
        h = fraction * d / speed
        # never let the step overshoot a closer approach further along
        while h > 1e-12:
            x1 = complex(piece.x(min(1.0, t + h)))
            d1 = float(_singular_distance(params, np.array([x1]), chart)[0])
            if abs(x1 - x) <= fraction * min(d, d1):
                break
            h *= 0.5
        t = min(1.0, t + h)
        ts.append(t)
    return np.array(ts)


@dataclass
class PathOnCurve:
    """Sheet-consistent discretised path in one chart."""

    params: _Curve
    pieces: tuple[Piece, ...]
    t_nodes: tuple[np.ndarray, ...]
    x: np.ndarray
    w: np.ndarray
    chart: Chart = Chart.Z
    kind: str = "open"
    label: str = ""

    @property
    def nodes(self) -> list[CurvePoint]:
        out = []
        for xx, ww in zip(self.x, self.w):
            z = xx if self.chart == Chart.Z else (math.inf if xx == 0 else 1 / xx)
            out.append(CurvePoint(complex(z), complex(ww), chart_for(z)))
        return out

    @property
    def start(self) -> CurvePoint:
        return self.nodes[0]

    @property
    def end(self) -> CurvePoint:
        return self.nodes[-1]

    def closure_defect(self) -> float:
        return float(abs(self.x[-1] - self.x[0]) + abs(self.w[-1] - self.w[0]))

    def reversed(self) -> "PathOnCurve":
        pieces = tuple(p.reversed() for p in reversed(self.pieces))
        t_nodes = tuple((1.0 - t)[::-1] for t in reversed(self.t_nodes))
        return PathOnCurve(self.params, pieces, t_nodes, self.x[::-1].copy(), self.w[::-1].copy(),
                           self.chart, self.kind, self.label + "^-1")

    def refined(self) -> "PathOnCurve":
        """Same path with every step halved (sheets unchanged by construction)."""
        t_nodes = tuple(np.sort(np.concatenate([t, 0.5 * (t[1:] + t[:-1])])) for t in self.t_nodes)
        return _assemble(self.params, self.pieces, t_nodes, self.w[0], self.chart, self.kind, self.label)


def _assemble(params, pieces, t_nodes, w_start, chart, kind, label) -> PathOnCurve:
    xs = [pieces[0].x(t_nodes[0][:1])]
    for piece, t in zip(pieces, t_nodes):
        xs.append(piece.x(t[1:]))
    x = np.concatenate(xs).astype(complex)
    w = continue_roots(params, x, w_start, chart)
    if kind == "cycle" and abs(x[-1] - x[0]) > 1e-12 * (1 + abs(x[0])):
        raise TransportError("cycle pieces do not close in the chart")
    return PathOnCurve(params, tuple(pieces), tuple(t_nodes), x, w, chart, kind, label)


def build_path(params: _Curve, pieces: Sequence[Piece], w_start: complex,
               chart: Chart = Chart.Z, kind: str = "open", label: str = "",
               fraction: float = STEP_FRACTION) -> PathOnCurve:
    pieces = tuple(pieces)
    for p0, p1 in zip(pieces[:-1], pieces[1:]):
        if abs(complex(p0.x(1.0)) - complex(p1.x(0.0))) > 1e-12 * (1 + abs(complex(p1.x(0.0)))):
            raise TransportError("pieces are not contiguous")
    t_nodes = tuple(_piece_nodes(params, p, chart, fraction) for p in pieces)
    return _assemble(params, pieces, t_nodes, w_start, chart, kind, label)


# --- integration --------------------------------------------------------------

@dataclass(frozen=True)
class Integral:
    value: np.ndarray
    error: float


def _pole_coords(form: Form, chart: Chart) -> list[tuple[complex, complex]]:
    out = []
    for p in form.poles():
        if p.chart == chart:
            out.append((complex(p.coord), p.w))
        elif chart == Chart.Z and not math.isinf(abs(p.z)):
            out.append((complex(p.z), p.w))
    return out


def _check_poles(forms: Sequence[Form], path: PathOnCurve) -> None:
    step = np.abs(np.diff(path.x))
    step = np.concatenate([step, step[-1:]])
    for f in forms:
        for xp, _ in _pole_coords(f, path.chart):
            d = np.abs(path.x - xp)
            if np.any(d < 10.0 * step * (1 - 1e-6)):
                raise PoleProximity(f"path within 10 steps of a pole of {f.name} at {xp}")


def _quadrature(forms: Sequence[Form], path: PathOnCurve, level: int) -> np.ndarray:
    """Composite Gauss-Legendre with each node interval split into 2**level parts."""
    return np.sum(_interval_integrals(forms, path, level), axis=0)


def _interval_integrals(forms: Sequence[Form], path: PathOnCurve, level: int) -> np.ndarray:
    """Integrals over each node interval, shape (n_nodes - 1, n_forms)."""
    chunks = []
    offset = 0
    m = 1 << level
    sub = np.arange(m)
    for piece, t in zip(path.pieces, path.t_nodes):
        n_int = len(t) - 1
        w_nodes = path.w[offset:offset + n_int + 1]
        offset += n_int
        t0, t1 = t[:-1], t[1:]
        h = (t1 - t0) / m
        a_ = t0[:, None] + h[:, None] * sub[None, :]
        # GL points on each subinterval, shape (n_int, m, GL_ORDER)
        s = 0.5 * (_GL_X + 1.0)
        tq = a_[..., None] + h[:, None, None] * s[None, None, :]
        frac = (tq - t0[:, None, None]) / (t1 - t0)[:, None, None]
        w_ref = w_nodes[:-1, None, None] * (1 - frac) + w_nodes[1:, None, None] * frac
        xq = piece.x(tq)
        r = _roots(path.params, xq, path.chart)
        wq = np.where(np.abs(r - w_ref) <= np.abs(r + w_ref), r, -r)
        jac = piece.dx(tq) * (0.5 * h)[:, None, None] * _GL_W[None, None, :]
        part = np.empty((n_int, len(forms)), dtype=complex)
        for k, f in enumerate(forms):
            part[:, k] = np.sum(f.coeff(xq, wq, path.chart) * jac, axis=(1, 2))
        chunks.append(part)
    return np.concatenate(chunks, axis=0)


def cumulative_integrals(forms: Sequence[Form], path: PathOnCurve, level: int = 2) -> np.ndarray:
    """Integral from the path start to every node, shape (n_nodes, n_forms)."""
    _check_poles(forms, path)
    parts = _interval_integrals(forms, path, level)
    out = np.zeros((len(path.x), len(forms)), dtype=complex)
    out[1:] = np.cumsum(parts, axis=0)
    return out


def integrate_forms(forms: Sequence[Form], path: PathOnCurve, tol: float = 1e-10,
                    max_level: int = 8) -> Integral:
    """Integrals of several forms along ``path`` with a shared refinement loop."""
    _check_poles(forms, path)
    prev = _quadrature(forms, path, 0)
    for level in range(1, max_level + 1):
        cur = _quadrature(forms, path, level)
        err = float(np.max(np.abs(cur - prev)))
        if err < tol:
            return Integral(cur, err)
        prev = cur
    raise NonConvergence(f"integral did not converge to {tol} (last delta {err:.3e})")


def integrate_form(form: Form, path: PathOnCurve, tol: float = 1e-10) -> complex:
    return complex(integrate_forms([form], path, tol).value[0])


# --- homology basis -----------------------------------------------------------

@dataclass
class HomologyBasis:
    cycleA: PathOnCurve
    cycleB: PathOnCurve
    endLoop1: PathOnCurve
    endLoop2: PathOnCurve
    notes: dict = field(default_factory=dict)

    def cycles(self) -> dict[str, PathOnCurve]:
        return {"A": self.cycleA, "B": self.cycleB, "E1": self.endLoop1, "E2": self.endLoop2}


def _segment_distance(p: complex, a: complex, b: complex) -> float:
    d = b - a
    t = max(0.0, min(1.0, ((p - a) * d.conjugate()).real / abs(d) ** 2))
    return abs(p - (a + t * d))


def canonical_circle_encloses(params: _Curve) -> list[complex]:
    """Singular z-values strictly inside the circle of radius 0.6 (1/a - a) about (a + 1/a)/2.

    Besides a and 1/a this circle must enclose nothing for it to represent a
    loop around the real cut; for most parameters it also encloses 0 and
    e^{+-i rho}, which is why stadium contours are used instead.
    """
    a = params.a.real
    centre, radius = 0.5 * (a + 1 / a), 0.6 * (1 / a - a)
    pts = [0j, *params.branch_values()]
    return [p for p in pts if abs(p - centre) < radius]


def homology_basis(params: _Curve, delta_scale: float = 1.0) -> HomologyBasis:
    """Cycles A (around the real cut), B (around a and e^{i rho}) and the end loops.

    A is a capsule around [a, 1/a]; it crosses no cut and stays on the sheet
    with w > 0 left of a.  B is a capsule around the segment [a, e^{i rho}], so
    it crosses the real cut once and the unit-circle cut once.  ``delta_scale``
    perturbs the capsule widths for deformation tests.
    """
    a = params.a.real
    c = params.c
    bv = params.branch_values()
    dA = 0.5 * min(a, _segment_distance(c, a, 1 / a), _segment_distance(c.conjugate(), a, 1 / a))
    dB = 0.5 * min(a, _segment_distance(1 / a, a, c), _segment_distance(c.conjugate(), a, c),
                   _segment_distance(0j, a, c), 1 - a)
    dA *= 0.9 * delta_scale
    dB *= 0.6 * delta_scale
    w_left = math.sqrt(params.R(a - dA).real)
    cycA = build_path(params, stadium(a, 1 / a, dA), w_left, Chart.Z, "cycle", "A")
    wB = math.sqrt(params.R(a - dB).real)
    cycB = build_path(params, stadium(a, c, dB), wB, Chart.Z, "cycle", "B")
    m = marked_points(params)
    r_end = 0.05 * min(abs(b) for b in bv)
    e1 = build_path(params, circle(0j, r_end), m.E1.w, Chart.Z, "cycle", "E1")
    r_end_u = 0.05 * min(abs(1 / b) for b in bv)
    e2 = build_path(params, circle(0j, r_end_u), m.E2.w, Chart.U, "cycle", "E2")
    return HomologyBasis(cycA, cycB, e1, e2, {"deltaA": dA, "deltaB": dB, "r_end": r_end})


# --- combinatorics ------------------------------------------------------------

def cut_crossings(path: PathOnCurve) -> int:
    """Crossings of the cuts [a, 1/a] and the unit arc through -1 (Z-chart paths)."""
    if path.chart != Chart.Z:
        z = np.where(path.x == 0, np.inf, 1 / np.where(path.x == 0, 1, path.x))
    else:
        z = path.x
    a = path.params.a.real
    cos_rho = math.cos(path.params.rho)
    n = 0
    z0, z1 = z[:-1], z[1:]
    # real segment
    im0, im1 = z0.imag, z1.imag
    cross = (im0 * im1 < 0)
    for k in np.nonzero(cross)[0]:
        s = im0[k] / (im0[k] - im1[k])
        xr = (z0[k] + s * (z1[k] - z0[k])).real
        if a < xr < 1 / a:
            n += 1
    # unit arc through -1
    m0, m1 = np.abs(z0) - 1, np.abs(z1) - 1
    cross = (m0 * m1 < 0)
    for k in np.nonzero(cross)[0]:
        s = m0[k] / (m0[k] - m1[k])
        zc = z0[k] + s * (z1[k] - z0[k])
        if zc.real < cos_rho:
            n += 1
    return n


def intersection_number(p: PathOnCurve, q: PathOnCurve) -> int:
    """Signed count of crossings of two Z-chart cycles where both lie on the same sheet."""
    n = 0
    x0, x1 = p.x[:-1], p.x[1:]
    y0, y1 = q.x[:-1], q.x[1:]
    dp = x1 - x0
    dq = y1 - y0
    for i in range(len(dp)):
        # x0 + s dp = y0 + t dq, via cross products cr(u, v) = Im(conj(u) v)
        den = (dp[i].conjugate() * dq).imag
        ok = np.abs(den) > 1e-300
        safe = np.where(ok, den, 1.0)
        rel = y0 - x0[i]
        s = np.where(ok, (rel.conjugate() * dq).imag / safe, -1.0)
        t = np.where(ok, (rel.conjugate() * dp[i]).imag / safe, -1.0)
        hit = ok & (s >= 0) & (s < 1) & (t >= 0) & (t < 1)
        for j in np.nonzero(hit)[0]:
            wp = p.w[i] + s[j] * (p.w[i + 1] - p.w[i])
            wq = q.w[j] + t[j] * (q.w[j + 1] - q.w[j])
            if abs(wp - wq) < abs(wp + wq):
                n += 1 if (dp[i].conjugate() * dq[j]).imag > 0 else -1
    return n

"""Periods over the homology basis, the period defect, its solver and scans.

The quotient surface lives in R^3 / <(0, 0, 2 pi)>, so the vertical period of
a cycle only has to be a multiple of 2 pi.  Of the six real conditions, three
vanish identically by the S and S3 symmetries (Re PA1, Re PA2, Re PB1) and one
is tied to another (Re PB3 = -Re PA3 / 2); the solver checks these on every
iterate instead of assuming them.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .curve import CurveError, CurveParams
from .forms import NormalizedData, Phi1, Phi2, Phi3, normalize_residue
from .transport import HomologyBasis, PathOnCurve, homology_basis, integrate_forms

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
DEFAULT_BOX = (0.01, 0.99, 0.05, math.pi - 0.05)
COMPONENTS = ("A1", "A2", "A3", "B1", "B2", "B3")
SYMMETRY_FORCED = ("A1", "A2", "B1")
FD_STEP = 1e-6


class PeriodError(CurveError):
    pass


class NoRootInBox(PeriodError):
    pass


class JacobianSingular(PeriodError):
    pass


class SymmetryViolation(PeriodError):
    pass


def wrap(x: float) -> float:
    """Signed distance of x to the lattice 2 pi Z."""
    return x - TWO_PI * round(x / TWO_PI)


@dataclass(frozen=True)
class PeriodReport:
    PA: np.ndarray
    PB: np.ndarray
    Pend1: np.ndarray
    Pend2: np.ndarray
    errors: dict = field(default_factory=dict)

    @property
    def translation(self) -> np.ndarray:
        return self.Pend1.real.copy()


@dataclass(frozen=True)
class DefectVector:
    """Six period defects; ``signed`` keeps signs, the fields are absolute."""

    signed: tuple[float, ...]

    def __post_init__(self):
        if len(self.signed) != 6:
            raise ValueError("a defect vector has six components")

    def __getattr__(self, name):
        if name in COMPONENTS:
            return abs(self.signed[COMPONENTS.index(name)])
        raise AttributeError(name)

    def as_array(self) -> np.ndarray:
        return np.abs(np.array(self.signed))

    def component(self, name: str) -> float:
        return self.signed[COMPONENTS.index(name)]

    @property
    def max(self) -> float:
        return float(np.max(self.as_array()))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.signed))

    def as_dict(self) -> dict:
        return {f"d_{k}": abs(v) for k, v in zip(COMPONENTS, self.signed)}


def weierstrass(data: NormalizedData):
    return [Phi1(data), Phi2(data), Phi3(data)]


def period_vector(data: NormalizedData, cycle: PathOnCurve, tol: float = 1e-10) -> np.ndarray:
    return integrate_forms(weierstrass(data), cycle, tol).value


def period_report(data: NormalizedData, tol: float = 1e-10,
                  basis: HomologyBasis | None = None) -> PeriodReport:
    basis = basis or homology_basis(data.params)
    forms = weierstrass(data)
    out, errs = {}, {}
    for name, cyc in basis.cycles().items():
        res = integrate_forms(forms, cyc, tol)
        out[name], errs[name] = res.value, res.error
    return PeriodReport(out["A"], out["B"], out["E1"], out["E2"], errs)


def defect_from_periods(PA: np.ndarray, PB: np.ndarray) -> DefectVector:
    return DefectVector((
        float(PA[0].real), float(PA[1].real), wrap(float(PA[2].real)),
        float(PB[0].real), float(PB[1].real), wrap(float(PB[2].real)),
    ))


def period_defect(data: NormalizedData, tol: float = 1e-10,
                  basis: HomologyBasis | None = None) -> DefectVector:
    basis = basis or homology_basis(data.params)
    forms = weierstrass(data)
    PA = integrate_forms(forms, basis.cycleA, tol).value
    PB = integrate_forms(forms, basis.cycleB, tol).value
    return defect_from_periods(PA, PB)


def period_stability(data: NormalizedData, scales=(0.7, 1.3), tol: float = 1e-12) -> dict[str, float]:
    """Largest change of any cycle integral under contour deformation and under step halving."""
    base = homology_basis(data.params)
    forms = weierstrass(data)
    ref = {k: integrate_forms(forms, c, tol).value for k, c in base.cycles().items()}
    deform = 0.0
    for s in scales:
        other = homology_basis(data.params, delta_scale=s).cycles()
        for k in ("A", "B"):
            deform = max(deform, float(np.max(np.abs(integrate_forms(forms, other[k], tol).value - ref[k]))))
    halving = 0.0
    for k, c in base.cycles().items():
        halving = max(halving, float(np.max(np.abs(integrate_forms(forms, c.refined(), tol).value - ref[k]))))
    return {"deformation": deform, "halving": halving}


def defect_at(a: float, rho: float, tol: float = 1e-10) -> DefectVector:
    return period_defect(normalize_residue(CurveParams(a, rho)), tol)


def _defect_or_none(args) -> tuple[float, ...] | None:
    a, rho, tol = args
    try:
        return defect_at(a, rho, tol).signed
    except (CurveError, FloatingPointError, ValueError) as exc:
        log.warning("defect failed at a=%r rho=%r: %s", a, rho, exc)
        return None


def worker_count() -> int:
    env = os.environ.get("HELICOID_THREADS")
    if env is not None:
        try:
            n = int(env)
        except ValueError as exc:
            raise ValueError("HELICOID_THREADS must be a positive integer") from exc
        if n < 1:
            raise ValueError("HELICOID_THREADS must be a positive integer")
        return n
    return max(1, os.cpu_count() or 1)


def _evaluate_grid(nodes: list[tuple[float, float]], tol: float, workers: int | None) -> list:
    workers = worker_count() if workers is None else workers
    jobs = [(a, r, tol) for a, r in nodes]
    if workers <= 1:
        return [_defect_or_none(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_defect_or_none, jobs, chunksize=16))


# --- uniqueness scan ----------------------------------------------------------

@dataclass
class ScanTable:
    box: tuple[float, float, float, float]
    a_values: np.ndarray
    rho_values: np.ndarray
    signed: np.ndarray            # (n_a, n_rho, 6), nan where a node failed
    driving: tuple[str, str]
    candidates: list[tuple[int, int]]

    @property
    def norm(self) -> np.ndarray:
        return np.linalg.norm(self.signed, axis=-1)

    @property
    def n_candidates(self) -> int:
        return len(self.candidates)

    @property
    def missing(self) -> int:
        return int(np.isnan(self.signed[..., 0]).sum())

    def is_candidate(self, i: int, j: int) -> bool:
        return (i, j) in set(self.candidates)

    def minimum(self) -> tuple[int, int]:
        n = np.where(np.isnan(self.norm), np.inf, self.norm)
        i, j = np.unravel_index(int(np.argmin(n)), n.shape)
        return int(i), int(j)

    def sign_pattern(self) -> np.ndarray:
        idx = [COMPONENTS.index(c) for c in self.driving]
        return np.sign(self.signed[..., idx])

    def continuity_ratio(self, window: int = 2) -> float:
        """Largest neighbour jump of the norm over the median jump in its (2 window + 1)^2 neighbourhood.

        A local median is used because the periods vary over orders of
        magnitude across the box (they blow up as a -> 0).
        """
        n = self.norm
        worst = 0.0
        for axis in (0, 1):
            jumps = np.abs(np.diff(n, axis=axis))
            padded = np.pad(jumps, window, mode="edge")
            views = np.lib.stride_tricks.sliding_window_view(padded, (2 * window + 1, 2 * window + 1))
            with np.errstate(all="ignore"):
                med = np.nanmedian(views, axis=(-1, -2))
                ratio = jumps / med
            ratio = ratio[np.isfinite(ratio)]
            if ratio.size:
                worst = max(worst, float(ratio.max()))
        return worst


def _jacobian_from_grid(table_signed, a_vals, r_vals, i, j, comps) -> np.ndarray:
    i = min(max(i, 1), len(a_vals) - 2)
    j = min(max(j, 1), len(r_vals) - 2)
    rows = []
    for c in comps:
        k = COMPONENTS.index(c)
        f = table_signed[..., k]
        if c in ("A3", "B3"):
            da = wrap(f[i + 1, j] - f[i - 1, j])
            dr = wrap(f[i, j + 1] - f[i, j - 1])
        else:
            da = f[i + 1, j] - f[i - 1, j]
            dr = f[i, j + 1] - f[i, j - 1]
        rows.append([da / (a_vals[i + 1] - a_vals[i - 1]), dr / (r_vals[j + 1] - r_vals[j - 1])])
    return np.array(rows)


def dominant_components(signed_at_min, jac_fn, cond_max: float = 1e8) -> tuple[str, str]:
    """The two largest non-symmetry-forced components forming a regular 2x2 system."""
    free = [c for c in COMPONENTS if c not in SYMMETRY_FORCED]
    order = sorted(free, key=lambda c: -abs(signed_at_min[COMPONENTS.index(c)]))
    pairs = [(order[p], order[q]) for p in range(len(order)) for q in range(p + 1, len(order))]
    for pair in pairs:
        J = jac_fn(pair)
        if np.all(np.isfinite(J)) and np.linalg.cond(J) < cond_max:
            return tuple(sorted(pair, key=COMPONENTS.index))
    raise JacobianSingular("no regular pair of free defect components")


def _triangle_zero(p0, p1, p2):
    """Barycentric coordinates of the zero of the linear interpolant, or None."""
    M = np.array([[p1[0] - p0[0], p2[0] - p0[0]], [p1[1] - p0[1], p2[1] - p0[1]]])
    if abs(np.linalg.det(M)) < 1e-300:
        return None
    s, t = np.linalg.solve(M, -np.asarray(p0))
    if s >= 0 and t >= 0 and s + t <= 1:
        return 1 - s - t, s, t
    return None


def _candidate_cells(signed: np.ndarray, driving: tuple[str, str], residual_tol: float) -> list[tuple[int, int]]:
    idx = [COMPONENTS.index(c) for c in driving]
    others = [k for k in range(6) if k not in idx]
    wrapped = [COMPONENTS.index(c) for c in ("A3", "B3")]
    n_a, n_r, _ = signed.shape
    out = []
    for i in range(n_a - 1):
        for j in range(n_r - 1):
            corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)]
            vals = np.array([signed[c] for c in corners])
            if np.any(np.isnan(vals)):
                continue
            # unwrap lattice components relative to the first corner
            for k in wrapped:
                vals[:, k] = vals[0, k] + np.array([wrap(v - vals[0, k]) for v in vals[:, k]])
            # a lattice component sweeping more than half a period is not linear here
            if any(np.ptp(vals[:, k]) > math.pi for k in wrapped):
                continue
            hit = False
            for tri in ((0, 1, 2), (0, 2, 3)):
                bc = _triangle_zero(*(vals[t][idx] for t in tri))
                if bc is None:
                    continue
                rest = sum(b * vals[t][others] for b, t in zip(bc, tri))
                if np.max(np.abs(rest)) <= residual_tol:
                    hit = True
            if hit:
                out.append((i, j))
    return out


def uniqueness_scan(box=DEFAULT_BOX, grid: tuple[int, int] = (100, 100), tol: float = 1e-9,
                    workers: int | None = None, min_grid: int = 50,
                    residual_tol: float = 0.5) -> ScanTable:
    """Defects on a regular grid and the cells whose linear model has a zero.

    A cell is a candidate when the linear interpolant of the two driving
    components vanishes inside it and the interpolated remaining components
    are below ``residual_tol`` there.  The second test rejects places where
    only the driving pair closes (for instance Re PA3 = -2 pi, where
    Re PB3 = pi is off the lattice).
    """
    n_a, n_r = grid
    if n_a < min_grid or n_r < min_grid:
        raise ValueError(f"grid must be at least {min_grid}x{min_grid}")
    a_lo, a_hi, r_lo, r_hi = box
    _check_box(box)
    a_vals = np.linspace(a_lo, a_hi, n_a)
    r_vals = np.linspace(r_lo, r_hi, n_r)
    nodes = [(float(a), float(r)) for a in a_vals for r in r_vals]
    res = _evaluate_grid(nodes, tol, workers)
    signed = np.array([r if r is not None else (math.nan,) * 6 for r in res]).reshape(n_a, n_r, 6)
    table = ScanTable(tuple(box), a_vals, r_vals, signed, ("A3", "B2"), [])
    i, j = table.minimum()
    table.driving = dominant_components(
        signed[i, j], lambda pair: _jacobian_from_grid(signed, a_vals, r_vals, i, j, pair))
    table.candidates = _candidate_cells(signed, table.driving, residual_tol)
    return table


def _check_box(box) -> None:
    a_lo, a_hi, r_lo, r_hi = box
    if not (0 < a_lo < a_hi < 1 and 0 < r_lo < r_hi < math.pi):
        raise ValueError(f"box {box} must lie inside (0, 1) x (0, pi)")


# --- solver -------------------------------------------------------------------

@dataclass
class SolveResult:
    a: float
    rho: float
    defect: DefectVector
    driving: tuple[str, str]
    iterations: int
    seed: tuple[float, float]
    history: list = field(default_factory=list)


def _assert_symmetry(d: DefectVector, tol: float) -> None:
    for c in SYMMETRY_FORCED:
        if abs(d.component(c)) >= tol:
            raise SymmetryViolation(f"symmetry-forced component {c} = {d.component(c):.3e} >= {tol:.1e}")


def _reduced(d: DefectVector, driving) -> np.ndarray:
    return np.array([d.component(c) for c in driving])


def fd_jacobian(a: float, rho: float, driving, tol: float, step: float = FD_STEP) -> np.ndarray:
    J = np.empty((2, 2))
    for col, (da, dr) in enumerate(((step, 0.0), (0.0, step))):
        fp = _reduced(defect_at(a + da, rho + dr, tol), driving)
        fm = _reduced(defect_at(a - da, rho - dr, tol), driving)
        diff = fp - fm
        for k, c in enumerate(driving):
            if c in ("A3", "B3"):
                diff[k] = wrap(diff[k])
        J[:, col] = diff / (2 * step)
    return J


def newton(seed: tuple[float, float], driving: tuple[str, str], box=DEFAULT_BOX, tol: float = 1e-10,
           quad_tol: float = 1e-12, max_iter: int = 40, sym_tol: float | None = None) -> SolveResult:
    a_lo, a_hi, r_lo, r_hi = box
    sym_tol = max(tol, 1e-9) if sym_tol is None else sym_tol
    x = np.array(seed, dtype=float)
    d = defect_at(*x, quad_tol)
    _assert_symmetry(d, sym_tol)
    f = _reduced(d, driving)
    history = [(float(x[0]), float(x[1]), d.max)]
    for it in range(1, max_iter + 1):
        if d.max < tol:
            return SolveResult(float(x[0]), float(x[1]), d, driving, it - 1, tuple(seed), history)
        J = fd_jacobian(x[0], x[1], driving, quad_tol)
        if not np.all(np.isfinite(J)) or np.linalg.cond(J) > 1e12:
            raise JacobianSingular(f"Jacobian singular at {x}")
        step = -np.linalg.solve(J, f)
        lam = 1.0
        while True:
            y = x + lam * step
            y = np.array([min(max(y[0], a_lo), a_hi), min(max(y[1], r_lo), r_hi)])
            try:
                dy = defect_at(*y, quad_tol)
                fy = _reduced(dy, driving)
                if np.linalg.norm(fy) < (1 - 1e-4 * lam) * np.linalg.norm(f) or lam < 1e-3:
                    break
            except CurveError:
                pass
            lam *= 0.5
            if lam < 1e-4:
                raise NoRootInBox(f"line search failed from {x}")
        x, d, f = y, dy, fy
        _assert_symmetry(d, sym_tol)
        history.append((float(x[0]), float(x[1]), d.max))
    if d.max < tol:
        return SolveResult(float(x[0]), float(x[1]), d, driving, max_iter, tuple(seed), history)
    raise NoRootInBox(f"Newton did not converge from {seed} (defect {d.max:.3e})")


def _inside(box, a, rho) -> bool:
    a_lo, a_hi, r_lo, r_hi = box
    return a_lo <= a <= a_hi and r_lo <= rho <= r_hi


def solve_period_problem(box=DEFAULT_BOX, tol: float = 1e-10, scan_grid: tuple[int, int] = (24, 24),
                         seed: tuple[float, float] | None = None, quad_tol: float = 1e-12,
                         workers: int | None = None) -> SolveResult:
    """Newton on the two driving defect components, seeded from a coarse scan.

    Raises NoRootInBox when the coarse scan has no candidate cell or Newton
    leaves the box / fails to reduce the full defect below ``tol``.
    """
    _check_box(box)
    table = uniqueness_scan(box, scan_grid, tol=1e-9, workers=workers, min_grid=2)
    driving = table.driving
    seeds = []
    if seed is not None:
        seeds.append(tuple(seed))
    seeds += [(float(table.a_values[i]), float(table.rho_values[j])) for i, j in table.candidates]
    i, j = table.minimum()
    seeds.append((float(table.a_values[i]), float(table.rho_values[j])))
    last: Exception | None = None
    for s in seeds:
        try:
            res = newton(s, driving, box, tol, quad_tol)
        except (NoRootInBox, JacobianSingular) as exc:
            last = exc
            continue
        if _inside(box, res.a, res.rho) and res.defect.max < tol:
            return res
    raise NoRootInBox(f"no root found in box {box}: {last}")


def multistart(box=DEFAULT_BOX, seeds=None, driving=("A3", "B2"), tol: float = 1e-10,
               quad_tol: float = 1e-12) -> list[SolveResult]:
    if seeds is None:
        seeds = default_seeds()
    return [newton(s, driving, box, tol, quad_tol) for s in seeds]


def default_seeds() -> list[tuple[float, float]]:
    return [(0.08, 2.1), (0.05, 1.9), (0.12, 2.3), (0.06, 2.4), (0.11, 1.95)]


# --- curvature ------------------------------------------------------------------

def gauss_preimages(params: CurveParams, q: complex) -> int:
    """Number of distinct points of the curve with g = q (q generic)."""
    q = complex(q)
    r = params.R(q)
    if not np.isfinite(r) or abs(r) < 1e-14:
        raise ValueError("q is a ramification value of g")
    roots = {complex(np.round(s * np.sqrt(r), 14)) for s in (1, -1)}
    return len(roots)


def total_curvature(data: NormalizedData, grid_density: int = 64, puncture: float = 1e-3) -> float:
    """Integral of K dA over the curve minus small disks about the ends.

    The curve is covered by four disks |x| <= 1 (charts Z and U, both
    sheets).  With f = Phi3 / g the induced metric is lambda |dx|, lambda =
    |f| (1 + |g|^2) / 2, and K = -(4 |g'| / (|f| (1 + |g|^2)^2))^2; both are
    evaluated from the Weierstrass data and multiplied pointwise.  Radial
    Gauss-Legendre times a periodic trapezoid in the angle; disks of radius
    ``puncture`` are removed around E1 and E2.
    """
    from .curve import Chart

    params = data.params
    phi3 = Phi3(data)
    gx, gw = np.polynomial.legendre.leggauss(grid_density)
    n_th = 2 * grid_density
    th = 2 * np.pi * (np.arange(n_th) + 0.5) / n_th
    total = 0.0
    for chart in (Chart.Z, Chart.U):
        for end_sheet in (True, False):
            r_lo = puncture if end_sheet else 0.0
            r = r_lo + (1 - r_lo) * 0.5 * (gx + 1)
            wr = (1 - r_lo) * 0.5 * gw
            x = r[:, None] * np.exp(1j * th[None, :])
            with np.errstate(all="ignore"):
                w = np.sqrt(params.R(x, chart)) * (1.0 if end_sheet else -1.0)
                if chart == Chart.Z:
                    g, dg = x, np.ones_like(x)
                else:
                    g, dg = 1.0 / x, -1.0 / x ** 2
                f = phi3.coeff(x, w, chart) / g
                lam = 0.5 * np.abs(f) * (1 + np.abs(g) ** 2)
                K = -(4 * np.abs(dg) / (np.abs(f) * (1 + np.abs(g) ** 2) ** 2)) ** 2
            dens = K * lam ** 2
            total += float(np.sum(dens * r[:, None] * wr[:, None]) * (2 * np.pi / n_th))
    return total

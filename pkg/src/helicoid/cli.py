"""Command-line interface: solve, verify, mesh, levels, scan.

Exit codes: 0 success, 1 some verification check failed, 2 no root in the
box, 3 numerical failure (including a tolerance below the quadrature floor).
Reports are JSON with every float written to 17 significant digits; wall
time goes to stderr (or into the report with ``--timing``) so that identical
flags give byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .curve import CurveError, CurveParams, GeneralCurveParams, marked_points, random_points
from .forms import (
    SYMMETRY_TABLE,
    FormError,
    GaussFunction,
    Phi1,
    Phi2,
    Phi3,
    Tau,
    conformality_defect,
    default_residue_radius,
    gauss_symmetry_defect,
    lemma3_residual,
    local_order,
    normalize_residue,
    pullback_defect,
    residue,
)
from .periods import (
    DEFAULT_BOX,
    NoRootInBox,
    PeriodError,
    default_seeds,
    gauss_preimages,
    newton,
    period_defect,
    period_stability,
    solve_period_problem,
    total_curvature,
    uniqueness_scan,
)
from . import surface as surf

log = logging.getLogger("helicoid")

SCHEMA = 1
QUADRATURE_FLOOR = 1e-13
DRIVING = ("A3", "B2")

EXIT_OK, EXIT_FAIL, EXIT_NO_ROOT, EXIT_NUMERIC = 0, 1, 2, 3


# --- serialization ---------------------------------------------------------------

def _num(x: float) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    return format(x, ".17g")


def to_json(obj, indent: int = 0) -> str:
    """Deterministic JSON; floats at 17 significant digits, complex as {"re", "im"}."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(float(obj))
    if isinstance(obj, (complex, np.complexfloating)):
        return to_json({"re": float(obj.real), "im": float(obj.imag)}, indent)
    if isinstance(obj, str):
        return '"' + obj.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{to_json(str(k))}: {to_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            return "[]"
        return "[\n" + ",\n".join(pad + to_json(v, indent + 1) for v in seq) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_text(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


# --- report ---------------------------------------------------------------------

@dataclass
class Check:
    name: str
    measured: object
    tolerance: object
    status: str                 # "pass", "fail" or "skipped (unsolved)"
    note: str = ""

    def as_dict(self) -> dict:
        d = {"name": self.name, "measured": self.measured, "tolerance": self.tolerance, "status": self.status}
        if self.note:
            d["note"] = self.note
        return d


@dataclass
class RunReport:
    command: list[str]
    parameters: dict = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)
    result: dict = field(default_factory=dict)
    exit_code: int = EXIT_OK
    diagnostic: str = ""
    wall_time: float | None = None

    def add(self, name, measured, tol, ok: bool, note: str = "") -> Check:
        c = Check(name, measured, tol, "pass" if ok else "fail", note)
        self.checks.append(c)
        return c

    def skip(self, name, tol, note: str = "") -> None:
        self.checks.append(Check(name, None, tol, "skipped (unsolved)", note))

    @property
    def failed(self) -> list[str]:
        return [c.name for c in self.checks if c.status == "fail"]

    def as_dict(self) -> dict:
        d = {
            "schema": SCHEMA,
            "version": __version__,
            "command": self.command,
            "parameters": self.parameters,
            "result": self.result,
            "checks": [c.as_dict() for c in self.checks],
            "status": "pass" if self.exit_code == EXIT_OK else "fail",
            "exit_code": self.exit_code,
        }
        if self.diagnostic:
            d["diagnostic"] = self.diagnostic
        if self.wall_time is not None:
            d["meta"] = {"wall_time_s": self.wall_time}
        return d

    def write(self, path: str | None) -> None:
        if path:
            write_text(path, to_json(self.as_dict()) + "\n")


# --- parameter handling ------------------------------------------------------------

def solved_parameters(tol: float = 1e-10) -> tuple[float, float]:
    """Root of the period problem by Newton from the first default seed."""
    res = newton(default_seeds()[0], DRIVING, DEFAULT_BOX, tol)
    return res.a, res.rho


def _params_from(args) -> tuple[CurveParams, bool]:
    if getattr(args, "solved", False):
        a, rho = solved_parameters()
        return CurveParams(a, rho), True
    if args.a is None or args.rho is None:
        raise SystemExit("either --solved or both --a and --rho are required")
    return CurveParams(args.a, args.rho), False


def _add_param_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--solved", action="store_true", help="use the solved period-problem parameters")
    p.add_argument("--a", type=float)
    p.add_argument("--rho", type=float)


# --- solve -----------------------------------------------------------------------

def cmd_solve(args, report: RunReport) -> int:
    box = tuple(args.box)
    report.parameters = {"box": list(box), "tol": args.tol}
    if args.tol < QUADRATURE_FLOOR:
        report.diagnostic = f"tolerance {args.tol:.3e} is below the quadrature floor {QUADRATURE_FLOOR:.1e}"
        return EXIT_NUMERIC
    res = solve_period_problem(box, tol=0.1 * args.tol)
    data = normalize_residue(CurveParams(res.a, res.rho))
    starts = []
    if not args.no_multistart:
        lo_a, hi_a, lo_r, hi_r = box
        for s in default_seeds():
            if lo_a < s[0] < hi_a and lo_r < s[1] < hi_r:
                try:
                    r = newton(s, DRIVING, box, 0.1 * args.tol)
                    starts.append({"seed": list(s), "a": r.a, "rho": r.rho, "defect_max": r.defect.max})
                except PeriodError as exc:
                    starts.append({"seed": list(s), "error": str(exc)})
    sols = [(s["a"], s["rho"]) for s in starts if "a" in s]
    agreement = max((math.hypot(p[0] - q[0], p[1] - q[1]) for p in sols for q in sols), default=None)
    report.result = {
        "a": res.a,
        "rho": res.rho,
        "defect": res.defect.as_dict(),
        "defect_signed": list(res.defect.signed),
        "defect_max": res.defect.max,
        "driving": list(res.driving),
        "iterations": res.iterations,
        "seed": list(res.seed),
        "multistart": starts,
        "multistart_agreement": agreement,
        "c_norm": data.c_norm,
        "c_norm_ratio_to_displayed_constant": data.ratio,
    }
    report.add("defect_max", res.defect.max, args.tol, res.defect.max < args.tol)
    if agreement is not None:
        report.add("multistart_agreement", agreement, 1e-7, agreement < 1e-7)
    if res.defect.max >= args.tol:
        report.diagnostic = "solver stopped above the requested tolerance"
        return EXIT_NUMERIC
    return EXIT_OK


# --- verify ------------------------------------------------------------------------

EXPECTED_ORDERS = {
    # point: (order of g, order of Phi3)
    "E1": (1, -1), "V1": (1, 1), "E2": (-1, -1), "V2": (-1, 1),
}


def pointwise_checks(report: RunReport, data, samples: int, seed: int) -> None:
    params = data.params
    m = marked_points(params)
    phi3 = Phi3(data)
    for name, p, target in (("residue_E1", m.E1, 1j), ("residue_E2", m.E2, -1j)):
        r0 = default_residue_radius(params, p)
        vals = [residue(phi3, p, r0 * s) for s in (1.0, 0.5)]
        report.add(name, abs(vals[0] - target), 1e-8, abs(vals[0] - target) <= 1e-8,
                   note=f"value {vals[0].real:.12g}{vals[0].imag:+.12g}i")
        report.add(name + "_radius_independence", abs(vals[0] - vals[1]), 1e-8, abs(vals[0] - vals[1]) <= 1e-8)

    mism = 0
    orders = {}
    for name, (og, o3) in EXPECTED_ORDERS.items():
        p = getattr(m, name)
        got_g = local_order(GaussFunction(params), p)
        got_3 = local_order(phi3, p)
        orders[name] = {"g": got_g, "phi3": got_3}
        mism += (got_g != og) + (got_3 != o3)
    report.add("divisor_orders", mism, 0, mism == 0, note=to_json(orders).replace("\n", "").replace("  ", " "))
    coincide = sum(abs(v["g"]) != abs(v["phi3"]) for v in orders.values())
    report.add("gauss_phi3_orders_coincide", coincide, 0, coincide == 0)

    rng = np.random.default_rng(seed)
    pts = random_points(params, samples, rng)
    forms = {"phi1": Phi1(data), "phi2": Phi2(data), "phi3": phi3, "tau": Tau(params)}
    worst = 0.0
    for p in pts:
        for fname, inv, sign in SYMMETRY_TABLE:
            worst = max(worst, pullback_defect(forms[fname], p, inv, sign))
    report.add("pullback_symmetries", worst, 1e-10, worst <= 1e-10)
    gs = max(gauss_symmetry_defect(p, inv) for p in pts for inv in ("S3", "S"))
    report.add("gauss_symmetries", gs, 1e-10, gs <= 1e-10)
    conf = max(conformality_defect(data, p) for p in pts)
    report.add("conformality", conf, 1e-12, conf <= 1e-12)

    l3 = lemma3_residual(params)
    report.add("reality_residual_real", l3, 1e-10, l3 < 1e-10)
    l3c = lemma3_residual(GeneralCurveParams(complex(params.a, 0.2), params.rho))
    report.add("reality_residual_complex", l3c, 1e-4, l3c > 1e-4, note="Im a = 0.2; must exceed the tolerance")

    tc = total_curvature(data)
    rel = abs(tc / (-8 * math.pi) - 1)
    report.add("total_curvature", rel, 0.01, rel <= 0.01, note=f"integral of K dA = {tc:.12g}")
    deg = gauss_preimages(params, complex(0.3, 0.7))
    report.add("gauss_degree", deg, 2, deg == 2)

    loc = surf.gauss_locus(data)
    n_ram = len(loc.ramification_on_locus)
    report.add("gauss_locus_ramification_points", n_ram, 2, n_ram == 2)
    strict = len(loc.component("M")["points"]) > 0 and loc.component("L")["w_real"]
    report.add("gauss_locus_strictly_contains_L", int(strict), 1, strict)
    args_all = np.concatenate([c["g_args"] for c in loc.components])
    report.add("gauss_locus_surjects", int(surf.surjects_on_circle(args_all)), 1, surf.surjects_on_circle(args_all))
    on_l = surf.surjects_on_circle(loc.component("L")["g_args"])
    lo, hi = loc.component("L")["arc"]
    report.add("gauss_L_surjects", int(on_l), 1, on_l,
               note=f"g(L) is the arc of arguments [{lo:.6f}, {hi:.6f}] covered twice")


SOLVED_CHECKS = (
    "period_defect", "period_stability", "axis_containment", "horizontal_line", "vertical_period",
    "lattice_closure", "symmetry_S3_extrinsic", "symmetry_S_extrinsic", "symmetry_composition",
    "levels_k0_structure", "levels_k0_crossing_angle", "levels_x3_V1_V2", "levels_generic",
    "end_a0_agreement", "end_c_zero", "end_c_antisymmetric", "end_direction",
    "mean_curvature_order", "mesh_conformality", "vertex_normals",
)


def solved_checks(report: RunReport, data, grid=(81, 128), study_grid=(161, 256), puncture=0.02,
                  n_levels: int = 20, seed: int = 0) -> None:
    d = period_defect(data, 1e-12)
    report.add("period_defect", d.max, 1e-8, d.max < 1e-8)
    st = period_stability(data)
    worst = max(st.values())
    report.add("period_stability", worst, 1e-9, worst < 1e-9)

    mesh = surf.build_mesh(data, tuple(grid), puncture)
    sc = mesh.scale
    ax = surf.axis_deviation(mesh)
    report.add("axis_containment", ax, 1e-6 * sc, ax < 1e-6 * sc)
    hl = surf.horizontal_line_deviation(mesh)
    report.add("horizontal_line", hl, 1e-6 * sc, hl < 1e-6 * sc)
    vp = surf.vertical_period(mesh)
    report.add("vertical_period", abs(vp - 2 * math.pi), 1e-6, abs(vp - 2 * math.pi) < 1e-6,
               note=f"recovered {vp:.15g}")
    lc = surf.periodic_closure_defect(mesh)
    report.add("lattice_closure", lc, 1e-6 * sc, lc < 1e-6 * sc)
    sym = surf.symmetry_check_extrinsic(mesh, 200, np.random.default_rng(seed))
    report.add("symmetry_S3_extrinsic", sym.s3, 1e-6, sym.s3 < 1e-6)
    report.add("symmetry_S_extrinsic", sym.s, 1e-6, sym.s < 1e-6)
    report.add("symmetry_composition", sym.composition, 1e-6, sym.composition < 1e-6)

    k0lev = surf.level_curves_k0(mesh)
    n_div, n_cl = k0lev.count("diverging"), k0lev.count("closed")
    report.add("levels_k0_structure", abs(n_div - 1) + abs(n_cl - 1), 0, (n_div, n_cl) == (1, 1),
               note=f"{n_div} diverging, {n_cl} closed")
    ang = max(abs(surf.crossing_angle(k0lev, v) - 90.0) for v in (mesh.V1, mesh.V2))
    report.add("levels_k0_crossing_angle", ang, 2.0, ang <= 2.0, note="degrees from 90")
    dx3 = abs(surf._mod_lattice(np.array([mesh.positions[mesh.V1] - mesh.positions[mesh.V2]]))[0, 2])
    report.add("levels_x3_V1_V2", dx3, 1e-6, dx3 < 1e-6)

    rng = np.random.default_rng(seed)
    k0 = surf.k0_level(mesh)
    bad = 0
    ends = {e: surf.end_asymptotics(data, e) for e in ("E1", "E2")}
    dir_err = 0.0
    for k in rng.uniform(-math.pi, math.pi, n_levels):
        if abs(surf._mod_lattice(np.array([[0, 0, k - k0]]))[0, 2]) < 1e-3:
            continue
        lev = surf.level_curves(mesh, k)
        bad += (lev.count("diverging"), lev.count("closed"), len(lev.components)) != (1, 0, 1)
        dir_err = max(dir_err, max(surf.level_end_directions(mesh, lev, ends)))
    report.add("levels_generic", bad, 0, bad == 0, note=f"{n_levels} random levels")

    agree = max(abs(e.a0 - e.a0_local) for e in ends.values())
    report.add("end_a0_agreement", agree, 1e-6, agree < 1e-6)
    cmax = max(abs(e.c) for e in ends.values())
    report.add("end_c_zero", cmax, 1e-6, cmax < 1e-6,
               note="axis offset of the end relative to the symmetry axis through the base point")
    anti = abs(ends["E1"].c + ends["E2"].c)
    report.add("end_c_antisymmetric", anti, 1e-6, anti < 1e-6)
    report.add("end_direction", dir_err, 1.0, dir_err < 1.0, note="degrees, lines through the fitted c")

    reports, orders = surf.refinement_study(data, (tuple(grid), tuple(study_grid)), puncture)
    order = orders[-1]
    report.add("mean_curvature_order", order, 1.5, order >= 1.5,
               note="max |H| h: " + ", ".join(f"{r.max_H_h:.6g}" for r in reports))
    conf = surf.conformality_at_vertices(mesh)
    report.add("mesh_conformality", conf, 1e-12, conf <= 1e-12)
    fine = surf.build_mesh(data, tuple(study_grid), puncture)
    nd = surf.normal_defect(fine, branch_radius=0.5)
    report.add("vertex_normals", nd, 1e-3, nd < 1e-3, note="radians, chordal exclusion 0.5 about ramification values")


def cmd_verify(args, report: RunReport) -> int:
    params, solved_flag = _params_from(args)
    data = normalize_residue(params)
    if args.cnorm_scale != 1.0:
        data = data.scaled(args.cnorm_scale)
    report.parameters = {"a": params.a, "rho": params.rho, "solved_flag": solved_flag,
                         "cnorm_scale": args.cnorm_scale, "samples": args.samples, "seed": args.seed}
    pointwise_checks(report, data, args.samples, args.seed)
    d = period_defect(data, 1e-12)
    solved = d.max < 1e-8
    report.result = {"defect": d.as_dict(), "defect_max": d.max, "solved": solved, "c_norm": data.c_norm}
    if solved:
        solved_checks(report, data, args.grid, args.study_grid, args.puncture, seed=args.seed)
    else:
        for name in SOLVED_CHECKS:
            report.skip(name, None)
    return EXIT_FAIL if report.failed else EXIT_OK


# --- mesh / levels / scan -------------------------------------------------------------

def write_obj(path: str, mesh) -> None:
    lines = [f"# helicoid mesh: {mesh.n_vertices} vertices, {len(mesh.faces)} faces"]
    for x, y, z in mesh.positions:
        lines.append(f"v {_num(float(x))} {_num(float(y))} {_num(float(z))}")
    for f in mesh.faces:
        lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    write_text(path, "\n".join(lines) + "\n")


def read_obj(path: str) -> tuple[np.ndarray, np.ndarray]:
    verts, faces = [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                verts.append([float(t) for t in parts[1:4]])
            elif parts[0] == "f":
                faces.append([int(t.split("/")[0]) - 1 for t in parts[1:4]])
    return np.array(verts), np.array(faces, dtype=np.int64)


CURVES_HEADER = ["curve", "index", "x1", "x2", "x3"]
LEVELS_HEADER = ["level", "component", "kind", "point", "x1", "x2", "x3"]
SCAN_HEADER = ["a", "rho", "d_A1", "d_A2", "d_A3", "d_B1", "d_B2", "d_B3", "norm", "candidate"]


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_num(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _polyline_rows(name: str, P: np.ndarray, order_by: int):
    idx = np.argsort(P[:, order_by], kind="stable")
    for n, i in enumerate(idx):
        yield [name, n, *P[i]]


def cmd_mesh(args, report: RunReport) -> int:
    params, _ = _params_from(args)
    data = normalize_residue(params)
    mesh = surf.build_mesh(data, tuple(args.grid), args.puncture)
    write_obj(args.out, mesh)
    ax = surf.axis_deviation(mesh)
    report.parameters = {"a": params.a, "rho": params.rho, "grid": list(args.grid), "puncture": args.puncture}
    report.result = {"vertices": mesh.n_vertices, "faces": len(mesh.faces),
                     "face_circulation": mesh.face_circulation, "axis_deviation": ax}
    if args.csv:
        rows = list(_polyline_rows("axis", mesh.positions[surf.s3_fixed_vertices(mesh)], 2))
        for n, line in enumerate(surf.horizontal_lines(mesh)):
            rows += list(_polyline_rows(f"horizontal_{n}", mesh.positions[line["vertices"]], 1))
        _write_csv(args.csv, CURVES_HEADER, rows)
    return EXIT_OK


def cmd_levels(args, report: RunReport) -> int:
    params, _ = _params_from(args)
    data = normalize_residue(params)
    mesh = surf.build_mesh(data, tuple(args.grid), args.puncture)
    k0 = surf.k0_level(mesh)
    start = k0 if args.k0 else args.k
    levels = [start + 2 * math.pi * j / args.n_levels for j in range(args.n_levels)]
    rows, summary = [], []
    for j, k in enumerate(levels):
        at_k0 = args.k0 and j == 0
        lev = surf.level_curves_k0(mesh) if at_k0 else surf.level_curves(mesh, k)
        summary.append({"level": k, "diverging": lev.count("diverging"), "closed": lev.count("closed"),
                        "open": lev.count("open")})
        for cid, comp in enumerate(lev.components):
            for n, p in enumerate(comp.points):
                rows.append([float(k), cid, comp.kind, n, *p])
    _write_csv(args.out, LEVELS_HEADER, rows)
    report.parameters = {"a": params.a, "rho": params.rho, "grid": list(args.grid), "k0": k0}
    report.result = {"levels": summary}
    return EXIT_OK


def cmd_scan(args, report: RunReport) -> int:
    box = tuple(args.box)
    if min(args.grid) < 50:
        report.diagnostic = f"scan grid {args.grid[0]}x{args.grid[1]} is below the 50x50 minimum"
        return EXIT_NUMERIC
    tab = uniqueness_scan(box, tuple(args.grid))
    cand = set(tab.candidates)
    rows = []
    for i, a in enumerate(tab.a_values):
        for j, r in enumerate(tab.rho_values):
            s = tab.signed[i, j]
            rows.append([float(a), float(r), *[float(v) for v in s], float(np.linalg.norm(s)),
                         int((i, j) in cand)])
    _write_csv(args.out, SCAN_HEADER, rows)
    report.parameters = {"box": list(box), "grid": list(args.grid)}
    report.result = {"candidates": [list(c) for c in tab.candidates], "n_candidates": tab.n_candidates,
                     "driving": list(tab.driving), "missing": tab.missing,
                     "continuity_ratio": tab.continuity_ratio()}
    report.add("one_candidate_cell", tab.n_candidates, 1, tab.n_candidates == 1)
    return EXIT_OK if tab.n_candidates == 1 else EXIT_FAIL


# --- entry point ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="helicoid", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("--timing", action="store_true", help="include wall time in the JSON report")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve the period problem")
    p.add_argument("--box", type=float, nargs=4, default=list(DEFAULT_BOX),
                   metavar=("A_LO", "A_HI", "RHO_LO", "RHO_HI"))
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--no-multistart", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="run the invariant suite")
    _add_param_flags(p)
    p.add_argument("--out")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cnorm-scale", type=float, default=1.0, help="multiply c_norm (fault injection)")
    p.add_argument("--grid", type=int, nargs=2, default=[81, 128], metavar=("NR", "NTHETA"))
    p.add_argument("--study-grid", type=int, nargs=2, default=[161, 256], metavar=("NR", "NTHETA"))
    p.add_argument("--puncture", type=float, default=0.02)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("mesh", help="write the fundamental piece as OBJ")
    _add_param_flags(p)
    p.add_argument("--grid", type=int, nargs=2, default=[41, 64], metavar=("NR", "NTHETA"))
    p.add_argument("--puncture", type=float, default=0.02)
    p.add_argument("--out", required=True)
    p.add_argument("--csv")
    p.add_argument("--report")
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("levels", help="write horizontal level curves as CSV")
    _add_param_flags(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--k", type=float)
    g.add_argument("--k0", action="store_true")
    p.add_argument("--n-levels", type=int, default=1)
    p.add_argument("--grid", type=int, nargs=2, default=[41, 64], metavar=("NR", "NTHETA"))
    p.add_argument("--puncture", type=float, default=0.02)
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_levels)

    p = sub.add_parser("scan", help="uniqueness scan of the period defect")
    p.add_argument("--box", type=float, nargs=4, default=list(DEFAULT_BOX),
                   metavar=("A_LO", "A_HI", "RHO_LO", "RHO_HI"))
    p.add_argument("--grid", type=int, nargs=2, default=[100, 100], metavar=("NA", "NRHO"))
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(func=cmd_scan)
    return ap


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    report = RunReport(command=argv)
    out = getattr(args, "out", None) if args.command in ("solve", "verify") else getattr(args, "report", None)
    t0 = time.perf_counter()
    try:
        code = args.func(args, report)
    except NoRootInBox as exc:
        report.diagnostic = f"no root: {exc}"
        code = EXIT_NO_ROOT
    except (CurveError, FormError, FloatingPointError, np.linalg.LinAlgError) as exc:
        report.diagnostic = f"numerical failure: {type(exc).__name__}: {exc}"
        code = EXIT_NUMERIC
    report.exit_code = code
    wall = time.perf_counter() - t0
    if args.timing:
        report.wall_time = wall
    report.write(out)
    if report.diagnostic:
        print(report.diagnostic, file=sys.stderr)
    for name in report.failed:
        print(f"check failed: {name}", file=sys.stderr)
    print(f"{args.command}: exit {code} in {wall:.1f} s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())

"""Surface generation from the Weierstrass data and geometric verification.

The mesh is a polar grid in z lifted to both sheets of the curve.  Rings are
log-spaced with breaks at r_min, a, 1, 1/a, 1/r_min and angles have breaks at
0, +-rho, pi, so every ramification point is a grid node (one merged vertex)
and every lifted triangle is sheet-unambiguous.  The E-sheet has holes of
radius r_min around the ends; on the V-sheet the inner and outer rings are
closed by fans around V1 and V2.

Positions are X = Re of the integral of (Phi1, Phi2, Phi3) from the base point
along a breadth-first spanning tree.  Every edge integral is kept so that
local computations (level curves, curvature, normals) use edge vectors and
never see the lattice jumps on co-tree edges.
"""

from __future__ import annotations

import cmath
import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .curve import (
    INF,
    Chart,
    CurveError,
    CurvePoint,
    apply_s,
    apply_s3,
    chart_for,
    marked_points,
    ramification_points,
    s3_fixed_point,
)
from .forms import NormalizedData, Phi1, Phi2, Phi3, conformality_defect
from .transport import (
    _GL_W,
    _GL_X,
    Line,
    Arc,
    build_path,
    continue_rows,
    cumulative_integrals,
)

log = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


class SurfaceError(CurveError):
    pass


class TreeInconsistency(SurfaceError):
    pass


class FitError(SurfaceError):
    pass


# --- grid ---------------------------------------------------------------------

def _split(total: int, lengths: list[float]) -> list[int]:
    """Distribute ``total`` intervals over segments proportionally, at least one each."""
    if total < len(lengths):
        raise ValueError("grid too coarse for the mandatory break points")
    raw = np.array(lengths) / sum(lengths) * total
    n = np.maximum(1, np.floor(raw).astype(int))
    while n.sum() < total:
        n[np.argmax(raw - n)] += 1
    while n.sum() > total:
        k = int(np.argmax(np.where(n > 1, n - raw, -np.inf)))
        n[k] -= 1
    return [int(v) for v in n]


def radial_nodes(a: float, r_min: float, nr: int) -> np.ndarray:
    """Log-spaced rings, symmetric under r -> 1/r, with rings at a, 1 and 1/a."""
    if nr % 2 == 0 or nr < 5:
        raise ValueError("nr must be odd and at least 5 (a ring is needed at |z| = 1)")
    if not (0 < r_min < a):
        raise ValueError(f"puncture radius {r_min} must lie in (0, a) with a = {a}")
    l0, l1 = math.log(1 / r_min), math.log(1 / a)
    n0, n1 = _split((nr - 1) // 2, [l0 - l1, l1])
    half = np.concatenate([np.linspace(-l0, -l1, n0 + 1)[:-1], np.linspace(-l1, 0.0, n1 + 1)])
    logs = np.concatenate([half, -half[-2::-1]])
    return np.exp(logs)


def angular_nodes(rho: float, nth: int) -> np.ndarray:
    """Angles in [-pi, pi) with nodes at 0, +-rho and -pi, symmetric under theta -> -theta."""
    if nth % 2 or nth < 4:
        raise ValueError("ntheta must be even and at least 4")
    n0, n1 = _split(nth // 2, [rho, math.pi - rho])
    half = np.concatenate([np.linspace(0.0, rho, n0 + 1)[:-1], np.linspace(rho, math.pi, n1 + 1)])
    th = np.concatenate([-half[::-1], half[1:-1]])
    return np.sort(th)


# --- mesh ---------------------------------------------------------------------

@dataclass
class SurfaceMesh:
    data: NormalizedData
    radii: np.ndarray
    angles: np.ndarray
    z: np.ndarray                 # base-sphere value per vertex (INF at V2)
    w: np.ndarray                 # sheet value (0 or INF at ramification points)
    node: np.ndarray              # (i_ring, j_angle), (-1, -1) at V1, (-2, -2) at V2
    faces: np.ndarray             # (n_faces, 3)
    edges: np.ndarray             # (n_edges, 2), integral runs edges[k, 0] -> edges[k, 1]
    edge_int: np.ndarray          # (n_edges, 3) complex
    F: np.ndarray                 # (n_vertices, 3) complex tree integrals
    base: int
    V1: int
    V2: int
    parent_edge: np.ndarray
    face_circulation: float
    cotree_defect: np.ndarray     # (n_cotree, 3) real closure of non-tree edges
    integration_tol: float = 1e-12
    _edge_index: dict = field(default_factory=dict, repr=False)
    _node_vertices: dict = field(default_factory=dict, repr=False)

    @property
    def positions(self) -> np.ndarray:
        return self.F.real

    @property
    def n_vertices(self) -> int:
        return len(self.z)

    @property
    def basePoint(self) -> CurvePoint:
        return self.point(self.base)

    def point(self, v: int) -> CurvePoint:
        z = self.z[v]
        return CurvePoint(complex(z), complex(self.w[v]), chart_for(z))

    @property
    def vertices(self) -> list[tuple[CurvePoint, np.ndarray]]:
        return [(self.point(v), self.positions[v]) for v in range(self.n_vertices)]

    @property
    def scale(self) -> float:
        """Typical size of the fundamental piece (median distance to the axis, at least 1)."""
        return max(1.0, float(np.median(np.linalg.norm(self.positions[:, :2], axis=1))))

    def edge_vector(self, u: int, v: int) -> np.ndarray:
        k, s = self._edge_index[(u, v)]
        return s * self.edge_int[k]

    def is_branch(self) -> np.ndarray:
        return (self.w == 0) | np.isinf(self.w)

    def boundary_vertices(self) -> np.ndarray:
        edges_count: dict = {}
        for f in self.faces:
            for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
                key = (min(a, b), max(a, b))
                edges_count[key] = edges_count.get(key, 0) + 1
        mark = np.zeros(self.n_vertices, dtype=bool)
        for (a, b), c in edges_count.items():
            if c == 1:
                mark[a] = mark[b] = True
        return mark

    def image_vertex(self, v: int, involution: str) -> int:
        """Vertex of the mesh over the image of v under S3 or S."""
        p = self.point(v)
        q = apply_s3(p) if involution == "S3" else apply_s(p)
        i, j = self.node[v]
        if v == self.V1:
            return self.V2 if involution == "S3" else self.V1
        if v == self.V2:
            return self.V1 if involution == "S3" else self.V2
        nr = len(self.radii)
        if involution == "S3":
            ni, nj = nr - 1 - i, j
        else:
            ni, nj = i, self._mirror_angle(j)
        cands = self._node_vertices[(ni, nj)]
        if len(cands) == 1:
            return cands[0]
        wq = q.w
        return min(cands, key=lambda c: abs(self.w[c] - wq))

    def _mirror_angle(self, j: int) -> int:
        th = -self.angles[j]
        if th >= math.pi - 1e-12:
            th -= TWO_PI
        return int(np.argmin(np.abs(self.angles - th)))


def build_mesh(data: NormalizedData, grid: tuple[int, int] = (41, 64), puncture_radius: float = 0.02,
               check_tol: float = 1e-9) -> SurfaceMesh:
    params = data.params
    a, rho = params.a, params.rho
    radii = radial_nodes(a, puncture_radius, grid[0])
    angles = angular_nodes(rho, grid[1])
    nr, nth = len(radii), len(angles)
    i_one = int(np.argmin(np.abs(radii - 1.0)))
    i_a, i_ia = int(np.argmin(np.abs(radii - a))), int(np.argmin(np.abs(radii - 1 / a)))
    j0 = int(np.argmin(np.abs(angles)))
    jr, jmr = int(np.argmin(np.abs(angles - rho))), int(np.argmin(np.abs(angles + rho)))
    jpi = int(np.argmin(np.abs(angles + math.pi)))
    branch_nodes = {(i_a, j0): 0j, (i_ia, j0): 0j, (i_one, jr): INF, (i_one, jmr): INF}

    zs, ws, nodes = [], [], []
    node_vertices: dict = {}
    for i in range(nr):
        ZZ = radii[i] * np.exp(1j * angles)
        for j in range(nth):
            z = complex(ZZ[j])
            if (i, j) in branch_nodes:
                zb = params.branch_values()[[(i_a, j0), (i_ia, j0), (i_one, jr), (i_one, jmr)].index((i, j))]
                node_vertices[(i, j)] = [len(zs)]
                zs.append(zb)
                ws.append(branch_nodes[(i, j)])
                nodes.append((i, j))
                continue
            x, ch = (z, Chart.Z) if abs(z) <= 2 else (1 / z, Chart.U)
            r = complex(np.sqrt(params.R(x, ch)))
            node_vertices[(i, j)] = [len(zs), len(zs) + 1]
            for s in (1, -1):
                zs.append(z)
                ws.append(s * r)
                nodes.append((i, j))
    m = marked_points(params)
    V1 = len(zs)
    zs.append(0j), ws.append(m.V1.w), nodes.append((-1, -1))
    V2 = len(zs)
    zs.append(INF), ws.append(m.V2.w), nodes.append((-2, -2))
    z_arr = np.array(zs, dtype=complex)
    w_arr = np.array(ws, dtype=complex)

    def same_sheet(v_from: int, cands: list[int]) -> int:
        if len(cands) == 1:
            return cands[0]
        w0 = w_arr[v_from]
        if w0 == 0 or cmath.isinf(w0):
            raise SurfaceError("cannot continue from a ramification vertex")
        d = [abs(w_arr[c] - w0) for c in cands]
        k = int(np.argmin(d))
        margin = (max(d) - min(d)) / (max(d) + min(d))
        if margin < 0.1:
            raise SurfaceError(f"ambiguous sheet between neighbouring grid nodes (margin {margin:.3f})")
        return cands[k]

    faces = []
    for i in range(nr - 1):
        for j in range(nth):
            j1 = (j + 1) % nth
            for tri in (((i, j), (i + 1, j), (i + 1, j1)), ((i, j), (i + 1, j1), (i, j1))):
                # start from a non-branch corner
                order = sorted(range(3), key=lambda t: len(node_vertices[tri[t]]) == 1)
                start = tri[order[0]]
                for v0 in node_vertices[start]:
                    lift = {order[0]: v0}
                    for t in order[1:]:
                        lift[t] = same_sheet(v0, node_vertices[tri[t]])
                    face = (lift[0], lift[1], lift[2])
                    faces.append(face)
    # deduplicate faces that coincide (both lifts through a branch corner are distinct anyway)
    fans_inner = [same_sheet_to(w_arr, node_vertices[(0, j)], m.V1.w) for j in range(nth)]
    fans_outer = [same_sheet_to(w_arr, node_vertices[(nr - 1, j)], m.V2.w) for j in range(nth)]
    for j in range(nth):
        j1 = (j + 1) % nth
        faces.append((V1, fans_inner[j], fans_inner[j1]))
        faces.append((V2, fans_outer[j1], fans_outer[j]))
    faces = np.array(faces, dtype=np.int64)
    if len({tuple(sorted(f)) for f in faces.tolist()}) != len(faces):
        raise SurfaceError("duplicate faces in the lifted mesh")

    # unique edges
    edge_index: dict = {}
    edges = []
    for f in faces:
        for u, v in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            key = (min(u, v), max(u, v))
            if key not in edge_index:
                edge_index[key] = len(edges)
                edges.append(key)
    edges = np.array(edges, dtype=np.int64)
    edge_int = integrate_edges(data, z_arr, w_arr, edges, V1, V2)

    eidx = {}
    for k, (u, v) in enumerate(edges):
        eidx[(u, v)] = (k, 1.0)
        eidx[(v, u)] = (k, -1.0)

    # face circulation (sheet-tracking audit)
    circ = 0.0
    for f in faces:
        tot = sum(eidx[(u, v)][1] * edge_int[eidx[(u, v)][0]] for u, v in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])))
        scale = max(1.0, float(np.max(np.abs([edge_int[eidx[(u, v)][0]] for u, v in ((f[0], f[1]), (f[1], f[2]))]))))
        circ = max(circ, float(np.max(np.abs(tot))) / scale)
    if circ > check_tol:
        raise TreeInconsistency(f"face circulation {circ:.3e} exceeds {check_tol:.1e}")

    # base point and BFS tree
    bp = s3_fixed_point(params)
    base = same_sheet_to(w_arr, node_vertices[(i_one, jpi)], bp.w)
    n = len(z_arr)
    adj: list[list[int]] = [[] for _ in range(n)]
    for u, v in edges:
        adj[u].append(v)
        adj[v].append(u)
    F = np.full((n, 3), np.nan, dtype=complex)
    parent_edge = np.full(n, -1, dtype=np.int64)
    F[base] = 0.0
    queue = deque([base])
    seen = np.zeros(n, dtype=bool)
    seen[base] = True
    tree = set()
    while queue:
        u = queue.popleft()
        for v in sorted(adj[u]):
            if not seen[v]:
                k, s = eidx[(u, v)]
                F[v] = F[u] + s * edge_int[k]
                parent_edge[v] = k
                tree.add(k)
                seen[v] = True
                queue.append(v)
    if not seen.all():
        raise SurfaceError("mesh is disconnected")
    cot = [k for k in range(len(edges)) if k not in tree]
    cotree = np.array([(F[edges[k, 1]] - F[edges[k, 0]] - edge_int[k]).real for k in cot]).reshape(-1, 3)

    mesh = SurfaceMesh(data, radii, angles, z_arr, w_arr, np.array(nodes), faces, edges, edge_int, F,
                       base, V1, V2, parent_edge, circ, cotree)
    mesh._edge_index = eidx
    mesh._node_vertices = node_vertices
    return mesh


def same_sheet_to(w_arr, cands, w_target) -> int:
    if len(cands) == 1:
        return cands[0]
    return min(cands, key=lambda c: abs(w_arr[c] - w_target))


# --- edge integrals -----------------------------------------------------------

def _chart_coords(z, chart):
    return z if chart == Chart.Z else 1.0 / z


def integrate_edges(data: NormalizedData, z: np.ndarray, w: np.ndarray, edges: np.ndarray,
                    V1: int, V2: int, spacing: float = 0.25) -> np.ndarray:
    """Integrals of (Phi1, Phi2, Phi3) along every mesh edge.

    Straight segments in the Z chart (or the U chart when an endpoint has
    |z| > 2); edges ending at a ramification point use x = x_b + s^2 (x0 - x_b)
    to remove the square-root singularity.  Each edge is split into
    ceil(length / (spacing * distance to the singular set)) Gauss-Legendre
    panels; w is continued from the regular endpoint.
    """
    params = data.params
    forms = [Phi1(data), Phi2(data), Phi3(data)]
    out = np.zeros((len(edges), 3), dtype=complex)
    branch = (w == 0) | np.isinf(w)
    jobs: dict = {}
    for k, (u, v) in enumerate(edges):
        sign = 1.0
        if branch[u] or u in (V1, V2):
            u, v, sign = v, u, -1.0
        if branch[u]:
            raise SurfaceError("edge joins two ramification points")
        zu, zv = z[u], z[v]
        use_u = np.isinf(zv) or abs(zu) > 2 or abs(zv) > 2 or v == V2
        chart = Chart.U if use_u else Chart.Z
        xu = _chart_coords(zu, chart)
        xv = 0j if (np.isinf(zv) and chart == Chart.U) else _chart_coords(zv, chart)
        kind = "branch" if branch[v] else ("fan" if v in (V1, V2) else "plain")
        sing = params.branch_values()
        sing = np.array([_chart_coords(s, chart) for s in sing] + ([] if kind == "fan" else [0j]))
        if kind == "branch":
            sing = sing[np.abs(sing - xv) > 1e-12]
        d = _segment_dist(sing, xu, xv)
        m = max(1, int(math.ceil(abs(xv - xu) / (spacing * d))))
        jobs.setdefault((chart, kind, m), []).append((k, sign, xu, xv, w[u]))
    s_gl = 0.5 * (_GL_X + 1.0)
    for (chart, kind, m), items in jobs.items():
        idx = np.array([it[0] for it in items])
        sgn = np.array([it[1] for it in items])
        x0 = np.array([it[2] for it in items], dtype=complex)
        x1 = np.array([it[3] for it in items], dtype=complex)
        w0 = np.array([it[4] for it in items], dtype=complex)
        t = ((np.arange(m)[:, None] + s_gl[None, :]) / m).ravel()     # in (0, 1)
        wt = np.tile(_GL_W / (2 * m), m)
        if kind == "branch":
            # x = x1 + (1 - t)^2 (x0 - x1), t from 0 (regular end) to 1 (branch end)
            xs = x1[:, None] + ((1 - t) ** 2)[None, :] * (x0 - x1)[:, None]
            dx = (-2 * (1 - t))[None, :] * (x0 - x1)[:, None]
        else:
            xs = x0[:, None] + t[None, :] * (x1 - x0)[:, None]
            dx = np.broadcast_to((x1 - x0)[:, None], xs.shape)
        samples = np.concatenate([x0[:, None], xs], axis=1)
        ws = continue_rows(params, samples, w0, chart)[:, 1:]
        for c, f in enumerate(forms):
            vals = f.coeff(xs, ws, chart) * dx
            out[idx, c] = sgn * np.sum(vals * wt[None, :], axis=1)
    return out


def _segment_dist(pts: np.ndarray, p: complex, q: complex) -> float:
    d = q - p
    if abs(d) == 0:
        return float(np.min(np.abs(pts - p)))
    t = np.clip(((pts - p) * np.conj(d)).real / abs(d) ** 2, 0, 1)
    return float(np.min(np.abs(pts - (p + t * d))))


# --- loci on the mesh -----------------------------------------------------------

def s3_fixed_vertices(mesh: SurfaceMesh) -> np.ndarray:
    """Vertices over |z| = 1 with real (or infinite) w: the arc through -1."""
    i_one = int(np.argmin(np.abs(mesh.radii - 1.0)))
    ok = []
    for v in range(mesh.n_vertices):
        i, j = mesh.node[v]
        if i != i_one:
            continue
        wv = mesh.w[v]
        if np.isinf(wv) or abs(wv.imag) <= 1e-12 * max(1.0, abs(wv)):
            ok.append(v)
    return np.array(ok, dtype=np.int64)


def s_fixed_vertices(mesh: SurfaceMesh) -> np.ndarray:
    """Vertices over real z (theta = 0, pi) with real w, plus V1, V2 and the real ramification points."""
    ok = []
    for v in range(mesh.n_vertices):
        zv, wv = mesh.z[v], mesh.w[v]
        if np.isinf(zv):
            ok.append(v)
            continue
        if abs(zv.imag) > 1e-12 * max(1.0, abs(zv)):
            continue
        if np.isinf(wv) or abs(wv.imag) <= 1e-12 * max(1.0, abs(wv)):
            ok.append(v)
    return np.array(ok, dtype=np.int64)


def axis_deviation(mesh: SurfaceMesh) -> float:
    idx = s3_fixed_vertices(mesh)
    return float(np.max(np.linalg.norm(mesh.positions[idx, :2], axis=1)))


def horizontal_lines(mesh: SurfaceMesh) -> list[dict]:
    """Fit the horizontal lines carrying the S-fixed vertices.

    The fixed curve of S meets the ends, so it splits into arcs; vertices are
    grouped by their height modulo pi (a rotation about a horizontal line at
    height h0 also fixes height h0 + pi in the quotient).
    """
    idx = s_fixed_vertices(mesh)
    pos = mesh.positions[idx]
    groups: dict = {}
    for v, p in zip(idx, pos):
        key = round(((p[2] % math.pi) / math.pi) * 1e6) % 1_000_000
        groups.setdefault(key, []).append(v)
    # merge near keys
    keys = sorted(groups)
    merged: list[list[int]] = []
    last = None
    for k in keys:
        if last is not None and abs(k - last) <= 10:
            merged[-1].extend(groups[k])
        else:
            merged.append(list(groups[k]))
        last = k
    out = []
    for g in merged:
        P = mesh.positions[g]
        x1 = float(np.mean(P[:, 0]))
        dev_x1 = float(np.max(np.abs(P[:, 0] - x1)))
        h = P[:, 2]
        h_ref = h[0]
        dh = (h - h_ref + math.pi / 2) % math.pi - math.pi / 2
        h0 = h_ref + float(np.mean(dh))
        dev_h = float(np.max(np.abs(dh - np.mean(dh))))
        out.append({"vertices": np.array(g), "x1": x1, "height": h0, "dev_x1": dev_x1, "dev_height": dev_h,
                    "count": len(g), "x2_range": (float(P[:, 1].min()), float(P[:, 1].max()))})
    return out


def horizontal_line_deviation(mesh: SurfaceMesh) -> float:
    lines = horizontal_lines(mesh)
    return max(max(l["dev_x1"], l["dev_height"]) for l in lines)


def _mod_lattice(d: np.ndarray) -> np.ndarray:
    out = np.array(d, dtype=float)
    out[..., 2] = (out[..., 2] + math.pi) % TWO_PI - math.pi
    return out


def vertical_period(mesh: SurfaceMesh) -> float:
    """Translation recovered from the co-tree closures: the positive lattice generator."""
    d = mesh.cotree_defect
    vert = np.abs(d[:, 2])
    nz = vert[vert > 1.0]
    if nz.size == 0:
        return math.nan
    return float(np.min(nz))


def periodic_closure_defect(mesh: SurfaceMesh) -> float:
    """Largest distance of a co-tree closure vector to the lattice Z (0, 0, 2 pi)."""
    if mesh.cotree_defect.size == 0:
        return 0.0
    return float(np.max(np.abs(_mod_lattice(mesh.cotree_defect))))


# --- extrinsic symmetries ---------------------------------------------------------

def rot_s3(X: np.ndarray) -> np.ndarray:
    return np.stack([-X[..., 0], -X[..., 1], X[..., 2]], axis=-1)


def rot_s(X: np.ndarray, x10: float, h0: float) -> np.ndarray:
    return np.stack([2 * x10 - X[..., 0], X[..., 1], 2 * h0 - X[..., 2]], axis=-1)


@dataclass
class SymmetryReport:
    s3: float
    s: float
    composition: float
    line_x1: float
    line_height: float

    @property
    def max(self) -> float:
        return max(self.s3, self.s, self.composition)


def symmetry_check_extrinsic(mesh: SurfaceMesh, samples: int | np.ndarray = 200,
                             rng: np.random.Generator | None = None) -> SymmetryReport:
    """Compare X on image vertices with the ambient rotations, modulo the lattice."""
    rng = rng or np.random.default_rng(0)
    if isinstance(samples, int):
        idx = rng.choice(mesh.n_vertices, size=min(samples, mesh.n_vertices), replace=False)
    else:
        idx = np.asarray(samples)
    lines = horizontal_lines(mesh)
    main = max(lines, key=lambda l: l["count"])
    x10, h0 = main["x1"], main["height"]
    X = mesh.positions
    d3 = ds = dc = 0.0
    for v in idx:
        v3 = mesh.image_vertex(int(v), "S3")
        vs = mesh.image_vertex(int(v), "S")
        vc = mesh.image_vertex(v3, "S")
        d3 = max(d3, float(np.max(np.abs(_mod_lattice(X[v3] - rot_s3(X[v]))))))
        ds = max(ds, float(np.max(np.abs(_mod_lattice(X[vs] - rot_s(X[v], x10, h0))))))
        dc = max(dc, float(np.max(np.abs(_mod_lattice(X[vc] - rot_s(rot_s3(X[v]), x10, h0))))))
    return SymmetryReport(d3, ds, dc, x10, h0)


# --- level curves -----------------------------------------------------------------

@dataclass
class LevelComponent:
    kind: str                      # "diverging", "closed" or "open"
    points: np.ndarray             # (n, 3)
    keys: list
    ends: tuple = ()

    @property
    def n_points(self) -> int:
        return len(self.points)


@dataclass
class LevelSet:
    k: float
    components: list[LevelComponent]
    shifted: bool = False

    def count(self, kind: str) -> int:
        return sum(1 for c in self.components if c.kind == kind)


def k0_level(mesh: SurfaceMesh) -> float:
    return float(mesh.positions[mesh.V1, 2])


def _face_local_x3(mesh: SurfaceMesh, f) -> np.ndarray:
    u = f[0]
    base = mesh.positions[u, 2]
    return np.array([base, base + mesh.edge_vector(u, f[1])[2].real, base + mesh.edge_vector(u, f[2])[2].real])


def level_curves(mesh: SurfaceMesh, k: float, snap: tuple[int, ...] | None = None,
                 snap_tol: float = 1e-6, _shift: bool = False) -> LevelSet:
    """Components of {x3 = k mod 2 pi} by marching triangles.

    Vertices listed in ``snap`` are treated as lying exactly on the level when
    within ``snap_tol`` of it (used at k0 for V1, V2).  If any other vertex
    lies within 1e-12 of the level, k is shifted by 1e-9.
    """
    snap = tuple(snap or ())
    X3 = mesh.positions[:, 2]
    diff = (X3 - k + math.pi) % TWO_PI - math.pi
    on = np.abs(diff) < 1e-12
    on[list(snap)] = False
    if np.any(on) and not _shift:
        return level_curves(mesh, k + 1e-9, snap, snap_tol, True)

    segs = set()
    pts: dict = {}
    edge_faces: dict = {}
    for f in mesh.faces:
        for u, v in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            key = (min(u, v), max(u, v))
            edge_faces[key] = edge_faces.get(key, 0) + 1
    for f in mesh.faces:
        x = _face_local_x3(mesh, f)
        lo, hi = x.min() - snap_tol, x.max() + snap_tol
        for n in range(int(math.ceil((lo - k) / TWO_PI)), int(math.floor((hi - k) / TWO_PI)) + 1):
            L = k + TWO_PI * n
            s = np.sign(x - L)
            for t in range(3):
                if f[t] in snap and abs(x[t] - L) < snap_tol:
                    s[t] = 0
            ends = []
            for t in range(3):
                if s[t] == 0:
                    key = ("v", int(f[t]))
                    pts[key] = np.array([*mesh.positions[f[t], :2], k])
                    ends.append(key)
            for t in range(3):
                t1 = (t + 1) % 3
                if s[t] * s[t1] < 0:
                    u, v = int(f[t]), int(f[t1])
                    lam = (L - x[t]) / (x[t1] - x[t])
                    e = (min(u, v), max(u, v))
                    # rank of this crossing along the canonical edge
                    xu_global = X3[e[0]]
                    lam_c = lam if u == e[0] else 1 - lam
                    val = xu_global + lam_c * mesh.edge_vector(e[0], e[1])[2].real
                    key = ("e", e, int(round((val - k) / TWO_PI)))
                    h = mesh.positions[e[0], :2] + lam_c * mesh.edge_vector(e[0], e[1])[:2].real
                    pts[key] = np.array([h[0], h[1], k])
                    ends.append(key)
            if len(ends) == 2 and ends[0] != ends[1]:
                a_, b_ = sorted(ends, key=repr)
                segs.add((a_, b_))
    # adjacency
    adj: dict = {}
    for a_, b_ in segs:
        adj.setdefault(a_, []).append(b_)
        adj.setdefault(b_, []).append(a_)
    # straight-through pairing at degree-4 vertex nodes
    pair: dict = {}
    for node, nb in adj.items():
        if len(nb) == 4:
            c = pts[node][:2]
            ang = sorted(nb, key=lambda q: math.atan2(pts[q][1] - c[1], pts[q][0] - c[0]))
            for t in range(4):
                pair[(node, ang[t])] = ang[(t + 2) % 4]
        elif len(nb) > 2:
            raise SurfaceError(f"level node of degree {len(nb)}")

    def step(prev, cur):
        nb = adj[cur]
        if len(nb) == 4:
            return pair[(cur, prev)]
        if len(nb) == 1:
            return None
        return nb[0] if nb[1] == prev else nb[1]

    used = set()
    comps = []

    def ekey(p, q):
        return (p, q) if repr(p) < repr(q) else (q, p)

    def boundary(key) -> bool:
        if key[0] == "e":
            return edge_faces.get(key[1], 0) == 1
        return False

    def walk(start, nxt):
        chain = [start]
        prev, cur = start, nxt
        while True:
            used.add(ekey(prev, cur))
            chain.append(cur)
            if cur == start:
                break
            n2 = step(prev, cur)
            if n2 is None or ekey(cur, n2) in used:
                break
            prev, cur = cur, n2
        return chain

    for node in sorted(adj, key=repr):
        if len(adj[node]) == 1 and ekey(node, adj[node][0]) not in used:
            chain = walk(node, adj[node][0])
            kind = "diverging" if boundary(chain[0]) and boundary(chain[-1]) else "open"
            comps.append(LevelComponent(kind, np.array([pts[q] for q in chain]), chain,
                                        (chain[0], chain[-1])))
    for node in sorted(adj, key=repr):
        for nb in sorted(adj[node], key=repr):
            if ekey(node, nb) in used:
                continue
            chain = walk(node, nb)
            kind = "closed" if chain[0] == chain[-1] else "open"
            comps.append(LevelComponent(kind, np.array([pts[q] for q in chain]), chain))
    return LevelSet(k, comps, _shift)


def level_curves_k0(mesh: SurfaceMesh) -> LevelSet:
    return level_curves(mesh, k0_level(mesh), snap=(mesh.V1, mesh.V2))


def crossing_angle(levels: LevelSet, vertex: int) -> float:
    """Angle in degrees between the two components passing through ``vertex``."""
    key = ("v", int(vertex))
    tangents = []
    for c in levels.components:
        for t, q in enumerate(c.keys):
            if q != key:
                continue
            n = len(c.keys)
            closed = c.kind == "closed"
            if 0 < t < n - 1 or closed:
                prev = c.points[(t - 1) % (n - 1) if closed and t == 0 else t - 1]
                nxt = c.points[(t + 1) % n]
                tangents.append((nxt - prev)[:2])
                break
    if len(tangents) != 2:
        raise SurfaceError(f"expected two components through vertex {vertex}, found {len(tangents)}")
    t1, t2 = tangents
    cosang = abs(float(np.dot(t1, t2))) / (np.linalg.norm(t1) * np.linalg.norm(t2))
    return math.degrees(math.acos(min(1.0, cosang)))


# --- ends -------------------------------------------------------------------------

@dataclass
class EndExpansion:
    end: str
    a0: complex
    theta0: float
    c: complex
    a0_local: complex
    fit_residual: float

    def direction(self, k: float) -> np.ndarray:
        """Horizontal unit direction of the level-k line of the asymptotic helicoid."""
        if self.end == "E1":
            return np.array([math.sin(k - self.theta0), math.cos(k - self.theta0)])
        return np.array([-math.sin(k + self.theta0), -math.cos(k + self.theta0)])


def _end_paths(data: NormalizedData, end: str, r: float):
    """Path from the base point to the circle of radius r about the end, and the circle."""
    params = data.params
    wb = s3_fixed_point(params).w
    if end == "E1":
        lead = build_path(params, (Line(-1 + 0j, complex(-r)),), wb, Chart.Z)
        ring = build_path(params, (Arc(0j, r, math.pi, 3 * math.pi),), lead.w[-1], Chart.Z)
        return [lead], ring
    p1 = build_path(params, (Line(-1 + 0j, -2 + 0j),), wb, Chart.Z)
    p2 = build_path(params, (Line(-0.5 + 0j, complex(-r)),), p1.w[-1], Chart.U)
    ring = build_path(params, (Arc(0j, r, math.pi, 3 * math.pi),), p2.w[-1], Chart.U)
    return [p1, p2], ring


def end_samples(data: NormalizedData, end: str, r: float, n: int = 64):
    """(x, F) on a circle of radius r about the end: chart coordinate and the complex integrals."""
    forms = [Phi1(data), Phi2(data), Phi3(data)]
    leads, ring = _end_paths(data, end, r)
    from .transport import integrate_forms

    F0 = sum(integrate_forms(forms, p, 1e-13).value for p in leads)
    # refine the ring so that n equally spaced angles are nodes
    t = np.linspace(0.0, 1.0, n + 1)
    dense = np.union1d(t, np.concatenate(ring.t_nodes))
    from .transport import _assemble
    ring = _assemble(data.params, ring.pieces, (dense,), ring.w[0], ring.chart, "cycle", "ring")
    cum = cumulative_integrals(forms, ring, level=2)
    sel = np.searchsorted(dense, t[:-1])
    return ring.x[sel], F0[None, :] + cum[sel], ring.w[sel]


def end_asymptotics(data: NormalizedData, end: str = "E1", radii=(0.02, 0.01, 0.005),
                    n: int = 64, order: int = 8, max_residual: float = 1e-8) -> EndExpansion:
    """Fit (x1 + i x2) = c + alpha / zeta-bar (E1) or c + alpha / zeta (E2) plus O(zeta) terms.

    The end loops of Phi1, Phi2 have zero period, so there is no log term and
    the remainder is a double power series in zeta, conj(zeta) (truncated at
    ``order``).  zeta is the coordinate with Phi3 = i d zeta / zeta at E1 (= -i d zeta / zeta
    at E2), normalised by the base point.  The leading Gauss-map coefficient
    a0 = lim g zeta^{-1} (E1) or lim (g zeta)^{-1} (E2) is obtained from the fit and,
    independently, from the regularised integral of Phi3.
    """
    rows, rhs = [], []
    for r in radii:
        x, F, _ = end_samples(data, end, r, n)
        if end == "E1":
            zeta = np.exp(-1j * F[:, 2])
            lead = 1.0 / np.conj(zeta)
        else:
            zeta = np.exp(1j * F[:, 2])
            lead = 1.0 / zeta
        cols = [np.ones_like(zeta), lead]
        for p in range(1, order + 1):
            cols += [zeta ** p, np.conj(zeta) ** p]
        rows.append(np.stack(cols, axis=1))
        rhs.append(F[:, 0].real + 1j * F[:, 1].real)
    A = np.concatenate(rows)
    b = np.concatenate(rhs)
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    resid = float(np.max(np.abs(A @ coef - b)) / max(1.0, np.max(np.abs(b))))
    if resid > max_residual:
        raise FitError(f"end fit residual {resid:.2e} exceeds {max_residual:.1e}")
    c, alpha = coef[0], coef[1]
    if end == "E1":
        a0 = np.conj(1j / (2 * alpha))
    else:
        a0 = -1j / (2 * alpha)
    a0_loc = local_a0(data, end)
    return EndExpansion(end, complex(a0), float(np.angle(a0)), complex(c), a0_loc, resid)


def local_a0(data: NormalizedData, end: str = "E1", r: float | None = None) -> complex:
    """a0 from the local expansion of Phi3: exp(+-i C), C the regularised integral.

    Near E1, the integral of Phi3 from the base point equals i log z + C + O(z);
    C is the integral to a point p0 = -r minus i log p0 plus the integral of the
    regular part Phi3 - i dz / z from p0 to 0.  In the U chart at E2 the
    residue is -i and the roles of signs are exchanged.
    """
    params = data.params
    r = r or 0.25 * params.a
    leads, _ = _end_paths(data, end, r)
    from .transport import integrate_forms

    phi3 = Phi3(data)
    I = sum(integrate_forms([phi3], p, 1e-13).value[0] for p in leads)
    chart = Chart.Z if end == "E1" else Chart.U
    res = 1j if end == "E1" else -1j
    p0 = complex(-r)
    # regular part from p0 to 0 along the segment, Gauss-Legendre on panels
    s = 0.5 * (_GL_X + 1.0)
    m = 8
    t = ((np.arange(m)[:, None] + s[None, :]) / m).ravel()
    wt = np.tile(_GL_W / (2 * m), m)
    xs = p0 * (1 - t)
    samples = np.concatenate([[p0], xs])
    w_end = leads[-1].w[-1]
    ws = continue_rows(params, samples[None, :], np.array([w_end]), chart)[0, 1:]
    reg = phi3.coeff(xs, ws, chart) - res / xs
    J = np.sum(reg * (-p0) * wt)
    C = I - res * cmath.log(p0) + J
    if end == "E1":
        return complex(cmath.exp(1j * C))
    return complex(cmath.exp(-1j * C))


def level_end_directions(mesh: SurfaceMesh, levels: LevelSet, ends: dict[str, EndExpansion]) -> list[float]:
    """Angular error (degrees) of each diverging component end against the asymptotic line."""
    errs = []
    for comp in levels.components:
        if comp.kind != "diverging":
            continue
        for t in (0, -1):
            key = comp.keys[t]
            e = key[1]
            zv = mesh.z[e[0]]
            end = "E1" if (not np.isinf(zv) and abs(zv) < 1) else "E2"
            ex = ends[end]
            p = comp.points[t][:2] - np.array([ex.c.real, ex.c.imag])
            d = ex.direction(levels.k)
            cosang = float(np.dot(p, d) / np.linalg.norm(p))
            errs.append(math.degrees(math.acos(max(-1.0, min(1.0, cosang)))))
    return errs


# --- minimality -----------------------------------------------------------------

def chordal(z: np.ndarray, b: complex) -> np.ndarray:
    """Chordal distance on the Riemann sphere; INF is allowed on either side."""
    z = np.asarray(z, dtype=complex)
    zf = np.isinf(z)
    zz = np.where(zf, 0.0, z)
    if cmath.isinf(b):
        out = 2.0 / np.sqrt(1.0 + np.abs(zz) ** 2)
    else:
        out = 2.0 * np.abs(zz - b) / np.sqrt((1.0 + np.abs(zz) ** 2) * (1.0 + abs(b) ** 2))
        out = np.where(zf, 2.0 / math.sqrt(1.0 + abs(b) ** 2), out)
    return np.where(zf & cmath.isinf(b), 0.0, out)


def interior_mask(mesh: SurfaceMesh, branch_radius: float = 0.2, cap_radius: float = 0.2) -> np.ndarray:
    """Vertices used by the discrete checks.

    Drops the mesh boundary, a fixed chordal disk around every ramification
    value (the z-grid is a 4 pi cone there) and fixed caps around z = 0, inf,
    where the polar grid degenerates into the V1, V2 fans.  The excluded
    regions do not shrink under refinement, so the study measures the
    interior convergence order.
    """
    z = mesh.z
    keep = ~mesh.boundary_vertices()
    for b in mesh.data.params.branch_values():
        keep &= chordal(z, b) >= branch_radius
    keep &= chordal(z, 0j) >= cap_radius
    keep &= chordal(z, INF) >= cap_radius
    return keep


def face_positions(mesh: SurfaceMesh) -> np.ndarray:
    """(n_faces, 3, 3) corner positions in the frame of each face's first vertex."""
    F = mesh.faces
    P0 = mesh.positions[F[:, 0]]
    out = np.empty((len(F), 3, 3))
    out[:, 0] = P0
    for c in (1, 2):
        out[:, c] = P0 + _edge_vectors(mesh, F[:, 0], F[:, c]).real
    return out


def _edge_vectors(mesh: SurfaceMesh, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    ks = np.empty(len(u), dtype=np.int64)
    sg = np.empty(len(u))
    for n, (a_, b_) in enumerate(zip(u.tolist(), v.tolist())):
        ks[n], sg[n] = mesh._edge_index[(a_, b_)]
    return sg[:, None] * mesh.edge_int[ks]


@dataclass
class CurvatureReport:
    max_H: float
    max_H_h: float
    n_used: int
    h: float


def discrete_mean_curvature(mesh: SurfaceMesh) -> tuple[np.ndarray, np.ndarray]:
    """|H| from the cotangent Laplacian with barycentric areas, and the longest incident edge."""
    F = mesh.faces
    P = face_positions(mesh)
    n = mesh.n_vertices
    lap = np.zeros((n, 3))
    area = np.zeros(n)
    hmax = np.zeros(n)
    for t in range(3):
        i, j, k = t, (t + 1) % 3, (t + 2) % 3
        e1, e2 = P[:, i] - P[:, k], P[:, j] - P[:, k]
        cot = np.sum(e1 * e2, axis=1) / np.linalg.norm(np.cross(e1, e2), axis=1)
        d = P[:, j] - P[:, i]
        np.add.at(lap, F[:, i], 0.5 * cot[:, None] * d)
        np.add.at(lap, F[:, j], -0.5 * cot[:, None] * d)
        ln = np.linalg.norm(d, axis=1)
        np.maximum.at(hmax, F[:, i], ln)
        np.maximum.at(hmax, F[:, j], ln)
    A = 0.5 * np.linalg.norm(np.cross(P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]), axis=1)
    for t in range(3):
        np.add.at(area, F[:, t], A / 3.0)
    return np.linalg.norm(lap, axis=1) / (2.0 * np.maximum(area, 1e-300)), hmax


def mean_curvature_check(mesh: SurfaceMesh, branch_radius: float = 0.2, cap_radius: float = 0.2) -> CurvatureReport:
    H, hmax = discrete_mean_curvature(mesh)
    use = interior_mask(mesh, branch_radius, cap_radius)
    return CurvatureReport(float(H[use].max()), float((H * hmax)[use].max()), int(use.sum()),
                           float(np.median(hmax[use])))


def observed_order(coarse: float, fine: float, ratio: float = 2.0) -> float:
    return math.log(coarse / fine) / math.log(ratio)


def refinement_study(data: NormalizedData, grids=((81, 128), (161, 256)), puncture_radius: float = 0.02):
    """max |H| h on successively halved grids and the observed orders between them."""
    reports = [mean_curvature_check(build_mesh(data, g, puncture_radius)) for g in grids]
    orders = [observed_order(r0.max_H_h, r1.max_H_h) for r0, r1 in zip(reports[:-1], reports[1:])]
    return reports, orders


def conformality_at_vertices(mesh: SurfaceMesh) -> float:
    worst = 0.0
    for v in range(mesh.n_vertices):
        if v in (mesh.V1, mesh.V2) or mesh.is_branch()[v]:
            continue
        worst = max(worst, conformality_defect(mesh.data, mesh.point(v)))
    return worst


def stereographic(g) -> np.ndarray:
    g = np.asarray(g, dtype=complex)
    m = np.abs(g) ** 2
    return np.stack([2 * g.real, 2 * g.imag, m - 1], axis=-1) / (m + 1)[..., None]


def vertex_normals(mesh: SurfaceMesh) -> np.ndarray:
    """Unit vertex normals with Max's weights (cross product over squared edge lengths)."""
    P = face_positions(mesh)
    F = mesh.faces
    N = np.zeros((mesh.n_vertices, 3))
    for t in range(3):
        i, j, k = t, (t + 1) % 3, (t + 2) % 3
        e1, e2 = P[:, j] - P[:, i], P[:, k] - P[:, i]
        wgt = np.sum(e1 * e1, axis=1) * np.sum(e2 * e2, axis=1)
        np.add.at(N, F[:, i], np.cross(e1, e2) / wgt[:, None])
    return N / np.maximum(np.linalg.norm(N, axis=1), 1e-300)[:, None]


def normal_defect(mesh: SurfaceMesh, branch_radius: float = 0.2, cap_radius: float = 0.2) -> float:
    """Largest angle (radians) between vertex normals and the stereographic image of g, up to a global sign."""
    use = np.nonzero(interior_mask(mesh, branch_radius, cap_radius))[0]
    dots = np.sum(vertex_normals(mesh)[use] * stereographic(mesh.z[use]), axis=1)
    sign = 1.0 if np.median(dots) > 0 else -1.0
    return float(np.max(np.arccos(np.clip(sign * dots, -1, 1))))


# --- Gauss locus ------------------------------------------------------------------

@dataclass
class GaussLocus:
    components: list[dict]
    ramification_on_locus: list[CurvePoint]

    def component(self, label: str) -> dict:
        return next(c for c in self.components if c["label"] == label)


def gauss_locus(data: NormalizedData, n: int = 720) -> GaussLocus:
    """The set |g| = 1 on the curve.

    Over the unit arc through -1 (R > 0) both lifts have real w; they join at
    e^{+-i rho} into the closed curve L fixed by S3.  Over the arc through 1
    (R < 0) the lifts have imaginary w and form the second closed curve.  The
    two curves meet exactly at the ramification points over e^{+-i rho}.
    """
    params = data.params
    rho = params.rho
    comps = []
    for label, lo, hi in (("L", rho, 2 * math.pi - rho), ("M", -rho, rho)):
        th = np.linspace(lo, hi, n + 1)[1:-1]
        z = np.exp(1j * th)
        r = np.sqrt(params.R(z))
        # both lifts; the loop is lift(+) followed by lift(-) reversed
        lift_plus = continue_rows(params, z[None, :], np.array([r[0]]), Chart.Z)[0]
        pts = [CurvePoint(complex(zz), complex(ww)) for zz, ww in zip(z, lift_plus)]
        pts += [CurvePoint(complex(zz), complex(-ww)) for zz, ww in zip(z[::-1], lift_plus[::-1])]
        comps.append({
            "label": label,
            "points": pts,
            "w_real": bool(np.all(np.abs(lift_plus.imag) <= 1e-9 * np.abs(lift_plus))),
            "g_args": np.angle(z),
            "arc": (lo, hi),
        })
    ram = [q for q in ramification_points(params) if not np.isinf(q.z) and abs(abs(q.z) - 1.0) < 1e-12]
    return GaussLocus(comps, ram)


def surjects_on_circle(args: np.ndarray, max_gap: float = 0.05) -> bool:
    """True when sampled arguments leave no gap wider than ``max_gap`` on the unit circle."""
    a = np.sort(np.mod(np.asarray(args), TWO_PI))
    gaps = np.diff(np.concatenate([a, [a[0] + TWO_PI]]))
    return bool(gaps.max() <= max_gap)

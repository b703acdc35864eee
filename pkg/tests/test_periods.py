import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helicoid.curve import CurveParams
from helicoid.forms import normalize_residue
from helicoid.periods import (
    COMPONENTS,
    DefectVector,
    NoRootInBox,
    defect_at,
    fd_jacobian,
    gauss_preimages,
    newton,
    period_report,
    period_stability,
    solve_period_problem,
    total_curvature,
    uniqueness_scan,
    worker_count,
    wrap,
)

ROOT = (0.08643011424448951, 2.142681181606541)


def test_wrap():
    assert wrap(2 * math.pi + 0.1) == pytest.approx(0.1)
    assert wrap(-4 * math.pi - 0.2) == pytest.approx(-0.2)
    assert abs(wrap(math.pi - 1e-9)) == pytest.approx(math.pi - 1e-9)


def test_defect_vector_api():
    d = DefectVector((0.1, -0.2, 0.0, 0.3, -0.4, 0.5))
    assert d.max == pytest.approx(0.5)
    assert d.A2 == pytest.approx(0.2)
    assert d.component("B2") == pytest.approx(-0.4)
    assert list(d.as_dict()) == [f"d_{c}" for c in COMPONENTS]


@settings(max_examples=10, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.2, math.pi - 0.2))
def test_symmetry_forced_components_vanish(a, rho):
    rep = period_report(normalize_residue(CurveParams(a, rho)), 1e-12)
    assert abs(rep.PA[0].real) < 1e-10 and abs(rep.PA[1].real) < 1e-10 and abs(rep.PB[0].real) < 1e-10
    # the B-cycle always carries half of the A-cycle vertical period
    assert abs(rep.PB[2].real - 0.5 * rep.PA[2].real) < 1e-9


def test_translation_from_end_loop():
    rep = period_report(normalize_residue(CurveParams(0.3, 1.2)), 1e-12)
    assert np.max(np.abs(rep.translation[:2])) < 1e-10
    assert rep.translation[2] == pytest.approx(-2 * math.pi, abs=1e-10)


def test_newton_converges_to_root():
    res = newton((0.08, 2.1), ("A3", "B2"), tol=1e-10)
    assert res.defect.max < 1e-10
    assert abs(res.a - ROOT[0]) < 1e-9 and abs(res.rho - ROOT[1]) < 1e-9
    assert res.iterations <= 10


def test_jacobian_nonsingular_at_root():
    J = fd_jacobian(*ROOT, ("A3", "B2"), 1e-12)
    assert abs(np.linalg.det(J)) > 1e-3
    assert np.linalg.cond(J) < 1e6


def test_lattice_point_with_wrong_b3_is_not_a_root():
    # Re A3 = -2 pi and Re B2 = 0 here, but Re B3 = -pi is off the lattice
    d = defect_at(0.0180143, 2.25368492, 1e-12)
    assert d.A3 < 1e-4 and d.B2 < 1e-4
    assert d.B3 == pytest.approx(math.pi, abs=1e-3)


def test_no_root_in_box():
    with pytest.raises(NoRootInBox):
        solve_period_problem((0.3, 0.9, 0.5, 1.5), scan_grid=(6, 6))


def test_small_scan_finds_single_cell():
    tab = uniqueness_scan((0.05, 0.15, 1.9, 2.4), grid=(12, 12), min_grid=10)
    assert tab.n_candidates == 1
    (i, j), = tab.candidates
    assert tab.a_values[i] <= ROOT[0] <= tab.a_values[i + 1]
    assert tab.rho_values[j] <= ROOT[1] <= tab.rho_values[j + 1]
    assert tab.continuity_ratio() < 10
    assert tab.missing == 0


def test_scan_rejects_coarse_grid():
    with pytest.raises(ValueError):
        uniqueness_scan(grid=(10, 10))


@pytest.mark.parametrize("a,rho", [ROOT, (0.3, 1.2), (0.7, 0.4)])
def test_total_curvature(a, rho):
    tc = total_curvature(normalize_residue(CurveParams(a, rho)))
    assert abs(tc / (-8 * math.pi) - 1) < 1e-3


def test_gauss_degree():
    p = CurveParams(*ROOT)
    for q in (0.3 + 0.7j, -2.0 + 0.1j, 5j):
        assert gauss_preimages(p, q) == 2
    with pytest.raises(ValueError):
        gauss_preimages(p, p.a)


def test_period_stability():
    st_ = period_stability(normalize_residue(CurveParams(*ROOT)))
    assert st_["deformation"] < 1e-9 and st_["halving"] < 1e-9


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("HELICOID_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("HELICOID_THREADS", "0")
    with pytest.raises(ValueError):
        worker_count()


def test_root_is_a_strict_local_minimum():
    d0 = defect_at(*ROOT, 1e-12).max
    for da, dr in ((1e-3, 0), (-1e-3, 0), (0, 1e-3), (0, -1e-3), (7e-4, 7e-4)):
        assert defect_at(ROOT[0] + da, ROOT[1] + dr, 1e-12).max > d0 + 1e-5


def test_defect_at_double_resolution():
    assert defect_at(*ROOT, 1e-14).max < 1e-8


@pytest.mark.slow
def test_scan_of_box_without_root_has_no_candidates():
    tab = uniqueness_scan((0.3, 0.9, 0.5, 1.5), grid=(50, 50))
    assert tab.n_candidates == 0 and tab.missing == 0

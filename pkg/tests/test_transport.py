import math

import numpy as np
import pytest

from helicoid.curve import Chart, CurveParams, marked_points
from helicoid.forms import Phi1, Phi2, Phi3, Tau, normalize_residue
from helicoid.transport import (
    Arc,
    GeometryCollision,
    Line,
    PoleProximity,
    StepTooLarge,
    TransportError,
    build_path,
    canonical_circle_encloses,
    circle,
    continue_roots,
    continue_rows,
    continue_w,
    cumulative_integrals,
    cut_crossings,
    homology_basis,
    integrate_forms,
    intersection_number,
    stadium,
)


@pytest.fixture(scope="module")
def data():
    return normalize_residue(CurveParams(0.3, 1.2))


def test_stadium_is_closed_and_counterclockwise():
    pieces = stadium(0.3 + 0j, 2.0 + 0j, 0.1)
    assert abs(pieces[0].x(0.0) - pieces[-1].x(1.0)) < 1e-14
    t = np.linspace(0, 1, 200)
    x = np.concatenate([p.x(t) for p in pieces])
    area = 0.5 * np.sum((x.real * np.roll(x.imag, -1) - np.roll(x.real, -1) * x.imag))
    assert area > 0


def test_continuation_consistency(data):
    p = data.params
    x = np.exp(1j * np.linspace(math.pi, 3 * math.pi, 400)) * 0.2
    w = continue_roots(p, x, math.sqrt(p.R(-0.2).real))
    d_same = np.abs(np.diff(w))
    d_flip = np.abs(w[1:] + w[:-1])
    assert np.all(d_same < d_flip)
    assert np.max(np.abs(w ** 2 - p.R(x))) < 1e-13


def test_rows_agree_with_single_path(data):
    p = data.params
    x = np.linspace(-1.0, -0.1, 50) + 0.05j
    w1 = continue_roots(p, x, 1.0)
    w2 = continue_rows(p, np.stack([x, x]), np.array([1.0, -1.0]))
    assert np.allclose(w2[0], w1) and np.allclose(w2[1], -w1)


def test_step_too_large(data):
    p = data.params
    with pytest.raises(StepTooLarge):
        continue_roots(p, np.array([p.a - 0.01, p.a + 0.01 * np.exp(-0.1j)]), 1.0)


def test_continue_w_refuses_branch_values(data):
    with pytest.raises(TransportError):
        continue_w(data.params, [0.1, data.params.a], 1.0)


def test_path_through_singularity(data):
    with pytest.raises(GeometryCollision):
        build_path(data.params, (Line(-0.5 + 0j, 0.5 + 0j),), 1.0)


def test_pole_proximity(data):
    path = build_path(data.params, circle(0j, 0.01), marked_points(data.params).E1.w, Chart.Z, "cycle")
    far = build_path(data.params, (Line(-0.9 + 0j, -0.2 + 0j),), 1.0)
    integrate_forms([Phi3(data)], far)
    assert path.closure_defect() < 1e-12
    near = build_path(data.params, (Line(-0.9 + 0j, -1e-3 + 0j),), 1.0, fraction=0.5)
    with pytest.raises(PoleProximity):
        integrate_forms([Phi3(data)], near)


def test_end_loops(data):
    basis = homology_basis(data.params)
    forms = [Phi1(data), Phi2(data), Phi3(data)]
    e1 = integrate_forms(forms, basis.endLoop1, 1e-12).value
    e2 = integrate_forms(forms, basis.endLoop2, 1e-12).value
    assert abs(e1[2] + 2 * math.pi) < 1e-10 and abs(e2[2] - 2 * math.pi) < 1e-10
    assert np.max(np.abs(e1[:2])) < 1e-10 and np.max(np.abs(e2[:2])) < 1e-10


def test_basis_combinatorics(data):
    basis = homology_basis(data.params)
    assert basis.cycleA.closure_defect() < 1e-12 and basis.cycleB.closure_defect() < 1e-12
    assert cut_crossings(basis.cycleA) == 0
    assert cut_crossings(basis.cycleB) == 2
    assert abs(intersection_number(basis.cycleA, basis.cycleB)) == 1
    assert intersection_number(basis.cycleA, basis.cycleB) == -intersection_number(basis.cycleB, basis.cycleA)


def test_tau_has_no_residues(data):
    basis = homology_basis(data.params)
    tau = Tau(data.params)
    assert abs(integrate_forms([tau], basis.endLoop1, 1e-12).value[0]) < 1e-10


def test_integrals_refine_and_reverse(data):
    basis = homology_basis(data.params)
    forms = [Phi1(data), Phi2(data), Phi3(data)]
    a = integrate_forms(forms, basis.cycleB, 1e-12).value
    b = integrate_forms(forms, basis.cycleB.refined(), 1e-12).value
    c = integrate_forms(forms, basis.cycleB.reversed(), 1e-12).value
    assert np.max(np.abs(a - b)) < 1e-11
    assert np.max(np.abs(a + c)) < 1e-11


def test_cumulative_matches_total(data):
    path = build_path(data.params, (Line(-1 + 0j, -0.2 + 0.3j), Arc(0j, abs(-0.2 + 0.3j), math.atan2(0.3, -0.2), 2.5)),
                      1.0)
    forms = [Phi3(data)]
    cum = cumulative_integrals(forms, path, level=3)
    tot = integrate_forms(forms, path, 1e-13).value
    assert abs(cum[-1, 0] - tot[0]) < 1e-12
    assert cum[0, 0] == 0


def test_canonical_circle_is_not_usable_for_small_a():
    assert len(canonical_circle_encloses(CurveParams(0.086, 2.14))) > 2

import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helicoid.curve import (
    CurveParams,
    CurvePoint,
    GeneralCurveParams,
    apply_s3,
    marked_points,
    random_points,
    ramification_points,
)
from helicoid.forms import (
    SYMMETRY_TABLE,
    FormError,
    FormPole,
    GaussFunction,
    NearRealModulus,
    Phi1,
    Phi2,
    Phi3,
    Tau,
    WShift,
    conformality_defect,
    default_residue_radius,
    eta_general,
    eval_eta_general,
    eval_form,
    eval_phi12,
    eval_tau,
    gauss_symmetry_defect,
    lemma3_residual,
    local_order,
    normalize_residue,
    p1_point,
    pullback_defect,
    residue,
    z1_point,
)


@pytest.fixture(scope="module")
def data():
    return normalize_residue(CurveParams(0.5, math.pi / 2))


def test_normalisation_constant_is_half_the_closed_form(data):
    assert abs(data.c_norm - (-0.44194173824159216j)) < 1e-12
    assert abs(data.ratio - 0.5) < 1e-12


@settings(max_examples=15, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(0.1, math.pi - 0.1))
def test_ratio_is_half_everywhere(a, rho):
    d = normalize_residue(CurveParams(a, rho))
    assert abs(d.ratio - 0.5) < 1e-10


def test_residues_at_ends(data):
    m = marked_points(data.params)
    phi3 = Phi3(data)
    for p, target in ((m.E1, 1j), (m.E2, -1j)):
        r = default_residue_radius(data.params, p)
        for s in (1.0, 0.5, 0.25):
            assert abs(residue(phi3, p, r * s) - target) < 1e-10


def test_residue_radius_guard(data):
    m = marked_points(data.params)
    with pytest.raises(FormError):
        residue(Phi3(data), m.E1, 0.4)


def test_tau_at_end_and_at_branch(data):
    p = data.params
    m = marked_points(p)
    assert abs(eval_tau(p, m.E1).coeff - 1 / math.sqrt(p.a)) < 1e-12
    for q in ramification_points(p):
        v = eval_tau(p, q)
        assert v.chart == "T" and np.isfinite(v.coeff) and abs(v.coeff) > 0


def test_poles_raise(data):
    m = marked_points(data.params)
    with pytest.raises(FormPole):
        eval_form(Phi3(data), m.E1)
    with pytest.raises(FormPole):
        eval_phi12(data, m.E2)


def test_phi12_finite_at_v1(data):
    f1, f2 = eval_phi12(data, marked_points(data.params).V1)
    assert abs(f1.coeff - (-0.1953125j)) < 1e-6
    assert abs(f2.coeff - 0.1953125) < 1e-6


@pytest.mark.parametrize("params", [CurveParams(0.5, math.pi / 2), CurveParams(0.08, 2.1), CurveParams(0.9, 0.3)])
def test_divisors(params):
    d = normalize_residue(params)
    m = marked_points(params)
    g, phi3 = GaussFunction(params), Phi3(d)
    assert [local_order(g, p) for p in (m.E1, m.V1, m.E2, m.V2)] == [1, 1, -1, -1]
    assert [local_order(phi3, p) for p in (m.E1, m.V1, m.E2, m.V2)] == [-1, 1, -1, 1]
    tau = Tau(params)
    for q in ramification_points(params):
        assert local_order(phi3, q) == 0
        assert local_order(tau, q) == 0


def test_w_shift_orders():
    p = CurveParams(0.3, 1.0)
    f = WShift(p, math.sqrt(p.a))
    assert local_order(f, CurvePoint(p.c, complex("inf"))) == -1
    assert local_order(f, CurvePoint(p.a, 0j)) == 0


def test_symmetry_table(data, rng):
    pts = random_points(data.params, 30, rng)
    forms = {"phi1": Phi1(data), "phi2": Phi2(data), "phi3": Phi3(data), "tau": Tau(data.params)}
    for name, inv, sign in SYMMETRY_TABLE:
        assert max(pullback_defect(forms[name], p, inv, sign) for p in pts) < 1e-12
    # the opposite sign is clearly wrong
    assert max(pullback_defect(forms["phi3"], p, "S3", -1) for p in pts) > 1e-2
    assert max(gauss_symmetry_defect(p, inv) for p in pts for inv in ("S3", "S")) < 1e-14


def test_conformality(data, rng):
    assert max(conformality_defect(data, p) for p in random_points(data.params, 50, rng)) < 1e-13


def test_reality_residual_real_vs_complex():
    assert lemma3_residual(CurveParams(0.5, 2.0)) < 1e-14
    r1 = lemma3_residual(GeneralCurveParams(0.5 + 0.3j, 2.0))
    r2 = lemma3_residual(GeneralCurveParams(0.5 - 0.3j, 2.0))
    assert r1 > 1e-2 and abs(r1 - r2) < 1e-10


def test_symmetric_third_kind_form():
    g = GeneralCurveParams(0.4 + 0.2j, 1.7)
    eta = eta_general(g)
    m = marked_points(g)
    assert abs(residue(eta, m.E1, default_residue_radius(g, m.E1)) - 1j) < 1e-10
    assert abs(residue(eta, m.E2, default_residue_radius(g, m.E2)) + 1j) < 1e-10
    assert abs(eval_eta_general(g, p1_point(g)).coeff) < 1e-12
    p = random_points(g, 1, np.random.default_rng(3))[0]
    assert pullback_defect(eta, p, "S3", +1) < 1e-12


def test_near_real_modulus_guard():
    with pytest.raises(NearRealModulus):
        z1_point(GeneralCurveParams(0.4 + 1e-9j, 1.0))


def test_s3_image_of_base_is_itself(data):
    p = CurvePoint(-1 + 0j, cmath.sqrt(data.params.R(-1.0)))
    q = apply_s3(p)
    assert q.z == p.z

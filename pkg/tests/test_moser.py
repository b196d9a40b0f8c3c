import math

import numpy as np
import pytest

from seclab.numerics import DomainError
from seclab.moser import (FlowMap, MoserField, closedness_batch, defining_residual, flow_psi, in_declared_support,
                          moser_field_at, potential_A, pullback_batch, pullback_lambda_report, refinement_study,
                          select_sign, wiggled_profile_at)
from seclab.profile import EndProfile, s_phi_at, sample_corner_nbhd
from seclab.sector import omega_matrix
from seclab.suites import _support_points


@pytest.fixture(scope="module")
def support(plane):
    return _support_points(plane, 40, np.random.default_rng(11))


@pytest.fixture(scope="module")
def fm(plane):
    return FlowMap(MoserField(plane))


def test_field_vanishes_where_kappa_is_one(plane):
    assert np.all(moser_field_at(MoserField(plane), np.array([5.0, 0.0, 3.0, 9.0])) == 0.0)


def test_field_vanishes_without_bump(plane, rng):
    mf = MoserField(plane.without_bump())
    for p in rng.uniform(-3, 3, (20, plane.dim)):
        assert np.all(moser_field_at(mf, p) == 0.0)


def test_defining_equation_residual(plane, support):
    mf = MoserField(plane)
    assert max(defining_residual(mf, p) for p in support) <= 1e-10
    assert any(np.any(moser_field_at(mf, p)) for p in support)


def test_zero_field_flow_is_identity(plane, support):
    f0 = FlowMap(MoserField(plane.without_bump()))
    p = support[0]
    assert np.array_equal(flow_psi(f0, p), p) and potential_A(f0, p) == 0.0


def test_identity_off_support(plane, fm, rng):
    Q = rng.uniform([-4, -4, 0.01, -12], [4, 4, 3, 12], (400, 4))
    Q = np.array([q for q in Q if not in_declared_support(plane, q)])
    assert len(Q) > 50
    Psi, A = fm.run(Q)
    assert np.max(np.abs(Psi - Q)) <= 1e-12 and np.all(A == 0.0)


def test_step_halving_shrinks_drift_sixteenfold(fm, support):
    ref = refinement_study(fm, support[:10], steps=(4, 8, 16))
    assert all(3.5 <= o <= 4.6 for o in ref["drift_order"])


def test_flat_model_pullback_is_exact(plane, support):
    rep = pullback_lambda_report(FlowMap(MoserField(plane.without_bump())), support[0])
    assert max(rep.values()) <= 1e-10


def test_flow_preserves_omega_and_certifies_potential(fm, support):
    r = pullback_batch(fm, support)
    assert np.max(r["err_omega"]) <= 1e-6
    assert np.max(r["err_corrected"]) <= 1e-5
    assert np.max(r["err_raw"]) > 100 * np.max(r["err_corrected"])


def test_corrected_error_converges_at_second_order_or_better(fm, support):
    ref = refinement_study(fm, support[:10], steps=(2, 4, 8))
    e = ref["err_corrected"]
    assert e[0] > e[1] > e[2] or e[-1] < 1e-9
    assert math.log2(e[0] / e[1]) >= 2


def test_sign_choice_is_plus_one(plane, support):
    sigma, table = select_sign(plane, support[:8], steps=(20, 40))
    assert sigma == 1 and table[1][-1] < table[-1][-1]


def test_variational_jacobian_matches_fd(plane, fm, support):
    P = support[:5]
    Psi, D = fm.run_jacobian(P, 1.0, 100)
    h = 1e-6
    for j in range(plane.dim):
        e = np.zeros(plane.dim)
        e[j] = h
        num = (fm.run(P + e, 1.0, 100)[0] - fm.run(P - e, 1.0, 100)[0]) / (2 * h)
        np.testing.assert_allclose(D[:, :, j], num, atol=1e-6)
    M = omega_matrix(plane)
    for Dk in D:
        assert np.max(np.abs(Dk.T @ M @ Dk - M)) < 1e-8


def test_pulled_back_form_is_closed(fm, support):
    assert np.max(closedness_batch(FlowMap(fm.field, steps=100), support[:6])) <= 1e-5


def test_flow_time_must_lie_in_unit_interval(fm, support):
    with pytest.raises(DomainError):
        fm.run(support[:1], 1.5)


def test_wiggled_profile_examples(plane, fm, rng):
    ep = EndProfile(plane)
    off = np.array([1.5, 0.0, 0.3, 7.0])
    assert not in_declared_support(plane, off)
    assert wiggled_profile_at(fm, ep, off) == s_phi_at(ep, off)
    near_bd = np.array([1.2, 0.5, 0.5 * math.sqrt(2) * plane.smoother.wd, 2.0])
    assert wiggled_profile_at(fm, ep, near_bd) == s_phi_at(ep, near_bd)
    flat = FlowMap(MoserField(plane.without_bump()))
    ep0 = EndProfile(plane.without_bump())
    for p in sample_corner_nbhd(plane.without_bump(), 10, rng):
        assert wiggled_profile_at(flat, ep0, p) == s_phi_at(ep0, p)

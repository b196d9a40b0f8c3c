import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from seclab.numerics import DomainError, fd_gradient, fd_two_form
from seclab.profile import (EndProfile, Kappa, check_level_regularity, deformation_batch,
                            deformation_hessian_batch, grad_s_phi, in_corner_nbhd, kappa_at, lambda_kappa_at,
                            profile_args_batch, s_phi_at, s_phi_batch, s_phi_parts, sample_corner_nbhd)
from seclab.sector import lambda_at, radial_s_at
from seclab.suites import region_points


@pytest.fixture(scope="module")
def nbhd_points(plane):
    return sample_corner_nbhd(plane, 300, np.random.default_rng(3), s_max=6.0)


def test_kappa_examples(plane):
    sm = plane.smoother
    far = np.array([5.0, 0.0])
    assert kappa_at(plane, np.r_[far, math.sqrt(2) * sm.wd * 0.9, 20.0]) == 0.0
    assert kappa_at(plane, np.r_[far, 3.0, 4.0]) == 0.0
    assert kappa_at(plane, np.r_[far, sm.ht, plane.ledger.N1]) == 1.0
    assert kappa_at(plane.replace(fiber="Point"), np.array([3.0, 20.0])) == 0.0


@given(x=st.floats(-4, 4), y=st.floats(-4, 4), R=st.floats(0, 2), I=st.floats(-12, 12))
def test_kappa_in_unit_interval_with_consistent_gradient(plane, x, y, R, I):
    p = np.array([x, y, R, I])
    k, dk = Kappa(plane).value_and_grad(p)
    assert 0.0 <= k <= 1.0
    if np.hypot(x, y) > 1e-3 and R > 1e-3:
        num = fd_gradient(lambda q: Kappa(plane).value_and_grad(q)[0], p, 1e-6)
        assert np.max(np.abs(num - dk)) < 1e-5


def test_profile_equals_radial_on_s_region(plane):
    p = np.array([10.0, 0.0, 50.0, 50.0])
    val, _, info = s_phi_parts(EndProfile(plane), p)
    assert info["region"] == "s" and val == radial_s_at(plane, p)


def test_profile_equals_minus_log_r_on_mu_region(plane):
    p = np.array([1.1, 0.0, 0.005, 0.5])
    val, _, info = s_phi_parts(EndProfile(plane), p)
    assert info["region"] == "mu0" and val == -math.log(0.005)


@pytest.mark.parametrize("region", ["s", "mu"])
def test_region_formulas_are_exact(plane, region):
    ep = EndProfile(plane)
    for p in region_points(plane, region, 50, np.random.default_rng(5)):
        val, _, info = s_phi_parts(ep, p)
        ref = radial_s_at(plane, p) if region == "s" else -math.log(p[plane.iR(0)])
        assert val == ref


def test_cut_out_corner_raises(plane):
    with pytest.raises(DomainError, match="cut-out"):
        s_phi_at(EndProfile(plane), np.array([3.0, 0.0, 1e-4, 20.0]))


@pytest.mark.parametrize("r", [1.0, 3.0, 5.0])
def test_level_points_lie_on_level_with_nonzero_gradient(plane, rng, r):
    ep = EndProfile(plane)
    rep = check_level_regularity(ep, r, 30, rng)
    assert rep["found"] == 30 and rep["min_grad_norm"] > 0
    for p in rep["points"]:
        assert abs(s_phi_at(ep, p) - r) < 1e-9
        region = ep.region(ep.arguments(p)[0])
        if region == "s":
            assert abs(radial_s_at(plane, p) - r) < 1e-9
        elif region == "mu0":
            assert abs(p[plane.iR(0)] - math.exp(-r)) < 1e-9


def test_empty_level_is_reported(point, rng):
    rep = check_level_regularity(EndProfile(point), 1.0, 5, rng)
    assert rep["empty"] and rep["found"] == 0


def test_analytic_differential_matches_fd(plane, nbhd_points):
    ep = EndProfile(plane)
    for p in nbhd_points[:80]:
        if p[plane.iR(0)] < 0.05:
            continue
        num = fd_gradient(lambda q: s_phi_at(ep, q), p, 1e-6)
        ds = grad_s_phi(ep, p)
        assert np.max(np.abs(num - ds)) <= 1e-5 * max(1.0, np.max(np.abs(ds)))


def test_batch_matches_pointwise(plane, nbhd_points):
    ep = EndProfile(plane)
    vals = s_phi_batch(ep, nbhd_points)
    ref = np.array([s_phi_at(ep, p) for p in nbhd_points])
    interp = np.array([ep.region(ep.arguments(p)[0]) == "interp" for p in nbhd_points])
    np.testing.assert_allclose(vals[interp], ref[interp], rtol=0, atol=1e-12)
    np.testing.assert_allclose(vals, ref, atol=1e-9)


def test_batch_outside_neighbourhood_is_nan(plane):
    X = profile_args_batch(EndProfile(plane), np.array([[0.1, 0.0, 0.5, 1.0], [5.0, 0.0, 0.5, 1.0]]))
    assert np.isnan(X[0]).all() and not np.isnan(X[1]).any()
    assert not in_corner_nbhd(plane, np.array([0.1, 0.0, 0.5, 1.0]))


def test_lambda_kappa_examples(plane):
    kap = Kappa(plane)
    p1 = np.array([5.0, 0.0, 3.0, 9.0])                     # kappa = 1
    np.testing.assert_array_equal(lambda_kappa_at(plane, kap, p1), lambda_at(plane, p1))
    p0 = np.array([0.3, 0.2, 0.5, 1.0])                      # kappa = 0 inside F0, |I| < N0
    f, df = plane.f_and_df(p0)
    np.testing.assert_allclose(lambda_kappa_at(plane, kap, p0), lambda_at(plane, p0) - df, atol=1e-15)
    np.testing.assert_allclose(lambda_kappa_at(plane, kap, p0), lambda_at(plane.without_bump(), p0), atol=1e-15)
    p2 = np.array([1.5, 0.0, 0.002, 1.0])                    # outside supp f, kappa in (0, 1)
    np.testing.assert_array_equal(lambda_kappa_at(plane, kap, p2), lambda_at(plane, p2))


@given(x=st.floats(-2.5, 2.5), y=st.floats(-2.5, 2.5), R=st.floats(0.001, 1.0), I=st.floats(-9, 9))
def test_deformation_is_exact(plane, x, y, R, I):
    kap = Kappa(plane)
    p = np.array([x, y, R, I])
    d = fd_two_form(lambda q: lambda_kappa_at(plane, kap, q) - lambda_at(plane, q), p, 1e-5)
    assert np.max(np.abs(d.mat)) < 1e-6


def test_deformation_hessian_matches_fd(plane, nbhd_points):
    P = nbhd_points[:40]
    H = deformation_hessian_batch(plane, P)
    h = 1e-6
    for j in range(plane.dim):
        e = np.zeros(plane.dim)
        e[j] = h
        num = (deformation_batch(plane, P + e)[1] - deformation_batch(plane, P - e)[1]) / (2 * h)
        np.testing.assert_allclose(H[:, j, :], num, atol=2e-7)
    np.testing.assert_array_equal(H, np.swapaxes(H, 1, 2))

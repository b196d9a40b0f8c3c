from types import SimpleNamespace

import numpy as np
import pytest

from seclab.acs import ACSField, assemble_J_at
from seclab.floer import (IsotopyFamily, SectorialH, chain_rule_check, continuation_sign_check,
                          dist_to_boundary, energy_identity_residual, ham_vf_structure_check,
                          lagrangian_boundary_check, make_floer_jet, z_level)
from seclab.numerics import DomainError
from seclab.profile import sample_corner_nbhd
from seclab.sector import SectorialLagrangian, TiltedLine, lambda_at, preset, model_from_dict
from seclab.numerics import ConstructionError
from seclab.suites import _capped_lagrangian, region_points


@pytest.fixture(scope="module")
def half(point):
    return point.without_bump().replace(alpha=0.5)


@pytest.fixture(scope="module")
def point_setup(point):
    fld = ACSField(point)
    P = sample_corner_nbhd(point, 40, np.random.default_rng(3), s_max=6.0)
    return fld, P


def softplus():
    return (lambda z: z + np.log1p(np.exp(z)), lambda z: 1.0 + 1.0 / (1.0 + np.exp(-z)))


def test_jet_on_hamiltonian_orbit_is_stationary(point_setup):
    fld, P = point_setup
    H = SectorialH(fld.ep)
    for p in P[:10]:
        J = assemble_J_at(fld, p).J.mat
        jet = make_floer_jet(p, H.X(p), H, J)
        assert np.all(jet.v_tau == 0.0)
        assert energy_identity_residual(jet, H, J) == 0.0


def test_jet_without_hamiltonian_is_holomorphic(point_setup, rng):
    fld, P = point_setup
    flat = SimpleNamespace(X=lambda p: np.zeros(p.size))
    for p in P[:10]:
        J = assemble_J_at(fld, p).J.mat
        vt = rng.standard_normal(p.size)
        np.testing.assert_array_equal(make_floer_jet(p, vt, flat, J).v_tau, -J @ vt)


def test_jet_satisfies_floer_equation(point_setup, rng):
    fld, P = point_setup
    H = SectorialH(fld.ep, *softplus())
    for p in P:
        J = assemble_J_at(fld, p).J.mat
        jet = make_floer_jet(p, rng.standard_normal(p.size), H, J)
        lhs, rhs = J @ jet.v_tau, jet.v_t - H.X(p)
        assert np.max(np.abs(lhs - rhs)) <= 1e-9 * max(1.0, np.abs(rhs).max(), np.abs(J).max() ** 2)


@pytest.mark.parametrize("scale", [1.0, 10.0])
def test_energy_identity(point_setup, rng, scale):
    fld, P = point_setup
    rho, drho = softplus()
    H = SectorialH(fld.ep, lambda z: scale * rho(z), lambda z: scale * drho(z))
    for p in P:
        J = assemble_J_at(fld, p).J.mat
        jet = make_floer_jet(p, rng.standard_normal(p.size), H, J)
        assert energy_identity_residual(jet, H, J, relative=True) <= 1e-8


def test_hamiltonian_requires_increasing_rho(point_setup):
    fld, P = point_setup
    H = SectorialH(fld.ep, lambda z: 0 * z + 1.0, lambda z: 0 * z)
    with pytest.raises(DomainError):
        H.X(P[0])


def test_continuation_margin(point_setup, rng):
    fld, P = point_setup
    H = SectorialH(fld.ep)
    jet = make_floer_jet(P[0], rng.standard_normal(P[0].size), H, assemble_J_at(fld, P[0]).J.mat)
    frozen = IsotopyFamily(chi=lambda t: 0 * t + 0.5)
    assert continuation_sign_check(jet, frozen, 0.3, fld.ep)["margin"] == 0.0
    still = IsotopyFamily(rho=lambda s, z: z + 0 * s)
    assert continuation_sign_check(jet, still, 0.3, fld.ep)["margin"] == 0.0
    r = continuation_sign_check(jet, IsotopyFamily(), 0.3, fld.ep)
    assert r["margin"] > 0 and r["difference"] <= 1e-10
    bad = IsotopyFamily(chi=lambda t: 0.5 * (1 + np.tanh(t)))
    with pytest.raises(DomainError):
        continuation_sign_check(jet, bad, 0.3, fld.ep)


def test_isotopy_family_defaults_are_monotone():
    fc = IsotopyFamily().check(np.linspace(-5, 10, 31), np.linspace(-6, 6, 49))
    assert fc["min_d_ds"] >= 0 and fc["max_dchi"] <= 0 and fc["min_d_dz"] > 0


def test_lambda_vanishes_on_diagonal_ray(half):
    for t in (0.5, 2.0, 7.0):
        p = np.array([t, t])
        assert abs(lambda_at(half, p) @ np.array([1.0, 1.0])) <= 1e-14


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
def test_sectorial_lagrangian_boundary(alpha, rng):
    for fiber in ("Point", "Plane"):
        m = model_from_dict(preset(fiber=fiber, alpha=alpha))
        rep = lagrangian_boundary_check(_capped_lagrangian(alpha), m, 200, rng)
        assert rep["n_points"] > 0
        assert rep["lambda_max"] <= 1e-10 and rep["tangency_max"] <= 1e-8


def test_tilted_line_is_a_negative_control(half, rng):
    assert lagrangian_boundary_check(TiltedLine(1.0, 0.0), half, 50, rng)["lambda_max"] <= 1e-12
    assert lagrangian_boundary_check(TiltedLine(1.0, 0.5), half, 50, rng)["lambda_max"] > 1e-3


def test_level_and_distance(point):
    m = point.replace(alpha=0.5)
    assert dist_to_boundary(SectorialLagrangian(0.5, R_min=1.0), m) == pytest.approx(1.0)
    d = [dist_to_boundary(SectorialLagrangian(0.5, R_min=r), m) for r in (3.0, 2.0, 1.0, 0.5)]
    assert all(a > b for a, b in zip(d, d[1:]))
    L = SectorialLagrangian(0.5)
    assert z_level(L, m) >= np.log(0.5 * 0.5 * L.R_join**2)


def test_cap_construction_reports_dips():
    with pytest.raises(ConstructionError, match="R_min"):
        SectorialLagrangian(0.25, R_min=2.0).curve(np.zeros(1))
    assert _capped_lagrangian(0.25).R_min < 2.0
    assert _capped_lagrangian(1.0) is None


def test_structure_coefficients(point, rng):
    fld = ACSField(point)
    for p in region_points(point, "s", 5, rng):
        r = ham_vf_structure_check(fld.ep, p)
        assert abs(r["c_dI"]) <= 1e-6 and r["formula_dev"] <= 1e-6
    for p in sample_corner_nbhd(point, 40, rng, s_max=6.0):
        try:
            r = ham_vf_structure_check(fld.ep, p)
        except Exception:
            continue
        assert r["formula_dev"] <= 1e-6 and r["min_coeff"] >= -1e-8


def test_chain_rule(plane, point_setup):
    fld, P = point_setup
    P = P[P[:, 0] > 1e-4]
    assert chain_rule_check(SectorialH(fld.ep, *softplus()), P).max() <= 1e-6
    fp = ACSField(plane)
    Q = sample_corner_nbhd(plane, 20, np.random.default_rng(5), s_max=6.0)
    Q = Q[Q[:, plane.iR()] > 1e-4]
    assert chain_rule_check(SectorialH(fp.ep), Q).max() <= 1e-6

import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from seclab.acs import (ACSField, assemble_J_at, complete_block, convex_interp_check, d_sign_sweep, det_D_at,
                        det_D_bruteforce, fiber_A_at, fiber_scale_r, levi_form_at, pinching_lower_bound,
                        pullback_J_at, reference_J, solve_ab, solve_etas, square_defect, tameness_margin,
                        u_vector_at)
from seclab.moser import FlowMap, MoserField, in_declared_support
from seclab.numerics import (ConstructionError, DegeneracyError, DomainError, TwoForm, fd_gradient,
                             fd_two_form)
from seclab.profile import EndProfile, s_phi_parts, sample_corner_nbhd
from seclab.sector import ConstantsLedger
from seclab.suites import region_points

ROT = np.array([[0.0, -1.0], [1.0, 0.0]])
unit = st.floats(-3.0, 3.0, allow_nan=False)


@pytest.fixture(scope="module")
def plane_pts(plane):
    return sample_corner_nbhd(plane, 200, np.random.default_rng(21), s_max=6.0)


@pytest.fixture(scope="module")
def point_pts(point):
    return sample_corner_nbhd(point, 200, np.random.default_rng(22), s_max=6.0)


# -- block algebra ------------------------------------------------------------

def test_complete_block_examples():
    blk = complete_block(ROT, np.zeros(2), 0.0, 1.0)
    assert (blk.c, blk.d) == (-1.0, 0.0) and np.all(blk.eta_v == 0.0)
    assert square_defect(blk.matrix()) == 0.0
    blk = complete_block(ROT, np.zeros(2), 1.0, 2.0)
    assert (blk.c, blk.d) == (-1.0, -1.0)
    assert 1.0 + 2.0 * blk.c == -1.0
    with pytest.raises(ConstructionError, match="non-zero"):
        complete_block(ROT, np.zeros(2), 1.0, 0.0)


@given(a=unit, b=unit, e1=unit, e2=unit)
def test_completed_block_squares_to_minus_identity(a, b, e1, e2):
    assume(abs(b) > 0.05)
    G = complete_block(ROT, np.array([e1, e2]), a, b).matrix()
    assert square_defect(G) <= 1e-10 * max(1.0, np.abs(G).max() ** 2)


def test_solve_ab_examples():
    assert solve_ab((1, 0), (0, 1)) == (0.0, -1.0, 1.0, -0.0)
    assert solve_ab((0, 1), (1, 0)) == (0.0, 1.0, -1.0, -0.0)
    with pytest.raises(DegeneracyError, match="span"):
        solve_ab((1, 0), (2, 0))


@given(u1=unit, u2=unit, w1=unit, w2=unit)
def test_solve_ab_solves_its_system(u1, u2, w1, w2):
    det = u1 * w2 - u2 * w1
    assume(abs(det) > 1e-2)
    a, b, c, d = solve_ab((u1, u2), (w1, w2))
    scale = max(1.0, abs(a), abs(b), abs(c)) ** 2
    assert abs(a * u1 + b * u2 - w1) <= 1e-10 * scale
    assert abs(c * u1 + d * u2 - w2) <= 1e-10 * scale
    assert abs(a * a + b * c + 1) <= 1e-10 * scale and d == -a


def test_solve_etas_examples(rng):
    a, b, c, d = solve_ab((0.3, 1.2), (-0.7, 0.4))
    eu, ev = solve_etas(ROT, a, c, (0.3, 1.2), np.zeros(2))
    assert np.all(eu == 0) and np.all(ev == 0)
    target = rng.standard_normal(2)
    eu, ev = solve_etas(ROT, a, c, (0.3, 1.2), target)
    assert np.max(np.abs(0.3 * eu + 1.2 * ev - target)) <= 1e-10
    assert square_defect(complete_block(ROT, eu, a, b).matrix()) <= 1e-10
    assert solve_etas(np.zeros((0, 0)), a, c, (0.3, 1.2), np.zeros(0))[0].size == 0
    with pytest.raises(DegeneracyError):
        solve_etas(ROT, a, c, (0.0, 0.0), target)


# -- fibre block --------------------------------------------------------------

def test_fiber_scale_example():
    assert fiber_scale_r(10.0, 1.0, 2.0) == -5.0


def test_fiber_block_squares_to_minus_identity(plane, plane_pts):
    fld = ACSField(plane)
    checked = 0
    for p in plane_pts[:60]:
        try:
            A = fiber_A_at(fld, p).mat
        except (DomainError, ValueError):
            continue
        assert np.max(np.abs(A @ A + np.eye(2))) <= 1e-10
        checked += 1
    assert checked > 30


def test_fiber_block_errors(plane, point):
    with pytest.raises(DomainError):
        fiber_A_at(ACSField(point), np.array([0.3, 7.0]))
    with pytest.raises(DomainError):
        fiber_A_at(ACSField(plane), np.array([0.0, 0.0, 0.3, 7.0]))


# -- u vector -----------------------------------------------------------------

def test_u_vector_on_linear_regions(plane, rng):
    fld = ACSField(plane)
    for p in region_points(plane, "mu", 10, rng):
        assert u_vector_at(fld, p) == (1.0, -0.0) or u_vector_at(fld, p) == (1.0, 0.0)
    for p in region_points(plane, "s", 10, rng):
        u = np.array(u_vector_at(fld, p))
        _, _, info = s_phi_parts(fld.ep, p)
        ds = info["ds"][2:]
        assert abs(u[0] * ds[1] - u[1] * ds[0]) <= 1e-15 * np.abs(ds).max()


def test_u_vector_matches_fd_on_point_model(point, point_pts):
    fld = ACSField(point)
    ep = fld.ep
    for p in point_pts[:40]:
        if ep.region(ep.arguments(p)[0]) != "interp" or p[0] < 1e-3:
            continue
        phi = lambda q: float(ep.phi(ep.arguments(q)[0]))
        np.testing.assert_allclose(u_vector_at(fld, p), fd_gradient(phi, p, 1e-7), atol=1e-6)


# -- assembled structure ------------------------------------------------------

def test_assembled_structure_on_point_model(point, point_pts):
    fld = ACSField(point)
    for p in point_pts:
        asm = assemble_J_at(fld, p)
        assert asm.square_defect <= 1e-10
        assert asm.duality_residual <= 1e-8


def test_assembled_structure_on_plane_model(plane, plane_pts):
    fld = ACSField(plane)
    for p in plane_pts:
        asm = assemble_J_at(fld, p)
        G = asm.G.mat
        assert np.all(G[2:, :2] == 0.0)
        assert asm.duality_residual <= 1e-8
        assert asm.square_defect <= 1e-10 * max(1.0, np.abs(G).max() ** 2)


def test_reference_structure_is_tame(plane):
    assert tameness_margin(plane, reference_J(plane).mat)["eig_min"] == pytest.approx(1.0)


def test_pullback_examples(plane, plane_pts):
    fld = ACSField(plane)
    fm = FlowMap(MoserField(plane))
    off = next(p for p in plane_pts if not in_declared_support(plane, p))
    pj = pullback_J_at(fld, fm, off)
    np.testing.assert_allclose(pj["J"].mat, assemble_J_at(fld, off).J.mat, atol=1e-12)
    flat = plane.without_bump()
    p0 = plane_pts[0]
    pj0 = pullback_J_at(ACSField(flat), FlowMap(MoserField(flat)), p0)
    np.testing.assert_allclose(pj0["J"].mat, assemble_J_at(ACSField(flat), p0).J.mat, rtol=1e-9, atol=1e-12)
    moved = [p for p in plane_pts if in_declared_support(plane, p)][:10]
    for p in moved:
        assert pullback_J_at(fld, fm, p)["residual_corrected"] <= 5e-5


# -- determinant --------------------------------------------------------------

def test_determinant_at_full_eccentricity(plane, rng):
    m = plane.replace(alpha=1.0, ledger=ConstantsLedger(beta=0.5))
    fld = ACSField(m)
    for p in sample_corner_nbhd(m, 30, rng, s_max=6.0):
        _, _, info = s_phi_parts(fld.ep, p)
        d2 = info["grad_phi"][1]
        if d2 <= 0:
            continue
        assert det_D_at(fld, p) == pytest.approx(-d2 * info["X"][-1], rel=1e-12)


def test_determinant_bound_and_bruteforce(plane, point, plane_pts, point_pts):
    for m, pts in ((plane, plane_pts), (point, point_pts)):
        fld = ACSField(m)
        a, b = m.alpha, (m.ledger.beta if m.nf else 0.0)
        for p in pts[:80]:
            D = det_D_at(fld, p)
            assert abs(D - det_D_bruteforce(fld, p)) <= 1e-8 * max(1.0, abs(D))
            _, _, info = s_phi_parts(fld.ep, p)
            g, x = info["grad_phi"], info["X"][-1]
            if g[1] * x >= p[m.iR()] * g[0]:
                assert D <= -(a - b) * g[1] * x + 1e-12


def test_d_sign_sweep_and_violation(plane):
    assert d_sign_sweep(plane, 20)["violations"] == 0
    bad = plane.replace(ledger=ConstantsLedger(beta=2 * plane.alpha))
    assert d_sign_sweep(bad, 20)["violations"] >= 1


# -- Levi form and pinching ---------------------------------------------------

def test_levi_identity(plane, plane_pts):
    fld = ACSField(plane)
    for p in plane_pts[:8]:
        levi, target = levi_form_at(fld, p)
        assert np.max(np.abs(levi.mat - target.mat)) <= 1e-5


def test_pinching_on_point_model(point, point_pts, rng):
    fld = ACSField(point)
    eta = lambda p: TwoForm(np.array([[0.0, 1.0], [-1.0, 0.0]]))
    J = lambda p: assemble_J_at(fld, p).J.mat
    tame = [p for p in point_pts[:30] if tameness_margin(point, J(p))["eig_min"] > 0]
    assert tame
    assert pinching_lower_bound(eta, J, np.array(tame), 200, rng) > 0


def test_standard_plurisubharmonic_levi_positive(rng):
    J = lambda p: ROT
    psi = lambda q: float(q @ q)
    eta = lambda p: fd_two_form(lambda q: -J(q).T @ fd_gradient(psi, q, 1e-6), p, 1e-4)
    assert pinching_lower_bound(eta, J, rng.uniform(-2, 2, (10, 2)), 200, rng) > 0


def test_convex_interpolation_examples(rng):
    J = lambda p: ROT
    g1 = lambda q: math.sin(q[0]) + q[1] ** 2
    g2 = lambda q: q[0] * q[1] + math.exp(0.3 * q[1])
    lin = lambda x: (float(2 * x[0] - x[1]), np.array([2.0, -1.0]), np.zeros((2, 2)))
    quad = lambda x: (float(x @ x), 2 * x, 2 * np.eye(2))
    ident = lambda x: (float(x[0]), np.array([1.0]), np.zeros((1, 1)))
    for p in rng.uniform(-1, 1, (5, 2)):
        assert convex_interp_check(lin, [g1, g2], J, p) <= 1e-5
        assert convex_interp_check(ident, [g1], J, p) <= 1e-5
        assert convex_interp_check(quad, [g1, g2], J, p) <= 1e-4

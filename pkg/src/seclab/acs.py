"""Pointwise almost complex structures dual to the end-profile function.

Everything is built on the cotangent fibre: ``G xi = -xi o J`` (so ``G = -J^T``)
and the duality requirement reads ``G d s_phi = lambda_kappa``.  In the basis
``(fiber cobasis, dR, dI)`` the block matrix is::

    [[A, eta_u, eta_v],
     [0,   a,     b  ],
     [0,   c,     d  ]]

whose columns are the images of the basis covectors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .numerics import (ConstructionError, DegeneracyError, DomainError, LinearMap, RegionError,
                       TwoForm, fd_gradient, fd_two_form)
from .profile import EndProfile, Kappa, lambda_kappa_at, s_phi_parts
from .sector import SectorModel, lambda_free, omega_matrix

SQUARE_TOL = 1e-10

# covector action of the standard fibre rotation: dx -> -dy, dy -> dx (xi o J_F)
J_F_COVECTOR = np.array([[0.0, 1.0], [-1.0, 0.0]])


# ---------------------------------------------------------------------------
# linear algebra of one block

@dataclass(frozen=True)
class BlockACS:
    A: np.ndarray
    eta_u: np.ndarray
    eta_v: np.ndarray
    a: float
    b: float
    c: float
    d: float

    def matrix(self) -> np.ndarray:
        nf = self.A.shape[0]
        G = np.zeros((nf + 2, nf + 2))
        G[:nf, :nf] = self.A
        G[:nf, nf], G[:nf, nf + 1] = self.eta_u, self.eta_v
        G[nf:, nf:] = [[self.a, self.b], [self.c, self.d]]
        return G


def square_defect(G: np.ndarray) -> float:
    """Operator norm of ``G^2 + I``."""
    return float(np.linalg.norm(G @ G + np.eye(G.shape[0]), 2))


def complete_block(A: np.ndarray, eta_u: np.ndarray, a: float, b: float) -> BlockACS:
    """Fill in ``c, d, eta_v`` so that the block squares to ``-I``."""
    if b == 0.0:
        raise ConstructionError("the off-diagonal entry b must be a non-zero real number")
    A = np.atleast_2d(np.asarray(A, dtype=float)) if np.size(A) else np.zeros((0, 0))
    nf = A.shape[0]
    if nf and square_defect(A) > SQUARE_TOL:
        raise ConstructionError("fiber block does not square to -I")
    eta_u = np.asarray(eta_u, dtype=float).reshape(nf)
    c = -(1.0 + a * a) / b
    eta_v = -(A @ eta_u + a * eta_u) / c
    blk = BlockACS(A, eta_u, eta_v, float(a), float(b), float(c), float(-a))
    res = square_defect(blk.matrix())
    if res > SQUARE_TOL * max(1.0, np.abs(blk.matrix()).max() ** 2):
        raise DegeneracyError(f"completed block misses G^2 = -I by {res:.3g}")
    return blk


def solve_ab(u: Sequence[float], w: Sequence[float]) -> tuple[float, float, float, float]:
    """``(a, b, c, d)`` with ``a u1 + b u2 = w1``, ``c u1 + d u2 = w2``, ``a^2 + bc = -1``, ``d = -a``.

    Eliminating ``c`` and ``d`` leaves a linear system with the unique solution below
    whenever ``w`` is not a multiple of ``u``.
    """
    u1, u2 = float(u[0]), float(u[1])
    w1, w2 = float(w[0]), float(w[1])
    det = u1 * w2 - u2 * w1
    scale = math.hypot(u1, u2) * math.hypot(w1, w2)
    if scale == 0.0 or abs(det) <= 1e-14 * scale:
        raise DegeneracyError(f"target ({w1:.3g}, {w2:.3g}) lies in the span of u = ({u1:.3g}, {u2:.3g})")
    a = (w1 * w2 + u1 * u2) / det
    b = -(u1 * u1 + w1 * w1) / det
    c = -(1.0 + a * a) / b
    return a, b, c, -a


def solve_etas(A: np.ndarray, a: float, c: float, u: Sequence[float],
               target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Fiber coupling with ``u1 eta_u + u2 eta_v = target`` and ``eta_v = -(A + a) eta_u / c``."""
    u1, u2 = float(u[0]), float(u[1])
    if u1 == 0.0 and u2 == 0.0:
        raise DegeneracyError("u vanishes")
    target = np.asarray(target, dtype=float)
    nf = target.size
    if nf == 0:
        return np.zeros(0), np.zeros(0)
    I = np.eye(nf)
    op = u1 * I - (u2 / c) * (A + a * I)
    eta_u = np.linalg.solve(op, target)
    eta_v = -(A @ eta_u + a * eta_u) / c
    return eta_u, eta_v


def fiber_scale_r(exp_s: float, phi: float, d2phi: float) -> float:
    """``r = -e^s (phi^{-1} d2phi)^{-1}``."""
    if d2phi == 0.0:
        raise RegionError("d2 phi vanishes: fiber block is not determined by duality here")
    return -exp_s * phi / d2phi


def fiber_block_from(e: np.ndarray, r: float) -> np.ndarray:
    """``A`` with ``A e = r J_F e`` and ``A J_F e = -e / r`` (so ``A^2 = -I``)."""
    Je = J_F_COVECTOR @ e
    B = np.column_stack([e, Je])
    if abs(np.linalg.det(B)) < 1e-300:
        raise DomainError("fiber covector vanishes")
    core = np.array([[0.0, -1.0 / r], [r, 0.0]])
    return B @ core @ np.linalg.inv(B)


# reference fibre block used where duality leaves the fibre free (d2 phi ~ 0)
A_REFERENCE = -J_F_COVECTOR
# beyond this |r| the scaled block is ill-conditioned and the reference block is used
R_CAP = 1e3


def fiber_duality_factor(e: np.ndarray, lam_F: np.ndarray) -> float:
    """``c`` with ``-e o J_F = c lambda_F`` for the fibre part ``e`` of ``ds``."""
    v = -J_F_COVECTOR @ e
    n2 = float(lam_F @ lam_F)
    if n2 == 0.0:
        raise DomainError("lambda_F vanishes at the fiber origin")
    c = float(v @ lam_F) / n2
    if c == 0.0 or np.linalg.norm(v - c * lam_F) > 1e-12 * max(1.0, np.linalg.norm(v)):
        raise DomainError("fibre radial differential is not J_F-dual to a multiple of lambda_F")
    return c


def _fiber_block(m: SectorModel, p: np.ndarray, info: dict) -> tuple[np.ndarray, float]:
    """Scaled fibre block (so that ``A`` maps the fibre part of ``d s_phi`` to ``lambda_F``) and ``r``."""
    d2 = float(info["grad_phi"][-1])
    if d2 <= 0.0:
        return A_REFERENCE.copy(), math.inf
    e = info["ds"][:2]
    lam_F = np.array([-0.5 * p[1], 0.5 * p[0]])
    r = fiber_scale_r(math.exp(info["s"]), info["phi"], d2) / fiber_duality_factor(e, lam_F)
    if abs(r) > R_CAP:
        return A_REFERENCE.copy(), r
    return fiber_block_from(e, r), r


# ---------------------------------------------------------------------------
# field on the corner neighbourhood

@dataclass(frozen=True)
class ACSField:
    model: SectorModel
    ep: EndProfile = None  # type: ignore[assignment]
    kappa: Kappa = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.ep is None:
            object.__setattr__(self, "ep", EndProfile(self.model))
        if self.kappa is None:
            object.__setattr__(self, "kappa", Kappa(self.model))


@dataclass
class Assembled:
    G: LinearMap
    J: LinearMap
    blocks: list[BlockACS]
    square_defect: float
    duality_residual: float
    ds: np.ndarray
    lam: np.ndarray
    region: str
    extras: dict = field(default_factory=dict)


def u_vector_at(fld: ACSField, p: np.ndarray, i: int = 0) -> tuple[float, float]:
    """Unnormalized ``(u1, u2)``: the ``(dR_i, dI_i)`` coefficients of ``d phi(R, e^{-s})``."""
    m = fld.model
    _, _, info = s_phi_parts(fld.ep, np.asarray(p, float))
    grad, x, ds = info["grad_phi"], info["X"][-1], info["ds"]
    u1 = grad[i] - grad[-1] * x * ds[m.iR(i)]
    u2 = -grad[-1] * x * ds[m.iI(i)]
    if u1 == 0.0 and u2 == 0.0:
        raise DegeneracyError("u vanishes at this point")
    return float(u1), float(u2)


def fiber_A_at(fld: ACSField, p: np.ndarray) -> LinearMap:
    m = fld.model
    if not m.nf:
        raise DomainError("point fiber has no fiber block")
    p = np.asarray(p, dtype=float)
    if m.fiber_radius(p) == 0.0:
        raise DomainError("fiber origin: d_F s and lambda_F are dependent")
    _, _, info = s_phi_parts(fld.ep, p)
    if float(info["grad_phi"][-1]) == 0.0:
        raise RegionError("d2 phi vanishes: fiber block is not determined by duality here")
    return LinearMap(_fiber_block(m, p, info)[0], "cotangent")


def assemble_J_at(fld: ACSField, p: np.ndarray) -> Assembled:
    m = fld.model
    p = np.asarray(p, dtype=float)
    _, dsp, info = s_phi_parts(fld.ep, p)
    lam = lambda_kappa_at(m, fld.kappa, p)
    nf = m.nf
    G = np.zeros((m.dim, m.dim))
    abcd, us = [], []
    for i in range(m.k):
        r_, i_ = m.iR(i), m.iI(i)
        u = (dsp[r_], dsp[i_])
        a, b, c, d = solve_ab(u, (lam[r_], lam[i_]))
        G[np.ix_([r_, i_], [r_, i_])] = [[a, b], [c, d]]
        abcd.append((a, b, c, d))
        us.append(u)
    blocks: list[BlockACS] = []
    if nf:
        A, _ = _fiber_block(m, p, info)
        G[:2, :2] = A
        target = lam[:2] - A @ dsp[:2]
        j = int(np.argmax([math.hypot(*u) for u in us]))
        for i, (a, b, c, d) in enumerate(abcd):
            if i == j:
                eu, ev = solve_etas(A, a, c, us[i], target)
            else:
                eu, ev = np.zeros(2), np.zeros(2)
            G[:2, m.iR(i)], G[:2, m.iI(i)] = eu, ev
            blocks.append(BlockACS(A, eu, ev, a, b, c, d))
    else:
        for a, b, c, d in abcd:
            blocks.append(BlockACS(np.zeros((0, 0)), np.zeros(0), np.zeros(0), a, b, c, d))
    Gm = LinearMap(G, "cotangent")
    return Assembled(G=Gm, J=LinearMap(-G.T, "tangent"), blocks=blocks,
                     square_defect=square_defect(G),
                     duality_residual=float(np.max(np.abs(G @ dsp - lam))),
                     ds=dsp, lam=lam, region=info["region"])


def reference_J(model: SectorModel) -> LinearMap:
    """Standard compatible structure ``J = M^T`` (so ``omega(v, J v) = |v|^2``)."""
    return LinearMap(omega_matrix(model).T.copy(), "tangent")


def tameness_margin(model: SectorModel, J: np.ndarray, rng: Optional[np.random.Generator] = None,
                    n_dirs: int = 0) -> dict[str, float]:
    """Exact ``min_{|v|=1} omega(v, Jv)`` (smallest eigenvalue of sym(M J)) plus an optional sampled min."""
    M = omega_matrix(model)
    S = M @ J
    S = 0.5 * (S + S.T)
    out = {"eig_min": float(np.linalg.eigvalsh(S)[0])}
    if n_dirs and rng is not None:
        V = rng.standard_normal((n_dirs, model.dim))
        V /= np.linalg.norm(V, axis=1, keepdims=True)
        out["sampled_min"] = float(np.min(np.einsum("ij,jk,ik->i", V, S, V)))
    return out


# ---------------------------------------------------------------------------
# pullback to a lambda-sectorial structure

def pullback_J_at(fld: ACSField, fm, p: np.ndarray) -> dict:
    """Conjugate the assembled ``J`` at ``Psi_1(p)`` back by ``dPsi``; reports duality against lambda."""
    return pullback_J_batch(fld, fm, np.asarray(p, float)[None, :])[0]


def pullback_J_batch(fld: ACSField, fm, P: np.ndarray) -> list[dict]:
    """``pullback_J_at`` over the rows of ``P`` with a single batched flow."""
    from .moser import _derivs, _stencil, _lambda_full_batch

    m = fld.model
    P = np.atleast_2d(np.asarray(P, dtype=float))
    stencils = [_stencil(m, p, fm.h) for p in P]
    Y, Apot = fm.run(np.concatenate([S for S, _ in stencils]), 1.0)
    lam_all = _lambda_full_batch(m, P)
    out, pos = [], 0
    for j, (S, kinds) in enumerate(stencils):
        Ys, As = Y[pos:pos + len(S)], Apot[pos:pos + len(S)]
        pos += len(S)
        D = _derivs(Ys, kinds, fm.h)
        dA = _derivs(As[:, None], kinds, fm.h)[0]
        cond = np.linalg.cond(D)
        if not np.isfinite(cond) or cond > 1e10:
            raise DegeneracyError(f"flow Jacobian is near-singular (condition {cond:.3g})")
        asm = assemble_J_at(fld, Ys[0])
        Jl = np.linalg.solve(D, asm.J.mat @ D)
        ds_pull = D.T @ asm.ds
        lhs = -Jl.T @ ds_pull
        out.append({"J": LinearMap(Jl, "tangent"), "square_defect": square_defect(-Jl.T),
                    "residual": float(np.max(np.abs(lhs - lam_all[j]))),
                    "residual_corrected": float(np.max(np.abs(lhs - lam_all[j] - dA))),
                    "ds_pulled": ds_pull, "image": Ys[0]})
    return out


# ---------------------------------------------------------------------------
# determinant of the linear-independence pair

def _beta_eff(model: SectorModel) -> float:
    return model.ledger.beta if model.nf else 0.0


def det_D_at(fld: ACSField, p: np.ndarray) -> float:
    """``(1-alpha) R d1phi - (1-beta) (Q/h) e^{-s} d2phi`` with ``Q = (alpha I)^2 + ((1-alpha) R)^2``."""
    m = fld.model
    if m.k != 1:
        raise DomainError("determinant formula is stated for one corner factor")
    p = np.asarray(p, dtype=float)
    _, _, info = s_phi_parts(fld.ep, p)
    a = m.alpha
    R, I = p[m.iR()], p[m.iI()]
    h = 0.5 * ((1 - a) * R * R + a * I * I)
    Q = (a * I) ** 2 + ((1 - a) * R) ** 2
    g = info["grad_phi"]
    return float((1 - a) * R * g[0] - (1 - _beta_eff(m)) * (Q / h) * info["X"][-1] * g[1])


def det_D_bruteforce(fld: ACSField, p: np.ndarray) -> float:
    """2x2 determinant of the ``(dR, dI)`` parts of ``d phi(R, e^{-s})`` and the bump-free lambda."""
    m = fld.model
    u1, u2 = u_vector_at(fld, p)
    lam = lambda_free(m, np.asarray(p, float))
    return float(u1 * lam[m.iI()] - u2 * lam[m.iR()])


def point_from_profile_args(model: SectorModel, R: float, x2: float, frac: float = 0.5,
                            sign: float = 1.0) -> np.ndarray:
    """A chart point with ``R`` and ``e^{-s} = x2``; ``frac`` splits ``s`` between fiber and C (plane)."""
    a = model.alpha
    s = -math.log(x2)
    p = np.zeros(model.dim)
    p[model.iR()] = R
    if model.nf:
        beta = model.ledger.beta
        hmin = max(0.5 * (1 - a) * R * R, 1e-300)
        # choose log h_C between its minimum and s, keep the remainder for the fiber
        logh = math.log(hmin) + frac * max(s - math.log(hmin), 0.0) + 1e-9
        hF = math.exp((s - (1 - beta) * logh) / beta)
        p[0] = math.sqrt(2 * hF)
        hC = math.exp(logh)
    else:
        hC = math.exp(s)
    I2 = (2 * hC - (1 - a) * R * R) / a
    if I2 < 0:
        raise DomainError("no point with these profile arguments")
    p[model.iI()] = sign * math.sqrt(I2)
    return p


def _grid_points(model: SectorModel, R: np.ndarray, x2: np.ndarray, third: np.ndarray) -> np.ndarray:
    """Vectorized ``point_from_profile_args``; rows with no such point are NaN."""
    a = model.alpha
    s = -np.log(x2)
    P = np.full((R.size, model.dim), np.nan)
    P[:, model.iR()] = R
    with np.errstate(invalid="ignore", over="ignore", divide="ignore"):
        if model.nf:
            beta = model.ledger.beta
            logmin = np.log(np.maximum(0.5 * (1 - a) * R * R, 1e-300))
            logh = logmin + third * np.maximum(s - logmin, 0.0) + 1e-9
            hF = np.exp((s - (1 - beta) * logh) / beta)
            P[:, 0], P[:, 1] = np.sqrt(2 * hF), 0.0
            hC, sign = np.exp(logh), 1.0
        else:
            hC, sign = np.exp(s), third
        I2 = (2 * hC - (1 - a) * R * R) / a
        P[:, model.iI()] = np.where(I2 >= 0, sign * np.sqrt(I2), np.nan)
    return P


def d_sign_sweep(model: SectorModel, n: int = 50, *, strip: bool = False) -> dict:
    """Grade ``D < 0`` on an ``n^3`` grid of ``(R, e^{-s}, split)`` with ``phi > 0``.

    The default box is ``R <= eps0/2``, ``e^{-s} <= 2 sqrt(eps1)``; ``strip=True`` uses
    ``R <= 3 eps0 / 2`` instead.  For the point fiber the third axis is the sign of ``I``.
    """
    if model.k != 1:
        raise DomainError("determinant sweep is stated for one corner factor")
    L = model.ledger
    R_hi = 1.5 * L.eps0 if strip else 0.5 * L.eps0
    Rs = np.linspace(R_hi / n, R_hi, n)
    xs = np.linspace(2 * math.sqrt(L.eps1) / n, 2 * math.sqrt(L.eps1), n)
    thirds = np.linspace(0.05, 0.95, n) if model.nf else np.array([1.0, -1.0])
    RR, XX, TT = (g.ravel() for g in np.meshgrid(Rs, xs, thirds, indexing="ij"))
    val, grad, _ = model.smoother.evaluate(np.column_stack([RR, XX]))
    P = _grid_points(model, RR, XX, TT)
    keep = (val > 0) & np.all(np.isfinite(P), axis=1)
    P, RR, XX, grad = P[keep], RR[keep], XX[keep], grad[keep]
    a = model.alpha
    I = P[:, model.iI()]
    h = 0.5 * ((1 - a) * RR**2 + a * I**2)
    Q = (a * I) ** 2 + ((1 - a) * RR) ** 2
    D = (1 - a) * RR * grad[:, 0] - (1 - _beta_eff(model)) * (Q / h) * XX * grad[:, 1]
    if D.size == 0:
        return {"n_points": 0, "D_max": -math.inf, "violations": 0, "worst": None, "examples": []}
    bad = D >= 0
    j = int(np.argmax(D))
    return {"n_points": int(D.size), "D_max": float(D[j]), "violations": int(bad.sum()),
            "worst": [float(v) for v in P[j]],
            "examples": [[float(v) for v in row] for row in P[bad][:20]]}


# ---------------------------------------------------------------------------
# Levi form and pinching

def levi_form_at(fld: ACSField, p: np.ndarray, h: float = 1e-4) -> tuple[TwoForm, TwoForm]:
    """``-d(d s_phi o J)`` by FD of the one-form ``G d s_phi``, and the target ``d lambda_kappa``."""
    m = fld.model
    p = np.asarray(p, dtype=float)

    def theta(q: np.ndarray) -> np.ndarray:
        asm = assemble_J_at(fld, q)
        return asm.G.mat @ asm.ds

    lb = m.lower_bounds()
    levi = fd_two_form(theta, p, h, lower=lb, one_sided=True)
    target = fd_two_form(lambda q: lambda_kappa_at(m, fld.kappa, q), p, h, lower=lb, one_sided=True)
    return levi, target


def pinching_lower_bound(eta: Callable[[np.ndarray], TwoForm], J: Callable[[np.ndarray], np.ndarray],
                         points: np.ndarray, samples: int, rng: np.random.Generator) -> float:
    """``min eta(v, J v)`` over sampled unit tangent vectors at each point."""
    worst = math.inf
    for p in np.atleast_2d(points):
        E, Jm = eta(p).mat, J(p)
        V = rng.standard_normal((samples, p.size))
        V /= np.linalg.norm(V, axis=1, keepdims=True)
        vals = np.einsum("ij,jk,ik->i", V, E, V @ Jm.T)
        worst = min(worst, float(vals.min()))
    return worst


def convex_interp_check(phi: Callable[[np.ndarray], tuple[float, np.ndarray, np.ndarray]],
                        gs: Sequence[Callable[[np.ndarray], float]],
                        J: Callable[[np.ndarray], np.ndarray], p: np.ndarray,
                        h: float = 1e-3) -> float:
    """Compare ``-d(dG o J)`` for ``G = phi(g_1..g_m)`` with its chain-rule expansion.

    ``phi`` returns value, gradient and Hessian; ``J`` returns the tangent matrix.
    Both sides are assembled with finite differences (``-d(dG o J)`` with nested stencils).
    """
    p = np.asarray(p, dtype=float)
    hi = h / 10

    def G_of(q: np.ndarray) -> float:
        return float(phi(np.array([g(q) for g in gs]))[0])

    def dcJ(f: Callable[[np.ndarray], float]) -> Callable[[np.ndarray], np.ndarray]:
        # the one-form -df o J
        return lambda q: -J(q).T @ fd_gradient(f, q, hi)

    lhs = fd_two_form(dcJ(G_of), p, h).mat
    gvals = np.array([g(p) for g in gs])
    _, dphi, hphi = phi(gvals)
    dg = [fd_gradient(g, p, hi) for g in gs]
    dgJ = [-J(p).T @ d for d in dg]
    rhs = np.zeros_like(lhs)
    for i in range(len(gs)):
        for j in range(len(gs)):
            # dg_j wedge (-dg_i o J)
            rhs += hphi[j, i] * (np.outer(dg[j], dgJ[i]) - np.outer(dgJ[i], dg[j]))
        rhs += dphi[i] * fd_two_form(dcJ(gs[i]), p, h).mat
    return float(np.max(np.abs(lhs - rhs)))

"""Jet-level checks of the maximum-principle identities for Floer-type equations.

A jet is a point with the two partial derivatives ``(v_tau, v_t)`` of a map
``u(tau, t)``; jets built by ``make_floer_jet`` satisfy the Floer equation
``v_tau + J (v_t - X_H) = 0`` exactly at that point.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .numerics import DegeneracyError, DomainError, omega_dual
from .moser import FlowMap, _derivs, _stencil, in_declared_support
from .profile import EndProfile, s_phi_parts
from .sector import (LagrangianSample, SectorialLagrangian, SectorModel, TiltedLine, h_C,
                     ham_vf, lambda_at, liouville_Z_at, omega_at)

Scalar = Union[float, complex, np.ndarray]
LagrangianModel = Union[SectorialLagrangian, TiltedLine]


# ---------------------------------------------------------------------------
# wiggled profile with its differential

def wiggled_profile_parts(ep: EndProfile, fm: Optional[FlowMap], p: np.ndarray) -> tuple[float, np.ndarray]:
    """``s_{phi,kappa}(p)`` and its differential ``dPsi^T d s_phi(Psi(p))``."""
    vals, ds = wiggled_parts_batch(ep, fm, np.asarray(p, float)[None, :])
    return float(vals[0]), ds[0]


def wiggled_parts_batch(ep: EndProfile, fm: Optional[FlowMap], P: np.ndarray
                        ) -> tuple[np.ndarray, np.ndarray]:
    """Rows of ``wiggled_profile_parts``; flowed rows share one batched integration."""
    m = ep.model
    P = np.atleast_2d(np.asarray(P, dtype=float))
    vals, ds = np.empty(P.shape[0]), np.empty_like(P)
    inside = [fm is not None and in_declared_support(m, p) for p in P]
    stencils = {j: _stencil(m, P[j], fm.h) for j in range(P.shape[0]) if inside[j]}
    if stencils:
        Y, _ = fm.run(np.concatenate([S for S, _ in stencils.values()]), 1.0)
    pos = 0
    for j, p in enumerate(P):
        if not inside[j]:
            val, d, _ = s_phi_parts(ep, p)
            vals[j], ds[j] = val, d
            continue
        S, kinds = stencils[j]
        Ys = Y[pos:pos + len(S)]
        pos += len(S)
        val, d, _ = s_phi_parts(ep, Ys[0])
        vals[j], ds[j] = val, _derivs(Ys, kinds, fm.h).T @ d
    return vals, ds


def wiggled_values_batch(ep: EndProfile, fm: Optional[FlowMap], Q: np.ndarray) -> np.ndarray:
    """``s_phi(Psi_1(q))`` on the rows of ``Q`` (values only)."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if fm is not None:
        Q = fm.run(Q, 1.0)[0]
    return np.array([s_phi_parts(ep, q)[0] for q in Q])


@dataclass(frozen=True)
class SectorialH:
    """``H = rho(s_{phi,kappa})``; ``fm = None`` means the flow is the identity (f = 0).

    ``prepare(P)`` precomputes the profile at many points with one batched flow.
    """
    ep: EndProfile
    rho: Callable[[Scalar], Scalar] = lambda z: z
    drho: Callable[[Scalar], Scalar] = lambda z: 1.0 + 0.0 * z
    fm: Optional[FlowMap] = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def prepare(self, P: np.ndarray) -> None:
        vals, ds = wiggled_parts_batch(self.ep, self.fm, P)
        for p, v, d in zip(np.atleast_2d(P), vals, ds):
            self._cache[np.asarray(p, float).tobytes()] = (float(v), d)

    def profile(self, p: np.ndarray) -> tuple[float, np.ndarray]:
        p = np.asarray(p, dtype=float)
        hit = self._cache.get(p.tobytes())
        return hit if hit is not None else wiggled_profile_parts(self.ep, self.fm, p)

    def value(self, p: np.ndarray) -> float:
        return float(self.rho(self.profile(p)[0]))

    def differential(self, p: np.ndarray) -> np.ndarray:
        z, dz = self.profile(p)
        d = float(self.drho(z))
        if d <= 0:
            raise DomainError("rho' must be positive")
        return d * dz

    def X(self, p: np.ndarray) -> np.ndarray:
        return omega_dual(omega_at(self.ep.model), self.differential(p))


@dataclass(frozen=True)
class IsotopyFamily:
    """``s -> rho^s`` with ``d rho^s / ds >= 0`` and an elongation ``chi`` with ``chi' <= 0``.

    Callables must accept complex arguments (derivatives are taken by complex step).
    Default: ``rho^s(z) = z + s log(1 + e^z)`` and ``chi(tau) = (1 - tanh tau) / 2``.
    """
    rho: Callable[[Scalar, Scalar], Scalar] = lambda s, z: z + s * np.log1p(np.exp(z))
    chi: Callable[[Scalar], Scalar] = lambda tau: 0.5 * (1 - np.tanh(tau))

    def d_ds(self, s: float, z: float) -> float:
        return _cstep(lambda x: self.rho(x, z), s)

    def d_dz(self, s: float, z: float) -> float:
        return _cstep(lambda x: self.rho(s, x), z)

    def dchi(self, tau: float) -> float:
        return _cstep(self.chi, tau)

    def check(self, z_grid: np.ndarray, tau_grid: np.ndarray) -> dict[str, float]:
        s_grid = np.linspace(0.0, 1.0, 21)
        return {"min_d_ds": min(self.d_ds(s, z) for s in s_grid for z in z_grid),
                "min_d_dz": min(self.d_dz(s, z) for s in s_grid for z in z_grid),
                "max_dchi": max(self.dchi(t) for t in tau_grid)}


def _cstep(f: Callable[[complex], Scalar], x: float, h: float = 1e-30) -> float:
    """Complex-step derivative (exact to roundoff for real-analytic closed forms)."""
    return float(np.imag(f(complex(x, h))) / h)


@dataclass(frozen=True)
class Jet1:
    p: np.ndarray
    v_tau: np.ndarray
    v_t: np.ndarray


def make_floer_jet(p: np.ndarray, v_t: np.ndarray, H: SectorialH, J: np.ndarray) -> Jet1:
    p = np.asarray(p, dtype=float)
    v_t = np.asarray(v_t, dtype=float)
    v_tau = -J @ (v_t - H.X(p))
    return Jet1(p, v_tau, v_t)


def energy_identity_residual(jet: Jet1, H: SectorialH, J: np.ndarray, relative: bool = False) -> float:
    """``d lambda(v_tau, v_t) - [d lambda(v_tau, J v_tau) - rho'(s) d s(v_tau)]``.

    The identity is bilinear in ``(v_tau, v_t - X_H)``; ``relative=True`` divides by
    the product of their norms so that large ``|J|`` does not inflate the residual.
    """
    om = omega_at(H.ep.model)
    z, dz = H.profile(jet.p)
    lhs = om(jet.v_tau, jet.v_t)
    rhs = om(jet.v_tau, J @ jet.v_tau) - float(H.drho(z)) * float(dz @ jet.v_tau)
    res = float(abs(lhs - rhs))
    if relative:
        scale = float(np.linalg.norm(jet.v_tau) * np.linalg.norm(jet.v_t - H.X(jet.p)))
        return res / scale if scale > 0 else res
    return res


def continuation_sign_check(jet: Jet1, fam: IsotopyFamily, tau: float, ep: EndProfile,
                            fm: Optional[FlowMap] = None) -> dict[str, float]:
    """Gap between ``-d/dtau rho^{chi}(s o u)`` and ``-(rho^{chi})'(s o u) d/dtau(s o u)``.

    Along the jet ``s o u`` moves at speed ``ds(v_tau)``; the total tau-derivative is
    assembled by complex step and compared with the closed form ``-chi' d rho^s/ds``.
    """
    z0, dz = wiggled_profile_parts(ep, fm, jet.p)
    speed = float(dz @ jet.v_tau)
    total = _cstep(lambda x: fam.rho(fam.chi(x), z0 + (x - tau) * speed), tau)
    s_now = float(np.real(fam.chi(tau)))
    assembled = -total + fam.d_dz(s_now, z0) * speed
    closed = -fam.dchi(tau) * fam.d_ds(s_now, z0)
    if closed < -1e-12:
        raise DomainError("isotopy family violates chi' <= 0 or d rho/ds >= 0")
    return {"margin": closed, "assembled": assembled, "difference": abs(assembled - closed)}


# ---------------------------------------------------------------------------
# Lagrangians

def lagrangian_boundary_check(L: LagrangianModel, model: SectorModel, n: int,
                              rng: np.random.Generator) -> dict:
    """Z-tangency and ``|lambda(v)|`` on the claimed Z-invariant locus of ``L``."""
    smp: LagrangianSample = L.sample(model, n, rng)
    tang, lam_max, cap_tang = 0.0, 0.0, 0.0
    n_on = 0
    for p, T, on in zip(smp.points, smp.tangents, smp.on_rays):
        Z = liouville_Z_at(model, p)
        coef, *_ = np.linalg.lstsq(T.T, Z, rcond=None)
        res = float(np.linalg.norm(T.T @ coef - Z) / max(np.linalg.norm(Z), 1e-300))
        if not on:
            cap_tang = max(cap_tang, res)
            continue
        n_on += 1
        tang = max(tang, res)
        lam = lambda_at(model, p)
        Q, _ = np.linalg.qr(T.T)
        lam_max = max(lam_max, float(np.max(np.abs(Q.T @ lam))))
    return {"n_points": n_on, "tangency_max": tang, "lambda_max": lam_max,
            "cap_tangency_max": cap_tang}


def _param_grid(L: LagrangianModel, model: SectorModel, n: int) -> np.ndarray:
    if isinstance(L, SectorialLagrangian):
        I = np.linspace(-4 * L.I_join, 4 * L.I_join, 2 * (n // 2) + 1)
        R, _ = L.curve(I)
    else:
        R = np.linspace(1.0, 10.0, n)
        I = L.slope * R + L.offset
    P = np.zeros((I.size, model.dim))
    P[:, model.iR()], P[:, model.iI()] = R, I
    return P


def z_level(L: LagrangianModel, model: SectorModel, n: int = 4001) -> float:
    """Largest ``s_C`` over the part of ``L`` that is not a Z-ray."""
    P = _param_grid(L, model, n)
    if isinstance(L, SectorialLagrangian):
        cap = np.abs(P[:, model.iI()]) <= L.I_join
        if not np.any(cap):
            return math.log(h_C(model, np.array([0.0] * model.nf + [L.R_join, L.I_join])))
        P = P[cap]
    return max(math.log(h_C(model, p)) for p in P)


def dist_to_boundary(L: LagrangianModel, model: SectorModel, n: int = 4001) -> float:
    """``min R`` over a parameter grid (metric proxy for the distance to ``R = 0``)."""
    return float(np.min(_param_grid(L, model, n)[:, model.iR()]))


def ham_vf_structure_check(ep: EndProfile, p: np.ndarray, h: float = 1e-6) -> dict[str, float]:
    """Write ``X_{s_phi}`` as ``c1 d/dI + c2 X_s`` and compare with ``(d1phi, d2phi e^{-s}) / phi``."""
    m = ep.model
    if m.k != 1:
        raise DomainError("structure check is stated for one corner factor")
    p = np.asarray(p, dtype=float)
    info = s_phi_parts(ep, p)[2]
    X = ham_vf(m, lambda q: s_phi_parts(ep, q)[0], p, h=h)
    om = omega_at(m)
    Xs = omega_dual(om, info["ds"])
    dI = np.zeros(m.dim)
    dI[m.iI()] = 1.0
    B = np.column_stack([dI, Xs])
    if np.linalg.matrix_rank(B, tol=1e-12 * max(1.0, np.abs(B).max())) < 2:
        raise DegeneracyError("d/dI and X_s are parallel here")
    coef, *_ = np.linalg.lstsq(B, X, rcond=None)
    g = info["grad_phi"]
    expected = np.array([g[0], g[1] * info["X"][-1]]) / info["phi"]
    scale = max(1.0, float(np.abs(expected).max()))
    return {"c_dI": float(coef[0]), "c_Xs": float(coef[1]),
            "decomp_residual": float(np.linalg.norm(B @ coef - X)),
            "formula_dev": float(np.max(np.abs(coef - expected)) / scale),
            "min_coeff": float(min(coef))}


def chain_rule_check(H: SectorialH, P: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Per row: ``|X_H - rho'(s) X_s| / max(1, |rho'(s) X_s|)`` with a central-difference ``X_H``."""
    m = H.ep.model
    P = np.atleast_2d(np.asarray(P, dtype=float))
    E = h * np.eye(m.dim)
    Q = np.concatenate([np.concatenate([p + E, p - E]) for p in P])
    Hq = np.asarray(H.rho(wiggled_values_batch(H.ep, H.fm, Q)), dtype=float).reshape(P.shape[0], 2, m.dim)
    grad = (Hq[:, 0] - Hq[:, 1]) / (2 * h)
    M = omega_at(m).mat
    vals, ds = wiggled_parts_batch(H.ep, H.fm, P)
    dr = np.asarray(H.drho(vals), dtype=float).reshape(-1, 1)
    XH = np.linalg.solve(M.T, grad.T).T
    Xs = np.linalg.solve(M.T, ds.T).T
    ref = dr * Xs
    return np.max(np.abs(XH - ref), axis=1) / np.maximum(1.0, np.max(np.abs(ref), axis=1))

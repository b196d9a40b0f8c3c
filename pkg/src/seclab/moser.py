"""Deformation flow taking the kappa-deformed Liouville form back to the original one.

The flow is driven by the autonomous field ``X`` with ``X -| omega = sigma d g``,
``g = (1 - kappa) f``, along the path ``lambda_t = lambda - t d g``.  Trajectories
carry the potential ``A_t = int_0^t lambda_s(X)(Psi_s) ds`` as an extra state
component so that ``Psi`` and ``A`` share the RK4 nodes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .numerics import DomainError, EscapeError, fd_two_form
from .profile import (EndProfile, Kappa, bump_and_deformation_batch, deformation_batch,
                      deformation_hessian_batch, s_phi_at)
from .sector import SectorModel, omega_matrix

DEFAULT_SIGMA = 1
DEFAULT_STEPS = 200
DEFAULT_H = 1e-5


@dataclass(frozen=True)
class MoserField:
    model: SectorModel
    kappa: Kappa = None  # type: ignore[assignment]
    sigma: int = DEFAULT_SIGMA

    def __post_init__(self) -> None:
        if self.sigma not in (1, -1):
            raise ValueError("sigma must be +1 or -1")
        if self.kappa is None:
            object.__setattr__(self, "kappa", Kappa(self.model))
        # X -| omega = M^T X, and M is a signed permutation, so the inverse is exact
        object.__setattr__(self, "_solve", np.linalg.inv(omega_matrix(self.model).T))

    def dg(self, P: np.ndarray) -> np.ndarray:
        return deformation_batch(self.model, P)[1]

    def field_batch(self, P: np.ndarray) -> np.ndarray:
        dg = self.dg(P)
        return self.sigma * dg @ self._solve.T

    def __call__(self, p: np.ndarray) -> np.ndarray:
        return moser_field_at(self, p)


def moser_field_at(mf: MoserField, p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    dg = mf.dg(p[None, :])[0]
    if not np.any(dg):
        return np.zeros_like(p)
    return mf.sigma * mf._solve @ dg


def defining_residual(mf: MoserField, p: np.ndarray) -> float:
    """``|X -| omega - sigma d g|`` at ``p``."""
    X = moser_field_at(mf, p)
    return float(np.max(np.abs(omega_matrix(mf.model).T @ X - mf.sigma * mf.dg(np.asarray(p)[None])[0])))


def in_declared_support(model: SectorModel, p: np.ndarray) -> bool:
    """Closed set containing ``supp d((1 - kappa) f)`` (so the flow is the identity off it)."""
    p = np.asarray(p, dtype=float)
    if model.bump.a == 0.0:
        return False
    N0 = model.bump.N0
    near_I = any(abs(p[model.iI(i)]) <= N0 for i in range(model.k))
    if not model.nf:
        return near_I
    rho = model.fiber_radius(p)
    if rho > model.bump.F0_radius:
        return False
    return near_I or rho >= model.bump.F0_radius / 2


@dataclass(frozen=True)
class FlowMap:
    field: MoserField
    steps: int = DEFAULT_STEPS
    h: float = DEFAULT_H

    def run(self, P: np.ndarray, t: float = 1.0, steps: Optional[int] = None
            ) -> tuple[np.ndarray, np.ndarray]:
        """Flow every row of ``P`` to time ``t``; returns ``(Psi_t(P), A_t(P))``."""
        if not 0.0 <= t <= 1.0:
            raise DomainError("flow time must lie in [0, 1]")
        n_steps = self.steps if steps is None else steps
        m = self.field.model
        X0 = np.array(np.atleast_2d(P), dtype=float)
        A0 = np.zeros(X0.shape[0])
        if t == 0.0 or m.bump.a == 0.0:
            return X0, A0
        # zeros of an autonomous field are fixed points: integrate only the moving rows
        moving = np.any(self.field.dg(X0) != 0.0, axis=1)
        if not np.any(moving):
            return X0, A0
        X, A = X0[moving], A0[moving]
        dt = t / n_steps
        rcols = [m.iR(i) for i in range(m.k)]

        sol = self.field.sigma * self.field._solve.T

        def rhs(s: float, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            _, df, _, dg = bump_and_deformation_batch(m, Y)
            V = dg @ sol
            lam = _lambda_free_batch(m, Y) + df - s * dg
            return V, np.einsum("ij,ij->i", lam, V)

        s = 0.0
        for _ in range(n_steps):
            k1, a1 = rhs(s, X)
            k2, a2 = rhs(s + dt / 2, X + dt / 2 * k1)
            k3, a3 = rhs(s + dt / 2, X + dt / 2 * k2)
            k4, a4 = rhs(s + dt, X + dt * k3)
            X = X + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            A = A + dt / 6 * (a1 + 2 * a2 + 2 * a3 + a4)
            s += dt
            bad = np.any(X[:, rcols] < 0, axis=1)
            if np.any(bad):
                j = int(np.flatnonzero(bad)[0])
                raise EscapeError(f"trajectory crossed R = 0 at t={s:.6g}", X[j].copy())
        X0[moving], A0[moving] = X, A
        return X0, A0

    def run_jacobian(self, P: np.ndarray, t: float = 1.0, steps: Optional[int] = None
                     ) -> tuple[np.ndarray, np.ndarray]:
        """``(Psi_t(P), dPsi_t(P))`` with the Jacobian from the variational equation."""
        n_steps = self.steps if steps is None else steps
        m = self.field.model
        X = np.array(np.atleast_2d(P), dtype=float)
        D = np.repeat(np.eye(m.dim)[None], X.shape[0], axis=0)
        if t == 0.0 or m.bump.a == 0.0:
            return X, D
        S = self.field.sigma * self.field._solve
        sol = S.T

        def rhs(Y: np.ndarray, Dy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            V = self.field.dg(Y) @ sol
            return V, np.einsum("ij,njk,nkl->nil", S, deformation_hessian_batch(m, Y), Dy)

        dt = t / n_steps
        for _ in range(n_steps):
            k1, l1 = rhs(X, D)
            k2, l2 = rhs(X + dt / 2 * k1, D + dt / 2 * l1)
            k3, l3 = rhs(X + dt / 2 * k2, D + dt / 2 * l2)
            k4, l4 = rhs(X + dt * k3, D + dt * l3)
            X = X + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            D = D + dt / 6 * (l1 + 2 * l2 + 2 * l3 + l4)
        return X, D


def _lambda_free_batch(m: SectorModel, P: np.ndarray) -> np.ndarray:
    lam = np.zeros_like(P)
    if m.nf:
        lam[:, 0], lam[:, 1] = -0.5 * P[:, 1], 0.5 * P[:, 0]
    a = m.alpha
    for i in range(m.k):
        lam[:, m.iR(i)] = -a * P[:, m.iI(i)]
        lam[:, m.iI(i)] = (1 - a) * P[:, m.iR(i)]
    return lam


def _df_batch(m: SectorModel, P: np.ndarray) -> np.ndarray:
    return deformation_batch(m, P, cutoff=False)[1]


def _lambda_full_batch(m: SectorModel, P: np.ndarray) -> np.ndarray:
    return _lambda_free_batch(m, P) + _df_batch(m, P)


def flow_psi(fm: FlowMap, p: np.ndarray, t: float = 1.0, steps: Optional[int] = None) -> np.ndarray:
    return fm.run(np.asarray(p, float)[None, :], t, steps)[0][0]


def potential_A(fm: FlowMap, p: np.ndarray, t: float = 1.0, steps: Optional[int] = None) -> float:
    return float(fm.run(np.asarray(p, float)[None, :], t, steps)[1][0])


# ---------------------------------------------------------------------------
# pullback certification

def _stencil(m: SectorModel, p: np.ndarray, h: float) -> tuple[np.ndarray, list[tuple[str, int]]]:
    """Points ``p`` and its per-coordinate FD neighbours, plus the scheme per coordinate."""
    lb = m.lower_bounds()
    rows = [p]
    kinds = []
    for i in range(p.size):
        e = np.zeros_like(p)
        e[i] = h
        if lb[i] is not None and p[i] - h < lb[i]:
            if p[i] < lb[i]:
                raise DomainError(f"coordinate {i} below chart bound")
            rows += [p + e, p + 2 * e]
            kinds.append(("forward", len(rows) - 2))
        else:
            rows += [p + e, p - e]
            kinds.append(("central", len(rows) - 2))
    return np.array(rows), kinds


def _derivs(vals: np.ndarray, kinds: list[tuple[str, int]], h: float) -> np.ndarray:
    """Column ``i``: derivative of ``vals`` along coordinate ``i`` (vals rows follow ``_stencil``)."""
    cols = []
    for kind, j in kinds:
        if kind == "central":
            cols.append((vals[j] - vals[j + 1]) / (2 * h))
        else:
            cols.append((-3 * vals[0] + 4 * vals[j] - vals[j + 1]) / (2 * h))
    return np.stack(cols, axis=-1)


def pullback_batch(fm: FlowMap, P: np.ndarray, t: float = 1.0, steps: Optional[int] = None
                   ) -> dict[str, np.ndarray]:
    """Per-point ``err_raw``, ``err_corrected``, ``err_omega`` and displacement."""
    m = fm.field.model
    P = np.atleast_2d(np.asarray(P, dtype=float))
    stencils, kinds_all = [], []
    for p in P:
        S, kinds = _stencil(m, p, fm.h)
        stencils.append(S)
        kinds_all.append(kinds)
    rows = np.concatenate(stencils)
    Y, A = fm.run(rows, t, steps)
    M = omega_matrix(m)
    out = {k: np.zeros(P.shape[0]) for k in ("err_raw", "err_corrected", "err_omega", "displaced")}
    lam_p = _lambda_full_batch(m, P)
    pos = 0
    for j, (S, kinds) in enumerate(zip(stencils, kinds_all)):
        Ys, As = Y[pos:pos + len(S)], A[pos:pos + len(S)]
        pos += len(S)
        D = _derivs(Ys, kinds, fm.h)           # D[:, i] = dPsi e_i
        dA = _derivs(As[:, None], kinds, fm.h)[0]
        lam_t = _lambda_full_batch(m, Ys[:1])[0] - t * fm.field.dg(Ys[:1])[0]
        pulled = D.T @ lam_t
        out["err_raw"][j] = np.max(np.abs(pulled - lam_p[j]))
        out["err_corrected"][j] = np.max(np.abs(pulled - lam_p[j] - dA))
        out["err_omega"][j] = np.max(np.abs(D.T @ M @ D - M))
        out["displaced"][j] = np.linalg.norm(Ys[0] - P[j])
    return out


def pullback_lambda_report(fm: FlowMap, p: np.ndarray, t: float = 1.0,
                           steps: Optional[int] = None) -> dict[str, float]:
    r = pullback_batch(fm, np.asarray(p, float)[None, :], t, steps)
    return {"err_raw": float(r["err_raw"][0]), "err_corrected": float(r["err_corrected"][0]),
            "err_omega": float(r["err_omega"][0]), "displaced_distance": float(r["displaced"][0])}


def _discrepancy(fm: FlowMap, Q: np.ndarray, t: float) -> np.ndarray:
    """Rows ``(Psi_t^* lambda_t - lambda)(q)``, with ``dPsi`` from the variational equation."""
    m = fm.field.model
    Y, D = fm.run_jacobian(Q, t)
    lam_t = _lambda_full_batch(m, Y) - t * fm.field.dg(Y)
    return np.einsum("nji,nj->ni", D, lam_t) - _lambda_full_batch(m, Q)


def closedness_defect(fm: FlowMap, p: np.ndarray, t: float = 1.0, h: float = 1e-4) -> float:
    """``max |d(Psi_t^* lambda_t - lambda)|`` by a FD exterior derivative of the discrepancy."""
    return float(closedness_batch(fm, np.asarray(p, float)[None, :], t, h)[0])


def closedness_batch(fm: FlowMap, P: np.ndarray, t: float = 1.0, h: float = 1e-4) -> np.ndarray:
    """``closedness_defect`` for every row of ``P`` with one batched integration."""
    m = fm.field.model
    stencils = [_stencil(m, p, h) for p in np.atleast_2d(P)]
    theta = _discrepancy(fm, np.concatenate([S for S, _ in stencils]), t)
    out, pos = [], 0
    for S, kinds in stencils:
        jac = _derivs(theta[pos:pos + len(S)], kinds, h)      # jac[j, i] = d_i theta_j
        pos += len(S)
        out.append(float(np.max(np.abs(jac - jac.T))))
    return np.array(out)


def refinement_study(fm: FlowMap, P: np.ndarray, steps: tuple[int, ...] = (2, 4, 8)
                     ) -> dict[str, list[float]]:
    """Worst ``err_corrected`` and endpoint drift per step count, with observed orders."""
    errs, ends = [], []
    for n in steps:
        r = pullback_batch(fm, P, 1.0, n)
        errs.append(float(np.max(r["err_corrected"])))
        ends.append(fm.run(P, 1.0, n)[0])
    ref = fm.run(P, 1.0, 4 * steps[-1])[0]
    drift = [float(np.max(np.abs(e - ref))) for e in ends]
    order = [math.log2(drift[i] / drift[i + 1]) if drift[i + 1] > 0 else math.inf
             for i in range(len(drift) - 1)]
    return {"steps": list(steps), "err_corrected": errs, "drift": drift, "drift_order": order}


def select_sign(model: SectorModel, P: np.ndarray, steps: tuple[int, int] = (50, 100)
                ) -> tuple[int, dict[int, list[float]]]:
    """Pick sigma whose potential-corrected pullback error shrinks under refinement."""
    table: dict[int, list[float]] = {}
    for sigma in (1, -1):
        fm = FlowMap(MoserField(model, sigma=sigma))
        table[sigma] = [float(np.max(pullback_batch(fm, P, 1.0, n)["err_corrected"])) for n in steps]
    best = min(table, key=lambda s: table[s][-1])
    return best, table


def wiggled_profile_at(fm: FlowMap, ep: EndProfile, p: np.ndarray) -> float:
    """``s_phi(Psi_1(p))``; the flow is skipped when ``p`` lies off the deformation support."""
    p = np.asarray(p, dtype=float)
    if not in_declared_support(fm.field.model, p):
        return s_phi_at(ep, p)
    return s_phi_at(ep, flow_psi(fm, p))

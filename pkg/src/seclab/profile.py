"""End-profile function, the cut-off kappa and the deformed Liouville form."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from .numerics import DomainError, RegionError, smoothstep5
from .sector import (SectorModel, in_excluded_box, lambda_at, radial_s_parts)
from .smoothing import Smoother


# ---------------------------------------------------------------------------
# kappa

@dataclass(frozen=True)
class Kappa:
    model: SectorModel

    @property
    def R_band(self) -> tuple[float, float]:
        sm = self.model.smoother
        return math.sqrt(2) * sm.wd, sm.ht

    def value_and_grad(self, p: np.ndarray) -> tuple[float, np.ndarray]:
        m = self.model
        p = np.asarray(p, dtype=float)
        factors, grads = [], []
        if m.nf:
            rho = m.fiber_radius(p)
            v, d, _ = smoothstep5(rho, m.F0_radius, m.F0prime_radius)
            g = np.zeros(m.dim)
            if rho > 0:
                g[0], g[1] = float(d) * p[0] / rho, float(d) * p[1] / rho
            factors.append(float(v))
            grads.append(g)
        else:
            # the point fiber is contained in F0
            return 0.0, np.zeros(m.dim)
        lo, hi = self.R_band
        L = m.ledger
        for i in range(m.k):
            R, I = p[m.iR(i)], p[m.iI(i)]
            v, d, _ = smoothstep5(R, lo, hi)
            g = np.zeros(m.dim)
            g[m.iR(i)] = float(d)
            factors.append(float(v))
            grads.append(g)
            v, d, _ = smoothstep5(abs(I), L.N0, L.N1)
            g = np.zeros(m.dim)
            g[m.iI(i)] = float(d) * math.copysign(1.0, I)
            factors.append(float(v))
            grads.append(g)
        val = float(np.prod(factors))
        grad = np.zeros(m.dim)
        for j, g in enumerate(grads):
            grad += g * float(np.prod([factors[i] for i in range(len(factors)) if i != j]))
        return val, grad


def kappa_at(model: SectorModel, p: np.ndarray) -> float:
    return Kappa(model).value_and_grad(p)[0]


def lambda_kappa_at(model: SectorModel, kappa: Kappa, p: np.ndarray) -> np.ndarray:
    """``lambda - d((1 - kappa) f)`` with the product rule done analytically."""
    lam = lambda_at(model, p)
    if model.bump.a == 0.0:
        return lam
    f, df = model.f_and_df(p)
    k, dk = kappa.value_and_grad(p)
    return lam - (1 - k) * df + f * dk


def deformation_form(model: SectorModel, kappa: Kappa, p: np.ndarray) -> tuple[float, np.ndarray]:
    """``(1 - kappa) f`` and its differential."""
    f, df = model.f_and_df(p)
    k, dk = kappa.value_and_grad(p)
    return (1 - k) * f, (1 - k) * df - f * dk


def deformation_batch(model: SectorModel, P: np.ndarray, cutoff: bool = True
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``deformation_form`` over the rows of ``P``; ``cutoff=False`` gives ``(f, df)``."""
    f, df, g, dg = bump_and_deformation_batch(model, P)
    return (g, dg) if cutoff else (f, df)


def bump_and_deformation_batch(model: SectorModel, P: np.ndarray
                               ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """``(f, df, (1 - kappa) f, d((1 - kappa) f))`` over the rows of ``P``."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    n, m = P.shape[0], model
    if m.bump.a == 0.0:
        z, dz = np.zeros(n), np.zeros((n, m.dim))
        return z, dz, z, dz
    rho = np.hypot(P[:, 0], P[:, 1]) if m.nf else np.zeros(n)
    Is = [P[:, m.iI(i)] for i in range(m.k)]
    chi, dchi, etas, detas = m.bump.parts(rho, Is)
    if not m.nf:
        chi, dchi = np.ones(n), np.zeros(n)
    prod = np.prod(etas, axis=0)
    f = m.bump.a * chi * prod
    df = np.zeros((n, m.dim))
    if m.nf:
        with np.errstate(divide="ignore", invalid="ignore"):
            gr = np.where(rho > 0, m.bump.a * dchi * prod / rho, 0.0)
        df[:, 0], df[:, 1] = gr * P[:, 0], gr * P[:, 1]
    for i in range(m.k):
        others = np.prod([etas[j] for j in range(m.k) if j != i], axis=0) if m.k > 1 else 1.0
        df[:, m.iI(i)] = m.bump.a * chi * detas[i] * others
    if not m.nf:
        return f, df, f, df
    # kappa factors
    factors, grads = [], []
    v, d, _ = smoothstep5(rho, m.F0_radius, m.F0prime_radius)
    gk = np.zeros((n, m.dim))
    with np.errstate(divide="ignore", invalid="ignore"):
        rr = np.where(rho > 0, d / rho, 0.0)
    gk[:, 0], gk[:, 1] = rr * P[:, 0], rr * P[:, 1]
    factors.append(v)
    grads.append(gk)
    lo, hi = Kappa(m).R_band
    L = m.ledger
    for i in range(m.k):
        v, d, _ = smoothstep5(P[:, m.iR(i)], lo, hi)
        gk = np.zeros((n, m.dim))
        gk[:, m.iR(i)] = d
        factors.append(v)
        grads.append(gk)
        I = P[:, m.iI(i)]
        v, d, _ = smoothstep5(np.abs(I), L.N0, L.N1)
        gk = np.zeros((n, m.dim))
        gk[:, m.iI(i)] = d * np.sign(I)
        factors.append(v)
        grads.append(gk)
    F = np.array(factors)
    kap = np.prod(F, axis=0)
    dk = np.zeros((n, m.dim))
    for j, gj in enumerate(grads):
        dk += gj * np.prod(np.delete(F, j, axis=0), axis=0)[:, None]
    return f, df, (1 - kap) * f, (1 - kap)[:, None] * df - f[:, None] * dk


def _coord_factor(n: int, dim: int, c: int, v, d1, d2) -> tuple:
    g = np.zeros((n, dim))
    H = np.zeros((n, dim, dim))
    g[:, c] = d1
    H[:, c, c] = d2
    return np.broadcast_to(v, (n,)).astype(float), g, H


def _radial_factor(P: np.ndarray, dim: int, v, d1, d2) -> tuple:
    """Factor ``u(rho)`` with ``rho = |(y0, y1)|``; ``u'`` vanishes near the fibre origin."""
    n = P.shape[0]
    rho = np.hypot(P[:, 0], P[:, 1])
    with np.errstate(divide="ignore", invalid="ignore"):
        e = np.where(rho[:, None] > 0, P[:, :2] / rho[:, None], 0.0)
        tang = np.where(rho > 0, d1 / rho, 0.0)
    g = np.zeros((n, dim))
    H = np.zeros((n, dim, dim))
    g[:, :2] = d1[:, None] * e
    ee = np.einsum("ni,nj->nij", e, e)
    H[:, :2, :2] = d2[:, None, None] * ee + tang[:, None, None] * (np.eye(2) - ee)
    return v, g, H


def _product(factors: list[tuple]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Value, gradient and Hessian of a product of factors given with their own derivatives."""
    vals = np.array([f[0] for f in factors])
    out_v = np.prod(vals, axis=0)
    out_g = np.zeros_like(factors[0][1])
    out_H = np.zeros_like(factors[0][2])
    F = len(factors)
    for j in range(F):
        rest = np.prod(np.delete(vals, j, axis=0), axis=0) if F > 1 else np.ones_like(out_v)
        out_g += factors[j][1] * rest[:, None]
        out_H += factors[j][2] * rest[:, None, None]
        for l in range(F):
            if l == j:
                continue
            rest2 = np.prod(np.delete(vals, [j, l], axis=0), axis=0) if F > 2 else np.ones_like(out_v)
            out_H += np.einsum("ni,nj->nij", factors[j][1], factors[l][1]) * rest2[:, None, None]
    return out_v, out_g, out_H


def deformation_hessian_batch(model: SectorModel, P: np.ndarray) -> np.ndarray:
    """Analytic Hessian of ``(1 - kappa) f`` on the rows of ``P``, shape ``(n, dim, dim)``."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    m, n = model, P.shape[0]
    if m.bump.a == 0.0:
        return np.zeros((n, m.dim, m.dim))
    bump = m.bump
    f_factors = []
    for i in range(m.k):
        I = P[:, m.iI(i)]
        v, d1, d2 = smoothstep5(np.abs(I), 0.0, bump.N0)
        f_factors.append(_coord_factor(n, m.dim, m.iI(i), 0.5 * (1 + v), 0.5 * d1 * np.sign(I), 0.5 * d2))
    if m.nf:
        rho = np.hypot(P[:, 0], P[:, 1])
        v, d1, d2 = smoothstep5(rho, bump.F0_radius / 2, bump.F0_radius)
        f_factors.append(_radial_factor(P, m.dim, 1.0 - v, -d1, -d2))
    fv, fg, fH = _product(f_factors)
    fv, fg, fH = bump.a * fv, bump.a * fg, bump.a * fH
    if not m.nf:
        return fH
    k_factors = [_radial_factor(P, m.dim, *smoothstep5(rho, m.F0_radius, m.F0prime_radius))]
    lo, hi = Kappa(m).R_band
    L = m.ledger
    for i in range(m.k):
        k_factors.append(_coord_factor(n, m.dim, m.iR(i), *smoothstep5(P[:, m.iR(i)], lo, hi)))
        I = P[:, m.iI(i)]
        v, d1, d2 = smoothstep5(np.abs(I), L.N0, L.N1)
        k_factors.append(_coord_factor(n, m.dim, m.iI(i), v, d1 * np.sign(I), d2))
    kv, kg, kH = _product(k_factors)
    # (1 - k) f: Hess = (1 - k) Hf - (dk df^T + df dk^T) - f Hk
    return ((1 - kv)[:, None, None] * fH - np.einsum("ni,nj->nij", kg, fg)
            - np.einsum("ni,nj->nij", fg, kg) - fv[:, None, None] * kH)


# ---------------------------------------------------------------------------
# end profile

@dataclass(frozen=True)
class EndProfile:
    model: SectorModel

    @property
    def phi(self) -> Smoother:
        return self.model.smoother

    def arguments(self, p: np.ndarray) -> tuple[np.ndarray, float, np.ndarray]:
        """Smoother arguments ``(R_1..R_k, e^{-s})`` plus ``s`` and ``ds``."""
        m = self.model
        s, ds, _ = radial_s_parts(m, p)
        X = np.array([p[m.iR(i)] for i in range(m.k)] + [math.exp(-s)])
        return X, s, ds

    def region(self, X: np.ndarray) -> str:
        sm = self.phi
        Rs, x = X[:-1], X[-1]
        if np.all(Rs >= sm.ht) and x <= sm.wd:
            return "s"
        for i in range(Rs.size):
            rest = np.delete(Rs, i)
            if Rs[i] <= sm.wd and x >= sm.ht and np.all(rest >= sm.ht):
                return f"mu{i}"
        return "interp"


def s_phi_parts(ep: EndProfile, p: np.ndarray) -> tuple[float, np.ndarray, dict]:
    """Value, analytic differential and the intermediate data."""
    m = ep.model
    p = np.asarray(p, dtype=float)
    X, s, ds = ep.arguments(p)
    val, grad, _ = ep.phi.evaluate(X)
    phi = float(val)
    if phi <= 0:
        raise DomainError(f"phi = {phi:.3g} <= 0: point lies in the cut-out corner")
    x = X[-1]
    dphi = np.zeros(m.dim)
    for i in range(m.k):
        dphi[m.iR(i)] += grad[i]
    dphi -= grad[-1] * x * ds
    region = ep.region(X)
    if region == "s":
        value = s
    elif region.startswith("mu"):
        value = -math.log(X[int(region[2:])])
    else:
        value = -math.log(phi)
    info = {"phi": phi, "grad_phi": grad, "X": X, "s": s, "ds": ds, "region": region}
    return value, -dphi / phi, info


def s_phi_at(ep: EndProfile, p: np.ndarray) -> float:
    return s_phi_parts(ep, p)[0]


def grad_s_phi(ep: EndProfile, p: np.ndarray) -> np.ndarray:
    return s_phi_parts(ep, p)[1]


def in_corner_nbhd(model: SectorModel, p: np.ndarray) -> bool:
    """``({s >= N2} u {R <= 2 eps0})`` minus the excluded box."""
    p = np.asarray(p, dtype=float)
    if in_excluded_box(model, p):
        return False
    near_bd = any(p[model.iR(i)] <= 2 * model.ledger.eps0 for i in range(model.k))
    if near_bd:
        return True
    try:
        return radial_s_parts(model, p)[0] >= model.ledger.N2
    except RegionError:
        return False


def sample_corner_nbhd(model: SectorModel, n: int, rng: np.random.Generator, *,
                       require_positive: bool = True, max_tries: int = 200,
                       s_max: Optional[float] = None) -> np.ndarray:
    """Uniform-ish samples of the corner neighbourhood where ``phi > 0``.

    ``s_max`` keeps only points with ``s_phi <= s_max`` (a compact window away from
    the boundary and infinity).
    """
    ep = EndProfile(model)
    out: list[np.ndarray] = []
    e0 = model.ledger.eps0
    for _ in range(max_tries):
        m = 4 * (n - len(out)) + 16
        P = np.zeros((m, model.dim))
        if model.nf:
            rho = rng.uniform(0.2, 3 * model.F0prime_radius, m)
            ang = rng.uniform(0, 2 * math.pi, m)
            P[:, 0], P[:, 1] = rho * np.cos(ang), rho * np.sin(ang)
        for i in range(model.k):
            near = rng.random(m) < 0.7
            P[:, model.iR(i)] = np.where(near, rng.uniform(0, 2 * e0, m), rng.uniform(0, 12.0, m))
            P[:, model.iI(i)] = rng.uniform(-14.0, 14.0, m)
        for p in P:
            if not in_corner_nbhd(model, p):
                continue
            if require_positive or s_max is not None:
                try:
                    val = s_phi_parts(ep, p)[0]
                except (DomainError, RegionError):
                    continue
                if s_max is not None and val > s_max:
                    continue
            out.append(p)
            if len(out) == n:
                return np.array(out)
    raise RuntimeError("could not sample enough points of the corner neighbourhood")


def profile_args_batch(ep: EndProfile, P: np.ndarray) -> np.ndarray:
    """Rows ``(R_1..R_k, e^{-s})``; NaN rows outside the corner neighbourhood."""
    m = ep.model
    P = np.atleast_2d(np.asarray(P, dtype=float))
    a, L = m.alpha, m.ledger
    R = np.stack([P[:, m.iR(i)] for i in range(m.k)], -1)
    I = np.stack([P[:, m.iI(i)] for i in range(m.k)], -1)
    h = np.sum(0.5 * ((1 - a) * R**2 + a * I**2), axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.log(h)
        if m.nf:
            hF = 0.5 * (P[:, 0] ** 2 + P[:, 1] ** 2)
            s = L.beta * np.log(hF) + (1 - L.beta) * s
    box = np.all((np.abs(I) <= L.N0) & (R <= 2 * L.eps0), axis=-1)
    if m.nf:
        box &= np.hypot(P[:, 0], P[:, 1]) <= m.F0_radius
    nbhd = ~box & (np.any(R <= 2 * L.eps0, axis=-1) | (s >= L.N2))
    ok = nbhd & np.isfinite(s)
    X = np.full((P.shape[0], m.k + 1), np.nan)
    X[ok, :-1] = R[ok]
    X[ok, -1] = np.exp(-s[ok])
    return X


def s_phi_batch(ep: EndProfile, P: np.ndarray) -> np.ndarray:
    """Vectorized ``s_phi`` on rows of ``P``; NaN outside the corner neighbourhood or where ``phi <= 0``."""
    X = profile_args_batch(ep, P)
    ok = ~np.isnan(X[:, 0])
    out = np.full(X.shape[0], np.nan)
    if not np.any(ok):
        return out
    phi = ep.phi(X[ok])
    with np.errstate(divide="ignore", invalid="ignore"):
        out[ok] = np.where(phi > 0, -np.log(phi), np.nan)
    return out


def check_level_regularity(ep: EndProfile, r: float, n: int, rng: np.random.Generator,
                           R_max: float = 3.0) -> dict:
    """Root-find ``n`` points of ``{s_phi = r}`` along inward R-rays and certify ``d s_phi != 0``."""
    if r <= 0:
        raise ValueError("level must be positive")
    m = ep.model
    pts, norms = [], []
    Rgrid = np.geomspace(R_max, 1e-5, 160)
    attempts = 0
    while len(pts) < n and attempts < 200 * n:
        if attempts >= max(2000, 2 * n) and not pts:
            break  # no crossing on any ray: the level misses the neighbourhood
        attempts += 1
        base = np.zeros(m.dim)
        if m.nf:
            rho = rng.uniform(0.3, 3 * m.F0prime_radius)
            ang = rng.uniform(0, 2 * math.pi)
            base[0], base[1] = rho * math.cos(ang), rho * math.sin(ang)
        for i in range(m.k):
            base[m.iR(i)] = rng.uniform(0.5, R_max)
            base[m.iI(i)] = rng.uniform(-12, 12)
        ray = np.repeat(base[None, :], Rgrid.size, axis=0)
        ray[:, m.iR(0)] = Rgrid
        vals = s_phi_batch(ep, ray) - r
        cross = np.flatnonzero(np.isfinite(vals[:-1]) & np.isfinite(vals[1:])
                               & ((vals[:-1] < 0) != (vals[1:] < 0)))
        if cross.size == 0:
            continue
        j0 = cross[0]

        def g(R: float) -> float:
            q = base.copy()
            q[m.iR(0)] = R
            return s_phi_at(ep, q) - r

        Rs = brentq(g, Rgrid[j0 + 1], Rgrid[j0], xtol=1e-15)
        q = base.copy()
        q[m.iR(0)] = Rs
        pts.append(q)
        norms.append(float(np.linalg.norm(grad_s_phi(ep, q))))
    if not pts:
        return {"level": r, "found": 0, "empty": True}
    P = np.array(pts)
    return {"level": r, "found": len(pts), "empty": False, "min_grad_norm": float(min(norms)),
            "coord_abs_max": [float(v) for v in np.max(np.abs(P), axis=0)],
            "points": P, "grad_norms": np.array(norms)}

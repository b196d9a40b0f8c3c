"""Verification sweeps shared by the command line and the acceptance tests.

Every sweep returns a list of :class:`Check` records.  A check carries its
worst observed value, the tolerance it was graded against and, when the
property is known to be unattainable for the shipped construction, a short
``known_conflict`` reason.  Known conflicts still count as failures.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Optional

import numpy as np

from .acs import (ACSField, assemble_J_at, d_sign_sweep, levi_form_at, pullback_J_batch,
                  tameness_margin)
from .floer import (IsotopyFamily, SectorialH, chain_rule_check, continuation_sign_check,
                    energy_identity_residual, ham_vf_structure_check, lagrangian_boundary_check,
                    make_floer_jet)
from .moser import (FlowMap, MoserField, closedness_batch, in_declared_support, pullback_batch,
                    refinement_study)
from .numerics import ConstructionError, DegeneracyError, DomainError, RegionError, fd_gradient, fd_two_form
from .profile import (EndProfile, Kappa, check_level_regularity, lambda_kappa_at, profile_args_batch,
                      sample_corner_nbhd, s_phi_parts)
from .sector import (ConstantsLedger, SectorialLagrangian, SectorModel, TiltedLine, check_ZRZI,
                     in_excluded_box, lambda_at, liouville_Z_at, omega_matrix, radial_s_at,
                     validate_constants)
from .smoothing import build_f_tilde, build_phi, profile_clauses

# profile inequalities that the shipped profile cannot meet on its whole support
F_TILDE_CONFLICTS = {
    "f_plus_x_fprime": "x f must fall to zero, so (x f)' < 0 somewhere",
    "two_fprime_plus_x_fsecond": "incompatible with compact support after the hyperbola",
}
# compact window of the corner neighbourhood used by the pointwise ACS sweeps
S_WINDOW = 6.0


@dataclass
class Check:
    suite: str
    name: str
    passed: bool
    worst: float
    tol: float
    known_conflict: str = ""
    info: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        # a conflict label only explains a failure; drop it when the check passes
        if self.passed:
            self.known_conflict = ""

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Sizes:
    """Sample counts; the defaults are the acceptance sizes."""
    grid_side: int = 100
    triples: int = 1000
    points: int = 1000
    acs_points: int = 10_000
    tame_points: int = 1000
    tame_dirs: int = 1000
    levi_points: int = 200
    d_grid: int = 50
    moser_points: int = 200
    moser_steps: int = 1000
    support_points: int = 500
    closed_points: int = 50
    jets: int = 1000
    level_points: int = 1000


def _le(suite: str, name: str, worst: float, tol: float, **kw: Any) -> Check:
    return Check(suite, name, bool(worst <= tol), float(worst), float(tol), **kw)


def _ge(suite: str, name: str, worst: float, tol: float, **kw: Any) -> Check:
    return Check(suite, name, bool(worst >= tol), float(worst), float(tol), **kw)


def _at(P: np.ndarray, vals: np.ndarray, largest: bool = True) -> dict:
    """``info`` entry naming the sample where ``vals`` is worst."""
    j = int(np.argmax(vals) if largest else np.argmin(vals))
    return {"worst_point": [float(v) for v in np.atleast_1d(P[j])]}


def _bump_free(model: SectorModel) -> SectorModel:
    return model.without_bump()


# ---------------------------------------------------------------------------
# ledger

def constants_checks(model: SectorModel) -> list[Check]:
    out = []
    for c in validate_constants(model):
        out.append(Check("constants", c.name, c.passed or c.waived, c.margin, 0.0,
                         info={"waived": c.waived, "note": c.note, "raw_pass": c.passed}))
    return out


# ---------------------------------------------------------------------------
# smoothing

def chain_eps0(eps: float, T0: float, eps0: float) -> float:
    """``eps0`` if ``5 eps0/4 <= 2 T0 sqrt(eps) <= 3 eps0/2`` holds at this ``eps``, else ``ht / 1.3``."""
    ht = 2 * T0 * math.sqrt(eps)
    return eps0 if 1.25 * eps0 <= ht <= 1.5 * eps0 else ht / 1.3


def smoothing_suite(model: SectorModel, rng: np.random.Generator, sizes: Sizes = Sizes(),
                    eps_values: tuple[float, ...] = (1e-2, 1e-3), tol_scale: float = 1.0) -> list[Check]:
    T0 = model.ledger.T0
    out: list[Check] = []
    for eps in eps_values:
        tag = f"eps={eps:g}"
        eps0 = chain_eps0(eps, T0, model.ledger.eps0)
        sm = build_phi(2, eps, T0, eps0)
        g = np.linspace(0.0, 4 * sm.ht, sizes.grid_side)
        X = np.stack(np.meshgrid(g, g, indexing="ij"), -1).reshape(-1, 2)
        val, grad, _ = sm.evaluate(X)
        out.append(_ge("smoothing", f"P1 d phi >= 0 [{tag}]", float(grad.min()), -1e-9 * tol_scale,
                       info=_at(X, grad.min(axis=1), largest=False)))
        out.append(_le("smoothing", f"P1 d phi <= 1 [{tag}]", float(grad.max()), 1 + 1e-9 * tol_scale,
                       info=_at(X, grad.max(axis=1))))
        # P2 on levels c >= 0
        worst, used = math.inf, 0
        while used < sizes.triples:
            a, b = rng.uniform(0, 4 * sm.ht, (2, 2))
            c = float(min(sm(a), sm(b)))
            if c < 0:
                continue
            used += 1
            worst = min(worst, float(sm(0.5 * (a + b))) - c)
        out.append(_ge("smoothing", f"P2 superlevel convexity [{tag}]", worst, -1e-9 * tol_scale))
        x1 = np.linspace(0.0, eps0 / 2, sizes.grid_side)
        x2 = np.linspace(0.0, 2 * math.sqrt(eps), sizes.grid_side)
        B = np.stack(np.meshgrid(x1, x2, indexing="ij"), -1).reshape(-1, 2)
        _, gB, _ = sm.evaluate(B)
        p3 = B[:, 1] * gB[:, 1] - B[:, 0] * gB[:, 0]
        out.append(_ge("smoothing", f"P3 x2 d2phi - x1 d1phi [{tag}]", float(p3.min()), -1e-8 * tol_scale,
                       info=_at(B, p3, largest=False)))
        clauses = profile_clauses(build_f_tilde(eps, T0), n=max(10_000, sizes.grid_side**2))
        for name, slack in clauses.items():
            out.append(_ge("smoothing", f"P4 f~ {name} [{tag}]", slack, -1e-9 * tol_scale,
                           known_conflict=F_TILDE_CONFLICTS.get(name, "")))
        sm3 = build_phi(3, eps, T0, eps0)
        # below eps0/2 the saturating ramp vanishes, which covers the x_i <= wd cylinder
        Y = rng.uniform(0, eps0 / 2, (sizes.points, 3))
        Y[:, 2] = rng.uniform(sm.ht, 4 * sm.ht, sizes.points)
        dev = np.abs(sm3(Y) - sm(Y[:, :2]))
        out.append(_le("smoothing", f"P5 restriction phi3 -> phi2 [{tag}]", float(dev.max()),
                       1e-6 * tol_scale, info=_at(Y, dev)))
        W = rng.uniform(0, 4 * sm.ht, (sizes.points, 2))
        sym = np.abs(sm(W) - sm(W[:, ::-1]))
        out.append(_le("smoothing", f"symmetry [{tag}]", float(sym.max()), 1e-12 * tol_scale, info=_at(W, sym)))
    return out


# ---------------------------------------------------------------------------
# splitting data and the end profile

def _chart_points(model: SectorModel, n: int, rng: np.random.Generator) -> np.ndarray:
    P = np.zeros((n, model.dim))
    if model.nf:
        P[:, :2] = rng.uniform(-3, 3, (n, 2))
    for i in range(model.k):
        P[:, model.iR(i)] = rng.uniform(0.0, 10.0, n)
        P[:, model.iI(i)] = rng.uniform(-10.0, 10.0, n)
    return P


def splitting_suite(model: SectorModel, rng: np.random.Generator, sizes: Sizes = Sizes(),
                    alphas: tuple[float, ...] = (0.25, 0.5, 1.0), tol_scale: float = 1.0) -> list[Check]:
    out: list[Check] = []
    tol = 1e-6 * tol_scale
    for a in alphas:
        m = _bump_free(model.replace(alpha=a))
        P = _chart_points(m, sizes.points, rng)
        worst = {"ZR": 0.0, "ZI": 0.0, "omega_XR_XI": 0.0, "Zs": 0.0}
        for p in P:
            for k, v in check_ZRZI(m, p).items():
                worst[k] = max(worst[k], v)
        conflict = "" if a == 0.5 else "Z[s_C] = Q/h_C equals 1 only at alpha = 1/2"
        out.append(_le("splitting", f"Z[R] - (1-alpha)R [alpha={a:g}]", worst["ZR"], tol))
        out.append(_le("splitting", f"Z[I] - alpha I [alpha={a:g}]", worst["ZI"], tol))
        out.append(_le("splitting", f"omega(X_R, X_I) - 1 [alpha={a:g}]", worst["omega_XR_XI"], tol))
        out.append(_le("splitting", f"Z[s] - 1 [alpha={a:g}]", worst["Zs"], tol, known_conflict=conflict))
    # d lambda and the Liouville identity on the bump model
    P = _chart_points(model, sizes.points, rng)
    M = omega_matrix(model)
    dl = lie = bit = 0.0
    for p in P:
        dl = max(dl, float(np.max(np.abs(fd_two_form(lambda q: lambda_at(model, q), p).mat - M))))
        Z = liouville_Z_at(model, p)
        grad = fd_gradient(lambda q: float(lambda_at(model, q) @ liouville_Z_at(model, q)), p)
        lie = max(lie, float(np.max(np.abs(grad + M.T @ Z - lambda_at(model, p)))))
        if all(abs(p[model.iI(i)]) >= model.ledger.N0 for i in range(model.k)) or (
                model.nf and model.fiber_radius(p) >= model.F0_radius):
            lam, lam0 = lambda_at(model, p), lambda_at(_bump_free(model), p)
            idx = [j for i in range(model.k) for j in (model.iR(i), model.iI(i))]
            bit = max(bit, float(np.max(np.abs(lam[idx] - lam0[idx]))))
    out.append(_le("splitting", "fd d lambda = omega", dl, 1e-6 * tol_scale))
    out.append(_le("splitting", "d(lambda(Z)) + Z -| omega = lambda", lie, 1e-5 * tol_scale))
    out.append(_le("splitting", "C-components bump-free off the bump", bit, 0.0))
    return out


def profile_suite(model: SectorModel, rng: np.random.Generator, sizes: Sizes = Sizes(),
                  levels: tuple[float, ...] = (1.0, 3.0, 5.0), tol_scale: float = 1.0,
                  level_sink: Optional[Callable[[float, dict], None]] = None) -> list[Check]:
    out: list[Check] = []
    ep = EndProfile(model)
    exact_s = exact_mu = 0.0
    n_s = n_mu = 0
    for p in region_points(model, "s", sizes.points, rng):
        exact_s = max(exact_s, abs(s_phi_parts(ep, p)[0] - radial_s_at(model, p)))
        n_s += 1
    for p in region_points(model, "mu", sizes.points, rng):
        val, _, info = s_phi_parts(ep, p)
        i = int(info["region"][2:])
        exact_mu = max(exact_mu, abs(val + math.log(p[model.iR(i)])))
        n_mu += 1
    P = sample_corner_nbhd(model, sizes.points, rng)
    gdev = 0.0
    for p in P:
        _, ds, _ = s_phi_parts(ep, p)
        if all(p[model.iR(i)] > 0.05 for i in range(model.k)):
            fd = fd_gradient(lambda q: s_phi_parts(ep, q)[0], p, 1e-5)
            gdev = max(gdev, float(np.max(np.abs(fd - ds)) / max(1.0, float(np.max(np.abs(ds))))))
    out.append(_le("profile", "s_phi = s on the s-region (bitwise)", exact_s, 0.0, info={"n": n_s}))
    out.append(_le("profile", "s_phi = -log R on mu-regions (bitwise)", exact_mu, 0.0, info={"n": n_mu}))
    out.append(_le("profile", "d s_phi vs FD (relative)", gdev, 1e-6 * tol_scale))
    kap = Kappa(model)
    ex = 0.0
    for p in P[: max(1, sizes.points // 5)]:
        if any(p[model.iR(i)] < 1e-3 for i in range(model.k)):
            continue
        d = fd_two_form(lambda q: lambda_kappa_at(model, kap, q) - lambda_at(model, q), p)
        ex = max(ex, float(np.max(np.abs(d.mat))))
    out.append(_le("profile", "lambda_kappa - lambda is closed", ex, 1e-6 * tol_scale))
    for r in levels:
        rep = check_level_regularity(ep, r, sizes.level_points, rng)
        if level_sink is not None:
            level_sink(r, rep)
        if rep["empty"]:
            # vacuous: the level does not meet the corner neighbourhood
            out.append(Check("profile", f"|d s_phi| > 0 on level {r:g}", True, math.inf, 0.0,
                             info={"found": 0, "empty": True}))
            continue
        worst = rep["min_grad_norm"]
        ok = rep["found"] == sizes.level_points and worst > 0
        out.append(Check("profile", f"|d s_phi| > 0 on level {r:g}", bool(ok), float(worst), 0.0,
                         info={"found": rep["found"]}))
    return out


def region_points(model: SectorModel, region: str, n: int, rng: np.random.Generator,
                  chunks: int = 20, chunk: int = 20_000) -> np.ndarray:
    """Rejection-sample ``n`` corner-neighbourhood points in the ``"s"`` or ``"mu"`` linear region.

    Returns fewer rows (possibly none) when the region does not meet the neighbourhood.
    """
    ep = EndProfile(model)
    sm = model.smoother
    found: list[np.ndarray] = []
    total = 0
    for _ in range(chunks):
        P = np.zeros((chunk, model.dim))
        if model.nf:
            rho, th = rng.uniform(0.05, 4 * model.F0prime_radius, chunk), rng.uniform(0, 2 * math.pi, chunk)
            P[:, 0], P[:, 1] = rho * np.cos(th), rho * np.sin(th)
        for i in range(model.k):
            if region == "s":
                P[:, model.iR(i)] = rng.uniform(sm.ht, 20 * sm.ht + 10, chunk)
                P[:, model.iI(i)] = rng.choice([-1.0, 1.0], chunk) * rng.uniform(20, 400, chunk)
            else:
                P[:, model.iR(i)] = rng.uniform(0, 2 * sm.ht, chunk)
                P[:, model.iI(i)] = rng.uniform(-3 * model.ledger.N0, 3 * model.ledger.N0, chunk)
        X = profile_args_batch(ep, P)
        Rs, x = X[:, :-1], X[:, -1]
        with np.errstate(invalid="ignore"):
            if region == "s":
                keep = np.all(Rs >= sm.ht, axis=1) & (x <= sm.wd)
            else:
                keep = np.zeros(chunk, dtype=bool)
                for i in range(model.k):
                    rest = np.delete(Rs, i, axis=1)
                    keep |= (Rs[:, i] <= sm.wd) & (x >= sm.ht) & np.all(rest >= sm.ht, axis=1)
                keep &= np.all(Rs > 0, axis=1)
        found.append(P[keep])
        total += int(keep.sum())
        if total >= n:
            break
    return np.concatenate(found)[:n]


# ---------------------------------------------------------------------------
# almost complex structures

def acs_suite(model: SectorModel, rng: np.random.Generator, sizes: Sizes = Sizes(),
              tol_scale: float = 1.0) -> list[Check]:
    out: list[Check] = []
    fld = ACSField(model)
    P = sample_corner_nbhd(model, sizes.acs_points, rng, s_max=S_WINDOW)
    sq, du, pattern = np.zeros(len(P)), np.zeros(len(P)), 0.0
    Js = []
    for j, p in enumerate(P):
        a = assemble_J_at(fld, p)
        sq[j], du[j] = a.square_defect, a.duality_residual
        if model.nf:
            pattern = max(pattern, float(np.max(np.abs(a.G.mat[2:, :2]))))
        if j < sizes.tame_points:
            Js.append(a.J.mat)
    out.append(_le("acs", "G^2 + I", float(sq.max()), 1e-10 * tol_scale,
                   known_conflict=("float64 cancellation where |G| is large near the forced "
                                   "lambda_kappa || d s_phi locus"),
                   info={"n_points": len(P), "n_over": int(np.sum(sq > 1e-10 * tol_scale)), **_at(P, sq)}))
    out.append(_le("acs", "duality -d s_phi o J = lambda_kappa", float(du.max()), 1e-8 * tol_scale,
                   info=_at(P, du)))
    out.append(_le("acs", "fiber block preserved (zero lower-left block)", pattern, 0.0))
    tmin, fails = math.inf, 0
    for J in Js:
        r = tameness_margin(model, J, rng, sizes.tame_dirs)
        tmin = min(tmin, r["sampled_min"])
        fails += r["eig_min"] <= 0
    out.append(Check("acs", "tameness omega(v, Jv) > 0", bool(tmin > 0), float(tmin), 0.0,
                     known_conflict="Z[s_phi] < 0 on mu-regions forces omega(Z, JZ) < 0",
                     info={"points": len(Js), "non_tame_points": int(fails)}))
    lev = 0.0
    for p in P[: sizes.levi_points]:
        L, T = levi_form_at(fld, p)
        lev = max(lev, float(np.max(np.abs(L.mat - T.mat))))
    out.append(_le("acs", "Levi identity", lev, 1e-5 * tol_scale))
    if model.k == 1:
        d = d_sign_sweep(model, sizes.d_grid)
        out.append(Check("acs", "D < 0 on the corner box", d["violations"] == 0 and d["n_points"] > 0,
                         d["D_max"], 0.0, info={"n_points": d["n_points"], "violations": d["violations"],
                                                "failures": d["examples"]}))
        strip = d_sign_sweep(model, max(10, sizes.d_grid // 2), strip=True)
        out.append(Check("acs", "D < 0 on the literal strip (diagnostic)", strip["violations"] == 0,
                         strip["D_max"], 0.0, known_conflict="zero level reaches the axis inside the strip",
                         info={"violations": strip["violations"]}))
    return out


# ---------------------------------------------------------------------------
# deformation flow

def _support_points(model: SectorModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Points inside the deformation support with R bounded away from 0."""
    out = []
    while len(out) < n:
        p = np.zeros(model.dim)
        if model.nf:
            rho, th = rng.uniform(0.1, model.F0_radius), rng.uniform(0, 2 * math.pi)
            p[0], p[1] = rho * math.cos(th), rho * math.sin(th)
        for i in range(model.k):
            p[model.iR(i)] = rng.uniform(0.05, 3.0)
            p[model.iI(i)] = rng.uniform(-model.bump.N0, model.bump.N0)
        if in_declared_support(model, p):
            out.append(p)
    return np.array(out)


def _literal_union(model: SectorModel, p: np.ndarray) -> bool:
    L = model.ledger
    if any(p[model.iR(i)] <= L.eps0 / 2 for i in range(model.k)):
        return True
    return bool(model.nf and model.fiber_radius(p) > model.F0_radius
                and all(abs(p[model.iI(i)]) <= L.N2 for i in range(model.k)))


def moser_suite(model: SectorModel, rng: np.random.Generator, sizes: Sizes = Sizes(),
                tol_scale: float = 1.0, diag_sink: Optional[Callable[[list[dict]], None]] = None
                ) -> list[Check]:
    out: list[Check] = []
    fm = FlowMap(MoserField(model), steps=sizes.moser_steps)
    P = _support_points(model, sizes.moser_points, rng)
    r = pullback_batch(fm, P)
    if diag_sink is not None:
        diag_sink([{"point": [float(v) for v in p], "err_raw": float(r["err_raw"][j]),
                    "err_corrected": float(r["err_corrected"][j]), "err_omega": float(r["err_omega"][j]),
                    "displaced_distance": float(r["displaced"][j])} for j, p in enumerate(P)])
    out.append(_le("moser", "omega preserved", float(r["err_omega"].max()), 1e-6 * tol_scale,
                   info=_at(P, r["err_omega"])))
    out.append(_le("moser", "potential-corrected pullback", float(r["err_corrected"].max()),
                   1e-5 * tol_scale, info={"err_raw_max": float(r["err_raw"].max()),
                                           **_at(P, r["err_corrected"])}))
    Q = _chart_points(model, 20 * sizes.support_points, rng)
    ext = np.array([q for q in Q if not in_declared_support(model, q)
                    and all(q[model.iR(i)] > 0 for i in range(model.k))][: sizes.support_points])
    disp = np.max(np.abs(fm.run(ext, 1.0, 50)[0] - ext), axis=1)
    out.append(_le("moser", "Psi = id off the deformation support", float(disp.max()), 1e-9 * tol_scale,
                   info={"n_points": len(ext), **_at(ext, disp)}))
    lit = np.array([q for q in Q if not _literal_union(model, q)
                    and all(q[model.iR(i)] > 0 for i in range(model.k))][: sizes.support_points])
    disp_lit = np.max(np.abs(fm.run(lit, 1.0, 50)[0] - lit), axis=1)
    out.append(_le("moser", "Psi = id off the stated support union (diagnostic)", float(disp_lit.max()),
                   1e-9 * tol_scale, known_conflict="the deformation also moves points over F0 with R > eps0/2",
                   info={"n_points": len(lit), "n_moved": int(np.sum(disp_lit > 1e-9 * tol_scale)),
                         **_at(lit, disp_lit)}))
    cl = float(np.max(closedness_batch(FlowMap(MoserField(model), steps=200), P[: sizes.closed_points])))
    out.append(_le("moser", "d(Psi^* lambda_1 - lambda) = 0", cl, 1e-5 * tol_scale))
    ref = refinement_study(FlowMap(MoserField(model)), P[:20], steps=(4, 8, 16))
    if max(ref["drift"]) < 1e-12:
        # RK4 reproduces the flow to roundoff (e.g. a translation): no order to observe
        out.append(Check("moser", "refinement order of the flow", True, math.inf, 2.0,
                         info={**ref, "exact": True}))
    else:
        out.append(_ge("moser", "refinement order of the flow", min(ref["drift_order"]), 2.0, info=ref))
    return out


def lambda_sectorial_suite(model: SectorModel, rng: np.random.Generator, sizes: Sizes = Sizes(),
                           tol_scale: float = 1.0) -> list[Check]:
    fld = ACSField(model)
    fm = FlowMap(MoserField(model))
    P = sample_corner_nbhd(model, sizes.moser_points, rng, s_max=S_WINDOW)
    res = pullback_J_batch(fld, fm, P)
    raw_all = np.array([r["residual"] for r in res])
    cor_all = np.array([r["residual_corrected"] for r in res])
    raw, cor = float(raw_all.max()), float(cor_all.max())
    n_moved = sum(in_declared_support(model, p) for p in P)
    return [
        _le("lambda-sectorial", "-d s_{phi,kappa} o J_lambda = lambda", raw, 5e-5 * tol_scale,
            known_conflict="the flow pulls lambda_kappa back to lambda + dA, not lambda",
            info={"n_in_support": int(n_moved), **_at(P, raw_all)}),
        _le("lambda-sectorial", "-d s_{phi,kappa} o J_lambda = lambda + dA", cor, 5e-5 * tol_scale,
            info=_at(P, cor_all)),
    ]


# ---------------------------------------------------------------------------
# Floer jets

def _softplus_rho() -> tuple[Callable, Callable]:
    return (lambda z: z + np.log1p(np.exp(z)), lambda z: 1.0 + 1.0 / (1.0 + np.exp(-z)))


def _capped_lagrangian(alpha: float) -> Optional[SectorialLagrangian]:
    # flat rays (small alpha) need a lower cap to stay above R_min
    if not 0 < alpha < 1:
        return None
    for r_min in (2.0, 1.0, 0.5, 0.25, 0.1):
        L = SectorialLagrangian(alpha, R_min=r_min)
        try:
            L.curve(np.zeros(1))
        except ConstructionError:
            continue
        return L
    return None


def floer_suite(model: SectorModel, rng: np.random.Generator, sizes: Sizes = Sizes(),
                tol_scale: float = 1.0) -> list[Check]:
    out: list[Check] = []
    fam = IsotopyFamily()
    rho, drho = _softplus_rho()
    # bump-free submodel with the assembled kappa-sectorial J
    m0 = _bump_free(model)
    fld0 = ACSField(m0)
    P0 = sample_corner_nbhd(m0, sizes.jets, rng, s_max=S_WINDOW)
    H_id, H_rho = SectorialH(fld0.ep), SectorialH(fld0.ep, rho, drho)
    H_scaled = SectorialH(fld0.ep, lambda z: 10 * rho(z), lambda z: 10 * drho(z))
    e_id = e_rho = e_sc = 0.0
    margin, gap = math.inf, 0.0
    for p in P0:
        J = assemble_J_at(fld0, p).J.mat
        vt = rng.standard_normal(m0.dim)
        for H, tag in ((H_id, "id"), (H_rho, "rho"), (H_scaled, "scaled")):
            r = energy_identity_residual(make_floer_jet(p, vt, H, J), H, J, relative=True)
            if tag == "id":
                e_id = max(e_id, r)
            elif tag == "rho":
                e_rho = max(e_rho, r)
            else:
                e_sc = max(e_sc, r)
        jet = make_floer_jet(p, vt, H_id, J)
        c = continuation_sign_check(jet, fam, float(rng.uniform(-4, 4)), fld0.ep)
        margin, gap = min(margin, c["margin"]), max(gap, c["difference"])
    out.append(_le("floer", "energy identity, rho(z) = z (f = 0)", e_id, 1e-8 * tol_scale))
    out.append(_le("floer", "energy identity, softplus rho (f = 0)", e_rho, 1e-8 * tol_scale))
    out.append(_le("floer", "energy identity, 10 x rho (f = 0)", e_sc, 1e-8 * tol_scale))
    out.append(_ge("floer", "continuation margin >= 0", margin, 0.0))
    out.append(_le("floer", "continuation gap = -chi' d rho/ds", gap, 1e-10 * tol_scale))
    fc = fam.check(np.linspace(-5, 10, 31), np.linspace(-6, 6, 49))
    out.append(_ge("floer", "isotopy family d rho/ds >= 0", fc["min_d_ds"], 0.0))
    out.append(_le("floer", "isotopy family chi' <= 0", fc["max_dchi"], 0.0))
    # bump model: pulled-back J and the flowed profile
    fld = ACSField(model)
    fm = FlowMap(MoserField(model))
    P = sample_corner_nbhd(model, sizes.jets, rng, s_max=S_WINDOW)
    P = P[np.all(P[:, [model.iR(i) for i in range(model.k)]] > 1e-4, axis=1)]
    H = SectorialH(fld.ep, rho, drho, fm)
    H.prepare(P)
    pulled = pullback_J_batch(fld, fm, P)
    e_b = 0.0
    for p, pj in zip(P, pulled):
        J = pj["J"].mat
        jet = make_floer_jet(p, rng.standard_normal(model.dim), H, J)
        e_b = max(e_b, energy_identity_residual(jet, H, J, relative=True))
    out.append(_le("floer", "energy identity (bump, pulled-back J)", e_b, 1e-6 * tol_scale,
                   info={"n_jets": len(P)}))
    ch = float(np.max(chain_rule_check(H, P)))
    ch0 = float(np.max(chain_rule_check(H_rho, P0[np.all(P0[:, [m0.iR(i) for i in range(m0.k)]] > 1e-4,
                                                               axis=1)])))
    out.append(_le("floer", "X_H = rho'(s) X_s (bump)", ch, 1e-6 * tol_scale))
    out.append(_le("floer", "X_H = rho'(s) X_s (f = 0)", ch0, 1e-6 * tol_scale))
    # Lagrangian boundary identity
    for fib_model in (model, _bump_free(model)):
        if model.k != 1:
            break
        L = _capped_lagrangian(model.alpha)
        if L is None:
            break
        rep = lagrangian_boundary_check(L, fib_model, sizes.points, rng)
        tag = "bump" if fib_model.bump.a else "f = 0"
        out.append(_le("floer", f"boundary identity |lambda(v)| [{tag}]", rep["lambda_max"], 1e-10 * tol_scale,
                       info={"n_points": rep["n_points"]}))
        out.append(_le("floer", f"Z tangent to L [{tag}]", rep["tangency_max"], 1e-8 * tol_scale))
    if model.k == 1:
        st_dev, st_min, n_st = 0.0, math.inf, 0
        for p in P0:
            try:
                r = ham_vf_structure_check(fld0.ep, p)
            except (DegeneracyError, DomainError, RegionError):
                continue
            n_st += 1
            st_dev, st_min = max(st_dev, r["formula_dev"]), min(st_min, r["min_coeff"])
        out.append(_le("floer", "X_{s_phi} structure matches formula", st_dev, 1e-6 * tol_scale,
                       info={"n_points": n_st}))
        out.append(_ge("floer", "X_{s_phi} structure coefficients >= 0", st_min, -1e-8 * tol_scale))
    return out


# ---------------------------------------------------------------------------
# negative controls

def negative_controls(model: SectorModel, rng: np.random.Generator, sizes: Sizes = Sizes()) -> list[Check]:
    out: list[Check] = []
    if model.k == 1 and model.nf:
        bad = model.replace(ledger=ConstantsLedger(**{**model.ledger.__dict__, "beta": 2 * model.alpha}))
        d = d_sign_sweep(bad, sizes.d_grid)
        out.append(Check("controls", "beta = 2 alpha gives D >= 0 somewhere", d["violations"] >= 1,
                         float(d["violations"]), 1.0, info={"D_max": d["D_max"]}))
    if model.k == 1:
        rep = lagrangian_boundary_check(TiltedLine(), model, sizes.points, rng)
        worst = max(rep["lambda_max"], rep["tangency_max"])
        out.append(_ge("controls", "tilted line breaks the boundary identity", worst, 1e-3))
    return out


SUITES: dict[str, Callable[..., list[Check]]] = {
    "smoothing": smoothing_suite,
    "splitting": splitting_suite,
    "profile": profile_suite,
    "acs": acs_suite,
    "moser": moser_suite,
    "lambda-sectorial": lambda_sectorial_suite,
    "floer": floer_suite,
}

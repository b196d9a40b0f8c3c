"""Model Liouville sectors ``F x C_{Re>=0}^k`` with splitting data.

Chart coordinates are the fiber coordinates first (none for the point
fiber, ``(x, y)`` for the plane) followed by ``(R_1, I_1, ..., R_k, I_k)``.
The Liouville form is ``lambda_F + sum_i lambda_C^alpha(R_i, I_i) + df`` and
``omega = d lambda`` is the constant standard form.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Callable, Optional

import jsonschema
import numpy as np

from .numerics import (ConstructionError, DegeneracyError, RegionError, SecLabError,
                       TwoForm, fd_gradient, fd_two_form, interior, omega_dual, smoothstep5)
from .smoothing import Smoother, build_phi


class ConfigError(SecLabError, ValueError):
    pass


# ---------------------------------------------------------------------------
# constants ledger and bump

@dataclass(frozen=True)
class ConstantsLedger:
    eps0: float = 0.5
    eps1: float = 1e-3
    T0: float = 10.38
    N0: float = 5.0
    N1: float = 8.0
    beta: float = 0.25
    N2: Optional[float] = None

    def __post_init__(self) -> None:
        if self.N2 is None:
            object.__setattr__(self, "N2", -math.log(2 * math.sqrt(self.eps1)))

    @property
    def ht(self) -> float:
        return 2 * self.T0 * math.sqrt(self.eps1)

    @property
    def wd(self) -> float:
        return math.sqrt(self.eps1) / 4


@dataclass(frozen=True)
class BumpF:
    """``f = a chi0(|y|) prod_i eta(I_i)``; ``eta`` is constant for ``|I| >= N0``."""
    a: float = 0.1
    N0: float = 5.0
    F0_radius: float = 1.0

    def parts(self, rho, Is) -> tuple[np.ndarray, np.ndarray, list[np.ndarray], list[np.ndarray]]:
        """Fiber factor with its rho-derivative, then eta and eta' per I."""
        rho = np.asarray(rho, dtype=float)
        s, ds, _ = smoothstep5(rho, self.F0_radius / 2, self.F0_radius)
        chi, dchi = 1.0 - s, -ds
        etas, detas = [], []
        for I in Is:
            I = np.asarray(I, dtype=float)
            v, dv, _ = smoothstep5(np.abs(I), 0.0, self.N0)
            etas.append(0.5 * (1.0 + v))
            detas.append(0.5 * dv * np.sign(I))
        return chi, dchi, etas, detas


# ---------------------------------------------------------------------------
# the model

FIBERS = ("Point", "Plane")


@dataclass(frozen=True)
class SectorModel:
    alpha: float = 0.5
    k: int = 1
    fiber: str = "Point"
    F0_radius: float = 1.0
    F0prime_radius: float = 2.0
    bump: BumpF = field(default_factory=BumpF)
    ledger: ConstantsLedger = field(default_factory=ConstantsLedger)

    def __post_init__(self) -> None:
        if not 0 < self.alpha <= 1:
            raise ConstructionError("eccentricity must lie in (0, 1]")
        if self.k not in (1, 2):
            raise ConstructionError("corner codimension must be 1 or 2")
        if self.fiber not in FIBERS:
            raise ConstructionError(f"fiber must be one of {FIBERS}")

    # -- layout ---------------------------------------------------------
    @property
    def nf(self) -> int:
        return 0 if self.fiber == "Point" else 2

    @property
    def dim(self) -> int:
        return self.nf + 2 * self.k

    def iR(self, i: int = 0) -> int:
        return self.nf + 2 * i

    def iI(self, i: int = 0) -> int:
        return self.nf + 2 * i + 1

    def lower_bounds(self) -> list[Optional[float]]:
        lb: list[Optional[float]] = [None] * self.dim
        for i in range(self.k):
            lb[self.iR(i)] = 0.0
        return lb

    def fiber_radius(self, p: np.ndarray) -> float:
        return float(np.hypot(p[0], p[1])) if self.nf else 0.0

    @cached_property
    def smoother(self) -> Smoother:
        L = self.ledger
        return build_phi(self.k + 1, L.eps1, L.T0, eps0=L.eps0)

    def without_bump(self) -> "SectorModel":
        return SectorModel(self.alpha, self.k, self.fiber, self.F0_radius, self.F0prime_radius,
                           BumpF(0.0, self.bump.N0, self.bump.F0_radius), self.ledger)

    def replace(self, **kw: Any) -> "SectorModel":
        d = dict(alpha=self.alpha, k=self.k, fiber=self.fiber, F0_radius=self.F0_radius,
                 F0prime_radius=self.F0prime_radius, bump=self.bump, ledger=self.ledger)
        d.update(kw)
        return SectorModel(**d)

    # -- bump -----------------------------------------------------------
    def f_and_df(self, p: np.ndarray) -> tuple[float, np.ndarray]:
        p = np.asarray(p, dtype=float)
        df = np.zeros(self.dim)
        if self.bump.a == 0.0:
            return 0.0, df
        rho = self.fiber_radius(p)
        Is = [p[self.iI(i)] for i in range(self.k)]
        chi, dchi, etas, detas = self.bump.parts(rho, Is)
        if self.nf == 0:
            chi, dchi = np.float64(1.0), np.float64(0.0)
        prod = float(np.prod([float(e) for e in etas]))
        f = self.bump.a * float(chi) * prod
        if self.nf and rho > 0:
            g = self.bump.a * float(dchi) * prod / rho
            df[0], df[1] = g * p[0], g * p[1]
        for i in range(self.k):
            others = float(np.prod([float(etas[j]) for j in range(self.k) if j != i]))
            df[self.iI(i)] = self.bump.a * float(chi) * float(detas[i]) * others
        return f, df


def default_model(**kw: Any) -> SectorModel:
    return SectorModel(**kw)


# ---------------------------------------------------------------------------
# Liouville calculus

def lambda_free(model: SectorModel, p: np.ndarray) -> np.ndarray:
    """``lambda_F + lambda_C^alpha`` (no bump)."""
    p = np.asarray(p, dtype=float)
    lam = np.zeros(model.dim)
    if model.nf:
        lam[0], lam[1] = -0.5 * p[1], 0.5 * p[0]
    a = model.alpha
    for i in range(model.k):
        R, I = p[model.iR(i)], p[model.iI(i)]
        lam[model.iR(i)] = -a * I
        lam[model.iI(i)] = (1 - a) * R
    return lam


def lambda_at(model: SectorModel, p: np.ndarray) -> np.ndarray:
    lam = lambda_free(model, p)
    if model.bump.a != 0.0:
        lam = lam + model.f_and_df(p)[1]
    return lam


def omega_matrix(model: SectorModel) -> np.ndarray:
    m = np.zeros((model.dim, model.dim))
    if model.nf:
        m[0, 1], m[1, 0] = 1.0, -1.0
    for i in range(model.k):
        r, s = model.iR(i), model.iI(i)
        m[r, s], m[s, r] = 1.0, -1.0
    return m


def omega_at(model: SectorModel, p: Optional[np.ndarray] = None, *, numeric: bool = False,
             h: float = 1e-4) -> TwoForm:
    """``d lambda``; analytic (constant) unless ``numeric`` asks for the FD exterior derivative."""
    if numeric:
        return fd_two_form(lambda q: lambda_at(model, q), np.asarray(p, float), h)
    return TwoForm(omega_matrix(model))


def liouville_Z_at(model: SectorModel, p: np.ndarray) -> np.ndarray:
    return omega_dual(omega_at(model), lambda_at(model, p))


def ham_vf(model: SectorModel, H: Callable[[np.ndarray], float], p: np.ndarray,
           dH: Optional[Callable[[np.ndarray], np.ndarray]] = None, h: float = 1e-6) -> np.ndarray:
    """``X_H`` with ``X_H -| omega = dH``."""
    grad = fd_gradient(H, np.asarray(p, float), h, analytic=dH)
    return omega_dual(omega_at(model), grad)


# ---------------------------------------------------------------------------
# radial function

def in_excluded_box(model: SectorModel, p: np.ndarray) -> bool:
    """Inside ``F0 x {|I| <= N0, 0 <= R <= 2 eps0}`` (all corner factors)."""
    p = np.asarray(p, dtype=float)
    if model.nf and model.fiber_radius(p) > model.F0_radius:
        return False
    N0, e0 = model.ledger.N0, model.ledger.eps0
    return all(abs(p[model.iI(i)]) <= N0 and p[model.iR(i)] <= 2 * e0 for i in range(model.k))


def h_C(model: SectorModel, p: np.ndarray) -> float:
    a = model.alpha
    return float(sum(0.5 * ((1 - a) * p[model.iR(i)] ** 2 + a * p[model.iI(i)] ** 2)
                     for i in range(model.k)))


def radial_s_parts(model: SectorModel, p: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """``s``, its full differential and the differential of ``s_C`` alone."""
    p = np.asarray(p, dtype=float)
    if in_excluded_box(model, p):
        raise RegionError("point lies in the excluded compact box around F0")
    a = model.alpha
    h = h_C(model, p)
    if h <= 0:
        raise RegionError("h_C vanishes: radial function undefined")
    dsC = np.zeros(model.dim)
    for i in range(model.k):
        dsC[model.iR(i)] = (1 - a) * p[model.iR(i)] / h
        dsC[model.iI(i)] = a * p[model.iI(i)] / h
    sC = math.log(h)
    if model.nf == 0:
        return sC, dsC, dsC
    beta = model.ledger.beta
    hF = 0.5 * (p[0] ** 2 + p[1] ** 2)
    if hF <= 0:
        raise RegionError("fiber radial function undefined at the fiber origin")
    ds = (1 - beta) * dsC
    ds[0], ds[1] = beta * p[0] / hF, beta * p[1] / hF
    return beta * math.log(hF) + (1 - beta) * sC, ds, dsC


def radial_s_at(model: SectorModel, p: np.ndarray) -> float:
    return radial_s_parts(model, p)[0]


def radial_ds_at(model: SectorModel, p: np.ndarray) -> np.ndarray:
    return radial_s_parts(model, p)[1]


def check_ZRZI(model: SectorModel, p: np.ndarray) -> dict[str, float]:
    """Residuals of the splitting identities at ``p`` (worst over corner factors)."""
    p = np.asarray(p, dtype=float)
    Z = liouville_Z_at(model, p)
    om = omega_at(model)
    a = model.alpha
    zr = max(abs(Z[model.iR(i)] - (1 - a) * p[model.iR(i)]) for i in range(model.k))
    zi = max(abs(Z[model.iI(i)] - a * p[model.iI(i)]) for i in range(model.k))
    worst = 0.0
    for i in range(model.k):
        eR = np.zeros(model.dim)
        eR[model.iR(i)] = 1.0
        XR = omega_dual(om, eR)
        for j in range(model.k):
            eI = np.zeros(model.dim)
            eI[model.iI(j)] = 1.0
            XI = omega_dual(om, eI)
            worst = max(worst, abs(om(XR, XI) - (1.0 if i == j else 0.0)))
    out = {"ZR": float(zr), "ZI": float(zi), "omega_XR_XI": float(worst)}
    if not in_excluded_box(model, p) and h_C(model, p) > 0:
        try:
            out["Zs"] = float(abs(radial_ds_at(model, p) @ Z - 1.0))
        except RegionError:
            pass
    return out


# ---------------------------------------------------------------------------
# ledger validation

def sampled_Xf_bound(model: SectorModel, spacing: float = 0.01) -> float:
    """``max |X_f|`` over ``{0 <= R <= 2 eps0, |I| <= N0}`` (and the fiber disc).

    omega is standard so ``|X_f| = |df|``; f does not depend on R, so only the
    I-grid (and the fiber radius) is swept.  Two corner factors use a coarser
    product grid.
    """
    if model.bump.a == 0.0:
        return 0.0
    N0, a = model.ledger.N0, model.bump.a
    if model.k == 2:
        spacing = max(spacing, 0.05)
    Igrid = np.arange(-N0, N0 + spacing / 2, spacing)
    rho = np.arange(0.0, model.F0prime_radius + spacing / 2, spacing) if model.nf else np.zeros(1)
    chi, dchi, etas, detas = model.bump.parts(rho, [Igrid])
    if model.nf == 0:
        chi, dchi = np.ones(1), np.zeros(1)
    e, de = etas[0], detas[0]
    if model.k == 1:
        sq = (dchi[:, None] * e[None, :]) ** 2 + (chi[:, None] * de[None, :]) ** 2
    else:
        E1, E2 = e[:, None], e[None, :]
        D1, D2 = de[:, None], de[None, :]
        c, dc = chi[:, None, None], dchi[:, None, None]
        sq = (dc * E1 * E2) ** 2 + (c * D1 * E2) ** 2 + (c * E1 * D2) ** 2
    return float(a * np.sqrt(np.max(sq)))


@dataclass(frozen=True)
class Constraint:
    name: str
    margin: float
    passed: bool
    waived: bool = False
    note: str = ""


def validate_constants(model: SectorModel) -> list[Constraint]:
    L = model.ledger
    ht, wd = L.ht, L.wd
    C = sampled_Xf_bound(model)
    beta_cap = math.inf if C == 0 else 1.0 / C
    out = [
        Constraint("5eps0/4 <= 2T0 sqrt(eps1)", ht - 1.25 * L.eps0, ht >= 1.25 * L.eps0),
        Constraint("2T0 sqrt(eps1) <= 3eps0/2", 1.5 * L.eps0 - ht, ht <= 1.5 * L.eps0),
        Constraint("N2 = -log(2 sqrt(eps1))", -abs(L.N2 + math.log(2 * math.sqrt(L.eps1))),
                   abs(L.N2 + math.log(2 * math.sqrt(L.eps1))) <= 1e-12),
        Constraint("exp(-N1) < sqrt2 wd", math.sqrt(2) * wd - math.exp(-L.N1),
                   math.exp(-L.N1) < math.sqrt(2) * wd),
        Constraint("beta < alpha", model.alpha - L.beta, L.beta < model.alpha),
        Constraint("beta < 1/C_fN0", beta_cap - L.beta, L.beta < beta_cap,
                   note=f"C_fN0 = {C:.6g}"),
        Constraint("0 < beta", L.beta, L.beta > 0 or model.nf == 0),
        Constraint("eps1 < ht", ht - L.eps1, L.eps1 < ht),
        Constraint("eps1 <= eps0/8", L.eps0 / 8 - L.eps1, L.eps1 <= L.eps0 / 8),
        Constraint("N0 < N1", L.N1 - L.N0, L.N0 < L.N1),
        Constraint("F0 < F0'", model.F0prime_radius - model.F0_radius,
                   model.F0_radius < model.F0prime_radius),
        Constraint("bump N0 matches ledger", -abs(model.bump.N0 - L.N0), model.bump.N0 == L.N0),
        Constraint("2 sqrt(eps1) < eps0/2 < ht", min(L.eps0 / 2 - 2 * math.sqrt(L.eps1), ht - L.eps0 / 2),
                   2 * math.sqrt(L.eps1) < L.eps0 / 2 < ht),
        Constraint("sqrt2 wd < eps1", L.eps1 - math.sqrt(2) * wd, math.sqrt(2) * wd < L.eps1,
                   waived=True, note="infeasible with phi built at eps1 (needs eps1 > 1/8)"),
    ]
    return out


def constants_ok(report: list[Constraint]) -> bool:
    return all(c.passed or c.waived for c in report)


# ---------------------------------------------------------------------------
# Lagrangian models

@dataclass(frozen=True)
class LagrangianSample:
    points: np.ndarray        # (n, dim)
    tangents: np.ndarray      # (n, m, dim)
    on_rays: np.ndarray       # (n,) bool: claimed Z-invariant piece


@dataclass(frozen=True)
class SectorialLagrangian:
    """Fiber line (plane fiber) times a capped pair of Z_C-rays ``I = +-c R^p``.

    ``p = alpha / (1 - alpha)``; rays live on ``R >= R_join`` and the cap is an
    even C2 curve ``R(I)`` on ``|I| <= c R_join^p`` with minimum ``R_min``.
    """
    alpha: float
    c: float = 1.0
    R_join: float = 6.0
    R_min: float = 2.0
    fiber_angle: float = 0.3

    def __post_init__(self) -> None:
        if not 0 < self.alpha < 1:
            raise ConstructionError("Z-ray Lagrangians need 0 < alpha < 1")
        if not 0 < self.R_min < self.R_join:
            raise ConstructionError("need 0 < R_min < R_join")

    @property
    def power(self) -> float:
        return self.alpha / (1 - self.alpha)

    @property
    def I_join(self) -> float:
        return self.c * self.R_join**self.power

    @cached_property
    def _cap_coeffs(self) -> np.ndarray:
        coeffs = self._solve_cap()
        s = np.linspace(0.0, 1.0, 401)
        R = self.R_min + coeffs[0] * s + coeffs[1] * s**2 + coeffs[2] * s**3
        if np.any(R < self.R_min * (1 - 1e-12)):
            raise ConstructionError("cap dips below R_min; increase R_join - R_min")
        return coeffs

    def _solve_cap(self) -> np.ndarray:
        # R(I) = R_min + b1 s + b2 s^2 + b3 s^3 with s = (I / I_join)^2, C2 at the join
        p, Ij, Rj = self.power, self.I_join, self.R_join
        d1 = Rj / (p * Ij)                        # dR/dI on the ray at the join
        d2 = Rj * (1 / p) * (1 / p - 1) / Ij**2   # d2R/dI2
        # ds/dI = 2 I / Ij^2 -> at I = Ij: 2/Ij;  d2s/dI2 = 2/Ij^2
        M = np.array([[1, 1, 1],
                      [2 / Ij, 4 / Ij, 6 / Ij],
                      [2 / Ij**2 + 0, 12 / Ij**2, 30 / Ij**2]], dtype=float)
        rhs = np.array([Rj - self.R_min, d1, d2])
        return np.linalg.solve(M, rhs)

    def curve(self, I: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        I = np.asarray(I, dtype=float)
        p = self.power
        ray = np.abs(I) >= self.I_join
        Ia = np.maximum(np.abs(I), 1e-300)
        R_ray = (Ia / self.c) ** (1 / p)
        dR_ray = R_ray / (p * Ia) * np.sign(I)
        b1, b2, b3 = self._cap_coeffs
        s = (I / self.I_join) ** 2
        ds = 2 * I / self.I_join**2
        R_cap = self.R_min + b1 * s + b2 * s**2 + b3 * s**3
        dR_cap = (b1 + 2 * b2 * s + 3 * b3 * s**2) * ds
        return np.where(ray, R_ray, R_cap), np.where(ray, dR_ray, dR_cap)

    def sample(self, model: SectorModel, n: int, rng: np.random.Generator,
               I_max: Optional[float] = None) -> LagrangianSample:
        I_max = I_max if I_max is not None else 4 * self.I_join
        I = rng.uniform(-I_max, I_max, n)
        R, dR = self.curve(I)
        pts = np.zeros((n, model.dim))
        tans = []
        iR, iI = model.iR(0), model.iI(0)
        pts[:, iR], pts[:, iI] = R, I
        tC = np.zeros((n, model.dim))
        tC[:, iR], tC[:, iI] = dR, 1.0
        tans.append(tC)
        mask = np.abs(I) >= self.I_join
        if model.nf:
            t = rng.uniform(-3 * model.F0prime_radius, 3 * model.F0prime_radius, n)
            u = np.array([math.cos(self.fiber_angle), math.sin(self.fiber_angle)])
            pts[:, 0], pts[:, 1] = t * u[0], t * u[1]
            tF = np.zeros((n, model.dim))
            tF[:, 0], tF[:, 1] = u
            tans.append(tF)
            mask &= np.abs(t) >= model.F0_radius
        mask &= np.abs(I) >= model.ledger.N0
        return LagrangianSample(pts, np.stack(tans, axis=1), mask)


@dataclass(frozen=True)
class TiltedLine:
    """Affine line ``I = slope R + offset`` (not Z-invariant unless offset = 0)."""
    slope: float = 1.0
    offset: float = 0.5

    def sample(self, model: SectorModel, n: int, rng: np.random.Generator,
               I_max: Optional[float] = None) -> LagrangianSample:
        R = rng.uniform(1.0, 10.0, n)
        pts = np.zeros((n, model.dim))
        pts[:, model.iR(0)], pts[:, model.iI(0)] = R, self.slope * R + self.offset
        t = np.zeros((n, 1, model.dim))
        t[:, 0, model.iR(0)], t[:, 0, model.iI(0)] = 1.0, self.slope
        return LagrangianSample(pts, t, np.ones(n, dtype=bool))


# ---------------------------------------------------------------------------
# JSON config

MODEL_SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["alpha", "k", "fiber", "F0", "F0prime", "bump", "ledger"],
    "properties": {
        "alpha": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "k": {"enum": [1, 2]},
        "fiber": {"enum": list(FIBERS)},
        "F0": {"type": "number", "exclusiveMinimum": 0},
        "F0prime": {"type": "number", "exclusiveMinimum": 0},
        "bump": {
            "type": "object", "required": ["a", "N0"],
            "properties": {"a": {"type": "number"}, "N0": {"type": "number", "exclusiveMinimum": 0}},
        },
        "ledger": {
            "type": "object", "required": ["eps0", "eps1", "N0", "N1", "beta"],
            "properties": {k: {"type": "number"} for k in ("eps0", "eps1", "T0", "N0", "N1", "beta", "N2")},
        },
    },
}

DEFAULT_PRESET: dict[str, Any] = {
    "alpha": 0.5, "k": 1, "fiber": "Plane", "F0": 1.0, "F0prime": 2.0,
    "bump": {"a": 0.1, "N0": 5.0},
    "ledger": {"eps0": 0.5, "eps1": 1e-3, "T0": 10.38, "N0": 5.0, "N1": 8.0, "beta": 0.25},
}


def solve_T0(eps0: float, eps1: float) -> float:
    """Centre of the admissible window ``5eps0/4 <= 2T0 sqrt(eps1) <= 3eps0/2``."""
    return 1.375 * eps0 / (2 * math.sqrt(eps1))


def model_from_dict(cfg: dict[str, Any]) -> SectorModel:
    try:
        jsonschema.validate(cfg, MODEL_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(x) for x in exc.absolute_path) or "<root>"
        raise ConfigError(f"model config invalid at {where}: {exc.message}") from None
    led = dict(cfg["ledger"])
    if "T0" not in led:
        led["T0"] = solve_T0(led["eps0"], led["eps1"])
    ledger = ConstantsLedger(**{k: float(v) for k, v in led.items()})
    bump = BumpF(float(cfg["bump"]["a"]), float(cfg["bump"]["N0"]), float(cfg["F0"]))
    try:
        return SectorModel(float(cfg["alpha"]), int(cfg["k"]), cfg["fiber"], float(cfg["F0"]),
                           float(cfg["F0prime"]), bump, ledger)
    except ConstructionError as exc:
        raise ConfigError(str(exc)) from None


def load_model(path: str | Path) -> SectorModel:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read model config {path}: {exc}") from None
    return model_from_dict(cfg.get("model", cfg))


def preset(**overrides: Any) -> dict[str, Any]:
    cfg = copy.deepcopy(DEFAULT_PRESET)
    for key, val in overrides.items():
        if isinstance(val, dict):
            cfg[key].update(val)
        else:
            cfg[key] = val
    return cfg

"""Convex corner smoothers, the 1D end profile and the even rotated profile.

The two-variable smoother is a product construction::

    phi(x1, x2) = [a(x1) a(x2) - (eps/2) w(x1) w(x2) + l(x1) l(x2)] / A

``a`` is the identity up to ``2 sqrt(eps)`` and then bends over to the constant
``A`` at ``ht``; ``w`` equals 1 up to ``eps0/2`` and dies at ``ht``; ``l`` is a
small saturating ramp that keeps ``dphi`` nonzero when both arguments are
large.  On ``[0, 2 sqrt(eps)]^2`` this is exactly ``(x1 x2 - eps/2)/A``, so the
zero level is the hyperbola ``x1 x2 = eps/2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.polynomial import Polynomial
from scipy.optimize import brentq

from . import _kernels
from .numerics import ConstructionError, DomainError


# ---------------------------------------------------------------------------
# convex polynomial bridge to zero

@dataclass(frozen=True)
class Bridge:
    """Convex C2 function on ``[x_start, x_start + length]`` ending flat at 0.

    ``lo``/``hi`` hold ascending u-coefficients of (value, d/du, d2/du2) on
    ``u < theta`` and ``u >= theta`` with ``u = (x - x_start) / length``.
    """
    x_start: float
    length: float
    theta: float
    degree: int
    lo: np.ndarray
    hi: np.ndarray

    def evaluate(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        u = np.clip((np.asarray(x, float) - self.x_start) / self.length, 0.0, 1.0)
        first = u < self.theta
        rows = []
        for r in range(3):
            v = np.where(first, _kernels._horner(self.lo[r], u), _kernels._horner(self.hi[r], u))
            rows.append(v / self.length**r)
        return rows[0], rows[1], rows[2]


def _pad(polys: list[Polynomial], width: int) -> np.ndarray:
    out = np.zeros((len(polys), width))
    for i, p in enumerate(polys):
        out[i, : p.coef.size] = p.coef
    return out


def convex_bridge(x_start: float, length: float, v0: float, s0: float, k0: float,
                  *, q_max: int = 40, theta_min: float = 0.05) -> Bridge:
    """Bridge matching value/slope/curvature ``(v0, s0, k0)`` at ``x_start``.

    The second derivative is ``k0 (1 - u/theta)^3 + c u^q (1 - u)`` (the cubic
    only for ``u < theta``), nonnegative by construction, and the bridge ends
    with value, slope and curvature zero.  The smallest admissible ``q`` wins.
    """
    if not (v0 > 0 and s0 < 0 and k0 > 0 and length > 0):
        raise ConstructionError("bridge needs v0 > 0, s0 < 0, k0 > 0 and positive length")
    L = length
    for q in range(1, q_max + 1):
        qa = k0 / 20.0
        qb = -(q + 1) * k0 / (4.0 * (q + 3))
        qc = (q + 1) * abs(s0) / ((q + 3) * L) - v0 / L**2
        disc = qb * qb - 4 * qa * qc
        if disc < 0:
            continue
        theta = (-qb - math.sqrt(disc)) / (2 * qa)
        c = (q + 1) * (q + 2) * (abs(s0) / L - k0 * theta / 4.0)
        if theta_min <= theta <= 1.0 and c >= 0.0:
            break
    else:
        raise ConstructionError(f"no admissible bridge (v0={v0:g}, s0={s0:g}, k0={k0:g}, L={L:g})")

    u = Polynomial([0.0, 1.0])
    tail = c * u**q * (1 - u)
    head = k0 * (1 - u / theta) ** 3 + tail
    # value(u) = L^2 int_u^1 (v - u) psi(v) dv, split at theta
    I_t, J_t = tail.integ(), (tail * u).integ()
    I_h, J_h = head.integ(), (head * u).integ()
    m0_hi = I_t(1.0) - I_t
    m1_hi = J_t(1.0) - J_t
    m0_lo = (I_h(theta) - I_h) + (I_t(1.0) - I_t(theta))
    m1_lo = (J_h(theta) - J_h) + (J_t(1.0) - J_t(theta))
    val_hi = L**2 * (m1_hi - u * m0_hi)
    val_lo = L**2 * (m1_lo - u * m0_lo)
    width = max(val_hi.coef.size, val_lo.coef.size)
    lo = _pad([val_lo, val_lo.deriv(), val_lo.deriv(2)], width)
    hi = _pad([val_hi, val_hi.deriv(), val_hi.deriv(2)], width)
    br = Bridge(float(x_start), float(L), float(theta), q, lo, hi)

    f0, f1, f2 = br.evaluate(np.array([x_start]))
    scale = max(abs(v0), abs(s0) * L, 1e-300)
    if abs(f0[0] - v0) > 1e-9 * scale or abs(f1[0] - s0) * L > 1e-9 * scale:
        raise ConstructionError("bridge failed to match its initial jet")
    return br


# ---------------------------------------------------------------------------
# 1D profile with hyperbolic start

@dataclass(frozen=True)
class Profile1D:
    eps: float
    T0: float
    bridge: Bridge

    @property
    def delta(self) -> float:
        return math.sqrt(self.eps / 2)

    @property
    def bridge_start(self) -> float:
        return 2 * math.sqrt(self.eps)

    @property
    def support_end(self) -> float:
        return 2 * self.T0 * math.sqrt(self.eps)

    def evaluate(self, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Value and first two derivatives; defined on ``x >= sqrt(eps/2)``."""
        x = np.asarray(x, dtype=float)
        if np.any(x < self.delta * (1 - 1e-12)):
            raise DomainError(f"profile is defined for x >= {self.delta:.6g}")
        e = self.eps
        hyp = x <= self.bridge_start
        xs = np.where(hyp, x, 1.0)
        b0, b1, b2 = self.bridge.evaluate(x)
        past = x >= self.support_end
        f0 = np.where(hyp, e / (2 * xs), np.where(past, 0.0, b0))
        f1 = np.where(hyp, -e / (2 * xs**2), np.where(past, 0.0, b1))
        f2 = np.where(hyp, e / xs**3, np.where(past, 0.0, b2))
        return f0, f1, f2

    def __call__(self, x):
        return self.evaluate(x)[0]


def build_f_tilde(eps: float, T0: float) -> Profile1D:
    """Hyperbola ``eps/(2x)`` on ``[sqrt(eps/2), 2 sqrt(eps)]`` bridged convexly to 0 at ``2 T0 sqrt(eps)``."""
    if not 0 < eps < 0.5:
        raise ConstructionError("need 0 < eps < 1/2")
    if T0 <= 1:
        raise ConstructionError("need T0 > 1")
    xb = 2 * math.sqrt(eps)
    v0, s0, k0 = eps / (2 * xb), -eps / (2 * xb**2), eps / xb**3
    length = 2 * T0 * math.sqrt(eps) - xb
    if length <= v0 / abs(s0):
        raise ConstructionError("support too short: the tangent at 2sqrt(eps) reaches zero beyond 2T0 sqrt(eps)")
    prof = Profile1D(eps, T0, convex_bridge(xb, length, v0, s0, k0))
    # C1 gluing check at both abscissae
    for x, side in ((xb, -1), (prof.support_end, 1)):
        left = prof.evaluate(np.array([x * (1 - 1e-13)]))
        right = prof.evaluate(np.array([x * (1 + 1e-13)]))
        if abs(left[0][0] - right[0][0]) > 1e-10 or abs(left[1][0] - right[1][0]) > 1e-10:
            raise ConstructionError(f"profile is not C1 at x={x:.6g}")
    return prof


def profile_clauses(prof: Profile1D, n: int = 10_000) -> dict[str, float]:
    """Worst slack of every stated profile inequality on ``n`` samples (>= 0 means it holds)."""
    x = np.linspace(prof.delta, 1.5 * prof.support_end, n)
    f0, f1, f2 = prof.evaluate(x)
    hyp = x <= prof.bridge_start
    strict = (x > prof.bridge_start) & (x < prof.support_end)
    eps = prof.eps
    return {
        "agrees_with_hyperbola": -float(np.max(np.abs(f0[hyp] - eps / (2 * x[hyp])))),
        "slope_in_(-1,0]": float(min(np.min(f1 + 1.0), np.min(-f1))),
        "convex": float(np.min(f2)),
        "strictly_convex_on_bridge": float(np.min(f2[strict])),
        "f_plus_x_fprime": float(np.min(f0 + x * f1)),
        "two_fprime_plus_x_fsecond": float(np.min(2 * f1 + x * f2)),
        "zero_past_support": -float(np.max(np.abs(f0[x >= prof.support_end]))),
    }


# ---------------------------------------------------------------------------
# even profile in rotated coordinates

@dataclass(frozen=True)
class EvenProfile:
    """``sqrt(y^2 + eps)`` near 0, ``|y|`` beyond ``Y1``, convex in between.

    On ``[Y0, Y1]`` the slope gap ``1 - s'`` is
    ``g0 (1-t)^2 [(1-rho) exp(-mu t) + rho]``, a decreasing C1 function that
    matches the hyperbolic slope and curvature at ``Y0`` and vanishes to first
    order at ``Y1``; ``rho`` is fixed by the area the gap must enclose.
    """
    eps: float
    Y0: float
    Y1: float
    g0: float
    mu: float
    rho: float

    def _tail(self, t):
        # int_t^1 of the gap shape, in units of t
        T = 1.0 - t
        mu = self.mu
        expo = np.exp(-mu * t) * (T * T / mu - 2 * T / mu**2 + 2 / mu**3) - 2 * math.exp(-mu) / mu**3
        return (1 - self.rho) * expo + self.rho * T**3 / 3

    def evaluate(self, y) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        y = np.asarray(y, dtype=float)
        ay, sgn = np.abs(y), np.sign(y)
        H = self.Y1 - self.Y0
        t = np.clip((ay - self.Y0) / H, 0.0, 1.0)
        mu, rho = self.mu, self.rho
        br = (1 - rho) * np.exp(-mu * t) + rho
        dbr = -mu * (1 - rho) * np.exp(-mu * t)
        gap = self.g0 * (1 - t) ** 2 * br
        dgap = self.g0 * (-2 * (1 - t) * br + (1 - t) ** 2 * dbr) / H
        root = np.sqrt(ay**2 + self.eps)
        inner, outer = ay <= self.Y0, ay >= self.Y1
        s0 = np.where(inner, root, np.where(outer, ay, ay + self.g0 * H * self._tail(t)))
        s1 = np.where(inner, ay / root, np.where(outer, 1.0, 1.0 - gap)) * sgn
        s2 = np.where(inner, self.eps / root**3, np.where(outer, 0.0, -dgap))
        return s0, s1, s2

    def __call__(self, y):
        return self.evaluate(y)[0]


def build_even_profile(eps: float, Y0: float, Y1: float) -> EvenProfile:
    if Y0 < math.sqrt(2 * eps) * (1 - 1e-12):
        raise ConstructionError("need Y0 >= sqrt(2 eps)")
    if Y1 <= 2 * Y0:
        raise ConstructionError("need Y1 > 2 Y0")
    H = Y1 - Y0
    root = math.sqrt(Y0**2 + eps)
    g0 = 1.0 - Y0 / root
    dm0 = eps / root**3
    gamma = (root - Y0) / (g0 * H)  # required area of the normalized gap
    beta = H * dm0 / g0             # required initial decay rate

    def shape_area(rho: float) -> float:
        mu = (beta - 2) / (1 - rho)
        F = (mu * mu - 2 * mu + 2 - 2 * math.exp(-mu)) / mu**3
        return rho / 3 + (1 - rho) * F - gamma

    if beta <= 2.1 or not gamma < 1 / 3:
        raise ConstructionError("Y1 too small for a monotone bridge")
    if shape_area(0.0) > 0:
        raise ConstructionError("bridge area too small for this (eps, Y0)")
    rho = brentq(shape_area, 0.0, 1 - 1e-12, xtol=1e-15)
    prof = EvenProfile(eps, Y0, Y1, g0, (beta - 2) / (1 - rho), rho)
    ys = np.linspace(Y0, Y1, 2001)
    _, s1, s2 = prof.evaluate(ys)
    if np.any(s2 < -1e-12) or np.any(np.diff(s1) < -1e-12):
        raise ConstructionError("even-profile bridge is not monotone")
    return prof


def default_even_profile(eps: float) -> EvenProfile:
    """Even profile with ``Y0 = sqrt(2 eps)`` and a comfortably long bridge."""
    Y0 = math.sqrt(2 * eps)
    root = math.sqrt(Y0**2 + eps)
    H = 6 * (root - Y0) / (1 - Y0 / root)
    return build_even_profile(eps, Y0, Y0 + max(H, 1.5 * Y0))


# ---------------------------------------------------------------------------
# corner smoother

@dataclass(frozen=True)
class Smoother:
    k: int
    eps: float
    T0: float
    eps0: float
    sigma: float
    prm: np.ndarray = field(repr=False)
    lo: np.ndarray = field(repr=False)
    hi: np.ndarray = field(repr=False)

    @property
    def wd(self) -> float:
        return math.sqrt(self.eps) / 4

    @property
    def ht(self) -> float:
        return 2 * self.T0 * math.sqrt(self.eps)

    @property
    def A(self) -> float:
        return float(self.prm[2])

    def profiles(self, x) -> np.ndarray:
        return _kernels.profile_1d(x, self.prm, self.lo, self.hi)

    def evaluate(self, X) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Value, gradient ``(..., k)`` and Hessian ``(..., k, k)``."""
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.k:
            raise ValueError(f"expected trailing dimension {self.k}")
        if np.any(X < 0):
            raise DomainError("smoother is defined on the closed positive orthant")
        shape = X.shape[:-1]
        Xf = X.reshape(-1, self.k)
        pr = [self.profiles(Xf[:, i]) for i in range(self.k)]
        if self.k == 2:
            val, grad, hess = _combine2(pr, self.eps, self.A)
        else:
            val, grad, hess = _combine3(pr, self.eps, self.A)
        _impose_linear(Xf, val, grad, hess, self.wd, self.ht)
        return (val.reshape(shape), grad.reshape(shape + (self.k,)),
                hess.reshape(shape + (self.k, self.k)))

    def __call__(self, X) -> np.ndarray:
        return self.evaluate(X)[0]


def _combine2(pr, eps, A):
    (a, a1, a2, w, w1, w2, l, l1, l2), (b, b1, b2, v, v1, v2, m, m1, m2) = pr
    h = eps / 2
    val = (a * b - h * w * v + l * m) / A
    grad = np.stack([(a1 * b - h * w1 * v + l1 * m) / A,
                     (a * b1 - h * w * v1 + l * m1) / A], axis=-1)
    hxx = (a2 * b - h * w2 * v + l2 * m) / A
    hyy = (a * b2 - h * w * v2 + l * m2) / A
    hxy = (a1 * b1 - h * w1 * v1 + l1 * m1) / A
    hess = np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)
    return val, grad, hess


def _combine3(pr, eps, A):
    a = [p[0] for p in pr]
    da = [p[1] for p in pr]
    d2a = [p[2] for p in pr]
    w = [p[3] for p in pr]
    dw = [p[4] for p in pr]
    d2w = [p[5] for p in pr]
    c = eps / (2 * A)
    A2 = A * A
    P = a[0] * a[1] * a[2]
    E = w[0] * w[1] + w[0] * w[2] + w[1] * w[2] - 2 * w[0] * w[1] * w[2]
    val = P / A2 - c * E
    grad, hess = [], [[None] * 3 for _ in range(3)]
    for i in range(3):
        j, k = [r for r in range(3) if r != i]
        rest = w[j] + w[k] - 2 * w[j] * w[k]
        grad.append(da[i] * a[j] * a[k] / A2 - c * dw[i] * rest)
        hess[i][i] = d2a[i] * a[j] * a[k] / A2 - c * d2w[i] * rest
        for j2 in (j, k):
            k2 = k if j2 == j else j
            hess[i][j2] = da[i] * da[j2] * a[k2] / A2 - c * dw[i] * dw[j2] * (1 - 2 * w[k2])
    grad = np.stack(grad, -1)
    hess = np.stack([np.stack(row, -1) for row in hess], -2)
    return val, grad, hess


def _impose_linear(X, val, grad, hess, wd, ht) -> None:
    """Write the exact linear branch ``phi = x_i`` on the declared cylinders."""
    k = X.shape[-1]
    for i in range(k):
        others = [j for j in range(k) if j != i]
        mask = X[..., i] <= wd
        for j in others:
            mask = mask & (X[..., j] >= ht)
        if not np.any(mask):
            continue
        val[mask] = X[..., i][mask]
        g = np.zeros(k)
        g[i] = 1.0
        grad[mask] = g
        hess[mask] = 0.0


def build_phi(k: int, eps: float, T0: float, eps0: Optional[float] = None,
              sigma: float = 0.3) -> Smoother:
    """Symmetric convex corner smoother in ``k`` in {2, 3} variables."""
    if k not in (2, 3):
        raise ConstructionError("only k = 2 and k = 3 are supported")
    if eps <= 0 or T0 <= 1:
        raise ConstructionError("need eps > 0 and T0 > 1")
    ht = 2 * T0 * math.sqrt(eps)
    wd = math.sqrt(eps) / 4
    xa = 2 * math.sqrt(eps)
    if not wd < ht:
        raise ConstructionError("width must be below height")
    if eps0 is None:
        eps0 = ht / 1.3
    x0 = eps0 / 2
    if not xa < x0 < ht:
        raise ConstructionError(f"need 2sqrt(eps) < eps0/2 < ht, got {xa:.4g}, {x0:.4g}, {ht:.4g}")
    L = ht - xa
    A = xa + L / 2
    # jet of a at x0, then of 1/a
    t = (x0 - xa) / L
    a0 = xa + L * (t - t**4 * (2.5 - 3 * t + t * t))
    a1 = 1 - t**3 * (10 - 15 * t + 6 * t * t)
    a2 = -30 * t * t * (1 - t) ** 2 / L
    v0, s0, k0 = 1 / a0, -a1 / a0**2, (2 * a1**2 - a0 * a2) / a0**3
    br = convex_bridge(x0, ht - x0, v0, s0, k0)
    prm = np.array([xa, L, A, x0, ht - x0, ht, br.theta, x0, ht - x0, sigma], dtype=float)
    return Smoother(k, float(eps), float(T0), float(eps0), float(sigma), prm, br.lo.copy(), br.hi.copy())


def width(sm: Smoother) -> float:
    return sm.wd


def height(sm: Smoother) -> float:
    return sm.ht


def grad_phi(sm: Smoother, x) -> np.ndarray:
    return sm.evaluate(x)[1]


def hess_phi(sm: Smoother, x) -> np.ndarray:
    return sm.evaluate(x)[2]


def verify_width_height(sm: Smoother, rng: np.random.Generator, n: int = 2000) -> dict[str, float]:
    """Sample the declared linearity cylinders and a shell just outside them.

    Inside: ``max |phi - x_1|`` (should be exactly 0).  Outside: samples with
    ``x_2`` in ``[0.9 ht, ht)``, reporting the smallest ``|phi - x_1|`` seen
    above roundoff and the fraction that differ.
    """
    k = sm.k
    X = rng.uniform(0, sm.wd, size=(n, k))
    X[:, 1:] = rng.uniform(sm.ht, 3 * sm.ht, size=(n, k - 1))
    inside = float(np.max(np.abs(sm(X) - X[:, 0])))
    Y = X.copy()
    Y[:, 1] = rng.uniform(0.9 * sm.ht, sm.ht * (1 - 1e-9), size=n)
    diff = np.abs(sm(Y) - Y[:, 0])
    return {"inside_max_dev": inside, "outside_fraction_differs": float(np.mean(diff > 1e-14)),
            "outside_median_dev": float(np.median(diff))}


def level_curve(sm: Smoother, c: float, x_max: float, n: int = 200) -> np.ndarray:
    """Points of ``{phi = c}`` for k = 2, solved for ``x2`` along an ``x1`` grid."""
    if sm.k != 2:
        raise ValueError("level curves are drawn for k = 2 only")
    pts = []
    for x1 in np.linspace(0.0, x_max, n):
        f = lambda x2: float(sm(np.array([x1, x2]))) - c
        lo_v, hi_v = f(0.0), f(x_max)
        if lo_v > 0 or hi_v < 0:
            continue
        pts.append((x1, brentq(f, 0.0, x_max, xtol=1e-13)))
    return np.array(pts).reshape(-1, 2)

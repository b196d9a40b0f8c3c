"""Finite-difference exterior calculus, small linear solves and RK4 integration.

Fields are plain callables on 1D float arrays.  A one-form field returns the
coefficient vector against the coordinate cobasis, a two-form is stored as an
antisymmetric matrix ``M`` with ``omega(u, v) = u @ M @ v``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

ScalarField = Callable[[np.ndarray], float]
OneFormField = Callable[[np.ndarray], np.ndarray]
PointMap = Callable[[np.ndarray], np.ndarray]
TimeField = Callable[[float, np.ndarray], np.ndarray]

DEFAULT_H = 1e-4
COND_LIMIT = 1e12


class SecLabError(Exception):
    """Base class for all library errors."""


class DomainError(SecLabError, ValueError):
    pass


class RegionError(DomainError):
    pass


class DegeneracyError(SecLabError, ArithmeticError):
    pass


class EscapeError(SecLabError):
    def __init__(self, message: str, location: np.ndarray):
        super().__init__(message)
        self.location = location


class ConstructionError(SecLabError, ValueError):
    pass


@dataclass(frozen=True)
class TwoForm:
    mat: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.mat, dtype=float)
        if not _is_antisym(m):
            m = 0.5 * (m - m.T)
        object.__setattr__(self, "mat", m)

    def __call__(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(u @ self.mat @ v)


def _is_antisym(m: np.ndarray) -> bool:
    return bool(np.array_equal(m, -m.T))


@dataclass(frozen=True)
class LinearMap:
    mat: np.ndarray
    basis_tag: str = "tangent"

    def __post_init__(self) -> None:
        if self.basis_tag not in ("tangent", "cotangent"):
            raise ValueError(f"unknown basis tag {self.basis_tag!r}")
        if not np.all(np.isfinite(self.mat)):
            raise DegeneracyError("linear map has non-finite entries")

    def dual(self) -> "LinearMap":
        """Tangent action <-> cotangent action (xi -> xi o J is J^T xi)."""
        tag = "cotangent" if self.basis_tag == "tangent" else "tangent"
        return LinearMap(self.mat.T.copy(), tag)


def _stencil_offsets(p: np.ndarray, i: int, h: float,
                     lower: Optional[Sequence[Optional[float]]],
                     one_sided: bool) -> str:
    """Return 'central' or 'forward' for coordinate ``i``."""
    if lower is None or lower[i] is None or p[i] - h >= lower[i]:
        return "central"
    if one_sided and p[i] >= lower[i]:
        return "forward"
    raise DomainError(f"stencil leaves chart in coordinate {i} "
                      f"(x[{i}]={p[i]:.6g}, h={h:g}, bound={lower[i]:g})")


def _partial(f: Callable[[np.ndarray], np.ndarray], p: np.ndarray, i: int,
             h: float, mode: str) -> np.ndarray:
    e = np.zeros_like(p)
    e[i] = h
    if mode == "central":
        return (np.asarray(f(p + e)) - np.asarray(f(p - e))) / (2 * h)
    f0, f1, f2 = (np.asarray(f(p + j * e)) for j in (0, 1, 2))
    return (-3 * f0 + 4 * f1 - f2) / (2 * h)


def fd_gradient(f: ScalarField, p: np.ndarray, h: float = DEFAULT_H, *,
                lower: Optional[Sequence[Optional[float]]] = None,
                one_sided: bool = False,
                analytic: Optional[OneFormField] = None) -> np.ndarray:
    """Second-order finite-difference gradient of a scalar field."""
    if analytic is not None:
        return np.asarray(analytic(p), dtype=float)
    if h <= 0:
        raise ValueError("step must be positive")
    p = np.asarray(p, dtype=float)
    out = np.empty(p.size)
    for i in range(p.size):
        mode = _stencil_offsets(p, i, h, lower, one_sided)
        out[i] = float(_partial(f, p, i, h, mode))
    return out


def fd_jacobian(fmap: PointMap, p: np.ndarray, h: float = DEFAULT_H, *,
                lower: Optional[Sequence[Optional[float]]] = None,
                one_sided: bool = False, basis_tag: str = "tangent") -> LinearMap:
    """Column ``i`` is the derivative of ``fmap`` along coordinate ``i``."""
    if h <= 0:
        raise ValueError("step must be positive")
    p = np.asarray(p, dtype=float)
    cols = [_partial(fmap, p, i, h, _stencil_offsets(p, i, h, lower, one_sided))
            for i in range(p.size)]
    return LinearMap(np.column_stack(cols), basis_tag)


def fd_two_form(theta: OneFormField, p: np.ndarray, h: float = DEFAULT_H, *,
                lower: Optional[Sequence[Optional[float]]] = None,
                one_sided: bool = False) -> TwoForm:
    """Exterior derivative: (d theta)_ij = d_i theta_j - d_j theta_i."""
    jac = fd_jacobian(theta, p, h, lower=lower, one_sided=one_sided).mat
    d = jac.T  # row i holds d_i theta
    return TwoForm(d - d.T)


def omega_dual(omega: TwoForm, xi: np.ndarray) -> np.ndarray:
    """Solve ``v -| omega = xi``, i.e. ``omega(v, .) = xi``."""
    xi = np.asarray(xi, dtype=float)
    m = omega.mat.T
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise DegeneracyError(f"two-form is degenerate (condition {cond:.3g})")
    v = np.linalg.solve(m, xi)
    # one refinement step keeps the residual at roundoff level
    v += np.linalg.solve(m, xi - m @ v)
    return v


def interior(v: np.ndarray, omega: TwoForm) -> np.ndarray:
    """Covector ``omega(v, .)``."""
    return omega.mat.T @ v


def rk4_flow(field: TimeField, p0: np.ndarray, T: float, steps: int, *,
             t0: float = 0.0, inside: Optional[Callable[[np.ndarray], bool]] = None,
             return_path: bool = False) -> np.ndarray:
    """Classical RK4 for ``x' = field(t, x)`` from ``t0`` to ``t0 + T``."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x = np.array(p0, dtype=float)
    dt = T / steps
    t = t0
    path = [x.copy()] if return_path else None
    for _ in range(steps):
        k1 = field(t, x)
        k2 = field(t + dt / 2, x + dt / 2 * k1)
        k3 = field(t + dt / 2, x + dt / 2 * k2)
        k4 = field(t + dt, x + dt * k3)
        x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += dt
        if inside is not None and not inside(x):
            raise EscapeError(f"trajectory left the chart at t={t:.6g}", x.copy())
        if path is not None:
            path.append(x.copy())
    return np.array(path) if path is not None else x


def smoothstep5(x, lo: float, hi: float):
    """C2 quintic step from 0 at ``lo`` to 1 at ``hi`` with its two derivatives."""
    x = np.asarray(x, dtype=float)
    w = hi - lo
    t = np.clip((x - lo) / w, 0.0, 1.0)
    v = t**3 * (10 - 15 * t + 6 * t * t)
    d1 = 30 * t * t * (1 - t) ** 2 / w
    d2 = 60 * t * (1 - t) * (1 - 2 * t) / (w * w)
    return v, d1, d2

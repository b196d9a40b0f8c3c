"""Hot 1D profile kernels behind the corner smoother.

Two interchangeable backends evaluate the same piecewise formulas: an
``@njit`` loop (default) and a vectorized numpy version.  Set
``SECLAB_DISABLE_NUMBA=1`` to force numpy.

Parameter vector layout (``prm``)::

    0 xa   1 L    2 A    3 x0   4 Lb   5 ht   6 theta   7 xl   8 Ll   9 sigma

``lo`` / ``hi`` are ``(3, m)`` ascending coefficient tables (value, first and
second u-derivative) of the cutoff bridge on ``u < theta`` / ``u >= theta``.
Output rows: a, a', a'', w, w', w'', l, l', l''.
"""
from __future__ import annotations

import math
import os

import numpy as np
from scipy.special import erf

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

SQRT_PI_2 = math.sqrt(math.pi) / 2.0


def numba_enabled() -> bool:
    return numba is not None and os.environ.get("SECLAB_DISABLE_NUMBA", "") not in ("1", "true", "yes")


def _horner(c: np.ndarray, u):
    acc = np.zeros_like(u) + c[-1]
    for k in range(c.size - 2, -1, -1):
        acc = acc * u + c[k]
    return acc


def np_profile_1d(x: np.ndarray, prm: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    xa, L, A, x0, Lb, ht, theta, xl, Ll, sig = prm[:10]
    out = np.zeros((9,) + x.shape)

    t = np.clip((x - xa) / L, 0.0, 1.0)
    S = t**3 * (10 - 15 * t + 6 * t * t)
    dS = 30 * t * t * (1 - t) ** 2
    a_mid = xa + L * (t - t**4 * (2.5 - 3 * t + t * t))
    below, above = x <= xa, x >= ht
    out[0] = np.where(below, x, np.where(above, A, a_mid))
    out[1] = np.where(below, 1.0, np.where(above, 0.0, 1 - S))
    out[2] = np.where(below | above, 0.0, -dS / L)

    u = np.clip((x - x0) / Lb, 0.0, 1.0)
    first = u < theta
    eta = np.where(first, _horner(lo[0], u), _horner(hi[0], u))
    deta = np.where(first, _horner(lo[1], u), _horner(hi[1], u)) / Lb
    d2eta = np.where(first, _horner(lo[2], u), _horner(hi[2], u)) / (Lb * Lb)
    flat, gone = x <= x0, x >= ht
    mid = ~(flat | gone)
    out[3] = np.where(flat, 1.0, np.where(gone, 0.0, out[0] * eta))
    out[4] = np.where(mid, out[1] * eta + out[0] * deta, 0.0)
    out[5] = np.where(mid, out[2] * eta + 2 * out[1] * deta + out[0] * d2eta, 0.0)

    s = (x - xl) / Ll
    s_in = np.clip(s, 0.0, 1.0)
    s_out = np.maximum(s - 1.0, 0.0)
    gauss = np.exp(-s_out * s_out)
    ramp = np.where(s < 1.0, s_in**3 - 0.5 * s_in**4, 0.5 + SQRT_PI_2 * erf(s_out))
    dramp = np.where(s < 1.0, 3 * s_in**2 - 2 * s_in**3, gauss)
    d2ramp = np.where(s < 1.0, 6 * s_in - 6 * s_in**2, -2 * s_out * gauss)
    on = s > 0.0
    out[6] = np.where(on, sig * Ll * ramp, 0.0)
    out[7] = np.where(on, sig * dramp, 0.0)
    out[8] = np.where(on, sig * d2ramp / Ll, 0.0)
    return out


def _nb_profile_1d_py(x, prm, lo, hi):
    xa, L, A, x0, Lb, ht, theta, xl, Ll, sig = (prm[0], prm[1], prm[2], prm[3], prm[4],
                                                prm[5], prm[6], prm[7], prm[8], prm[9])
    n = x.size
    out = np.zeros((9, n))
    m = lo.shape[1]
    for i in range(n):
        xi = x[i]
        if xi <= xa:
            a, a1, a2 = xi, 1.0, 0.0
        elif xi >= ht:
            a, a1, a2 = A, 0.0, 0.0
        else:
            t = (xi - xa) / L
            a = xa + L * (t - t**4 * (2.5 - 3.0 * t + t * t))
            a1 = 1.0 - t**3 * (10.0 - 15.0 * t + 6.0 * t * t)
            a2 = -30.0 * t * t * (1.0 - t) ** 2 / L
        out[0, i] = a
        out[1, i] = a1
        out[2, i] = a2

        if xi <= x0:
            out[3, i] = 1.0
        elif xi < ht:
            u = (xi - x0) / Lb
            tab = lo if u < theta else hi
            e0 = tab[0, m - 1]
            e1 = tab[1, m - 1]
            e2 = tab[2, m - 1]
            for k in range(m - 2, -1, -1):
                e0 = e0 * u + tab[0, k]
                e1 = e1 * u + tab[1, k]
                e2 = e2 * u + tab[2, k]
            e1 /= Lb
            e2 /= Lb * Lb
            out[3, i] = a * e0
            out[4, i] = a1 * e0 + a * e1
            out[5, i] = a2 * e0 + 2.0 * a1 * e1 + a * e2

        s = (xi - xl) / Ll
        if s > 0.0:
            if s < 1.0:
                r0 = s**3 - 0.5 * s**4
                r1 = 3.0 * s * s - 2.0 * s**3
                r2 = 6.0 * s - 6.0 * s * s
            else:
                so = s - 1.0
                g = math.exp(-so * so)
                r0 = 0.5 + SQRT_PI_2 * math.erf(so)
                r1 = g
                r2 = -2.0 * so * g
            out[6, i] = sig * Ll * r0
            out[7, i] = sig * r1
            out[8, i] = sig * r2 / Ll
    return out


if numba is not None:
    nb_profile_1d = numba.njit(cache=True, nogil=True)(_nb_profile_1d_py)
else:  # pragma: no cover
    nb_profile_1d = _nb_profile_1d_py


def profile_1d(x: np.ndarray, prm: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Evaluate all nine profile rows at ``x`` (any shape)."""
    x = np.asarray(x, dtype=float)
    if numba_enabled():
        flat = nb_profile_1d(np.ascontiguousarray(x.ravel()), prm, lo, hi)
        return flat.reshape((9,) + x.shape)
    return np_profile_1d(x, prm, lo, hi)

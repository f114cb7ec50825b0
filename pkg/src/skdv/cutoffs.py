"""Smooth cutoff family used by the regularized nonlinearities.

``phi`` is the bump equal to 1 on [-1, 1] and 0 outside (-2, 2), built from
``g(t) = exp(-1/t)`` as ``g(2-|x|) / (g(2-|x|) + g(|x|-1))`` on the transition.
Everything else is derived from it:

* ``phi_K(x) = phi(x / K)``
* ``psi_K(x) = x phi_K'(x) + phi_K(x) = d/dx [x phi_K(x)]``
* ``psi1_K(x) = int_0^x s phi_K(s) ds`` and ``psi2_K(x) = int_0^x s^2 phi_K(s) ds``

``K = inf`` disables the cutoff (``phi_K = psi_K = 1``).
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import integrate

from . import kernels

QUAD_EPSABS = 1e-10


def _check_k(K: float) -> None:
    if not K > 0:
        raise ValueError(f"cutoff scale K must be positive, got {K!r}")


def phi_K(x, K: float):
    _check_k(K)
    if math.isinf(K):
        return np.ones_like(np.asarray(x, dtype=np.float64))
    return kernels.cutoff_profile(np.asarray(x, dtype=np.float64) / K)[0]


def phi_K_derivatives(x, K: float):
    """``(phi_K, phi_K', phi_K'')`` evaluated at ``x``."""
    _check_k(K)
    x = np.asarray(x, dtype=np.float64)
    if math.isinf(K):
        return np.ones_like(x), np.zeros_like(x), np.zeros_like(x)
    p0, p1, p2 = kernels.cutoff_profile(x / K)
    return p0, p1 / K, p2 / K**2


def psi_K(x, K: float):
    _check_k(K)
    x = np.asarray(x, dtype=np.float64)
    if math.isinf(K):
        return np.ones_like(x)
    p0, p1, _ = kernels.cutoff_profile(x / K)
    return x * p1 / K + p0


# -- antiderivatives --------------------------------------------------------


@lru_cache(maxsize=None)
def _unit_total(power: int) -> float:
    """``int_0^2 s^power phi(s) ds`` at K = 1."""
    head = 1.0 / (power + 1)
    tail, _ = integrate.quad(
        lambda s: s**power * kernels.cutoff_profile_numpy(np.array([s]))[0][0],
        1.0, 2.0, epsabs=1e-14, epsrel=1e-14, limit=200,
    )
    return head + tail


def _unit_transition(y: np.ndarray, power: int) -> np.ndarray:
    """``int_1^y s^power phi(s) ds`` for ``1 < y < 2`` (adaptive, vectorized)."""
    span = y - 1.0

    def integrand(t):
        s = 1.0 + span * t
        return span * s**power * kernels.cutoff_profile(s)[0]

    val, _ = integrate.quad_vec(integrand, 0.0, 1.0, epsabs=QUAD_EPSABS / 10, epsrel=1e-12)
    return val


def _unit_antiderivative(y: np.ndarray, power: int) -> np.ndarray:
    """``int_0^y s^power phi(s) ds`` for ``y >= 0`` at K = 1."""
    out = y ** (power + 1) / (power + 1)
    far = y >= 2.0
    out[far] = _unit_total(power)
    mid = (y > 1.0) & ~far
    if np.any(mid):
        out[mid] = 1.0 / (power + 1) + _unit_transition(y[mid], power)
    return out


def psi1_K(x, K: float):
    """``int_0^x s phi_K(s) ds``; equals ``x^2 / 2`` on ``|x| <= K``."""
    _check_k(K)
    x = np.asarray(x, dtype=np.float64)
    if math.isinf(K):
        return 0.5 * x**2
    y = np.abs(x) / K
    if np.all(y <= 1.0):
        return 0.5 * x**2
    return K**2 * _unit_antiderivative(np.atleast_1d(y), 1).reshape(x.shape)


def psi2_K(x, K: float):
    """``int_0^x s^2 phi_K(s) ds``; equals ``x^3 / 3`` on ``|x| <= K``."""
    _check_k(K)
    x = np.asarray(x, dtype=np.float64)
    if math.isinf(K):
        return x**3 / 3.0
    y = np.abs(x) / K
    if np.all(y <= 1.0):
        return x**3 / 3.0
    val = K**3 * _unit_antiderivative(np.atleast_1d(y), 2).reshape(x.shape)
    return np.sign(x) * val


# -- tail profile -----------------------------------------------------------


def tail_profile(xi):
    """Smooth step: 0 on ``|xi| <= 1/2``, 1 on ``|xi| >= 1``, C-infinity between."""
    y = np.abs(np.asarray(xi, dtype=np.float64))
    out = np.where(y >= 1.0, 1.0, 0.0)
    mid = (y > 0.5) & (y < 1.0)
    if np.any(mid):
        a = np.exp(-1.0 / (y[mid] - 0.5))
        b = np.exp(-1.0 / (1.0 - y[mid]))
        out[mid] = a / (a + b)
    return out

"""Hot pointwise kernels with a numba and a pure-numpy implementation.

The numba path is used when numba imports and ``SKDV_DISABLE_NUMBA`` is unset
(or set to ``0``/``false``). Both paths compute the same quantities; results
agree to rounding (transcendental functions may differ in the last ulp).

Kernels
-------
gaussian_block
    Counter-based standard normals keyed by ``(seed, path, step, channel, mode)``
    through Philox4x64-10 and Box-Muller.
cutoff_profile
    The C-infinity bump ``phi`` (plateau on [-1, 1], support in [-2, 2]) with its
    first two derivatives.
nonlinear_phase
    Exact phase rotation of the short-wave field under the (cutoff) nonlinearity.
"""
from __future__ import annotations

import math
import os

import numpy as np

ENV_FLAG = "SKDV_DISABLE_NUMBA"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _numba_requested() -> bool:
    flag = os.environ.get(ENV_FLAG, "").strip().lower()
    return flag in ("", "0", "false", "no", "off")


def _njit(func):
    if not HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


# Philox4x64 constants (Salmon et al., Random123).
PHILOX_M0 = np.uint64(0xD2E7470EE14C6C93)
PHILOX_M1 = np.uint64(0xCA5A826395121157)
PHILOX_W0 = np.uint64(0x9E3779B97F4A7C15)
PHILOX_W1 = np.uint64(0xBB67AE8584CAA73B)
PHILOX_ROUNDS = 10
KEY_TAG = np.uint64(0x534B4456)  # second key word, fixed
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_TWO_M53 = 2.0**-53
_TWO_PI = 2.0 * math.pi
_G_FLOOR = 1e-3  # exp(-1/t) == 0.0 in double below this


# ---------------------------------------------------------------- numpy path


def _mulhilo_np(a, b):
    alo = a & _MASK32
    ahi = a >> _S32
    blo = b & _MASK32
    bhi = b >> _S32
    ll = alo * blo
    lh = alo * bhi
    hl = ahi * blo
    hh = ahi * bhi
    mid = (ll >> _S32) + (lh & _MASK32) + (hl & _MASK32)
    hi = hh + (lh >> _S32) + (hl >> _S32) + (mid >> _S32)
    return hi, a * b


def philox4x64_numpy(c0, c1, c2, c3, k0, k1):
    """Philox4x64-10 block function, vectorized over broadcastable counters."""
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) for c in (c0, c1, c2, c3))
    c0, c1, c2, c3 = np.broadcast_arrays(c0, c1, c2, c3)
    k0 = np.uint64(k0)
    k1 = np.uint64(k1)
    with np.errstate(over="ignore"):
        for r in range(PHILOX_ROUNDS):
            if r > 0:
                k0 = k0 + PHILOX_W0
                k1 = k1 + PHILOX_W1
            hi0, lo0 = _mulhilo_np(PHILOX_M0, c0)
            hi1, lo1 = _mulhilo_np(PHILOX_M1, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


def gaussian_block_numpy(seed, paths, step, channel, num_modes):
    paths = np.asarray(paths, dtype=np.uint64)
    modes = np.arange(num_modes, dtype=np.uint64)
    r0, r1, _, _ = philox4x64_numpy(
        modes[None, :], np.uint64(step), np.uint64(channel), paths[:, None],
        np.uint64(seed), KEY_TAG,
    )
    u1 = ((r0 >> _S11).astype(np.float64) + 1.0) * _TWO_M53
    u2 = (r1 >> _S11).astype(np.float64) * _TWO_M53
    rad = np.sqrt(-2.0 * np.log(u1))
    ang = _TWO_PI * u2
    out = np.empty(paths.shape + (num_modes, 2))
    out[..., 0] = rad * np.cos(ang)
    out[..., 1] = rad * np.sin(ang)
    return out


def _g_derivs_np(t):
    g = np.zeros_like(t)
    g1 = np.zeros_like(t)
    g2 = np.zeros_like(t)
    ok = t > _G_FLOOR
    ts = t[ok]
    e = np.exp(-1.0 / ts)
    g[ok] = e
    g1[ok] = e / ts**2
    g2[ok] = e * (1.0 / ts**4 - 2.0 / ts**3)
    return g, g1, g2


def cutoff_profile_numpy(x):
    x = np.asarray(x, dtype=np.float64)
    y = np.abs(x)
    phi = np.where(y <= 1.0, 1.0, 0.0)
    d1 = np.zeros_like(y)
    d2 = np.zeros_like(y)
    mid = (y > 1.0) & (y < 2.0)
    if np.any(mid):
        ym = y[mid]
        a, ga1, ga2 = _g_derivs_np(2.0 - ym)
        b, gb1, gb2 = _g_derivs_np(ym - 1.0)
        a1, a2 = -ga1, ga2
        s = a + b
        s1 = a1 + gb1
        s2 = a2 + gb2
        num = a1 * s - a * s1
        phi[mid] = a / s
        dy = num / s**2
        d1[mid] = np.where(x[mid] < 0.0, -dy, dy)
        d2[mid] = (a2 * s - a * s2) / s**2 - 2.0 * s1 * num / s**3
    return phi, d1, d2


def nonlinear_phase_numpy(u, v, gamma1, beta, K, tau):
    rho = u.real**2 + u.imag**2
    if math.isinf(K):
        phi = np.ones_like(rho)
        psi = np.ones_like(rho)
    else:
        p0, p1, _ = cutoff_profile_numpy(rho / K)
        phi = p0
        psi = rho * p1 / K + p0
    theta = (gamma1 * psi * v + beta * phi * rho) * tau
    return u * (np.cos(theta) - 1j * np.sin(theta))


# ---------------------------------------------------------------- numba path


def _mulhilo_scalar(a, b):
    alo = a & _MASK32
    ahi = a >> _S32
    blo = b & _MASK32
    bhi = b >> _S32
    ll = alo * blo
    lh = alo * bhi
    hl = ahi * blo
    hh = ahi * bhi
    mid = (ll >> _S32) + (lh & _MASK32) + (hl & _MASK32)
    hi = hh + (lh >> _S32) + (hl >> _S32) + (mid >> _S32)
    return hi, a * b


_mulhilo_nb = _njit(_mulhilo_scalar)


def _philox_scalar(c0, c1, c2, c3, k0, k1):
    for r in range(PHILOX_ROUNDS):
        if r > 0:
            k0 = k0 + PHILOX_W0
            k1 = k1 + PHILOX_W1
        hi0, lo0 = _mulhilo_nb(PHILOX_M0, c0)
        hi1, lo1 = _mulhilo_nb(PHILOX_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


_philox_nb = _njit(_philox_scalar)


def _philox_array(c0, c1, c2, c3, k0, k1):
    n = c0.shape[0]
    out = np.empty((4, n), dtype=np.uint64)
    for j in range(n):
        r0, r1, r2, r3 = _philox_nb(c0[j], c1[j], c2[j], c3[j], k0, k1)
        out[0, j] = r0
        out[1, j] = r1
        out[2, j] = r2
        out[3, j] = r3
    return out


_philox_array_nb = _njit(_philox_array)


def philox4x64_numba(c0, c1, c2, c3, k0, k1):
    """Philox4x64-10 block function (compiled loop over flattened counters)."""
    cs = np.broadcast_arrays(*(np.asarray(c, dtype=np.uint64) for c in (c0, c1, c2, c3)))
    shape = cs[0].shape
    flat = [np.array(c, dtype=np.uint64).ravel() for c in cs]
    out = _philox_array_nb(*flat, np.uint64(k0), np.uint64(k1))
    return tuple(out[i].reshape(shape) for i in range(4))


def _gaussian_block(seed, paths, step, channel, num_modes):
    npaths = paths.shape[0]
    out = np.empty((npaths, num_modes, 2))
    for p in range(npaths):
        for i in range(num_modes):
            r0, r1, _, _ = _philox_nb(np.uint64(i), step, channel, paths[p], seed, KEY_TAG)
            u1 = (float(r0 >> _S11) + 1.0) * _TWO_M53
            u2 = float(r1 >> _S11) * _TWO_M53
            rad = math.sqrt(-2.0 * math.log(u1))
            ang = _TWO_PI * u2
            out[p, i, 0] = rad * math.cos(ang)
            out[p, i, 1] = rad * math.sin(ang)
    return out


_gaussian_block_nb = _njit(_gaussian_block)


def gaussian_block_numba(seed, paths, step, channel, num_modes):
    paths = np.ascontiguousarray(np.asarray(paths, dtype=np.uint64))
    flat = paths.ravel()
    out = _gaussian_block_nb(np.uint64(seed), flat, np.uint64(step), np.uint64(channel), int(num_modes))
    return out.reshape(paths.shape + (num_modes, 2))


def _g_scalar(t):
    if t <= _G_FLOOR:
        return 0.0, 0.0, 0.0
    e = math.exp(-1.0 / t)
    return e, e / (t * t), e * (1.0 / t**4 - 2.0 / t**3)


_g_nb = _njit(_g_scalar)


def _profile_scalar(x):
    y = abs(x)
    if y <= 1.0:
        return 1.0, 0.0, 0.0
    if y >= 2.0:
        return 0.0, 0.0, 0.0
    a, ga1, ga2 = _g_nb(2.0 - y)
    b, gb1, gb2 = _g_nb(y - 1.0)
    a1 = -ga1
    s = a + b
    s1 = a1 + gb1
    s2 = ga2 + gb2
    num = a1 * s - a * s1
    dy = num / (s * s)
    d2 = (ga2 * s - a * s2) / (s * s) - 2.0 * s1 * num / (s * s * s)
    if x < 0.0:
        dy = -dy
    return a / s, dy, d2


_profile_nb = _njit(_profile_scalar)


def _profile_array(x):
    n = x.shape[0]
    phi = np.empty(n)
    d1 = np.empty(n)
    d2 = np.empty(n)
    for j in range(n):
        phi[j], d1[j], d2[j] = _profile_nb(x[j])
    return phi, d1, d2


_profile_array_nb = _njit(_profile_array)


def cutoff_profile_numba(x):
    x = np.asarray(x, dtype=np.float64)
    shape = x.shape
    phi, d1, d2 = _profile_array_nb(np.ascontiguousarray(x).ravel())
    return phi.reshape(shape), d1.reshape(shape), d2.reshape(shape)


def _phase_array(u, v, gamma1, beta, K, tau, finite_k):
    n = u.shape[0]
    out = np.empty(n, dtype=np.complex128)
    for j in range(n):
        re = u[j].real
        im = u[j].imag
        rho = re * re + im * im
        phi = 1.0
        psi = 1.0
        if finite_k:
            p0, p1, _ = _profile_nb(rho / K)
            phi = p0
            psi = rho * p1 / K + p0
        theta = (gamma1 * psi * v[j] + beta * phi * rho) * tau
        c = math.cos(theta)
        s = math.sin(theta)
        out[j] = complex(re * c + im * s, im * c - re * s)
    return out


_phase_array_nb = _njit(_phase_array)


def nonlinear_phase_numba(u, v, gamma1, beta, K, tau):
    u = np.asarray(u, dtype=np.complex128)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != u.shape:
        v = np.broadcast_to(v, u.shape).copy()
    shape = u.shape
    out = _phase_array_nb(
        np.ascontiguousarray(u).ravel(), np.ascontiguousarray(v).ravel(),
        float(gamma1), float(beta), float(K) if not math.isinf(K) else 1.0,
        float(tau), not math.isinf(K),
    )
    return out.reshape(shape)


# ---------------------------------------------------------------- dispatch

_IMPLS = {
    "numpy": {
        "philox4x64": philox4x64_numpy,
        "gaussian_block": gaussian_block_numpy,
        "cutoff_profile": cutoff_profile_numpy,
        "nonlinear_phase": nonlinear_phase_numpy,
    },
    "numba": {
        "philox4x64": philox4x64_numba,
        "gaussian_block": gaussian_block_numba,
        "cutoff_profile": cutoff_profile_numba,
        "nonlinear_phase": nonlinear_phase_numba,
    },
}

BACKEND = "numba" if (HAVE_NUMBA and _numba_requested()) else "numpy"


def implementations(backend: str) -> dict:
    """Return the kernel table for ``backend`` ('numba' or 'numpy')."""
    if backend not in _IMPLS:
        raise ValueError(f"unknown kernel backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not importable")
    return _IMPLS[backend]


def use_backend(backend: str) -> None:
    """Rebind the module-level kernels to ``backend``."""
    global BACKEND, philox4x64, gaussian_block, cutoff_profile, nonlinear_phase
    table = implementations(backend)
    BACKEND = backend
    philox4x64 = table["philox4x64"]
    gaussian_block = table["gaussian_block"]
    cutoff_profile = table["cutoff_profile"]
    nonlinear_phase = table["nonlinear_phase"]


philox4x64 = gaussian_block = cutoff_profile = nonlinear_phase = None
use_backend(BACKEND)

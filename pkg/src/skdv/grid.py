"""Periodic pseudospectral grid on [-L, L).

Spectra use the unitary convention ``f_hat_j = sqrt(dx / N) * fft(f)_j`` so that
``sum |f_hat|^2 == sum |f|^2 dx`` (the trapezoidal L2 norm) with no extra factors.
Frequencies are physical: ``xi_j = (pi / L) * j`` for ``j`` in fft order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from . import cutoffs

_WORKERS = 1


def set_fft_workers(workers: int) -> None:
    """Thread count handed to ``scipy.fft`` for batched transforms."""
    global _WORKERS
    _WORKERS = max(1, int(workers))


def fft(a):
    return sfft.fft(a, axis=-1, workers=_WORKERS)


def ifft(a):
    return sfft.ifft(a, axis=-1, workers=_WORKERS)


def rfft(a):
    return sfft.rfft(a, axis=-1, workers=_WORKERS)


def irfft(a, n):
    return sfft.irfft(a, n=n, axis=-1, workers=_WORKERS)


@dataclass(frozen=True)
class SpectralGrid:
    """Uniform periodic grid with ``num_points`` nodes on ``[-half_length, half_length)``."""

    half_length: float = 16.0 * math.pi
    num_points: int = 1024

    def __post_init__(self):
        n = self.num_points
        if not isinstance(n, (int, np.integer)) or n < 16 or n & (n - 1):
            raise ValueError(f"num_points must be a power of two >= 16, got {n!r}")
        if not self.half_length > 0:
            raise ValueError(f"half_length must be positive, got {self.half_length!r}")

    @property
    def dx(self) -> float:
        return 2.0 * self.half_length / self.num_points

    @property
    def dxi(self) -> float:
        return math.pi / self.half_length

    @cached_property
    def x(self) -> np.ndarray:
        return -self.half_length + self.dx * np.arange(self.num_points)

    @cached_property
    def index(self) -> np.ndarray:
        """Integer mode labels in fft order, ``-N/2`` at the Nyquist slot."""
        return np.fft.fftfreq(self.num_points, 1.0 / self.num_points).astype(np.int64)

    @cached_property
    def xi(self) -> np.ndarray:
        return self.dxi * self.index

    @cached_property
    def xi_odd(self) -> np.ndarray:
        """Frequencies with the unpaired Nyquist mode zeroed (for odd multipliers)."""
        xi = self.xi.copy()
        xi[self.num_points // 2] = 0.0
        return xi

    @cached_property
    def xi_r(self) -> np.ndarray:
        """Nonnegative frequencies in rfft layout."""
        return self.dxi * np.arange(self.num_points // 2 + 1)

    @cached_property
    def xi_r_odd(self) -> np.ndarray:
        xi = self.xi_r.copy()
        xi[-1] = 0.0
        return xi

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3-rule mask in fft order."""
        return (np.abs(self.index) < self.num_points / 3.0).astype(np.float64)

    @cached_property
    def dealias_mask_r(self) -> np.ndarray:
        return (np.arange(self.num_points // 2 + 1) < self.num_points / 3.0).astype(np.float64)

    @property
    def nyquist(self) -> float:
        return self.dxi * (self.num_points // 2)

    @property
    def _scale(self) -> float:
        return math.sqrt(self.dx / self.num_points)

    def _check(self, f) -> np.ndarray:
        f = np.asarray(f)
        if f.ndim == 0 or f.shape[-1] != self.num_points:
            raise ValueError(
                f"field length {f.shape[-1] if f.ndim else 0} does not match grid num_points {self.num_points}"
            )
        return f

    # -- transforms ---------------------------------------------------------

    def forward_transform(self, f) -> np.ndarray:
        return fft(self._check(f)) * self._scale

    def inverse_transform(self, spectrum) -> np.ndarray:
        return ifft(self._check(spectrum)) / self._scale

    def apply_multiplier(self, f, multiplier) -> np.ndarray:
        """Apply a Fourier multiplier given in fft order; real input stays real.

        A real input is only guaranteed to give a meaningful real output when the
        multiplier is Hermitian, ``m(-xi) == conj(m(xi))``.
        """
        f = self._check(f)
        out = ifft(fft(f) * multiplier)
        if np.isrealobj(f):
            return out.real.copy()
        return out

    # -- operators ----------------------------------------------------------

    def derivative(self, f, order: int = 1) -> np.ndarray:
        if order not in (1, 2, 3):
            raise ValueError(f"derivative order must be 1, 2 or 3, got {order!r}")
        xi = self.xi_odd if order % 2 else self.xi
        return self.apply_multiplier(f, (1j * xi) ** order)

    def sharp_mask(self, cutoff: float) -> np.ndarray:
        if not cutoff > 0:
            raise ValueError(f"projection cutoff must be positive, got {cutoff!r}")
        return (np.abs(self.xi) <= cutoff).astype(np.float64)

    def sharp_project(self, f, cutoff: float) -> np.ndarray:
        """``P_m``: keep modes with ``|xi| <= cutoff``. ``inf`` is the identity."""
        if math.isinf(cutoff):
            return np.array(self._check(f), copy=True)
        return self.apply_multiplier(f, self.sharp_mask(cutoff))

    def tail_multiplier(self, n: float) -> np.ndarray:
        if not n > 0:
            raise ValueError(f"tail scale must be positive, got {n!r}")
        return cutoffs.tail_profile(self.xi / n)

    def smooth_tail_project(self, f, n: float) -> np.ndarray:
        """Smooth high-pass ``F^-1 tail(xi / n) F``: 1 above ``n``, 0 below ``n/2``."""
        return self.apply_multiplier(f, self.tail_multiplier(n))

    # -- norms --------------------------------------------------------------

    def l2_norm(self, f) -> np.ndarray:
        f = self._check(f)
        return np.sqrt(np.sum(np.abs(f) ** 2, axis=-1) * self.dx)

    def sobolev_norm(self, f, s: float = 1.0) -> np.ndarray:
        """``||(1 + xi^2)^(s/2) f_hat||``; batched over leading axes."""
        if s < 0:
            raise ValueError(f"Sobolev index must be nonnegative, got {s!r}")
        spec = self.forward_transform(f)
        weight = (1.0 + self.xi**2) ** s
        return np.sqrt(np.sum(weight * np.abs(spec) ** 2, axis=-1))

    def integrate(self, f) -> np.ndarray:
        """Trapezoidal rule (spectrally accurate for periodic integrands)."""
        return np.sum(self._check(f), axis=-1) * self.dx


def workspace_norm(grid: SpectralGrid, u_snapshots, v_snapshots, sigma: float = 1.0) -> float:
    """Discrete stand-in for the ``X_sigma(T)`` norm of a trajectory.

    ``max_t (||u||_{H^sigma} + ||v||_{H^sigma}) + ||max_t |u|||_{L2} + ||max_t |v|||_{L2}``
    with the time maxima taken over the supplied snapshots (axis 0). The value
    depends on the snapshot stride.
    """
    u = np.asarray(u_snapshots)
    v = np.asarray(v_snapshots)
    if u.ndim < 2 or u.shape[0] == 0:
        raise ValueError("workspace_norm needs a nonempty sequence of snapshots")
    if v.shape != u.shape:
        raise ValueError(f"u and v snapshot shapes differ: {u.shape} vs {v.shape}")
    sob = grid.sobolev_norm(u, sigma) + grid.sobolev_norm(v, sigma)
    env_u = np.max(np.abs(u), axis=0)
    env_v = np.max(np.abs(v), axis=0)
    return float(np.max(sob) + grid.l2_norm(env_u) + grid.l2_norm(env_v))

"""Additive Q-Wiener forcing through diagonal Hilbert-Schmidt operators.

The basis is the real trigonometric orthonormal basis of L2(-L, L), ordered by
frequency: ``e_0 = 1/sqrt(2L)``, ``e_{2k-1} = cos(xi_k x)/sqrt(L)``,
``e_{2k} = sin(xi_k x)/sqrt(L)`` with ``xi_k = k pi / L``. An operator scales
``e_i`` by ``lambda_i``. Brownian increments are drawn by counter, keyed by
``(seed, path, step, channel, mode)``, so every member of an approximation
ladder sees the same path regardless of grid size or mollification.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import grid as _grid
from . import kernels
from .grid import SpectralGrid

NOISE_MODES = ("real", "complex")


def mode_wavenumbers(num_modes: int) -> np.ndarray:
    """Integer wavenumber ``k(i) = ceil(i / 2)`` of each basis index."""
    return (np.arange(num_modes) + 1) // 2


@dataclass(frozen=True, eq=False)
class NoiseOperator:
    """``Phi e_i = lambda_i e_i`` on the trigonometric basis of ``[-L, L)``.

    ``channel`` 1 forces the complex short wave ``u``; channel 2 forces the real
    long wave ``v`` and must use ``mode='real'``. In ``mode='complex'`` the
    channel-1 increment per mode is ``(z1 + i z2) / sqrt(2)``.
    """

    half_length: float
    coefficients: np.ndarray
    channel: int = 1
    mode: str = "real"

    def __post_init__(self):
        coeffs = np.array(self.coefficients, dtype=np.float64)
        if coeffs.ndim != 1:
            raise ValueError("coefficients must be one-dimensional")
        if np.any(coeffs < 0) or not np.all(np.isfinite(coeffs)):
            raise ValueError("coefficients must be finite and nonnegative")
        if self.channel not in (1, 2):
            raise ValueError(f"channel must be 1 or 2, got {self.channel!r}")
        if self.mode not in NOISE_MODES:
            raise ValueError(f"mode must be one of {NOISE_MODES}, got {self.mode!r}")
        if self.channel == 2 and self.mode != "real":
            raise ValueError("the long-wave channel only admits real noise")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coefficients", coeffs)

    @classmethod
    def from_decay(cls, half_length, lambda0=0.1, decay_r=3.0, num_modes=129, channel=1, mode="real"):
        """``lambda_i = lambda0 * (1 + xi_i^2)^(-decay_r / 2)`` on ``num_modes`` modes."""
        if num_modes < 1:
            raise ValueError(f"num_modes must be positive, got {num_modes!r}")
        xi = mode_wavenumbers(num_modes) * (math.pi / half_length)
        coeffs = lambda0 * (1.0 + xi**2) ** (-0.5 * decay_r)
        return cls(half_length, coeffs, channel, mode)

    @property
    def num_modes(self) -> int:
        return self.coefficients.shape[0]

    @property
    def frequencies(self) -> np.ndarray:
        return mode_wavenumbers(self.num_modes) * (math.pi / self.half_length)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.coefficients)

    def hs_norm(self, s: float = 0.0, homogeneous: bool = False) -> float:
        """Hilbert-Schmidt norm into ``H^s`` (or the homogeneous ``H^s`` seminorm)."""
        if s < 0:
            raise ValueError(f"Sobolev index must be nonnegative, got {s!r}")
        xi2 = self.frequencies**2
        weight = xi2**s if homogeneous else (1.0 + xi2) ** s
        return math.sqrt(math.fsum(self.coefficients**2 * weight))

    def mollify(self, m: float) -> "NoiseOperator":
        """``P_m Phi``: drop basis modes with frequency above ``m``."""
        if not m > 0:
            raise ValueError(f"mollification level must be positive, got {m!r}")
        coeffs = np.where(self.frequencies <= m, self.coefficients, 0.0)
        return NoiseOperator(self.half_length, coeffs, self.channel, self.mode)

    def scaled(self, factor: float) -> "NoiseOperator":
        return NoiseOperator(self.half_length, factor * self.coefficients, self.channel, self.mode)

    def with_channel(self, channel: int, mode: str | None = None) -> "NoiseOperator":
        return NoiseOperator(self.half_length, self.coefficients, channel, mode or ("real" if channel == 2 else self.mode))

    # -- grid realizations --------------------------------------------------

    def _check_grid(self, grid: SpectralGrid) -> None:
        if not math.isclose(grid.half_length, self.half_length, rel_tol=1e-12):
            raise ValueError(
                f"noise operator domain half_length {self.half_length} does not match grid {grid.half_length}"
            )
        if self.num_modes > grid.num_points - 1:
            raise ValueError(f"{self.num_modes} noise modes do not fit on a {grid.num_points}-point grid")

    def basis(self, grid: SpectralGrid) -> np.ndarray:
        """Orthonormal basis functions ``e_i`` sampled on the grid, shape ``(I, N)``."""
        self._check_grid(grid)
        k = mode_wavenumbers(self.num_modes)
        phase = np.outer(k * grid.dxi, grid.x)
        out = np.empty((self.num_modes, grid.num_points))
        out[0] = 1.0 / math.sqrt(2.0 * grid.half_length)
        odd = np.arange(1, self.num_modes, 2)
        even = np.arange(2, self.num_modes, 2)
        out[odd] = np.cos(phase[odd]) / math.sqrt(grid.half_length)
        out[even] = np.sin(phase[even]) / math.sqrt(grid.half_length)
        return out

    def images(self, grid: SpectralGrid) -> np.ndarray:
        """``Phi e_i`` sampled on the grid, shape ``(I, N)``."""
        return self.coefficients[:, None] * self.basis(grid)

    def variance_density(self, grid: SpectralGrid) -> np.ndarray:
        """``sum_i (Phi e_i)(x)^2``: pointwise variance rate of the forcing."""
        return np.sum(self.images(grid) ** 2, axis=0)

    def mode_weights(self, normals: np.ndarray, dt: float) -> np.ndarray:
        """Per-mode coefficients ``lambda_i sqrt(dt) zeta_i`` from a normal block ``(..., I, 2)``."""
        scale = self.coefficients * math.sqrt(dt)
        if self.mode == "complex":
            zeta = (normals[..., 0] + 1j * normals[..., 1]) / math.sqrt(2.0)
        else:
            zeta = normals[..., 0]
        return scale * zeta

    def increment_spectrum(self, grid: SpectralGrid, weights: np.ndarray) -> np.ndarray:
        """Raw (unnormalized fft) spectrum of ``sum_i w_i e_i`` for mode weights ``(..., I)``."""
        self._check_grid(grid)
        n = grid.num_points
        kmax = self.num_modes // 2
        w = weights
        if self.num_modes % 2 == 0:
            w = np.concatenate([w, np.zeros(w.shape[:-1] + (1,), dtype=w.dtype)], axis=-1)
        c = w[..., 1::2]
        s = w[..., 2::2]
        sign = np.where(np.arange(1, kmax + 1) % 2 == 0, 1.0, -1.0)
        amp = sign * (n / (2.0 * math.sqrt(grid.half_length)))
        spec = np.zeros(weights.shape[:-1] + (n,), dtype=np.complex128)
        spec[..., 0] = w[..., 0] * (n / math.sqrt(2.0 * grid.half_length))
        spec[..., 1:kmax + 1] = amp * (c - 1j * s)
        spec[..., n - kmax:] = (amp * (c + 1j * s))[..., ::-1]
        return spec


@dataclass(frozen=True)
class NoisePath:
    """A Brownian path family: one draw per ``(path, step, channel, mode)``."""

    seed: int
    dt: float
    num_steps: int
    _seed64: int = field(init=False, repr=False)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt!r}")
        object.__setattr__(self, "_seed64", int(self.seed) & 0xFFFFFFFFFFFFFFFF)

    def normals(self, step: int, channel: int, num_modes: int, paths=(0,)) -> np.ndarray:
        """Standard normals of shape ``(len(paths), num_modes, 2)``."""
        if not 0 <= step < self.num_steps:
            raise IndexError(f"step {step} outside [0, {self.num_steps})")
        paths = np.atleast_1d(np.asarray(paths, dtype=np.uint64))
        return kernels.gaussian_block(self._seed64, paths, step, channel, num_modes)


def sample_increment(op: NoiseOperator, path: NoisePath, step_index: int, grid: SpectralGrid, paths=None):
    """``Phi Delta W`` at one step, on the grid.

    Returns one field when ``paths`` is None (path 0), else an array with one row
    per path index. Channel 2 and real-mode channel 1 give real arrays.
    """
    single = paths is None
    normals = path.normals(step_index, op.channel, op.num_modes, (0,) if single else paths)
    weights = op.mode_weights(normals, path.dt)
    field_ = _grid.ifft(op.increment_spectrum(grid, weights))
    if op.mode == "real":
        field_ = field_.real.copy()
    return field_[0] if single else field_

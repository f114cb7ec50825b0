"""Right-hand sides of the (cutoff) Schrodinger-KdV system.

    i u_t + u_xx = gamma1 u v + beta |u|^2 u
    v_t + v_xxx  = gamma2 (|u|^2)_x - v v_x

The approximation hierarchy replaces the nonlinearities by

    N1 = -i (gamma1 psi_K(|u|^2) u v + beta phi_K(|u|^2) |u|^2 u)
    N2 = P_n d/dx (gamma2 phi_K(|u|^2) |u|^2 - phi_K(v) v^2 / 2)

with ``K = inf`` and ``n = inf`` recovering the original system.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import cutoffs
from .grid import SpectralGrid, fft, ifft


@dataclass(frozen=True)
class PhysicalConstants:
    gamma1: float = 1.0
    gamma2: float = 1.0
    beta: float = 1.0

    @property
    def is_linear(self) -> bool:
        """All couplings zero selects the linear system; ``v v_x`` is dropped with them."""
        return self.gamma1 == 0 and self.gamma2 == 0 and self.beta == 0

    @property
    def momentum_weight(self) -> float:
        """``gamma1 / (2 gamma2)``, the long-wave weight in the momentum and energy."""
        if self.gamma2 == 0:
            raise ValueError("gamma2 must be nonzero for the conserved functionals")
        return self.gamma1 / (2.0 * self.gamma2)

    @property
    def global_regime(self) -> bool:
        return self.gamma1 * self.gamma2 > 0

    def require_global_regime(self) -> None:
        if not self.global_regime:
            raise ValueError(
                f"a-priori diagnostics need gamma1 * gamma2 > 0, got {self.gamma1} * {self.gamma2}"
            )


LINEAR = PhysicalConstants(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class ApproxParams:
    """Member ``(m, n, K)`` of the approximation hierarchy; ``inf`` switches a level off."""

    m: float = math.inf
    n: float = math.inf
    K: float = math.inf
    constants: PhysicalConstants = field(default_factory=PhysicalConstants)

    def __post_init__(self):
        for name in ("m", "n", "K"):
            val = getattr(self, name)
            if not val > 0:
                raise ValueError(f"{name} must be positive or inf, got {val!r}")
        if not math.isinf(self.m) and not math.isinf(self.n) and self.n < self.m:
            raise ValueError(f"n must be >= m, got n={self.n}, m={self.m}")

    def replace(self, **changes) -> "ApproxParams":
        vals = dict(m=self.m, n=self.n, K=self.K, constants=self.constants)
        vals.update(changes)
        return ApproxParams(**vals)


@dataclass(frozen=True, eq=False)
class FieldPair:
    """State ``w = (u, v)``; leading axes (if any) index ensemble members."""

    u: np.ndarray
    v: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.complex128)
        v = np.asarray(self.v)
        if np.iscomplexobj(v):
            raise ValueError("v must be real-valued")
        v = v.astype(np.float64)
        if u.shape[-1] != v.shape[-1]:
            raise ValueError(f"u and v live on different grids: {u.shape} vs {v.shape}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)


def benchmark_initial(grid: SpectralGrid, amp_u: float = 1.0, amp_v: float = 1.0, m: float = math.inf) -> FieldPair:
    """``u0 = A sech(x) e^{ix}``, ``v0 = B sech(x)^2``, projected by ``P_m``."""
    x = grid.x
    sech = 1.0 / np.cosh(x)
    u0 = amp_u * sech * np.exp(1j * x)
    v0 = amp_v * sech**2
    return FieldPair(grid.sharp_project(u0, m), grid.sharp_project(v0, m))


def schrodinger_propagator(grid: SpectralGrid, f, t: float):
    """``S(t) = exp(i t d_xx)``: multiply mode ``xi`` by ``exp(-i xi^2 t)``."""
    return grid.apply_multiplier(f, np.exp(-1j * grid.xi**2 * t))


def airy_propagator(grid: SpectralGrid, f, t: float):
    """``U(t) = exp(-t d_xxx)``: multiply mode ``xi`` by ``exp(i xi^3 t)``."""
    return grid.apply_multiplier(f, np.exp(1j * grid.xi_odd**3 * t))


def cutoff_weights(x, K: float):
    """``(phi_K(x), psi_K(x))``; exact ones when ``K`` is infinite."""
    if math.isinf(K):
        ones = np.ones_like(x)
        return ones, ones
    phi, dphi, _ = cutoffs.phi_K_derivatives(x, K)
    return phi, x * dphi + phi


def long_wave_flux(u, v, params: ApproxParams):
    """``gamma2 phi_K(|u|^2)|u|^2 - phi_K(v) v^2 / 2`` (the quantity differentiated in N2)."""
    rho = u.real**2 + u.imag**2
    phi_u, _ = cutoff_weights(rho, params.K)
    phi_v, _ = cutoff_weights(v, params.K)
    return params.constants.gamma2 * phi_u * rho - 0.5 * phi_v * v**2


def n1(grid: SpectralGrid, u, v, params: ApproxParams, dealias: bool = True):
    c = params.constants
    rho = u.real**2 + u.imag**2
    phi, psi = cutoff_weights(rho, params.K)
    val = -1j * (c.gamma1 * psi * u * v + c.beta * phi * rho * u)
    if dealias:
        val = ifft(fft(val) * grid.dealias_mask)
    return val


def n2_multiplier(grid: SpectralGrid, n: float, dealias: bool = True) -> np.ndarray:
    """``P_n d/dx`` (with optional 2/3 dealiasing) as an fft-order multiplier."""
    mult = 1j * grid.xi_odd
    if dealias:
        mult = mult * grid.dealias_mask
    if not math.isinf(n):
        mult = mult * grid.sharp_mask(n)
    return mult


def n2(grid: SpectralGrid, u, v, params: ApproxParams, dealias: bool = True):
    if params.constants.is_linear:
        return np.zeros(np.shape(v))
    flux = long_wave_flux(u, v, params)
    return ifft(fft(flux) * n2_multiplier(grid, params.n, dealias)).real


def full_drift(grid: SpectralGrid, state: FieldPair, params: ApproxParams, dealias: bool = True):
    """``(i u_xx + N1, -v_xxx + N2)``."""
    u, v = state.u, state.v
    du = 1j * grid.derivative(u, 2) + n1(grid, u, v, params, dealias)
    dv = -grid.derivative(v, 3) + n2(grid, u, v, params, dealias)
    return du, dv

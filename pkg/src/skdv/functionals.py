"""Conserved quantities, their Ito drifts, and the a-priori bound bracket.

All integrals use the trapezoidal rule on the periodic grid and derivatives are
spectral. Functions accept a single field ``(N,)`` or a stack ``(P, N)`` and
return one value per field.

Ito drifts are written for additive noise ``Phi dW`` with ``Phi e_i = lambda_i
e_i`` on the real trigonometric basis. Writing ``a_i = Phi1 e_i``,
``b_i = Phi2 e_i``, ``p = Re u`` and ``rho = |u|^2``, the drift of the energy is

    sum ||a_i'||^2 + w sum ||b_i'||^2 + int A sum a_i^2 + int B sum b_i^2

with ``w = gamma1 / (2 gamma2)``, ``B = -(w/2)(2 v phi_K(v) + v^2 phi_K'(v))`` and,
for real noise on ``u``,

    A = gamma1 v (psi_K + 4 p^2 phi_K' + 2 p^2 rho phi_K'') + beta (2 p^2 psi_K + rho phi_K)

(arguments ``rho`` unless noted). The gradient correction is the homogeneous
``H^1`` sum: the functional only contains ``|u_x|^2``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import cutoffs
from .dynamics import ApproxParams, PhysicalConstants
from .grid import SpectralGrid, fft, ifft
from .noise import NoiseOperator

MASS_POWERS = (1, 2, 3, 5)
DIAGNOSTIC_COLUMNS = ("mass", "mass_p2", "mass_p3", "mass_p5", "I", "E",
                      "u_H1", "v_H1", "v_L2", "u_L4_4", "v_L3_3")
CSV_COLUMNS = ("time",) + DIAGNOSTIC_COLUMNS


def _spec_scale(grid: SpectralGrid) -> float:
    return math.sqrt(grid.dx / grid.num_points)


def mass(grid: SpectralGrid, u):
    return grid.integrate(np.abs(u) ** 2)


def mass_power(grid: SpectralGrid, u, k: int):
    if k not in MASS_POWERS:
        raise ValueError(f"mass power k must be one of {MASS_POWERS}, got {k!r}")
    return mass(grid, u) ** k


def momentum_density(u, ux):
    """``Im(u * conj(u_x))``."""
    return u.imag * ux.real - u.real * ux.imag


def momentum_functional(grid: SpectralGrid, u, v, constants: PhysicalConstants):
    """``int Im(u conj(u_x)) + (gamma1 / 2 gamma2) v^2 dx``."""
    w = constants.momentum_weight
    ux = grid.derivative(np.asarray(u, dtype=np.complex128), 1)
    return grid.integrate(momentum_density(u, ux) + w * np.asarray(v) ** 2)


def _energy_from_parts(grid, u, ux, v, vx, constants, K):
    w = constants.momentum_weight
    rho = u.real**2 + u.imag**2
    grad = ux.real**2 + ux.imag**2 + w * vx**2
    if math.isinf(K):
        pot = -w * v**3 / 3.0 + constants.gamma1 * rho * v + 0.5 * constants.beta * rho**2
    else:
        pot = (-w * cutoffs.psi2_K(v, K)
               + constants.gamma1 * cutoffs.phi_K(rho, K) * rho * v
               + constants.beta * cutoffs.psi1_K(rho, K))
    return grid.integrate(grad + pot)


def energy_functional(grid: SpectralGrid, u, v, constants: PhysicalConstants, K: float = math.inf):
    """``int |u_x|^2 + w (v_x^2 - psi2_K(v)) + gamma1 phi_K(rho) rho v + beta psi1_K(rho) dx``."""
    u = np.asarray(u, dtype=np.complex128)
    v = np.asarray(v, dtype=np.float64)
    return _energy_from_parts(grid, u, grid.derivative(u, 1), v, grid.derivative(v, 1), constants, K)


def gradient_energy(grid: SpectralGrid, u, v, constants: PhysicalConstants):
    """Quadratic part ``int |u_x|^2 + w v_x^2``; the energy of the linear system."""
    w = constants.momentum_weight
    ux = grid.derivative(np.asarray(u, dtype=np.complex128), 1)
    vx = grid.derivative(np.asarray(v, dtype=np.float64), 1)
    return grid.integrate(np.abs(ux) ** 2 + w * vx**2)


def diagnostics(grid: SpectralGrid, u, v, params: ApproxParams) -> dict:
    """All CSV diagnostics at one time level (one value per field in the stack)."""
    u = np.asarray(u, dtype=np.complex128)
    v = np.asarray(v, dtype=np.float64)
    scale = _spec_scale(grid)
    uh = fft(u)
    vh = fft(v)
    ik = 1j * grid.xi_odd
    ux = ifft(ik * uh)
    vx = ifft(ik * vh).real
    weight = (1.0 + grid.xi**2) * scale**2
    rho = u.real**2 + u.imag**2
    m = grid.integrate(rho)
    out = {
        "mass": m,
        "mass_p2": m**2,
        "mass_p3": m**3,
        "mass_p5": m**5,
    }
    c = params.constants
    if c.gamma2 != 0:
        w = c.momentum_weight
        out["I"] = grid.integrate(momentum_density(u, ux) + w * v**2)
        out["E"] = _energy_from_parts(grid, u, ux, v, vx, c, params.K)
    else:
        out["I"] = np.full(np.shape(m), np.nan)
        out["E"] = np.full(np.shape(m), np.nan)
    out["u_H1"] = np.sqrt(np.sum(weight * np.abs(uh) ** 2, axis=-1))
    out["v_H1"] = np.sqrt(np.sum(weight * np.abs(vh) ** 2, axis=-1))
    out["v_L2"] = np.sqrt(grid.integrate(v**2))
    out["u_L4_4"] = grid.integrate(rho**2)
    out["v_L3_3"] = grid.integrate(np.abs(v) ** 3)
    return out


# -- records -----------------------------------------------------------------


@dataclass
class DiagnosticsRecord:
    """Per-snapshot diagnostics columns plus per-run scalars."""

    times: np.ndarray
    columns: dict
    scalars: dict = field(default_factory=dict)

    @classmethod
    def from_trajectory(cls, traj, scalars=None) -> "DiagnosticsRecord":
        cols = {}
        for name in DIAGNOSTIC_COLUMNS:
            col = np.asarray(traj.diagnostics[name])
            if col.ndim != 1:
                raise ValueError("ensemble diagnostics must be reduced before building a record")
            cols[name] = col
        return cls(np.asarray(traj.times), cols, dict(scalars or {}))

    def rows(self):
        for i, t in enumerate(self.times):
            yield [float(t)] + [float(self.columns[name][i]) for name in DIAGNOSTIC_COLUMNS]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for row in self.rows():
                writer.writerow([repr(x) for x in row])

    def summary(self) -> dict:
        first = {name: float(col[0]) for name, col in self.columns.items()}
        last = {name: float(col[-1]) for name, col in self.columns.items()}
        return {"t_end": float(self.times[-1]), "initial": first, "final": last, **self.scalars}

    def write_json(self, path, extra=None) -> None:
        payload = self.summary()
        if extra:
            payload.update(extra)
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(x) for x in row] for row in reader])
    return header, data


# -- Ito drifts ---------------------------------------------------------------


def _hs2(op: NoiseOperator | None, s: float = 0.0, homogeneous: bool = False) -> float:
    return 0.0 if op is None else op.hs_norm(s, homogeneous) ** 2


def predicted_drift_mass(noise_u: NoiseOperator | None, k: int = 1) -> dict:
    """Slope factor of ``E ||u||^{2k}``: ``k ||Phi||^2`` times ``E ||u||^{2(k-1)}``.

    For ``k = 1`` this is the exact slope. For ``k > 1`` the full drift also has
    the state-dependent term of :func:`mass_power_drift`; the returned factor
    is only its leading part.
    """
    if k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")
    mode = "real" if noise_u is None else noise_u.mode
    return {"slope": k * _hs2(noise_u), "k": k, "mode": mode,
            "exact": k == 1}


def noise_projections(grid: SpectralGrid, u, noise_u: NoiseOperator):
    """``(u, Phi e_i)`` for every basis element, shape ``(..., I)``."""
    return np.asarray(u, dtype=np.complex128) @ noise_u.images(grid).T * grid.dx


def mass_power_drift(grid: SpectralGrid, u, noise_u: NoiseOperator | None, k: int):
    """Pathwise Ito drift of ``||u||^{2k}``.

    real noise:    ``k M^{k-1} ||Phi||^2 + 2 k (k-1) M^{k-2} sum (Re (u, Phi e_i))^2``
    complex noise: ``k M^{k-1} ||Phi||^2 + k (k-1) M^{k-2} sum |(u, Phi e_i)|^2``
    """
    m = mass(grid, u)
    if noise_u is None or noise_u.is_zero:
        return np.zeros_like(m)
    lead = k * m ** (k - 1) * _hs2(noise_u)
    if k == 1:
        return lead
    proj = noise_projections(grid, u, noise_u)
    if noise_u.mode == "real":
        quad = 2.0 * np.sum(proj.real**2, axis=-1)
    else:
        quad = np.sum(np.abs(proj) ** 2, axis=-1)
    return lead + k * (k - 1) * m ** (k - 2) * quad


def linear_mass_fourth_moment(noise_u: NoiseOperator, t: float) -> float:
    """Exact ``E ||u(t)||^4`` for the linear equation from zero data with real noise.

    ``u(t) = sum_i lambda_i e_i Z_i`` with ``Z_i = int_0^t exp(-i xi_i^2 (t-s)) d beta_i``,
    so ``E||u||^4 = (t ||Phi||^2)^2 + sum_i lambda_i^4 Var|Z_i|^2`` and
    ``Var|Z_i|^2 = t^2 + (1 - cos(2 xi_i^2 t)) / (2 xi_i^4)`` (``2 t^2`` at ``xi = 0``).
    """
    if noise_u.mode != "real":
        raise ValueError("closed form is for the real noise mode")
    lam4 = noise_u.coefficients**4
    xi = noise_u.frequencies
    var = np.empty_like(xi)
    zero = xi == 0
    var[zero] = 2.0 * t**2
    x2 = xi[~zero] ** 2
    var[~zero] = t**2 + (1.0 - np.cos(2.0 * x2 * t)) / (2.0 * x2**2)
    return (t * _hs2(noise_u)) ** 2 + math.fsum(lam4 * var)


def predicted_drift_momentum(grid: SpectralGrid, noise_u: NoiseOperator | None,
                             noise_v: NoiseOperator | None, constants: PhysicalConstants) -> float:
    """``sum_i (Phi1 e_i, d_x Phi1 e_i) + (gamma1 / 2 gamma2) ||Phi2||^2``.

    The first sum is evaluated on the grid; it vanishes for real basis functions.
    """
    first = 0.0
    if noise_u is not None and not noise_u.is_zero:
        imgs = noise_u.images(grid)
        first = float(np.sum(grid.integrate(imgs * grid.derivative(imgs, 1))))
    return first + constants.momentum_weight * _hs2(noise_v)


def energy_gradient_correction(noise_u: NoiseOperator | None, noise_v: NoiseOperator | None,
                               constants: PhysicalConstants) -> float:
    """State-independent energy drift: ``||Phi1||^2_{Hdot1} + w ||Phi2||^2_{Hdot1}``."""
    return _hs2(noise_u, 1.0, True) + constants.momentum_weight * _hs2(noise_v, 1.0, True)


def energy_potential_weights(u, v, constants: PhysicalConstants, K: float, mode: str = "real"):
    """Weights ``A`` (against ``sum a_i^2``) and ``B`` (against ``sum b_i^2``)."""
    u = np.asarray(u, dtype=np.complex128)
    v = np.asarray(v, dtype=np.float64)
    g1, beta = constants.gamma1, constants.beta
    w = constants.momentum_weight
    rho = u.real**2 + u.imag**2
    phi, d1, d2 = cutoffs.phi_K_derivatives(rho, K)
    psi = rho * d1 + phi
    if mode == "real":
        p2 = u.real**2
        A = g1 * v * (psi + 4.0 * p2 * d1 + 2.0 * p2 * rho * d2) + beta * (2.0 * p2 * psi + rho * phi)
    elif mode == "complex":
        f2 = 2.0 * d1 + rho * d2
        A = g1 * v * (rho * f2 + psi) + beta * (rho * psi + rho * phi)
    else:
        raise ValueError(f"unknown noise mode {mode!r}")
    phv, dphv, _ = cutoffs.phi_K_derivatives(v, K)
    B = -0.5 * w * (2.0 * v * phv + v**2 * dphv)
    return A, B


@dataclass(frozen=True)
class EnergyDrift:
    constant: float
    state: np.ndarray

    @property
    def total(self):
        return self.constant + self.state


def energy_ito_drift(grid: SpectralGrid, u, v, noise_u: NoiseOperator | None, noise_v: NoiseOperator | None,
                     constants: PhysicalConstants, K: float = math.inf) -> EnergyDrift:
    """Pathwise Ito drift of the cutoff energy, split into constant and state parts."""
    u = np.asarray(u)
    if u.size == 0:
        raise ValueError("empty ensemble")
    mode = "real" if noise_u is None else noise_u.mode
    A, B = energy_potential_weights(u, v, constants, K, mode)
    state = np.zeros(u.shape[:-1])
    if noise_u is not None and not noise_u.is_zero:
        state = state + grid.integrate(A * noise_u.variance_density(grid))
    if noise_v is not None and not noise_v.is_zero:
        state = state + grid.integrate(B * noise_v.variance_density(grid))
    return EnergyDrift(energy_gradient_correction(noise_u, noise_v, constants), state)


def predicted_drift_energy(grid, u_ensemble, v_ensemble, noise_u, noise_v, constants, K=math.inf):
    """Ensemble-mean predicted drift of ``E[energy]`` at one time level."""
    d = energy_ito_drift(grid, u_ensemble, v_ensemble, noise_u, noise_v, constants, K)
    return d.constant + float(np.mean(d.state))


# -- a-priori bound ------------------------------------------------------------


def apriori_bracket(grid: SpectralGrid, u0, v0, noise_u: NoiseOperator | None, noise_v: NoiseOperator | None) -> float:
    """Data/noise quantity bounding ``E sup_t (||u||_{H1}^2 + ||v||_{H1}^2)``.

    ``sum_{i in {1,5}} (||u0||^{2i} + ||Phi1||_{H1}^{2i} + ||Phi2||_{H1}^{2i})
    + ||v0||^2 + ||v0||_{L3}^3 + ||u0_x||^2 + ||v0_x||^2 + ||u0||_{L4}^4``
    for deterministic initial data.
    """
    u0 = np.asarray(u0, dtype=np.complex128)
    v0 = np.asarray(v0, dtype=np.float64)
    m0 = float(mass(grid, u0))
    p1 = _hs2(noise_u, 1.0)
    p2 = _hs2(noise_v, 1.0)
    terms = []
    for i in (1, 5):
        terms += [m0**i, p1**i, p2**i]
    terms += [
        float(grid.integrate(v0**2)),
        float(grid.integrate(np.abs(v0) ** 3)),
        float(grid.integrate(np.abs(grid.derivative(u0, 1)) ** 2)),
        float(grid.integrate(grid.derivative(v0, 1) ** 2)),
        float(grid.integrate(np.abs(u0) ** 4)),
    ]
    return math.fsum(terms)


@dataclass
class AprioriReport:
    labels: list
    lhs: np.ndarray
    lhs_se: np.ndarray
    rhs: np.ndarray
    ratios: np.ndarray
    constant: float
    spread: float
    blowups: int

    def bounded(self, max_spread: float = 2.0) -> bool:
        ok = np.all(np.isfinite(self.lhs)) and self.blowups == 0
        return bool(ok and np.all(self.lhs <= self.constant * self.rhs * (1 + 1e-12)) and self.spread <= max_spread)

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels), "lhs": self.lhs.tolist(), "lhs_se": self.lhs_se.tolist(),
            "rhs": self.rhs.tolist(), "ratios": self.ratios.tolist(),
            "constant": self.constant, "spread": self.spread, "blowups": self.blowups,
        }


def apriori_bound_check(labels, sup_samples, brackets, constants: PhysicalConstants, blowups: int = 0) -> AprioriReport:
    """Compare Monte Carlo ``E sup`` values against their brackets across a scan.

    ``sup_samples[j]`` holds the per-path ``sup_t (||u||_{H1}^2 + ||v||_{H1}^2)``
    for scan entry ``j``. The fitted constant is the largest observed ratio, and
    ``spread`` is max ratio / min ratio. A zero bracket with zero left side has
    ratio 0.
    """
    constants.require_global_regime()
    lhs, se, ratios = [], [], []
    for samples, rhs in zip(sup_samples, brackets):
        s = np.asarray(samples, dtype=np.float64)
        mean = math.fsum(s) / len(s)
        lhs.append(mean)
        se.append(float(np.std(s, ddof=1) / math.sqrt(len(s))) if len(s) > 1 else 0.0)
        if rhs == 0:
            ratios.append(0.0 if mean == 0 else math.inf)
        else:
            ratios.append(mean / rhs)
    ratios = np.array(ratios)
    positive = ratios[ratios > 0]
    constant = float(np.max(ratios)) if len(ratios) else 0.0
    spread = float(np.max(positive) / np.min(positive)) if len(positive) else 1.0
    return AprioriReport(list(labels), np.array(lhs), np.array(se), np.asarray(brackets, dtype=float),
                         ratios, constant, spread, blowups)

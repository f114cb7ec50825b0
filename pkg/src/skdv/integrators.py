"""Time stepping for the deterministic and stochastically forced systems.

Linear parts are integrated exactly in Fourier space. The default ``strang``
scheme is the symmetric composition

    L(dt/2) o N(dt) o L(dt/2)

where the nonlinear substep ``N`` is itself symmetric: a half phase rotation of
``u`` with ``v`` frozen, one RK4 step of the long-wave flux with ``|u|^2``
frozen (``|u|`` is invariant under the rotation), then the second half
rotation with the updated ``v``. Noise enters after the deterministic step as
the propagated increment ``(S(dt) Phi dW1, U(dt) Phi dW2)``.

States may carry a leading ensemble axis; every path is stepped in lockstep.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .dynamics import ApproxParams, FieldPair, cutoff_weights, n1, n2, n2_multiplier
from .grid import SpectralGrid, fft, ifft, irfft, rfft
from .noise import NoiseOperator, NoisePath

SCHEMES = ("strang", "lie", "exp_euler_maruyama")

CFL_SAFETY = 0.5


class BlowUpError(RuntimeError):
    """Nonfinite values appeared; ``trajectory`` holds everything recorded before."""

    def __init__(self, step: int, trajectory=None, message: str | None = None):
        self.step = step
        self.trajectory = trajectory
        super().__init__(message or f"nonfinite state at step {step}")


class StepSizeError(ValueError):
    """The time step exceeds ``0.5 dx / max(1, max|v|)``."""


@dataclass(frozen=True)
class SchemeConfig:
    dt: float
    t_end: float
    scheme: str = "strang"
    snapshot_stride: int = 1
    dealias: bool = True

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive and finite, got {self.dt!r}")
        if not (self.t_end >= 0 and math.isfinite(self.t_end)):
            raise ValueError(f"t_end must be nonnegative and finite, got {self.t_end!r}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if int(self.snapshot_stride) != self.snapshot_stride or self.snapshot_stride < 1:
            raise ValueError(f"snapshot_stride must be a positive integer, got {self.snapshot_stride!r}")
        ratio = self.t_end / self.dt
        steps = round(ratio)
        if abs(ratio - steps) > 4 * np.spacing(max(ratio, 1.0)):
            raise ValueError(f"t_end / dt = {ratio!r} is not an integer number of steps")

    @property
    def num_steps(self) -> int:
        return int(round(self.t_end / self.dt))

    def with_dt(self, dt: float) -> "SchemeConfig":
        return SchemeConfig(dt, self.t_end, self.scheme, self.snapshot_stride, self.dealias)


def max_stable_dt(grid: SpectralGrid, v) -> float:
    vmax = float(np.max(np.abs(v))) if np.size(v) else 0.0
    return CFL_SAFETY * grid.dx / max(1.0, vmax)


@dataclass(frozen=True)
class Forcing:
    """Noise operators for both channels plus the seed of the Brownian path."""

    noise_u: NoiseOperator | None = None
    noise_v: NoiseOperator | None = None
    seed: int = 0

    def __post_init__(self):
        if self.noise_u is not None and self.noise_u.channel != 1:
            raise ValueError("noise_u must be a channel-1 operator")
        if self.noise_v is not None and self.noise_v.channel != 2:
            raise ValueError("noise_v must be a channel-2 operator")

    def mollified(self, m: float) -> "Forcing":
        if math.isinf(m):
            return self
        return Forcing(
            None if self.noise_u is None else self.noise_u.mollify(m),
            None if self.noise_v is None else self.noise_v.mollify(m),
            self.seed,
        )

    @property
    def is_zero(self) -> bool:
        return all(op is None or op.is_zero for op in (self.noise_u, self.noise_v))


class Stepper:
    """Precomputed multipliers for one ``(grid, params, dt, scheme)`` combination."""

    def __init__(self, grid: SpectralGrid, params: ApproxParams, dt: float, scheme: str = "strang", dealias: bool = True):
        if scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
        self.grid = grid
        self.params = params
        self.dt = dt
        self.scheme = scheme
        self.dealias = dealias
        n = grid.num_points
        self.n = n
        xi2 = grid.xi**2
        xi3 = grid.xi_r_odd**3
        self.s_full = np.exp(-1j * xi2 * dt)
        self.s_half = np.exp(-0.5j * xi2 * dt)
        self.a_full = np.exp(1j * xi3 * dt)
        self.a_half = np.exp(0.5j * xi3 * dt)
        self.flux_mult = n2_multiplier(grid, params.n, dealias)[: n // 2 + 1]
        self.linear_only = params.constants.is_linear

    # -- pieces -------------------------------------------------------------

    def _flux_rhs(self, v, forcing_hat):
        K = self.params.K
        if math.isinf(K):
            g = v * v
        else:
            g = cutoff_weights(v, K)[0] * v * v
        return irfft(self.flux_mult * (forcing_hat - 0.5 * rfft(g)), self.n)

    def _advance_v(self, u, v, tau):
        """One RK4 step of ``v_t = P_n d_x (gamma2 phi_K(rho) rho - phi_K(v) v^2 / 2)`` with ``rho`` frozen."""
        c = self.params.constants
        rho = u.real**2 + u.imag**2
        if c.gamma2 == 0:
            forcing_hat = 0.0
        else:
            forcing_hat = rfft(c.gamma2 * cutoff_weights(rho, self.params.K)[0] * rho)
        k1 = self._flux_rhs(v, forcing_hat)
        k2 = self._flux_rhs(v + 0.5 * tau * k1, forcing_hat)
        k3 = self._flux_rhs(v + 0.5 * tau * k2, forcing_hat)
        k4 = self._flux_rhs(v + tau * k3, forcing_hat)
        return v + (tau / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    def nonlinear_substep(self, u, v, tau):
        if self.linear_only:
            return u, v
        c = self.params.constants
        K = self.params.K
        u = kernels.nonlinear_phase(u, v, c.gamma1, c.beta, K, 0.5 * tau)
        v = self._advance_v(u, v, tau)
        u = kernels.nonlinear_phase(u, v, c.gamma1, c.beta, K, 0.5 * tau)
        return u, v

    # -- full steps ---------------------------------------------------------

    def step(self, u, v, noise_u_hat=None, noise_v_hat=None):
        """Advance by ``dt``; optional raw-fft noise spectra are propagated and added.

        ``noise_v_hat`` is given in rfft layout.
        """
        if self.scheme == "strang":
            u1 = ifft(fft(u) * self.s_half)
            v1 = irfft(rfft(v) * self.a_half, self.n)
            u2, v2 = self.nonlinear_substep(u1, v1, self.dt)
            uh = fft(u2) * self.s_half
            vh = rfft(v2) * self.a_half
        elif self.scheme == "lie":
            u1 = ifft(fft(u) * self.s_full)
            v1 = irfft(rfft(v) * self.a_full, self.n)
            u2, v2 = self.nonlinear_substep(u1, v1, self.dt)
            if noise_u_hat is None and noise_v_hat is None:
                return u2, v2
            uh = fft(u2)
            vh = rfft(v2)
        else:
            if self.linear_only:
                uh = fft(u) * self.s_full
                vh = rfft(v) * self.a_full
            else:
                uh = fft(u + self.dt * n1(self.grid, u, v, self.params, self.dealias)) * self.s_full
                vh = rfft(v + self.dt * n2(self.grid, u, v, self.params, self.dealias)) * self.a_full
        if noise_u_hat is not None:
            uh = uh + self.s_full * noise_u_hat
        if noise_v_hat is not None:
            vh = vh + self.a_full * noise_v_hat
        return ifft(uh), irfft(vh, self.n)


class _NoiseSource:
    """Per-step raw spectra of ``Phi dW`` for a block of paths."""

    def __init__(self, grid: SpectralGrid, forcing: Forcing, dt: float, num_steps: int, paths):
        self.grid = grid
        self.path = NoisePath(forcing.seed, dt, max(num_steps, 1))
        self.paths = paths
        self.ops = [op if op is not None and not op.is_zero else None for op in (forcing.noise_u, forcing.noise_v)]
        for op in self.ops:
            if op is not None:
                op._check_grid(grid)

    def spectra(self, step: int):
        out = []
        for op in self.ops:
            if op is None:
                out.append(None)
                continue
            normals = self.path.normals(step, op.channel, op.num_modes, self.paths)
            out.append(op.increment_spectrum(self.grid, op.mode_weights(normals, self.path.dt)))
        su, sv = out
        if sv is not None:
            sv = sv[..., : self.grid.num_points // 2 + 1]
        return su, sv


def deterministic_step(grid: SpectralGrid, state: FieldPair, params: ApproxParams, dt: float,
                       scheme: str = "strang", dealias: bool = True) -> FieldPair:
    stepper = Stepper(grid, params, dt, scheme, dealias)
    u, v = stepper.step(state.u, state.v)
    _raise_if_nonfinite(u, v, 1)
    return FieldPair(u, v, state.time + dt)


def stochastic_step(grid: SpectralGrid, state: FieldPair, params: ApproxParams, forcing: Forcing,
                    path: NoisePath, step_index: int, dt: float, scheme: str = "strang",
                    dealias: bool = True) -> FieldPair:
    """One step with the increment of ``path`` at ``step_index`` (path 0).

    ``forcing`` is used as given: mollify it to ``params.m`` beforehand.
    """
    if not math.isclose(path.dt, dt, rel_tol=1e-15):
        raise ValueError(f"noise path dt {path.dt} does not match step dt {dt}")
    stepper = Stepper(grid, params, dt, scheme, dealias)
    src = _NoiseSource(grid, forcing, dt, path.num_steps, (0,))
    src.path = path
    su, sv = src.spectra(step_index)
    u, v = stepper.step(state.u, state.v, None if su is None else su[0], None if sv is None else sv[0])
    _raise_if_nonfinite(u, v, step_index + 1)
    return FieldPair(u, v, state.time + dt)


def _raise_if_nonfinite(u, v, step):
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
        raise BlowUpError(step)


# -- trajectories -------------------------------------------------------------


@dataclass
class Trajectory:
    """Recorded snapshots of one run (or a lockstep ensemble of runs).

    ``u`` and ``v`` have shape ``(S, N)`` or ``(S, P, N)`` (``None`` when fields
    were not kept); each diagnostics column has shape ``(S,)`` or ``(S, P)``.
    ``alive`` marks ensemble paths that never blew up.
    """

    times: np.ndarray
    steps: np.ndarray
    diagnostics: dict
    u: np.ndarray | None = None
    v: np.ndarray | None = None
    alive: np.ndarray | None = None
    paths: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def num_snapshots(self) -> int:
        return len(self.times)

    @property
    def snapshots(self):
        if self.u is None:
            raise ValueError("fields were not kept for this trajectory")
        return [(float(t), FieldPair(self.u[i], self.v[i], float(t))) for i, t in enumerate(self.times)]

    @property
    def final(self) -> FieldPair:
        if self.u is None:
            raise ValueError("fields were not kept for this trajectory")
        return FieldPair(self.u[-1], self.v[-1], float(self.times[-1]))


DiagnosticsFn = Callable[[SpectralGrid, np.ndarray, np.ndarray, ApproxParams], dict]


def _default_diagnostics(grid, u, v, params):
    from .functionals import diagnostics

    return diagnostics(grid, u, v, params)


def run(grid: SpectralGrid, initial: FieldPair, params: ApproxParams, config: SchemeConfig,
        forcing: Forcing | None = None, paths=None, diagnostics: DiagnosticsFn | None = _default_diagnostics,
        keep_fields: bool = True, mask_blowups: bool = False) -> Trajectory:
    """Integrate from ``initial`` to ``config.t_end``.

    The initial data are projected with ``P_m`` and the noise operators are
    mollified to ``params.m``, so every member of an approximation ladder can be
    started from the same inputs. With ``paths`` (a sequence of path indices) the
    run is a lockstep ensemble; path ``p`` uses the Brownian increments indexed
    by ``p`` whatever the block it is computed in. Without ``paths`` the run is
    path 0.

    On nonfinite values a single run raises :class:`BlowUpError` carrying the
    partial trajectory. An ensemble does the same unless ``mask_blowups`` is set,
    in which case failed paths are frozen at zero, reported NaN and flagged in
    ``alive``.
    """
    m = params.m
    u0 = grid.sharp_project(np.asarray(initial.u, dtype=np.complex128), m)
    v0 = grid.sharp_project(np.asarray(initial.v, dtype=np.float64), m)
    ensemble = paths is not None
    if ensemble:
        paths = np.atleast_1d(np.asarray(paths, dtype=np.int64))
        if paths.ndim != 1 or len(paths) == 0:
            raise ValueError("paths must be a nonempty 1-d sequence of indices")
        if np.any(paths < 0):
            raise ValueError("path indices must be nonnegative")
        shape = (len(paths), grid.num_points)
        u = np.broadcast_to(u0, shape).copy()
        v = np.broadcast_to(v0, shape).copy()
    else:
        u, v = u0, v0
    if u.shape[-1] != grid.num_points:
        raise ValueError(f"initial data length {u.shape[-1]} does not match grid num_points {grid.num_points}")

    dt = config.dt
    num_steps = config.num_steps
    stepper = Stepper(grid, params, dt, config.scheme, config.dealias)
    noise = None
    if forcing is not None and not forcing.is_zero:
        noise = _NoiseSource(grid, forcing.mollified(m), dt, num_steps, paths if ensemble else (0,))

    alive = np.ones(len(paths), dtype=bool) if ensemble else None
    times, steps, diag_rows, u_snaps, v_snaps = [], [], [], [], []

    def record(k):
        times.append(k * dt)
        steps.append(k)
        if diagnostics is not None:
            row = diagnostics(grid, u, v, params)
            if ensemble and not alive.all():
                row = {key: np.where(alive, val, np.nan) for key, val in row.items()}
            diag_rows.append(row)
        if keep_fields:
            u_snaps.append(u.copy())
            v_snaps.append(v.copy())

    def build():
        names = list(diag_rows[0]) if diag_rows else []
        diag = {name: np.array([row[name] for row in diag_rows]) for name in names}
        return Trajectory(
            times=np.array(times), steps=np.array(steps, dtype=np.int64), diagnostics=diag,
            u=np.array(u_snaps) if keep_fields else None,
            v=np.array(v_snaps) if keep_fields else None,
            alive=None if alive is None else alive.copy(),
            paths=paths if ensemble else None,
            meta={"dt": dt, "scheme": config.scheme, "stride": config.snapshot_stride},
        )

    record(0)
    stride = int(config.snapshot_stride)
    for k in range(num_steps):
        limit = max_stable_dt(grid, v)
        if dt > limit:
            raise StepSizeError(
                f"dt={dt} exceeds the stability ceiling {limit:.3e} at step {k} (max|v|={np.max(np.abs(v)):.3e})"
            )
        if noise is not None:
            su, sv = noise.spectra(k)
            if not ensemble:
                su = None if su is None else su[0]
                sv = None if sv is None else sv[0]
        else:
            su = sv = None
        u, v = stepper.step(u, v, su, sv)

        if ensemble:
            bad = ~(np.isfinite(u).all(axis=-1) & np.isfinite(v).all(axis=-1))
            if bad.any():
                if not mask_blowups:
                    raise BlowUpError(k + 1, build(), f"{int(bad.sum())} path(s) blew up at step {k + 1}")
                alive &= ~bad
                u[bad] = 0.0
                v[bad] = 0.0
        elif not (np.isfinite(u).all() and np.isfinite(v).all()):
            raise BlowUpError(k + 1, build())

        if (k + 1) % stride == 0 or k + 1 == num_steps:
            record(k + 1)
    return build()

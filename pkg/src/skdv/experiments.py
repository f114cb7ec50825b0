"""Study drivers: ensembles, drift identities, approximation ladders, suites.

Ensembles are split into fixed-size blocks of path indices. Each block is an
independent lockstep run, so the partition (and therefore every result bit)
does not depend on how many worker threads execute the blocks. Reductions over
paths use ``math.fsum``.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import functionals as fn
from .dynamics import LINEAR, ApproxParams, FieldPair, PhysicalConstants, benchmark_initial
from .grid import SpectralGrid, fft, workspace_norm
from .integrators import BlowUpError, Forcing, SchemeConfig, Trajectory, run

DEFAULT_BATCH = 250
MAX_BLOWUP_FRACTION = 0.01


class BlowUpRateError(RuntimeError):
    def __init__(self, failed: int, total: int):
        self.failed = failed
        self.total = total
        super().__init__(f"{failed} of {total} paths blew up (limit {MAX_BLOWUP_FRACTION:.0%})")


def fsum_mean(a, axis=-1):
    """Mean along ``axis`` with compensated summation (order-insensitive)."""
    a = np.moveaxis(np.asarray(a, dtype=np.float64), axis, -1)
    flat = a.reshape(-1, a.shape[-1])
    out = np.array([math.fsum(row) for row in flat]) / a.shape[-1]
    return out.reshape(a.shape[:-1])


def mean_and_se(samples, axis=-1):
    s = np.asarray(samples, dtype=np.float64)
    mean = fsum_mean(s, axis)
    n = s.shape[axis]
    dev = s - np.expand_dims(mean, axis)
    var = fsum_mean(dev**2, axis) * n / max(n - 1, 1)
    return mean, np.sqrt(var / n)


# -- ensembles -----------------------------------------------------------------


@dataclass
class Ensemble:
    times: np.ndarray
    diagnostics: dict
    alive: np.ndarray
    num_paths: int

    @property
    def failed(self) -> int:
        return int(np.count_nonzero(~self.alive))

    def column(self, name: str) -> np.ndarray:
        """``(S, P_alive)`` samples of one diagnostic, blown-up paths removed."""
        return self.diagnostics[name][:, self.alive]


def run_ensemble(grid: SpectralGrid, initial: FieldPair, params: ApproxParams, config: SchemeConfig,
                 forcing: Forcing, num_paths: int, diagnostics=fn.diagnostics,
                 batch_size: int = DEFAULT_BATCH, threads: int = 1, first_path: int = 0) -> Ensemble:
    """Run ``num_paths`` independent paths and gather their diagnostics.

    Paths that blow up are dropped if they are fewer than 1% of the total;
    otherwise :class:`BlowUpRateError` is raised.
    """
    if num_paths < 1:
        raise ValueError(f"num_paths must be positive, got {num_paths!r}")
    if batch_size < 1:
        raise ValueError(f"batch_size must be positive, got {batch_size!r}")
    blocks = [np.arange(s, min(s + batch_size, num_paths)) + first_path for s in range(0, num_paths, batch_size)]

    def one(paths):
        return run(grid, initial, params, config, forcing, paths=paths, diagnostics=diagnostics,
                   keep_fields=False, mask_blowups=True)

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trajs = list(pool.map(one, blocks))
    else:
        trajs = [one(b) for b in blocks]
    alive = np.concatenate([t.alive for t in trajs])
    failed = int(np.count_nonzero(~alive))
    if failed and failed >= MAX_BLOWUP_FRACTION * num_paths:
        raise BlowUpRateError(failed, num_paths)
    diag = {name: np.concatenate([t.diagnostics[name] for t in trajs], axis=1) for name in trajs[0].diagnostics}
    return Ensemble(trajs[0].times, diag, alive, num_paths)


# -- drift identities -----------------------------------------------------------

FUNCTIONALS = ("mass", "mass_p2", "I", "E", "gradient_energy")


def drift_diagnostics(noise_u, noise_v, selector, weights: PhysicalConstants | None = None):
    """Diagnostics callback recording each selected functional and its Ito drift.

    For a functional ``F`` the columns are ``F`` and ``F_drift``. ``weights``
    replaces the run's constants inside the functionals; this lets the linear
    system (all couplings zero) be measured with the ``gamma1 / 2 gamma2``
    weight of a coupled one.
    """
    unknown = set(selector) - set(FUNCTIONALS)
    if unknown:
        raise ValueError(f"unknown functionals {sorted(unknown)}; choose from {FUNCTIONALS}")

    def diag(grid, u, v, params):
        c = weights or params.constants
        out = {}
        for name in selector:
            if name == "mass":
                out["mass"] = fn.mass(grid, u)
                out["mass_drift"] = fn.mass_power_drift(grid, u, noise_u, 1)
            elif name == "mass_p2":
                out["mass_p2"] = fn.mass(grid, u) ** 2
                out["mass_p2_drift"] = fn.mass_power_drift(grid, u, noise_u, 2)
            elif name == "I":
                out["I"] = fn.momentum_functional(grid, u, v, c)
                out["I_drift"] = np.full(u.shape[:-1], fn.predicted_drift_momentum(grid, noise_u, noise_v, c))
            elif name == "E":
                out["E"] = fn.energy_functional(grid, u, v, c, params.K)
                out["E_drift"] = fn.energy_ito_drift(grid, u, v, noise_u, noise_v, c, params.K).total
            else:
                out["gradient_energy"] = fn.gradient_energy(grid, u, v, c)
                out["gradient_energy_drift"] = np.full(
                    u.shape[:-1], fn.energy_gradient_correction(noise_u, noise_v, c))
        return out

    return diag


def _cumtrapz(y, t):
    """Cumulative trapezoid along axis 0 starting at zero."""
    out = np.zeros_like(y)
    dt = np.diff(t)[:, None] if y.ndim > 1 else np.diff(t)
    out[1:] = np.cumsum(0.5 * dt * (y[1:] + y[:-1]), axis=0)
    return out


@dataclass
class DriftEstimate:
    name: str
    t_end: float
    measured_slope: float
    predicted_slope: float
    slope_se: float
    z: float
    times: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    num_paths: int
    failed: int

    def passed(self, z_max: float = 3.0) -> bool:
        return bool(abs(self.z) < z_max)

    def to_dict(self) -> dict:
        return {
            "functional": self.name, "t_end": self.t_end, "measured_slope": self.measured_slope,
            "predicted_slope": self.predicted_slope, "slope_se": self.slope_se, "z": self.z,
            "num_paths": self.num_paths, "failed_paths": self.failed,
            "times": self.times.tolist(), "mean": self.mean.tolist(), "se": self.se.tolist(),
        }


def drift_estimates(ens: Ensemble, selector) -> dict:
    """Measured vs predicted drift per functional from a drift-diagnostics ensemble.

    The z-score uses the per-path residual ``F(T) - F(0) - int_0^T drift ds``,
    which removes the common-path fluctuation of the state-dependent drift.
    """
    t = ens.times
    T = float(t[-1])
    if T <= 0:
        raise ValueError("drift estimation needs a positive horizon")
    out = {}
    for name in selector:
        F = ens.column(name)
        D = ens.column(name + "_drift")
        inc = F - F[0]
        integ = _cumtrapz(D, t)
        resid = inc[-1] - integ[-1]
        r_mean, r_se = mean_and_se(resid)
        m_mean, _ = mean_and_se(inc[-1])
        p_mean, _ = mean_and_se(integ[-1])
        f_mean, f_se = mean_and_se(F, axis=1)
        z = float(r_mean / r_se) if r_se > 0 else (0.0 if r_mean == 0 else math.copysign(math.inf, r_mean))
        out[name] = DriftEstimate(
            name, T, float(m_mean / T), float(p_mean / T), float(r_se / T), z,
            t, f_mean, f_se, F.shape[1], ens.failed,
        )
    return out


def mc_drift_study(grid: SpectralGrid, initial: FieldPair, params: ApproxParams, forcing: Forcing,
                   num_paths: int, t_end: float, dt: float, selector=("mass", "I"),
                   scheme: str = "strang", batch_size: int = DEFAULT_BATCH, threads: int = 1,
                   weights: PhysicalConstants | None = None) -> dict:
    """Monte Carlo check of the Ito drift of each selected functional."""
    if num_paths < 100:
        raise ValueError(f"mc_drift_study needs at least 100 paths, got {num_paths}")
    mol = forcing.mollified(params.m)
    config = SchemeConfig(dt, t_end, scheme)
    diag = drift_diagnostics(mol.noise_u, mol.noise_v, selector, weights)
    ens = run_ensemble(grid, initial, params, config, forcing, num_paths, diag, batch_size, threads)
    return drift_estimates(ens, selector)


# -- linear stochastic convolution ---------------------------------------------


@dataclass
class MomentCheck:
    sigma: float
    estimate: float
    se: float
    predicted: float

    @property
    def z(self) -> float:
        return (self.estimate - self.predicted) / self.se if self.se > 0 else 0.0

    def to_dict(self) -> dict:
        return {"sigma": self.sigma, "estimate": self.estimate, "se": self.se,
                "predicted": self.predicted, "z": self.z}


def linear_stochastic_study(grid: SpectralGrid, noise_u, num_paths: int, t_end: float, dt: float,
                            sigmas=(0.0, 1.0), batch_size: int = DEFAULT_BATCH, threads: int = 1,
                            seed: int = 0, scheme: str = "strang") -> list:
    """``E ||u(t)||^2_{H^sigma}`` of the stochastic convolution vs ``t ||Phi||^2_{L2^{0,sigma}}``."""
    scale = math.sqrt(grid.dx / grid.num_points)
    weights = [(1.0 + grid.xi**2) ** s * scale**2 for s in sigmas]

    def diag(grid_, u, v, params):
        power = np.abs(fft(u)) ** 2
        return {f"H{i}": np.sum(w * power, axis=-1) for i, w in enumerate(weights)}

    zero = FieldPair(np.zeros(grid.num_points, complex), np.zeros(grid.num_points))
    params = ApproxParams(constants=LINEAR)
    ens = run_ensemble(grid, zero, params, SchemeConfig(dt, t_end, scheme), Forcing(noise_u, None, seed),
                       num_paths, diag, batch_size, threads)
    T = float(ens.times[-1])
    out = []
    for i, s in enumerate(sigmas):
        mean, se = mean_and_se(ens.column(f"H{i}")[-1])
        out.append(MomentCheck(s, float(mean), float(se), T * noise_u.hs_norm(s) ** 2))
    return out


# -- approximation ladders -----------------------------------------------------


@dataclass(frozen=True)
class HierarchySpec:
    """Ordered ladder of hierarchy members; the last entry is the reference."""

    members: tuple
    seed: int = 0
    label: str = ""

    def __post_init__(self):
        members = tuple(self.members)
        if len(members) < 2:
            raise ValueError("a ladder needs at least two members")
        object.__setattr__(self, "members", members)
        ref = members[-1]
        if not (math.isinf(ref.K) and math.isinf(ref.n)):
            raise ValueError("the reference member must have K = inf and n = inf")
        keys = [self._key(p) for p in members]
        if keys != sorted(keys):
            raise ValueError("ladder members must be ordered by increasing (m, n, K)")

    @staticmethod
    def _key(p: ApproxParams):
        return (p.m, p.n, p.K)

    @property
    def reference(self) -> ApproxParams:
        return self.members[-1]

    @classmethod
    def ladder(cls, name: str, values, base: ApproxParams | None = None, seed: int = 0) -> "HierarchySpec":
        """Vary one of ``m``, ``n`` or ``K`` over ``values`` (``inf`` appended if absent)."""
        if name not in ("m", "n", "K"):
            raise ValueError(f"ladder parameter must be m, n or K, got {name!r}")
        base = base or ApproxParams()
        vals = sorted(float(v) for v in values)
        if not math.isinf(vals[-1]):
            vals.append(math.inf)
        members = []
        for v in vals:
            changes = {name: v}
            if math.isinf(v):
                changes.update(n=math.inf, K=math.inf)
            members.append(base.replace(**changes))
        return cls(tuple(members), seed, name)


@dataclass
class LadderRow:
    params: ApproxParams
    error: float
    blew_up: bool = False
    blowup_step: int | None = None


@dataclass
class ConvergenceTable:
    label: str
    rows: list
    saturation: float | None = None
    notes: list = field(default_factory=list)

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.error for r in self.rows])

    def nonincreasing(self, rel_tol: float = 0.1, abs_floor: float = 1e-12) -> bool:
        e = self.errors
        return bool(np.all(e[1:] <= e[:-1] * (1 + rel_tol) + abs_floor))

    def ratios(self) -> np.ndarray:
        e = self.errors
        with np.errstate(divide="ignore", invalid="ignore"):
            return e[:-1] / e[1:]

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "rows": [{"m": r.params.m, "n": r.params.n, "K": r.params.K, "error": r.error,
                      "blew_up": r.blew_up, "blowup_step": r.blowup_step} for r in self.rows],
            "saturation": self.saturation, "notes": list(self.notes),
        }


def converge_study(grid: SpectralGrid, spec: HierarchySpec, initial: FieldPair, config: SchemeConfig,
                   forcing: Forcing | None = None, sigma: float = 1.0) -> ConvergenceTable:
    """Workspace-norm distance of every ladder member to the reference on one noise path.

    A member that blows up gets an infinite error and a blow-up mark; the table
    is still returned. If ``n`` or ``m`` exceeds the grid Nyquist frequency the
    member coincides with the reference, which is noted as saturation.
    """
    if forcing is not None:
        forcing = Forcing(forcing.noise_u, forcing.noise_v, spec.seed)
    no_diag = None

    def go(p):
        return run(grid, initial, p, config, forcing, diagnostics=no_diag)

    ref = go(spec.reference)
    rows = []
    for p in spec.members[:-1]:
        try:
            tr = go(p)
        except BlowUpError as exc:
            rows.append(LadderRow(p, math.inf, True, exc.step))
            continue
        err = workspace_norm(grid, tr.u - ref.u, tr.v - ref.v, sigma)
        rows.append(LadderRow(p, err))
    rows.append(LadderRow(spec.reference, 0.0))
    table = ConvergenceTable(spec.label, rows)
    if spec.label in ("m", "n"):
        for r in rows[:-1]:
            if getattr(r.params, spec.label) >= grid.nyquist:
                table.saturation = getattr(r.params, spec.label)
                table.notes.append(f"{spec.label} >= Nyquist {grid.nyquist:.3f}: member equals reference")
                break
    return table


# -- deterministic suite ---------------------------------------------------------


def relative_drift(series) -> float:
    s = np.asarray(series, dtype=np.float64)
    return float(np.max(np.abs(s - s[0])) / max(abs(s[0]), np.finfo(float).tiny))


def final_state(grid, initial, params, config) -> FieldPair:
    tr = run(grid, initial, params, SchemeConfig(config.dt, config.t_end, config.scheme,
                                                  max(config.num_steps, 1), config.dealias),
             diagnostics=None)
    return tr.final


def self_convergence(grid: SpectralGrid, initial: FieldPair, params: ApproxParams, config: SchemeConfig,
                     refinement: int = 16) -> dict:
    """Errors at ``dt`` and ``dt/2`` against a ``dt/refinement`` run, in ``H^1``, and the observed order."""
    ref = final_state(grid, initial, params, config.with_dt(config.dt / refinement))
    errs = []
    for dt in (config.dt, config.dt / 2):
        w = final_state(grid, initial, params, config.with_dt(dt))
        errs.append(float(grid.sobolev_norm(w.u - ref.u, 1) + grid.sobolev_norm(w.v - ref.v, 1)))
    order = math.log2(errs[0] / errs[1]) if errs[1] > 0 else math.inf
    return {"scheme": config.scheme, "dt": config.dt, "errors": errs, "order": order}


def deterministic_suite(grid: SpectralGrid, config: SchemeConfig, params: ApproxParams | None = None,
                        initial: FieldPair | None = None, convergence_dt: float | None = 0.01,
                        refinement: int = 16) -> dict:
    """Conservation drifts at ``dt`` and ``dt/2`` plus the self-convergence order.

    Mass, momentum and energy are evaluated at ``K = inf`` on an unforced run.
    """
    params = params or ApproxParams()
    initial = initial or benchmark_initial(grid)
    drifts = {}
    for label, cfg in (("dt", config), ("dt_half", config.with_dt(config.dt / 2))):
        tr = run(grid, initial, params, cfg)
        d = tr.diagnostics
        drifts[label] = {name: relative_drift(d[name]) for name in ("mass", "I", "E")}
    shrink = {name: drifts["dt"][name] / drifts["dt_half"][name] if drifts["dt_half"][name] > 0 else math.inf
              for name in ("I", "E")}
    report = {"dt": config.dt, "t_end": config.t_end, "scheme": config.scheme,
              "drift": drifts["dt"], "drift_half_dt": drifts["dt_half"], "shrink": shrink}
    if convergence_dt is not None:
        report["convergence"] = self_convergence(grid, initial, params,
                                                 SchemeConfig(convergence_dt, config.t_end, config.scheme),
                                                 refinement)
    return report


# -- a-priori scan -----------------------------------------------------------------


def sup_h1_diagnostics(grid, u, v, params):
    scale2 = grid.dx / grid.num_points
    w = (1.0 + grid.xi**2) * scale2
    return {"h1": np.sum(w * np.abs(fft(u)) ** 2, axis=-1) + np.sum(w * np.abs(fft(v)) ** 2, axis=-1)}


def apriori_scan(grid: SpectralGrid, initial: FieldPair, params: ApproxParams, lambda0s, num_paths: int,
                 t_end: float, dt: float, decay_r: float = 3.0, num_modes: int = 129, seed: int = 0,
                 batch_size: int = DEFAULT_BATCH, threads: int = 1) -> fn.AprioriReport:
    """``E sup_t (||u||_{H1}^2 + ||v||_{H1}^2)`` against the data/noise bracket over a noise scan."""
    from .noise import NoiseOperator

    params.constants.require_global_regime()
    u0 = grid.sharp_project(initial.u, params.m)
    v0 = grid.sharp_project(initial.v, params.m)
    samples, brackets, failed = [], [], 0
    for lam in lambda0s:
        nu = NoiseOperator.from_decay(grid.half_length, lam, decay_r, num_modes, 1)
        nv = NoiseOperator.from_decay(grid.half_length, lam, decay_r, num_modes, 2)
        forcing = Forcing(nu, nv, seed)
        ens = run_ensemble(grid, initial, params, SchemeConfig(dt, t_end), forcing, num_paths,
                           sup_h1_diagnostics, batch_size, threads)
        failed += ens.failed
        samples.append(np.max(ens.column("h1"), axis=0))
        mol = forcing.mollified(params.m)
        brackets.append(fn.apriori_bracket(grid, u0, v0, mol.noise_u, mol.noise_v))
    return fn.apriori_bound_check([f"lambda0={lam:g}" for lam in lambda0s], samples, brackets,
                                  params.constants, failed)

"""Command-line front end: ``skdv <subcommand> --config FILE --out DIR``.

Exit codes: 0 success, 2 invalid configuration or usage, 3 blow-up abort.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from . import functionals as fn
from .config import ConfigError, ExperimentConfig
from .integrators import BlowUpError, StepSizeError, run

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_BLOWUP = 3

DEFAULT_LADDERS = {"K": (2.0, 4.0, 8.0), "n": (4.0, 8.0, 16.0), "m": (4.0, 8.0, 16.0)}


def _clean(obj):
    """JSON-safe copy: infinities become ``"inf"``/``"-inf"``, NaN becomes null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        obj = obj.item()
    if isinstance(obj, float):
        if math.isnan(obj):
            return None
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
    return obj


class _Output:
    def __init__(self, root: Path, cfg: ExperimentConfig, command: str, quiet: bool):
        self.root = root
        self.cfg = cfg
        self.command = command
        self.quiet = quiet
        self.formats = set(cfg.output.formats)
        root.mkdir(parents=True, exist_ok=True)

    def say(self, msg: str) -> None:
        if not self.quiet:
            print(msg)

    def json(self, name: str, result: dict) -> None:
        if "json" not in self.formats:
            return
        payload = {"command": self.command, "config": self.cfg.to_dict(), "result": result}
        with open(self.root / name, "w") as fh:
            json.dump(_clean(payload), fh, indent=2, sort_keys=True, allow_nan=False)
            fh.write("\n")

    def table(self, name: str, header, rows) -> None:
        if "csv" not in self.formats:
            return
        with open(self.root / name, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])

    def record(self, name: str, record: fn.DiagnosticsRecord) -> None:
        if "csv" in self.formats:
            record.write_csv(self.root / name)


# -- subcommands -----------------------------------------------------------------


def _simulate(cfg: ExperimentConfig, out: _Output, args) -> int:
    grid = cfg.build_grid()
    params = cfg.build_params()
    forcing = cfg.build_forcing()
    mol = forcing.mollified(params.m)
    scalars = {
        "predicted_mass_slope": fn.predicted_drift_mass(mol.noise_u)["slope"],
        "predicted_momentum_slope": fn.predicted_drift_momentum(grid, mol.noise_u, mol.noise_v, params.constants),
        "energy_gradient_correction": fn.energy_gradient_correction(mol.noise_u, mol.noise_v, params.constants),
    }
    try:
        traj = run(grid, cfg.build_initial(grid), params, cfg.build_scheme(), forcing, keep_fields=False)
    except BlowUpError as exc:
        if exc.trajectory is not None and exc.trajectory.num_snapshots:
            out.record("trajectory.csv", fn.DiagnosticsRecord.from_trajectory(exc.trajectory))
        out.json("summary.json", {"blowup_step": exc.step, **scalars})
        raise
    record = fn.DiagnosticsRecord.from_trajectory(traj, scalars)
    out.record("trajectory.csv", record)
    out.json("summary.json", record.summary())
    out.say(f"simulate: {traj.num_snapshots} snapshots to t={traj.times[-1]:g}, wrote {out.root}")
    return EXIT_OK


def _deterministic_suite(cfg: ExperimentConfig, out: _Output, args) -> int:
    grid = cfg.build_grid()
    report = ex.deterministic_suite(grid, cfg.build_scheme(), cfg.build_params(), cfg.build_initial(grid),
                                    refinement=cfg.study.refinement)
    out.json("deterministic_suite.json", report)
    out.table("deterministic_suite.csv", ("quantity", "drift_dt", "drift_dt_half"),
              [(k, report["drift"][k], report["drift_half_dt"][k]) for k in ("mass", "I", "E")])
    conv = report.get("convergence", {})
    out.say(f"deterministic-suite: drift {report['drift']}, order {conv.get('order', float('nan')):.3f}")
    return EXIT_OK


def _mc_drift(cfg: ExperimentConfig, out: _Output, args) -> int:
    grid = cfg.build_grid()
    st = cfg.study
    est = ex.mc_drift_study(grid, cfg.build_initial(grid), cfg.build_params(), cfg.build_forcing(),
                            st.num_paths, cfg.scheme.t_end, cfg.scheme.dt, st.functionals,
                            cfg.scheme.scheme, st.batch_size, args.threads)
    out.json("mc_drift.json", {name: e.to_dict() for name, e in est.items()})
    first = next(iter(est.values()))
    header = ["time"]
    cols = [first.times]
    for name, e in est.items():
        header += [f"{name}_mean", f"{name}_se"]
        cols += [e.mean, e.se]
    out.table("mc_drift.csv", header, zip(*cols))
    for name, e in est.items():
        out.say(f"mc-drift {name}: measured {e.measured_slope:.6g} predicted {e.predicted_slope:.6g} z={e.z:+.2f}")
    return EXIT_OK


def _converge(which: str):
    def handler(cfg: ExperimentConfig, out: _Output, args) -> int:
        grid = cfg.build_grid()
        values = cfg.approx.ladder or DEFAULT_LADDERS[which]
        spec = ex.HierarchySpec.ladder(which, values, cfg.build_params(), cfg.noise.seed)
        forcing = cfg.build_forcing()
        table = ex.converge_study(grid, spec, cfg.build_initial(grid), cfg.build_scheme(),
                                  None if forcing.is_zero else forcing)
        result = table.to_dict()
        result["nonincreasing"] = table.nonincreasing()
        name = f"converge_{which.lower()}"
        out.json(f"{name}.json", result)
        out.table(f"{name}.csv", (which, "error", "blew_up"),
                  [(getattr(r.params, which), r.error, int(r.blew_up)) for r in table.rows])
        out.say(f"converge-{which.lower()}: errors {table.errors.tolist()}")
        return EXIT_OK

    return handler


def _linear_stochastic(cfg: ExperimentConfig, out: _Output, args) -> int:
    grid = cfg.build_grid()
    forcing = cfg.build_forcing().mollified(cfg.approx.m)
    if forcing.noise_u is None:
        raise ConfigError("noise.lambda0", "linear-stochastic needs a nonzero u-channel noise")
    st = cfg.study
    checks = ex.linear_stochastic_study(grid, forcing.noise_u, st.num_paths, cfg.scheme.t_end, cfg.scheme.dt,
                                        st.sigmas, st.batch_size, args.threads, forcing.seed, cfg.scheme.scheme)
    out.json("linear_stochastic.json", {"checks": [c.to_dict() for c in checks]})
    out.table("linear_stochastic.csv", ("sigma", "estimate", "se", "predicted", "z"),
              [(c.sigma, c.estimate, c.se, c.predicted, c.z) for c in checks])
    for c in checks:
        out.say(f"linear-stochastic sigma={c.sigma:g}: {c.estimate:.6g} vs {c.predicted:.6g} z={c.z:+.2f}")
    return EXIT_OK


def _from_config(cfg: ExperimentConfig, out: _Output, args) -> int:
    out.command = cfg.study.kind
    return COMMANDS[cfg.study.kind](cfg, out, args)


COMMANDS = {
    "run": _from_config,
    "simulate": _simulate,
    "deterministic-suite": _deterministic_suite,
    "mc-drift": _mc_drift,
    "converge-k": _converge("K"),
    "converge-n": _converge("n"),
    "converge-m": _converge("m"),
    "linear-stochastic": _linear_stochastic,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="skdv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help="dispatch on study.kind" if name == "run" else None)
        p.add_argument("--config", type=Path, help="TOML experiment file (defaults apply when omitted)")
        p.add_argument("--out", type=Path, help="output directory (overrides output.dir)")
        p.add_argument("--seed", type=int, help="noise seed, overrides noise.seed")
        p.add_argument("--paths", type=int, help="Monte Carlo paths, overrides study.num_paths")
        p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                       help="worker threads for ensembles (results do not depend on it)")
        p.add_argument("--quiet", action="store_true")
    return parser


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_toml(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("noise.seed", f"must be an unsigned 64-bit integer, got {args.seed}")
        cfg = cfg.replace("noise", seed=args.seed)
    if args.paths is not None:
        if args.paths < 1:
            raise ConfigError("study.num_paths", f"must be positive, got {args.paths}")
        cfg = cfg.replace("study", num_paths=args.paths)
    if args.out is not None:
        cfg = cfg.replace("output", dir=str(args.out))
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    if args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_INVALID
    try:
        cfg = load_config(args)
        out = _Output(Path(cfg.output.dir), cfg, args.command, args.quiet)
        return COMMANDS[args.command](cfg, out, args)
    except (ConfigError, StepSizeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (BlowUpError, ex.BlowUpRateError) as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())

"""Experiment configuration: a TOML file, validated before anything runs.

Infinite cutoffs are written as the string ``"inf"``. Every validation failure
raises :class:`ConfigError` whose message starts with the dotted field name.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .dynamics import ApproxParams, FieldPair, PhysicalConstants, benchmark_initial
from .grid import SpectralGrid
from .integrators import SCHEMES, Forcing, SchemeConfig
from .noise import NOISE_MODES, NoiseOperator

STUDY_KINDS = ("simulate", "deterministic-suite", "mc-drift", "converge-k", "converge-n",
               "converge-m", "linear-stochastic")
INITIAL_KINDS = ("benchmark", "zero")
OUTPUT_FORMATS = ("csv", "json")


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


def _number(section, key, value, positive=False, allow_inf=False, integer=False, nonnegative=False):
    name = f"{section}.{key}"
    if isinstance(value, bool):
        raise ConfigError(name, f"expected a number, got {value!r}")
    if isinstance(value, str):
        if allow_inf and value.strip().lower() in ("inf", "infinity"):
            return math.inf
        what = 'a number or "inf"' if allow_inf else "a number"
        raise ConfigError(name, f"expected {what}, got {value!r}")
    if not isinstance(value, (int, float)):
        raise ConfigError(name, f"expected a number, got {value!r}")
    if integer:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(name, f"expected an integer, got {value!r}")
        value = int(value)
    else:
        value = float(value)
    if math.isnan(value) or (math.isinf(value) and not allow_inf):
        raise ConfigError(name, f"must be finite, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(name, f"must be positive, got {value!r}")
    if nonnegative and value < 0:
        raise ConfigError(name, f"must be nonnegative, got {value!r}")
    return value


def _inf_out(x):
    return "inf" if isinstance(x, float) and math.isinf(x) else x


@dataclass(frozen=True)
class GridSection:
    half_length: float = 16.0 * math.pi
    num_points: int = 1024


@dataclass(frozen=True)
class ConstantsSection:
    gamma1: float = 1.0
    gamma2: float = 1.0
    beta: float = 1.0


@dataclass(frozen=True)
class ApproxSection:
    m: float = math.inf
    n: float = math.inf
    K: float = math.inf
    ladder: tuple = ()


@dataclass(frozen=True)
class NoiseSection:
    lambda0: float = 0.1
    lambda0_v: float | None = None
    decay_r: float = 3.0
    num_modes: int = 129
    seed: int = 0
    channel_mode: str = "real"
    channels: tuple = ("u", "v")


@dataclass(frozen=True)
class InitialSection:
    kind: str = "benchmark"
    amp_u: float = 1.0
    amp_v: float = 1.0


@dataclass(frozen=True)
class SchemeSection:
    dt: float = 1e-3
    t_end: float = 1.0
    scheme: str = "strang"
    snapshot_stride: int = 1
    dealias: bool = True


@dataclass(frozen=True)
class StudySection:
    kind: str = "simulate"
    num_paths: int = 2000
    functionals: tuple = ("mass", "I")
    batch_size: int = 250
    sigmas: tuple = (0.0, 1.0)
    refinement: int = 16


@dataclass(frozen=True)
class OutputSection:
    dir: str = "out"
    formats: tuple = ("csv", "json")


SECTIONS = {
    "grid": GridSection, "constants": ConstantsSection, "approx": ApproxSection, "noise": NoiseSection,
    "initial": InitialSection, "scheme": SchemeSection, "study": StudySection, "output": OutputSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    grid: GridSection = field(default_factory=GridSection)
    constants: ConstantsSection = field(default_factory=ConstantsSection)
    approx: ApproxSection = field(default_factory=ApproxSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    initial: InitialSection = field(default_factory=InitialSection)
    scheme: SchemeSection = field(default_factory=SchemeSection)
    study: StudySection = field(default_factory=StudySection)
    output: OutputSection = field(default_factory=OutputSection)

    # -- parsing -------------------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be a table")
        unknown = set(data) - set(SECTIONS)
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown section")
        consts = data.get("constants")
        if not isinstance(consts, dict) or "gamma2" not in consts:
            raise ConfigError("constants.gamma2", "is required (nonzero real)")
        parts = {}
        for name, section_cls in SECTIONS.items():
            raw = data.get(name, {})
            if not isinstance(raw, dict):
                raise ConfigError(name, "must be a table")
            known = {f.name for f in fields(section_cls)}
            extra = set(raw) - known
            if extra:
                raise ConfigError(f"{name}.{sorted(extra)[0]}", "unknown key")
            parts[name] = _PARSERS[name](raw)
        cfg = cls(**parts)
        cfg.validate()
        return cfg

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            try:
                data = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError("config", f"not valid TOML: {exc}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = {}
        for name in SECTIONS:
            sec = asdict(getattr(self, name))
            out[name] = {k: (list(v) if isinstance(v, tuple) else _inf_out(v))
                         for k, v in sec.items() if v is not None}
            if name == "approx":
                out[name]["ladder"] = [_inf_out(x) for x in self.approx.ladder]
        return out

    def replace(self, section: str, **changes) -> "ExperimentConfig":
        sec = getattr(self, section)
        vals = asdict(sec)
        vals.update(changes)
        new = {name: getattr(self, name) for name in SECTIONS}
        new[section] = type(sec)(**vals)
        cfg = ExperimentConfig(**new)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        g = self.grid
        n = g.num_points
        if n < 16 or n & (n - 1):
            raise ConfigError("grid.num_points", f"must be a power of two >= 16, got {n}")
        a = self.approx
        if not math.isinf(a.m) and not math.isinf(a.n) and a.n < a.m:
            raise ConfigError("approx.n", f"must be >= m, got n={a.n}, m={a.m}")
        s = self.scheme
        try:
            SchemeConfig(s.dt, s.t_end, s.scheme, s.snapshot_stride, s.dealias)
        except ValueError as exc:
            raise ConfigError("scheme.t_end" if "t_end" in str(exc) else "scheme.dt", str(exc)) from None
        nz = self.noise
        if nz.num_modes > n - 1:
            raise ConfigError("noise.num_modes", f"{nz.num_modes} modes do not fit on {n} points")

    # -- builders -------------------------------------------------------------

    def build_grid(self) -> SpectralGrid:
        return SpectralGrid(self.grid.half_length, self.grid.num_points)

    def build_constants(self) -> PhysicalConstants:
        c = self.constants
        return PhysicalConstants(c.gamma1, c.gamma2, c.beta)

    def build_params(self, **changes) -> ApproxParams:
        a = self.approx
        vals = dict(m=a.m, n=a.n, K=a.K, constants=self.build_constants())
        vals.update(changes)
        return ApproxParams(**vals)

    def build_scheme(self) -> SchemeConfig:
        s = self.scheme
        return SchemeConfig(s.dt, s.t_end, s.scheme, s.snapshot_stride, s.dealias)

    def build_forcing(self, seed: int | None = None) -> Forcing:
        nz = self.noise
        L = self.grid.half_length
        nu = nv = None
        if "u" in nz.channels and nz.lambda0 > 0:
            nu = NoiseOperator.from_decay(L, nz.lambda0, nz.decay_r, nz.num_modes, 1, nz.channel_mode)
        lam_v = nz.lambda0 if nz.lambda0_v is None else nz.lambda0_v
        if "v" in nz.channels and lam_v > 0:
            nv = NoiseOperator.from_decay(L, lam_v, nz.decay_r, nz.num_modes, 2)
        return Forcing(nu, nv, nz.seed if seed is None else seed)

    def build_initial(self, grid: SpectralGrid) -> FieldPair:
        ini = self.initial
        if ini.kind == "zero":
            import numpy as np

            return FieldPair(np.zeros(grid.num_points, complex), np.zeros(grid.num_points))
        return benchmark_initial(grid, ini.amp_u, ini.amp_v)


def _parse_grid(raw):
    return GridSection(
        _number("grid", "half_length", raw.get("half_length", 16.0 * math.pi), positive=True),
        _number("grid", "num_points", raw.get("num_points", 1024), positive=True, integer=True),
    )


def _parse_constants(raw):
    g2 = _number("constants", "gamma2", raw["gamma2"])
    if g2 == 0:
        raise ConfigError("constants.gamma2", "must be nonzero")
    return ConstantsSection(
        _number("constants", "gamma1", raw.get("gamma1", 1.0)), g2,
        _number("constants", "beta", raw.get("beta", 1.0)),
    )


def _parse_approx(raw):
    vals = {k: _number("approx", k, raw.get(k, "inf"), positive=True, allow_inf=True) for k in ("m", "n", "K")}
    ladder = raw.get("ladder", [])
    if not isinstance(ladder, list):
        raise ConfigError("approx.ladder", "must be a list of positive numbers")
    ladder = tuple(_number("approx", "ladder", x, positive=True, allow_inf=True) for x in ladder)
    return ApproxSection(vals["m"], vals["n"], vals["K"], ladder)


def _choice(section, key, value, choices):
    if value not in choices:
        raise ConfigError(f"{section}.{key}", f"must be one of {list(choices)}, got {value!r}")
    return value


def _string_list(section, key, value, choices):
    if not isinstance(value, list):
        raise ConfigError(f"{section}.{key}", "must be a list")
    return tuple(_choice(section, key, v, choices) for v in value)


def _parse_noise(raw):
    lam_v = raw.get("lambda0_v")
    seed = _number("noise", "seed", raw.get("seed", 0), integer=True, nonnegative=True)
    if seed >= 2**64:
        raise ConfigError("noise.seed", "must fit in 64 bits")
    mode = _choice("noise", "channel_mode", raw.get("channel_mode", "real"), NOISE_MODES)
    return NoiseSection(
        _number("noise", "lambda0", raw.get("lambda0", 0.1), nonnegative=True),
        None if lam_v is None else _number("noise", "lambda0_v", lam_v, nonnegative=True),
        _number("noise", "decay_r", raw.get("decay_r", 3.0), nonnegative=True),
        _number("noise", "num_modes", raw.get("num_modes", 129), positive=True, integer=True),
        seed, mode,
        _string_list("noise", "channels", raw.get("channels", ["u", "v"]), ("u", "v")),
    )


def _parse_initial(raw):
    return InitialSection(
        _choice("initial", "kind", raw.get("kind", "benchmark"), INITIAL_KINDS),
        _number("initial", "amp_u", raw.get("amp_u", 1.0)),
        _number("initial", "amp_v", raw.get("amp_v", 1.0)),
    )


def _parse_scheme(raw):
    dealias = raw.get("dealias", True)
    if not isinstance(dealias, bool):
        raise ConfigError("scheme.dealias", f"must be true or false, got {dealias!r}")
    return SchemeSection(
        _number("scheme", "dt", raw.get("dt", 1e-3), positive=True),
        _number("scheme", "t_end", raw.get("t_end", 1.0), nonnegative=True),
        _choice("scheme", "scheme", raw.get("scheme", "strang"), SCHEMES),
        _number("scheme", "snapshot_stride", raw.get("snapshot_stride", 1), positive=True, integer=True),
        dealias,
    )


def _parse_study(raw):
    from .experiments import FUNCTIONALS

    sigmas = raw.get("sigmas", [0.0, 1.0])
    if not isinstance(sigmas, list):
        raise ConfigError("study.sigmas", "must be a list")
    return StudySection(
        _choice("study", "kind", raw.get("kind", "simulate"), STUDY_KINDS),
        _number("study", "num_paths", raw.get("num_paths", 2000), positive=True, integer=True),
        _string_list("study", "functionals", raw.get("functionals", ["mass", "I"]), FUNCTIONALS),
        _number("study", "batch_size", raw.get("batch_size", 250), positive=True, integer=True),
        tuple(_number("study", "sigmas", s, nonnegative=True) for s in sigmas),
        _number("study", "refinement", raw.get("refinement", 16), positive=True, integer=True),
    )


def _parse_output(raw):
    d = raw.get("dir", "out")
    if not isinstance(d, str) or not d:
        raise ConfigError("output.dir", "must be a nonempty string")
    return OutputSection(d, _string_list("output", "formats", raw.get("formats", ["csv", "json"]), OUTPUT_FORMATS))


_PARSERS = {
    "grid": _parse_grid, "constants": _parse_constants, "approx": _parse_approx, "noise": _parse_noise,
    "initial": _parse_initial, "scheme": _parse_scheme, "study": _parse_study, "output": _parse_output,
}

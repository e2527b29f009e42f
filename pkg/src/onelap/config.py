"""Flat ``key=value`` run configuration with dotted section prefixes.

Example::

    mode = continuation
    geometry.N = 2
    geometry.M = 512
    nonlinearity.family = power
    nonlinearity.gamma = 1
    datum.family = radial-power
    datum.q = 1.25
    solver.schedule = 1.5, 1.3, 1.15, 1.08, 1.04, 1.02

Blank lines and ``#`` comments are ignored. Unknown keys are errors.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field

from . import radial_oracle as ro
from .diagnostics import DEFAULT_K_LIST, DEFAULT_SUBDOMAINS, Thresholds
from .errors import ParameterError
from .mesh import RadialMesh, assemble_mesh
from .nonlinearity import DatumSpec, NonlinearitySpec
from .plap_solver import DEFAULT_SCHEDULE, DiagnosticsConfig, SolverConfig

MODES = ("oracle-check", "solve", "continuation", "sweep", "dualnorm")
EXAMPLES = ("power", "flat", "nonunique")


class ConfigError(ParameterError):
    """The configuration text or one of its values is invalid."""


@dataclass(frozen=True)
class GeometrySection:
    N: int = 2
    R: float = 1.0
    M: int = 512
    grading: str = "uniform"
    stretch: float = 3.0


@dataclass(frozen=True)
class NonlinearitySection:
    family: str = "power"
    c: float = 1.0
    s1: float = 1.0
    gamma: float = 1.0
    s_tilde: typing.Optional[float] = None
    m_floor: typing.Optional[float] = None
    table: typing.Optional[str] = None


@dataclass(frozen=True)
class DatumSection:
    family: str = "radial-power"
    q: typing.Optional[float] = 1.25
    rho: typing.Optional[float] = None
    scale: float = 1.0
    table: typing.Optional[str] = None


@dataclass(frozen=True)
class SolverSection:
    epsilon_reg: float = 1e-6
    theta: float = 0.5
    tol_outer: float = 1e-9
    tol_inner: float = 1e-10
    maxit_outer: int = 200
    maxit_inner: int = 200
    schedule: typing.Tuple[float, ...] = DEFAULT_SCHEDULE
    method: str = "newton"
    p: float = 1.5


@dataclass(frozen=True)
class DiagnosticsSection:
    k_list: typing.Tuple[float, ...] = DEFAULT_K_LIST
    subdomains: typing.Tuple[float, ...] = DEFAULT_SUBDOMAINS
    growth_factor: float = 2.0
    deadcore_eps: float = 1e-3
    area_frac: float = 0.05
    area_stability: float = 0.25
    trend_tol: float = 0.1
    trend_k: float = 5.0
    z_bound: typing.Optional[float] = None


@dataclass(frozen=True)
class OracleSection:
    example: str = "power"
    k: float = 5.0
    tol: float = 1e-9


@dataclass(frozen=True)
class DualnormSection:
    target: str = "oracle"


@dataclass(frozen=True)
class SweepSection:
    key: typing.Optional[str] = None
    values: typing.Tuple[str, ...] = ()
    mode: str = "continuation"


@dataclass(frozen=True)
class OutputSection:
    dir: str = "out"
    plotdata: bool = True


SECTIONS = {
    "geometry": GeometrySection,
    "nonlinearity": NonlinearitySection,
    "datum": DatumSection,
    "solver": SolverSection,
    "diagnostics": DiagnosticsSection,
    "oracle": OracleSection,
    "dualnorm": DualnormSection,
    "sweep": SweepSection,
    "output": OutputSection,
}


@dataclass(frozen=True)
class RunConfig:
    mode: str = "continuation"
    geometry: GeometrySection = field(default_factory=GeometrySection)
    nonlinearity: NonlinearitySection = field(default_factory=NonlinearitySection)
    datum: DatumSection = field(default_factory=DatumSection)
    solver: SolverSection = field(default_factory=SolverSection)
    diagnostics: DiagnosticsSection = field(default_factory=DiagnosticsSection)
    oracle: OracleSection = field(default_factory=OracleSection)
    dualnorm: DualnormSection = field(default_factory=DualnormSection)
    sweep: SweepSection = field(default_factory=SweepSection)
    output: OutputSection = field(default_factory=OutputSection)

    def with_value(self, key, text):
        """Copy with one dotted key replaced by the parsed ``text``."""
        if key == "mode":
            return dataclasses.replace(self, mode=_parse_value(str, text, key))
        section, _, name = key.partition(".")
        if section not in SECTIONS or not name:
            raise ConfigError(f"unknown key {key!r}")
        block = getattr(self, section)
        hints = typing.get_type_hints(type(block))
        if name not in hints:
            raise ConfigError(f"unknown key {key!r}")
        value = _parse_value(hints[name], text, key)
        return dataclasses.replace(self, **{section: dataclasses.replace(block, **{name: value})})

    # builders -------------------------------------------------------------

    def nonlinearity_spec(self) -> NonlinearitySpec:
        nl = self.nonlinearity
        kw = dict(c=nl.c, s1=nl.s1, gamma=nl.gamma, s_tilde=nl.s_tilde, m_floor=nl.m_floor)
        if nl.family == "tabulated":
            if nl.table is None:
                raise ConfigError("nonlinearity.table is required for the tabulated family")
            return NonlinearitySpec.from_table_file(nl.table, **kw)
        return NonlinearitySpec(nl.family, **kw)

    def datum_spec(self) -> DatumSpec:
        d = self.datum
        if d.family == "tabulated":
            if d.table is None:
                raise ConfigError("datum.table is required for the tabulated family")
            spec = DatumSpec.from_table_file(d.table, scale=d.scale)
        else:
            spec = DatumSpec(d.family, q=d.q, rho=d.rho, scale=d.scale)
        spec.check_geometry(self.geometry.N, self.geometry.R)
        return spec

    def mesh(self) -> RadialMesh:
        g = self.geometry
        return assemble_mesh(g.N, g.R, g.M, g.grading, g.stretch)

    def solver_config(self) -> SolverConfig:
        s = self.solver
        return SolverConfig(
            epsilon_reg=s.epsilon_reg,
            theta=s.theta,
            tol_outer=s.tol_outer,
            tol_inner=s.tol_inner,
            maxit_outer=s.maxit_outer,
            maxit_inner=s.maxit_inner,
            schedule=s.schedule,
            method=s.method,
        )

    def diagnostics_config(self) -> DiagnosticsConfig:
        d = self.diagnostics
        th = Thresholds(d.growth_factor, d.deadcore_eps, d.area_frac, d.area_stability, d.trend_tol, d.trend_k)
        return DiagnosticsConfig(tuple(d.k_list), tuple(d.subdomains), th)

    def validate(self):
        """Raise :class:`ConfigError` (or a parameter error) naming the first violated precondition."""
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        mode = self.sweep.mode if self.mode == "sweep" else self.mode
        if self.mode == "sweep":
            if mode not in ("oracle-check", "solve", "continuation", "dualnorm"):
                raise ConfigError(f"sweep.mode must name a single-run mode, got {mode!r}")
            if not self.sweep.key or not self.sweep.values:
                raise ConfigError("sweep needs sweep.key and sweep.values")
            for v in self.sweep.values:
                self.with_value(self.sweep.key, v)
        self.mesh()
        if mode in ("oracle-check", "dualnorm") and (mode == "oracle-check" or self.dualnorm.target == "oracle"):
            self._validate_oracle()
        if mode == "dualnorm" and self.dualnorm.target not in ("oracle", "datum"):
            raise ConfigError(f"dualnorm.target must be 'oracle' or 'datum', got {self.dualnorm.target!r}")
        if mode in ("solve", "continuation") or (mode == "dualnorm" and self.dualnorm.target == "datum"):
            self.nonlinearity_spec()
            self.datum_spec()
            self.solver_config()
            self.diagnostics_config()
        if mode == "solve" and not 1 < self.solver.p < 2:
            raise ConfigError(f"solver.p must lie in (1, 2), got {self.solver.p}")

    def _validate_oracle(self):
        ex = self.oracle.example
        if ex not in EXAMPLES:
            raise ConfigError(f"oracle.example must be one of {EXAMPLES}, got {ex!r}")
        oracle_solutions(self)


def oracle_solutions(cfg: RunConfig):
    """Closed-form solutions named by ``oracle.example`` with the run's parameters."""
    g, nl, d = cfg.geometry, cfg.nonlinearity, cfg.datum
    ex = cfg.oracle.example
    if ex == "power":
        if d.q is None:
            raise ConfigError("datum.q is required for the power example")
        return [ro.example_power(g.N, d.q, nl.gamma, g.R)]
    if ex == "flat":
        if d.rho is None:
            raise ConfigError("datum.rho is required for the flat example")
        return [ro.example_flat(g.N, d.rho, g.R)]
    if d.q is None or d.rho is None:
        raise ConfigError("datum.q and datum.rho are required for the nonunique example")
    return list(ro.example_nonunique(g.N, d.q, d.rho, g.R))


# parsing and formatting --------------------------------------------------


def _parse_scalar(tp, text, key):
    text = text.strip()
    try:
        if tp is bool:
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(text)
        if tp is int:
            return int(text)
        if tp is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(f"{key}: cannot read {text!r} as {tp.__name__}") from None


def _parse_value(tp, text, key):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union and type(None) in args:
        if text.strip().lower() in ("", "none"):
            return None
        inner = next(a for a in args if a is not type(None))
        return _parse_value(inner, text, key)
    if origin is tuple:
        items = [t for t in (s.strip() for s in text.split(",")) if t]
        return tuple(_parse_scalar(args[0], t, key) for t in items)
    return _parse_scalar(tp, text, key)


def _format_value(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    return str(value)


def parse_config(text: str) -> RunConfig:
    cfg = RunConfig()
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw.strip()!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        seen.add(key)
        cfg = cfg.with_value(key, value)
    return cfg


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def dump_config(cfg: RunConfig) -> str:
    """Every key of ``cfg`` in canonical form; :func:`parse_config` reads it back unchanged."""
    lines = [f"mode = {cfg.mode}"]
    for name in SECTIONS:
        block = getattr(cfg, name)
        for f in dataclasses.fields(block):
            lines.append(f"{name}.{f.name} = {_format_value(getattr(block, f.name))}")
    return "\n".join(lines) + "\n"

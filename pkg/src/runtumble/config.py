"""Run configuration: a sectioned key = value text file.

Example::

    [model]
    type = lattice
    lambda = 2
    kappa = 1
    gamma = 4

    [grids]
    alpha = linspace(-3, 3, 41)
    q = 0, 0.5, 1.5
    z = 0.5, 1

A lattice model without [kernel]/[velocities] sections is the one-dimensional
two-state model (velocities +-1, unit flip rates, nearest-neighbour walk at
rate 2 kappa). General models list the kernel as ``z = p`` lines, the
velocities as ``name = v1, ..., vd`` and the flip rates as
``from, to = rate`` (all pairs at rate 1 if [flips] is omitted).
"""
from __future__ import annotations

import configparser
import re
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .model import (
    ContinuumModel,
    JumpKernel,
    LatticeModel,
    ModelError,
    VelocityChain,
    build_1d_two_state,
    nearest_neighbor_kernel,
)

__all__ = [
    "ConfigError",
    "ModelSpec",
    "Grids",
    "Simulation",
    "Tolerances",
    "VerifySettings",
    "RunConfig",
    "parse_config",
    "load_config",
    "dump_config",
    "with_overrides",
]


class ConfigError(ValueError):
    """Invalid configuration, anchored to a line of the source text when possible."""

    def __init__(self, message: str, line: int | None = None, source: str = "<config>"):
        self.line = line
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


@dataclass(frozen=True)
class ModelSpec:
    type: str = "lattice"  # lattice | continuum
    lam: float = 2.0
    kappa: float = 1.0
    gamma: float = 4.0
    E: float = 0.0
    kernel_rate: float | None = None  # default 1 for an explicit kernel
    kernel: tuple = ()  # ((z tuple, p), ...)
    velocities: tuple = ()  # ((name, v tuple), ...)
    flips: tuple = ()  # ((from, to, rate), ...)

    def build(self) -> LatticeModel | ContinuumModel:
        if self.type == "continuum":
            return ContinuumModel(self.lam, self.kappa, self.gamma, self.E)
        if self.E != 0:
            raise ModelError("an external field E is only defined for the continuum model")
        if not self.kernel and not self.velocities:
            if self.kernel_rate is not None:
                raise ModelError("kernel_rate needs an explicit [kernel]")
            return build_1d_two_state(self.lam, self.kappa, self.gamma)
        if not self.velocities:
            raise ModelError("a [kernel] section needs a [velocities] section")
        names = [n for n, _ in self.velocities]
        V = np.array([v for _, v in self.velocities])
        d = V.shape[1]
        if self.kernel:
            kernel = JumpKernel(np.array([z for z, _ in self.kernel]), np.array([p for _, p in self.kernel]))
        else:
            kernel = nearest_neighbor_kernel(d)
        if self.flips:
            index = {n: i for i, n in enumerate(names)}
            R = np.zeros((len(names), len(names)))
            for a, b, r in self.flips:
                R[index[a], index[b]] = r
            chain = VelocityChain(V, R)
        else:
            chain = VelocityChain.uniform(V)
        rate = 1.0 if self.kernel_rate is None else self.kernel_rate
        return LatticeModel(self.lam, self.kappa, self.gamma, kernel, chain, kernel_rate=rate)


@dataclass(frozen=True)
class Grids:
    alpha: tuple = tuple(np.linspace(-3, 3, 41).tolist())
    q: tuple = (0.0, 0.5, 1.0, 2.0)
    z: tuple = (0.5, 1.0, 2.0)
    x: tuple = tuple(np.linspace(-2, 2, 21).tolist())
    gamma: tuple = (1.0, 10.0, 100.0, 1000.0)
    epsilon: tuple = (0.1, 0.05, 0.025)
    scaling_q: float = 1.0
    scaling_z: float = 1.0


@dataclass(frozen=True)
class Simulation:
    t: float = 100.0
    n: int = 100_000
    seed: int = 0
    threads: int = 1
    clt_t: float = 1000.0
    clt_n: int = 10_000
    scgf_alpha: tuple = ()
    scgf_t: float = 20.0
    scgf_n: int = 100_000
    endpoints: bool = False


@dataclass(frozen=True)
class Tolerances:
    closed_spectral: float = 1e-12
    spectral_variational: float = 1e-8
    diffusion_rel: float = 1e-6
    mc_stderr: float = 4.0
    matrix_exponential: float = 1e-10
    dirichlet: float = 1e-12
    dv_convex: float = 1e-8
    dv_stationary: float = 1e-10
    fk_stderr: float = 3.0
    min_order: float = 1.0
    young: float = 1e-10
    rate_at_mean: float = 1e-12
    ks_level: float = 0.01


@dataclass(frozen=True)
class VerifySettings:
    seed: int = 2024
    random_triples: int = 25
    random_models: int = 10
    mc_t: float = 100.0
    mc_n: int = 100_000
    fk_t: float = 200.0
    fk_n: int = 100_000
    clt_t: float = 1000.0
    clt_n: int = 10_000
    continuum_epsilon: tuple = (0.2, 0.1, 0.05, 0.025)
    gammas: tuple = (1.0, 10.0, 100.0, 1000.0)
    # per-alpha cross-method records for the configured model
    record_alpha: tuple = (-0.5, 0.25, 0.5)
    record_fk_t: float = 50.0
    record_fk_n: int = 20_000


@dataclass(frozen=True)
class RunConfig:
    model: ModelSpec = field(default_factory=ModelSpec)
    grids: Grids = field(default_factory=Grids)
    simulation: Simulation = field(default_factory=Simulation)
    tolerances: Tolerances = field(default_factory=Tolerances)
    verify: VerifySettings = field(default_factory=VerifySettings)
    output: str = "out"


# --- parsing ---------------------------------------------------------------------------

_MODEL_KEYS = {"type", "lambda", "kappa", "gamma", "e", "kernel_rate"}
_SECTIONS = ("model", "kernel", "velocities", "flips", "grids", "simulation", "tolerances", "verify", "output")
_LINSPACE = re.compile(r"^linspace\(\s*([^,]+),\s*([^,]+),\s*(\d+)\s*\)$")


def _line_index(text: str) -> dict:
    """(section, key) -> 1-based line number, plus (section, None) for headers."""
    index, section = {}, None
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            index.setdefault((section, None), no)
        elif "=" in line and section is not None:
            index.setdefault((section, line.split("=", 1)[0].strip().lower()), no)
    return index


def _number_list(value: str) -> tuple:
    m = _LINSPACE.match(value.strip())
    if m:
        return tuple(np.linspace(float(m[1]), float(m[2]), int(m[3])).tolist())
    return tuple(float(v) for v in value.split(",") if v.strip())


def _int_vector(value: str) -> tuple:
    return tuple(int(v) for v in value.split(","))


def _typed(cls, name: str, raw: str):
    kind = {f.name: f.type for f in fields(cls)}[name]
    if kind == "tuple":
        return _number_list(raw)
    if kind == "int":
        return int(raw)
    if kind == "bool":
        if raw.strip().lower() not in {"true", "false", "yes", "no", "1", "0"}:
            raise ValueError(f"expected a boolean, got {raw!r}")
        return raw.strip().lower() in {"true", "yes", "1"}
    return float(raw)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    index = _line_index(text)

    def err(msg, section=None, key=None):
        return ConfigError(msg, index.get((section, key), index.get((section, None))), source)

    cp = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#",), interpolation=None)
    cp.optionxform = str  # velocity names are case-sensitive
    try:
        cp.read_string(text, source=source)
    except configparser.DuplicateSectionError as e:
        raise ConfigError(f"duplicate section [{e.section}]", e.lineno, source) from None
    except configparser.DuplicateOptionError as e:
        raise ConfigError(f"duplicate key {e.option!r} in [{e.section}]", e.lineno, source) from None
    except configparser.MissingSectionHeaderError as e:
        raise ConfigError("key before any [section] header", e.lineno, source) from None
    except configparser.Error as e:
        raise ConfigError(str(e).splitlines()[0], None, source) from None

    for sec in cp.sections():
        if sec.lower() not in _SECTIONS:
            raise err(f"unknown section [{sec}]", sec.lower())

    def section(name):
        for sec in cp.sections():
            if sec.lower() == name:
                return cp[sec]
        return None

    # model
    m = section("model")
    if m is None:
        raise ConfigError("missing [model] section", None, source)
    spec = {}
    for key, raw in m.items():
        k = key.lower()
        if k not in _MODEL_KEYS:
            raise err(f"unknown key {key!r} in [model]", "model", k)
        try:
            if k == "type":
                if raw.strip() not in {"lattice", "continuum"}:
                    raise ValueError("type must be 'lattice' or 'continuum'")
                spec["type"] = raw.strip()
            else:
                spec[{"lambda": "lam", "e": "E"}.get(k, k)] = float(raw)
        except ValueError as e:
            raise err(f"[model] {key}: {e}", "model", k) from None

    def entries(name):
        sec = section(name)
        return [] if sec is None else list(sec.items())

    try:
        kernel = []
        for key, raw in entries("kernel"):
            kernel.append((_int_vector(key), float(raw)))
        velocities = []
        for key, raw in entries("velocities"):
            velocities.append((key, _int_vector(raw)))
        names = {n for n, _ in velocities}
        flips = []
        for key, raw in entries("flips"):
            parts = [p.strip() for p in key.split(",")]
            if len(parts) != 2 or not set(parts) <= names:
                raise ConfigError(f"flip key {key!r} must be 'from, to' with declared velocity names",
                                  index.get(("flips", key.lower())), source)
            flips.append((parts[0], parts[1], float(raw)))
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"malformed kernel/velocity entry: {e}", None, source) from None
    if kernel or velocities or flips:
        if spec.get("type", "lattice") == "continuum":
            raise err("continuum models take no [kernel]/[velocities]/[flips]", "model")
    spec.update(kernel=tuple(kernel), velocities=tuple(velocities), flips=tuple(flips))
    model = ModelSpec(**spec)

    def dataclass_section(name, cls):
        sec = section(name)
        values = {}
        if sec is not None:
            allowed = {f.name for f in fields(cls)}
            for key, raw in sec.items():
                k = key.lower()
                if k not in allowed:
                    raise err(f"unknown key {key!r} in [{name}]", name, k)
                try:
                    values[k] = _typed(cls, k, raw)
                except ValueError as e:
                    raise err(f"[{name}] {key}: {e}", name, k) from None
        return cls(**values)

    output = "out"
    sec = section("output")
    if sec is not None:
        for key, raw in sec.items():
            if key.lower() != "dir":
                raise err(f"unknown key {key!r} in [output]", "output", key.lower())
            output = raw.strip()

    cfg = RunConfig(
        model,
        dataclass_section("grids", Grids),
        dataclass_section("simulation", Simulation),
        dataclass_section("tolerances", Tolerances),
        dataclass_section("verify", VerifySettings),
        output,
    )
    try:
        cfg.model.build()
    except (ModelError, ValueError) as e:
        raise err(f"invalid model: {e}", "model") from None
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", None, str(path)) from None
    return parse_config(text, str(path))


# --- serialization ----------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: RunConfig) -> str:
    """Text that parses back to ``cfg``."""
    m = cfg.model
    lines = ["[model]", f"type = {m.type}", f"lambda = {m.lam!r}", f"kappa = {m.kappa!r}",
             f"gamma = {m.gamma!r}"]
    if m.type == "continuum":
        lines.append(f"E = {m.E!r}")
    if m.kernel_rate is not None:
        lines.append(f"kernel_rate = {m.kernel_rate!r}")
    if m.kernel:
        lines += ["", "[kernel]"] + [f"{', '.join(map(str, z))} = {p!r}" for z, p in m.kernel]
    if m.velocities:
        lines += ["", "[velocities]"] + [f"{n} = {', '.join(map(str, v))}" for n, v in m.velocities]
    if m.flips:
        lines += ["", "[flips]"] + [f"{a}, {b} = {r!r}" for a, b, r in m.flips]
    for name in ("grids", "simulation", "tolerances", "verify"):
        lines += ["", f"[{name}]"]
        for k, v in asdict(getattr(cfg, name)).items():
            if isinstance(v, list):
                v = tuple(v)
            if v == ():
                continue  # an empty list is the default and has no text form
            lines.append(f"{k} = {_fmt(v)}")
    lines += ["", "[output]", f"dir = {cfg.output}", ""]
    return "\n".join(lines)


def with_overrides(cfg: RunConfig, *, out=None, threads=None, seed=None) -> RunConfig:
    """Apply command-line flags on top of the file values."""
    sim, ver = cfg.simulation, cfg.verify
    if threads is not None:
        sim = replace(sim, threads=int(threads))
    if seed is not None:
        sim = replace(sim, seed=int(seed))
        ver = replace(ver, seed=int(seed))
    return replace(cfg, simulation=sim, verify=ver, output=cfg.output if out is None else str(out))

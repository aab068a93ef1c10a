"""Run configuration: strict TOML parsing with line numbers in every error."""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib as toml
except ModuleNotFoundError:  # Python < 3.11
    import tomli as toml

from ..choquard import ChoquardConfig
from ..einstein_dirac.continuation import SolverConfig
from ..radial import MIN_NODES, default_r_max

EMIT_CHOICES = ("profiles", "branch", "certificates", "matrices")
DEFAULT_EMIT = ("profiles", "branch", "certificates")


class ConfigError(ValueError):
    def __init__(self, message, line=None):
        where = f" (line {line})" if line is not None else ""
        super().__init__(message + where)
        self.line = line


@dataclass(frozen=True)
class GridSpec:
    n_nodes: int = 2000
    r_max: float | str = "auto"
    grading_exponent: float = 2.0


@dataclass(frozen=True)
class CertificateSpec:
    refinements: tuple = (500, 1000, 2000)
    fd_directions: int = 5
    fd_eps_fractions: tuple = (0.0, 0.01, 0.05)
    scaling_masses: tuple = (0.5, 1.0, 2.0)
    svd_nodes: int = 500
    matrix_nodes: int = 200
    seed: int = 20240101


@dataclass(frozen=True)
class RunConfig:
    m: float = 0.5
    grid: GridSpec = field(default_factory=GridSpec)
    choquard: ChoquardConfig = field(default_factory=ChoquardConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    certificates: CertificateSpec = field(default_factory=CertificateSpec)
    eps_max: float | str = "0.1m"
    outputs: str = "out"
    emit: tuple = DEFAULT_EMIT

    @property
    def r_max(self) -> float:
        r = self.grid.r_max
        return default_r_max(self.m) if r == "auto" else float(r)

    @property
    def eps_max_value(self) -> float:
        return resolve_mass(self.eps_max, self.m)


SECTIONS = {"grid": GridSpec, "choquard": ChoquardConfig, "solver": SolverConfig,
            "certificates": CertificateSpec}
TOP_KEYS = ("m", "eps_max", "outputs", "emit")


def resolve_mass(value, m: float) -> float:
    """A mass given as a number or as a multiple of m ("0.1m")."""
    if isinstance(value, str):
        s = value.strip().replace(" ", "")
        match = re.fullmatch(r"([0-9.eE+-]*)\*?m", s)
        if not match:
            raise ValueError(f"cannot read {value!r} as a mass (use a number or e.g. '0.1m')")
        coef = match.group(1)
        return (float(coef) if coef else 1.0) * m
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"{value!r} is not a mass")
    return float(value)


def _key_lines(text: str) -> dict:
    """Map (table, key) to the line where the key is assigned."""
    out = {}
    table = ""
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head = re.fullmatch(r"\[\s*([A-Za-z0-9_.\-]+)\s*\]", line)
        if head:
            table = head.group(1)
            out.setdefault((table, None), i)
            continue
        kv = re.match(r"([A-Za-z0-9_.\-]+)\s*=", line)
        if kv:
            parts = kv.group(1).split(".")
            tbl = ".".join([table] + parts[:-1]) if table else ".".join(parts[:-1])
            out.setdefault((tbl, parts[-1]), i)
    return out


def _coerce(name: str, value, default, line):
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be true or false", line)
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name} must be an integer", line)
        return value
    if isinstance(default, float) or default is None:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name} must be a number", line)
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigError(f"{name} must be a list", line)
        return tuple(value)
    return value


def _build_section(name, cls, table: dict, lines: dict):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in table.items():
        line = lines.get((name, key))
        if key not in fields:
            raise ConfigError(f"unknown key '{name}.{key}'", line)
        if name == "grid" and key == "r_max":
            if value != "auto" and (isinstance(value, bool) or not isinstance(value, (int, float))):
                raise ConfigError("grid.r_max must be a positive number or \"auto\"", line)
            kwargs[key] = value if value == "auto" else float(value)
            continue
        kwargs[key] = _coerce(f"{name}.{key}", value, getattr(cls(), key), line)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        line = lines.get((name, None))
        raise ConfigError(f"invalid [{name}] settings: {exc}", line) from exc


def parse_config_text(text: str) -> RunConfig:
    try:
        data = toml.loads(text)
    except toml.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"syntax error: {exc}", int(m.group(1)) if m else None) from exc
    lines = _key_lines(text)
    kwargs = {}
    for key, value in data.items():
        line = lines.get(("", key)) or lines.get((key, None))
        if key in SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"'{key}' must be a table", line)
            kwargs[key] = _build_section(key, SECTIONS[key], value, lines)
        elif key in TOP_KEYS:
            kwargs[key] = value
        else:
            raise ConfigError(f"unknown key '{key}'", line)
    if "m" not in kwargs:
        raise ConfigError("missing required key 'm'")
    m = kwargs["m"]
    line = lines.get(("", "m"))
    if isinstance(m, bool) or not isinstance(m, (int, float)) or not m > 0:
        raise ConfigError("m must be a positive number", line)
    kwargs["m"] = float(m)
    if "eps_max" in kwargs:
        line = lines.get(("", "eps_max"))
        try:
            e = resolve_mass(kwargs["eps_max"], kwargs["m"])
        except ValueError as exc:
            raise ConfigError(str(exc), line) from exc
        if not 0 < e < kwargs["m"]:
            raise ConfigError(f"eps_max must lie in (0, m), got {e}", line)
    if "outputs" in kwargs and not isinstance(kwargs["outputs"], str):
        raise ConfigError("outputs must be a path string", lines.get(("", "outputs")))
    if "emit" in kwargs:
        line = lines.get(("", "emit"))
        emit = kwargs["emit"]
        if not isinstance(emit, list) or any(e not in EMIT_CHOICES for e in emit):
            raise ConfigError(f"emit must be a list drawn from {list(EMIT_CHOICES)}", line)
        kwargs["emit"] = tuple(emit)
    cfg = RunConfig(**kwargs)
    _validate(cfg, lines)
    return cfg


def _validate(cfg: RunConfig, lines: dict) -> None:
    g = cfg.grid
    if g.n_nodes < MIN_NODES:
        raise ConfigError(f"grid.n_nodes must be >= {MIN_NODES}, got {g.n_nodes}", lines.get(("grid", "n_nodes")))
    if g.grading_exponent < 1:
        raise ConfigError("grid.grading_exponent must be >= 1", lines.get(("grid", "grading_exponent")))
    if g.r_max != "auto" and not g.r_max > 0:
        raise ConfigError("grid.r_max must be positive", lines.get(("grid", "r_max")))
    if cfg.r_max * (2 * cfg.m) ** 0.5 < 20:
        raise ConfigError("grid.r_max too small: need r_max*sqrt(2m) >= 20", lines.get(("grid", "r_max")))
    c = cfg.certificates
    if any((not isinstance(n, int)) or n < MIN_NODES for n in c.refinements) or not c.refinements:
        raise ConfigError(f"certificates.refinements must be integers >= {MIN_NODES}",
                          lines.get(("certificates", "refinements")))
    if any(not 0 <= f < 1 for f in c.fd_eps_fractions):
        raise ConfigError("certificates.fd_eps_fractions must lie in [0, 1)",
                          lines.get(("certificates", "fd_eps_fractions")))
    if any(not mm > 0 for mm in c.scaling_masses):
        raise ConfigError("certificates.scaling_masses must be positive",
                          lines.get(("certificates", "scaling_masses")))
    if c.fd_directions < 1 or c.svd_nodes < MIN_NODES or c.matrix_nodes < MIN_NODES:
        raise ConfigError("certificates sizes out of range", lines.get(("certificates", None)))


def parse_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {p}") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config file {p}: {exc}") from exc
    return parse_config_text(text)


def describe_defaults() -> str:
    """Text block listing every key and its default, for --help."""
    rows = ["top level:",
            "  m                  (required) fermion mass",
            "  eps_max = \"0.1m\"   largest eps = m - omega (number or multiple of m)",
            "  outputs = \"out\"    output directory",
            f"  emit = {list(DEFAULT_EMIT)}  subset of {list(EMIT_CHOICES)}"]
    for name, cls in SECTIONS.items():
        rows.append(f"[{name}]")
        inst = cls()
        for f in dataclasses.fields(cls):
            rows.append(f"  {f.name} = {getattr(inst, f.name)!r}")
    return "\n".join(rows)

"""Line-oriented ``section.key = value`` configuration.

``#`` starts a comment, keys are case sensitive, arrays are comma separated
and numeric values may be written as a ratio such as ``1.4/50``. Unknown
keys are rejected.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, fields, replace

from mgar_topopt.model import check_divisibility, ModelError

BOUNDARY_PRESETS = ("auto", "mid-left", "back-center", "back-center-quarter")
MAX_BASIS = 10


class ConfigError(ValueError):
    """Bad configuration; ``exit code 1`` territory for the CLI."""


def _number(text: str) -> float:
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def _int(text: str) -> int:
    value = _number(text)
    if not float(value).is_integer():
        raise ValueError(f"expected an integer, got {text!r}")
    return int(value)


def _bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected true/false, got {text!r}")


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(_int(t.strip()) for t in text.split(","))


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(_number(t.strip()) for t in text.split(","))


def _str(text: str) -> str:
    return text


# config key -> (attribute, parser)
SCHEMA = {
    "mesh.dim": ("dim", _int),
    "mesh.nel": ("nel", _int_list),
    "material.k0": ("k0", _number),
    "material.kmin": ("kmin", _number),
    "material.penal": ("penal", _number),
    "source.uniform": ("source_uniform", _number),
    "source.quadrants": ("source_quadrants", _float_list),
    "source.file": ("source_file", _str),
    "boundary.preset": ("boundary_preset", _str),
    "boundary.file": ("boundary_file", _str),
    "optimizer.volfrac": ("volfrac", _number),
    "optimizer.max_cycles": ("max_cycles", _int),
    "optimizer.move": ("move", _number),
    "optimizer.damping": ("damping", _number),
    "optimizer.vol_tol": ("vol_tol", _number),
    "optimizer.change_tol": ("change_tol", _number),
    "filter.r_min": ("r_min", _number),
    "filter.alpha": ("alpha", _number),
    "filter.lp": ("lp", _int),
    "filter.lp_fraction": ("lp_fraction", _number),
    "filter.rebuild_every_cycle": ("rebuild_every_cycle", _bool),
    "solver.method": ("method", _str),
    "solver.nl": ("nl", _int),
    "solver.eps2": ("eps2", _number),
    "solver.cg_max": ("cg_max", _int),
    "solver.omega_jac": ("omega_jac", _number),
    "solver.nu_pre": ("nu_pre", _int),
    "solver.nu_post": ("nu_post", _int),
    "reanalysis.eps1": ("eps1", _number),
    "reanalysis.m_basis": ("m_basis", _int),
    "reanalysis.n_on": ("n_on", _int),
    "reanalysis.n_on_fraction": ("n_on_fraction", _number),
    "reanalysis.basis_start": ("basis_start", _str),
    "postprocess.enabled": ("post_enabled", _bool),
    "postprocess.subdiv": ("post_subdiv", _int),
    "postprocess.r_proj": ("post_r_proj", _number),
    "output.dir": ("output_dir", _str),
    "output.record_wall_time": ("record_wall_time", _bool),
}
KEY_OF = {attr: key for key, (attr, _) in SCHEMA.items()}


@dataclass(frozen=True)
class ParsedConfig:
    dim: int = 2
    nel: tuple[int, ...] | None = None
    k0: float = 1.0
    kmin: float = 1e-3
    penal: float = 3.0
    source_uniform: float = 1e-4
    source_quadrants: tuple[float, ...] | None = None
    source_file: str | None = None
    boundary_preset: str = "auto"
    boundary_file: str | None = None
    volfrac: float = 0.5
    max_cycles: int = 300
    move: float = 0.2
    damping: float = 0.5
    vol_tol: float = 1e-4
    change_tol: float | None = None
    r_min: float = 3.0
    alpha: float = 1.4 / 50
    lp: int | None = None
    lp_fraction: float = 5 / 6
    rebuild_every_cycle: bool = False
    method: str = "mgar"
    nl: int = 3
    eps2: float = 1e-6
    cg_max: int | None = None
    omega_jac: float = 0.6
    nu_pre: int = 1
    nu_post: int = 1
    eps1: float = 0.5
    m_basis: int = 2
    n_on: int | None = None
    n_on_fraction: float = 2 / 15
    basis_start: str = "previous"  # V-cycle initial guess for basis vectors: previous | zero
    post_enabled: bool = True
    post_subdiv: int = 4
    post_r_proj: float | None = None
    output_dir: str = "out"
    record_wall_time: bool = False

    def __post_init__(self):
        if self.nel is None:
            object.__setattr__(self, "nel", (96, 96) if self.dim == 2 else (32, 32, 64))
        else:
            object.__setattr__(self, "nel", tuple(int(n) for n in self.nel))
        if self.source_quadrants is not None:
            object.__setattr__(self, "source_quadrants", tuple(self.source_quadrants))

    # derived knobs; absolute overrides win over fractions
    @property
    def lp_cycles(self) -> int:
        if self.lp is not None:
            return self.lp
        return math.floor(self.lp_fraction * self.max_cycles + 1e-9)

    @property
    def n_on_cycles(self) -> int:
        if self.n_on is not None:
            return self.n_on
        return math.ceil(self.n_on_fraction * self.max_cycles - 1e-9)

    @property
    def cg_max_iters(self) -> int:
        if self.cg_max is not None:
            return self.cg_max
        return 200 if self.dim == 2 else 50

    @property
    def domain_length(self) -> int:
        return max(self.nel)

    @property
    def r_proj(self) -> float:
        return self.r_min if self.post_r_proj is None else self.post_r_proj

    def with_overrides(self, **changes) -> "ParsedConfig":
        cfg = replace(self, **changes)
        validate(cfg)
        return cfg

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            lines.append(f"{KEY_OF[f.name]} = {_format(value)}")
        return "\n".join(lines) + "\n"


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    return str(value)


def _fail(key: str, message: str):
    raise ConfigError(f"{key}: {message}")


def validate(cfg: ParsedConfig) -> None:
    if cfg.dim not in (2, 3):
        _fail("mesh.dim", "must be 2 or 3")
    if len(cfg.nel) != cfg.dim:
        _fail("mesh.nel", f"needs {cfg.dim} entries for mesh.dim = {cfg.dim}")
    if cfg.nl < 2:
        _fail("solver.nl", "coarsening level must be >= 2")
    try:
        check_divisibility(cfg.nel, cfg.nl)
    except ModelError as exc:
        _fail("mesh.nel", f"divisibility rule violated: {exc}")
    if not cfg.k0 > cfg.kmin > 0:
        _fail("material.kmin", "require k0 > kmin > 0")
    if cfg.penal < 1:
        _fail("material.penal", "must be >= 1")
    if cfg.source_uniform < 0:
        _fail("source.uniform", "must be >= 0")
    if cfg.source_quadrants is not None:
        if len(cfg.source_quadrants) != 4:
            _fail("source.quadrants", "needs exactly 4 values")
        if min(cfg.source_quadrants) < 0 or max(cfg.source_quadrants) <= 0:
            _fail("source.quadrants", "values must be >= 0 with at least one > 0")
    elif cfg.source_file is None and cfg.source_uniform <= 0:
        _fail("source.uniform", "must be > 0")
    if cfg.boundary_preset not in BOUNDARY_PRESETS:
        _fail("boundary.preset", f"must be one of {', '.join(BOUNDARY_PRESETS)}")
    if cfg.dim == 2 and cfg.boundary_preset.startswith("back-center"):
        _fail("boundary.preset", "back-center presets are 3D only")
    if cfg.dim == 3 and cfg.boundary_preset == "mid-left":
        _fail("boundary.preset", "mid-left is a 2D preset")
    if not 0 < cfg.volfrac < 1:
        _fail("optimizer.volfrac", "must lie in (0, 1)")
    if cfg.max_cycles < 1:
        _fail("optimizer.max_cycles", "must be >= 1")
    if not 0 <= cfg.move <= 1:
        _fail("optimizer.move", "must lie in [0, 1]")
    if not 0 < cfg.damping <= 1:
        _fail("optimizer.damping", "must lie in (0, 1]")
    if not cfg.vol_tol > 0:
        _fail("optimizer.vol_tol", "must be > 0")
    if cfg.change_tol is not None and cfg.change_tol < 0:
        _fail("optimizer.change_tol", "must be >= 0")
    if cfg.r_min < 1:
        _fail("filter.r_min", "must be >= 1 element")
    if not cfg.alpha > 0:
        _fail("filter.alpha", "must be > 0")
    if cfg.lp is not None and cfg.lp < 0:
        _fail("filter.lp", "must be >= 0")
    if not 0 < cfg.lp_fraction <= 1:
        _fail("filter.lp_fraction", "must lie in (0, 1]")
    if cfg.method not in ("mgar", "mgcg"):
        _fail("solver.method", "must be mgar or mgcg")
    if not 0 < cfg.eps2 <= cfg.eps1:
        _fail("solver.eps2", "require 0 < eps2 <= reanalysis.eps1")
    if cfg.cg_max is not None and cfg.cg_max < 1:
        _fail("solver.cg_max", "must be >= 1")
    if not 0 < cfg.omega_jac <= 1:
        _fail("solver.omega_jac", "must lie in (0, 1]")
    if cfg.nu_pre < 1 or cfg.nu_post < 1:
        _fail("solver.nu_pre", "smoothing counts must be >= 1")
    if not 1 <= cfg.m_basis <= MAX_BASIS:
        _fail("reanalysis.m_basis", f"must lie in [1, {MAX_BASIS}]")
    if cfg.n_on is not None and cfg.n_on < 0:
        _fail("reanalysis.n_on", "must be >= 0")
    if not 0 <= cfg.n_on_fraction <= 1:
        _fail("reanalysis.n_on_fraction", "must lie in [0, 1]")
    if cfg.basis_start not in ("previous", "zero"):
        _fail("reanalysis.basis_start", "must be previous or zero")
    if cfg.post_subdiv < 1:
        _fail("postprocess.subdiv", "must be >= 1")
    if cfg.post_r_proj is not None and cfg.post_r_proj < 1:
        _fail("postprocess.r_proj", "must be >= 1")


def parse_config(text: str, base_dir: str | None = None) -> ParsedConfig:
    """Parse and validate configuration text.

    Relative ``source.file`` and ``boundary.file`` paths are resolved
    against ``base_dir`` when given.
    """
    values = {}
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} (first on line {seen[key]})")
        if not value:
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        attr, parser = SCHEMA[key]
        try:
            parsed = parser(value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: {key}: {exc}") from None
        if base_dir and attr in ("source_file", "boundary_file") and not os.path.isabs(parsed):
            parsed = os.path.normpath(os.path.join(base_dir, parsed))
        values[attr] = parsed
        seen[key] = lineno
    cfg = ParsedConfig(**values)
    validate(cfg)
    return cfg


def load_config(path: str) -> ParsedConfig:
    with open(path) as fh:
        text = fh.read()
    return parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)))

"""
Run configuration: INI text in, validated pydantic blocks out.

Each INI section is one block. Keys may be dotted to nest
(`weights.gradx_fstar = 3`); in [sweep] dotted keys are config paths to vary.
Values are parsed as JSON when possible and kept as bare strings otherwise.
"""

from __future__ import annotations

import configparser
import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ValidationError, validator

from vfpk.core.errors import ConfigError, KernelError, PotentialError
from vfpk.core.grid import SpatialGrid
from vfpk.core.persistence import load_table
from vfpk.models import potentials
from vfpk.models.kernels import InteractionKernel
from vfpk.models.potentials import ConfinementPotential

MAX_SWEEP_POINTS = 10_000
SWEEP_RESERVED = ("command", "max_points")


class _Block(BaseModel):
    class Config:
        extra = "forbid"
        validate_assignment = True


class RunBlock(_Block):
    seed: int = 0
    output_dir: str = "runs"


class PotentialBlock(_Block):
    family: Literal["quadratic", "power_growth", "log_power", "tabulated"] = "quadratic"
    alpha: float = 2.0
    table: Optional[str] = None

    @validator("alpha")
    def _alpha_positive(cls, v):
        if v <= 0:
            raise ValueError("alpha must be positive")
        return v

    @validator("table", always=True)
    def _table_for_tabulated(cls, v, values):
        if values.get("family") == "tabulated" and not v:
            raise ValueError("tabulated potentials need a table path")
        return v


class KernelBlock(_Block):
    family: Literal["zero", "coulomb", "newton", "riesz", "synchrotron", "lipschitz_table"] = "zero"
    # tables are scaled by strength, which then defaults to 1
    strength: Optional[float] = None
    alpha: float = 0.0
    table: Optional[str] = None

    @validator("strength", always=True)
    def _strength_nonnegative(cls, v, values):
        if v is None:
            return 1.0 if values.get("family") == "lipschitz_table" else 0.0
        if v < 0:
            raise ValueError("strength must be nonnegative")
        return v

    @validator("table", always=True)
    def _table_for_lipschitz(cls, v, values):
        if values.get("family") == "lipschitz_table" and not v:
            raise ValueError("lipschitz_table kernels need a table path")
        return v


class GridBlock(_Block):
    dim: int = 1
    half_width: float = 8.0
    nodes: int = 256

    @validator("dim")
    def _dim_range(cls, v):
        if v not in (1, 2, 3):
            raise ValueError("dim must be 1, 2 or 3")
        return v

    @validator("half_width")
    def _half_width_positive(cls, v):
        if v <= 0:
            raise ValueError("half_width must be positive")
        return v

    @validator("nodes")
    def _enough_nodes(cls, v):
        if v < 3:
            raise ValueError("nodes must be at least 3")
        return v


class VelocityBlock(_Block):
    n_modes: int = 16
    nu: float = 1.0

    @validator("n_modes")
    def _modes_positive(cls, v):
        if v < 1:
            raise ValueError("n_modes must be at least 1")
        return v

    @validator("nu")
    def _nu_nonnegative(cls, v):
        if v < 0:
            raise ValueError("nu must be nonnegative")
        return v


class SteadyBlock(_Block):
    omega: Optional[float] = None
    tol: float = 1e-10
    max_iter: int = 500
    allow_nonpositive: bool = False
    snapshot: Optional[str] = None

    @validator("omega")
    def _omega_range(cls, v):
        if v is not None and not 0 < v <= 1:
            raise ValueError("omega must lie in (0, 1]")
        return v

    @validator("tol")
    def _tol_positive(cls, v):
        if v <= 0:
            raise ValueError("tol must be positive")
        return v

    @validator("max_iter")
    def _max_iter_positive(cls, v):
        if v < 1:
            raise ValueError("max_iter must be at least 1")
        return v


class EvolveBlock(_Block):
    dt: float = 1e-3
    t_end: float = 1.0
    cfl_guard: float = 0.9
    filter_on: bool = False
    output_stride: int = 1
    limiter: Literal["vanleer", "minmod", "none"] = "vanleer"

    @validator("dt")
    def _dt_positive(cls, v):
        if v <= 0:
            raise ValueError("dt must be positive")
        return v

    @validator("t_end")
    def _t_end_nonnegative(cls, v):
        if v < 0:
            raise ValueError("t_end must be nonnegative")
        return v

    @validator("cfl_guard")
    def _guard_range(cls, v):
        if not 0 < v <= 1:
            raise ValueError("cfl_guard must lie in (0, 1]")
        return v

    @validator("output_stride")
    def _stride_positive(cls, v):
        if v < 1:
            raise ValueError("output_stride must be at least 1")
        return v


class DiagnosticsBlock(_Block):
    eps: float = 0.1
    a: float = 0.5 ** 16
    b: float = 0.5 ** 20
    c: float = 0.5 ** 21
    hs_orders: List[float] = []
    weights: Dict[str, float] = {}
    lambda_hat: Optional[float] = None
    fit_columns: List[str] = ["l2_fstar"]
    fit_window: Optional[Tuple[float, float]] = None
    fit_kind: Literal["exponential", "power", "combined"] = "exponential"
    moments: bool = False
    g_functional: bool = False
    dissipation: bool = False

    @validator("eps")
    def _eps_range(cls, v):
        if not 0 < v <= 0.5:
            raise ValueError("eps must lie in (0, 1/2]")
        return v

    @validator("fit_columns", pre=True)
    def _one_or_more_columns(cls, v):
        columns = [v] if isinstance(v, str) else v
        if not columns:
            raise ValueError("fit_columns needs at least one column")
        return columns

    @validator("fit_window")
    def _window_ordered(cls, v):
        if v is not None and not v[0] < v[1]:
            raise ValueError("fit_window must be increasing")
        return v


class ExperimentBlock(_Block):
    perturbation: Literal["none", "bump", "rough", "shifted_gaussian"] = "bump"
    amplitude: float = 1e-2
    center: float = 0.0
    width: float = 1.0
    mean_velocity: float = 0.0
    source: Literal["none", "manufactured"] = "none"
    source_amplitude: float = 0.0
    source_omega: float = 1.0
    source_mode: int = 0
    trials: int = 100
    theta: float = 0.5
    uniqueness_starts: int = 0
    poincare_nodes: Optional[int] = None

    @validator("width")
    def _width_positive(cls, v):
        if v <= 0:
            raise ValueError("width must be positive")
        return v

    @validator("trials")
    def _trials_positive(cls, v):
        if v < 1:
            raise ValueError("trials must be at least 1")
        return v

    @validator("theta")
    def _theta_range(cls, v):
        if not 0 < v < 1:
            raise ValueError("theta must lie in (0, 1)")
        return v


class SweepBlock(_Block):
    command: Literal["steady", "evolve", "linear"] = "evolve"
    max_points: int = MAX_SWEEP_POINTS
    parameters: Dict[str, List[Any]] = {}

    @validator("max_points")
    def _points_capped(cls, v):
        if not 1 <= v <= MAX_SWEEP_POINTS:
            raise ValueError(f"max_points must lie in [1, {MAX_SWEEP_POINTS}]")
        return v


class RunConfig(_Block):
    run: RunBlock = RunBlock()
    potential: PotentialBlock = PotentialBlock()
    kernel: KernelBlock = KernelBlock()
    grid: GridBlock = GridBlock()
    velocity: VelocityBlock = VelocityBlock()
    steady: SteadyBlock = SteadyBlock()
    evolve: EvolveBlock = EvolveBlock()
    diagnostics: DiagnosticsBlock = DiagnosticsBlock()
    experiment: ExperimentBlock = ExperimentBlock()
    sweep: SweepBlock = SweepBlock()


SECTIONS = tuple(RunConfig.__fields__)


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except ValueError:
        return text


def _format_value(value: Any) -> str:
    if isinstance(value, str):
        return value
    return json.dumps(value)


def _nest(target: Dict[str, Any], dotted: str, value: Any, section: str) -> None:
    parts = dotted.split(".")
    node = target
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"{section}.{dotted}", "key is both a value and a table")
        node = child
    node[parts[-1]] = value


def _flatten(prefix: str, value: Any, out: List[Tuple[str, str]]) -> None:
    if isinstance(value, dict) and value:
        for key in sorted(value):
            _flatten(f"{prefix}.{key}" if prefix else key, value[key], out)
    else:
        out.append((prefix, _format_value(value)))


def _error_path(error: ValidationError) -> Tuple[str, str]:
    first = error.errors()[0]
    loc = [str(part) for part in first["loc"]]
    if loc[:2] == ["sweep", "parameters"]:
        loc = ["sweep"] + loc[2:]
    return ".".join(loc), first["msg"]


def _validate(raw: Dict[str, Any]) -> RunConfig:
    try:
        cfg = RunConfig.parse_obj(raw)
    except ValidationError as e:
        path, message = _error_path(e)
        raise ConfigError(path, message) from e
    for path in cfg.sweep.parameters:
        _check_sweep_path(cfg, path)
    return cfg


def _check_sweep_path(cfg: RunConfig, path: str) -> None:
    section, _, key = path.partition(".")
    if section in ("sweep", "run") or section not in SECTIONS or not key:
        raise ConfigError(f"sweep.{path}", "sweep keys must be config paths like kernel.strength")
    if key.split(".")[0] not in type(getattr(cfg, section)).__fields__:
        raise ConfigError(f"sweep.{path}", "unknown config path")


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(source, f"unreadable config: {e.message}") from e

    raw: Dict[str, Any] = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(section, "unknown section")
        block: Dict[str, Any] = {}
        for key, text_value in parser.items(section):
            value = _parse_value(text_value)
            if section == "sweep" and key not in SWEEP_RESERVED:
                values = value if isinstance(value, list) else [value]
                block.setdefault("parameters", {})[key] = values
            else:
                _nest(block, key, value, section)
        raw[section] = block
    return _validate(raw)


def load_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(str(path), f"cannot read config: {e.strerror}") from e
    return parse_config(text, source=str(path))


def dump_config(cfg: RunConfig) -> str:
    lines: List[str] = []
    for section in SECTIONS:
        data = getattr(cfg, section).dict()
        entries: List[Tuple[str, str]] = []
        if section == "sweep":
            parameters = data.pop("parameters")
            for key in sorted(data):
                entries.append((key, _format_value(data[key])))
            for key in sorted(parameters):
                entries.append((key, json.dumps(parameters[key])))
        else:
            for key in sorted(data):
                if data[key] is None:
                    continue
                _flatten(key, data[key], entries)
        lines.append(f"[{section}]")
        lines.extend(f"{key} = {value}" for key, value in entries)
        lines.append("")
    return "\n".join(lines)


def config_dict(cfg: RunConfig) -> Dict[str, Any]:
    return json.loads(cfg.json())


def with_overrides(cfg: RunConfig, overrides: Dict[str, Any]) -> RunConfig:
    """Copy of cfg with dotted paths replaced, revalidated as a whole."""
    raw = config_dict(cfg)
    for path, value in overrides.items():
        section, _, key = path.partition(".")
        if section not in raw or not key:
            raise ConfigError(path, "unknown config path")
        _nest(raw[section], key, value, section)
    return _validate(raw)


def _resolve(path: str, base_dir: Optional[Path]) -> Path:
    candidate = Path(path)
    if not candidate.is_absolute() and base_dir is not None:
        candidate = base_dir / candidate
    return candidate


def build_grid(cfg: RunConfig, nodes: Optional[int] = None) -> SpatialGrid:
    return SpatialGrid.uniform(cfg.grid.dim, cfg.grid.half_width, nodes or cfg.grid.nodes)


def build_potential(cfg: RunConfig, grid: SpatialGrid, base_dir: Optional[Path] = None) -> ConfinementPotential:
    """The configured V; every family except the quadratic one is normalized on `grid`."""
    block = cfg.potential
    if block.family == "quadratic":
        return ConfinementPotential.quadratic(grid.dim)
    if block.family == "power_growth":
        potential = ConfinementPotential.power_growth(block.alpha, grid.dim)
    elif block.family == "log_power":
        potential = ConfinementPotential.log_power(block.alpha, grid.dim)
    else:
        if grid.dim != 1:
            raise ConfigError("potential.table", "tabulated potentials are one-dimensional")
        x, values = load_table(_resolve(block.table, base_dir))
        axis = grid.axis()
        if x[0] > axis[0] or x[-1] < axis[-1]:
            raise ConfigError("potential.table", "table does not cover the grid box")
        potential = ConfinementPotential.tabulated(np.interp(axis, x, values), grid)
    try:
        return potentials.normalize(potential, grid)
    except PotentialError as e:
        raise ConfigError("grid.half_width", e.message) from e


def build_kernel(cfg: RunConfig, dim: int, base_dir: Optional[Path] = None) -> InteractionKernel:
    block = cfg.kernel
    try:
        if block.family == "zero":
            return InteractionKernel.zero(dim)
        if block.family == "coulomb":
            return InteractionKernel.coulomb(block.strength, dim)
        if block.family == "newton":
            return InteractionKernel.newton(block.strength, dim)
        if block.family == "riesz":
            return InteractionKernel.riesz(block.strength, block.alpha, dim)
        if block.family == "synchrotron":
            return InteractionKernel.synchrotron(block.strength)
        x, values = load_table(_resolve(block.table, base_dir))
        return InteractionKernel.table(x, block.strength * values, dim)
    except KernelError as e:
        path = "kernel.alpha" if "alpha" in e.fields else "kernel.family"
        raise ConfigError(path, e.message) from e

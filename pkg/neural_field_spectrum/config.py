"""
Run configuration for the nf-spectrum CLI.

A run configuration is a JSON or YAML document:

    model:
      alpha: 1.0
      tau0: 1.0
      gamma: 4.0
      a: 1.0
      b: 1.0
      terms:
        - {c_hat: -3.27, xi: 2.0}      # complex values as [re, im] or a number
    quadrature: {n_apply: 32, n_check: 64}
    spectrum:   {window: [-2.0, 0.5, -4.0, 4.0], n_seeds: [12, 12], mode_range: [0, 3]}
    hopf:       {c_hat_range: [-4.0, -2.5], seed: {z: [0, 1.3], rho: [-0.2, 1.1], nu: [-0.2, 1.1]}}
    lyapunov:   {epsilon: 0.01, n_z: 32, n_x: 3, n_y: 3}
    simulate:   {n_grid: 12, dt: 0.05, t_end: 150, c_hat_values: [-0.5, -4.0]}
    output_dir: nf-output

Without an explicit path the working directory and its parents are searched
for nf-spectrum.yml / nf-spectrum.json; the bundled reference model is the
fallback.
"""

import json
import os
from pathlib import Path
from typing import Annotated, Any, Dict, List, Optional, Tuple, Union

import yaml
from pydantic import AfterValidator, BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .charfun import PARITIES
from .errors import ConfigError
from .model import ModelParams
from .solver_log import solver_log

CONFIG_FILE_NAMES = ("nf-spectrum.yml", "nf-spectrum.yaml", "nf-spectrum.json")
DATA_DIR = Path(__file__).parent / "data"
DEFAULT_CONFIG = DATA_DIR / "paper_sec5.json"
MAX_DEFAULT_THREADS = 8


def _check_complex(value):
    if isinstance(value, list) and len(value) != 2:
        raise ValueError("complex values are [re, im]")
    return value


ComplexValue = Annotated[Union[float, List[float]], AfterValidator(_check_complex)]


def as_complex(value: ComplexValue) -> complex:
    if isinstance(value, (list, tuple)):
        return complex(value[0], value[1])
    return complex(value)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


# =============================================================================
# Sections
# =============================================================================

class TermSection(_Section):
    c_hat: ComplexValue
    xi: ComplexValue


class ModelSection(_Section):
    alpha: float = 1.0
    tau0: float = 1.0
    gamma: float = 4.0
    a: float = 1.0
    b: float = 1.0
    terms: List[TermSection] = Field(default_factory=lambda: [TermSection(c_hat=-3.27, xi=2.0)])

    def to_params(self) -> ModelParams:
        try:
            return ModelParams.from_dict(self.model_dump())
        except ValueError as e:
            raise ConfigError(f"model: {e}") from None


class QuadratureSection(_Section):
    n_apply: int = Field(32, ge=2)
    n_check: int = Field(64, ge=2)


class SpectrumSection(_Section):
    window: Tuple[float, float, float, float] = (-2.0, 0.5, -4.0, 4.0)
    n_seeds: Tuple[int, int] = (12, 12)
    mode_range: Tuple[int, int] = (0, 3)

    @model_validator(mode="after")
    def _ordered(self):
        re_lo, re_hi, im_lo, im_hi = self.window
        if re_lo >= re_hi or im_lo >= im_hi:
            raise ValueError("window must be [re_lo, re_hi, im_lo, im_hi] with lo < hi")
        if self.mode_range[0] < 0 or self.mode_range[0] > self.mode_range[1]:
            raise ValueError("mode_range must be [lo, hi] with 0 <= lo <= hi")
        return self


class SeedSection(_Section):
    z: ComplexValue = [0.0, 1.3]
    rho: ComplexValue = [-0.2, 1.1]
    nu: ComplexValue = [-0.2, 1.1]

    def as_tuple(self) -> Tuple[complex, complex, complex]:
        return as_complex(self.z), as_complex(self.rho), as_complex(self.nu)


class HopfSection(_Section):
    c_hat_range: Tuple[float, float] = (-4.0, -2.5)
    parity_x: str = "even"
    parity_y: str = "even"
    seed: SeedSection = Field(default_factory=SeedSection)
    steps: int = Field(12, ge=2)
    tol: float = Field(1e-8, gt=0)

    @field_validator("parity_x", "parity_y")
    @classmethod
    def _parity(cls, v: str) -> str:
        if v not in PARITIES:
            raise ValueError(f"parity must be one of {PARITIES}")
        return v


class LyapunovSection(_Section):
    epsilon: float = Field(0.01, gt=0)
    n_z: int = Field(32, ge=2)
    n_x: int = Field(3, ge=1)
    n_y: int = Field(3, ge=1)


class SimulateSection(_Section):
    n_grid: int = Field(12, ge=8)
    dt: float = Field(0.05, gt=0)
    t_end: float = Field(150.0, gt=0)
    amplitude: float = 0.01
    history: str = "eigenmode"
    c_hat_values: List[float] = Field(default_factory=lambda: [-0.5, -4.0])
    probes: List[Tuple[float, float]] = Field(default_factory=lambda: [(0.0, 0.0)])
    snapshot_stride: int = Field(0, ge=0)
    max_abs: Optional[float] = None

    @field_validator("history")
    @classmethod
    def _history(cls, v: str) -> str:
        if v not in ("constant", "eigenmode"):
            raise ValueError("history must be 'constant' or 'eigenmode' in a config file")
        return v


class SquareSeed(_Section):
    nu: ComplexValue
    z: ComplexValue


class SquareSection(_Section):
    model: ModelSection
    parity: str = "even"
    seeds: List[SquareSeed] = Field(default_factory=list)

    @field_validator("parity")
    @classmethod
    def _parity(cls, v: str) -> str:
        if v not in PARITIES:
            raise ValueError(f"parity must be one of {PARITIES}")
        return v


class RunConfig(_Section):
    model: ModelSection = Field(default_factory=ModelSection)
    quadrature: QuadratureSection = Field(default_factory=QuadratureSection)
    spectrum: SpectrumSection = Field(default_factory=SpectrumSection)
    hopf: HopfSection = Field(default_factory=HopfSection)
    lyapunov: LyapunovSection = Field(default_factory=LyapunovSection)
    simulate: SimulateSection = Field(default_factory=SimulateSection)
    square: Optional[SquareSection] = None
    output_dir: str = "nf-output"

    # Path the config was read from, not part of the document
    _source: Optional[str] = None

    def params(self) -> ModelParams:
        return self.model.to_params()

    def dump(self) -> Dict[str, Any]:
        return self.model_dump(mode="json", exclude_none=True)

    @property
    def source(self) -> Optional[str]:
        return self._source


# =============================================================================
# Loading
# =============================================================================

def find_config_file(file_path: Optional[str] = None) -> Path:
    """Explicit path, else nf-spectrum.{yml,yaml,json} in cwd or a parent, else the bundled default."""
    if file_path:
        p = Path(file_path)
        if p.exists():
            return p
        raise ConfigError(f"config file not found: {file_path}")

    cwd = Path.cwd()
    for parent in [cwd, *cwd.parents]:
        for name in CONFIG_FILE_NAMES:
            candidate = parent / name
            if candidate.exists():
                return candidate
    return DEFAULT_CONFIG


def _parse(path: Path) -> Any:
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}", source=str(path)) from None

    if path.suffix == ".json":
        try:
            return json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(e.msg, source=str(path), line=e.lineno) from None
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        raise ConfigError(f"invalid YAML: {getattr(e, 'problem', e)}", source=str(path), line=line) from None


def parse_run_config(data: Any, source: Optional[str] = None) -> RunConfig:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"expected a mapping at the top level, got {type(data).__name__}", source=source)
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as e:
        err = e.errors()[0]
        where = ".".join(str(p) for p in err["loc"]) or "<root>"
        raise ConfigError(f"{where}: {err['msg']}", source=source) from None
    cfg._source = source
    # ModelParams validation (positivity, real kernel) happens here too
    cfg.params()
    if cfg.square is not None:
        cfg.square.model.to_params()
    return cfg


def load_run_config(file_path: Optional[str] = None) -> RunConfig:
    """Find, parse and validate a run configuration."""
    path = find_config_file(file_path)
    cfg = parse_run_config(_parse(path), source=str(path))
    solver_log.log("config_loaded", detail=str(path))
    return cfg


def thread_count(override: Optional[int] = None) -> int:
    """Worker pool size: explicit value, NF_SPECTRUM_THREADS, or min(8, cpu count)."""
    if override is not None:
        if override < 1:
            raise ConfigError(f"thread count must be >= 1, got {override}")
        return override
    env = os.environ.get("NF_SPECTRUM_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError(f"NF_SPECTRUM_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigError(f"NF_SPECTRUM_THREADS must be >= 1, got {n}")
        return n
    return min(MAX_DEFAULT_THREADS, os.cpu_count() or 1)

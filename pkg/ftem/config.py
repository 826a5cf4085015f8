"""
Configuration handling for ftem runs.

A run config names one command and carries that command's parameter block:

    {
      "command": "equilibria",
      "params": {"a1": 0.4, "a2": 0.6, "b1": 1, "b2": 0.6, "c1": 0.3, "c2": 0.8, "p": 0.6, "q": 0.93},
      "output_dir": "./ftem_output"
    }

Documents are read with PyYAML, so JSON and YAML configs both load.
"""

import hashlib
import json
import os
from dataclasses import MISSING, dataclass, field, fields, asdict
from pathlib import Path
from typing import Any, Dict, List, Optional, Type, Union, get_args, get_origin

import numpy as np
import yaml

from .aphid import AphidModel, AphidParams
from .exceptions import ConfigurationError, ParameterError
from .models import CompetitionParams
from .ode_sim import IntegratorOptions, PortraitGrid
from .pde_sim import PdeConfig, resolve_profile

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")
DEFAULT_OUTPUT_DIR = "./ftem_output"

_FLOAT_TYPES = (float, Optional[float])


def _matches(value: Any, annotation: Any) -> bool:
    origin = get_origin(annotation)
    if origin is Union:
        return any(_matches(value, arg) for arg in get_args(annotation))
    if origin is list:
        (item,) = get_args(annotation)
        return isinstance(value, list) and all(_matches(v, item) for v in value)
    if annotation is type(None):
        return value is None
    if annotation is bool or isinstance(value, bool):
        return annotation is bool and isinstance(value, bool)
    if annotation is float:
        return isinstance(value, (int, float))
    if annotation in (int, str):
        return isinstance(value, annotation)
    return True


def _describe(annotation: Any) -> str:
    origin = get_origin(annotation)
    if origin is Union:
        return " or ".join(_describe(arg) for arg in get_args(annotation))
    if origin is list:
        return f"list of {_describe(get_args(annotation)[0])}"
    return {float: "number", int: "integer", bool: "boolean", str: "string", type(None): "null"}.get(
        annotation, getattr(annotation, "__name__", str(annotation))
    )


def _parameter_errors(path: str, build) -> List[str]:
    try:
        build()
    except ParameterError as e:
        name = f"{path}.{e.field}" if e.field else path
        return [f"{name}: {e}"]
    return []


@dataclass
class ParamBlock:
    """Base for per-command parameter blocks."""

    @classmethod
    def field_names(cls) -> List[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def required_fields(cls) -> List[str]:
        return [f.name for f in fields(cls) if f.default is MISSING and f.default_factory is MISSING]

    @classmethod
    def schema_errors(cls, data: Any, path: str) -> List[str]:
        if not isinstance(data, dict):
            return [f"{path}: expected a mapping, got {type(data).__name__}"]
        known = set(cls.field_names())
        errors = [f"{path}.{key}: unknown field" for key in sorted(data) if key not in known]
        errors += [f"{path}.{name}: required field is missing" for name in cls.required_fields() if name not in data]
        for f in fields(cls):
            if f.name not in data:
                continue
            value = data[f.name]
            if f.type in _FLOAT_TYPES and isinstance(value, str):
                try:
                    float(value)
                except ValueError:
                    errors.append(f"{path}.{f.name}: expected a number, got '{value}'")
            elif not _matches(value, f.type):
                errors.append(f"{path}.{f.name}: expected {_describe(f.type)}, got {type(value).__name__}")
        return errors

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ParamBlock":
        values = {}
        for f in fields(cls):
            if f.name not in data:
                continue
            value = data[f.name]
            # YAML 1.1 reads exponent literals such as 1e-8 as strings
            if f.type in _FLOAT_TYPES and isinstance(value, str):
                value = float(value)
            values[f.name] = value
        return cls(**values)

    def validate(self, path: str = "params") -> List[str]:
        return []

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class CompetitionConfig(ParamBlock):
    """The eight scalars of the competition model."""
    a1: float
    a2: float
    b1: float
    b2: float
    c1: float
    c2: float
    p: float = 1.0
    q: float = 1.0

    def to_params(self) -> CompetitionParams:
        return CompetitionParams(self.a1, self.a2, self.b1, self.b2, self.c1, self.c2, self.p, self.q)

    def validate(self, path: str = "params") -> List[str]:
        errors = []
        if isinstance(self.p, (int, float)) and not 0 < self.p <= 1:
            errors.append(f"{path}.p: must satisfy 0 < p <= 1 for ODE commands, got {self.p}")
            return errors
        return errors + _parameter_errors(path, self.to_params)


@dataclass
class SweepConfig(CompetitionConfig):
    """q sweep, saddle-node and pitchfork settings."""
    q_min: float = 0.8
    q_max: float = 1.0
    n_q: int = 201
    q_bracket: Optional[List[float]] = None
    pitchfork_range: Optional[List[float]] = None

    def q_grid(self) -> np.ndarray:
        return np.linspace(self.q_min, self.q_max, self.n_q)

    def validate(self, path: str = "params") -> List[str]:
        errors = super().validate(path)
        if not 0 < self.q_min < self.q_max <= 1:
            errors.append(f"{path}.q_min: must satisfy 0 < q_min < q_max <= 1")
        if self.n_q < 2:
            errors.append(f"{path}.n_q: must be at least 2")
        for name in ("q_bracket", "pitchfork_range"):
            value = getattr(self, name)
            if value is not None and (len(value) != 2 or not 0 < value[0] < value[1] <= 1):
                errors.append(f"{path}.{name}: must be [lo, hi] with 0 < lo < hi <= 1")
        return errors


@dataclass
class _IntegratorFields:
    t_end: float = 500.0
    rel_tol: float = 1e-8
    abs_tol: float = 1e-12
    extinction_threshold: float = 1e-10
    max_step: Optional[float] = None

    def integrator_options(self) -> IntegratorOptions:
        return IntegratorOptions.from_dict({
            "t_end": self.t_end,
            "rel_tol": self.rel_tol,
            "abs_tol": self.abs_tol,
            "extinction_threshold": self.extinction_threshold,
            "max_step": self.max_step,
        })

    def integrator_errors(self, path: str) -> List[str]:
        return _parameter_errors(path, self.integrator_options)


@dataclass
class SimulateConfig(_IntegratorFields, CompetitionConfig):
    """Trajectories from listed initial states, plus an optional random basin scan."""
    initial_states: List[List[float]] = field(default_factory=lambda: [[0.2, 0.2]])
    basin_samples: int = 0

    def validate(self, path: str = "params") -> List[str]:
        errors = super().validate(path) + self.integrator_errors(path)
        for idx, s0 in enumerate(self.initial_states):
            if len(s0) != 2 or min(s0) < 0:
                errors.append(f"{path}.initial_states[{idx}]: must be a nonnegative pair [u, v]")
        if self.basin_samples < 0:
            errors.append(f"{path}.basin_samples: must be nonnegative")
        return errors


@dataclass
class PhasePortraitConfig(_IntegratorFields, CompetitionConfig):
    u_min: float = 0.0
    u_max: Optional[float] = None
    v_min: float = 0.0
    v_max: Optional[float] = None
    n_samples: int = 400
    arc_len: float = 2.0

    def grid(self) -> PortraitGrid:
        return PortraitGrid(self.u_min, self.u_max, self.v_min, self.v_max, self.n_samples, self.arc_len)

    def validate(self, path: str = "params") -> List[str]:
        errors = super().validate(path) + self.integrator_errors(path)
        if self.u_min < 0 or self.v_min < 0:
            errors.append(f"{path}.u_min: grid must lie in the nonnegative quadrant")
        for lo, hi in (("u_min", "u_max"), ("v_min", "v_max")):
            if getattr(self, hi) is not None and getattr(self, hi) <= getattr(self, lo):
                errors.append(f"{path}.{hi}: must exceed {lo}")
        if self.n_samples < 2:
            errors.append(f"{path}.n_samples: must be at least 2")
        return errors


@dataclass
class SeparatrixConfig(CompetitionConfig):
    """Stable manifolds of interior saddles, or of one explicitly given saddle."""
    saddle: Optional[List[float]] = None
    arc_len: float = 2.0
    eps_scale: float = 1e-6
    t_max: float = 1e4

    def validate(self, path: str = "params") -> List[str]:
        errors = super().validate(path)
        if self.saddle is not None and (len(self.saddle) != 2 or min(self.saddle) <= 0):
            errors.append(f"{path}.saddle: must be a positive pair [u, v]")
        if self.arc_len <= 0:
            errors.append(f"{path}.arc_len: must be positive")
        if self.eps_scale <= 0:
            errors.append(f"{path}.eps_scale: must be positive")
        return errors


@dataclass
class PdeRunConfig(ParamBlock):
    """PDE grid, diffusion and initial profiles; profiles are preset names, constants or coefficient lists."""
    d1: float
    d2: float
    k: float
    p: float
    m: Union[str, float, List[float]] = "linear:3-x"
    u0: Union[str, float, List[float]] = "linear:1.5-x"
    v0: Union[str, float, List[float]] = "linear:1.5-x"
    x_lo: float = 0.0
    x_hi: float = 1.0
    n_cells: int = 512
    eps_reg: float = 1e-8
    dt: Optional[float] = None
    dt_max: float = 1e-2
    t_end: float = 100.0
    scheme: str = "imex"
    reactions: bool = True
    n_snapshots: int = 11
    extinction_tol: float = 1e-6
    embedding_constant: float = 1.0

    def to_pde_config(self) -> PdeConfig:
        data = self.to_dict()
        data.pop("u0")
        data.pop("v0")
        return PdeConfig(**data)

    def validate(self, path: str = "params") -> List[str]:
        errors = _parameter_errors(path, self.to_pde_config)
        if errors:
            return errors
        x = self.to_pde_config().x
        for name in ("u0", "v0"):
            try:
                values = resolve_profile(getattr(self, name))(x)
            except ParameterError as e:
                errors.append(f"{path}.{name}: {e}")
                continue
            if (values < 0).any():
                errors.append(f"{path}.{name}: initial profile must be nonnegative on the domain")
        return errors


@dataclass
class AphidRunConfig(ParamBlock):
    """Aphid model parameters, initial state (h, xA, xV, A) and the models to run."""
    r: float
    a: float
    k_f: float
    k_r: float
    R: float
    s0: List[float]
    p: float = 0.5
    q: float = 0.5
    t_end: float = 120.0
    models: List[str] = field(default_factory=lambda: ["classic", "harvested"])

    def to_params(self) -> AphidParams:
        return AphidParams(self.r, self.a, self.k_f, self.k_r, self.R, self.p, self.q)

    def model_tags(self) -> List[AphidModel]:
        return [AphidModel(name) for name in self.models]

    def validate(self, path: str = "params") -> List[str]:
        errors = _parameter_errors(path, self.to_params)
        if len(self.s0) != 4 or min(self.s0) < 0:
            errors.append(f"{path}.s0: must be a nonnegative state [h, xA, xV, A]")
        valid = [m.value for m in AphidModel]
        for name in self.models:
            if name not in valid:
                errors.append(f"{path}.models: unknown model '{name}', expected one of {valid}")
        if self.t_end <= 0:
            errors.append(f"{path}.t_end: must be positive")
        return errors


COMMAND_BLOCKS: Dict[str, Type[ParamBlock]] = {
    "equilibria": CompetitionConfig,
    "classify": CompetitionConfig,
    "sweep-q": SweepConfig,
    "saddle-node": SweepConfig,
    "pitchfork": SweepConfig,
    "simulate": SimulateConfig,
    "phase-portrait": PhasePortraitConfig,
    "separatrix": SeparatrixConfig,
    "pde-run": PdeRunConfig,
    "aphid": AphidRunConfig,
}

TOP_LEVEL_FIELDS = ("command", "params", "output_dir", "seed", "jobs", "log_level", "log_file")


@dataclass
class RunConfig:
    """A single command invocation with its resolved parameter block."""
    command: str
    params: ParamBlock
    output_dir: str = DEFAULT_OUTPUT_DIR
    seed: int = 0
    jobs: int = 1
    log_level: str = "INFO"
    log_file: Optional[str] = None

    @classmethod
    def from_file(cls, filepath: str) -> "RunConfig":
        """Load a run configuration from a JSON or YAML file."""
        path = Path(filepath)
        if not path.exists():
            raise ConfigurationError(f"Configuration file not found: {filepath}")
        with open(path, "r") as f:
            return parse_config(f.read())

    @classmethod
    def from_file_with_env(cls, filepath: str) -> "RunConfig":
        """Load a run configuration, with environment variable overrides."""
        config = cls.from_file(filepath)
        if os.getenv("FTEM_OUTPUT_DIR"):
            config.output_dir = os.environ["FTEM_OUTPUT_DIR"]
        if os.getenv("FTEM_LOG_LEVEL"):
            config.log_level = os.environ["FTEM_LOG_LEVEL"].upper()
        return config

    def validate(self) -> List[str]:
        """Validate the configuration and return a list of errors."""
        errors = []
        if self.command not in COMMAND_BLOCKS:
            errors.append(f"command: unknown command '{self.command}'")
        if not isinstance(self.seed, int) or self.seed < 0:
            errors.append("seed: must be a nonnegative integer")
        if not isinstance(self.jobs, int) or self.jobs < 1:
            errors.append("jobs: must be a positive integer")
        if not isinstance(self.output_dir, str):
            errors.append("output_dir: must be a string")
        if self.log_file is not None and not isinstance(self.log_file, str):
            errors.append("log_file: must be a string")
        if self.log_level not in LOG_LEVELS:
            errors.append(f"log_level: must be one of {LOG_LEVELS}")
        errors.extend(self.params.validate("params"))
        return errors

    def is_valid(self) -> bool:
        return len(self.validate()) == 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "params": self.params.to_dict(),
            "output_dir": self.output_dir,
            "seed": self.seed,
            "jobs": self.jobs,
            "log_level": self.log_level,
            "log_file": self.log_file,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.md5(canonical.encode()).hexdigest()


def _load_document(text: str) -> Any:
    try:
        return json.loads(text)
    except ValueError:
        pass
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigurationError(f"Invalid configuration document: {e}")


def parse_config(text: str) -> RunConfig:
    """Parse and validate a run configuration document.

    Raises:
        ConfigurationError: with one entry per problem in ``errors``, each
            prefixed by the dotted path of the offending field.
    """
    data = _load_document(text)
    if not isinstance(data, dict):
        raise ConfigurationError("Configuration must be a mapping", errors=["<root>: expected a mapping"])

    errors = [f"{key}: unknown field" for key in sorted(data) if key not in TOP_LEVEL_FIELDS]
    command = data.get("command")
    if command is None:
        errors.append("command: required field is missing")
    elif command not in COMMAND_BLOCKS:
        errors.append(f"command: unknown command '{command}', expected one of {sorted(COMMAND_BLOCKS)}")

    if "params" not in data:
        errors.append("params: required field is missing")
    if errors:
        raise ConfigurationError("Invalid configuration", errors=errors)

    block_cls = COMMAND_BLOCKS[command]
    errors = block_cls.schema_errors(data["params"], "params")
    if errors:
        raise ConfigurationError("Invalid configuration", errors=errors)

    try:
        params = block_cls.from_dict(data["params"])
    except TypeError as e:
        raise ConfigurationError("Invalid configuration", errors=[f"params: {e}"])

    config = RunConfig(
        command=command,
        params=params,
        output_dir=data.get("output_dir", DEFAULT_OUTPUT_DIR),
        seed=data.get("seed", 0),
        jobs=data.get("jobs", 1),
        log_level=str(data.get("log_level", "INFO")).upper(),
        log_file=data.get("log_file"),
    )
    errors = config.validate()
    if errors:
        raise ConfigurationError("Invalid configuration", errors=errors)
    return config


_COMPETITION_EXAMPLE = {"a1": 0.4, "a2": 0.6, "b1": 1.0, "b2": 0.6, "c1": 0.3, "c2": 0.8, "p": 0.6, "q": 0.93}

TEMPLATES: Dict[str, Dict[str, Any]] = {
    "equilibria": dict(_COMPETITION_EXAMPLE),
    "classify": dict(_COMPETITION_EXAMPLE),
    "sweep-q": dict(_COMPETITION_EXAMPLE, q_min=0.8, q_max=1.0, n_q=201),
    "saddle-node": dict(_COMPETITION_EXAMPLE, q_bracket=[0.86, 0.92]),
    "pitchfork": {"a1": 0.4, "a2": 0.7, "b1": 1.0, "b2": 1.0, "c1": 0.6, "c2": 0.8, "p": 0.6, "q": 0.91},
    "simulate": {
        "a1": 0.4, "a2": 0.7, "b1": 1.0, "b2": 1.0, "c1": 0.6, "c2": 0.8, "p": 0.6, "q": 0.91,
        "initial_states": [[0.3, 0.02], [0.1, 0.5]], "t_end": 500.0,
    },
    "phase-portrait": {"a1": 0.4, "a2": 0.6, "b1": 1.0, "b2": 0.6, "c1": 0.4, "c2": 0.5, "p": 0.6, "q": 0.9},
    "separatrix": {"a1": 0.4, "a2": 0.6, "b1": 1.0, "b2": 0.7, "c1": 0.4, "c2": 0.6, "p": 0.6, "q": 0.93},
    "pde-run": {
        "d1": 0.2, "d2": 0.199, "k": 0.00099, "p": 1.6,
        "m": "linear:3-x", "u0": "linear:1.5-x", "v0": "linear:1.5-x", "t_end": 200.0,
    },
    "aphid": {"r": 0.27, "a": 5e-6, "k_f": 0.001, "k_r": 0.01, "R": 30.0, "s0": [0.0, 50.0, 5.0, 30.0]},
}


def template_config(command: str, output_dir: str = DEFAULT_OUTPUT_DIR) -> Dict[str, Any]:
    """A valid starting config for ``command``."""
    if command not in TEMPLATES:
        raise ConfigurationError(f"No template for command '{command}'")
    return {"command": command, "params": dict(TEMPLATES[command]), "output_dir": output_dir}

import logging
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import yaml

from config import Config
from exceptions import ConfigError, ParameterDomainError
from homspace import gamma_asymmetry
from models import (BvpOptions, HomSpaceSpec, IntegratorOptions, RunConfig,
                    RunMode, SystemParams)
from preset_service import PresetService

logger = logging.getLogger(__name__)

_REQUIRED = object()

# mode block schemas: key -> (kind, default)
MODE_SCHEMAS: Dict[RunMode, Dict[str, Tuple[str, Any]]] = {
    RunMode.IVP: {"t0": ("float", 0.0), "t_end": ("float", _REQUIRED), "y": ("vector", _REQUIRED),
                  "L": ("vector", _REQUIRED), "xi": ("float", _REQUIRED), "u0": ("float", 0.0)},
    RunMode.DIRICHLET: {"a": ("vector", _REQUIRED), "b": ("vector", _REQUIRED),
                        "u0": ("float", 0.0), "u1": ("float", 0.0)},
    RunMode.LIMIT: {"d": ("vector", _REQUIRED), "m": ("float", 0.0), "a": ("vector", _REQUIRED),
                    "b": ("vector", _REQUIRED), "u0": ("float", 0.0), "u1": ("float", 0.0), "p": ("float", 1.0)},
    RunMode.SCAN: {"k1_min": ("float", Config.SCAN["k1_min"]), "k1_max": ("float", Config.SCAN["k1_max"]),
                   "steps": ("int", Config.SCAN["steps"]), "resolve_pairs": ("bool", False)},
    RunMode.BLOWUP: {"direction": ("direction", _REQUIRED), "t": ("float", _REQUIRED), "y": ("vector", _REQUIRED),
                     "L": ("vector", _REQUIRED), "xi": ("float", _REQUIRED), "t_end": ("optional_float", None)},
    RunMode.RESCALE: {"direction": ("direction", _REQUIRED), "t": ("float", _REQUIRED), "y": ("vector", _REQUIRED),
                      "L": ("vector", _REQUIRED), "xi": ("float", _REQUIRED), "t_end": ("optional_float", None),
                      "anchor": ("float", _REQUIRED), "window": ("float", _REQUIRED), "points": ("int", 401)},
    RunMode.BOUNDS: {"samples": ("int", Config.BOUNDS["samples"]),
                     "box_radius": ("float", Config.BOUNDS["box_radius"])},
    RunMode.CIRCLE: {"lambda": ("float", _REQUIRED), "gap": ("float", 0.0), "m": ("float", 0.0)},
}

# modes that run on a user-selected space with user-selected parameters
SPACE_MODES = (RunMode.IVP, RunMode.DIRICHLET, RunMode.BLOWUP, RunMode.RESCALE, RunMode.BOUNDS)
PARAM_MODES = (RunMode.IVP, RunMode.DIRICHLET, RunMode.BLOWUP, RunMode.RESCALE)

TOP_LEVEL_KEYS = {"space", "params", "solver", "output", "seed", "threads"} | {mode.value for mode in RunMode}
INTEGRATOR_KEYS = {"method", "rel_tol", "abs_tol", "blowup_threshold", "min_step", "max_steps", "first_step"}
BVP_KEYS = {"bvp_tol", "newton_max_iter", "fd_step", "initial_step", "max_step", "min_step_continuation",
            "armijo", "max_halvings", "fast_iterations", "shot_rel_tol", "shot_abs_tol"}


class ConfigProcessor:
    """Loads, validates and serializes run configuration files"""

    def __init__(self):
        self.config = Config()
        self.presets = PresetService()
        self._root = None

    # ----------------------------------------------------------------- loading

    def load(self, file_path: Union[str, Path], mode: Optional[RunMode] = None,
             overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
        """Load and validate a YAML run configuration"""
        path = Path(file_path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc.strerror}")
        return self.parse(text, mode, overrides)

    def parse(self, text: str, mode: Optional[RunMode] = None,
              overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
        """Parse YAML text; ``mode`` selects the expected mode block, ``overrides`` are merged over the file"""
        try:
            self._root = yaml.compose(text)
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}",
                              line=mark.line + 1 if mark is not None else None)
        try:
            return self.from_mapping(self.merge(data if data is not None else {}, overrides), mode)
        finally:
            self._root = None

    @staticmethod
    def merge(data: Any, overrides: Optional[Dict[str, Any]]) -> Any:
        """Merge command-line overrides over the file, one block level deep"""
        if not overrides or not isinstance(data, dict):
            return data
        merged = dict(data)
        for key, value in overrides.items():
            current = merged.get(key)
            if isinstance(value, dict) and isinstance(current, dict):
                merged[key] = {**current, **value}
            else:
                merged[key] = value
        return merged

    def from_mapping(self, data: Dict[str, Any], mode: Optional[RunMode] = None) -> RunConfig:
        """Validate an already-loaded configuration mapping"""
        if not isinstance(data, dict):
            raise ConfigError("configuration must be a mapping of named blocks")
        self._validate_keys(data)

        mode = self._select_mode(data, mode)
        block = self._validate_block(mode, data.get(mode.value) or {})

        space, space_ref = self._parse_space(data.get("space"), required=mode in SPACE_MODES)
        params = self._parse_params(data.get("params"), required=mode in PARAM_MODES)
        integrator, bvp = self._parse_solver(data.get("solver") or {})

        output = data.get("output") or {}
        if not isinstance(output, dict) or set(output) - {"dir"}:
            raise ConfigError("output block accepts only 'dir'", key="output", line=self._line("output"))
        seed = self._typed("seed", data.get("seed", 0), "int")
        threads = data.get("threads")
        if threads is not None:
            threads = self._typed("threads", threads, "int")

        return RunConfig(mode=mode, space=space, params=params, block=block, integrator=integrator, bvp=bvp,
                         output_dir=output.get("dir"), seed=seed, threads=threads, space_ref=space_ref)

    # -------------------------------------------------------------- validation

    def _line(self, *path: str) -> Optional[int]:
        """1-based line of the value at a key path in the composed document"""
        node = self._root
        for key in path:
            if node is None or not isinstance(node, yaml.MappingNode):
                return None
            node = next((value for key_node, value in node.value if key_node.value == key), None)
        return node.start_mark.line + 1 if node is not None else None

    def _validate_keys(self, data: Dict[str, Any]) -> None:
        """Validate that only known blocks exist"""
        unknown = [key for key in data if key not in TOP_LEVEL_KEYS]
        if unknown:
            raise ConfigError(f"unknown block '{unknown[0]}'", key=str(unknown[0]), line=self._line(str(unknown[0])))

    def _select_mode(self, data: Dict[str, Any], mode: Optional[RunMode]) -> RunMode:
        present = [candidate for candidate in RunMode if candidate.value in data]
        if len(present) > 1:
            raise ConfigError(f"exactly one mode block allowed, found {', '.join(m.value for m in present)}",
                              key=present[1].value, line=self._line(present[1].value))
        if mode is not None:
            if present and present[0] is not mode:
                raise ConfigError(f"command expects a '{mode.value}' block, found '{present[0].value}'",
                                  key=present[0].value, line=self._line(present[0].value))
            return mode
        if not present:
            raise ConfigError(f"missing mode block (one of {', '.join(m.value for m in RunMode)})")
        return present[0]

    def _validate_block(self, mode: RunMode, block: Any) -> Dict[str, Any]:
        if not isinstance(block, dict):
            raise ConfigError("mode block must be a mapping", key=mode.value, line=self._line(mode.value))
        schema = MODE_SCHEMAS[mode]
        unknown = [key for key in block if key not in schema]
        if unknown:
            raise ConfigError(f"unknown key '{unknown[0]}'", key=f"{mode.value}.{unknown[0]}",
                              line=self._line(mode.value, str(unknown[0])))
        validated = {}
        for key, (kind, default) in schema.items():
            if key not in block:
                if default is _REQUIRED:
                    raise ConfigError("missing required key", key=f"{mode.value}.{key}", line=self._line(mode.value))
                validated[key] = default
                continue
            validated[key] = self._typed(f"{mode.value}.{key}", block[key], kind)
        return validated

    def _typed(self, key: str, value: Any, kind: str) -> Any:
        """Coerce a scalar or vector to its schema type"""
        line = self._line(*key.split("."))

        def number(item: Any) -> float:
            if isinstance(item, bool) or not isinstance(item, (int, float)):
                raise ConfigError(f"expected a number, got {item!r}", key=key, line=line)
            return float(item)

        if kind == "float":
            return number(value)
        if kind == "optional_float":
            return None if value is None else number(value)
        if kind == "int":
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"expected an integer, got {value!r}", key=key, line=line)
            return value
        if kind == "bool":
            if not isinstance(value, bool):
                raise ConfigError(f"expected true or false, got {value!r}", key=key, line=line)
            return value
        if kind == "vector":
            items = value if isinstance(value, list) else [value]
            if not items:
                raise ConfigError("expected a non-empty list of numbers", key=key, line=line)
            return [number(item) for item in items]
        if kind == "direction":
            if value not in ("backward", "forward"):
                raise ConfigError(f"direction must be 'backward' or 'forward', got {value!r}", key=key, line=line)
            return value
        raise ConfigError(f"unsupported schema kind {kind}", key=key)

    def _parse_space(self, block: Any, required: bool) -> Tuple[Optional[HomSpaceSpec], Optional[str]]:
        if block is None:
            if required:
                raise ConfigError("missing 'space' block", key="space")
            return None, None
        try:
            if isinstance(block, str):
                space, space_ref = self.presets.get(block), block
            elif isinstance(block, dict):
                space, space_ref = HomSpaceSpec.from_config(block), None
            else:
                raise ConfigError("space must be a preset name or a mapping", key="space")
        except ConfigError as exc:
            key = exc.key or "space"
            raise type(exc)(str(exc).split(" (key")[0], key=key, line=self._line(*key.split("[")[0].split(".")[:2])) from exc
        gamma_asymmetry(space)
        return space, space_ref

    def _parse_params(self, block: Any, required: bool) -> Optional[SystemParams]:
        if block is None:
            if required:
                raise ConfigError("missing 'params' block", key="params")
            return None
        if not isinstance(block, dict):
            raise ConfigError("params must be a mapping", key="params", line=self._line("params"))
        unknown = set(block) - {"m", "lambda", "h2"}
        if unknown:
            key = sorted(unknown)[0]
            raise ConfigError(f"unknown key '{key}'", key=f"params.{key}", line=self._line("params", key))
        values = {}
        for key in ("m", "lambda", "h2"):
            if key not in block:
                raise ConfigError("missing required key", key=f"params.{key}", line=self._line("params"))
            values[key] = self._typed(f"params.{key}", block[key], "float")
        try:
            return SystemParams(m=values["m"], lam=values["lambda"], h2=values["h2"])
        except ParameterDomainError as exc:
            raise ConfigError(str(exc), key="params", line=self._line("params")) from exc

    def _parse_solver(self, block: Any) -> Tuple[IntegratorOptions, BvpOptions]:
        if not isinstance(block, dict):
            raise ConfigError("solver must be a mapping", key="solver", line=self._line("solver"))
        unknown = set(block) - INTEGRATOR_KEYS - BVP_KEYS
        if unknown:
            key = sorted(unknown)[0]
            raise ConfigError(f"unknown key '{key}'", key=f"solver.{key}", line=self._line("solver", key))

        integrator_values = {key: block[key] for key in INTEGRATOR_KEYS if key in block}
        bvp_values = {key: block[key] for key in BVP_KEYS if key in block}
        try:
            integrator = IntegratorOptions(**integrator_values)
            shot = IntegratorOptions(**{**integrator_values,
                                        "rel_tol": bvp_values.pop("shot_rel_tol", self.config.BVP["shot_rel_tol"]),
                                        "abs_tol": bvp_values.pop("shot_abs_tol", self.config.BVP["shot_abs_tol"])})
            if "min_step_continuation" in bvp_values:
                bvp_values["min_step"] = bvp_values.pop("min_step_continuation")
            bvp = BvpOptions(integrator=shot, **bvp_values)
        except (ParameterDomainError, TypeError) as exc:
            raise ConfigError(str(exc), key="solver", line=self._line("solver")) from exc
        return integrator, bvp

    # ------------------------------------------------------------ serializing

    def to_mapping(self, run: RunConfig) -> Dict[str, Any]:
        """Plain mapping that parses back to an equivalent RunConfig"""
        data: Dict[str, Any] = {}
        if run.space is not None:
            data["space"] = run.space_ref if run.space_ref is not None else run.space.to_config()
        if run.params is not None:
            data["params"] = run.params.to_config()
        data[run.mode.value] = dict(run.block)

        solver = run.integrator.to_config()
        bvp = run.bvp.to_config()
        bvp["min_step_continuation"] = bvp.pop("min_step")
        solver.update(bvp)
        data["solver"] = solver
        if run.output_dir is not None:
            data["output"] = {"dir": str(run.output_dir)}
        data["seed"] = int(run.seed)
        if run.threads is not None:
            data["threads"] = int(run.threads)
        return data

    def dump(self, run: RunConfig) -> str:
        """Serialize a RunConfig to YAML text"""
        return yaml.safe_dump(self.to_mapping(run), sort_keys=False, default_flow_style=None)

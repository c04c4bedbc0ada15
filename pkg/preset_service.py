import logging
import re
from typing import Optional, Dict, Any, List

import numpy as np

from config import Config
from exceptions import ConfigError
from models import HomSpaceSpec

logger = logging.getLogger(__name__)

_PRESET_NAME = re.compile(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*(?:\(\s*([^()]*?)\s*\))?\s*$")


class PresetService:
    """Registry of the shipped homogeneous spaces"""

    def __init__(self):
        self.config = Config()
        self._preset_cache: Dict[str, HomSpaceSpec] = {}

    def _build_preset(self, name: str, argument: Optional[str]) -> HomSpaceSpec:
        """Build a preset space from its configuration entry"""
        definition = self.config.get_preset(name)
        if definition is None:
            raise ConfigError(f"unknown preset '{name}' (available: {', '.join(self.names())})", key="space")

        block = {key: definition[key] for key in ("n", "d", "beta", "gamma")}
        parameter = definition.get("parameter")
        value: Any = None
        if parameter is not None:
            value = parameter["default"] if argument in (None, "") else self._parse_argument(name, argument,
                                                                                          parameter["type"])
            block[parameter["field"]] = [value]
        elif argument not in (None, ""):
            raise ConfigError(f"preset '{name}' takes no argument", key="space")

        block["label"] = definition["label"].format(value=value)
        return HomSpaceSpec.from_config(block)

    @staticmethod
    def _parse_argument(name: str, argument: str, kind: str) -> Any:
        try:
            value = float(argument)
        except ValueError:
            raise ConfigError(f"preset '{name}' argument must be numeric, got '{argument}'", key="space")
        if kind == "int":
            if not value.is_integer() or value < 1:
                raise ConfigError(f"preset '{name}' argument must be a positive integer, got '{argument}'",
                                  key="space")
            return int(value)
        return value

    def names(self) -> List[str]:
        return list(self.config.PRESETS)

    def get(self, preset: str) -> HomSpaceSpec:
        """Look up a preset by name, e.g. 'sphere2', 'torus(3)' or 'sphere2(2)'"""
        match = _PRESET_NAME.match(preset)
        if match is None:
            raise ConfigError(f"malformed preset name '{preset}'", key="space")
        name, argument = match.group(1), match.group(2)
        cache_key = f"{name}({argument or ''})"
        if cache_key not in self._preset_cache:
            self._preset_cache[cache_key] = self._build_preset(name, argument)
        return self._preset_cache[cache_key]

    def circle(self) -> HomSpaceSpec:
        return self.get("circle")

    def sphere2(self, beta: float = 1.0) -> HomSpaceSpec:
        return self.get(f"sphere2({beta!r})")

    def torus(self, d: int = 2) -> HomSpaceSpec:
        return self.get(f"torus({int(d)})")

    def describe(self, space: HomSpaceSpec, name: Optional[str] = None) -> Dict[str, Any]:
        """Constants and hypothesis flags of a space"""
        return {
            "name": name or space.label,
            "label": space.label,
            "n": space.n,
            "d": [int(v) for v in space.d],
            "beta": [float(v) for v in space.beta],
            "gamma": space.gamma_quadruples() if np.any(space.gamma) else 0,
            "monotypic_asserted": bool(space.monotypic_asserted),
            "summands_at_least_two_dimensional": space.summands_at_least_two_dimensional,
            "degenerate": space.is_degenerate,
        }

    def list_presets(self, extra: Optional[List[str]] = None) -> List[Dict[str, Any]]:
        """Catalog of every preset at its default argument, plus any named extras"""
        catalog = [self.describe(self.get(name), name) for name in self.names()]
        for preset in extra or []:
            catalog.append(self.describe(self.get(preset), preset))
        return catalog

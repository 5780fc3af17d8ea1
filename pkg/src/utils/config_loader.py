"""
Config File Loader Utility
Loads flat ``key = value`` experiment files and merges CLI overrides into a RunConfig
"""
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Union, get_args

from src.config import RunConfig
from src.errors import ConfigurationError

_NULL_VALUES = {'', 'none', 'null'}


def parse_value(raw: str) -> Optional[str]:
    """Normalize a raw value; null spellings become None, everything else stays a string for pydantic"""
    value = raw.strip()
    if len(value) >= 2 and value[0] == value[-1] and value[0] in ('"', "'"):
        return value[1:-1]
    if value.lower() in _NULL_VALUES:
        return None
    return value


class ConfigFileLoader:
    """Loads and holds the key/value pairs of one experiment config file"""

    def __init__(self, path: Union[str, Path], verbose: bool = False):
        """
        Initialize config file loader

        Args:
            path: Path to the config file
            verbose: Print a summary of loaded keys
        """
        self.path = str(path)
        self.verbose = verbose
        self.values: Dict[str, Optional[str]] = {}
        self.line_of: Dict[str, int] = {}
        self._load()

    def _load(self):
        """Load key/value pairs, rejecting malformed lines, duplicates and unknown keys"""
        if not os.path.exists(self.path):
            raise ConfigurationError(f"Config file not found at: {self.path}")

        known = set(RunConfig.model_fields)
        with open(self.path, 'r', encoding='utf-8') as f:
            for line_number, line in enumerate(f, start=1):
                stripped = line.split('#', 1)[0].strip()
                if not stripped:
                    continue
                if '=' not in stripped:
                    raise ConfigurationError(
                        f"{self.path}:line {line_number}: expected 'key = value', got {stripped!r}"
                    )
                key, raw = stripped.split('=', 1)
                key = key.strip().replace('-', '_')
                if key not in known:
                    raise ConfigurationError(f"{self.path}:line {line_number}: unknown key '{key}'")
                if key in self.values:
                    raise ConfigurationError(
                        f"{self.path}:line {line_number}: duplicate key '{key}' "
                        f"(first set on line {self.line_of[key]})"
                    )
                self.values[key] = parse_value(raw)
                self.line_of[key] = line_number

        if self.verbose:
            print(f"📋 Loaded {len(self.values)} config keys from: {self.path}")


def parse_overrides(pairs: Optional[List[str]]) -> Dict[str, Optional[str]]:
    """
    Parse ``--set key=value`` pairs

    Args:
        pairs: Raw ``key=value`` strings

    Returns:
        Dictionary of overrides
    """
    overrides: Dict[str, Optional[str]] = {}
    for pair in pairs or []:
        if '=' not in pair:
            raise ConfigurationError(f"--set expects key=value, got {pair!r}")
        key, raw = pair.split('=', 1)
        overrides[key.strip().replace('-', '_')] = parse_value(raw)
    return overrides


def load_run_config(path: Optional[Union[str, Path]] = None,
                    overrides: Optional[Dict[str, Any]] = None,
                    settings: Optional[Dict[str, Any]] = None,
                    verbose: bool = False) -> RunConfig:
    """
    Build a validated RunConfig from an optional file plus overrides (overrides win)

    Args:
        path: Optional config file
        overrides: Values from CLI flags; ``None`` values are treated as "not given"
        settings: Explicit ``--set`` pairs; ``None`` here means "set to null"

    Returns:
        RunConfig
    """
    merged: Dict[str, Any] = {}
    if path:
        merged.update(ConfigFileLoader(path, verbose=verbose).values)
    merged.update(settings or {})
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    # Null values from the file fall back to model defaults for non-optional keys
    merged = {k: v for k, v in merged.items()
              if v is not None or _accepts_none(k)}
    return RunConfig.from_mapping(merged)


def _accepts_none(key: str) -> bool:
    field = RunConfig.model_fields.get(key)
    if field is None:
        return True  # let validation report the unknown key
    return type(None) in get_args(field.annotation)

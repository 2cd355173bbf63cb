"""JSON configuration file and flag > file > default resolution."""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Mapping, Optional

from .errors import ConfigError

_CONFIG_PATH = Path.home() / ".config" / "smolin-qss" / "config.json"

DEFAULTS: dict[str, Any] = {
    "variant": "secure",
    "strategy": "none",
    "cheaters": "bob,charlie",
    "copies": 64,
    "check_rate": 0.5,
    "attacked": None,
    "trials": 10_000,
    "seed": 0,
    "format": "csv",
    "basis": "Z",
    "workers": 1,
    "qubit_cap": 10,
    "keep_original": False,
    "include_own": False,
    "observable_policy": "uniform",
}


def config_path() -> Path:
    """Location of the config file (``QSS_CONFIG`` overrides the default)."""
    override = os.environ.get("QSS_CONFIG")
    return Path(override) if override else _CONFIG_PATH


def load_config(path: Optional[Path] = None) -> dict:
    """Load settings from ``path`` or the default config file.

    A missing or unreadable default file means no settings; a file given
    explicitly must exist and hold a JSON object.
    """
    if path is None:
        target = config_path()
        if target.exists():
            try:
                data = json.loads(target.read_text())
                return data if isinstance(data, dict) else {}
            except (json.JSONDecodeError, OSError):
                pass
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (json.JSONDecodeError, OSError) as e:
        raise ConfigError(f"Could not read config file {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must hold a JSON object")
    unknown = sorted(set(data) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"Unknown config keys in {path}: {', '.join(unknown)}")
    return data


def save_config(config: Mapping[str, Any], path: Optional[Path] = None):
    """Persist settings (only keys the CLI understands)."""
    target = Path(path) if path is not None else config_path()
    data = {k: config[k] for k in DEFAULTS if k in config}
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(data, indent=2) + "\n")


def resolve(flags: Mapping[str, Any], file_config: Mapping[str, Any]) -> dict:
    """Merge settings: explicit flag, then config file, then built-in default.

    A flag counts as given when its value is not None.
    """
    merged = dict(DEFAULTS)
    merged.update({k: v for k, v in file_config.items() if k in DEFAULTS})
    merged.update({k: v for k, v in flags.items() if k in DEFAULTS and v is not None})
    return merged

"""Optional YAML configuration

Looked up from an explicit path, then $PMEMPRIMS_CONFIG, then
~/.pmemprims.yaml. Every key is optional; missing files mean defaults.
"""

import copy
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml

from pmemprims.crash_checker import CrashMode
from pmemprims.pmem_model import BLOCK_SIZE, CACHE_LINE_SIZE, Backend

CONFIG_ENV = 'PMEMPRIMS_CONFIG'

DEFAULTS: Dict[str, Dict[str, Any]] = {
    'device': {
        'cache_line_size': CACHE_LINE_SIZE,
        'block_size': BLOCK_SIZE,
        'backend': Backend.SIMULATED.value,
    },
    'crash': {
        'cap': 2 ** 20,
        'samples': 10000,
        'seed': 0,
    },
    'flush': {
        'page_size': 16384,
        'dirty_threshold_single': 112,
        'dirty_threshold_multi': 32,
    },
    'bench': {
        'working_set': 10 * 2 ** 30,
        'ops': 100000,
        'seed': 0,
    },
}


def get_config_path(explicit: Optional[Union[str, Path]] = None) -> Optional[Path]:
    """Config file to read, or None when no candidate exists

    An explicit path or $PMEMPRIMS_CONFIG must exist; the home-directory
    file is used only if present.
    """
    if explicit is not None:
        path = Path(explicit).expanduser()
        if not path.exists():
            raise FileNotFoundError(f"Config file not found: {path}")
        return path

    env = os.environ.get(CONFIG_ENV)
    if env:
        path = Path(env).expanduser()
        if not path.exists():
            raise FileNotFoundError(f"Config file not found: {path} (from ${CONFIG_ENV})")
        return path

    home = Path.home() / '.pmemprims.yaml'
    return home if home.exists() else None


def _check_value(section: str, key: str, value: Any) -> Any:
    name = f"{section}.{key}"
    if key == 'backend':
        try:
            return Backend(value).value
        except ValueError:
            raise ValueError(f"{name} must be one of: simulated, real (got {value!r})") from None
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError(f"{name} must be an integer (got {value!r})")
    if value < 0:
        raise ValueError(f"{name} must not be negative (got {value})")
    if key == 'cache_line_size' and value != CACHE_LINE_SIZE:
        raise ValueError(f"{name} is fixed at {CACHE_LINE_SIZE}")
    if key == 'block_size' and value != BLOCK_SIZE:
        raise ValueError(f"{name} is fixed at {BLOCK_SIZE}")
    return value


def merge_config(overrides: Optional[Dict[str, Any]]) -> Dict[str, Dict[str, Any]]:
    """Defaults updated with validated overrides

    Raises:
        ValueError: On unknown sections or keys, or values of the wrong type
    """
    config = copy.deepcopy(DEFAULTS)
    if not overrides:
        return config
    if not isinstance(overrides, dict):
        raise ValueError("config file must contain a mapping")

    for section, values in overrides.items():
        if section not in config:
            raise ValueError(f"unknown config section: {section}")
        if values is None:
            continue
        if not isinstance(values, dict):
            raise ValueError(f"config section {section} must be a mapping")
        for key, value in values.items():
            if key not in config[section]:
                raise ValueError(f"unknown config key: {section}.{key}")
            config[section][key] = _check_value(section, key, value)
    return config


def load_config(path: Optional[Union[str, Path]] = None) -> Dict[str, Dict[str, Any]]:
    """Resolved configuration

    Args:
        path: Explicit config file (overrides the environment and home lookup)

    Returns:
        Nested dict with the sections device, crash, flush and bench

    Raises:
        FileNotFoundError: If an explicitly named file is missing
        ValueError: If the file is not valid YAML or has bad keys
    """
    config_path = get_config_path(path)
    if config_path is None:
        return merge_config(None)
    try:
        overrides = yaml.safe_load(config_path.read_text())
    except yaml.YAMLError as e:
        raise ValueError(f"invalid YAML in {config_path}: {e}") from e
    return merge_config(overrides)


def crash_mode(config: Dict[str, Dict[str, Any]], sampled: bool = False) -> CrashMode:
    crash = config['crash']
    if sampled:
        return CrashMode.sampled(crash['samples'], crash['seed'], cap=crash['cap'])
    return CrashMode.exhaustive(cap=crash['cap'])

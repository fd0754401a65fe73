"""
Config - Configuration loading
Reads config/config.json and fills every section with defaults
"""

import copy
import json
from pathlib import Path
from typing import Any, Dict, Optional

from src.errors import FormatError


DEFAULT_CONFIG_PATH = 'config/config.json'

DEFAULT_CONFIG: Dict[str, Any] = {
    'hash': {
        'bits': 32,
        'iterations': 50,
        'init_sample': 300,
        'seed': 0,
    },
    'learner': {
        'C': 0.01,
        'l_mult': 3,
        'target_len': None,
        'pa_norm_exponent': 2,
        'variant': 'asymmetric',
        'grow_codebook': True,
    },
    'search': {
        'engine': 'scan',
        'substrings': None,
        'k': 100,
    },
    'stream': {
        'chunk_size': 1000,
        'eval_every': None,
        'eval_topk': None,
        'workers': 4,
        'simulate_io': False,
        'io_ms_per_1000': 3970.0,
    },
    'bench': {
        'num_classes': 8,
        'dim': 64,
        'points': 20000,
        'queries_per_class': 50,
        'noise': 1.2,
        'labels_per_point': [0.5, 0.3, 0.2],
        'seed': 0,
    },
    'audit': {
        'enabled': True,
        'log_path': './data/runlog.jsonl',
    },
    'debug': {
        'enabled': False,
        'level': 'basic',
        'log_file': './data/debug.log',
    },
}


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge override into a copy of base"""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(config_path: Optional[str] = None) -> Dict[str, Any]:
    """
    Load configuration from JSON file

    Args:
        config_path: Explicit path. When None the default path is tried and
            silently skipped if absent.

    Returns:
        Configuration dict with every section populated
    """

    explicit = config_path is not None
    config_file = Path(config_path or DEFAULT_CONFIG_PATH)

    if not config_file.exists():
        if explicit:
            raise FileNotFoundError(f"Config file not found: {config_file}")
        return copy.deepcopy(DEFAULT_CONFIG)

    try:
        with open(config_file, 'r', encoding='utf-8') as f:
            loaded = json.load(f)
    except json.JSONDecodeError as e:
        raise FormatError(e.msg, path=str(config_file), line=e.lineno)

    if not isinstance(loaded, dict):
        raise FormatError("top level must be an object", path=str(config_file))

    return _merge(DEFAULT_CONFIG, loaded)


def apply_overrides(config: Dict[str, Any], section: str, **values: Any) -> Dict[str, Any]:
    """Return a copy of config with non-None values written into a section"""
    updated = copy.deepcopy(config)
    target = updated.setdefault(section, {})
    for key, value in values.items():
        if value is not None:
            target[key] = value
    return updated

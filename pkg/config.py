"""Desk-scale defaults, config-file loading and logging setup."""
import logging
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import yaml
from rich.logging import RichHandler

from errors import ConfigError

CODE_VERSION = "1.0.0"
REPORT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class DeskConfig:
    """Defaults of the desk-scale experiment; every field has a matching CLI flag."""
    seed: int = 0
    out_dir: str = "runs"
    classes: int = 10
    per_class: int = 20
    test_per_class: int = 10
    size: int = 34
    duration: int = 100_000
    noise_rate: float = 1.0
    t_bins: int = 20
    arch: str = "conv"
    v_th: float = 1.0
    leak: float = 0.9
    slope: float = 5.0
    epochs: int = 30
    lr: float = 0.01
    batch: int = 4
    max_iter: int = 50
    eta: float = 0.1
    mask_bins: str = ""
    max_cycles: int = 40
    th0: int = 5
    accumulate: Optional[bool] = None
    repeats: int = 1
    magnitudes: str = "0,0.25,0.55,1.0"


DEFAULTS = DeskConfig()


def load_config_file(path: str) -> Dict[str, Any]:
    """
    Load a YAML key-value config file whose keys mirror the long CLI flags.

    Args:
        path: Path of the YAML file

    Returns:
        Mapping with keys normalized to argparse destinations (dashes become underscores)

    Raises:
        ConfigError: If the file is missing, unparsable or not a mapping
    """
    config_path = Path(path)
    if not config_path.exists():
        raise ConfigError(f"config file not found: {config_path}")
    try:
        with open(config_path, 'r', encoding='utf-8') as f:
            data = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse config file {config_path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config file {config_path} must hold a key-value mapping")
    return {str(key).lstrip("-").replace("-", "_"): value for key, value in data.items()}


def parse_kind_spec(text: str) -> Tuple[str, Dict[str, str]]:
    """
    Split a ``kind:key=value,key=value`` selector as used by --filter and --attack.

    Args:
        text: Selector text, e.g. "baf:S=2,T=5000" or "none"

    Returns:
        Lower-cased kind and the raw string parameters
    """
    kind, _, rest = text.strip().partition(":")
    params: Dict[str, str] = {}
    for item in filter(None, (part.strip() for part in rest.split(","))):
        key, sep, value = item.partition("=")
        if not sep or not key.strip() or not value.strip():
            raise ConfigError(f"malformed parameter {item!r} in {text!r}")
        params[key.strip()] = value.strip()
    if not kind:
        raise ConfigError(f"missing kind in {text!r}")
    return kind.lower(), params


def defaults_dict() -> Dict[str, Any]:
    return asdict(DEFAULTS)


def setup_logging(verbosity: int = 0) -> None:
    """Route all package loggers through a Rich handler; -v is INFO, -vv is DEBUG."""
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(rich_tracebacks=True, show_path=False)],
        force=True,
    )


def progress_disabled() -> bool:
    """tqdm bars only show when INFO logging is on."""
    return not logging.getLogger().isEnabledFor(logging.INFO)

import os
from dataclasses import fields
from pathlib import Path
from typing import Mapping, Optional, Union

from dotenv import load_dotenv

from constants import ENV_THREADS, TRAIN_CONFIG_SCHEMA
from contrastnet.augment import EdaParams
from contrastnet.errors import ConfigError
from contrastnet.losses import LossConfig
from contrastnet.trainer import TrainConfig
from utils.schema_manager import RecordError, get_schema_manager

# loading environment variables from .env file
load_dotenv()


def resolve_threads(cli_value: Optional[int] = None) -> int:
    """--threads, else CONTRASTNET_THREADS, else 1"""
    if cli_value is not None:
        threads = cli_value
    else:
        raw = os.getenv(ENV_THREADS)
        if not raw:
            return 1
        try:
            threads = int(raw)
        except ValueError:
            raise ConfigError(f"{ENV_THREADS} must be an integer, got {raw!r}") from None
    if threads < 1:
        raise ConfigError(f"thread count must be >= 1, got {threads}")
    return threads


def _merge_nested(base, updates: Mapping, cls):
    values = {f.name: getattr(base, f.name) for f in fields(cls)}
    values.update({k: v for k, v in updates.items() if v is not None})
    try:
        return cls(**values)
    except TypeError as e:
        raise ConfigError(str(e)) from e


def merge_train_config(base: TrainConfig, updates: Mapping) -> TrainConfig:
    """
    Overlay updates on base. None values are ignored; nested loss/eda mappings merge key by key.
    """
    values = {f.name: getattr(base, f.name) for f in fields(TrainConfig)}
    for key, value in updates.items():
        if value is None:
            continue
        if key not in values:
            raise ConfigError(f"unknown training option {key!r}")
        if key == "loss":
            value = _merge_nested(base.loss, value, LossConfig)
        elif key == "eda":
            value = _merge_nested(base.eda, value, EdaParams)
        values[key] = value
    return TrainConfig(**values)


def load_train_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping] = None,
) -> TrainConfig:
    """Defaults <- JSON config file (schema-validated) <- non-None overrides"""
    cfg = TrainConfig()
    if path is not None:
        try:
            document = get_schema_manager().load_json(path, TRAIN_CONFIG_SCHEMA)
        except RecordError as e:
            raise ConfigError(f"{path}: {e.message}") from e
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        cfg = merge_train_config(cfg, document)
    if overrides:
        cfg = merge_train_config(cfg, overrides)
    return cfg


def threads_override(cli_value: Optional[int] = None) -> Optional[int]:
    """Thread count to force onto a TrainConfig, or None to keep the config file's value"""
    if cli_value is None and not os.getenv(ENV_THREADS):
        return None
    return resolve_threads(cli_value)

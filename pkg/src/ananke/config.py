"""Layered configuration: defaults < JSON config file < environment < command-line flags."""

from __future__ import annotations

import copy
import json
import os
from pathlib import Path
from typing import Any, Mapping, Optional

from .errors import ConfigError
from .investigator import InvestigationConfig
from .llm.http import ENV_KEY, ENV_MODEL, ENV_URL

BACKENDS = ("oracle", "http", "cassette-record", "cassette-replay")
EMBEDDERS = ("hash", "http")
EVAL_MODES = ("entity", "event")

DEFAULTS: dict[str, Any] = {
    "paths": {"kb_dir": None, "log_dirs": []},
    "llm": {
        "backend": "oracle",
        "base_url": "",
        "model": "",
        "api_key": "",
        "timeout": 120.0,
        "max_retries": 3,
        "cassette": None,
        "cassette_inner": "oracle",
    },
    "embedder": {"kind": "hash", "dim": 256, "base_url": "", "model": ""},
    "investigation": InvestigationConfig().to_dict(),
    "eval": {"mode": "entity"},
}

_ENV_MAP = {ENV_URL: ("llm", "base_url"), ENV_MODEL: ("llm", "model"), ENV_KEY: ("llm", "api_key")}


def _merge(base: dict, over: Mapping, where: str) -> None:
    for key, value in over.items():
        if key not in base:
            raise ConfigError(f"unknown config key {where}{key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, Mapping):
                raise ConfigError(f"config key {where}{key!r} must be an object")
            _merge(base[key], value, f"{where}{key}.")
        else:
            base[key] = value


def load_config(path: Optional[str | os.PathLike] = None, env: Optional[Mapping[str, str]] = None,
                overrides: Optional[Mapping] = None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        _merge(cfg, data, "")
    env = os.environ if env is None else env
    for var, (section, key) in _ENV_MAP.items():
        if env.get(var):
            cfg[section][key] = env[var]
    if overrides:
        _merge(cfg, overrides, "")
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    if cfg["llm"]["backend"] not in BACKENDS:
        raise ConfigError(f"llm.backend must be one of {BACKENDS}")
    if cfg["llm"]["cassette_inner"] not in ("oracle", "http"):
        raise ConfigError("llm.cassette_inner must be 'oracle' or 'http'")
    if cfg["embedder"]["kind"] not in EMBEDDERS:
        raise ConfigError(f"embedder.kind must be one of {EMBEDDERS}")
    if cfg["eval"]["mode"] not in EVAL_MODES:
        raise ConfigError(f"eval.mode must be one of {EVAL_MODES}")
    investigation_config(cfg)


def investigation_config(cfg: dict) -> InvestigationConfig:
    try:
        return InvestigationConfig(**cfg["investigation"])
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid investigation settings: {exc}") from None


def redacted(cfg: dict) -> dict:
    out = copy.deepcopy(cfg)
    if out["llm"]["api_key"]:
        out["llm"]["api_key"] = "***"
    return out

"""Service configuration: TOML file plus EXPLAINBENCH_* environment
overrides. Credentials never appear here, only the name of the environment
variable that holds them."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

ENV_PREFIX = "EXPLAINBENCH_"


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8321
    store_path: str = "./runs"
    lvm_provider: str = "mock"
    lvm_endpoint: str = ""
    lvm_credential_ref: str = "EXPLAINBENCH_LVM_KEY"
    lvm_timeout: float = 30.0
    lvm_max_retries: int = 2
    lvm_max_output_tokens: int = 512
    lvm_model: str = ""
    worker_limit: int = 4
    overlay_alpha: float = 0.5


def load_config(path: Optional[str] = None) -> ServiceConfig:
    cfg = ServiceConfig()
    if path:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
        for f in fields(ServiceConfig):
            if f.name in doc:
                setattr(cfg, f.name, doc[f.name])
    for f in fields(ServiceConfig):
        env_name = ENV_PREFIX + f.name.upper()
        if env_name in os.environ:
            raw = os.environ[env_name]
            current = getattr(cfg, f.name)
            if isinstance(current, bool):
                setattr(cfg, f.name, raw.lower() in ("1", "true", "yes"))
            elif isinstance(current, int):
                setattr(cfg, f.name, int(raw))
            elif isinstance(current, float):
                setattr(cfg, f.name, float(raw))
            else:
                setattr(cfg, f.name, raw)
    return cfg

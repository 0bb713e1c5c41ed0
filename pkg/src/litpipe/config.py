"""Run configuration: key=value file, environment overrides, flag overrides.

Precedence (lowest to highest): built-in defaults, the config file named by
--config or LITPIPE_CONFIG, environment variables (LITPIPE_SECTION_KEY for
section.key), then explicit CLI flags. Secrets are referenced only by the
NAME of an environment variable, never passed as values.
"""

from __future__ import annotations

import os
from pathlib import Path

from .errors import LitpipeError

CONFIG_ENV = "LITPIPE_CONFIG"

# Fixed default seed for every randomized subcommand, so bare runs reproduce.
DEFAULT_SEED = 1097

DEFAULTS: dict[str, str] = {
    "backend.base_url": "http://127.0.0.1:8798",
    "backend.model": "mock-model",
    "backend.api_key_env": "LITPIPE_API_KEY",
    "backend.timeout": "60",
    "backend.max_retries": "3",
    "backend.parallelism": "1",
    "synthesis.min_words": "250",
    "synthesis.max_words": "300",
    "synthesis.dedup_threshold": "0.7",
    "synthesis.seeds_per_request": "3",
    "synthesis.tasks_per_request": "5",
    "eval.host": "127.0.0.1",
    "eval.port": "8799",
    "seed": str(DEFAULT_SEED),
}


class RunConfig:
    def __init__(self, values: dict[str, str]):
        self._values = values

    @classmethod
    def load(cls, path: str | Path | None = None) -> "RunConfig":
        values = dict(DEFAULTS)
        config_path = path or os.environ.get(CONFIG_ENV)
        if config_path:
            config_path = Path(config_path)
            if not config_path.is_file():
                raise LitpipeError(f"config file not found: {config_path}")
            for line_no, line in enumerate(config_path.read_text(encoding="utf-8").splitlines(), 1):
                stripped = line.strip()
                if not stripped or stripped.startswith("#"):
                    continue
                if "=" not in stripped:
                    raise LitpipeError(f"{config_path}: line {line_no} is not key=value")
                key, _, value = stripped.partition("=")
                values[key.strip()] = value.strip()
        for key in list(values):
            env_name = "LITPIPE_" + key.upper().replace(".", "_")
            if env_name in os.environ:
                values[key] = os.environ[env_name]
        return cls(values)

    def get(self, key: str, override=None) -> str:
        if override is not None:
            return str(override)
        if key in self._values:
            return self._values[key]
        raise LitpipeError(f"unknown config key: {key}")

    def get_int(self, key: str, override=None) -> int:
        return int(self.get(key, override))

    def get_float(self, key: str, override=None) -> float:
        return float(self.get(key, override))

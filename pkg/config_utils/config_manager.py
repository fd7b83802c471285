# config_utils/config_manager.py
from enum import Enum
import os

from config_utils.property_reader import PropertyReader
from core import framework_settings
from core.errors import ConfigError

"""
Config load order (later wins):
  1) config/msfa.properties                     # base defaults (committed)
  2) config/msfa.local.properties (optional)    # local overlay (gitignored)
  3) MSFA_FORGE_<KEY> environment variables     # e.g. MSFA_FORGE_THREADS=1

Notes:
- Keys are declared in core.config_keys.ConfigKeys; dots map to underscores for env vars.
- Experiment-level settings (paths, block shape, seeds) live in the RunConfig JSON,
  which falls back to these values for anything it leaves unset.
"""



def env_name(key: str) -> str:
    return framework_settings.ENV_PREFIX + key.upper().replace(".", "_")


class ConfigManager:
    """Framework defaults from msfa.properties with local and environment overlays."""
    _loaded: dict[tuple[str, str], dict[str, str]] = {}

    def __init__(self, base_path: str | None = None, local_path: str | None = None):
        base_path = base_path or framework_settings.BASE_PROPERTIES
        local_path = local_path or framework_settings.LOCAL_PROPERTIES

        cache_key = (base_path, local_path)
        if cache_key not in ConfigManager._loaded:
            merged = dict(PropertyReader(base_path).properties)
            if os.path.exists(local_path):
                merged.update(PropertyReader(local_path).properties)  # overlay on top
            ConfigManager._loaded[cache_key] = merged

        self._props = ConfigManager._loaded[cache_key]

    @classmethod
    def clear_cache(cls) -> None:
        cls._loaded.clear()

    def get(self, key_enum: Enum, default: str | None = None) -> str | None:
        env_value = os.getenv(env_name(key_enum.value))
        if env_value is not None and env_value.strip():
            return env_value.strip()
        return self._props.get(key_enum.value, default)

    def get_int(self, key_enum: Enum, default: int | None = None) -> int | None:
        raw = self.get(key_enum)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            raise ConfigError("config", key_enum.value, f"expected an integer, got {raw!r}") from None

    def get_float(self, key_enum: Enum, default: float | None = None) -> float | None:
        raw = self.get(key_enum)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            raise ConfigError("config", key_enum.value, f"expected a number, got {raw!r}") from None

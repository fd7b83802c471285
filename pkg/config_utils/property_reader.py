import os

from core.errors import ConfigError


class PropertyReader:
    """Read a key=value properties file into a dict (comments start with '#')."""

    def __init__(self, file_path: str):
        if not os.path.exists(file_path):
            raise ConfigError("config", "read properties", f"Property file not found: {file_path}")
        self.file_path = file_path
        self.properties = self._load_properties()

    def _expand_value(self, value: str) -> str:
        # strip surrounding quotes if present
        if (value.startswith('"') and value.endswith('"')) or (value.startswith("'") and value.endswith("'")):
            value = value[1:-1]
        # expand ${VAR}, $VAR and ~
        value = os.path.expandvars(value)
        value = os.path.expanduser(value)
        return value

    def _load_properties(self) -> dict[str, str]:
        """Read property file and return as dictionary"""
        props = {}
        with open(self.file_path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                key_value = line.split("=", 1)
                if len(key_value) != 2:
                    raise ConfigError(
                        "config", "read properties",
                        f"{self.file_path}:{lineno} is not a key=value line: {line!r}",
                    )
                key, value = key_value
                props[key.strip()] = self._expand_value(value.strip())
        return props

    def get_property(self, key: str, default=None):
        """Get a property value by key"""
        return self.properties.get(key, default)

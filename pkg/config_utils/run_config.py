# config_utils/run_config.py
from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config_utils.config_manager import ConfigManager
from core.config_keys import ConfigKeys
from core.errors import ConfigError
from msfa.optimizer import OptimConfig
from msfa.spectral_core import BlockShape

"""
Experiment configuration (RunConfig JSON).

Precedence for every optional field (highest first):
  1) CLI flag overrides (passed to load_run_config as a dict)
  2) value in the JSON document
  3) framework default from config/msfa.properties (ConfigManager)
Relative paths are resolved against the JSON file's directory.
"""


class OptimSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    outer_iters: int | None = Field(default=None, ge=1)
    inner_max_iters: int | None = Field(default=None, ge=1)
    inner_tol: float | None = Field(default=None, gt=0)
    seed: int | None = None
    # "auto" / null: relative ridge; number: absolute ridge
    ridge: float | str | None = None
    log_every: int | None = Field(default=None, ge=1)
    early_stop: bool = False
    restarts: int = Field(default=1, ge=1)
    max_training_samples: int | None = Field(default=None, ge=1)

    @field_validator("ridge")
    @classmethod
    def _ridge(cls, value):
        if isinstance(value, str):
            if value.strip().lower() != "auto":
                raise ValueError("ridge must be a number >= 0, 'auto' or null")
            return None
        if value is not None and value < 0:
            raise ValueError("ridge must be >= 0")
        return value


class BaselineToggles(BaseModel):
    model_config = ConfigDict(extra="forbid")

    bandpass: bool = True
    bayer: bool = True
    markov_wiener: bool = True
    one_block: bool = True


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    training_cubes: list[Path] = Field(min_length=1)
    test_cubes: list[Path] = Field(default_factory=list)
    output_dir: Path
    block_w: int = Field(default=4, ge=1)
    block_h: int = Field(default=4, ge=1)
    optim: OptimSettings = Field(default_factory=OptimSettings)
    rho_spatial: float | None = Field(default=None, ge=0.0, lt=1.0)
    rho_spectral: float | None = Field(default=None, ge=0.0, lt=1.0)
    baselines: BaselineToggles = Field(default_factory=BaselineToggles)
    deterministic_trace: bool = False

    @model_validator(mode="after")
    def _paths_exist(self):
        missing = [str(p) for p in [*self.training_cubes, *self.test_cubes] if not p.is_file()]
        if missing:
            raise ValueError(f"referenced cube files do not exist: {', '.join(missing)}")
        return self

    @property
    def block(self) -> BlockShape:
        return BlockShape(self.block_w, self.block_h)

    def optim_config(self, cfg: ConfigManager | None = None) -> OptimConfig:
        """Merge the JSON optimizer settings over the framework defaults."""
        cfg = cfg or ConfigManager()
        o = self.optim
        return OptimConfig(
            outer_iters=o.outer_iters or cfg.get_int(ConfigKeys.OPTIM_OUTER_ITERS, 1000),
            inner_max_iters=o.inner_max_iters or cfg.get_int(ConfigKeys.OPTIM_INNER_MAX_ITERS, 200),
            inner_tol=o.inner_tol or cfg.get_float(ConfigKeys.OPTIM_INNER_TOL, 1e-7),
            seed=o.seed if o.seed is not None else cfg.get_int(ConfigKeys.OPTIM_SEED, 0),
            ridge=o.ridge,
            relative_ridge=cfg.get_float(ConfigKeys.RIDGE_RELATIVE, 1e-8),
            log_every=o.log_every or cfg.get_int(ConfigKeys.OPTIM_LOG_EVERY, 50),
            early_stop=o.early_stop,
            early_stop_window=cfg.get_int(ConfigKeys.OPTIM_EARLY_STOP_WINDOW, 10),
            early_stop_rtol=cfg.get_float(ConfigKeys.OPTIM_EARLY_STOP_RTOL, 1e-8),
        )

    def markov_rhos(self, cfg: ConfigManager | None = None) -> tuple[float, float]:
        cfg = cfg or ConfigManager()
        rho_s = self.rho_spatial if self.rho_spatial is not None else cfg.get_float(ConfigKeys.MARKOV_RHO_SPATIAL, 0.95)
        rho_l = self.rho_spectral if self.rho_spectral is not None else cfg.get_float(ConfigKeys.MARKOV_RHO_SPECTRAL, 0.95)
        return rho_s, rho_l


def _resolve_paths(doc: dict[str, Any], base: Path) -> dict[str, Any]:
    def _abs(p: Any) -> Any:
        if isinstance(p, str) and not Path(p).is_absolute():
            return str(base / p)
        return p

    doc = dict(doc)
    for key in ("training_cubes", "test_cubes"):
        if isinstance(doc.get(key), list):
            doc[key] = [_abs(p) for p in doc[key]]
    if "output_dir" in doc:
        doc["output_dir"] = _abs(doc["output_dir"])
    return doc


def _merge(doc: dict[str, Any], overrides: dict[str, Any]) -> dict[str, Any]:
    merged = dict(doc)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_run_config(path: str | Path, overrides: dict[str, Any] | None = None) -> RunConfig:
    """
    Read, merge and validate a RunConfig.
    Args:
      - path: JSON document.
      - overrides: CLI values (None entries are ignored; nested dicts merge into 'optim'/'baselines').
    Raises:
      - ConfigError on unreadable JSON, schema violations or missing cube files.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError("run_config", "load", f"config file not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError("run_config", "load", f"{path}: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError("run_config", "load", f"{path}: root must be a JSON object")
    doc = _merge(_resolve_paths(doc, path.parent), overrides or {})
    try:
        return RunConfig.model_validate(doc)
    except ValidationError as e:
        details = "; ".join(f"{'.'.join(str(x) for x in err['loc']) or 'config'}: {err['msg']}" for err in e.errors())
        raise ConfigError("run_config", "validate", f"{path}: {details}") from e

"""
Pipeline configuration: model, file loading and override precedence.

The config file is KEY=VALUE text read with python-dotenv (never exported
to os.environ). Keys are upper-case field names; list-valued keys take
comma-separated values. Precedence: overrides (CLI flags) > file > defaults.
"""
import logging
from pathlib import Path
from typing import Tuple

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from services.errors import ConfigError
from services.inversion import InversionConfig
from services.likelihood import LikelihoodConfig

logger = logging.getLogger(__name__)

INVERSION_KEYS = (
    "learning_rate", "beta1", "beta2", "adam_epsilon", "max_iterations",
    "stop_tolerance", "stop_window", "delta", "restarts", "init_scheme",
)
LIKELIHOOD_KEYS = (
    "psnr_threshold_db", "n_max", "n_min_hits", "sigma_min", "sigma_max",
    "sigma_ratio", "sigma_grid", "chunk_size",
)
LIST_KEYS = ("sigma_grid", "sweep_ids", "isotropic_floors_db")
# worker count and progress display never change results
NOT_ECHOED = ("inversion", "likelihood", "workers", "progress")


class PipelineConfig(BaseModel):
    """Everything run_pipeline needs besides the input paths."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    inversion: InversionConfig = Field(default_factory=InversionConfig)
    likelihood: LikelihoodConfig = Field(default_factory=LikelihoodConfig)
    seed: int = 0
    workers: int = 1
    run_unconstrained: bool = True
    sweep_ids: Tuple[int, ...] = ()
    sweep_draws: int = 1000
    isotropic_floors_db: Tuple[float, ...] = ()
    isotropic_draws: int = 1000
    histogram_bins: int = 50
    reference_draws: int = 10000
    rank_k: int = 10
    svg: bool = False
    progress: bool = False

    @field_validator("workers", "sweep_draws", "isotropic_draws", "histogram_bins", "reference_draws")
    @classmethod
    def _at_least_one(cls, value):
        if value < 1:
            raise ValueError("must be at least 1")
        return value

    @field_validator("seed", "rank_k")
    @classmethod
    def _non_negative(cls, value):
        if value < 0:
            raise ValueError("must be non-negative")
        return value

    def echo(self):
        """Flat mapping of every result-affecting setting, as written into report metadata."""
        flat = {k: v for k, v in self.model_dump().items() if k not in NOT_ECHOED}
        flat.update({k: v for k, v in self.inversion.model_dump().items() if k in INVERSION_KEYS})
        flat.update({k: v for k, v in self.likelihood.model_dump().items() if k in LIKELIHOOD_KEYS})
        return flat


def _split_list(value):
    if isinstance(value, (list, tuple)):
        return tuple(value)
    text = str(value).strip()
    if not text:
        return ()
    return tuple(part.strip() for part in text.split(",") if part.strip())


def build_config(values):
    """
    Build a PipelineConfig from a flat mapping of lower-case field names.

    Raises:
        ConfigError: Unknown key or invalid value.
    """
    inversion, likelihood, pipeline = {}, {}, {}
    pipeline_keys = set(PipelineConfig.model_fields) - {"inversion", "likelihood"}
    for key, value in values.items():
        if value is None:
            continue
        if key in LIST_KEYS:
            value = _split_list(value)
            if key == "sigma_grid" and not value:
                continue
        if key in INVERSION_KEYS:
            inversion[key] = value
        elif key in LIKELIHOOD_KEYS:
            likelihood[key] = value
        elif key in pipeline_keys:
            pipeline[key] = value
        else:
            raise ConfigError(f"unknown configuration key {key.upper()}")
    try:
        return PipelineConfig(
            inversion=InversionConfig(**inversion),
            likelihood=LikelihoodConfig(**likelihood),
            **pipeline,
        )
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}") from e


def load_config(path=None, overrides=None):
    """
    Load the pipeline configuration.

    Args:
        path: KEY=VALUE config file, or None for defaults only.
        overrides (dict): Lower-case field values that win over the file.

    Returns:
        PipelineConfig: Validated configuration.
    """
    values = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        values = {key.strip().lower(): value for key, value in dotenv_values(path).items()}
        logger.info(f"Loaded {len(values)} settings from {path}")
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    return build_config(values)

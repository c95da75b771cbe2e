"""Configuration settings for the application."""
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from src.errors import ConfigError
from src.models import Direction
from src.utils.date_utils import MONTH_DAYS, is_iso_date_string

logger = logging.getLogger(__name__)


class StrictModel(BaseModel):
    """Option group that rejects unknown keys."""

    model_config = ConfigDict(extra="forbid", frozen=True)


class IngestConfig(StrictModel):
    """How raw event records are read."""

    format: Literal["csv", "jsonl"] = "csv"
    delimiter: str = Field(default=",", min_length=1, max_length=1)
    timestamp_format: Literal["iso", "unix"] = "iso"
    strict: bool = False

    # Field names in the input records
    source_field: str = "source"
    target_field: str = "target"
    timestamp_field: str = "timestamp"
    text_field: str = "text"
    anonymous_field: str = "anonymous"
    event_id_field: str = "event_id"
    label_update_field: str = "label_update"
    label_targeted_field: str = "label_targeted"


class RelationshipCriteria(StrictModel):
    """Qualifying-relationship thresholds (both inclusive)."""

    min_events: int = Field(default=2, ge=1)
    min_duration_months: float = Field(default=1.0, ge=0.0)


class InclusionCriteria(StrictModel):
    """Active-ego thresholds."""

    min_monthly_rate: float = Field(default=10.0, gt=0.0)
    min_connections: int = Field(default=25, gt=0)


class ElbowParams(StrictModel):
    """Marginal explained-variance elbow rule."""

    marginal_gain_threshold: float = Field(default=0.05, gt=0.0, lt=1.0)
    zero_tol: float = Field(default=1e-12, ge=0.0)


class ReviewLexicon(StrictModel):
    """Case-insensitive regular expressions for the heuristic review classifier."""

    update_patterns: List[str] = [
        r"update soon",
        r"please update",
        r"can[’']?t wait for",
        r"continue",
        r"more chapters",
        r"next chapter",
    ]
    targeted_patterns: List[str] = [
        r"character",
        r"plot",
        r"grammar",
        r"dialogue",
        r"pacing",
        r"chapter\s+\d+\s+\w+",
        r"describe",
        r"scene",
    ]


class LayerSpec(StrictModel):
    """Planted parameters for one synthetic layer."""

    alter_count_mean: float = Field(gt=0.0)
    alter_count_dispersion: float = Field(default=0.0, ge=0.0)
    frequency_mean: float = Field(gt=0.0)
    frequency_sd: float = Field(default=0.0, ge=0.0)
    update_prob: float = Field(default=0.0, ge=0.0, le=1.0)
    targeted_prob: float = Field(default=0.0, ge=0.0, le=1.0)


class MixtureComponent(StrictModel):
    """Share of synthetic egos planted with a given layer structure."""

    weight: float = Field(gt=0.0, le=1.0)
    layers: List[LayerSpec] = Field(min_length=1)


def _default_mixture() -> List[MixtureComponent]:
    # Published reviewer-as-ego layer means with a coefficient of variation of 0.1.
    two = [
        LayerSpec(alter_count_mean=9.08, alter_count_dispersion=0.908, frequency_mean=7.01,
                  frequency_sd=0.701, update_prob=0.176, targeted_prob=0.553),
        LayerSpec(alter_count_mean=50.30, alter_count_dispersion=5.03, frequency_mean=1.26,
                  frequency_sd=0.126, update_prob=0.279, targeted_prob=0.498),
    ]
    three = [
        LayerSpec(alter_count_mean=3.89, alter_count_dispersion=0.389, frequency_mean=8.66,
                  frequency_sd=0.866, update_prob=0.176, targeted_prob=0.553),
        LayerSpec(alter_count_mean=14.76, alter_count_dispersion=1.476, frequency_mean=3.25,
                  frequency_sd=0.325, update_prob=0.243, targeted_prob=0.531),
        LayerSpec(alter_count_mean=40.73, alter_count_dispersion=4.073, frequency_mean=0.97,
                  frequency_sd=0.097, update_prob=0.279, targeted_prob=0.498),
    ]
    return [MixtureComponent(weight=0.7, layers=two), MixtureComponent(weight=0.3, layers=three)]


class SynthConfig(StrictModel):
    """Synthetic corpus generation."""

    n_egos: int = Field(default=1000, ge=1)
    mixture: List[MixtureComponent] = Field(default_factory=_default_mixture, min_length=1)
    span_months: float = Field(default=12.0, gt=0.0)
    start: str = "2020-01-01T00:00:00Z"
    frequency_model: Literal["gaussian", "lognormal"] = "gaussian"

    @model_validator(mode="after")
    def check_mixture(self) -> "SynthConfig":
        total = sum(component.weight for component in self.mixture)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"mixture weights must sum to 1, got {total}")
        if not is_iso_date_string(self.start):
            raise ValueError(f"start is not an ISO-8601 timestamp: {self.start}")
        return self


class RunConfig(BaseSettings):
    """Run settings: YAML file values, then environment variables, then defaults.

    CLI flags are applied on top of the file values by :func:`load_run_config`.
    """

    input_paths: List[Path] = []
    ingest: IngestConfig = IngestConfig()
    month_days: float = Field(default=MONTH_DAYS, ge=28.0, le=31.0)
    relationship: RelationshipCriteria = RelationshipCriteria()
    inclusion: InclusionCriteria = InclusionCriteria()

    # Clustering
    k_max: int = Field(default=20, ge=1, le=100)
    elbow: ElbowParams = ElbowParams()
    fixed_ks: List[int] = [2, 3]
    restrict_fixed_to_optimal: bool = False
    k_star_mass: float = Field(default=0.66, gt=0.0, le=1.0)
    directions: List[Direction] = [Direction.OUTGOING, Direction.INCOMING]
    cross_check_lloyd: bool = False

    # Review types
    label_source: Literal["file", "heuristic", "none"] = "none"
    label_path: Optional[Path] = None
    lexicon: ReviewLexicon = ReviewLexicon()
    unlabeled_policy: Literal["excluded", "in_denominator"] = "excluded"
    crosstab_k: int = Field(default=3, ge=1, le=100)
    crosstab_direction: Direction = Direction.OUTGOING

    # Outputs and execution
    output_dir: Path = Path("out")
    seed: int = Field(default=42, ge=0)
    parallelism: int = Field(default=1, ge=1, le=256)
    synth: SynthConfig = SynthConfig()

    model_config = SettingsConfigDict(
        env_prefix="DUNBAR_",
        env_nested_delimiter="__",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="forbid",
    )

    @model_validator(mode="after")
    def check_consistency(self) -> "RunConfig":
        if any(k < 1 for k in self.fixed_ks):
            raise ValueError("fixed_ks entries must be positive")
        if not self.directions:
            raise ValueError("at least one direction is required")
        if self.label_source == "file" and self.label_path is None:
            raise ValueError("label_source=file requires label_path")
        return self

    def manifest_echo(self) -> Dict[str, Any]:
        """Config as recorded in run manifests. Parallelism never changes outputs."""
        return self.model_dump(mode="json", exclude={"parallelism"})


def _deep_merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_run_config(path: Optional[Path] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Build a RunConfig from an optional YAML file plus CLI overrides.

    Args:
        path: YAML file holding any subset of the documented keys
        overrides: values from command-line flags; nested dicts merge into the file values

    Returns:
        The validated configuration

    Raises:
        ConfigError: unreadable file, unknown keys or out-of-range values
    """
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                loaded = yaml.safe_load(fh)
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"cannot read config file {path}: {e}") from e
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {path} must hold a mapping at top level")
        data = loaded
        logger.info(f"Loaded config file {path}")

    data = _deep_merge(data, {k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        return RunConfig(**data)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}") from e

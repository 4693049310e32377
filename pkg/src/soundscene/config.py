"""YAML-backed run configuration.

One config file drives the whole pipeline: dataset seeding, pool
manifests, scene priors, sampler settings, and the planner endpoint.
Secrets never live in the file; the planner section names an
environment variable and the token is read from the process
environment at request time.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from soundscene.phonemes import OOV_POLICIES
from soundscene.scene import ScenePriors

SCHEDULE_FAMILIES = ("cosine", "linear")
SAMPLER_MODES = ("ancestral", "deterministic")

DEFAULT_API_KEY_ENV = "PLANNER_API_KEY"


class ConfigError(ValueError):
    """Raised when a config file is malformed or inconsistent."""


@dataclass(frozen=True)
class SamplerConfig:
    """Reverse-process settings for the `sample` command."""

    T: int = 100
    schedule: str = "cosine"
    t1: int = 88
    w_low: float = 3.0
    w_high: float = 9.0
    mode: str = "ancestral"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.T < 1:
            raise ConfigError(f"sampler.T must be >= 1, got {self.T}")
        if self.schedule not in SCHEDULE_FAMILIES:
            raise ConfigError(
                f"sampler.schedule must be one of {SCHEDULE_FAMILIES}, got {self.schedule!r}"
            )
        if not 0 <= self.t1 <= self.T:
            raise ConfigError(f"sampler.t1 must lie in [0, T={self.T}], got {self.t1}")
        if self.mode not in SAMPLER_MODES:
            raise ConfigError(
                f"sampler.mode must be one of {SAMPLER_MODES}, got {self.mode!r}"
            )


@dataclass(frozen=True)
class PlannerEndpoint:
    """Chat-completion endpoint for the prompt planner.

    api_key_env names the environment variable holding the bearer
    token; the token itself is never written to disk.
    """

    url: str
    model: str
    api_key_env: str = DEFAULT_API_KEY_ENV
    timeout: float = 30.0

    def __post_init__(self) -> None:
        if not self.url:
            raise ConfigError("planner.url must be a non-empty URL")
        if not self.model:
            raise ConfigError("planner.model must be a non-empty model name")
        if self.timeout <= 0:
            raise ConfigError(f"planner.timeout must be positive, got {self.timeout}")


@dataclass(frozen=True)
class PipelineConfig:
    dataset_seed: int = 0
    output_dir: str = "out"
    speech_manifest: str | None = None
    background_manifest: str | None = None
    priors: ScenePriors = field(default_factory=ScenePriors)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    lexicon_path: str | None = None
    oov_policy: str = "letter_fallback"
    planner: PlannerEndpoint | None = None

    def __post_init__(self) -> None:
        if self.oov_policy not in OOV_POLICIES:
            raise ConfigError(
                f"oov_policy must be one of {OOV_POLICIES}, got {self.oov_policy!r}"
            )


def _check_keys(section: str, raw: dict[str, Any], allowed: set[str]) -> None:
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ConfigError(f"{section}: unknown keys {unknown}")


def _priors_from_dict(raw: dict[str, Any]) -> ScenePriors:
    _check_keys(
        "priors", raw, {"p_single_speaker", "utterance_count_pmf", "snr_range_db"}
    )
    kwargs: dict[str, Any] = {}
    if "p_single_speaker" in raw:
        kwargs["p_single_speaker"] = float(raw["p_single_speaker"])
    if "utterance_count_pmf" in raw:
        pmf_raw = raw["utterance_count_pmf"]
        if not isinstance(pmf_raw, dict):
            raise ConfigError("priors.utterance_count_pmf must be a mapping")
        # YAML keys may arrive as strings; counts are integers
        kwargs["utterance_count_pmf"] = {
            int(k): float(v) for k, v in pmf_raw.items()
        }
    if "snr_range_db" in raw:
        rng = raw["snr_range_db"]
        if not isinstance(rng, (list, tuple)) or len(rng) != 2:
            raise ConfigError("priors.snr_range_db must be a [low, high] pair")
        kwargs["snr_range_db"] = (float(rng[0]), float(rng[1]))
    try:
        return ScenePriors(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"priors: {exc}") from exc


def _sampler_from_dict(raw: dict[str, Any]) -> SamplerConfig:
    fields = {f.name for f in dataclasses.fields(SamplerConfig)}
    _check_keys("sampler", raw, fields)
    return SamplerConfig(**raw)


def _planner_from_dict(raw: dict[str, Any]) -> PlannerEndpoint:
    if "api_key" in raw or "token" in raw:
        raise ConfigError("planner: store no token in the config; set api_key_env")
    fields = {f.name for f in dataclasses.fields(PlannerEndpoint)}
    _check_keys("planner", raw, fields)
    return PlannerEndpoint(**raw)


_TOP_LEVEL_KEYS = {
    "dataset_seed",
    "output_dir",
    "speech_manifest",
    "background_manifest",
    "priors",
    "sampler",
    "lexicon_path",
    "oov_policy",
    "planner",
}


def config_from_dict(raw: dict[str, Any]) -> PipelineConfig:
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a mapping, got {type(raw).__name__}")
    _check_keys("config", raw, _TOP_LEVEL_KEYS)
    kwargs: dict[str, Any] = {}
    for key in ("dataset_seed",):
        if key in raw:
            kwargs[key] = int(raw[key])
    for key in ("output_dir", "speech_manifest", "background_manifest",
                "lexicon_path", "oov_policy"):
        if key in raw and raw[key] is not None:
            kwargs[key] = str(raw[key])
    if raw.get("priors") is not None:
        if not isinstance(raw["priors"], dict):
            raise ConfigError("priors must be a mapping")
        kwargs["priors"] = _priors_from_dict(raw["priors"])
    if raw.get("sampler") is not None:
        if not isinstance(raw["sampler"], dict):
            raise ConfigError("sampler must be a mapping")
        kwargs["sampler"] = _sampler_from_dict(raw["sampler"])
    if raw.get("planner") is not None:
        if not isinstance(raw["planner"], dict):
            raise ConfigError("planner must be a mapping")
        kwargs["planner"] = _planner_from_dict(raw["planner"])
    try:
        return PipelineConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> PipelineConfig:
    """Parse a YAML config file into a PipelineConfig."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{p}: invalid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    try:
        return config_from_dict(raw)
    except ConfigError as exc:
        raise ConfigError(f"{p}: {exc}") from exc

"""Experiment configuration: pydantic schemas and the INI loader.

An experiment file has an ``[environment]`` section, a ``[trainer]`` section,
an optional ``[harness]`` section and any number of ``[arm.<name>]`` sections
whose keys override ``[trainer]`` for that arm. Lists are comma separated;
the rows of a nested list (bandit arms) are separated by ``;``.
"""

import configparser
import logging
import os
import re
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional, Sequence, Union

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from exceptions import ConfigError

# Load env variables
load_dotenv()

logger = logging.getLogger(__name__)

DEFAULT_OUTPUT_ROOT = os.getenv("MORL_OUTPUT_ROOT", "runs")
LOGGING_INI = os.getenv("MORL_LOGGING_INI", str(Path(__file__).with_name("logging.ini")))


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


def _split_rows(value: Any) -> Any:
    if isinstance(value, str):
        return [_split_list(row) for row in value.split(";") if row.strip()]
    return value


def _none_if_blank(value: Any) -> Any:
    if isinstance(value, str) and value.strip().lower() in ("", "none", "null"):
        return None
    return value


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# --- 1. Clipping ---
class ClipConfig(_Section):
    """PPO clip range and dual-clip constant; 100/100 disables clipping in effect."""

    epsilon: float = Field(100.0, gt=0)
    dual_clip_c: float = 100.0
    enabled: bool = True

    @model_validator(mode="after")
    def check_dual_clip(self) -> "ClipConfig":
        if self.enabled and self.dual_clip_c <= 1:
            raise ValueError("dual_clip_c must be > 1 when clipping is enabled")
        return self


# --- 2. Environments ---
class DeepSeaTreasureConfig(_Section):
    kind: Literal["deep_sea_treasure"]
    depths: List[int] = Field(default_factory=lambda: [1, 2, 3, 4, 4, 4])
    treasures: List[float] = Field(default_factory=lambda: [1.0, 2.0, 3.0, 5.0, 8.0, 16.0])
    horizon: int = Field(20, ge=1)
    time_scale: float = Field(1.0, gt=0, le=1)
    reference: Optional[List[float]] = None

    @field_validator("depths", "treasures", mode="before")
    @classmethod
    def split_lists(cls, v):
        return _split_list(v)

    @field_validator("reference", mode="before")
    @classmethod
    def split_reference(cls, v):
        return _split_list(_none_if_blank(v))


class ReasoningConfig(_Section):
    """Template table of the synthetic accuracy/conciseness/clarity task.

    ``template_correct`` holds one 0/1 string per template, one character per
    context (``"110"``: correct for contexts 0 and 1).
    """

    kind: Literal["synthetic_reasoning"]
    template_correct: List[str] = Field(
        default_factory=lambda: ["111", "111", "110", "000", "100", "001"]
    )
    template_lengths: List[int] = Field(default_factory=lambda: [900, 600, 300, 150, 450, 200])
    template_steps: List[int] = Field(default_factory=lambda: [1, 0, 1, 0, 1, 0])
    initial_average: Optional[float] = None
    reference: Optional[List[float]] = None

    @field_validator("template_correct", "template_lengths", "template_steps", mode="before")
    @classmethod
    def split_lists(cls, v):
        return _split_list(v)

    @field_validator("reference", mode="before")
    @classmethod
    def split_reference(cls, v):
        return _split_list(_none_if_blank(v))

    @field_validator("initial_average", mode="before")
    @classmethod
    def blank_average(cls, v):
        return _none_if_blank(v)

    @model_validator(mode="after")
    def check_table(self) -> "ReasoningConfig":
        n = len(self.template_correct)
        if n == 0:
            raise ValueError("template table is empty")
        if len(self.template_lengths) != n or len(self.template_steps) != n:
            raise ValueError("template_correct, template_lengths and template_steps differ in length")
        if len({len(row) for row in self.template_correct}) != 1:
            raise ValueError("every template_correct entry needs one character per context")
        if any(set(row) - {"0", "1"} for row in self.template_correct):
            raise ValueError("template_correct entries may only contain 0 and 1")
        return self


class BanditConfig(_Section):
    kind: Literal["mo_bandit"]
    arms: List[List[float]] = Field(default_factory=lambda: [[1.0, 0.0], [0.0, 1.0], [0.2, 0.2]])
    bernoulli: bool = False
    reference: Optional[List[float]] = None

    @field_validator("arms", mode="before")
    @classmethod
    def split_rows(cls, v):
        return _split_rows(v)

    @field_validator("reference", mode="before")
    @classmethod
    def split_reference(cls, v):
        return _split_list(_none_if_blank(v))


EnvironmentConfig = Annotated[
    Union[DeepSeaTreasureConfig, ReasoningConfig, BanditConfig], Field(discriminator="kind")
]


class _EnvironmentHolder(BaseModel):
    environment: EnvironmentConfig


# --- 3. Trainer ---
class TrainerConfig(_Section):
    algorithm: Literal["REINFORCE", "RLOO", "GRPO"] = "REINFORCE"
    weighting: Literal["fixed", "hypervolume_guided", "gradient_based"] = "fixed"
    w0: Optional[List[float]] = None
    batch_size: int = Field(64, ge=1, description="contexts per step (B)")
    rollout_size: int = Field(8, ge=1, description="rollouts per context (G)")
    max_steps: int = Field(200, ge=1)
    gamma: float = Field(1.0, gt=0.0, le=1.0)
    policy_lr: float = Field(0.1, ge=0.0)
    max_grad_norm: Optional[float] = Field(1.0, gt=0.0)
    logit_bound: float = Field(20.0, gt=0.0)
    schedule: Literal["constant", "polynomial"] = "polynomial"
    eta: float = Field(1e-6, gt=0.0, description="weight learning rate (base of the schedule)")
    schedule_power: float = 1.03
    mu: float = Field(1e-5, gt=0.0, description="entropic regularization factor")
    clip_epsilon: float = Field(100.0, gt=0.0)
    dual_clip_c: float = 100.0
    clip_enabled: bool = True
    eval_every: int = Field(1, ge=1)
    eval_episodes: int = Field(32, ge=1)
    greedy_eval: bool = False
    checkpoint_every: int = Field(10, ge=1)
    seed: int = 0
    mask_features: Optional[List[int]] = None
    meta_reward_activation: Literal["tanh"] = Field(
        "tanh",
        description=(
            "0.5 + 1.5·tanh(ΔHV). Other shapes from the search (1 + sigmoid, "
            "2·sigmoid, 0.5 + 1.5·tanh(3·ΔHV)) are documented only."
        ),
    )
    force_unit_meta_reward: bool = Field(
        False, description="diagnostic: keep r_pareto at 1 to compare against fixed weighting"
    )

    @field_validator("w0", "mask_features", mode="before")
    @classmethod
    def split_lists(cls, v):
        return _split_list(_none_if_blank(v))

    @property
    def clip(self) -> ClipConfig:
        return ClipConfig(
            epsilon=self.clip_epsilon, dual_clip_c=self.dual_clip_c, enabled=self.clip_enabled
        )

    @model_validator(mode="after")
    def check_consistency(self) -> "TrainerConfig":
        if self.clip_enabled and self.dual_clip_c <= 1:
            raise ValueError("dual_clip_c must be > 1 when clipping is enabled")
        if self.weighting in ("fixed", "hypervolume_guided") and self.w0 is None:
            raise ValueError(f"weighting={self.weighting} requires explicit w0 weights")
        if self.algorithm in ("RLOO", "GRPO") and self.rollout_size < 2:
            raise ValueError(f"{self.algorithm} needs rollout_size >= 2")
        if self.schedule == "polynomial" and self.schedule_power <= 1:
            raise ValueError("schedule_power must be > 1 for a polynomial schedule")
        return self


# --- 4. Harness ---
class HarnessSection(_Section):
    out_dir: Optional[Path] = None
    n_seeds: int = Field(1, ge=1)
    parallel: int = Field(1, ge=1)

    @field_validator("out_dir", mode="before")
    @classmethod
    def blank_out_dir(cls, v):
        return _none_if_blank(v)


class HarnessConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    source: Optional[Path] = None
    environment: EnvironmentConfig
    harness: HarnessSection = HarnessSection()
    arms: Dict[str, TrainerConfig]

    @property
    def output_root(self) -> Path:
        return Path(self.harness.out_dir or DEFAULT_OUTPUT_ROOT)


# --- 5. Loading ---

_ARM_PREFIX = "arm."
_KNOWN_SECTIONS = ("environment", "trainer", "harness")
_LOC_NOISE = {"environment", "deep_sea_treasure", "synthetic_reasoning", "mo_bandit"}


def _locate(text: str, section: str, key: Optional[str]) -> Optional[int]:
    """1-based line of ``key`` inside ``[section]`` (or of the header)."""
    current = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        header = re.match(r"\s*\[([^\]]+)\]", line)
        if header:
            current = header.group(1).strip()
            if key is None and current == section:
                return lineno
            continue
        if current == section and key is not None:
            if re.match(rf"\s*{re.escape(key)}\s*[=:]", line):
                return lineno
    return None


def _where(path: str, text: str, section: str, key: Optional[str] = None) -> str:
    line = _locate(text, section, key)
    loc = f"{path}:{line}" if line else path
    return f"{loc}: [{section}]" + (f" {key}" if key else "")


def _validation_detail(path: str, text: str, section: str, exc: ValidationError) -> str:
    messages = []
    for err in exc.errors():
        # the environment union prefixes locations with the holder field and the kind tag
        names = [p for p in err["loc"] if isinstance(p, str) and p not in _LOC_NOISE]
        key = names[0] if names else None
        messages.append(f"{_where(path, text, section, key)}: {err['msg']}")
    return "; ".join(messages)


def apply_overrides(parser: configparser.ConfigParser, overrides: Sequence[str]) -> None:
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        dotted, value = item.split("=", 1)
        section, key = dotted.rsplit(".", 1)
        section, key = section.strip(), key.strip()
        if not parser.has_section(section):
            raise ConfigError(f"override {item!r} names unknown section [{section}]")
        parser.set(section, key, value.strip())


def load_harness_config(path: Union[str, Path], overrides: Sequence[str] = ()) -> HarnessConfig:
    """Parse and validate an experiment file; nothing runs on failure."""
    path = str(path)
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}")

    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keep key case
    try:
        parser.read_string(text, source=path)
    except configparser.Error as e:
        raise ConfigError(f"{path}: parse error: {e}")
    apply_overrides(parser, overrides)

    for section in parser.sections():
        if section not in _KNOWN_SECTIONS and not section.startswith(_ARM_PREFIX):
            raise ConfigError(f"{_where(path, text, section)}: unknown section")
    for required in ("environment", "trainer"):
        if not parser.has_section(required):
            raise ConfigError(f"{path}: missing required section [{required}]")

    try:
        environment = _EnvironmentHolder.model_validate(
            {"environment": dict(parser.items("environment"))}
        ).environment
    except ValidationError as e:
        raise ConfigError(_validation_detail(path, text, "environment", e))

    try:
        harness = HarnessSection.model_validate(
            dict(parser.items("harness")) if parser.has_section("harness") else {}
        )
    except ValidationError as e:
        raise ConfigError(_validation_detail(path, text, "harness", e))

    base = dict(parser.items("trainer"))
    arm_sections = [s for s in parser.sections() if s.startswith(_ARM_PREFIX)]
    raw_arms = {s[len(_ARM_PREFIX):]: (s, {**base, **dict(parser.items(s))}) for s in arm_sections}
    if not raw_arms:
        raw_arms = {"default": ("trainer", base)}

    arms = {}
    for name, (section, values) in raw_arms.items():
        try:
            arms[name] = TrainerConfig.model_validate(values)
        except ValidationError as e:
            raise ConfigError(_validation_detail(path, text, section, e))

    return HarnessConfig(source=Path(path), environment=environment, harness=harness, arms=arms)

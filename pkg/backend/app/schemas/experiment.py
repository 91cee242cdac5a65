"""
Experiment configuration and run outputs.
"""
import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, ValidationInfo, field_validator

from app.core.config import settings
from app.core.exceptions import ConfigError
from app.core.validators import parse_csv_list
from app.models.estimator import BaselineKind, EstimatorTag, ExpectedMode, OracleArm, Testbed
from app.schemas.gate import EstimatorKind

ESTIMATOR_TOKENS = {tag.value for tag in EstimatorTag} | {arm.value for arm in OracleArm}

DEFAULT_ACTIONS = {Testbed.BANDIT: 100, Testbed.MULTICTX: 10}
DEFAULT_STEPS = {Testbed.BANDIT: 2000, Testbed.MULTICTX: 1000, Testbed.CLASSIFY: 10_000}

SWEEP_AXES = {
    "eta": float,
    "entropy_alpha": float,
    "ucb_alpha": float,
    "beta": float,
    "learning_rate": float,
    "alpha": float,
    "bandit_baseline": float,
    "error": float,
    "synthetic_spread": float,
    "batch": int,
    "width": int,
    "num_actions": int,
    "contexts": int,
    "steps": int,
    "samples_per_input": int,
}

Arm = Union[EstimatorKind, OracleArm]


def split_token(token: str) -> Tuple[str, Optional[float]]:
    """'ucb:0.25' -> ('ucb', 0.25); 'dg' -> ('dg', None)."""
    name, _, raw = token.partition(":")
    return name, (float(raw) if raw else None)


def needs_quotes(value: str) -> bool:
    return "#" in value or value != value.strip() or value.startswith('"')


def strip_comment(line: str) -> str:
    """Drop a trailing '#' comment; '#' inside double quotes is kept."""
    quoted = escaped = False
    for i, ch in enumerate(line):
        if escaped:
            escaped = False
        elif ch == "\\" and quoted:
            escaped = True
        elif ch == '"':
            quoted = not quoted
        elif ch == "#" and not quoted:
            return line[:i]
    return line


def unquote(value: str, key: str) -> str:
    if len(value) < 2 or not (value[0] == value[-1] == '"'):
        return value
    try:
        return json.loads(value)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed quoted value {value}", field=key) from exc


class ExperimentConfig(BaseModel):
    """Parameters of one experiment; flat enough for key=value files."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    testbed: Testbed = Testbed.BANDIT
    label: str = Field("default", min_length=1)

    # Estimators
    estimators: List[str] = Field(default_factory=lambda: ["pg", "dg"])
    eta: float = Field(1.0, gt=0)
    entropy_alpha: float = Field(0.01, ge=0)
    ucb_alpha: float = Field(0.5, ge=0, le=1.25)
    beta: float = Field(1.0, ge=0)
    whiten: bool = False

    # Baselines and sampling
    baselines: List[BaselineKind] = Field(default_factory=lambda: [BaselineKind.EXPECTED])
    expected_mode: ExpectedMode = ExpectedMode.SUM_SQ
    samples_per_input: List[int] = Field(default_factory=lambda: [1])
    bandit_baseline: float = Field(0.5, ge=0, lt=1)
    error: Optional[float] = Field(None, gt=0, lt=1)

    # Sizes
    num_actions: Optional[int] = Field(None, ge=2)
    contexts: int = Field(100, ge=1)
    batch: int = Field(100, ge=1)
    steps: Optional[int] = Field(None, ge=1)
    width: int = Field(100, ge=1)
    learning_rate: float = Field(1e-3, ge=0)
    alpha: float = Field(0.1, ge=0)

    # Seeds
    seeds: int = Field(10, ge=1)
    base_seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED)
    workers: int = Field(default_factory=lambda: settings.MAX_WORKERS, ge=1)

    # Data
    dataset: str = "synthetic"
    synthetic_classes: int = Field(10, ge=2)
    synthetic_dim: int = Field(20, ge=1)
    synthetic_per_class: int = Field(200, ge=1)
    synthetic_spread: float = Field(1.0, ge=0)
    eval_every: int = Field(100, ge=1)

    # Sweeps
    sweep_target: Testbed = Testbed.CLASSIFY
    sweep_axis: Optional[str] = None
    sweep_values: List[float] = Field(default_factory=list)

    output_dir: Path = Field(default_factory=lambda: settings.OUTPUT_DIR)

    @field_validator("estimators", "baselines", "samples_per_input", "sweep_values", mode="before")
    @classmethod
    def split_lists(cls, v):
        if isinstance(v, str):
            return parse_csv_list(v)
        return v

    @field_validator("estimators")
    @classmethod
    def check_estimators(cls, v: List[str]) -> List[str]:
        if not v:
            raise ValueError("at least one estimator is required")
        for token in v:
            name, param = split_token(token)
            if name not in ESTIMATOR_TOKENS:
                raise ValueError(f"unknown estimator '{token}'")
            if param is not None and name not in ("entropy-pg", "ucb", "se"):
                raise ValueError(f"estimator '{name}' takes no parameter")
            if param is not None and (param < 0 or (name == "ucb" and param > 1.25)):
                raise ValueError(f"estimator parameter out of range in '{token}'")
        return v

    @field_validator("samples_per_input")
    @classmethod
    def check_samples(cls, v: List[int]) -> List[int]:
        if not v or any(s < 1 for s in v):
            raise ValueError("samples_per_input must be a nonempty list of counts >= 1")
        return v

    @field_validator("baselines")
    @classmethod
    def check_baselines(cls, v: List[BaselineKind]) -> List[BaselineKind]:
        if not v:
            raise ValueError("at least one baseline is required")
        return v

    @field_validator("estimators")
    @classmethod
    def check_testbed_estimators(cls, v: List[str], info: ValidationInfo) -> List[str]:
        testbed = info.data.get("testbed")
        names = {split_token(token)[0] for token in v}
        if testbed is Testbed.MULTICTX and not names <= {"pg", "dg", "ce"}:
            raise ValueError("multictx supports the pg, dg and ce estimators")
        if testbed is Testbed.BANDIT and names & {"ce", "pg-oracle"}:
            raise ValueError("bandit runs do not support oracle arms")
        return v

    @field_validator("learning_rate")
    @classmethod
    def check_learning_rate(cls, v: float, info: ValidationInfo) -> float:
        if info.data.get("testbed") is Testbed.CLASSIFY and v <= 0:
            raise ValueError("learning_rate must be > 0 for classify")
        return v

    @field_validator("sweep_axis")
    @classmethod
    def check_sweep_axis(cls, v: Optional[str]) -> Optional[str]:
        if v is not None and v not in SWEEP_AXES:
            raise ValueError(f"unknown sweep axis '{v}'")
        return v

    # Parsing

    @classmethod
    def parse(cls, values: Mapping[str, Any]) -> "ExperimentConfig":
        """Validate a mapping, turning pydantic errors into ConfigError."""
        try:
            config = cls.model_validate(dict(values))
        except ValidationError as exc:
            first = exc.errors()[0]
            field = ".".join(str(part) for part in first["loc"]) or None
            raise ConfigError(first["msg"], field=field) from exc
        return config.check_sizes()

    def check_sizes(self) -> "ExperimentConfig":
        """Cross-field bounds that depend on the testbed a run resolves to."""
        target = self.sweep_target if self.testbed is Testbed.SWEEP else self.testbed
        if target is Testbed.BANDIT and self.num_actions is not None and self.num_actions < 3:
            raise ConfigError("the symmetric bandit needs at least 3 actions", field="num_actions")
        return self

    @staticmethod
    def read_pairs(text: str) -> Dict[str, str]:
        """Parse flat key=value lines.

        '#' starts a comment outside double quotes; a double-quoted value is
        read as a JSON string. Empty values are skipped.
        """
        pairs: Dict[str, str] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = strip_comment(raw).strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(f"line {lineno} is not key=value", field=line)
            key, value = key.strip(), value.strip()
            if value:
                pairs[key] = unquote(value, key)
        return pairs

    @classmethod
    def from_text(cls, text: str, overrides: Optional[Mapping[str, Any]] = None) -> "ExperimentConfig":
        values: Dict[str, Any] = dict(cls.read_pairs(text))
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.parse(values)

    @classmethod
    def from_file(cls, path: Path, overrides: Optional[Mapping[str, Any]] = None) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file ({exc})", field="config") from exc
        return cls.from_text(text, overrides)

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        values = self.model_dump()
        values.update({k: v for k, v in overrides.items() if v is not None})
        return self.parse(values)

    def to_echo(self) -> str:
        """key=value text that re-parses to an equal config."""
        lines = []
        for name, value in self.model_dump(mode="json").items():
            if value is None:
                continue
            if isinstance(value, list):
                value = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
            elif isinstance(value, float):
                value = repr(value)
            elif isinstance(value, bool):
                value = str(value).lower()
            elif isinstance(value, str) and needs_quotes(value):
                value = json.dumps(value)
            lines.append(f"{name}={value}")
        return "\n".join(lines) + "\n"

    # Resolved values

    @property
    def resolved_actions(self) -> int:
        return self.num_actions or DEFAULT_ACTIONS.get(self.testbed, 10)

    @property
    def resolved_steps(self) -> int:
        return self.steps or DEFAULT_STEPS.get(self.testbed, 1000)

    @property
    def resolved_error(self) -> float:
        """Initial bandit error; uniform logits unless set."""
        k = self.resolved_actions
        return self.error if self.error is not None else (k - 1) / k

    def arm_kinds(self) -> List[Tuple[str, Arm]]:
        """(token, estimator) pairs in config order."""
        arms: List[Tuple[str, Arm]] = []
        for token in self.estimators:
            name, param = split_token(token)
            if name in (arm.value for arm in OracleArm):
                arms.append((token, OracleArm(name)))
                continue
            tag = EstimatorTag(name)
            if tag is EstimatorTag.PG:
                kind = EstimatorKind.pg()
            elif tag is EstimatorTag.DG:
                kind = EstimatorKind.dg(self.eta)
            elif tag is EstimatorTag.ENTROPY_PG:
                kind = EstimatorKind.entropy_pg(self.entropy_alpha if param is None else param)
            elif tag is EstimatorTag.UCB_ADDITIVE:
                kind = EstimatorKind.ucb_additive(self.ucb_alpha if param is None else param, self.eta)
            else:
                kind = EstimatorKind.surprisal_exponent(self.beta if param is None else param, self.eta)
            arms.append((token, kind))
        return arms


class RunSummary(BaseModel):
    """Final metrics of one arm on one seed."""

    kind: Literal["run"] = "run"
    testbed: Testbed
    label: str
    arm: str
    seed: int
    final_error: float
    final_val_error: Optional[float] = None
    tail_misalignment: Optional[float] = None
    label_dependent: bool = False
    config: Dict[str, Any] = Field(default_factory=dict)


class ArmComparison(BaseModel):
    """Paired one-sided comparison of two arms' final errors across seeds."""

    kind: Literal["comparison"] = "comparison"
    testbed: Testbed
    label: str
    better: str
    worse: str
    mean_better: float
    mean_worse: float
    p_value: Optional[float] = None
    gap_closed: Optional[float] = None


class SweepRow(BaseModel):
    """Mean and standard error of the final error for one sweep cell."""

    axis: str
    value: float
    arm: str
    mean_final_error: float
    stderr_final_error: float
    seeds: int


class RunResult(BaseModel):
    """What a run wrote and its summaries."""

    output_dir: str
    summaries: List[RunSummary]
    comparisons: List[ArmComparison] = Field(default_factory=list)

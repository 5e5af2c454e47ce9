from pathlib import Path

from pydantic import BaseModel, Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from Network.inputs import NetworkConfig
from Training.inputs import LossConfig, OptimizerConfig, TrainConfig
from Utilities.errors import ConfigurationError


class DatasetSpec(BaseModel):
    """On-disk layout of a saliency dataset: one file per stem in each directory."""

    root: Path = Field(title="Dataset Root")
    rgb_dir: str = Field(default="RGB", title="RGB Directory")
    depth_dir: str | None = Field(
        default="depth",
        title="Depth Directory",
        description="None for RGB-only datasets.",
    )
    gt_dir: str | None = Field(
        default="GT",
        title="Ground Truth Directory",
        description="None when only predictions are needed.",
    )
    extensions: list[str] = Field(
        default=[".png", ".jpg", ".jpeg"],
        title="Image Extensions",
    )

    def directories(self) -> dict[str, Path]:
        dirs = {"rgb": self.root / self.rgb_dir}
        if self.depth_dir is not None:
            dirs["depth"] = self.root / self.depth_dir
        if self.gt_dir is not None:
            dirs["gt"] = self.root / self.gt_dir
        return dirs


class RunConfig(BaseModel):
    """Everything a training or ablation run needs, serializable to JSON."""

    network: NetworkConfig = Field(default_factory=NetworkConfig, title="Network")
    loss: LossConfig = Field(default_factory=LossConfig, title="Loss")
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig, title="Optimizer")
    training: TrainConfig = Field(default_factory=TrainConfig, title="Training")
    dataset: DatasetSpec | None = Field(default=None, title="Training Dataset")
    rgb_dataset: DatasetSpec | None = Field(
        default=None,
        title="RGB-only Dataset",
        description="Images for the RGB task when training.multitask is on.",
    )
    output_dir: Path = Field(default=Path("runs/latest"), title="Output Directory")

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            return cls.model_validate_json(Path(path).read_text())
        except OSError as e:
            raise ConfigurationError(f"Cannot read run config {path}: {e}") from e
        except ValidationError as e:
            raise ConfigurationError(f"Invalid run config {path}: {e}") from e

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.model_dump_json(indent=2))
        return path


class HarnessSettings(BaseSettings):
    """Process-level settings read from JLDCF_* variables and a .env file."""

    model_config = SettingsConfigDict(env_prefix="JLDCF_", env_file=".env", extra="ignore")

    log_level: str = Field(default="INFO", title="Log Level")
    output_root: Path = Field(default=Path("runs"), title="Default Output Root")
    workers: int = Field(
        default=1,
        title="Evaluation Workers",
        description="Threads used to score images in parallel.",
        ge=1,
    )
    progress: bool = Field(default=True, title="Progress Bars")


class CommandInputs(BaseModel):
    """Flags shared by the commands that build a RunConfig."""

    config: Path | None = Field(default=None, title="Run Config File")
    out: Path | None = Field(default=None, title="Output Directory")
    seed: int | None = Field(default=None, title="Seed Override", ge=0)
    epochs: int | None = Field(default=None, title="Epochs Override", ge=1)
    variant: str | None = Field(
        default=None,
        title="Ablation Variant",
        description="Preset name (A to I) applied on top of the config.",
    )
    input_size: int | None = Field(default=None, title="Input Size Override", ge=1)


class TrainInputs(CommandInputs):
    data: Path | None = Field(default=None, title="Dataset Root")
    rgb_data: Path | None = Field(default=None, title="RGB-only Dataset Root")
    max_iterations: int | None = Field(default=None, title="Iteration Cap", ge=1)


class InferInputs(CommandInputs):
    checkpoint: Path = Field(title="Checkpoint File")
    data: Path = Field(
        title="Input Root",
        description="Directory holding RGB/ and depth/ subdirectories.",
    )


class EvalInputs(BaseModel):
    predictions: Path = Field(title="Prediction Directory")
    gt: Path = Field(title="Ground Truth Directory")
    out: Path | None = Field(default=None, title="Output Directory")
    workers: int | None = Field(default=None, title="Worker Threads", ge=1)


class GradcheckInputs(BaseModel):
    out: Path | None = Field(default=None, title="Output Directory")
    seed: int = Field(default=0, title="Seed", ge=0)
    tolerance: float = Field(default=1e-4, title="Per-op Tolerance", gt=0)
    network_tolerance: float = Field(default=1e-3, title="End-to-end Tolerance", gt=0)


class AblateInputs(CommandInputs):
    data: Path | None = Field(default=None, title="Dataset Root")
    presets: list[str] = Field(
        default=["A", "B", "C", "D", "E", "F", "G", "H", "I"],
        title="Presets",
    )
    holdout: float = Field(
        default=0.25,
        title="Held-out Fraction",
        description="Share of stems kept for evaluation.",
        gt=0,
        lt=1,
    )
    max_iterations: int | None = Field(default=None, title="Iteration Cap", ge=1)


class SynthInputs(BaseModel):
    out: Path = Field(title="Dataset Root")
    count: int = Field(default=16, title="Samples", ge=1)
    size: int = Field(default=64, title="Image Size", ge=8)
    seed: int = Field(default=0, title="Seed", ge=0)
    rgb_only: bool = Field(default=False, title="RGB Only")

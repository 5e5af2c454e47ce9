from enum import Enum

import numpy as np
from pydantic import BaseModel, Field

from Autodiff.optim import OptimizerState


class Precision(str, Enum):
    FLOAT64 = "float64"
    FLOAT32 = "float32"

    @property
    def dtype(self) -> type:
        return np.float64 if self == Precision.FLOAT64 else np.float32


class LossConfig(BaseModel):
    """Weights of the deeply supervised loss."""

    guidance_weight: float = Field(
        default=256.0,
        title="Lambda",
        description="Weight of the coarse global-guidance terms; (H0 / h)^2 balances "
        "the pixel counts of the final and coarse maps.",
        ge=0,
    )
    epsilon: float = Field(
        default=1e-7,
        title="Clamp Epsilon",
        description="Predictions are clamped to [eps, 1 - eps] before the logarithm.",
        gt=0,
        lt=0.01,
    )


class OptimizerConfig(BaseModel):
    """SGD hyperparameters; the learning rate scales with the pixel count."""

    base_lr: float = Field(
        default=4e-8,
        title="Base Learning Rate",
        description="Learning rate at the reference input size.",
        gt=0,
    )
    reference_size: int = Field(
        default=320,
        title="Reference Input Size",
        description="Input side length base_lr is calibrated for.",
        ge=1,
    )
    momentum: float = Field(default=0.99, title="Momentum", ge=0, lt=1)
    weight_decay: float = Field(default=5e-4, title="Weight Decay", ge=0)

    def learning_rate(self, input_size: int) -> float:
        """Sum-reduced losses grow with the pixel count, so the step shrinks with it."""
        return self.base_lr * (self.reference_size / input_size) ** 2

    def make_state(self, input_size: int) -> OptimizerState:
        return OptimizerState(
            learning_rate=self.learning_rate(input_size),
            momentum=self.momentum,
            weight_decay=self.weight_decay,
        )


class TrainConfig(BaseModel):
    epochs: int = Field(default=1, title="Epochs", ge=1)
    seed: int = Field(default=0, title="Seed", ge=0)
    precision: Precision = Field(
        default=Precision.FLOAT64,
        title="Precision",
        description="float32 is allowed for training speed; checks always use float64.",
    )
    mirror: bool = Field(
        default=True,
        title="Mirror Augmentation",
        description="Add a horizontally mirrored copy of every sample.",
    )
    multitask: bool = Field(
        default=False,
        title="RGB Task Bridging",
        description="Pair every RGB-D step with an image of an RGB-only dataset.",
    )
    max_iterations: int | None = Field(
        default=None,
        title="Iteration Cap",
        description="Stop after this many SGD steps regardless of epochs.",
        ge=1,
    )

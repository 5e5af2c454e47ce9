"""VGG-style encoder producing six side-path hierarchies."""

import numpy as np

from Autodiff import ops
from Autodiff.tensor import Tensor
from Network.inputs import BackboneConfig, ConvSpec, check_input_size
from Network.layers import Conv2d, ConvRelu, Module, sequential
from Utilities.errors import ShapeError

# (kernel, stride, padding) of the pooling that opens a stage
DOWNSAMPLE_POOL = (2, 2, 0)
POOL5 = (3, 1, 1)


class Stage(Module):
    def __init__(
        self,
        convs: list[ConvRelu],
        pool: tuple[int, int, int] | None,
    ) -> None:
        self.convs = convs
        self.pool = pool

    def __call__(self, x: Tensor) -> Tensor:
        if self.pool is not None:
            kernel, stride, padding = self.pool
            x = ops.maxpool2d(x, kernel, stride, padding)
        return sequential(self.convs, x)


class SidePath(Module):
    """Two size-preserving convolutions with ReLUs, tapped off one stage."""

    def __init__(self, first: ConvRelu, second: ConvRelu) -> None:
        self.first = first
        self.second = second

    def __call__(self, x: Tensor) -> Tensor:
        return self.second(self.first(x))


class Backbone(Module):
    def __init__(
        self,
        config: BackboneConfig,
        stages: list[Stage],
        side_paths: list[SidePath],
    ) -> None:
        self.config = config
        self.stages = stages
        self.side_paths = side_paths

    def __call__(self, batch: Tensor) -> list[Tensor]:
        return forward_hierarchies(self, batch)


def _side_conv(
    in_channels: int, spec: ConvSpec, rng: np.random.Generator, dtype
) -> ConvRelu:
    return ConvRelu(
        Conv2d(
            in_channels,
            spec.channels,
            spec.kernel,
            rng,
            stride=spec.stride,
            dilation=spec.dilation,
            padding=spec.padding,
            dtype=dtype,
        )
    )


def build_backbone(
    cfg: BackboneConfig,
    rng: np.random.Generator,
    dtype: np.dtype | type = np.float64,
) -> Backbone:
    """Instantiate the encoder with Glorot-uniform weights and zero biases.

    Args:
        cfg: Stage and side-path layout.
        rng: Generator all weights are drawn from, in layer order.
        dtype: Parameter precision.

    Returns:
        Backbone: The encoder.

    Raises:
        ConfigurationError: If the input size is not a multiple of the total stride.
    """
    check_input_size(cfg.input_size, cfg.total_stride)
    assert cfg.stage_channels is not None and cfg.side_paths is not None

    stages = []
    in_channels = 3
    for index in range(len(cfg.stage_channels)):
        if index == 5:
            pool = POOL5
        elif cfg.downsample[index]:
            pool = DOWNSAMPLE_POOL
        else:
            pool = None
        convs = []
        for _ in range(cfg.convs_per_stage[index]):
            out_channels = cfg.stage_channels[index]
            convs.append(
                ConvRelu(Conv2d(in_channels, out_channels, 3, rng, padding=1, dtype=dtype))
            )
            in_channels = out_channels
        stages.append(Stage(convs, pool))

    side_paths = []
    for index, (first, second) in enumerate(cfg.side_paths.rows):
        stage_out = cfg.stage_channels[index]
        side_paths.append(
            SidePath(
                _side_conv(stage_out, first, rng, dtype),
                _side_conv(first.channels, second, rng, dtype),
            )
        )

    return Backbone(cfg, stages, side_paths)


def forward_hierarchies(encoder: Backbone, batch: Tensor) -> list[Tensor]:
    """Run every batch row through the shared encoder.

    Args:
        encoder: The encoder.
        batch: Tensor of shape 2N x 3 x H0 x H0.

    Returns:
        list[Tensor]: Six side-path outputs, shallowest first.
    """
    if batch.ndim != 4 or batch.shape[1] != 3:
        raise ShapeError(
            f"backbone input must be N x 3 x H x W, got {batch.shape}",
            axis=1,
            expected=3,
            actual=batch.shape[1] if batch.ndim > 1 else None,
        )

    outputs = []
    x = batch
    for stage, side_path in zip(encoder.stages, encoder.side_paths):
        x = stage(x)
        outputs.append(side_path(x))
    return outputs


def stage_sizes(input_size: int, cfg: BackboneConfig | None = None) -> list[int]:
    """Spatial side length of each hierarchy for an input of ``input_size``."""
    cfg = cfg if cfg is not None else BackboneConfig()
    check_input_size(input_size, cfg.total_stride)
    return cfg.stage_sizes(input_size)


def receptive_fields(cfg: BackboneConfig) -> list[int]:
    """Receptive field, in input pixels, of each side-path output."""
    assert cfg.side_paths is not None
    field, jump = 1, 1
    fields = []

    def grow(field: int, jump: int, kernel: int, stride: int, dilation: int):
        effective = dilation * (kernel - 1) + 1
        return field + (effective - 1) * jump, jump * stride

    for index, (first, second) in enumerate(cfg.side_paths.rows):
        if index == 5:
            field, jump = grow(field, jump, POOL5[0], POOL5[1], 1)
        elif cfg.downsample[index]:
            field, jump = grow(field, jump, DOWNSAMPLE_POOL[0], DOWNSAMPLE_POOL[1], 1)
        for _ in range(cfg.convs_per_stage[index]):
            field, jump = grow(field, jump, 3, 1, 1)

        side_field, side_jump = field, jump
        for spec in (first, second):
            side_field, side_jump = grow(
                side_field, side_jump, spec.kernel, spec.stride, spec.dilation
            )
        fields.append(side_field)

    return fields

from enum import Enum

from pydantic import BaseModel, Field, model_validator

from Utilities.errors import ConfigurationError

STAGES = 6


class FusionVariant(str, Enum):
    """How the two modality rows are merged at every hierarchy."""

    CM = "cm"
    CONCAT = "concat"
    IDENTITY_RGB = "identity_rgb"
    IDENTITY_DEPTH = "identity_depth"


class ModalityVariant(str, Enum):
    RGBD = "rgbd"
    RGB = "rgb"
    DEPTH = "depth"


class DecoderWiring(str, Enum):
    """Skip layout of the decoder: every deeper level, the chain only, or the
    chain plus the single FA5 to FA1 skip."""

    DENSE = "dense"
    CHAIN = "chain"
    RESIDUAL = "residual"


class BackboneSharing(str, Enum):
    JOINT = "joint"
    SEPARATE = "separate"


class ConvSpec(BaseModel):
    """One side-path convolution as (kernel, channels, stride, dilation, padding)."""

    kernel: int = Field(title="Kernel Size", ge=1)
    channels: int = Field(title="Output Channels", ge=1)
    stride: int = Field(default=1, title="Stride", ge=1)
    dilation: int = Field(default=1, title="Dilation Rate", ge=1)
    padding: int = Field(default=0, title="Padding", ge=0)

    @model_validator(mode="after")
    def _size_preserving(self) -> "ConvSpec":
        if self.stride != 1 or 2 * self.padding != self.dilation * (self.kernel - 1):
            raise ConfigurationError(
                f"side-path convolution {self.as_row()} does not preserve the "
                "spatial size; need stride 1 and padding = dilation * (kernel - 1) / 2"
            )
        return self

    def as_row(self) -> tuple[int, int, int, int, int]:
        return (self.kernel, self.channels, self.stride, self.dilation, self.padding)


class SidePathConfig(BaseModel):
    """The two extra convolutions inserted on each of the six side paths."""

    rows: list[tuple[ConvSpec, ConvSpec]] = Field(
        title="Side Path Rows",
        description="One (first, second) convolution pair per hierarchy, shallowest first.",
    )

    @model_validator(mode="after")
    def _six_rows(self) -> "SidePathConfig":
        if len(self.rows) != STAGES:
            raise ConfigurationError(
                f"expected {STAGES} side-path rows, got {len(self.rows)}"
            )
        return self

    @classmethod
    def scaled(cls, width: int, dilation: int = 2) -> "SidePathConfig":
        """Side-path table with channel counts scaled by ``width / 64``.

        At ``width=64`` this reproduces the full-size table: 3x3 with 128 channels
        on paths 1-2, 5x5 with 256 and 512 on paths 3-5 and a dilated 7x7 with
        512 channels on path 6.
        """
        layout = [
            (3, 2 * width, 1),
            (3, 2 * width, 1),
            (5, 4 * width, 1),
            (5, 4 * width, 1),
            (5, 8 * width, 1),
            (7, 8 * width, dilation),
        ]
        rows = []
        for kernel, channels, rate in layout:
            spec = ConvSpec(
                kernel=kernel,
                channels=channels,
                dilation=rate,
                padding=rate * (kernel - 1) // 2,
            )
            rows.append((spec, spec.model_copy()))
        return cls(rows=rows)

    @property
    def out_channels(self) -> list[int]:
        return [second.channels for _, second in self.rows]


class BackboneConfig(BaseModel):
    """VGG-style six-hierarchy encoder."""

    input_size: int = Field(
        default=64,
        title="Input Size",
        description="Side length H0 of the square network input.",
        ge=1,
    )
    width: int = Field(
        default=8,
        title="Base Width",
        description="Channel count of the first stage; 64 is the full-size VGG-16.",
        ge=1,
    )
    stage_channels: list[int] | None = Field(
        default=None,
        title="Stage Channels",
        description="Output channels of each stage; defaults to w, 2w, 4w, 8w, 8w, 8w.",
    )
    convs_per_stage: list[int] = Field(
        default=[2, 2, 3, 3, 3, 0],
        title="Convolutions Per Stage",
    )
    downsample: list[bool] = Field(
        default=[False, True, True, True, True, False],
        title="Downsample Flags",
        description="Whether a stage starts with a stride-2 pooling.",
    )
    stage6_dilation: int = Field(
        default=2,
        title="Stage 6 Dilation",
        description="Dilation rate of the side-path convolutions on the stride-1 pool5.",
        ge=1,
    )
    side_paths: SidePathConfig | None = Field(
        default=None,
        title="Side Paths",
        description="Extra convolutions per hierarchy; defaults scale with the width.",
    )

    @model_validator(mode="after")
    def _fill_and_check(self) -> "BackboneConfig":
        if self.stage_channels is None:
            w = self.width
            self.stage_channels = [w, 2 * w, 4 * w, 8 * w, 8 * w, 8 * w]
        if self.side_paths is None:
            self.side_paths = SidePathConfig.scaled(self.width, self.stage6_dilation)

        for name in ("stage_channels", "convs_per_stage", "downsample"):
            if len(getattr(self, name)) != STAGES:
                raise ConfigurationError(f"{name} needs {STAGES} entries")
        if self.downsample[0] or self.downsample[5]:
            raise ConfigurationError(
                "stage 1 keeps the input size and stage 6 keeps the stage-5 size"
            )
        if self.convs_per_stage[5] != 0 or self.stage_channels[5] != self.stage_channels[4]:
            raise ConfigurationError("stage 6 is the stride-1 pool5 and has no convolutions")
        if min(self.convs_per_stage[:5]) < 1:
            raise ConfigurationError("stages 1-5 need at least one convolution")

        check_input_size(self.input_size, self.total_stride)
        return self

    @property
    def total_stride(self) -> int:
        return 2 ** sum(self.downsample)

    def stage_sizes(self, input_size: int | None = None) -> list[int]:
        size = self.input_size if input_size is None else input_size
        sizes = []
        for flag in self.downsample:
            size = size // 2 if flag else size
            sizes.append(size)
        return sizes

    @property
    def hierarchy_channels(self) -> list[int]:
        assert self.side_paths is not None
        return self.side_paths.out_channels


def check_input_size(input_size: int, total_stride: int) -> None:
    if input_size < total_stride or input_size % total_stride:
        raise ConfigurationError(
            f"input size {input_size} must be a positive multiple of {total_stride}"
        )


class CpConfig(BaseModel):
    k: int = Field(
        default=64,
        title="Compressed Width",
        description="Channel count every CP module compresses its hierarchy to.",
        ge=1,
    )
    kernel: int = Field(default=3, title="CP Kernel", ge=1)

    @model_validator(mode="after")
    def _odd_kernel(self) -> "CpConfig":
        if self.kernel % 2 == 0:
            raise ConfigurationError("CP kernel must be odd to keep the spatial size")
        return self


class FaConfig(BaseModel):
    """Inception-style aggregation: 1x1, 1x1 then 3x3, 1x1 then 5x5 and a
    stride-1 3x3 max-pool followed by 1x1."""

    branch_channels: list[int] | None = Field(
        default=None,
        title="Branch Widths",
        description="Output channels of the four branches; defaults to k/4 each.",
    )

    def resolved(self, k: int) -> list[int]:
        if self.branch_channels is not None:
            widths = list(self.branch_channels)
        else:
            widths = [k // 4] * 4
            widths[0] += k - sum(widths)
        if len(widths) != 4 or min(widths) < 1:
            raise ConfigurationError(f"FA needs four positive branch widths, got {widths}")
        if sum(widths) != k:
            raise ConfigurationError(
                f"FA branch widths {widths} sum to {sum(widths)}, expected k = {k}"
            )
        return widths


class NetworkConfig(BaseModel):
    """Architecture hyperparameters of the whole network."""

    backbone: BackboneConfig = Field(default_factory=BackboneConfig, title="Backbone")
    cp: CpConfig = Field(default_factory=CpConfig, title="CP Modules")
    fa: FaConfig = Field(default_factory=FaConfig, title="FA Modules")
    fusion: FusionVariant = Field(default=FusionVariant.CM, title="Fusion Variant")
    modality: ModalityVariant = Field(default=ModalityVariant.RGBD, title="Modality")
    wiring: DecoderWiring = Field(default=DecoderWiring.DENSE, title="Decoder Wiring")
    use_fa: bool = Field(
        default=True,
        title="Use FA Modules",
        description="When false every FA is the identity on its summed inputs.",
    )
    sharing: BackboneSharing = Field(
        default=BackboneSharing.JOINT,
        title="Backbone Sharing",
        description="'separate' gives the depth row its own backbone.",
    )
    classes: int = Field(
        default=1,
        title="Classes",
        description="1 for a sigmoid saliency head, C > 1 for a softmax C-class head.",
        ge=1,
    )

    @model_validator(mode="after")
    def _check_variants(self) -> "NetworkConfig":
        expected = {
            FusionVariant.IDENTITY_RGB: ModalityVariant.RGB,
            FusionVariant.IDENTITY_DEPTH: ModalityVariant.DEPTH,
        }.get(self.fusion, ModalityVariant.RGBD)
        if self.modality != expected:
            raise ConfigurationError(
                f"fusion '{self.fusion.value}' requires modality '{expected.value}', "
                f"got '{self.modality.value}'"
            )
        if self.fusion == FusionVariant.CONCAT and not self.use_fa:
            raise ConfigurationError(
                "concat fusion produces 2k channels and needs FA modules to return to k"
            )
        if self.sharing == BackboneSharing.SEPARATE and self.modality != ModalityVariant.RGBD:
            raise ConfigurationError("separate backbones need both modalities")
        self.fa.resolved(self.cp.k)
        return self

    @property
    def modality_rows(self) -> list[str]:
        """Batch row names fed to the encoder, in order."""
        return {
            ModalityVariant.RGBD: ["rgb", "depth"],
            ModalityVariant.RGB: ["rgb"],
            ModalityVariant.DEPTH: ["depth"],
        }[self.modality]

    @property
    def input_size(self) -> int:
        return self.backbone.input_size

    @property
    def coarse_size(self) -> int:
        return self.backbone.stage_sizes()[-1]

    @property
    def fused_channels(self) -> int:
        return 2 * self.cp.k if self.fusion == FusionVariant.CONCAT else self.cp.k

"""Densely cooperative fusion: cross-modal fusion, Inception-style aggregation,
dense top-down decoding and the full-resolution head."""

import numpy as np

from Autodiff import ops
from Autodiff.tensor import Tensor
from Network.inputs import DecoderWiring, FaConfig, FusionVariant
from Network.layers import Conv2d, ConvRelu, Module, sequential
from Utilities.errors import ConfigurationError, ShapeError

LEVELS = 6


def _require_pair(batch_feat: Tensor, op: str) -> None:
    if batch_feat.ndim != 4 or batch_feat.shape[0] != 2:
        raise ShapeError(
            f"{op} expects a batch of 2, got shape {batch_feat.shape}",
            axis=0,
            expected=2,
            actual=batch_feat.shape[0] if batch_feat.ndim else None,
        )


def cm_fuse(batch_feat: Tensor) -> Tensor:
    """X_rgb + X_d + X_rgb * X_d over the two rows of a 2 x k x h x w batch."""
    _require_pair(batch_feat, "cm_fuse")
    x_rgb, x_d = ops.split_batch(batch_feat)
    return ops.add_n([x_rgb, x_d, ops.mul(x_rgb, x_d)])


def fuse(batch_feat: Tensor, variant: FusionVariant) -> Tensor:
    """Merge the modality rows of one hierarchy into a single row.

    Identity variants also accept a batch that only carries their modality.
    """
    if variant == FusionVariant.CM:
        return cm_fuse(batch_feat)
    if variant == FusionVariant.CONCAT:
        _require_pair(batch_feat, "concat fusion")
        return ops.concat(ops.split_batch(batch_feat), axis=1)

    if batch_feat.shape[0] == 1:
        return batch_feat
    _require_pair(batch_feat, f"{variant.value} fusion")
    x_rgb, x_d = ops.split_batch(batch_feat)
    return x_rgb if variant == FusionVariant.IDENTITY_RGB else x_d


class FaModule(Module):
    """Four parallel branches concatenated back to k channels:
    1x1; 1x1 then 3x3; 1x1 then 5x5; 3x3 max-pool then 1x1."""

    def __init__(
        self,
        in_channels: int,
        branch_channels: list[int],
        rng: np.random.Generator,
        dtype: np.dtype | type = np.float64,
    ) -> None:
        w1, w3, w5, wp = branch_channels

        def conv(cin: int, cout: int, kernel: int) -> ConvRelu:
            return ConvRelu(Conv2d(cin, cout, kernel, rng, padding=kernel // 2, dtype=dtype))

        self.branch1 = [conv(in_channels, w1, 1)]
        self.branch3 = [conv(in_channels, w3, 1), conv(w3, w3, 3)]
        self.branch5 = [conv(in_channels, w5, 1), conv(w5, w5, 5)]
        self.branch_pool = [conv(in_channels, wp, 1)]
        self.in_channels = in_channels

    def __call__(self, x: Tensor) -> Tensor:
        return fa_aggregate(x, self)


def fa_aggregate(x: Tensor, module: FaModule) -> Tensor:
    if x.ndim != 4 or x.shape[1] != module.in_channels:
        raise ShapeError(
            f"FA expects {module.in_channels} input channels, got shape {x.shape}",
            axis=1,
            expected=module.in_channels,
            actual=x.shape[1] if x.ndim > 1 else None,
        )
    pooled = ops.maxpool2d(x, 3, 1, 1)
    branches = [
        sequential(module.branch1, x),
        sequential(module.branch3, x),
        sequential(module.branch5, x),
        sequential(module.branch_pool, pooled),
    ]
    return ops.concat(branches, axis=1)


def incoming_edges(wiring: DecoderWiring, levels: int = LEVELS) -> dict[str, list[str]]:
    """Sources feeding each FA node, keyed 'FA1'..'FA6'."""
    edges = {}
    for i in range(1, levels + 1):
        sources = [f"CM{i}"]
        if wiring == DecoderWiring.DENSE:
            sources += [f"FA{j}" for j in range(i + 1, levels + 1)]
        elif i < levels:
            sources.append(f"FA{i + 1}")
        edges[f"FA{i}"] = sources

    if wiring == DecoderWiring.RESIDUAL:
        edges["FA1"].append(f"FA{levels - 1}")
    return edges


def upsample_to(x: Tensor, size: int) -> Tensor:
    """Bilinear upsampling of a square map to ``size``; equal sizes pass through."""
    current = x.shape[2]
    if current == size:
        return x
    if size % current:
        raise ShapeError(
            f"cannot upsample {current} to {size} by an integer factor",
            axis=2,
            expected=size,
            actual=current,
        )
    return ops.bilinear_upsample(x, size // current)


class DenseDecoder(Module):
    def __init__(
        self,
        k: int,
        fused_channels: int,
        fa: FaConfig,
        wiring: DecoderWiring,
        use_fa: bool,
        rng: np.random.Generator,
        dtype: np.dtype | type = np.float64,
    ) -> None:
        self.k = k
        self.fused_channels = fused_channels
        self.wiring = wiring
        self.edges = incoming_edges(wiring)
        self.fa_modules = (
            [FaModule(fused_channels, fa.resolved(k), rng, dtype) for _ in range(LEVELS)]
            if use_fa
            else []
        )

    @property
    def use_fa(self) -> bool:
        return bool(self.fa_modules)

    def __call__(self, cm_outputs: list[Tensor]) -> Tensor:
        return dense_decode(cm_outputs, self)


def dense_decode(cm_outputs: list[Tensor], decoder: DenseDecoder) -> Tensor:
    """Top-down pass from FA6 to FA1.

    Each FA input is its fused hierarchy plus the deeper FA outputs named in the
    wiring, upsampled to the consumer's size before the addition.

    Args:
        cm_outputs: Six fused maps, shallowest first, with non-increasing sizes.
        decoder: The FA modules and wiring.

    Returns:
        Tensor: FA1 output at the shallowest (input) resolution.
    """
    if len(cm_outputs) != LEVELS:
        raise ShapeError(
            f"decoder needs {LEVELS} fused maps, got {len(cm_outputs)}",
            expected=LEVELS,
            actual=len(cm_outputs),
        )
    sizes = [t.shape[2] for t in cm_outputs]
    for i in range(1, LEVELS):
        if sizes[i] > sizes[i - 1]:
            raise ShapeError(
                f"hierarchy {i + 1} is larger than hierarchy {i}: {sizes}",
                axis=2,
                expected=f"<= {sizes[i - 1]}",
                actual=sizes[i],
            )
    for t in cm_outputs:
        if t.shape[1] != decoder.fused_channels:
            raise ShapeError(
                f"fused map has {t.shape[1]} channels, decoder expects "
                f"{decoder.fused_channels}",
                axis=1,
                expected=decoder.fused_channels,
                actual=t.shape[1],
            )

    outputs: dict[str, Tensor] = {}
    for level in range(LEVELS, 0, -1):
        fused = cm_outputs[level - 1]
        size = fused.shape[2]
        deeper = [
            upsample_to(outputs[source], size)
            for source in decoder.edges[f"FA{level}"]
            if source.startswith("FA")
        ]

        x = fused
        if deeper:
            skip = ops.add_n(deeper)
            if decoder.fused_channels != skip.shape[1]:
                # 2k-wide concat fusion receives the skip on both halves
                skip = ops.concat([skip, skip], axis=1)
            x = ops.add(fused, skip)

        outputs[f"FA{level}"] = decoder.fa_modules[level - 1](x) if decoder.use_fa else x

    return outputs["FA1"]


class FinalHead(Module):
    def __init__(
        self,
        k: int,
        rng: np.random.Generator,
        classes: int = 1,
        dtype: np.dtype | type = np.float64,
    ) -> None:
        if classes < 1:
            raise ConfigurationError(f"class count must be at least 1, got {classes}")
        self.conv = Conv2d(k, classes, 1, rng, dtype=dtype)
        self.classes = classes

    def __call__(self, fa1_out: Tensor) -> Tensor:
        return final_predict(fa1_out, self)


def final_predict(fa1_out: Tensor, head: FinalHead) -> Tensor:
    """Sigmoid saliency map for one class, per-pixel softmax scores otherwise."""
    scores = head.conv(fa1_out)
    if head.classes == 1:
        return ops.sigmoid(scores)
    return ops.softmax(scores, axis=1)

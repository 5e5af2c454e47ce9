"""Joint learning: depth preprocessing, Siamese batch formation, CP compression
and the deeply supervised coarse head."""

import numpy as np

from Autodiff import ops
from Autodiff.tensor import Tensor
from Network.inputs import CpConfig
from Network.layers import Conv2d, ConvRelu, Module
from Utilities.errors import ShapeError
from Utilities.helpers import get_logger

logger = get_logger("joint_learning")

PIXEL_CENTER = 127.5


def normalize_depth(depth: np.ndarray) -> np.ndarray:
    """Map a raw depth map affinely onto [0, 255]; constant maps become zeros."""
    depth = np.asarray(depth, dtype=np.float64)
    if depth.size == 0:
        raise ShapeError("depth map is empty", expected="non-empty", actual=depth.shape)
    if depth.ndim == 3 and depth.shape[-1] == 1:
        depth = depth[..., 0]
    if depth.ndim != 2:
        raise ShapeError(
            f"depth map must be single-channel H x W, got {depth.shape}",
            expected=2,
            actual=depth.ndim,
        )

    low, high = depth.min(), depth.max()
    if high <= low:
        logger.warning("Constant depth map of value %s normalized to zeros", low)
        return np.zeros_like(depth)
    return (depth - low) * (255.0 / (high - low))


def depth_to_3ch(depth: np.ndarray, dtype: np.dtype | type = np.float64) -> Tensor:
    """Normalize a depth map and replicate it into a 1 x 3 x H x W tensor."""
    normalized = normalize_depth(depth).astype(dtype)
    return Tensor(np.repeat(normalized[None, None], 3, axis=1))


def rgb_to_tensor(rgb: np.ndarray, dtype: np.dtype | type = np.float64) -> Tensor:
    """H x W x 3 array in [0, 255] to a 1 x 3 x H x W tensor."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[-1] != 3:
        raise ShapeError(
            f"RGB image must be H x W x 3, got {rgb.shape}",
            axis=2,
            expected=3,
            actual=rgb.shape[-1] if rgb.ndim else None,
        )
    return Tensor(np.transpose(rgb.astype(dtype), (2, 0, 1))[None])


def standardize(x: Tensor) -> Tensor:
    """Map [0, 255] inputs to [-1, 1]."""
    return Tensor((x.data - PIXEL_CENTER) / PIXEL_CENTER, dtype=x.dtype)


def form_batch(rgb: Tensor, depth3: Tensor) -> Tensor:
    """Stack RGB (row 0) and depth (row 1) along the batch dimension."""
    for name, t in (("rgb", rgb), ("depth", depth3)):
        if t.ndim != 4 or t.shape[0] != 1 or t.shape[1] != 3:
            raise ShapeError(
                f"{name} input must be 1 x 3 x H x W, got {t.shape}",
                axis=1,
                expected=3,
                actual=t.shape[1] if t.ndim > 1 else None,
            )
    return ops.concat_batch(rgb, depth3)


class CpModules(Module):
    """One k-filter convolution with ReLU per hierarchy, shared across rows."""

    def __init__(
        self,
        in_channels: list[int],
        cfg: CpConfig,
        rng: np.random.Generator,
        dtype: np.dtype | type = np.float64,
    ) -> None:
        self.cfg = cfg
        self.layers = [
            ConvRelu(
                Conv2d(channels, cfg.k, cfg.kernel, rng, padding=cfg.kernel // 2, dtype=dtype)
            )
            for channels in in_channels
        ]

    def __call__(self, features: list[Tensor]) -> list[Tensor]:
        return cp_compress(features, self)


def cp_compress(features: list[Tensor], modules: CpModules) -> list[Tensor]:
    """Compress every hierarchy to k channels at its own spatial size."""
    if len(features) != len(modules.layers):
        raise ShapeError(
            f"expected {len(modules.layers)} hierarchies, got {len(features)}",
            expected=len(modules.layers),
            actual=len(features),
        )
    return [layer(x) for layer, x in zip(modules.layers, features)]


class CoarseHead(Module):
    """1x1 convolution after CP6 giving one coarse map per batch row."""

    def __init__(
        self,
        k: int,
        rng: np.random.Generator,
        classes: int = 1,
        dtype: np.dtype | type = np.float64,
    ) -> None:
        self.conv = Conv2d(k, classes, 1, rng, dtype=dtype)
        self.classes = classes

    def __call__(self, cp6: Tensor) -> Tensor:
        scores = self.conv(cp6)
        if self.classes == 1:
            return ops.sigmoid(scores)
        return ops.softmax(scores, axis=1)


def coarse_predict(
    cp6: Tensor, head: CoarseHead, rows: int = 2
) -> tuple[Tensor, ...]:
    """Coarse predictions split per batch row: (S_c_rgb, S_c_d[, S_c_rgb_task]).

    Raises:
        ShapeError: If the batch extent differs from ``rows``.
    """
    if cp6.ndim != 4 or cp6.shape[0] != rows:
        raise ShapeError(
            f"coarse head expects a batch of {rows}, got shape {cp6.shape}",
            axis=0,
            expected=rows,
            actual=cp6.shape[0] if cp6.ndim else None,
        )
    return tuple(ops.batch_rows(head(cp6)))


def prepare_inputs(
    rgb: np.ndarray, depth: np.ndarray, dtype: np.dtype | type = np.float64
) -> tuple[Tensor, Tensor]:
    """Network-ready (rgb, depth3) tensors from an H x W x 3 image and a raw depth map."""
    return standardize(rgb_to_tensor(rgb, dtype)), standardize(depth_to_3ch(depth, dtype))

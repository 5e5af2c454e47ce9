"""Sum-reduced cross-entropy losses with global guidance on the coarse maps."""

from dataclasses import dataclass, field

import cv2
import numpy as np

from Autodiff import ops
from Autodiff.tensor import Tensor
from Training.inputs import LossConfig
from Utilities.errors import ShapeError


@dataclass
class LossTerms:
    """Differentiable total plus the float value of each term."""

    total: Tensor
    final: float
    guidance: dict[str, float | None] = field(default_factory=dict)

    def as_row(self) -> dict[str, float | None]:
        row: dict[str, float | None] = {"L_f": self.final}
        for name, value in self.guidance.items():
            row[f"L_g_{name}"] = value
        row["total"] = self.total.item()
        return row


def _as_target(target: np.ndarray | Tensor, like: Tensor) -> Tensor:
    data = target.data if isinstance(target, Tensor) else np.asarray(target)
    if data.size != like.size or data.shape[-2:] != like.shape[-2:]:
        raise ShapeError(
            f"target shape {data.shape} does not match prediction {like.shape}",
            axis=like.ndim - 1,
            expected=like.shape,
            actual=data.shape,
        )
    return Tensor(data.reshape(like.shape).astype(like.dtype))


def cross_entropy(
    prediction: Tensor, target: np.ndarray | Tensor, epsilon: float = 1e-7
) -> Tensor:
    """-sum(G log S + (1 - G) log(1 - S)) with S clamped to [eps, 1 - eps]."""
    g = _as_target(target, prediction)
    s = ops.clip(prediction, epsilon, 1.0 - epsilon)
    one_minus_s = ops.add_scalar(ops.scale(s, -1.0), 1.0)
    one_minus_g = Tensor(1.0 - g.data)
    positive = ops.mul(g, ops.log(s))
    negative = ops.mul(one_minus_g, ops.log(one_minus_s))
    return ops.scale(ops.sum_all(ops.add(positive, negative)), -1.0)


def one_hot(labels: np.ndarray, classes: int) -> np.ndarray:
    """Integer H x W labels to a C x H x W indicator array."""
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= classes:
        raise ShapeError(
            f"labels must lie in [0, {classes}), got range "
            f"[{labels.min()}, {labels.max()}]",
            axis=1,
            expected=classes,
            actual=int(labels.max()) + 1,
        )
    return (np.arange(classes)[:, None, None] == labels[None]).astype(np.float64)


def multiclass_cross_entropy(
    prediction: Tensor, target: np.ndarray | Tensor, epsilon: float = 1e-7
) -> Tensor:
    """-sum over pixels and classes of T log P for 1 x C x h x w probabilities.

    ``target`` is either an integer label map or a soft C x h x w map.
    """
    data = target.data if isinstance(target, Tensor) else np.asarray(target)
    if data.ndim == 2:
        data = one_hot(data, prediction.shape[1])
    t = _as_target(data, prediction)
    p = ops.clip(prediction, epsilon, 1.0)
    return ops.scale(ops.sum_all(ops.mul(t, ops.log(p))), -1.0)


def downsample_target(target: np.ndarray, size: int, classes: int = 1) -> np.ndarray:
    """Bilinearly shrink a ground truth to ``size`` x ``size`` and keep it soft.

    Binary maps stay H x W; label maps become C x size x size soft one-hot maps.
    """
    target = np.asarray(target)
    if classes > 1:
        planes = one_hot(target, classes)
        return np.stack(
            [cv2.resize(p, (size, size), interpolation=cv2.INTER_LINEAR) for p in planes]
        )
    return cv2.resize(
        target.astype(np.float64), (size, size), interpolation=cv2.INTER_LINEAR
    )


def _map_loss(prediction: Tensor, target: np.ndarray, epsilon: float) -> Tensor:
    if prediction.shape[1] > 1:
        return multiclass_cross_entropy(prediction, target, epsilon)
    return cross_entropy(prediction, target, epsilon)


def _guidance(
    coarse: Tensor | None, target: np.ndarray | None, cfg: LossConfig
) -> Tensor | None:
    if coarse is None or target is None:
        return None
    classes = coarse.shape[1]
    small = downsample_target(target, coarse.shape[-1], classes)
    return _map_loss(coarse, small, cfg.epsilon)


def _combine(final: Tensor, guidance: dict[str, Tensor | None], cfg: LossConfig) -> LossTerms:
    present = [term for term in guidance.values() if term is not None]
    total = final
    if present:
        total = ops.add(final, ops.scale(ops.add_n(present), cfg.guidance_weight))
    return LossTerms(
        total=total,
        final=final.item(),
        guidance={
            name: (term.item() if term is not None else None)
            for name, term in guidance.items()
        },
    )


def total_loss(
    s_final: Tensor,
    s_coarse_rgb: Tensor | None,
    s_coarse_depth: Tensor | None,
    gt: np.ndarray,
    cfg: LossConfig,
) -> LossTerms:
    """CE(S_f, G) + lambda * (CE(S_c_rgb, G_down) + CE(S_c_d, G_down)).

    A missing coarse map (single-modality variants) drops its term.
    """
    final = _map_loss(s_final, gt, cfg.epsilon)
    guidance = {
        "rgb": _guidance(s_coarse_rgb, gt, cfg),
        "d": _guidance(s_coarse_depth, gt, cfg),
    }
    return _combine(final, guidance, cfg)


def multitask_loss(
    s_final: Tensor,
    s_coarse_rgb: Tensor | None,
    s_coarse_depth: Tensor | None,
    s_coarse_rgb_task: Tensor | None,
    gt_rgbd: np.ndarray,
    gt_rgb: np.ndarray | None,
    cfg: LossConfig,
) -> LossTerms:
    """Joint RGB-D and RGB-only objective; the RGB-only image is supervised only
    through its coarse map. Without it this equals :func:`total_loss`.

    Raises:
        ShapeError: If only one of the RGB-only prediction and its ground truth
            is given.
    """
    if (s_coarse_rgb_task is None) != (gt_rgb is None):
        raise ShapeError(
            "the RGB-only task needs both a third batch row and its ground truth",
            axis=0,
            expected=3,
            actual=2,
        )
    final = _map_loss(s_final, gt_rgbd, cfg.epsilon)
    guidance = {
        "rgb": _guidance(s_coarse_rgb, gt_rgbd, cfg),
        "d": _guidance(s_coarse_depth, gt_rgbd, cfg),
    }
    if s_coarse_rgb_task is not None:
        guidance["rgb_task"] = _guidance(s_coarse_rgb_task, gt_rgb, cfg)
    return _combine(final, guidance, cfg)

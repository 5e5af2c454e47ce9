"""Saliency measures: precision/recall over 256 thresholds, F-measure,
S-measure, E-measure, MAE and class-averaged IoU."""

from dataclasses import dataclass

import numpy as np

from Utilities.errors import EmptyGroundTruthError, InvalidMapError, ShapeError

THRESHOLDS = np.arange(256)
BETA_SQUARED = 0.3
ALPHA = 0.5
_EPS = np.spacing(1)


@dataclass(frozen=True)
class EvalPair:
    """A saliency map and its binary ground truth of equal shape.

    ``s_map`` is either real-valued in [0, 1] or 8-bit in [0, 255].
    """

    s_map: np.ndarray
    gt: np.ndarray

    def __post_init__(self) -> None:
        s_map, gt = np.asarray(self.s_map), np.asarray(self.gt)
        if s_map.shape != gt.shape or s_map.ndim != 2:
            raise ShapeError(
                f"saliency map {s_map.shape} and ground truth {gt.shape} must be "
                "equal 2-D shapes",
                expected=gt.shape,
                actual=s_map.shape,
            )
        if not np.isin(gt, (0, 1)).all():
            raise InvalidMapError("ground truth must be binary {0, 1}")
        if s_map.dtype != np.uint8 and (
            not np.isfinite(s_map).all() or s_map.min() < 0 or s_map.max() > 1
        ):
            raise InvalidMapError("real-valued saliency maps must lie in [0, 1]")
        object.__setattr__(self, "s_map", s_map)
        object.__setattr__(self, "gt", gt.astype(bool))

    @property
    def quantized(self) -> np.ndarray:
        """The map on the 8-bit threshold grid."""
        if self.s_map.dtype == np.uint8:
            return self.s_map
        return (self.s_map * 255).astype(np.uint8)

    @property
    def real(self) -> np.ndarray:
        """The map as float64 in [0, 1]."""
        if self.s_map.dtype == np.uint8:
            return self.s_map.astype(np.float64) / 255.0
        return self.s_map.astype(np.float64)

    @property
    def foreground(self) -> int:
        return int(np.count_nonzero(self.gt))


def _count_at_or_above(values: np.ndarray) -> np.ndarray:
    """Entry T holds the number of values >= T, for T = 0..255."""
    histogram = np.bincount(values.ravel(), minlength=256)
    return np.flip(np.cumsum(np.flip(histogram)))


def _threshold_counts(pair: EvalPair) -> tuple[np.ndarray, np.ndarray]:
    """(|M(T) & G|, |M(T)|) for every threshold."""
    s8 = pair.quantized
    return _count_at_or_above(s8[pair.gt]), _count_at_or_above(s8)


def pr_curve(pair: EvalPair) -> tuple[np.ndarray, np.ndarray]:
    """Precision and recall at every 8-bit threshold, lowest threshold first.

    Precision is 1 where the binarized map is empty.

    Raises:
        EmptyGroundTruthError: If the ground truth has no foreground pixel.
    """
    foreground = pair.foreground
    if foreground == 0:
        raise EmptyGroundTruthError("precision/recall need a non-empty ground truth")
    hits, selected = _threshold_counts(pair)
    precision = np.ones(256, dtype=np.float64)
    np.divide(hits, selected, out=precision, where=selected > 0)
    recall = hits / foreground
    return precision, recall


def f_measure_curve(precision: np.ndarray, recall: np.ndarray) -> np.ndarray:
    """(1 + b^2) P R / (b^2 P + R) per threshold, 0 where both vanish."""
    numerator = (1 + BETA_SQUARED) * precision * recall
    denominator = BETA_SQUARED * precision + recall
    curve = np.zeros_like(numerator, dtype=np.float64)
    np.divide(numerator, denominator, out=curve, where=denominator > 0)
    return curve


def f_measure_max(precision: np.ndarray, recall: np.ndarray) -> float:
    return float(f_measure_curve(precision, recall).max())


def mae(pair: EvalPair) -> float:
    return float(np.mean(np.abs(pair.real - pair.gt)))


def _s_object(pred: np.ndarray, gt: np.ndarray) -> float:
    values = pred[gt]
    x = np.mean(values)
    sigma_x = np.std(values, ddof=1) if values.size > 1 else 0.0
    return float(2 * x / (x**2 + 1 + sigma_x + _EPS))


def _object_score(pred: np.ndarray, gt: np.ndarray) -> float:
    fg = pred * gt
    bg = (1 - pred) * ~gt
    u = np.mean(gt)
    return float(u * _s_object(fg, gt) + (1 - u) * _s_object(bg, ~gt))


def _centroid(gt: np.ndarray) -> tuple[int, int]:
    # one-based like the reference, so that slicing [0:x] includes column x
    h, w = gt.shape
    if not gt.any():
        return int(np.round(w / 2)) + 1, int(np.round(h / 2)) + 1
    y, x = np.argwhere(gt).mean(axis=0).round()
    return int(x) + 1, int(y) + 1


def _ssim(pred: np.ndarray, gt: np.ndarray) -> float:
    n = pred.size
    if n == 0:
        return 0.0
    dof = max(n - 1, 1)
    x, y = np.mean(pred), np.mean(gt)
    sigma_x = np.sum((pred - x) ** 2) / dof
    sigma_y = np.sum((gt - y) ** 2) / dof
    sigma_xy = np.sum((pred - x) * (gt - y)) / dof

    alpha = 4 * x * y * sigma_xy
    beta = (x**2 + y**2) * (sigma_x + sigma_y)
    if alpha != 0:
        return float(alpha / (beta + _EPS))
    if beta == 0:
        return 1.0
    return 0.0


def _region_score(pred: np.ndarray, gt: np.ndarray) -> float:
    x, y = _centroid(gt)
    h, w = gt.shape
    area = h * w
    gt_f = gt.astype(np.float64)

    w1 = x * y / area
    w2 = y * (w - x) / area
    w3 = (h - y) * x / area
    w4 = 1 - w1 - w2 - w3
    quadrants = [
        (slice(0, y), slice(0, x)),
        (slice(0, y), slice(x, w)),
        (slice(y, h), slice(0, x)),
        (slice(y, h), slice(x, w)),
    ]
    scores = [_ssim(pred[rows, cols], gt_f[rows, cols]) for rows, cols in quadrants]
    return float(w1 * scores[0] + w2 * scores[1] + w3 * scores[2] + w4 * scores[3])


def s_measure(pair: EvalPair, alpha: float = ALPHA) -> float:
    """Structure measure: alpha * object score + (1 - alpha) * region score."""
    pred, gt = pair.real, pair.gt
    y = np.mean(gt)
    if y == 0:
        return float(1 - np.mean(pred))
    if y == 1:
        return float(np.mean(pred))
    score = alpha * _object_score(pred, gt) + (1 - alpha) * _region_score(pred, gt)
    return float(max(0.0, score))


def _enhanced_alignment_sum(
    fg_fg: np.ndarray, fg_bg: np.ndarray, gt_foreground: int, size: int
) -> np.ndarray:
    """Sum of the enhanced alignment matrix given per-threshold pixel counts.

    ``fg_fg`` counts binarized-foreground pixels on the object, ``fg_bg`` those on
    the background.
    """
    fg_fg = np.asarray(fg_fg, dtype=np.int64)
    fg_bg = np.asarray(fg_bg, dtype=np.int64)
    predicted = fg_fg + fg_bg
    if gt_foreground == 0:
        return (size - predicted).astype(np.float64)
    if gt_foreground == size:
        return predicted.astype(np.float64)

    bg_fg = gt_foreground - fg_fg
    bg_bg = size - predicted - bg_fg
    mean_pred = predicted / size
    mean_gt = gt_foreground / size

    parts = [
        (fg_fg, 1 - mean_pred, 1 - mean_gt),
        (fg_bg, 1 - mean_pred, -mean_gt),
        (bg_fg, -mean_pred, 1 - mean_gt),
        (bg_bg, -mean_pred, -mean_gt),
    ]
    total = np.zeros(np.shape(fg_fg), dtype=np.float64)
    for count, a, b in parts:
        a = np.broadcast_to(a, total.shape)
        numerator = 2 * (a * b)
        denominator = a**2 + b**2
        align = np.zeros(total.shape, dtype=np.float64)
        np.divide(numerator, denominator, out=align, where=denominator > 0)
        total = total + ((align + 1) ** 2 / 4) * count
    return total


def e_measure_curve(pair: EvalPair) -> np.ndarray:
    """Enhanced alignment measure of the map binarized at every 8-bit threshold."""
    s8 = pair.quantized
    size = pair.gt.size
    fg_fg = _count_at_or_above(s8[pair.gt])
    fg_bg = _count_at_or_above(s8[~pair.gt])
    return _enhanced_alignment_sum(fg_fg, fg_bg, pair.foreground, size) / size


def e_measure_max(pair: EvalPair) -> float:
    return float(e_measure_curve(pair).max())


def mean_iou(pred_labels: np.ndarray, gt_labels: np.ndarray, classes: int) -> float:
    """Class-averaged IoU over the classes present in either label map."""
    pred_labels, gt_labels = np.asarray(pred_labels), np.asarray(gt_labels)
    if pred_labels.shape != gt_labels.shape:
        raise ShapeError(
            f"label maps differ: {pred_labels.shape} vs {gt_labels.shape}",
            expected=gt_labels.shape,
            actual=pred_labels.shape,
        )
    ious = []
    for c in range(classes):
        p, g = pred_labels == c, gt_labels == c
        union = np.count_nonzero(p | g)
        if union:
            ious.append(np.count_nonzero(p & g) / union)
    if not ious:
        raise InvalidMapError(f"no label in [0, {classes}) occurs in either map")
    return float(np.mean(ious))


@dataclass(frozen=True)
class PairScores:
    s_measure: float
    f_measure_max: float
    e_measure_max: float
    mae: float
    precision: np.ndarray
    recall: np.ndarray


def evaluate_pair(pair: EvalPair) -> PairScores:
    """All measures of one image.

    Raises:
        EmptyGroundTruthError: If the ground truth has no foreground pixel.
    """
    precision, recall = pr_curve(pair)
    return PairScores(
        s_measure=s_measure(pair),
        f_measure_max=f_measure_max(precision, recall),
        e_measure_max=e_measure_max(pair),
        mae=mae(pair),
        precision=precision,
        recall=recall,
    )

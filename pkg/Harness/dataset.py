"""Dataset ingestion, sample preparation and the synthetic desk corpus."""

from dataclasses import dataclass, replace
from pathlib import Path

import cv2
import numpy as np
from more_itertools import partition

from Autodiff.tensor import Tensor
from Harness.inputs import DatasetSpec
from Network.joint_learning import depth_to_3ch, rgb_to_tensor, standardize
from Utilities.errors import DatasetError
from Utilities.helpers import get_logger, make_rng

logger = get_logger("dataset")

GT_THRESHOLD = 128
DEPTH_NEAR_MM = (800.0, 1800.0)
DEPTH_FAR_MM = (3000.0, 6000.0)


@dataclass(frozen=True)
class SampleTriple:
    """One RGB image (H x W x 3, RGB order), its raw depth map and ground truth.

    ``depth`` is None for RGB-only datasets and ``gt`` is None when no ground
    truth was loaded. Ground truth holds {0, 1}, or class indices in head-swap mode.
    """

    stem: str
    rgb: np.ndarray
    depth: np.ndarray | None
    gt: np.ndarray | None

    @property
    def size(self) -> tuple[int, int]:
        return self.rgb.shape[0], self.rgb.shape[1]


@dataclass(frozen=True)
class PreparedSample:
    stem: str
    rgb: Tensor
    depth: Tensor | None
    gt: np.ndarray | None


def _index_directory(directory: Path, extensions: list[str]) -> dict[str, Path]:
    if not directory.is_dir():
        raise DatasetError(f"Dataset directory {directory} does not exist")
    allowed = {ext.lower() for ext in extensions}
    files: dict[str, Path] = {}
    for path in sorted(directory.iterdir()):
        if path.is_file() and path.suffix.lower() in allowed:
            files.setdefault(path.stem, path)
    return files


def read_rgb(path: Path) -> np.ndarray:
    image = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if image is None:
        raise DatasetError(f"Cannot decode image {path}")
    return cv2.cvtColor(image, cv2.COLOR_BGR2RGB)


def read_depth(path: Path) -> np.ndarray:
    """Single-channel depth as float64, keeping 16-bit precision."""
    image = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if image is None:
        raise DatasetError(f"Cannot decode depth map {path}")
    if image.ndim == 3:
        image = image[..., 0]
    return image.astype(np.float64)


def read_mask(path: Path) -> np.ndarray:
    """8-bit ground truth thresholded at 0.5 into {0, 1}."""
    image = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if image is None:
        raise DatasetError(f"Cannot decode ground truth {path}")
    return (image >= GT_THRESHOLD).astype(np.uint8)


def ingest(spec: DatasetSpec) -> list[SampleTriple]:
    """Load every stem present in all configured directories, in lexicographic order.

    Args:
        spec: Dataset layout.

    Returns:
        list[SampleTriple]: The paired samples.

    Raises:
        DatasetError: If a directory is missing or no stem is complete.
    """
    indexes = {
        name: _index_directory(path, spec.extensions)
        for name, path in spec.directories().items()
    }
    all_stems = sorted(set().union(*indexes.values()))
    complete = set.intersection(*(set(index) for index in indexes.values()))
    skipped, kept = partition(lambda stem: stem in complete, all_stems)

    for stem in skipped:
        missing = [name for name, index in indexes.items() if stem not in index]
        logger.warning("Skipping '%s': no file in %s", stem, ", ".join(missing))

    samples = []
    for stem in kept:
        rgb = read_rgb(indexes["rgb"][stem])
        depth = read_depth(indexes["depth"][stem]) if "depth" in indexes else None
        gt = read_mask(indexes["gt"][stem]) if "gt" in indexes else None
        mismatched = [
            name
            for name, array in (("depth", depth), ("gt", gt))
            if array is not None and array.shape[:2] != rgb.shape[:2]
        ]
        if mismatched:
            logger.warning(
                "Skipping '%s': %s size differs from the RGB image",
                stem,
                " and ".join(mismatched),
            )
            continue
        samples.append(SampleTriple(stem, rgb, depth, gt))

    if not samples:
        raise DatasetError(f"No complete samples under {spec.root}")
    logger.info("Ingested %d samples from %s", len(samples), spec.root)
    return samples


def mirror(sample: SampleTriple) -> SampleTriple:
    """Horizontal reflection of every map of a sample."""

    def flip(array: np.ndarray | None) -> np.ndarray | None:
        return None if array is None else np.ascontiguousarray(array[:, ::-1])

    return replace(
        sample,
        stem=f"{sample.stem}_mirror",
        rgb=flip(sample.rgb),
        depth=flip(sample.depth),
        gt=flip(sample.gt),
    )


def mirror_augment(samples: list[SampleTriple]) -> list[SampleTriple]:
    return list(samples) + [mirror(sample) for sample in samples]


def resize_map(array: np.ndarray, size: int, nearest: bool = False) -> np.ndarray:
    interpolation = cv2.INTER_NEAREST if nearest else cv2.INTER_LINEAR
    if array.shape[:2] == (size, size):
        return array
    return cv2.resize(array, (size, size), interpolation=interpolation)


def prepare_sample(
    sample: SampleTriple,
    size: int,
    dtype: np.dtype | type = np.float64,
    classes: int = 1,
) -> PreparedSample:
    """Resize a sample to the network input and convert it to standardized tensors.

    The ground truth is resized bilinearly and kept soft; class-index maps use
    nearest-neighbour sampling instead.
    """
    rgb = resize_map(sample.rgb.astype(np.float64), size)
    depth = None
    if sample.depth is not None:
        depth = standardize(depth_to_3ch(resize_map(sample.depth, size), dtype))
    gt = None
    if sample.gt is not None:
        if classes > 1:
            gt = resize_map(sample.gt.astype(np.int32), size, nearest=True)
        else:
            gt = resize_map(sample.gt.astype(np.float64), size)
    return PreparedSample(sample.stem, standardize(rgb_to_tensor(rgb, dtype)), depth, gt)


def _draw_shape(
    mask: np.ndarray, rng: np.random.Generator, size: int, scale: tuple[float, float]
) -> None:
    margin = size // 5
    center = (
        int(rng.integers(margin, size - margin)),
        int(rng.integers(margin, size - margin)),
    )
    low = max(int(size * scale[0]), 1)
    high = max(int(size * scale[1]), low + 1)
    if rng.random() < 0.5:
        axes = (int(rng.integers(low, high)), int(rng.integers(low, high)))
        angle = float(rng.uniform(0, 180))
        cv2.ellipse(mask, center, axes, angle, 0, 360, 1, thickness=-1)
    else:
        half_w, half_h = int(rng.integers(low, high)), int(rng.integers(low, high))
        cv2.rectangle(
            mask,
            (center[0] - half_w, center[1] - half_h),
            (center[0] + half_w, center[1] + half_h),
            1,
            thickness=-1,
        )


def _background(rng: np.random.Generator, size: int) -> np.ndarray:
    start = rng.uniform(30, 225, size=3)
    end = rng.uniform(30, 225, size=3)
    ramp = np.linspace(0.0, 1.0, size)[None, :, None]
    rows = np.broadcast_to(ramp, (size, size, 1))
    return start + (end - start) * rows


def synthesize_sample(
    rng: np.random.Generator, size: int, stem: str, with_depth: bool = True
) -> SampleTriple:
    """Render random shapes consistently into RGB, 16-bit-range depth and ground truth.

    Some objects share the background colour, some scenes carry RGB-only
    distractors and some have depth that barely separates the object.
    """
    gt = np.zeros((size, size), dtype=np.uint8)
    for _ in range(int(rng.integers(1, 3))):
        _draw_shape(gt, rng, size, (0.08, 0.22))
    if not gt.any():
        gt[size // 3 : 2 * size // 3, size // 3 : 2 * size // 3] = 1

    rgb = _background(rng, size)
    object_colour = rng.uniform(0, 255, size=3)
    if rng.random() < 0.25:
        object_colour = rgb[size // 2, size // 2] + rng.uniform(-25, 25, size=3)
    rgb[gt == 1] = object_colour

    if rng.random() < 0.5:
        distractor = np.zeros_like(gt)
        _draw_shape(distractor, rng, size, (0.05, 0.12))
        distractor &= 1 - gt
        rgb[distractor == 1] = rng.uniform(0, 255, size=3)

    rgb += rng.normal(0.0, 4.0, size=rgb.shape)
    rgb_u8 = np.clip(np.rint(rgb), 0, 255).astype(np.uint8)

    depth = None
    if with_depth:
        far = rng.uniform(*DEPTH_FAR_MM)
        ramp = np.linspace(0.0, 1.0, size)[:, None]
        depth = far - 800.0 * ramp * np.ones((1, size))
        near = rng.uniform(*DEPTH_NEAR_MM)
        if rng.random() < 0.2:
            near = depth.mean() - rng.uniform(50, 200)
        depth = np.where(gt == 1, near, depth) + rng.normal(0.0, 10.0, size=depth.shape)
        depth = np.clip(np.rint(depth), 1, np.iinfo(np.uint16).max).astype(np.float64)

    return SampleTriple(stem=stem, rgb=rgb_u8, depth=depth, gt=gt)


def synthesize_corpus(
    count: int, size: int = 64, seed: int = 0, rgb_only: bool = False
) -> list[SampleTriple]:
    """Deterministic corpus of ``count`` synthetic samples."""
    rng = make_rng(seed)
    prefix = "rgb" if rgb_only else "synth"
    return [
        synthesize_sample(rng, size, f"{prefix}_{index:04d}", with_depth=not rgb_only)
        for index in range(count)
    ]


def write_corpus(samples: list[SampleTriple], root: str | Path) -> DatasetSpec:
    """Store samples as RGB/<stem>.png, 16-bit depth/<stem>.png and 0/255 GT/<stem>.png."""
    root = Path(root)
    has_depth = all(sample.depth is not None for sample in samples)
    spec = DatasetSpec(root=root, depth_dir="depth" if has_depth else None)
    for directory in spec.directories().values():
        directory.mkdir(parents=True, exist_ok=True)

    for sample in samples:
        cv2.imwrite(
            str(root / spec.rgb_dir / f"{sample.stem}.png"),
            cv2.cvtColor(sample.rgb, cv2.COLOR_RGB2BGR),
        )
        if has_depth and spec.depth_dir is not None:
            cv2.imwrite(
                str(root / spec.depth_dir / f"{sample.stem}.png"),
                np.clip(np.rint(sample.depth), 0, 65535).astype(np.uint16),
            )
        if sample.gt is not None and spec.gt_dir is not None:
            cv2.imwrite(
                str(root / spec.gt_dir / f"{sample.stem}.png"),
                (sample.gt > 0).astype(np.uint8) * 255,
            )

    logger.info("Wrote %d samples to %s", len(samples), root)
    return spec


def split_holdout(
    samples: list[SampleTriple], fraction: float, seed: int
) -> tuple[list[SampleTriple], list[SampleTriple]]:
    """Seeded (train, held-out) split; both parts keep lexicographic order."""
    if len(samples) < 2:
        raise DatasetError("Need at least two samples to hold some out")
    held = max(1, int(round(len(samples) * fraction)))
    held = min(held, len(samples) - 1)
    chosen = set(make_rng(seed).permutation(len(samples))[:held].tolist())
    train, test = partition(lambda index: index in chosen, range(len(samples)))
    return [samples[i] for i in train], [samples[i] for i in test]

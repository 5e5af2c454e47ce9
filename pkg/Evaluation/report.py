"""Per-image and dataset-level metric reports and their file outputs."""

from collections.abc import Iterable
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import cv2
import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from tqdm import tqdm

from Evaluation.metrics import (
    THRESHOLDS,
    EvalPair,
    PairScores,
    evaluate_pair,
    f_measure_max,
)
from Utilities.errors import DatasetError, EmptyGroundTruthError
from Utilities.helpers import get_logger
from Utilities.spreadsheet import write_table

logger = get_logger("report")

SUMMARY_COLUMNS = {
    "s_measure": "S_alpha",
    "f_measure_max": "F_max",
    "e_measure_max": "E_max",
    "mae": "MAE",
}


class ImageReport(BaseModel):
    stem: str = Field(title="Stem")
    s_measure: float = Field(title="S-measure")
    f_measure_max: float = Field(title="Max F-measure")
    e_measure_max: float = Field(title="Max E-measure")
    mae: float = Field(title="Mean Absolute Error")


class MetricReport(BaseModel):
    """Dataset means plus the per-image values they were computed from."""

    s_measure: float = Field(title="S-measure", description="Mean over images.")
    f_measure_max: float = Field(
        title="Max F-measure",
        description="Maximum over thresholds of the F-measure of the mean P/R curves.",
    )
    mean_image_f_measure_max: float = Field(
        title="Mean Per-image Max F-measure",
    )
    e_measure_max: float = Field(title="Max E-measure", description="Mean over images.")
    mae: float = Field(title="Mean Absolute Error", description="Mean over images.")
    precision: list[float] = Field(title="Mean Precision", description="256 thresholds.")
    recall: list[float] = Field(title="Mean Recall", description="256 thresholds.")
    thresholds: list[int] = Field(default_factory=lambda: THRESHOLDS.tolist())
    images: list[ImageReport] = Field(default_factory=list)
    skipped: list[str] = Field(
        default_factory=list,
        title="Skipped Stems",
        description="Images left out because their ground truth is empty.",
    )

    def summary(self) -> dict[str, float]:
        return {label: getattr(self, name) for name, label in SUMMARY_COLUMNS.items()}


def aggregate(
    scores: Iterable[tuple[str, PairScores]], skipped: list[str] | None = None
) -> MetricReport:
    """Combine per-image scores into one report.

    Raises:
        DatasetError: If there is no image to aggregate.
    """
    scores = list(scores)
    if not scores:
        raise DatasetError("No scored image to aggregate")

    precision = np.mean([s.precision for _, s in scores], axis=0)
    recall = np.mean([s.recall for _, s in scores], axis=0)
    images = [
        ImageReport(
            stem=stem,
            s_measure=s.s_measure,
            f_measure_max=s.f_measure_max,
            e_measure_max=s.e_measure_max,
            mae=s.mae,
        )
        for stem, s in scores
    ]
    return MetricReport(
        s_measure=float(np.mean([s.s_measure for _, s in scores])),
        f_measure_max=f_measure_max(precision, recall),
        mean_image_f_measure_max=float(np.mean([s.f_measure_max for _, s in scores])),
        e_measure_max=float(np.mean([s.e_measure_max for _, s in scores])),
        mae=float(np.mean([s.mae for _, s in scores])),
        precision=precision.tolist(),
        recall=recall.tolist(),
        images=images,
        skipped=list(skipped or []),
    )


def _score(item: tuple[str, np.ndarray, np.ndarray]) -> tuple[str, PairScores | None]:
    stem, s_map, gt = item
    try:
        return stem, evaluate_pair(EvalPair(s_map, gt))
    except EmptyGroundTruthError:
        return stem, None


def evaluate_maps(
    items: list[tuple[str, np.ndarray, np.ndarray]],
    workers: int = 1,
    progress: bool = False,
) -> MetricReport:
    """Score (stem, saliency map, ground truth) triples, skipping empty ground truths.

    Args:
        items: Maps and masks of equal shapes.
        workers: Threads scoring images in parallel; results keep input order.
        progress: Show a progress bar.

    Returns:
        MetricReport: The aggregated report.
    """
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(
                tqdm(pool.map(_score, items), total=len(items), desc="eval", disable=not progress)
            )
    else:
        results = [_score(item) for item in tqdm(items, desc="eval", disable=not progress)]

    skipped = [stem for stem, scores in results if scores is None]
    for stem in skipped:
        logger.warning("Skipping '%s': ground truth has no foreground", stem)
    return aggregate(
        ((stem, scores) for stem, scores in results if scores is not None), skipped
    )


def load_prediction_pairs(
    prediction_dir: str | Path, gt_dir: str | Path
) -> list[tuple[str, np.ndarray, np.ndarray]]:
    """Pair 8-bit prediction PNGs with ground-truth masks by stem.

    Predictions are resized bilinearly to the ground-truth resolution.
    """
    prediction_dir, gt_dir = Path(prediction_dir), Path(gt_dir)
    for directory in (prediction_dir, gt_dir):
        if not directory.is_dir():
            raise DatasetError(f"Directory {directory} does not exist")

    extensions = {".png", ".jpg", ".jpeg"}
    predictions = {
        p.stem: p for p in sorted(prediction_dir.iterdir()) if p.suffix.lower() in extensions
    }
    masks = {p.stem: p for p in sorted(gt_dir.iterdir()) if p.suffix.lower() in extensions}
    for stem in sorted(set(predictions) ^ set(masks)):
        logger.warning("Skipping '%s': missing prediction or ground truth", stem)

    items = []
    for stem in sorted(set(predictions) & set(masks)):
        s_map = cv2.imread(str(predictions[stem]), cv2.IMREAD_GRAYSCALE)
        gt = cv2.imread(str(masks[stem]), cv2.IMREAD_GRAYSCALE)
        if s_map is None or gt is None:
            raise DatasetError(f"Cannot decode the prediction or ground truth of '{stem}'")
        if s_map.shape != gt.shape:
            s_map = cv2.resize(
                s_map, (gt.shape[1], gt.shape[0]), interpolation=cv2.INTER_LINEAR
            )
        items.append((stem, s_map, (gt >= 128).astype(np.uint8)))

    if not items:
        raise DatasetError(f"No prediction in {prediction_dir} matches {gt_dir}")
    return items


def write_report(report: MetricReport, output_dir: str | Path) -> dict[str, Path]:
    """Write report.json, report.csv, images.csv and pr_curve.csv."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    json_path = output_dir / "report.json"
    json_path.write_text(report.model_dump_json(indent=2))
    paths = {"report_json": json_path}
    paths["report_csv"] = write_table(
        pd.DataFrame([report.summary()]), output_dir / "report.csv"
    )
    paths["images_csv"] = write_table(
        pd.DataFrame([image.model_dump() for image in report.images]),
        output_dir / "images.csv",
    )
    paths["pr_curve"] = write_table(
        pd.DataFrame(
            {
                "threshold": report.thresholds,
                "precision": report.precision,
                "recall": report.recall,
            }
        ),
        output_dir / "pr_curve.csv",
    )
    logger.info("Wrote evaluation report to %s", output_dir)
    return paths

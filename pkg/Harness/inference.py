"""Prediction at native image resolution."""

from pathlib import Path

import cv2
import numpy as np

from Autodiff.tensor import no_grad
from Harness.dataset import SampleTriple, prepare_sample
from Network.model import JLDCF
from Utilities.errors import DatasetError


def _network_dtype(net: JLDCF) -> np.dtype:
    return next(param.dtype for _, param in net.named_parameters())


def _forward(net: JLDCF, sample: SampleTriple) -> np.ndarray:
    size = net.config.input_size
    prepared = prepare_sample(
        SampleTriple(sample.stem, sample.rgb, sample.depth, None), size, _network_dtype(net)
    )
    if prepared.depth is None:
        if net.config.modality_rows != ["rgb"]:
            raise DatasetError(f"'{sample.stem}' has no depth map")
        prepared_depth = prepared.rgb
    else:
        prepared_depth = prepared.depth
    with no_grad():
        prediction = net.forward(prepared.rgb, prepared_depth)
    return prediction.final.data[0].astype(np.float64)


def predict_saliency(net: JLDCF, sample: SampleTriple) -> np.ndarray:
    """Saliency in [0, 1], resized bilinearly back to the sample's own size."""
    scores = _forward(net, sample)
    if scores.shape[0] != 1:
        raise DatasetError("predict_saliency needs a single-class head")
    height, width = sample.size
    resized = cv2.resize(scores[0], (width, height), interpolation=cv2.INTER_LINEAR)
    return np.clip(resized, 0.0, 1.0)


def predict_labels(net: JLDCF, sample: SampleTriple) -> np.ndarray:
    """Per-pixel argmax class of the C-class head at the sample's own size."""
    labels = np.argmax(_forward(net, sample), axis=0).astype(np.uint8)
    height, width = sample.size
    return cv2.resize(labels, (width, height), interpolation=cv2.INTER_NEAREST)


def to_uint8(saliency: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(saliency * 255.0), 0, 255).astype(np.uint8)


def write_map(image: np.ndarray, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), image):
        raise DatasetError(f"Cannot write {path}")
    return path

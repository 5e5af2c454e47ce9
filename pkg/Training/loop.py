"""Per-sample SGD training with mirror augmentation and a loss trace."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from tqdm import tqdm

from Autodiff.optim import SGD
from Autodiff.tensor import backward
from Harness.checkpoint import save_checkpoint
from Harness.dataset import SampleTriple, mirror_augment, prepare_sample
from Network.model import JLDCF
from Training.inputs import LossConfig, OptimizerConfig, TrainConfig
from Training.losses import multitask_loss
from Utilities.errors import DatasetError, TrainingDivergedError
from Utilities.helpers import get_logger, make_rng
from Utilities.spreadsheet import write_table

logger = get_logger("training")

TRACE_COLUMNS = ["iteration", "L_f", "L_g_rgb", "L_g_d", "total"]


@dataclass
class TrainResult:
    network: JLDCF
    trace: pd.DataFrame
    checkpoint_path: Path | None = None
    trace_path: Path | None = None


def train(
    dataset: list[SampleTriple],
    net: JLDCF,
    cfg: TrainConfig,
    loss_cfg: LossConfig | None = None,
    optimizer_cfg: OptimizerConfig | None = None,
    rgb_dataset: list[SampleTriple] | None = None,
    output_dir: str | Path | None = None,
    progress: bool = True,
) -> TrainResult:
    """Train ``net`` in place, one RGB-D pair per SGD step.

    Args:
        dataset: RGB-D samples with ground truth.
        net: The network; its parameters are cast to the configured precision.
        cfg: Epochs, seed, augmentation and precision.
        loss_cfg: Guidance weight and clamp epsilon.
        optimizer_cfg: SGD hyperparameters.
        rgb_dataset: RGB-only samples cycled through in multitask mode.
        output_dir: When given, receives ``checkpoint.bin`` and ``loss_trace.csv``.
        progress: Show a progress bar.

    Returns:
        TrainResult: The trained network and the per-iteration loss trace.

    Raises:
        DatasetError: If the dataset (or the RGB-only one in multitask mode) is empty.
        TrainingDivergedError: If a loss stops being finite.
    """
    loss_cfg = loss_cfg or LossConfig()
    optimizer_cfg = optimizer_cfg or OptimizerConfig()
    if not dataset:
        raise DatasetError("Cannot train on an empty dataset")
    if cfg.multitask and not rgb_dataset:
        raise DatasetError("Multitask training needs a non-empty RGB-only dataset")

    dtype = cfg.precision.dtype
    size = net.config.input_size
    classes = net.config.classes
    if any(param.dtype != dtype for _, param in net.named_parameters()):
        net.astype(dtype)

    samples = mirror_augment(dataset) if cfg.mirror else list(dataset)
    prepared = [prepare_sample(sample, size, dtype, classes) for sample in samples]
    if any(p.gt is None or p.depth is None for p in prepared):
        raise DatasetError("Training samples need depth and ground truth")
    task_prepared = []
    if cfg.multitask and rgb_dataset:
        task_prepared = [prepare_sample(s, size, dtype, classes) for s in rgb_dataset]

    optimizer = SGD(net.named_parameters(), optimizer_cfg.make_state(size))
    rng = make_rng(cfg.seed)
    total_steps = cfg.epochs * len(prepared)
    if cfg.max_iterations is not None:
        total_steps = min(total_steps, cfg.max_iterations)
    logger.info(
        "Training on %d samples for %d steps at lr %.3g",
        len(prepared),
        total_steps,
        optimizer.state.learning_rate,
    )

    rows = []
    iteration = 0
    bar = tqdm(total=total_steps, desc="train", disable=not progress)
    for epoch in range(cfg.epochs):
        epoch_losses = []
        for index in rng.permutation(len(prepared)):
            if iteration >= total_steps:
                break
            sample = prepared[index]
            task = task_prepared[iteration % len(task_prepared)] if task_prepared else None

            prediction = net.forward(
                sample.rgb, sample.depth, task.rgb if task is not None else None
            )
            terms = multitask_loss(
                prediction.final,
                prediction.coarse.get("rgb"),
                prediction.coarse.get("depth"),
                prediction.coarse.get("rgb_task"),
                sample.gt,
                task.gt if task is not None else None,
                loss_cfg,
            )
            value = terms.total.item()
            if not np.isfinite(value):
                bar.close()
                raise TrainingDivergedError(
                    f"Loss became {value} at iteration {iteration} on '{sample.stem}'",
                    iteration=iteration,
                    stem=sample.stem,
                )

            optimizer.zero_grad()
            backward(terms.total)
            optimizer.step()

            rows.append({"iteration": iteration, **terms.as_row()})
            epoch_losses.append(value)
            iteration += 1
            bar.update(1)

        if epoch_losses:
            logger.info("Epoch %d mean loss %.6g", epoch + 1, float(np.mean(epoch_losses)))
        if iteration >= total_steps:
            break
    bar.close()

    trace = pd.DataFrame(rows)
    if trace.empty:
        trace = pd.DataFrame(columns=TRACE_COLUMNS)
    result = TrainResult(network=net, trace=trace)
    if output_dir is not None:
        output_dir = Path(output_dir)
        result.checkpoint_path = save_checkpoint(
            net, output_dir / "checkpoint.bin", {"iterations": iteration, "seed": cfg.seed}
        )
        result.trace_path = write_table(trace, output_dir / "loss_trace.csv")
    return result

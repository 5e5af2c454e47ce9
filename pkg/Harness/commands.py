"""Command implementations behind the command-line interface.

Every command receives a :class:`RunContext`, its validated inputs and the
process settings, and reports its outcome through the context.
"""

import sys
from collections.abc import Callable
from typing import TypeVar

from pydantic import BaseModel, ValidationError

from Evaluation.report import evaluate_maps, load_prediction_pairs, write_report
from Harness.ablation import apply_preset, resolve_preset, run_ablation, write_comparison
from Harness.checkpoint import restore_network
from Harness.context import RunContext, RunStatus
from Harness.dataset import ingest, split_holdout, synthesize_corpus, write_corpus
from Harness.gradient_suite import run_gradient_suite
from Harness.inference import predict_labels, predict_saliency, to_uint8, write_map
from Harness.inputs import (
    AblateInputs,
    CommandInputs,
    DatasetSpec,
    EvalInputs,
    GradcheckInputs,
    HarnessSettings,
    InferInputs,
    RunConfig,
    SynthInputs,
    TrainInputs,
)
from Network.inputs import ModalityVariant
from Network.model import build_network
from Training.loop import train
from Utilities.errors import (
    ConfigurationError,
    GradientCheckError,
    JLDCFError,
    UnexpectedError,
)
from Utilities.helpers import get_logger
from Utilities.spreadsheet import write_table

logger = get_logger("commands")

InputsT = TypeVar("InputsT", bound=BaseModel)
Command = Callable[[RunContext, InputsT, HarnessSettings], None]


def resolve_run_config(inputs: CommandInputs, settings: HarnessSettings, command: str) -> RunConfig:
    """Load the run config file, if any, and apply the command-line overrides."""
    cfg = RunConfig.load(inputs.config) if inputs.config is not None else RunConfig(
        output_dir=settings.output_root / command
    )
    try:
        data = cfg.model_dump()
        if inputs.seed is not None:
            data["training"]["seed"] = inputs.seed
        if inputs.epochs is not None:
            data["training"]["epochs"] = inputs.epochs
        if inputs.input_size is not None:
            data["network"]["backbone"]["input_size"] = inputs.input_size
        if getattr(inputs, "max_iterations", None) is not None:
            data["training"]["max_iterations"] = inputs.max_iterations
        if inputs.out is not None:
            data["output_dir"] = inputs.out
        cfg = RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid override: {e}") from e

    if inputs.variant is not None:
        cfg = cfg.model_copy(update={"network": apply_preset(inputs.variant, cfg.network)})
    return cfg


def run_train(context: RunContext, inputs: TrainInputs, settings: HarnessSettings) -> None:
    cfg = resolve_run_config(inputs, settings, "train")
    context.output_dir = cfg.output_dir

    spec = DatasetSpec(root=inputs.data) if inputs.data is not None else cfg.dataset
    if spec is None:
        raise ConfigurationError("No training dataset: pass --data or set 'dataset'")
    samples = ingest(spec)

    rgb_samples = None
    if cfg.training.multitask:
        rgb_spec = (
            DatasetSpec(root=inputs.rgb_data, depth_dir=None)
            if inputs.rgb_data is not None
            else cfg.rgb_dataset
        )
        if rgb_spec is None:
            raise ConfigurationError("Multitask training needs --rgb-data or 'rgb_dataset'")
        rgb_samples = ingest(rgb_spec)

    net = build_network(cfg.network, cfg.training.seed, cfg.training.precision.dtype)
    result = train(
        samples,
        net,
        cfg.training,
        cfg.loss,
        cfg.optimizer,
        rgb_dataset=rgb_samples,
        output_dir=cfg.output_dir,
        progress=settings.progress,
    )

    context.attach_artifact("run_config", cfg.save(cfg.output_dir / "run_config.json"))
    if result.checkpoint_path is not None:
        context.attach_artifact("checkpoint", result.checkpoint_path)
    if result.trace_path is not None:
        context.attach_artifact("loss_trace", result.trace_path)
    final_loss = float(result.trace["total"].iloc[-1]) if len(result.trace) else None
    context.attach_result("iterations", len(result.trace))
    context.attach_result("final_loss", final_loss)
    context.mark_run_success(
        f"Trained {len(result.trace)} iterations on {len(samples)} samples."
    )


def run_infer(context: RunContext, inputs: InferInputs, settings: HarnessSettings) -> None:
    net = restore_network(inputs.checkpoint)
    output_dir = inputs.out or settings.output_root / "infer"
    context.output_dir = output_dir

    depth_dir = None if net.config.modality == ModalityVariant.RGB else "depth"
    samples = ingest(DatasetSpec(root=inputs.data, depth_dir=depth_dir, gt_dir=None))
    for sample in samples:
        if net.config.classes > 1:
            image = predict_labels(net, sample)
        else:
            image = to_uint8(predict_saliency(net, sample))
        write_map(image, output_dir / "maps" / f"{sample.stem}.png")

    context.attach_artifact("maps", output_dir / "maps")
    context.mark_run_success(f"Wrote {len(samples)} saliency maps.")


def run_eval(context: RunContext, inputs: EvalInputs, settings: HarnessSettings) -> None:
    output_dir = inputs.out or settings.output_root / "eval"
    context.output_dir = output_dir

    items = load_prediction_pairs(inputs.predictions, inputs.gt)
    report = evaluate_maps(
        items, workers=inputs.workers or settings.workers, progress=settings.progress
    )
    for name, path in write_report(report, output_dir).items():
        context.attach_artifact(name, path)
    context.attach_result("summary", report.summary())
    context.mark_run_success(
        f"Evaluated {len(report.images)} images, skipped {len(report.skipped)}: "
        + ", ".join(f"{k}={v:.4f}" for k, v in report.summary().items())
    )


def run_gradcheck(
    context: RunContext, inputs: GradcheckInputs, settings: HarnessSettings
) -> None:
    output_dir = inputs.out or settings.output_root / "gradcheck"
    context.output_dir = output_dir

    table = run_gradient_suite(inputs.seed, inputs.tolerance, inputs.network_tolerance)
    context.attach_artifact("gradcheck", write_table(table, output_dir / "gradcheck.csv"))
    failed = table[~table["passed"]]
    if len(failed):
        failures = [f"{row.case}.{row.tensor}" for row in failed.itertuples()]
        raise GradientCheckError(
            f"{len(failed)} of {len(table)} gradient checks exceeded their tolerance",
            failures,
        )
    context.mark_run_success(f"All {len(table)} gradient checks passed.")


def run_ablate(context: RunContext, inputs: AblateInputs, settings: HarnessSettings) -> None:
    cfg = resolve_run_config(inputs, settings, "ablate")
    context.output_dir = cfg.output_dir
    presets = [resolve_preset(name) for name in inputs.presets]

    spec = DatasetSpec(root=inputs.data) if inputs.data is not None else cfg.dataset
    if spec is None:
        raise ConfigurationError("No dataset: pass --data or set 'dataset'")
    train_samples, test_samples = split_holdout(
        ingest(spec), inputs.holdout, cfg.training.seed
    )

    reports = {}
    for preset in dict.fromkeys(presets):
        logger.info("Running ablation preset %s", preset)
        reports[preset] = run_ablation(
            preset,
            train_samples,
            test_samples,
            cfg,
            output_dir=cfg.output_dir,
            progress=settings.progress,
        )

    path = write_comparison(reports, cfg.output_dir / "ablation.csv")
    context.attach_artifact("comparison", path)
    context.attach_result("mae", {preset: report.mae for preset, report in reports.items()})
    context.mark_run_success(f"Compared {len(reports)} presets.")


def run_synth(context: RunContext, inputs: SynthInputs, settings: HarnessSettings) -> None:
    context.output_dir = inputs.out
    samples = synthesize_corpus(inputs.count, inputs.size, inputs.seed, inputs.rgb_only)
    spec = write_corpus(samples, inputs.out)
    context.attach_artifact("dataset", spec.root)
    context.mark_run_success(f"Synthesized {len(samples)} samples.")


def execute_command(
    name: str,
    command: Command,
    inputs: BaseModel,
    settings: HarnessSettings | None = None,
) -> int:
    """Run ``command`` inside a fresh context and turn its outcome into an exit code.

    A :class:`JLDCFError` marks the run failed and prints one JSON line on stderr;
    any other exception is logged with its traceback and reported as an
    :class:`UnexpectedError`.

    Returns:
        int: 0 on success, 1 on failure.
    """
    settings = settings or HarnessSettings()
    context = RunContext.initialize(name, getattr(inputs, "out", None))
    try:
        command(context, inputs, settings)
    except JLDCFError as e:
        context.mark_run_failed(str(e), e)
    except Exception as e:
        logger.exception("%s raised an unexpected error", name)
        error = UnexpectedError(e)
        context.mark_run_failed(str(error), error)

    if context.run_status != RunStatus.SUCCEEDED and context.error is None:
        context.mark_run_failed(context.status_message or f"{name} did not report success")

    try:
        path = context.write_summary()
    except OSError as e:
        logger.warning("Cannot write the run summary: %s", e)
        path = None
    if path is not None:
        logger.info("Run summary written to %s", path)

    if context.exit_code:
        print(context.failure_line(), file=sys.stderr)
    return context.exit_code


COMMANDS: dict[str, tuple[Command, type[BaseModel]]] = {
    "train": (run_train, TrainInputs),
    "infer": (run_infer, InferInputs),
    "eval": (run_eval, EvalInputs),
    "gradcheck": (run_gradcheck, GradcheckInputs),
    "ablate": (run_ablate, AblateInputs),
    "synth": (run_synth, SynthInputs),
}


def reject_inputs(name: str, error: ValidationError | JLDCFError) -> int:
    """Report command-line values that fail validation; returns exit status 2."""
    context = RunContext.initialize(name)
    if isinstance(error, JLDCFError):
        problem = error
    else:
        problem = ConfigurationError(
            f"Invalid arguments for {name}: {error.error_count()} validation error(s)",
            [
                {"field": ".".join(str(part) for part in e["loc"]), "message": e["msg"]}
                for e in error.errors()
            ],
        )
    context.mark_run_failed(str(problem), problem)
    print(context.failure_line(), file=sys.stderr)
    return 2

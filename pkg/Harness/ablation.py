"""Ablation presets as configuration deltas, and the comparison table."""

from pathlib import Path

import pandas as pd
from Levenshtein import ratio

from Evaluation.report import SUMMARY_COLUMNS, MetricReport, evaluate_maps, write_report
from Harness.dataset import SampleTriple
from Harness.inference import predict_saliency, to_uint8
from Harness.inputs import RunConfig
from Network.inputs import (
    BackboneSharing,
    DecoderWiring,
    FusionVariant,
    ModalityVariant,
    NetworkConfig,
)
from Network.model import build_network
from Training.loop import train
from Utilities.errors import UnknownPresetError
from Utilities.helpers import get_logger
from Utilities.spreadsheet import write_table

logger = get_logger("ablation")

# Preset names mapped to AblationPresets methods
preset_mapping = {
    "A": "full_model",
    "B": "half_width_backbone",
    "B-vgg-width": "half_width_backbone",
    "C": "concat_fusion",
    "D": "rgb_only",
    "E": "depth_only",
    "F": "separate_backbones",
    "G": "without_fa",
    "H": "without_dense_connections",
    "I": "residual_only",
}

SUGGESTION_THRESHOLD = 0.5


class AblationPresets:
    """Each preset turns the full network config into one ablated variant."""

    @staticmethod
    def full_model(cfg: NetworkConfig) -> NetworkConfig:
        return cfg.model_copy(deep=True)

    @staticmethod
    def half_width_backbone(cfg: NetworkConfig) -> NetworkConfig:
        """Narrower encoder standing in for the backbone comparison."""
        backbone = cfg.backbone.model_dump(exclude={"stage_channels", "side_paths"})
        backbone["width"] = max(1, cfg.backbone.width // 2)
        return _rebuild(cfg, backbone=backbone)

    @staticmethod
    def concat_fusion(cfg: NetworkConfig) -> NetworkConfig:
        return _rebuild(cfg, fusion=FusionVariant.CONCAT, use_fa=True)

    @staticmethod
    def rgb_only(cfg: NetworkConfig) -> NetworkConfig:
        return _rebuild(
            cfg,
            fusion=FusionVariant.IDENTITY_RGB,
            modality=ModalityVariant.RGB,
            sharing=BackboneSharing.JOINT,
        )

    @staticmethod
    def depth_only(cfg: NetworkConfig) -> NetworkConfig:
        return _rebuild(
            cfg,
            fusion=FusionVariant.IDENTITY_DEPTH,
            modality=ModalityVariant.DEPTH,
            sharing=BackboneSharing.JOINT,
        )

    @staticmethod
    def separate_backbones(cfg: NetworkConfig) -> NetworkConfig:
        return _rebuild(cfg, sharing=BackboneSharing.SEPARATE)

    @staticmethod
    def without_fa(cfg: NetworkConfig) -> NetworkConfig:
        """Every FA becomes the identity on its summed inputs."""
        fusion = cfg.fusion if cfg.fusion != FusionVariant.CONCAT else FusionVariant.CM
        return _rebuild(cfg, use_fa=False, fusion=fusion)

    @staticmethod
    def without_dense_connections(cfg: NetworkConfig) -> NetworkConfig:
        return _rebuild(cfg, wiring=DecoderWiring.CHAIN)

    @staticmethod
    def residual_only(cfg: NetworkConfig) -> NetworkConfig:
        """Chain wiring plus the single FA5 to FA1 skip."""
        return _rebuild(cfg, wiring=DecoderWiring.RESIDUAL)


def _rebuild(cfg: NetworkConfig, **changes) -> NetworkConfig:
    # re-validate so cross-field checks and derived defaults apply to the variant
    data = cfg.model_dump()
    data.update(changes)
    return NetworkConfig.model_validate(data)


def resolve_preset(name: str) -> str:
    """Canonical preset key for ``name``, case-insensitive.

    Raises:
        UnknownPresetError: With the closest known name as a suggestion.
    """
    for key in preset_mapping:
        if key.lower() == name.strip().lower():
            return "B" if key == "B-vgg-width" else key

    best = max(preset_mapping, key=lambda key: ratio(key.lower(), name.lower()))
    suggestion = best if ratio(best.lower(), name.lower()) >= SUGGESTION_THRESHOLD else None
    raise UnknownPresetError(name, suggestion)


def apply_preset(name: str, cfg: NetworkConfig) -> NetworkConfig:
    method = getattr(AblationPresets, preset_mapping[resolve_preset(name)])
    return method(cfg)


def run_ablation(
    preset: str,
    train_samples: list[SampleTriple],
    test_samples: list[SampleTriple],
    run_config: RunConfig,
    output_dir: str | Path | None = None,
    progress: bool = False,
) -> MetricReport:
    """Train one preset with the run's seed and data, then score the held-out split.

    Args:
        preset: Preset name, A to I.
        train_samples: Samples to train on.
        test_samples: Held-out samples with ground truth.
        run_config: Base configuration the preset is applied to.
        output_dir: When given, receives the checkpoint, trace and report.
        progress: Show progress bars.

    Returns:
        MetricReport: Metrics of the preset on the held-out split.
    """
    key = resolve_preset(preset)
    network_cfg = apply_preset(key, run_config.network)
    training = run_config.training
    net = build_network(network_cfg, seed=training.seed, dtype=training.precision.dtype)
    logger.info(
        "Preset %s: %d parameters (%d in the backbone)",
        key,
        net.count_parameters("all"),
        net.count_parameters("backbone"),
    )

    preset_dir = Path(output_dir) / key if output_dir is not None else None
    train(
        train_samples,
        net,
        training,
        run_config.loss,
        run_config.optimizer,
        output_dir=preset_dir,
        progress=progress,
    )
    items = [
        (sample.stem, to_uint8(predict_saliency(net, sample)), sample.gt)
        for sample in test_samples
    ]
    report = evaluate_maps(items)
    if preset_dir is not None:
        write_report(report, preset_dir)
    return report


def compare_presets(reports: dict[str, MetricReport]) -> pd.DataFrame:
    """Metric x preset table with rows S_alpha, F_max, E_max, MAE."""
    table = pd.DataFrame(
        {preset: report.summary() for preset, report in reports.items()},
        index=list(SUMMARY_COLUMNS.values()),
    )
    table.index.name = "metric"
    return table.reset_index()


def write_comparison(reports: dict[str, MetricReport], path: str | Path) -> Path:
    return write_table(compare_presets(reports), path)

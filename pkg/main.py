"""
Command line entry point: train, infer, eval, gradcheck, ablate and synth.

Exit status is 0 on success; failures print one JSON line on stderr.
"""

import argparse
import sys
from collections.abc import Sequence

from pydantic import ValidationError

from Harness.commands import COMMANDS, execute_command, reject_inputs
from Harness.inputs import HarnessSettings
from Utilities.errors import JLDCFError
from Utilities.helpers import configure_logging


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="Run config JSON file.")
    parser.add_argument("--out", help="Output directory.")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--variant", help="Ablation preset (A to I) applied to the config.")
    parser.add_argument("--input-size", dest="input_size", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jldcf", description="Desk-scale RGB-D salient object detection."
    )
    parser.add_argument("--log-level", dest="log_level", help="Overrides JLDCF_LOG_LEVEL.")
    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", help="Train a network on an RGB-D dataset.")
    _add_run_flags(train)
    train.add_argument("--data", help="Dataset root holding RGB/, depth/ and GT/.")
    train.add_argument("--rgb-data", dest="rgb_data", help="RGB-only dataset for multitask runs.")
    train.add_argument("--max-iterations", dest="max_iterations", type=int)

    infer = commands.add_parser("infer", help="Write saliency maps from a checkpoint.")
    _add_run_flags(infer)
    infer.add_argument("--checkpoint", required=True)
    infer.add_argument("--data", required=True, help="Root holding RGB/ and depth/.")

    evaluate = commands.add_parser("eval", help="Score prediction PNGs against masks.")
    evaluate.add_argument("--predictions", required=True)
    evaluate.add_argument("--gt", required=True)
    evaluate.add_argument("--out")
    evaluate.add_argument("--workers", type=int)

    gradcheck = commands.add_parser("gradcheck", help="Check gradients by finite differences.")
    gradcheck.add_argument("--out")
    gradcheck.add_argument("--seed", type=int, default=0)
    gradcheck.add_argument("--tolerance", type=float, default=1e-4)
    gradcheck.add_argument("--network-tolerance", dest="network_tolerance", type=float, default=1e-3)

    ablate = commands.add_parser("ablate", help="Train and compare ablation presets.")
    _add_run_flags(ablate)
    ablate.add_argument("--data", help="Dataset root holding RGB/, depth/ and GT/.")
    ablate.add_argument("--presets", nargs="+", help="Preset names, default A to I.")
    ablate.add_argument("--holdout", type=float, default=0.25)
    ablate.add_argument("--max-iterations", dest="max_iterations", type=int)

    synth = commands.add_parser("synth", help="Generate a synthetic RGB-D corpus.")
    synth.add_argument("--out", required=True)
    synth.add_argument("--count", type=int, default=16)
    synth.add_argument("--size", type=int, default=64)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--rgb-only", dest="rgb_only", action="store_true")

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    settings = HarnessSettings()
    configure_logging(args.log_level or settings.log_level)

    function, inputs_model = COMMANDS[args.command]
    values = {
        key: value
        for key, value in vars(args).items()
        if key not in {"command", "log_level"} and value is not None
    }
    try:
        inputs = inputs_model.model_validate(values)
    except (ValidationError, JLDCFError) as e:
        return reject_inputs(args.command, e)

    return execute_command(args.command, function, inputs, settings)


if __name__ == "__main__":
    sys.exit(main())

import builtins
import json
import logging

import cv2
import numpy as np
import pytest

from Autodiff.tensor import Tensor
from Harness.ablation import apply_preset, compare_presets, resolve_preset, run_ablation
from Harness.checkpoint import MAGIC, load_checkpoint, restore_network, save_checkpoint
from Harness.commands import execute_command, resolve_run_config
from Harness.dataset import ingest, split_holdout, synthesize_corpus, write_corpus
from Harness.inference import predict_saliency, to_uint8
from Harness.inputs import DatasetSpec, HarnessSettings, RunConfig, SynthInputs, TrainInputs
from Network.inputs import BackboneSharing, DecoderWiring, FusionVariant, ModalityVariant
from Network.model import build_network
from Training.inputs import TrainConfig
from Utilities.errors import CheckpointError, ConfigurationError, DatasetError, UnknownPresetError
from Utilities.spreadsheet import read_table
from main import main


@pytest.fixture
def quiet(monkeypatch):
    monkeypatch.setenv("JLDCF_PROGRESS", "false")


@pytest.fixture
def toy_run_config(tmp_path, toy_config):
    cfg = RunConfig(network=toy_config, training=TrainConfig(max_iterations=2))
    return cfg.save(tmp_path / "toy_run.json")


def failure_record(stderr: str) -> dict:
    lines = [line for line in stderr.splitlines() if line.startswith("{")]
    assert lines, stderr
    return json.loads(lines[-1])


class TestRunConfig:
    def test_round_trip(self, tmp_path, toy_config):
        cfg = RunConfig(network=toy_config, dataset=DatasetSpec(root=tmp_path))
        loaded = RunConfig.load(cfg.save(tmp_path / "cfg.json"))
        assert loaded.model_dump() == cfg.model_dump()

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            RunConfig.load(tmp_path / "absent.json")

    def test_malformed_file(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"training": {"epochs": 0}}')
        with pytest.raises(ConfigurationError):
            RunConfig.load(path)

    def test_invalid_input_size(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"network": {"backbone": {"input_size": 17}}}')
        with pytest.raises(ConfigurationError):
            RunConfig.load(path)

    def test_command_line_overrides(self, tmp_path, toy_run_config):
        inputs = TrainInputs(
            config=toy_run_config, seed=3, epochs=2, input_size=32, out=tmp_path / "o"
        )
        cfg = resolve_run_config(inputs, HarnessSettings(), "train")
        assert cfg.training.seed == 3
        assert cfg.training.epochs == 2
        assert cfg.network.input_size == 32
        assert cfg.output_dir == tmp_path / "o"

    def test_variant_override(self, toy_run_config):
        inputs = TrainInputs(config=toy_run_config, variant="h")
        cfg = resolve_run_config(inputs, HarnessSettings(), "train")
        assert cfg.network.wiring == DecoderWiring.CHAIN

    def test_bad_override(self, toy_run_config):
        inputs = TrainInputs(config=toy_run_config, input_size=17)
        with pytest.raises(ConfigurationError):
            resolve_run_config(inputs, HarnessSettings(), "train")

    def test_default_output_root(self, tmp_path):
        settings = HarnessSettings(output_root=tmp_path)
        cfg = resolve_run_config(TrainInputs(), settings, "train")
        assert cfg.output_dir == tmp_path / "train"


class TestDataset:
    def test_ingest_skips_incomplete_stems(self, synthetic_samples, tmp_path, caplog):
        spec = write_corpus(synthetic_samples[:3], tmp_path / "data")
        cv2.imwrite(str(tmp_path / "data" / "GT" / "orphan.png"), np.zeros((24, 24), np.uint8))
        with caplog.at_level(logging.WARNING):
            samples = ingest(spec)
        assert [s.stem for s in samples] == [s.stem for s in synthetic_samples[:3]]
        assert "orphan" in caplog.text

    def test_ingest_reads_back_what_was_written(self, synthetic_samples, synthetic_dataset):
        first = ingest(synthetic_dataset)[0]
        np.testing.assert_array_equal(first.rgb, synthetic_samples[0].rgb)
        np.testing.assert_array_equal(first.depth, synthetic_samples[0].depth)
        np.testing.assert_array_equal(first.gt, synthetic_samples[0].gt)
        assert first.depth.dtype == np.float64

    def test_ingest_is_deterministic(self, synthetic_dataset):
        first, second = ingest(synthetic_dataset), ingest(synthetic_dataset)
        assert [s.stem for s in first] == [s.stem for s in second]
        assert all(np.array_equal(a.rgb, b.rgb) for a, b in zip(first, second))

    def test_size_mismatch_is_skipped(self, synthetic_samples, tmp_path, caplog):
        spec = write_corpus(synthetic_samples[:2], tmp_path / "data")
        stem = synthetic_samples[0].stem
        cv2.imwrite(str(tmp_path / "data" / "GT" / f"{stem}.png"), np.zeros((10, 10), np.uint8))
        with caplog.at_level(logging.WARNING):
            samples = ingest(spec)
        assert [s.stem for s in samples] == [synthetic_samples[1].stem]
        assert "size differs" in caplog.text

    def test_missing_directory(self, tmp_path):
        with pytest.raises(DatasetError):
            ingest(DatasetSpec(root=tmp_path / "nothing"))

    def test_rgb_only_corpus(self, tmp_path):
        spec = write_corpus(synthesize_corpus(2, size=16, rgb_only=True), tmp_path / "rgb")
        assert spec.depth_dir is None
        assert all(sample.depth is None for sample in ingest(spec))

    def test_synthetic_corpus_is_seeded(self):
        first, second = synthesize_corpus(3, size=16, seed=5), synthesize_corpus(3, size=16, seed=5)
        assert all(np.array_equal(a.depth, b.depth) for a, b in zip(first, second))
        assert all(sample.gt.any() for sample in first)
        assert first[0].depth.max() <= np.iinfo(np.uint16).max

    def test_holdout_split(self, synthetic_samples):
        train, test = split_holdout(synthetic_samples, 0.25, seed=1)
        assert len(test) == 2 and len(train) == 4
        assert {s.stem for s in train} | {s.stem for s in test} == {
            s.stem for s in synthetic_samples
        }
        again = split_holdout(synthetic_samples, 0.25, seed=1)
        assert [s.stem for s in again[1]] == [s.stem for s in test]
        with pytest.raises(DatasetError):
            split_holdout(synthetic_samples[:1], 0.5, seed=0)


class TestCheckpoint:
    def test_save_and_load(self, toy_network, tmp_path):
        path = save_checkpoint(toy_network, tmp_path / "net.bin", {"iterations": 4})
        checkpoint = load_checkpoint(path)
        assert checkpoint.config.model_dump() == toy_network.config.model_dump()
        assert checkpoint.metadata == {"iterations": 4}
        expected = toy_network.state_dict()
        assert checkpoint.state.keys() == expected.keys()
        for name, array in expected.items():
            np.testing.assert_array_equal(checkpoint.state[name], array)

    def test_restored_network_predicts_identically(self, toy_network, synthetic_samples, tmp_path):
        restored = restore_network(save_checkpoint(toy_network, tmp_path / "net.bin"))
        sample = synthetic_samples[0]
        np.testing.assert_array_equal(
            predict_saliency(restored, sample), predict_saliency(toy_network, sample)
        )

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "net.bin"
        path.write_bytes(b"NOTACKPT" + bytes(16))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_truncated(self, toy_network, tmp_path):
        path = save_checkpoint(toy_network, tmp_path / "net.bin")
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)

    def test_trailing_bytes(self, toy_network, tmp_path):
        path = save_checkpoint(toy_network, tmp_path / "net.bin")
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "absent.bin")

    def test_header_starts_with_magic(self, toy_network, tmp_path):
        path = save_checkpoint(toy_network, tmp_path / "net.bin")
        assert path.read_bytes().startswith(MAGIC)


class TestPresets:
    @pytest.mark.parametrize("name, key", [("a", "A"), (" i ", "I"), ("B-vgg-width", "B")])
    def test_resolution(self, name, key):
        assert resolve_preset(name) == key

    def test_close_name_gets_a_suggestion(self):
        with pytest.raises(UnknownPresetError) as info:
            resolve_preset("b-vgg")
        assert info.value.suggestion == "B-vgg-width"
        assert "B-vgg-width" in str(info.value)

    def test_unrelated_name_has_no_suggestion(self):
        with pytest.raises(UnknownPresetError) as info:
            resolve_preset("xyz")
        assert info.value.suggestion is None

    def test_separate_backbones_double_the_encoder(self, toy_config):
        full = build_network(apply_preset("A", toy_config))
        separate = build_network(apply_preset("F", toy_config))
        assert separate.config.sharing == BackboneSharing.SEPARATE
        assert separate.count_parameters("backbone") == 2 * full.count_parameters("backbone")
        assert separate.count_parameters("dcf") == full.count_parameters("dcf")

    def test_config_deltas(self, toy_config):
        assert apply_preset("B", toy_config).backbone.width == toy_config.backbone.width // 2
        assert apply_preset("C", toy_config).fusion == FusionVariant.CONCAT
        assert apply_preset("D", toy_config).modality == ModalityVariant.RGB
        assert apply_preset("E", toy_config).modality == ModalityVariant.DEPTH
        assert apply_preset("G", toy_config).use_fa is False
        assert apply_preset("H", toy_config).wiring == DecoderWiring.CHAIN
        assert apply_preset("I", toy_config).wiring == DecoderWiring.RESIDUAL
        assert apply_preset("A", toy_config).model_dump() == toy_config.model_dump()

    def test_presets_leave_the_base_config_alone(self, toy_config):
        before = toy_config.model_dump()
        for key in "ABCDEFGHI":
            apply_preset(key, toy_config)
        assert toy_config.model_dump() == before

    def test_rgb_only_preset_ignores_depth(self, toy_config, rng):
        net = build_network(apply_preset("D", toy_config))
        rgb = Tensor(rng.uniform(-1, 1, size=(1, 3, 16, 16)))
        first = net(rgb, Tensor(rng.uniform(-1, 1, size=(1, 3, 16, 16)))).final.data
        second = net(rgb, Tensor(rng.uniform(-1, 1, size=(1, 3, 16, 16)))).final.data
        np.testing.assert_array_equal(first, second)

    def test_half_width_backbone_is_smaller(self, toy_config):
        full = build_network(apply_preset("A", toy_config)).count_parameters("backbone")
        half = build_network(apply_preset("B", toy_config)).count_parameters("backbone")
        assert half < full

    def test_run_ablation_and_compare(self, toy_config, synthetic_samples, tmp_path):
        cfg = RunConfig(network=toy_config, training=TrainConfig(max_iterations=2))
        train, test = split_holdout(synthetic_samples, 0.25, seed=0)
        reports = {
            key: run_ablation(key, train, test, cfg, output_dir=tmp_path) for key in ("A", "D")
        }
        assert (tmp_path / "A" / "report.json").exists()
        table = compare_presets(reports)
        assert list(table["metric"]) == ["S_alpha", "F_max", "E_max", "MAE"]
        assert list(table.columns) == ["metric", "A", "D"]
        assert ((table[["A", "D"]] >= 0) & (table[["A", "D"]] <= 1)).all().all()


class TestInference:
    def test_native_resolution(self, toy_network, synthetic_samples):
        saliency = predict_saliency(toy_network, synthetic_samples[0])
        assert saliency.shape == (24, 24)
        assert 0.0 <= saliency.min() and saliency.max() <= 1.0

    def test_rgb_only_network_needs_no_depth(self, toy_config):
        net = build_network(apply_preset("D", toy_config))
        sample = synthesize_corpus(1, size=20, rgb_only=True)[0]
        assert predict_saliency(net, sample).shape == (20, 20)

    def test_depth_is_required_otherwise(self, toy_network):
        sample = synthesize_corpus(1, size=20, rgb_only=True)[0]
        with pytest.raises(DatasetError):
            predict_saliency(toy_network, sample)

    def test_to_uint8(self):
        np.testing.assert_array_equal(to_uint8(np.array([0.0, 0.5, 1.0])), [0, 128, 255])


class TestCommandLine:
    def test_synth(self, tmp_path, quiet):
        assert main(["synth", "--out", str(tmp_path / "d"), "--count", "3", "--size", "16"]) == 0
        for directory in ("RGB", "depth", "GT"):
            assert len(list((tmp_path / "d" / directory).glob("*.png"))) == 3
        summary = json.loads((tmp_path / "d" / "run.json").read_text())
        assert summary["status"] == "succeeded"

    def test_invalid_arguments(self, tmp_path, quiet, capsys):
        assert main(["synth", "--out", str(tmp_path / "d"), "--count", "0"]) == 2
        record = failure_record(capsys.readouterr().err)
        assert record["status"] == "failed"
        assert record["command"] == "synth"
        assert record["error"] == "configuration_error"
        assert [e["field"] for e in record["details"]["errors"]] == ["count"]
        assert not (tmp_path / "d").exists()

    def test_os_error_becomes_a_failure_line(self, tmp_path, quiet, capsys):
        taken = tmp_path / "taken"
        taken.write_text("not a directory")
        assert main(["synth", "--out", str(taken), "--count", "2", "--size", "16"]) == 1
        record = failure_record(capsys.readouterr().err)
        assert record["error"] == "unexpected_error"
        assert issubclass(getattr(builtins, record["details"]["type"]), OSError)

    def test_unexpected_exception_is_reported(self, tmp_path, quiet, capsys):
        def broken(context, inputs, settings):
            raise RuntimeError("boom")

        assert execute_command("synth", broken, SynthInputs(out=tmp_path / "x")) == 1
        record = failure_record(capsys.readouterr().err)
        assert record["error"] == "unexpected_error"
        assert record["message"] == "RuntimeError: boom"
        assert record["details"] == {"type": "RuntimeError"}
        assert json.loads((tmp_path / "x" / "run.json").read_text())["status"] == "failed"

    def test_train_infer_eval(self, tmp_path, toy_run_config, synthetic_dataset, quiet):
        run_dir = tmp_path / "run"
        args = ["train", "--config", str(toy_run_config), "--data", str(synthetic_dataset.root)]
        assert main(args + ["--out", str(run_dir)]) == 0
        summary = json.loads((run_dir / "run.json").read_text())
        assert summary["results"]["iterations"] == 2
        assert list(read_table(run_dir / "loss_trace.csv")["iteration"]) == [0, 1]
        assert RunConfig.load(run_dir / "run_config.json").training.max_iterations == 2

        infer_dir = tmp_path / "infer"
        assert (
            main(
                [
                    "infer",
                    "--checkpoint",
                    str(run_dir / "checkpoint.bin"),
                    "--data",
                    str(synthetic_dataset.root),
                    "--out",
                    str(infer_dir),
                ]
            )
            == 0
        )
        maps = sorted((infer_dir / "maps").glob("*.png"))
        assert len(maps) == 6
        assert cv2.imread(str(maps[0]), cv2.IMREAD_GRAYSCALE).shape == (24, 24)

        eval_dir = tmp_path / "eval"
        gt_dir = synthetic_dataset.root / "GT"
        assert main(["eval", "--predictions", str(infer_dir / "maps"), "--gt", str(gt_dir), "--out", str(eval_dir)]) == 0
        assert (eval_dir / "report.json").exists()

    def test_eval_of_perfect_predictions(self, tmp_path, synthetic_dataset, quiet):
        gt_dir = synthetic_dataset.root / "GT"
        args = ["eval", "--predictions", str(gt_dir), "--gt", str(gt_dir), "--out", str(tmp_path / "e")]
        assert main(args + ["--workers", "2"]) == 0
        summary = read_table(tmp_path / "e" / "report.csv").iloc[0]
        assert summary["S_alpha"] == pytest.approx(1.0, abs=1e-9)
        assert summary["F_max"] == pytest.approx(1.0)
        assert summary["E_max"] == pytest.approx(1.0)
        assert summary["MAE"] == 0.0

    def test_training_is_reproducible(self, tmp_path, toy_run_config, synthetic_dataset, quiet):
        outputs = []
        for run in ("first", "second"):
            out = tmp_path / run
            args = ["train", "--config", str(toy_run_config), "--seed", "4"]
            assert main(args + ["--data", str(synthetic_dataset.root), "--out", str(out)]) == 0
            infer = ["infer", "--checkpoint", str(out / "checkpoint.bin")]
            infer += ["--data", str(synthetic_dataset.root), "--out", str(out / "infer")]
            assert main(infer) == 0
            maps = sorted((out / "infer" / "maps").glob("*.png"))
            outputs.append(
                [(out / name).read_bytes() for name in ("checkpoint.bin", "loss_trace.csv")]
                + [path.read_bytes() for path in maps]
            )
        assert outputs[0] == outputs[1]

    def test_failure_is_one_json_line(self, tmp_path, synthetic_dataset, quiet, capsys):
        bogus = tmp_path / "bogus.bin"
        bogus.write_bytes(b"garbage")
        out = tmp_path / "failed"
        code = main(
            ["infer", "--checkpoint", str(bogus), "--data", str(synthetic_dataset.root), "--out", str(out)]
        )
        assert code == 1
        record = failure_record(capsys.readouterr().err)
        assert record["status"] == "failed"
        assert record["command"] == "infer"
        assert record["error"] == "checkpoint_error"
        assert json.loads((out / "run.json").read_text())["status"] == "failed"

    def test_unknown_variant(self, tmp_path, toy_run_config, synthetic_dataset, quiet, capsys):
        args = ["train", "--config", str(toy_run_config), "--variant", "b-vgg"]
        code = main(args + ["--data", str(synthetic_dataset.root), "--out", str(tmp_path / "r")])
        assert code == 1
        record = failure_record(capsys.readouterr().err)
        assert record["error"] == "unknown_preset"
        assert record["details"] == {"preset": "b-vgg", "suggestion": "B-vgg-width"}

    def test_gradcheck(self, tmp_path, quiet):
        assert main(["gradcheck", "--out", str(tmp_path)]) == 0
        table = read_table(tmp_path / "gradcheck.csv")
        assert table["passed"].all()
        composite = {"fa_block", "backbone", "network"}
        assert composite <= set(table["case"])
        per_op = table[~table["case"].isin(composite)]
        assert (per_op["max_relative_error"] <= 1e-4).all()
        assert (table["max_relative_error"] <= 1e-3).all()
        assert (table["checked"] <= table["entries"]).all()
        network = table[table["case"] == "network"]
        assert (network["checked"] == network["entries"].clip(upper=8)).all()

    def test_gradcheck_failure_exits_nonzero(self, tmp_path, quiet, capsys):
        args = ["gradcheck", "--out", str(tmp_path), "--tolerance", "1e-300"]
        assert main(args + ["--network-tolerance", "1e-300"]) == 1
        record = failure_record(capsys.readouterr().err)
        assert record["error"] == "gradcheck_failed"
        assert record["details"]["failures"]

    def test_ablate(self, tmp_path, toy_run_config, synthetic_dataset, quiet):
        out = tmp_path / "ablate"
        args = ["ablate", "--config", str(toy_run_config), "--data", str(synthetic_dataset.root)]
        assert main(args + ["--presets", "A", "h", "--out", str(out)]) == 0
        table = read_table(out / "ablation.csv")
        assert list(table.columns) == ["metric", "A", "H"]
        assert (out / "H" / "checkpoint.bin").exists()


def test_prediction_is_a_probability(toy_network, rng):
    rgb = Tensor(rng.uniform(-1, 1, size=(1, 3, 16, 16)))
    final = toy_network(rgb, rgb).final.data
    assert final.shape == (1, 1, 16, 16)
    assert np.all((final > 0) & (final < 1))

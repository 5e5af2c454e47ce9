import numpy as np
import pytest

from Autodiff import ops
from Autodiff.tensor import Tensor
from Network.backbone import build_backbone, forward_hierarchies, receptive_fields, stage_sizes
from Network.fusion import (
    FaModule,
    FinalHead,
    cm_fuse,
    fuse,
    incoming_edges,
)
from Network.inputs import (
    BackboneConfig,
    BackboneSharing,
    ConvSpec,
    CpConfig,
    DecoderWiring,
    FaConfig,
    FusionVariant,
    ModalityVariant,
    NetworkConfig,
    SidePathConfig,
)
from Network.joint_learning import (
    CoarseHead,
    CpModules,
    coarse_predict,
    depth_to_3ch,
    form_batch,
    normalize_depth,
    prepare_inputs,
)
from Network.model import build_network
from Utilities.errors import CheckpointError, ConfigurationError, ShapeError
from Utilities.helpers import make_rng


def random_input(rng, size: int) -> Tensor:
    return Tensor(rng.uniform(-1, 1, size=(1, 3, size, size)))


class TestBackboneConfig:
    @pytest.mark.parametrize(
        "size,expected",
        [
            (320, [320, 160, 80, 40, 20, 20]),
            (64, [64, 32, 16, 8, 4, 4]),
            (32, [32, 16, 8, 4, 2, 2]),
        ],
    )
    def test_stage_schedule(self, size, expected):
        assert stage_sizes(size) == expected
        assert BackboneConfig(input_size=size).stage_sizes() == expected

    @pytest.mark.parametrize("size", [0, 8, 24, 100])
    def test_input_size_must_be_multiple_of_stride(self, size):
        with pytest.raises(ConfigurationError):
            BackboneConfig(input_size=size) if size else stage_sizes(size)

    def test_desk_width_divides_side_paths_by_eight(self):
        full = SidePathConfig.scaled(64)
        desk = SidePathConfig.scaled(8)
        assert full.out_channels == [128, 128, 256, 256, 512, 512]
        assert desk.out_channels == [c // 8 for c in full.out_channels]
        assert full.rows[5][0].as_row() == (7, 512, 1, 2, 6)
        assert full.rows[2][1].as_row() == (5, 256, 1, 1, 2)

    def test_side_path_must_preserve_size(self):
        with pytest.raises(ConfigurationError):
            ConvSpec(kernel=3, channels=4, padding=0)
        with pytest.raises(ConfigurationError):
            ConvSpec(kernel=3, channels=4, stride=2, padding=1)

    def test_stage6_sees_more_than_stage5(self):
        fields = receptive_fields(BackboneConfig())
        assert len(fields) == 6
        assert fields == sorted(fields)
        assert fields[5] > fields[4]

    def test_round_trip(self):
        cfg = BackboneConfig(input_size=32, width=2)
        assert BackboneConfig.model_validate_json(cfg.model_dump_json()) == cfg


class TestForwardHierarchies:
    @pytest.mark.parametrize("size", [16, 32])
    def test_sizes_and_channels(self, rng, size):
        cfg = BackboneConfig(input_size=size, width=2)
        encoder = build_backbone(cfg, rng)
        batch = Tensor(rng.uniform(-1, 1, size=(2, 3, size, size)))
        outputs = forward_hierarchies(encoder, batch)
        assert [o.shape[2] for o in outputs] == cfg.stage_sizes()
        assert [o.shape[1] for o in outputs] == cfg.hierarchy_channels
        assert all(o.shape[0] == 2 for o in outputs)

    def test_duplicated_rows_stay_identical(self, rng):
        encoder = build_backbone(BackboneConfig(input_size=16, width=4), rng)
        image = random_input(rng, 16)
        for out in encoder(ops.concat_batch(image, image)):
            np.testing.assert_array_equal(out.data[0], out.data[1])

    def test_row_swap_permutes_outputs(self, rng):
        encoder = build_backbone(BackboneConfig(input_size=16, width=4), rng)
        a, b = random_input(rng, 16), random_input(rng, 16)
        straight = encoder(ops.concat_batch(a, b))
        swapped = encoder(ops.concat_batch(b, a))
        for x, y in zip(straight, swapped):
            np.testing.assert_array_equal(x.data[::-1], y.data)

    def test_wrong_channel_count(self, rng):
        encoder = build_backbone(BackboneConfig(input_size=16, width=2), rng)
        with pytest.raises(ShapeError) as info:
            encoder(Tensor(np.zeros((2, 6, 16, 16))))
        assert info.value.axis == 1

    def test_glorot_bounds(self, rng):
        encoder = build_backbone(BackboneConfig(input_size=16, width=4), rng)
        weight = encoder.stages[0].convs[0].conv.weight.data
        bound = np.sqrt(6.0 / (3 * 9 + 4 * 9))
        assert np.abs(weight).max() <= bound
        np.testing.assert_array_equal(encoder.stages[0].convs[0].conv.bias.data, 0.0)


class TestDepthPreprocessing:
    def test_range_is_stretched_to_full_scale(self, rng):
        depth = rng.uniform(0.4, 2.4, size=(10, 12))
        depth[0, 0], depth[-1, -1] = 0.4, 2.4
        out = depth_to_3ch(depth).data
        assert out.shape == (1, 3, 10, 12)
        assert out.min() == 0.0
        assert out.max() == pytest.approx(255.0, abs=1e-9)
        np.testing.assert_array_equal(out[0, 0], out[0, 1])
        np.testing.assert_array_equal(out[0, 0], out[0, 2])
        assert np.corrcoef(depth.ravel(), out[0, 1].ravel())[0, 1] == pytest.approx(1.0)

    def test_constant_depth_becomes_zeros(self, caplog):
        out = normalize_depth(np.full((4, 4), 1500.0))
        np.testing.assert_array_equal(out, 0.0)
        assert "Constant depth" in caplog.text

    def test_sixteen_bit_depth(self):
        depth = np.array([[0, 65535], [32768, 1000]], dtype=np.uint16)
        out = normalize_depth(depth)
        assert out.min() == 0.0 and out.max() == pytest.approx(255.0)

    def test_empty_depth(self):
        with pytest.raises(ShapeError):
            normalize_depth(np.zeros((0, 3)))

    def test_inputs_are_standardized(self, rng):
        rgb = rng.integers(0, 256, size=(8, 8, 3)).astype(np.uint8)
        rgb_t, depth_t = prepare_inputs(rgb, rng.uniform(size=(8, 8)))
        assert rgb_t.shape == depth_t.shape == (1, 3, 8, 8)
        assert rgb_t.data.min() >= -1.0 and rgb_t.data.max() <= 1.0
        assert depth_t.data.min() == -1.0


class TestJointLearning:
    def test_batch_dimension_concatenation(self, rng):
        rgb, depth = random_input(rng, 8), random_input(rng, 8)
        batch = form_batch(rgb, depth)
        assert batch.shape == (2, 3, 8, 8)
        assert batch.shape != (1, 6, 8, 8)
        first, second = ops.split_batch(batch)
        np.testing.assert_array_equal(first.data, rgb.data)
        np.testing.assert_array_equal(second.data, depth.data)

    def test_form_batch_rejects_channel_stacks(self):
        with pytest.raises(ShapeError):
            form_batch(Tensor(np.zeros((1, 6, 8, 8))), Tensor(np.zeros((1, 3, 8, 8))))

    def test_cp_compresses_to_k(self, rng):
        cfg = BackboneConfig(input_size=64, width=2)
        features = [
            Tensor(rng.uniform(size=(2, c, s, s)))
            for c, s in zip(cfg.hierarchy_channels, cfg.stage_sizes())
        ]
        outputs = CpModules(cfg.hierarchy_channels, CpConfig(k=8), rng)(features)
        assert [o.shape for o in outputs] == [(2, 8, s, s) for s in [64, 32, 16, 8, 4, 4]]

    def test_cp_default_width(self):
        assert CpConfig().k == 64

    def test_cp_channel_mismatch(self, rng):
        modules = CpModules([4] * 6, CpConfig(k=8), rng)
        features = [Tensor(np.zeros((2, 5, 4, 4)))] * 6
        with pytest.raises(ShapeError):
            modules(features)

    def test_zero_coarse_head_gives_half(self, rng):
        head = CoarseHead(8, rng)
        head.conv.weight.data[:] = 0.0
        s_rgb, s_d = coarse_predict(Tensor(rng.normal(size=(2, 8, 4, 4))), head)
        np.testing.assert_array_equal(s_rgb.data, 0.5)
        np.testing.assert_array_equal(s_d.data, 0.5)

    def test_coarse_maps_follow_row_swap(self, rng):
        head = CoarseHead(8, rng)
        cp6 = rng.normal(size=(2, 8, 4, 4))
        s_rgb, s_d = coarse_predict(Tensor(cp6), head)
        t_rgb, t_d = coarse_predict(Tensor(cp6[::-1].copy()), head)
        np.testing.assert_array_equal(s_rgb.data, t_d.data)
        np.testing.assert_array_equal(s_d.data, t_rgb.data)
        assert ((s_rgb.data > 0) & (s_rgb.data < 1)).all()

    def test_coarse_head_needs_a_pair(self, rng):
        with pytest.raises(ShapeError) as info:
            coarse_predict(Tensor(np.zeros((3, 8, 4, 4))), CoarseHead(8, rng))
        assert info.value.axis == 0


class TestFusion:
    def test_cm_fuse_example(self):
        batch = Tensor(np.array([1.0, 2.0, 3.0, 0.0]).reshape(2, 1, 1, 2))
        np.testing.assert_array_equal(cm_fuse(batch).data.ravel(), [7.0, 2.0])

    def test_zero_depth_passes_rgb(self, rng):
        x_rgb = rng.normal(size=(1, 4, 3, 3))
        batch = Tensor(np.concatenate([x_rgb, np.zeros_like(x_rgb)]))
        np.testing.assert_array_equal(cm_fuse(batch).data, x_rgb)

    def test_cm_fuse_is_symmetric(self, rng):
        for _ in range(100):
            a, b = rng.normal(size=(1, 3, 2, 2)), rng.normal(size=(1, 3, 2, 2))
            np.testing.assert_array_equal(
                cm_fuse(Tensor(np.concatenate([a, b]))).data,
                cm_fuse(Tensor(np.concatenate([b, a]))).data,
            )

    def test_cm_fuse_needs_a_pair(self):
        with pytest.raises(ShapeError):
            cm_fuse(Tensor(np.zeros((1, 2, 2, 2))))

    def test_fusion_variants(self, rng):
        batch = Tensor(rng.normal(size=(2, 4, 3, 3)))
        assert fuse(batch, FusionVariant.CONCAT).shape == (1, 8, 3, 3)
        np.testing.assert_array_equal(fuse(batch, FusionVariant.IDENTITY_RGB).data, batch.data[:1])
        np.testing.assert_array_equal(
            fuse(batch, FusionVariant.IDENTITY_DEPTH).data, batch.data[1:]
        )

    def test_fa_keeps_width_and_size(self, rng):
        module = FaModule(64, FaConfig().resolved(64), rng)
        assert FaConfig().resolved(64) == [16, 16, 16, 16]
        assert module(Tensor(rng.normal(size=(1, 64, 5, 5)))).shape == (1, 64, 5, 5)

    def test_fa_branch_widths_must_sum_to_k(self):
        with pytest.raises(ConfigurationError):
            FaConfig(branch_channels=[4, 4, 4, 5]).resolved(16)
        with pytest.raises(ConfigurationError):
            NetworkConfig(cp=CpConfig(k=16), fa=FaConfig(branch_channels=[8, 8, 8, 8]))

    def test_fa_channel_mismatch(self, rng):
        with pytest.raises(ShapeError):
            FaModule(8, [2, 2, 2, 2], rng)(Tensor(np.zeros((1, 4, 3, 3))))

    def test_dense_edge_counts(self):
        edges = incoming_edges(DecoderWiring.DENSE)
        assert [len(edges[f"FA{i}"]) for i in range(1, 7)] == [6, 5, 4, 3, 2, 1]
        assert edges["FA1"] == ["CM1", "FA2", "FA3", "FA4", "FA5", "FA6"]

    def test_chain_edge_counts(self):
        edges = incoming_edges(DecoderWiring.CHAIN)
        assert [len(edges[f"FA{i}"]) for i in range(1, 6)] == [2] * 5
        assert edges["FA6"] == ["CM6"]

    def test_residual_adds_one_edge(self):
        chain = incoming_edges(DecoderWiring.CHAIN)
        residual = incoming_edges(DecoderWiring.RESIDUAL)
        assert residual["FA1"] == chain["FA1"] + ["FA5"]
        assert {k: v for k, v in residual.items() if k != "FA1"} == {
            k: v for k, v in chain.items() if k != "FA1"
        }

    def test_zero_final_head_gives_half(self, rng):
        head = FinalHead(8, rng)
        head.conv.weight.data[:] = 0.0
        np.testing.assert_array_equal(head(Tensor(rng.normal(size=(1, 8, 6, 6)))).data, 0.5)

    def test_forty_class_head(self, rng):
        out = FinalHead(8, rng, classes=40)(Tensor(rng.normal(size=(1, 8, 4, 4))))
        assert out.shape == (1, 40, 4, 4)
        np.testing.assert_allclose(out.data.sum(axis=1), 1.0, atol=1e-6)

    def test_invalid_class_count(self, rng):
        with pytest.raises(ConfigurationError):
            FinalHead(8, rng, classes=0)


class TestNetwork:
    def test_output_sizes(self, toy_network, rng):
        prediction = toy_network(random_input(rng, 16), random_input(rng, 16))
        assert prediction.final.shape == (1, 1, 16, 16)
        assert set(prediction.coarse) == {"rgb", "depth"}
        assert prediction.coarse["rgb"].shape == (1, 1, 1, 1)
        assert ((prediction.final.data > 0) & (prediction.final.data < 1)).all()

    def test_full_size_coarse_map(self):
        cfg = NetworkConfig(backbone=BackboneConfig(input_size=320))
        assert cfg.coarse_size == 20
        assert cfg.input_size // cfg.coarse_size == 16

    def test_decoder_output_at_input_size(self, rng):
        cfg = NetworkConfig(backbone=BackboneConfig(input_size=32, width=2), cp=CpConfig(k=4))
        net = build_network(cfg, seed=1)
        prediction = net(random_input(rng, 32), random_input(rng, 32))
        assert prediction.final.shape == (1, 1, 32, 32)
        assert prediction.coarse["depth"].shape == (1, 1, 2, 2)

    def test_modality_swap_symmetry(self, toy_network, rng):
        for _ in range(5):
            a, b = random_input(rng, 16), random_input(rng, 16)
            straight, swapped = toy_network(a, b), toy_network(b, a)
            np.testing.assert_array_equal(straight.coarse["rgb"].data, swapped.coarse["depth"].data)
            np.testing.assert_array_equal(straight.coarse["depth"].data, swapped.coarse["rgb"].data)
            np.testing.assert_array_equal(straight.final.data, swapped.final.data)

    def test_rgb_only_ignores_depth(self, toy_config, rng):
        cfg = toy_config.model_copy(
            update={"fusion": FusionVariant.IDENTITY_RGB, "modality": ModalityVariant.RGB}
        )
        net = build_network(cfg)
        rgb = random_input(rng, 16)
        first = net(rgb, random_input(rng, 16))
        second = net(rgb, random_input(rng, 16))
        np.testing.assert_array_equal(first.final.data, second.final.data)
        assert set(first.coarse) == {"rgb"}

    def test_concat_variant_doubles_fa_inputs(self, toy_config, rng):
        cfg = toy_config.model_copy(update={"fusion": FusionVariant.CONCAT})
        net = build_network(cfg)
        assert all(fa.in_channels == 2 * cfg.cp.k for fa in net.decoder.fa_modules)
        assert net(random_input(rng, 16), random_input(rng, 16)).final.shape == (1, 1, 16, 16)
        plain = build_network(toy_config)
        assert all(fa.in_channels == toy_config.cp.k for fa in plain.decoder.fa_modules)

    def test_invalid_variant_combinations(self, toy_config):
        data = toy_config.model_dump()
        with pytest.raises(ConfigurationError):
            NetworkConfig.model_validate({**data, "fusion": "identity_rgb"})
        with pytest.raises(ConfigurationError):
            NetworkConfig.model_validate({**data, "fusion": "concat", "use_fa": False})
        with pytest.raises(ConfigurationError):
            NetworkConfig.model_validate(
                {**data, "fusion": "identity_depth", "modality": "depth", "sharing": "separate"}
            )

    def test_separate_backbones_double_encoder_parameters(self, toy_config, rng):
        joint = build_network(toy_config)
        separate_cfg = toy_config.model_copy(update={"sharing": BackboneSharing.SEPARATE})
        separate = build_network(separate_cfg)
        assert separate.count_parameters("backbone") == 2 * joint.count_parameters("backbone")
        assert separate.count_parameters("dcf") == joint.count_parameters("dcf")
        assert separate(random_input(rng, 16), random_input(rng, 16)).final.shape == (1, 1, 16, 16)

    def test_scopes_partition_parameters(self, toy_network):
        total = toy_network.count_parameters("all")
        assert total == toy_network.parameter_count()
        assert total == toy_network.count_parameters("jl") + toy_network.count_parameters("dcf")
        with pytest.raises(ConfigurationError):
            toy_network.count_parameters("head")

    def test_third_row_reaches_the_coarse_head_only(self, toy_network, rng):
        a, b, task = (random_input(rng, 16) for _ in range(3))
        plain = toy_network(a, b)
        bridged = toy_network(a, b, rgb_task=task)
        assert set(bridged.coarse) == {"rgb", "depth", "rgb_task"}
        np.testing.assert_allclose(bridged.final.data, plain.final.data, rtol=1e-12)

    def test_wrong_input_size(self, toy_network, rng):
        with pytest.raises(ShapeError):
            toy_network(random_input(rng, 32), random_input(rng, 32))

    def test_same_seed_same_weights(self, toy_config):
        first = build_network(toy_config, seed=3).state_dict()
        second = build_network(toy_config, seed=3).state_dict()
        assert first.keys() == second.keys()
        for name in first:
            np.testing.assert_array_equal(first[name], second[name])

    def test_state_dict_round_trip(self, toy_config):
        source, target = build_network(toy_config, seed=1), build_network(toy_config, seed=2)
        target.load_state_dict(source.state_dict())
        for (name, p), (_, q) in zip(source.named_parameters(), target.named_parameters()):
            np.testing.assert_array_equal(p.data, q.data, err_msg=name)

    def test_state_dict_mismatch(self, toy_network):
        state = toy_network.state_dict()
        state.pop(next(iter(state)))
        with pytest.raises(CheckpointError):
            toy_network.load_state_dict(state)

    def test_parameter_names(self, toy_network):
        names = [name for name, _ in toy_network.named_parameters()]
        assert names[0] == "backbone.stages.0.convs.0.conv.weight"
        assert "decoder.fa_modules.5.branch5.1.conv.weight" in names
        assert len(names) == len(set(names))

    def test_float32_network(self, toy_config, rng):
        net = build_network(toy_config, dtype=np.float32)
        assert all(p.dtype == np.float32 for _, p in net.named_parameters())
        out = net(
            Tensor(rng.uniform(-1, 1, size=(1, 3, 16, 16)), dtype=np.float32),
            Tensor(rng.uniform(-1, 1, size=(1, 3, 16, 16)), dtype=np.float32),
        )
        assert np.isfinite(out.final.data).all()

    def test_head_swap_network(self, toy_config, rng):
        net = build_network(toy_config.model_copy(update={"classes": 5}))
        prediction = net(random_input(rng, 16), random_input(rng, 16))
        assert prediction.final.shape == (1, 5, 16, 16)
        np.testing.assert_allclose(prediction.final.data.sum(axis=1), 1.0, atol=1e-12)
        assert prediction.coarse["rgb"].shape == (1, 5, 1, 1)


def test_make_rng_is_deterministic():
    assert make_rng(5).integers(1 << 30) == make_rng(5).integers(1 << 30)

"""Finite-difference checks for every differentiable op and the toy network."""

from collections.abc import Callable

import numpy as np
import pandas as pd

from Autodiff import ops
from Autodiff.gradcheck import GradcheckResult, check_gradients
from Autodiff.tensor import Tensor
from Network.backbone import build_backbone, forward_hierarchies
from Network.fusion import FaModule, cm_fuse
from Network.inputs import BackboneConfig, CpConfig, NetworkConfig
from Network.layers import Module
from Network.model import build_network
from Training.inputs import LossConfig
from Training.losses import cross_entropy, total_loss
from Utilities.helpers import get_logger, make_rng

logger = get_logger("gradient_suite")

GradientCase = Callable[[np.random.Generator], tuple[Callable[[], Tensor], dict[str, Tensor]]]


def _away_from_zero(
    rng: np.random.Generator, shape: tuple[int, ...], limit: float = 1.0
) -> np.ndarray:
    values = rng.uniform(-1.0, 1.0, size=shape)
    # keep kinks of relu and ties of max farther than the step away
    return limit * np.sign(values) * (0.1 + 0.9 * np.abs(values))


def _param(rng: np.random.Generator, *shape: int, away_from_zero: bool = False) -> Tensor:
    if away_from_zero:
        return Tensor(_away_from_zero(rng, shape), requires_grad=True)
    return Tensor(rng.uniform(-1.0, 1.0, size=shape), requires_grad=True)


def redraw_parameters(module: Module, rng: np.random.Generator) -> None:
    """Overwrite every parameter of ``module`` in place with values bounded away
    from zero: weights within their Glorot limit, biases within 0.5.

    Freshly built layers have zero biases, so units fed only by dead channels sit
    exactly on a relu kink where central differences read half the slope.
    """
    for _, param in module.named_parameters():
        if param.ndim == 4:
            fan_out, fan_in, kh, kw = param.shape
            limit = float(np.sqrt(6.0 / ((fan_in + fan_out) * kh * kw)))
        else:
            limit = 0.5
        param.data[...] = _away_from_zero(rng, param.shape, limit)


def _weighted_sum(t: Tensor, rng: np.random.Generator) -> Tensor:
    return ops.sum_all(ops.mul(t, Tensor(rng.uniform(-1.0, 1.0, size=t.shape))))


def conv2d_case(rng):
    x, w, b = _param(rng, 2, 3, 8, 8), _param(rng, 4, 3, 3, 3), _param(rng, 4)
    mix = rng.uniform(-1.0, 1.0, size=(2, 4, 8, 8))
    return (
        lambda: ops.sum_all(ops.mul(ops.conv2d(x, w, b, 1, 1, 1), Tensor(mix))),
        {"input": x, "weight": w, "bias": b},
    )


def conv2d_strided_dilated_case(rng):
    x, w, b = _param(rng, 1, 2, 9, 9), _param(rng, 3, 2, 3, 3), _param(rng, 3)
    mix = rng.uniform(-1.0, 1.0, size=(1, 3, 4, 4))
    return (
        lambda: ops.sum_all(ops.mul(ops.conv2d(x, w, b, 2, 2, 1), Tensor(mix))),
        {"input": x, "weight": w, "bias": b},
    )


def relu_case(rng):
    x = _param(rng, 2, 3, 4, 4, away_from_zero=True)
    mix = rng.uniform(-1.0, 1.0, size=x.shape)
    return lambda: ops.sum_all(ops.mul(ops.relu(x), Tensor(mix))), {"input": x}


def sigmoid_case(rng):
    x = _param(rng, 2, 3, 4, 4)
    mix = rng.uniform(-1.0, 1.0, size=x.shape)
    return lambda: ops.sum_all(ops.mul(ops.sigmoid(x), Tensor(mix))), {"input": x}


def add_mul_case(rng):
    a, b = _param(rng, 2, 3, 4, 4), _param(rng, 2, 3, 4, 4)
    mix = rng.uniform(-1.0, 1.0, size=a.shape)
    return (
        lambda: ops.sum_all(ops.mul(ops.add(ops.mul(a, b), a), Tensor(mix))),
        {"a": a, "b": b},
    )


def maxpool_case(rng):
    x = Tensor(rng.permutation(36).reshape(1, 1, 6, 6) / 36.0, requires_grad=True)
    mix = rng.uniform(-1.0, 1.0, size=(1, 1, 6, 6))
    return lambda: ops.sum_all(ops.mul(ops.maxpool2d(x, 3, 1, 1), Tensor(mix))), {"input": x}


def upsample_case(rng):
    x = _param(rng, 1, 2, 3, 3)
    mix = rng.uniform(-1.0, 1.0, size=(1, 2, 12, 12))
    return (
        lambda: ops.sum_all(ops.mul(ops.bilinear_upsample(x, 4), Tensor(mix))),
        {"input": x},
    )


def batch_layout_case(rng):
    a, b = _param(rng, 1, 3, 4, 4), _param(rng, 1, 3, 4, 4)
    mix = rng.uniform(-1.0, 1.0, size=(1, 3, 4, 4))

    def fn():
        first, second = ops.split_batch(ops.concat_batch(a, b))
        return ops.sum_all(ops.mul(ops.mul(first, second), Tensor(mix)))

    return fn, {"a": a, "b": b}


def softmax_log_case(rng):
    x = _param(rng, 1, 4, 3, 3)
    mix = rng.uniform(-1.0, 1.0, size=x.shape)
    return (
        lambda: ops.sum_all(ops.mul(ops.log(ops.softmax(x, axis=1)), Tensor(mix))),
        {"input": x},
    )


def cross_entropy_case(rng):
    s = Tensor(rng.uniform(0.05, 0.95, size=(1, 1, 5, 5)), requires_grad=True)
    g = rng.uniform(0.0, 1.0, size=(5, 5))
    return lambda: cross_entropy(s, g), {"prediction": s}


def cm_fuse_case(rng):
    x = _param(rng, 2, 4, 4, 4)
    mix = rng.uniform(-1.0, 1.0, size=(1, 4, 4, 4))
    return lambda: ops.sum_all(ops.mul(cm_fuse(x), Tensor(mix))), {"input": x}


def fa_case(rng):
    module = FaModule(8, [2, 2, 2, 2], rng)
    redraw_parameters(module, rng)
    x = _param(rng, 1, 8, 6, 6)
    inputs = {"input": x, **dict(module.named_parameters())}
    return lambda: _weighted_sum_fixed(module(x), 11), inputs


def _weighted_sum_fixed(t: Tensor, seed: int) -> Tensor:
    return _weighted_sum(t, make_rng(seed))


OP_CASES: dict[str, GradientCase] = {
    "conv2d": conv2d_case,
    "conv2d_strided_dilated": conv2d_strided_dilated_case,
    "relu": relu_case,
    "sigmoid": sigmoid_case,
    "add_mul": add_mul_case,
    "maxpool2d": maxpool_case,
    "bilinear_upsample": upsample_case,
    "concat_split_batch": batch_layout_case,
    "softmax_log": softmax_log_case,
    "cross_entropy": cross_entropy_case,
    "cm_fuse": cm_fuse_case,
}


def backbone_case(rng):
    cfg = BackboneConfig(input_size=16, width=4)
    encoder = build_backbone(cfg, rng)
    redraw_parameters(encoder, rng)
    x = _param(rng, 2, 3, 16, 16)
    inputs = {"input": x, **dict(encoder.named_parameters())}

    def fn():
        outputs = forward_hierarchies(encoder, x)
        return ops.add_n([_weighted_sum_fixed(out, 100 + i) for i, out in enumerate(outputs)])

    return fn, inputs


def network_case(rng):
    cfg = NetworkConfig(backbone=BackboneConfig(input_size=16, width=4), cp=CpConfig(k=8))
    net = build_network(cfg, seed=int(rng.integers(1 << 31)))
    redraw_parameters(net, rng)
    rgb = Tensor(rng.uniform(-1.0, 1.0, size=(1, 3, 16, 16)))
    depth = Tensor(rng.uniform(-1.0, 1.0, size=(1, 3, 16, 16)))
    gt = (rng.uniform(size=(16, 16)) > 0.5).astype(np.float64)
    loss_cfg = LossConfig()

    def fn():
        prediction = net(rgb, depth)
        return total_loss(
            prediction.final, prediction.coarse["rgb"], prediction.coarse["depth"], gt, loss_cfg
        ).total

    return fn, dict(net.named_parameters())


def _rows(case: str, results: list[GradcheckResult]) -> list[dict]:
    return [
        {
            "case": case,
            "tensor": r.name,
            "checked": r.checked,
            "entries": r.entries,
            "max_relative_error": r.max_relative_error,
            "tolerance": r.tolerance,
            "passed": r.passed,
        }
        for r in results
    ]


def run_gradient_suite(
    seed: int = 0,
    tolerance: float = 1e-4,
    network_tolerance: float = 1e-3,
    include_network: bool = True,
) -> pd.DataFrame:
    """Run every op case at ``tolerance`` and the FA, backbone and full-network
    cases at ``network_tolerance``; one row per checked tensor.

    The backbone and network cases compare a seeded subset of each parameter
    tensor: ``checked`` of its ``entries`` values.
    """
    rows = []
    for name, case in OP_CASES.items():
        fn, inputs = case(make_rng(seed))
        rows += _rows(name, check_gradients(fn, inputs, tolerance=tolerance))

    composite = {"fa_block": (fa_case, None), "backbone": (backbone_case, 6)}
    if include_network:
        composite["network"] = (network_case, 8)
    for name, (case, samples) in composite.items():
        fn, inputs = case(make_rng(seed))
        results = check_gradients(
            fn,
            inputs,
            tolerance=network_tolerance,
            max_samples=samples,
            rng=make_rng(seed + 1),
        )
        rows += _rows(name, results)

    table = pd.DataFrame(rows)
    failed = table[~table["passed"]]
    if len(failed):
        logger.warning("%d of %d gradient checks failed", len(failed), len(table))
    else:
        logger.info("All %d gradient checks passed", len(table))
    return table

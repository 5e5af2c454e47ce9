"""The assembled network: shared encoder, CP compression, coarse head, fusion
decoder and final head."""

from collections.abc import Iterator
from dataclasses import dataclass, field

import numpy as np

from Autodiff import ops
from Autodiff.tensor import Tensor
from Network.backbone import Backbone, build_backbone, forward_hierarchies
from Network.fusion import DenseDecoder, FinalHead, fuse
from Network.inputs import BackboneSharing, NetworkConfig
from Network.joint_learning import CoarseHead, CpModules, coarse_predict
from Network.layers import Module
from Utilities.errors import ConfigurationError, ShapeError
from Utilities.helpers import make_rng

SCOPES = ("backbone", "jl", "dcf", "all")


@dataclass
class Prediction:
    """Final map plus one coarse map per batch row, keyed 'rgb', 'depth' and,
    in multitask mode, 'rgb_task'."""

    final: Tensor
    coarse: dict[str, Tensor] = field(default_factory=dict)


class JLDCF(Module):
    def __init__(
        self,
        config: NetworkConfig,
        backbone: Backbone,
        depth_backbone: Backbone | None,
        cp: CpModules,
        coarse_head: CoarseHead,
        decoder: DenseDecoder,
        final_head: FinalHead,
    ) -> None:
        self.config = config
        self.backbone = backbone
        self.depth_backbone = depth_backbone
        self.cp = cp
        self.coarse_head = coarse_head
        self.decoder = decoder
        self.final_head = final_head

    def scope_modules(self, scope: str) -> list[tuple[str, Module]]:
        backbones: list[tuple[str, Module]] = [("backbone", self.backbone)]
        if self.depth_backbone is not None:
            backbones.append(("depth_backbone", self.depth_backbone))
        groups = {
            "backbone": backbones,
            "jl": backbones + [("cp", self.cp), ("coarse_head", self.coarse_head)],
            "dcf": [("decoder", self.decoder), ("final_head", self.final_head)],
        }
        if scope == "all":
            return groups["jl"] + groups["dcf"]
        if scope not in groups:
            raise ConfigurationError(f"Unknown parameter scope '{scope}', expected {SCOPES}")
        return groups[scope]

    def scoped_parameters(self, scope: str = "all") -> Iterator[tuple[str, Tensor]]:
        for name, module in self.scope_modules(scope):
            yield from module.named_parameters(name)

    def count_parameters(self, scope: str = "all") -> int:
        return sum(param.size for _, param in self.scoped_parameters(scope))

    def _encode(self, batch: Tensor, rows: list[str]) -> list[Tensor]:
        if self.depth_backbone is None:
            return forward_hierarchies(self.backbone, batch)

        # depth rows go through their own encoder, then rows are restored in order
        split = ops.batch_rows(batch)
        rgb_rows = [i for i, name in enumerate(rows) if name != "depth"]
        depth_rows = [i for i, name in enumerate(rows) if name == "depth"]
        outputs = {}
        for encoder, indices in ((self.backbone, rgb_rows), (self.depth_backbone, depth_rows)):
            if not indices:
                continue
            part = ops.concat([split[i] for i in indices], axis=0)
            features = forward_hierarchies(encoder, part)
            for position, index in enumerate(indices):
                outputs[index] = [ops.slice_axis(f, position, position + 1) for f in features]

        return [
            ops.concat([outputs[i][level] for i in range(len(rows))], axis=0)
            for level in range(len(outputs[0]))
        ]

    def forward(
        self, rgb: Tensor, depth3: Tensor, rgb_task: Tensor | None = None
    ) -> Prediction:
        """Predict a saliency map for one RGB-D pair.

        Args:
            rgb: Standardized 1 x 3 x H0 x H0 image.
            depth3: Standardized 1 x 3 x H0 x H0 replicated depth.
            rgb_task: Optional image of the RGB-only task; it joins the batch as a
                third row and is only seen by the joint-learning part.

        Returns:
            Prediction: Final map at H0 x H0 and the coarse maps per row.
        """
        size = self.config.input_size
        inputs = {"rgb": rgb, "depth": depth3}
        rows = list(self.config.modality_rows)
        if rgb_task is not None:
            inputs["rgb_task"] = rgb_task
            rows.append("rgb_task")

        for name in rows:
            t = inputs[name]
            if t.ndim != 4 or t.shape[0] != 1 or t.shape[1] != 3 or t.shape[2:] != (size, size):
                raise ShapeError(
                    f"{name} input must be 1 x 3 x {size} x {size}, got {t.shape}",
                    expected=(1, 3, size, size),
                    actual=t.shape,
                )

        batch = ops.concat([inputs[name] for name in rows], axis=0)
        features = self.cp(self._encode(batch, rows))
        coarse = dict(zip(rows, coarse_predict(features[-1], self.coarse_head, len(rows))))

        pair = len(self.config.modality_rows)
        if len(rows) > pair:
            features = [ops.slice_axis(f, 0, pair) for f in features]
        fused = [fuse(f, self.config.fusion) for f in features]
        final = self.final_head(self.decoder(fused))
        return Prediction(final=final, coarse=coarse)

    __call__ = forward


def build_network(
    cfg: NetworkConfig, seed: int = 0, dtype: np.dtype | type = np.float64
) -> JLDCF:
    """Instantiate every component from one seeded generator."""
    rng = make_rng(seed)
    backbone = build_backbone(cfg.backbone, rng, dtype)
    depth_backbone = (
        build_backbone(cfg.backbone, rng, dtype)
        if cfg.sharing == BackboneSharing.SEPARATE
        else None
    )
    k = cfg.cp.k
    cp = CpModules(cfg.backbone.hierarchy_channels, cfg.cp, rng, dtype)
    coarse_head = CoarseHead(k, rng, cfg.classes, dtype)
    decoder = DenseDecoder(k, cfg.fused_channels, cfg.fa, cfg.wiring, cfg.use_fa, rng, dtype)
    final_head = FinalHead(k, rng, cfg.classes, dtype)
    return JLDCF(cfg, backbone, depth_backbone, cp, coarse_head, decoder, final_head)

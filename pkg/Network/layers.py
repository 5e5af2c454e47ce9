"""Parameter containers shared by every network component."""

from collections.abc import Iterable, Iterator

import numpy as np

from Autodiff import ops
from Autodiff.tensor import Tensor
from Utilities.errors import CheckpointError
from Utilities.flatten import flatten_modules


class Module:
    """Base class holding parameters and child modules as attributes.

    Children are discovered from attributes in assignment order; lists of
    modules are exposed as ``name.0``, ``name.1`` and so on.
    """

    def children(self) -> Iterator[tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, list | tuple):
                for index, item in enumerate(value):
                    if isinstance(item, Module):
                        yield f"{name}.{index}", item

    def own_parameters(self) -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for path, module in flatten_modules(self, prefix):
            for name, param in module.own_parameters():  # type: ignore[attr-defined]
                yield (f"{path}.{name}" if path else name), param

    def parameter_count(self) -> int:
        return sum(param.size for _, param in self.named_parameters())

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: param.data.copy() for name, param in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = sorted(set(params) - set(state))
        unexpected = sorted(set(state) - set(params))
        if missing or unexpected:
            raise CheckpointError(
                f"parameter names do not match; missing {missing}, unexpected {unexpected}"
            )
        for name, param in params.items():
            array = np.asarray(state[name])
            if array.shape != param.shape:
                raise CheckpointError(
                    f"'{name}' has shape {array.shape}, the network expects {param.shape}"
                )
            param.data = np.ascontiguousarray(array, dtype=param.dtype)

    def zero_grad(self) -> None:
        for _, param in self.named_parameters():
            param.zero_grad()

    def astype(self, dtype: np.dtype | type) -> "Module":
        for _, param in self.named_parameters():
            param.data = param.data.astype(dtype)
            param.grad = None
        return self


def glorot_uniform(
    shape: tuple[int, ...], rng: np.random.Generator, dtype: np.dtype | type
) -> np.ndarray:
    """Uniform in [-s, s] with s = sqrt(6 / (fan_in + fan_out))."""
    receptive = int(np.prod(shape[2:])) if len(shape) > 2 else 1
    fan_in, fan_out = shape[1] * receptive, shape[0] * receptive
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int,
        rng: np.random.Generator,
        stride: int = 1,
        dilation: int = 1,
        padding: int = 0,
        dtype: np.dtype | type = np.float64,
    ) -> None:
        self.weight = Tensor(
            glorot_uniform((out_channels, in_channels, kernel, kernel), rng, dtype),
            requires_grad=True,
        )
        self.bias = Tensor(np.zeros(out_channels, dtype=dtype), requires_grad=True)
        self.stride = stride
        self.dilation = dilation
        self.padding = padding

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(
            x, self.weight, self.bias, self.stride, self.dilation, self.padding
        )


class ConvRelu(Module):
    """Convolution followed by a ReLU."""

    def __init__(self, conv: Conv2d) -> None:
        self.conv = conv

    def __call__(self, x: Tensor) -> Tensor:
        return ops.relu(self.conv(x))


def sequential(layers: Iterable, x: Tensor) -> Tensor:
    for layer in layers:
        x = layer(x)
    return x

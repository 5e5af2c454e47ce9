"""Stochastic gradient descent with momentum and L2 weight decay."""

from collections.abc import Iterable
from dataclasses import dataclass, field

import numpy as np

from Autodiff.tensor import Tensor
from Utilities.errors import ConfigurationError, GraphError, ShapeError


@dataclass
class OptimizerState:
    """Hyperparameters plus one velocity buffer per named parameter."""

    learning_rate: float
    momentum: float = 0.99
    weight_decay: float = 5e-4
    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.learning_rate > 0:
            raise ConfigurationError(
                f"learning rate must be positive, got {self.learning_rate}"
            )
        if not 0 <= self.momentum < 1:
            raise ConfigurationError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ConfigurationError(
                f"weight decay must be non-negative, got {self.weight_decay}"
            )


def sgd_step(params: Iterable[tuple[str, Tensor]], state: OptimizerState) -> None:
    """Apply one in-place update to every parameter.

    The decay term is folded into the gradient before the momentum update:
    ``v = momentum * v + grad + weight_decay * p`` then ``p -= lr * v``.

    Args:
        params: Named parameters with populated gradients.
        state: Hyperparameters and velocity buffers, updated in place.

    Raises:
        GraphError: If a parameter has no gradient.
        ShapeError: If a stored velocity does not match its parameter.
    """
    params = list(params)
    missing = [name for name, p in params if p.grad is None]
    if missing:
        raise GraphError(f"No gradient for parameter(s): {', '.join(missing)}")

    for name, param in params:
        step = param.grad + state.weight_decay * param.data
        velocity = state.velocity.get(name)
        if velocity is None:
            velocity = np.zeros_like(param.data)
        elif velocity.shape != param.shape:
            raise ShapeError(
                f"velocity for '{name}' has shape {velocity.shape}, "
                f"parameter has {param.shape}",
                expected=param.shape,
                actual=velocity.shape,
            )
        velocity = state.momentum * velocity + step
        state.velocity[name] = velocity
        param.data -= (state.learning_rate * velocity).astype(param.dtype, copy=False)


class SGD:
    """Binds a fixed parameter list to an :class:`OptimizerState`."""

    def __init__(self, params: Iterable[tuple[str, Tensor]], state: OptimizerState):
        self.params = list(params)
        self.state = state

    def zero_grad(self) -> None:
        for _, param in self.params:
            param.zero_grad()

    def step(self) -> None:
        sgd_step(self.params, self.state)

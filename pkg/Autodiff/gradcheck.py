"""Central finite-difference verification of analytic gradients."""

from collections.abc import Callable, Mapping
from dataclasses import dataclass

import numpy as np

from Autodiff.tensor import Tensor, backward, no_grad
from Utilities.helpers import get_logger

logger = get_logger("gradcheck")


@dataclass(frozen=True)
class GradcheckResult:
    name: str
    max_relative_error: float
    checked: int
    tolerance: float
    entries: int

    @property
    def passed(self) -> bool:
        return bool(self.max_relative_error <= self.tolerance)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max|a - n| / max(max|a|, max|n|, 1e-6) over the checked entries."""
    if analytic.size == 0:
        return 0.0
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-6)
    return float(np.abs(analytic - numeric).max() / scale)


def check_gradients(
    fn: Callable[[], Tensor],
    inputs: Mapping[str, Tensor],
    h: float = 1e-5,
    tolerance: float = 1e-4,
    max_samples: int | None = None,
    rng: np.random.Generator | None = None,
) -> list[GradcheckResult]:
    """Compare backward() against central differences for every input tensor.

    ``fn`` must rebuild the scalar loss from the current contents of ``inputs``
    each time it is called. Inputs are perturbed in place and restored.

    Args:
        fn: Closure computing a scalar loss.
        inputs: Named tensors with ``requires_grad=True`` to check.
        h: Finite-difference step.
        tolerance: Maximum accepted relative error per tensor.
        max_samples: If set, check at most this many entries per tensor, drawn
            with ``rng``.
        rng: Generator for the entry subset.

    Returns:
        list[GradcheckResult]: One result per input, in mapping order.
    """
    rng = rng if rng is not None else np.random.default_rng(0)

    for tensor in inputs.values():
        tensor.zero_grad()
    backward(fn())

    results = []
    for name, tensor in inputs.items():
        analytic = (
            tensor.grad.reshape(-1)
            if tensor.grad is not None
            else np.zeros(tensor.size, dtype=tensor.dtype)
        )
        indices = np.arange(tensor.size)
        if max_samples is not None and tensor.size > max_samples:
            indices = np.sort(rng.choice(tensor.size, size=max_samples, replace=False))

        flat = tensor.data.reshape(-1)
        numeric = np.empty(len(indices), dtype=np.float64)
        with no_grad():
            for position, index in enumerate(indices):
                original = flat[index]
                flat[index] = original + h
                upper = fn().item()
                flat[index] = original - h
                lower = fn().item()
                flat[index] = original
                numeric[position] = (upper - lower) / (2 * h)

        result = GradcheckResult(
            name=name,
            max_relative_error=relative_error(analytic[indices], numeric),
            checked=len(indices),
            tolerance=tolerance,
            entries=tensor.size,
        )
        if not result.passed:
            logger.warning(
                "Gradient check failed for %s: relative error %.3e > %.1e",
                name,
                result.max_relative_error,
                tolerance,
            )
        results.append(result)

    return results

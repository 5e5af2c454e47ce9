"""Helper module for flattening a tree of network modules."""

from collections.abc import Iterable
from typing import Protocol


class HasChildren(Protocol):
    """Anything exposing its named child modules."""

    def children(self) -> Iterable[tuple[str, "HasChildren"]]: ...


def flatten_modules(
    module: HasChildren, prefix: str = ""
) -> Iterable[tuple[str, HasChildren]]:
    """Flatten a module into an iterable of (dotted path, module) pairs.

    This function recursively traverses the children of the module, yielding the
    module itself first and then every nested module in declaration order.

    Args:
        module: The module to flatten.
        prefix: Dotted path of ``module`` inside its parent.

    Yields:
        tuple[str, HasChildren]: Each nested module with its dotted path.
    """
    yield prefix, module

    for name, child in module.children():
        path = f"{prefix}.{name}" if prefix else name
        yield from flatten_modules(child, path)

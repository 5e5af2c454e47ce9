"""Single-file checkpoint container.

Layout, all integers little-endian unsigned 64-bit::

    b"JLDCFCKP" | manifest length | manifest JSON (utf-8)
    then per parameter, in manifest order:
    name length | name (utf-8) | ndim | extents... | raw little-endian data
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, BinaryIO

import numpy as np
from pydantic import ValidationError

from Network.inputs import NetworkConfig
from Network.model import JLDCF, build_network
from Utilities.errors import CheckpointError, ConfigurationError
from Utilities.helpers import get_logger

logger = get_logger("checkpoint")

MAGIC = b"JLDCFCKP"
FORMAT_VERSION = 1
_U64 = np.dtype("<u8")


@dataclass
class Checkpoint:
    config: NetworkConfig
    state: dict[str, np.ndarray]
    metadata: dict[str, Any] = field(default_factory=dict)


def _write_u64(stream: BinaryIO, *values: int) -> None:
    stream.write(np.asarray(values, dtype=_U64).tobytes())


def _read_exact(stream: BinaryIO, count: int) -> bytes:
    data = stream.read(count)
    if len(data) != count:
        raise CheckpointError("checkpoint is truncated")
    return data


def _read_u64(stream: BinaryIO, count: int = 1) -> list[int]:
    raw = _read_exact(stream, count * _U64.itemsize)
    return [int(v) for v in np.frombuffer(raw, dtype=_U64)]


def save_checkpoint(
    network: JLDCF, path: str | Path, metadata: dict[str, Any] | None = None
) -> Path:
    """Write the network config and every named parameter to ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    params = list(network.named_parameters())
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": network.config.model_dump(mode="json"),
        "parameters": [
            {"name": name, "dtype": param.dtype.str.replace(">", "<"), "shape": list(param.shape)}
            for name, param in params
        ],
        "metadata": metadata or {},
    }
    encoded = json.dumps(manifest, sort_keys=True).encode("utf-8")

    with path.open("wb") as stream:
        stream.write(MAGIC)
        _write_u64(stream, len(encoded))
        stream.write(encoded)
        for name, param in params:
            raw_name = name.encode("utf-8")
            _write_u64(stream, len(raw_name))
            stream.write(raw_name)
            _write_u64(stream, param.ndim, *param.shape)
            little = param.data.astype(param.dtype.newbyteorder("<"), copy=False)
            stream.write(np.ascontiguousarray(little).tobytes())

    logger.info("Saved checkpoint with %d tensors to %s", len(params), path)
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Raises:
        CheckpointError: On a bad magic, truncation or a header that disagrees
            with the manifest.
    """
    path = Path(path)
    try:
        stream = path.open("rb")
    except OSError as e:
        raise CheckpointError(f"Cannot open checkpoint {path}: {e}") from e

    with stream:
        if _read_exact(stream, len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path} is not a checkpoint file")
        (length,) = _read_u64(stream)
        try:
            manifest = json.loads(_read_exact(stream, length).decode("utf-8"))
            config = NetworkConfig.model_validate(manifest["config"])
        except (ValueError, KeyError, ValidationError, ConfigurationError) as e:
            raise CheckpointError(f"Invalid checkpoint manifest in {path}: {e}") from e

        state = {}
        for entry in manifest.get("parameters", []):
            (name_length,) = _read_u64(stream)
            name = _read_exact(stream, name_length).decode("utf-8")
            (ndim,) = _read_u64(stream)
            shape = tuple(_read_u64(stream, ndim))
            if name != entry["name"] or list(shape) != entry["shape"]:
                raise CheckpointError(
                    f"tensor header '{name}' {shape} disagrees with the manifest "
                    f"entry '{entry['name']}' {tuple(entry['shape'])}"
                )
            dtype = np.dtype(entry["dtype"])
            count = int(np.prod(shape, dtype=np.int64))
            raw = _read_exact(stream, count * dtype.itemsize)
            state[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).astype(
                dtype.newbyteorder("="), copy=True
            )

        if stream.read(1):
            raise CheckpointError(f"Trailing bytes after the last tensor in {path}")

    return Checkpoint(config=config, state=state, metadata=manifest.get("metadata", {}))


def restore_network(path: str | Path) -> JLDCF:
    """Rebuild the network a checkpoint was saved from."""
    checkpoint = load_checkpoint(path)
    dtypes = {array.dtype for array in checkpoint.state.values()}
    dtype = dtypes.pop() if len(dtypes) == 1 else np.float64
    network = build_network(checkpoint.config, seed=0, dtype=dtype)
    network.load_state_dict(checkpoint.state)
    return network

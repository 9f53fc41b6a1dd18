"""Binary predictor checkpoints.

Layout, little-endian throughout:

    b"DFP1"  magic
    u8       format version
    u32      parameter count
    per parameter:
        u32  name length, then the UTF-8 name
        u32  rank, then rank x u32 dimensions
        f32  values, row-major

Adam moments are not stored. The predictor config is written next to the
checkpoint as ``<path>.cfg`` in the ``key=value`` format.
"""
from __future__ import annotations

import logging
import struct
from pathlib import Path

import numpy as np

from .config import dataclass_from_config, dataclass_to_config, dump_config, parse_config
from .exceptions import CheckpointError, ConfigError, CorruptCheckpoint, UnsupportedVersion
from .numerics import DTYPE, ParameterStore, Tensor
from .predictor import PredictorConfig, PredictorNet, build_predictor

logger = logging.getLogger(__name__)

MAGIC = b"DFP1"
VERSION = 1
_U32 = struct.Struct("<I")
_VALUE_DTYPE = np.dtype("<f4")


def config_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".cfg")


def encode_parameters(store: ParameterStore) -> bytes:
    chunks = [MAGIC, bytes([VERSION]), _U32.pack(len(store))]
    for name, tensor in store.items():
        encoded = name.encode("utf-8")
        chunks.append(_U32.pack(len(encoded)))
        chunks.append(encoded)
        chunks.append(_U32.pack(tensor.values.ndim))
        chunks.extend(_U32.pack(dim) for dim in tensor.values.shape)
        chunks.append(np.ascontiguousarray(tensor.values, dtype=_VALUE_DTYPE).tobytes())
    return b"".join(chunks)


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        end = self.offset + size
        if end > len(self.data):
            raise CorruptCheckpoint(f"checkpoint truncated while reading {what} at byte {self.offset}")
        chunk = self.data[self.offset:end]
        self.offset = end
        return chunk

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(_U32.size, what))[0]


def decode_parameters(data: bytes) -> dict[str, np.ndarray]:
    reader = _Reader(data)
    if reader.take(len(MAGIC), "magic") != MAGIC:
        raise CorruptCheckpoint("not a DFP checkpoint (bad magic bytes)")
    version = reader.take(1, "version")[0]
    if version != VERSION:
        raise UnsupportedVersion(f"checkpoint format version {version} is not supported (expected {VERSION})")

    parameters: dict[str, np.ndarray] = {}
    for _ in range(reader.u32("parameter count")):
        raw_name = reader.take(reader.u32("name length"), "parameter name")
        try:
            name = raw_name.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptCheckpoint(f"parameter name is not valid UTF-8: {raw_name!r}") from exc
        if name in parameters:
            raise CorruptCheckpoint(f"parameter {name!r} appears twice")
        shape = tuple(reader.u32(f"{name} dimensions") for _ in range(reader.u32(f"{name} rank")))
        count = int(np.prod(shape, dtype=np.int64))
        raw = reader.take(count * _VALUE_DTYPE.itemsize, f"{name} values")
        parameters[name] = np.frombuffer(raw, dtype=_VALUE_DTYPE).astype(DTYPE).reshape(shape)
    if reader.offset != len(data):
        raise CorruptCheckpoint(f"{len(data) - reader.offset} unexpected trailing bytes")
    return parameters


def save_checkpoint(net: PredictorNet, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_parameters(net.store))
    config_path(path).write_text(dump_config(dataclass_to_config(net.config)), encoding="utf-8")
    logger.info("saved checkpoint %s (%d parameter tensors)", path, len(net.store))
    return path


def load_checkpoint(path: str | Path, config: PredictorConfig | None = None) -> PredictorNet:
    """Load a checkpoint and check every tensor against the config's shapes."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc

    if config is None:
        header = config_path(path)
        if not header.exists():
            raise CheckpointError(f"no config header {header} next to {path}")
        try:
            config = dataclass_from_config(PredictorConfig, parse_config(header.read_text(encoding="utf-8")))
        except ConfigError as exc:
            raise CorruptCheckpoint(f"config header {header} is invalid: {exc}") from exc

    parameters = decode_parameters(data)
    template = build_predictor(config, np.random.default_rng(0)).store
    missing = sorted(set(template) - set(parameters))
    extra = sorted(set(parameters) - set(template))
    if missing or extra:
        raise CorruptCheckpoint(
            f"checkpoint parameters do not match the config (missing: {missing}, unexpected: {extra})"
        )

    store = ParameterStore()
    for name in template:
        expected = template[name].shape
        values = parameters[name]
        if values.shape != expected:
            raise CorruptCheckpoint(f"{name} has shape {values.shape}, config expects {expected}")
        store.add(name, Tensor(values, dtype=None))
    return PredictorNet(config, store)

"""Checkpoint file: magic, length-prefixed JSON header, then length-prefixed little-endian float64 tensors.

    b"KCONCKPT" | u32 header_len | header JSON | (u64 nbytes | <f8 data) per tensor
"""
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
from pydantic import ValidationError

from kconc.errors import (
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    MissingFileError,
)
from kconc.layers import Model, build_model
from kconc.models import CheckpointHeader, ModelRole, TensorEntry
from kconc.storage import atomic_write_bytes

logger = logging.getLogger(__name__)

MAGIC = b"KCONCKPT"
FORMAT_VERSION = 1
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")


@dataclass
class LoadedCheckpoint:
    model: Model
    header: CheckpointHeader

    @property
    def class_ids(self) -> List[int]:
        return self.header.class_ids


def dumps_checkpoint(
    model: Model,
    role: ModelRole,
    class_ids: Sequence[int],
    vertical_id: Optional[int] = None,
) -> bytes:
    params = model.parameters()
    for name, p in params.items():
        if not np.all(np.isfinite(p.data)):
            raise CheckpointShapeError(f"tensor {name} holds non-finite values; refusing to save")
    header = CheckpointHeader(
        format_version=FORMAT_VERSION,
        role=role,
        arch=model.spec,
        head=model.head_spec,
        seed=model.seed,
        class_ids=list(class_ids),
        vertical_id=vertical_id,
        tensors=[TensorEntry(name=n, shape=list(p.shape)) for n, p in params.items()],
    )
    header_bytes = header.model_dump_json().encode("utf-8")
    chunks = [MAGIC, _U32.pack(len(header_bytes)), header_bytes]
    for p in params.values():
        data = np.ascontiguousarray(p.data, dtype="<f8").tobytes()
        chunks += [_U64.pack(len(data)), data]
    return b"".join(chunks)


def save_checkpoint(
    model: Model,
    path: Union[str, Path],
    role: ModelRole,
    class_ids: Sequence[int],
    vertical_id: Optional[int] = None,
) -> Path:
    path = atomic_write_bytes(path, dumps_checkpoint(model, role, class_ids, vertical_id))
    logger.info(f"Saved {role.value} checkpoint to {path}")
    return path


class _Reader:
    def __init__(self, payload: bytes):
        self.payload = payload
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        end = self.offset + size
        if end > len(self.payload):
            raise CheckpointTruncatedError(
                f"checkpoint truncated reading {what}: need {size} bytes, "
                f"{len(self.payload) - self.offset} left"
            )
        chunk = self.payload[self.offset:end]
        self.offset = end
        return chunk


def loads_checkpoint(payload: bytes) -> LoadedCheckpoint:
    reader = _Reader(payload)
    if reader.take(len(MAGIC), "magic") != MAGIC:
        raise CheckpointVersionError("not a kconc checkpoint (bad magic)")
    (header_len,) = _U32.unpack(reader.take(_U32.size, "header length"))
    raw_header = reader.take(header_len, "header")
    try:
        header_dict = json.loads(raw_header)
    except ValueError as e:
        raise CheckpointTruncatedError(f"checkpoint header is not valid JSON: {e}") from None
    version = header_dict.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(f"checkpoint format {version}, this build reads {FORMAT_VERSION}")
    try:
        header = CheckpointHeader.model_validate(header_dict)
    except ValidationError as e:
        raise CheckpointShapeError(f"checkpoint header does not validate: {e}") from None

    arrays = {}
    for entry in header.tensors:
        (nbytes,) = _U64.unpack(reader.take(_U64.size, f"length of {entry.name}"))
        expected = int(np.prod(entry.shape)) * 8
        if nbytes != expected:
            raise CheckpointTruncatedError(
                f"length field of {entry.name} says {nbytes} bytes, shape {entry.shape} needs {expected}"
            )
        data = reader.take(nbytes, entry.name)
        arrays[entry.name] = np.frombuffer(data, dtype="<f8").astype(np.float64).reshape(entry.shape)
    if reader.offset != len(payload):
        raise CheckpointTruncatedError(f"{len(payload) - reader.offset} trailing bytes after last tensor")

    model = build_model(header.arch, header.head, header.seed)
    model.load_arrays(arrays)
    return LoadedCheckpoint(model=model, header=header)


def load_checkpoint(path: Union[str, Path]) -> LoadedCheckpoint:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"checkpoint not found: {path}")
    loaded = loads_checkpoint(path.read_bytes())
    logger.info(f"Loaded {loaded.header.role.value} checkpoint from {path}")
    return loaded

"""Versioned binary checkpoint container for trained models.

Layout (little-endian): 8-byte magic, u32 version, u32-length-prefixed UTF-8
header of key=value lines, u32 tensor count, then per tensor a u32-prefixed
name, u32 rank, u64 dims and raw float64 values.
"""

import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
import torch
from pydantic import ValidationError

from src.errors import (
    CheckpointError,
    CheckpointShapeError,
    CheckpointVersionError,
    NotACheckpointError,
    TruncatedCheckpointError,
)
from src.logging_config import logger
from src.model import TgaeModel
from src.settings import ModelSettings, VariantFlags

MAGIC = b"TGAECKPT"
VERSION = 1


@dataclass(frozen=True)
class Checkpoint:
    model: TgaeModel
    seed: int


def _header(model: TgaeModel, seed: int) -> str:
    values = {"n": model.n, "T": model.T, "seed": seed}
    values.update(model.settings.model_dump(exclude_none=True))
    values.update({f"variant.{key}": value for key, value in model.variant.model_dump().items()})
    lines = []
    for key, value in values.items():
        text = str(value).lower() if isinstance(value, bool) else str(value)
        lines.append(f"{key}={text}")
    return "\n".join(lines)


def _u32(value: int) -> bytes:
    return struct.pack("<I", value)


def dumps_checkpoint(model: TgaeModel, seed: int) -> bytes:
    header = _header(model, seed).encode("utf-8")
    parts = [MAGIC, _u32(VERSION), _u32(len(header)), header]
    state = model.state_dict()
    parts.append(_u32(len(state)))
    for name, tensor in state.items():
        encoded = name.encode("utf-8")
        array = tensor.detach().cpu().numpy().astype("<f8")
        parts += [_u32(len(encoded)), encoded, _u32(array.ndim)]
        parts += [struct.pack("<Q", dim) for dim in array.shape]
        parts.append(array.tobytes(order="C"))
    return b"".join(parts)


def save_checkpoint(model: TgaeModel, path: Union[str, Path], seed: int = 0):
    """Writes the checkpoint atomically via a temporary file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = dumps_checkpoint(model, seed)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    logger.info("Checkpoint written to %s (%d tensors)", path, len(model.state_dict()))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, size: int, what: str) -> bytes:
        if self.pos + size > len(self.data):
            logger.error("Checkpoint ends inside %s", what)
            raise TruncatedCheckpointError(f"checkpoint truncated while reading {what}")
        chunk = self.data[self.pos : self.pos + size]
        self.pos += size
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]


def _parse_header(text: str) -> dict[str, str]:
    values = {}
    for line in text.splitlines():
        key, sep, value = line.partition("=")
        if not sep:
            raise CheckpointError(f"malformed checkpoint header line '{line}'")
        values[key] = value
    return values


def loads_checkpoint(data: bytes, expected: Optional[ModelSettings] = None) -> Checkpoint:
    """Rebuilds a model from checkpoint bytes.

    With `expected`, tensors are checked against a model built from those
    settings instead of the stored ones.
    """
    if data[: len(MAGIC)] != MAGIC:
        logger.error("File does not start with the checkpoint magic")
        raise NotACheckpointError("not a checkpoint file")
    reader = _Reader(data)
    reader.take(len(MAGIC), "magic")
    version = reader.u32("version")
    if version != VERSION:
        logger.error("Unsupported checkpoint version %d", version)
        raise CheckpointVersionError(f"checkpoint version {version} is not supported (expected {VERSION})")
    header = _parse_header(reader.take(reader.u32("header length"), "header").decode("utf-8"))

    try:
        n, T, seed = int(header.pop("n")), int(header.pop("T")), int(header.pop("seed"))
        variant = VariantFlags.model_validate(
            {key.split(".", 1)[1]: value for key, value in header.items() if key.startswith("variant.")}
        )
        stored = ModelSettings.model_validate({key: v for key, v in header.items() if not key.startswith("variant.")})
    except (KeyError, ValueError, ValidationError) as e:
        raise CheckpointError(f"invalid checkpoint header: {e}") from e
    model = TgaeModel(n, T, expected or stored, variant)
    targets = model.state_dict()

    loaded = {}
    for _ in range(reader.u32("tensor count")):
        name = reader.take(reader.u32("tensor name length"), "tensor name").decode("utf-8")
        rank = reader.u32(f"rank of {name}")
        shape = tuple(reader.u64(f"shape of {name}") for _ in range(rank))
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        raw = reader.take(8 * size, f"values of {name}")
        if name not in targets:
            raise CheckpointError(f"unexpected tensor '{name}' in checkpoint")
        wanted = tuple(targets[name].shape)
        if shape != wanted:
            logger.error("Checkpoint tensor %s has shape %s, model expects %s", name, shape, wanted)
            raise CheckpointShapeError(name, wanted, shape)
        loaded[name] = torch.from_numpy(np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64))
    missing = sorted(set(targets) - set(loaded))
    if missing:
        raise CheckpointError(f"checkpoint is missing tensors: {', '.join(missing)}")
    model.load_state_dict(loaded)
    return Checkpoint(model=model, seed=seed)


def load_checkpoint(path: Union[str, Path], expected: Optional[ModelSettings] = None) -> Checkpoint:
    path = Path(path)
    if not path.is_file():
        logger.error("Checkpoint %s does not exist", path)
        raise CheckpointError(f"checkpoint not found: {path}")
    checkpoint = loads_checkpoint(path.read_bytes(), expected)
    logger.info("Loaded checkpoint %s (n=%d, T=%d)", path, checkpoint.model.n, checkpoint.model.T)
    return checkpoint

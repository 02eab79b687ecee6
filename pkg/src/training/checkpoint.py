"""
Checkpoint Persistence
"ASDC" named-tensor files: header, JSON metadata, little-endian float32 payload
"""

import json
import logging
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from ..core.config import AsdConfig
from ..core.errors import CheckpointError, CorruptHeaderError, TruncatedPayloadError, VersionMismatchError
from ..core.tensor import get_default_dtype
from ..modules.detector import AnomalyDetector, build_detector

logger = logging.getLogger(__name__)

MAGIC = b"ASDC"
FORMAT_VERSION = 1
PREFIX = struct.Struct("<4sIQ")
PAYLOAD_DTYPE = "<f4"
OPTIMIZER_PREFIX = "optimizer/"


class TensorEntry(BaseModel):
    shape: List[int] = Field(..., description="Tensor shape")
    offset: int = Field(..., ge=0, description="Byte offset into the payload")
    dtype: str = Field(PAYLOAD_DTYPE, pattern=r"^<f4$")


class CheckpointMetadata(BaseModel):
    tensors: Dict[str, TensorEntry]
    config: Dict[str, Any]
    epoch: int = Field(..., ge=0)
    step: int = Field(0, ge=0)
    vocab: List[str] = Field(default_factory=list)
    payload_bytes: int = Field(..., ge=0)
    payload_crc32: int = Field(..., ge=0)


@dataclass
class ModelCheckpoint:
    """
    Learnable tensors (plus batch-norm running statistics), the config
    snapshot they were trained under and, optionally, AdamW moments.
    """
    tensors: Dict[str, np.ndarray]
    config: Dict[str, Any]
    epoch: int
    optimizer: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    vocab: List[str] = field(default_factory=list)

    @property
    def asd_config(self) -> AsdConfig:
        return AsdConfig.from_snapshot(self.config)


def encode_checkpoint(checkpoint: ModelCheckpoint) -> bytes:
    """Serialize to bytes; tensors are laid out in name order, matching the sorted metadata"""
    named = list(checkpoint.tensors.items())
    named += [(OPTIMIZER_PREFIX + k, v) for k, v in checkpoint.optimizer.items()]
    named.sort(key=lambda item: item[0])

    entries: Dict[str, TensorEntry] = {}
    chunks: List[bytes] = []
    offset = 0
    for name, array in named:
        data = np.ascontiguousarray(array, dtype=PAYLOAD_DTYPE).tobytes()
        entries[name] = TensorEntry(shape=list(np.shape(array)), offset=offset)
        chunks.append(data)
        offset += len(data)
    payload = b"".join(chunks)

    metadata = CheckpointMetadata(
        tensors=entries,
        config=checkpoint.config,
        epoch=checkpoint.epoch,
        step=checkpoint.step,
        vocab=checkpoint.vocab,
        payload_bytes=len(payload),
        payload_crc32=zlib.crc32(payload),
    )
    meta_bytes = json.dumps(metadata.model_dump(mode="json"), sort_keys=True, separators=(",", ":")).encode("utf-8")
    return PREFIX.pack(MAGIC, FORMAT_VERSION, len(meta_bytes)) + meta_bytes + payload


def decode_checkpoint(blob: bytes) -> ModelCheckpoint:
    """
    Parse checkpoint bytes.

    Raises:
        CorruptHeaderError: Bad magic, unreadable metadata or config snapshot, inconsistent layout, CRC mismatch
        VersionMismatchError: Unsupported format version
        TruncatedPayloadError: File ends before the declared metadata or payload
    """
    if len(blob) < PREFIX.size:
        if MAGIC.startswith(blob[:4]):
            raise TruncatedPayloadError("checkpoint shorter than its header", size=len(blob))
        raise CorruptHeaderError("not an ASDC checkpoint", magic=blob[:4])

    magic, version, meta_len = PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise CorruptHeaderError("not an ASDC checkpoint", magic=magic)
    if version != FORMAT_VERSION:
        raise VersionMismatchError("unsupported checkpoint version", expected=FORMAT_VERSION, got=version)
    meta_end = PREFIX.size + meta_len
    if meta_end > len(blob):
        raise TruncatedPayloadError("checkpoint ends inside the metadata block",
                                    declared=meta_len, available=len(blob) - PREFIX.size)

    try:
        metadata = CheckpointMetadata.model_validate(json.loads(blob[PREFIX.size:meta_end].decode("utf-8")))
    except (UnicodeDecodeError, ValueError, ValidationError) as exc:
        raise CorruptHeaderError("checkpoint metadata is unreadable", reason=str(exc).splitlines()[0]) from exc
    try:
        AsdConfig.from_snapshot(metadata.config)
    except ValidationError as exc:
        raise CorruptHeaderError("checkpoint config snapshot is invalid", reason=str(exc).splitlines()[0]) from exc

    payload = blob[meta_end:]
    if len(payload) < metadata.payload_bytes:
        raise TruncatedPayloadError("checkpoint payload is truncated",
                                    declared=metadata.payload_bytes, available=len(payload))
    if len(payload) > metadata.payload_bytes:
        raise CorruptHeaderError("trailing bytes after the checkpoint payload",
                                 declared=metadata.payload_bytes, available=len(payload))
    if zlib.crc32(payload) != metadata.payload_crc32:
        raise CorruptHeaderError("checkpoint payload checksum mismatch")

    tensors: Dict[str, np.ndarray] = {}
    optimizer: Dict[str, np.ndarray] = {}
    for name, entry in metadata.tensors.items():
        if any(d < 0 for d in entry.shape):
            raise CorruptHeaderError(f"negative dimension for tensor {name}", shape=entry.shape)
        count = int(np.prod(entry.shape, dtype=np.int64))
        end = entry.offset + 4 * count
        if end > len(payload):
            raise CorruptHeaderError(f"tensor {name} lies outside the payload", offset=entry.offset, end=end)
        array = np.frombuffer(payload, dtype=PAYLOAD_DTYPE, count=count, offset=entry.offset)
        array = array.astype(np.float32).reshape(entry.shape)
        if name.startswith(OPTIMIZER_PREFIX):
            optimizer[name[len(OPTIMIZER_PREFIX):]] = array
        else:
            tensors[name] = array

    return ModelCheckpoint(
        tensors=tensors,
        config=metadata.config,
        epoch=metadata.epoch,
        optimizer=optimizer,
        step=metadata.step,
        vocab=metadata.vocab,
    )


def save_checkpoint(checkpoint: ModelCheckpoint, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = encode_checkpoint(checkpoint)
    path.write_bytes(blob)
    logger.info(f"Saved checkpoint (epoch {checkpoint.epoch}, {len(blob):,} bytes) to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> ModelCheckpoint:
    """
    Raises:
        CheckpointError: File missing or any decoding failure
    """
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}", path=str(path))
    checkpoint = decode_checkpoint(path.read_bytes())
    logger.debug(f"Loaded checkpoint {path} with {len(checkpoint.tensors)} tensors")
    return checkpoint


def checkpoint_from_detector(
    detector: AnomalyDetector,
    epoch: int,
    vocab: Optional[List[str]] = None,
    optimizer: Optional[Dict[str, np.ndarray]] = None,
    step: int = 0,
) -> ModelCheckpoint:
    return ModelCheckpoint(
        tensors=detector.state_dict(),
        config=detector.config.snapshot(),
        epoch=epoch,
        optimizer={k: v.copy() for k, v in (optimizer or {}).items()},
        step=step,
        vocab=list(vocab or []),
    )


def detector_from_checkpoint(checkpoint: ModelCheckpoint) -> AnomalyDetector:
    """Rebuild the detector described by the checkpoint's config and load its tensors (eval mode)"""
    detector = build_detector(checkpoint.asd_config, np.random.default_rng(0))
    dtype = get_default_dtype()
    detector.load_state_dict({k: v.astype(dtype) for k, v in checkpoint.tensors.items()})
    return detector.eval()

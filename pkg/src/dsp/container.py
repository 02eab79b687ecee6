"""
Feature Container
"ASDF" files holding float32 maps: version 1 (t × f) and version 2 (t × f × channels)
"""

import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np

from ..core.errors import ContainerError, ShapeError

logger = logging.getLogger(__name__)

MAGIC = b"ASDF"
HEADER_V1 = struct.Struct("<4sIII")
HEADER_V2 = struct.Struct("<4sIIII")


def encode_container(values: np.ndarray) -> bytes:
    """2-D arrays become version 1, 3-D arrays version 2"""
    values = np.asarray(values)
    if values.ndim == 2:
        header = HEADER_V1.pack(MAGIC, 1, *values.shape)
    elif values.ndim == 3:
        header = HEADER_V2.pack(MAGIC, 2, *values.shape)
    else:
        raise ShapeError("container holds t×f or t×f×c maps", shape=values.shape)
    return header + np.ascontiguousarray(values, dtype="<f4").tobytes()


def decode_container(blob: bytes) -> np.ndarray:
    """
    Parse an ASDF blob.

    Raises:
        ContainerError: Bad magic, unknown version or wrong payload size
    """
    if len(blob) < HEADER_V1.size or blob[:4] != MAGIC:
        raise ContainerError("not an ASDF container", size=len(blob))
    version = struct.unpack_from("<I", blob, 4)[0]
    if version == 1:
        _, _, t, f = HEADER_V1.unpack_from(blob)
        shape, offset = (t, f), HEADER_V1.size
    elif version == 2:
        if len(blob) < HEADER_V2.size:
            raise ContainerError("truncated ASDF header", size=len(blob))
        _, _, t, f, c = HEADER_V2.unpack_from(blob)
        shape, offset = (t, f, c), HEADER_V2.size
    else:
        raise ContainerError(f"unsupported ASDF version {version}", version=version)

    expected = int(np.prod(shape)) * 4
    if len(blob) - offset != expected:
        raise ContainerError("ASDF payload size mismatch", expected=expected, got=len(blob) - offset)
    return np.frombuffer(blob, dtype="<f4", offset=offset).reshape(shape).astype(np.float32)


def write_container(path: Union[str, Path], values: np.ndarray) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_container(values))
    logger.debug(f"Wrote container {path} with shape {np.shape(values)}")
    return path


def read_container(path: Union[str, Path]) -> np.ndarray:
    return decode_container(Path(path).read_bytes())

"""
Binary checkpoint container.

Layout (all integers little-endian):
    magic        8 bytes  b"HJCLCKPT"
    version      uint16
    header_len   uint32
    header       UTF-8 JSON, sorted keys
    data         float64 '<f8' values of every tensor, in header order
    digest       32 bytes SHA-256 of everything above
"""
import hashlib
import json
import struct
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ValidationError

from core.config import CHECKPOINT_MAGIC, CHECKPOINT_VERSION
from core.exceptions import CheckpointError
from core.logger import get_logger

logger = get_logger(__name__, log_file="model.log")

_PREFIX = struct.Struct("<8sHI")
_DIGEST_SIZE = 32


class TensorEntry(BaseModel):
    name: str
    shape: Tuple[int, int]
    offset: int
    count: int


class CheckpointHeader(BaseModel):
    config: Dict[str, Any]
    taxonomy_hash: str
    labels: List[str]
    vocab: List[str]
    epoch: int
    val_macro_f1: Optional[float] = None
    tensors: List[TensorEntry] = []


class CheckpointStore:
    def __init__(self, path: str):
        self.path = path

    def write(self, header: CheckpointHeader, tensors: Dict[str, np.ndarray]) -> str:
        """
        Serialize tensors and metadata to `self.path`.

        :param header: Metadata; its `tensors` table is rebuilt from `tensors`.
        :param tensors: Parameter arrays in the order they should be stored.

        :return: Hex digest of the written container.
        """
        entries = []
        chunks = []
        offset = 0
        for name, array in tensors.items():
            array = np.ascontiguousarray(array, dtype="<f8")
            entries.append(TensorEntry(name=name, shape=array.shape, offset=offset, count=array.size))
            chunks.append(array.tobytes())
            offset += array.size
        header = header.model_copy(update={"tensors": entries})

        header_bytes = json.dumps(header.model_dump(), sort_keys=True, ensure_ascii=True).encode("utf-8")
        body = _PREFIX.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(header_bytes)) + header_bytes + b"".join(chunks)
        digest = hashlib.sha256(body).digest()
        try:
            with open(self.path, "wb") as f:
                f.write(body + digest)
        except OSError as e:
            logger.error(f"Cannot write checkpoint {self.path}: {str(e)}")
            raise CheckpointError(f"cannot write checkpoint {self.path}: {str(e)}")
        logger.info(f"Wrote checkpoint {self.path} ({len(entries)} tensors, epoch {header.epoch})")
        return digest.hex()

    def read(self) -> Tuple[CheckpointHeader, Dict[str, np.ndarray]]:
        try:
            with open(self.path, "rb") as f:
                raw = f.read()
        except OSError as e:
            raise CheckpointError(f"cannot read checkpoint {self.path}: {str(e)}")

        if len(raw) < _PREFIX.size + _DIGEST_SIZE:
            raise CheckpointError(f"checkpoint {self.path} is truncated")
        body, digest = raw[:-_DIGEST_SIZE], raw[-_DIGEST_SIZE:]
        if hashlib.sha256(body).digest() != digest:
            logger.error(f"Integrity check failed for {self.path}")
            raise CheckpointError(f"checkpoint {self.path} failed its integrity check")

        magic, version, header_len = _PREFIX.unpack_from(body)
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{self.path} is not a checkpoint file")
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")

        start = _PREFIX.size
        try:
            header = CheckpointHeader.model_validate_json(body[start:start + header_len])
        except ValidationError as e:
            raise CheckpointError(f"corrupt checkpoint header: {e.errors()[0]['msg']}")

        try:
            data = np.frombuffer(body[start + header_len:], dtype="<f8")
        except ValueError:
            raise CheckpointError(f"checkpoint {self.path} has a misaligned data section")
        tensors: Dict[str, np.ndarray] = {}
        for entry in header.tensors:
            if entry.offset + entry.count > data.size or entry.shape[0] * entry.shape[1] != entry.count:
                raise CheckpointError(f"tensor table entry '{entry.name}' is out of bounds")
            values = data[entry.offset:entry.offset + entry.count]
            tensors[entry.name] = values.reshape(entry.shape).astype(np.float64)
        logger.info(f"Read checkpoint {self.path} (epoch {header.epoch})")
        return header, tensors

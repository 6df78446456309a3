"""Versioned binary checkpoint container.

Layout (all integers little-endian)::

    b"EGADCKPT" | u32 version | u32 header length | JSON header (UTF-8)
    | parameter arrays as <f8, in header "names" order
    | extra arrays (e.g. feature projection), in header "extras" order
    | optimizer first moments, then second moments (when present)
    | sha256 digest of everything above (32 bytes)

The header carries the model config, seed, step and every shape; it is
serialized with sorted keys and holds no timestamps, so identical runs
produce identical bytes.
"""
import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

import numpy as np

from app.core.exceptions import DependencyError, raise_dependency_error
from app.core.logging_config import get_logger
from app.schemas.config import ModelConfig
from app.schemas.model import ParameterSet
from app.schemas.training import OptimizerState

logger = get_logger(__name__)

MAGIC = b"EGADCKPT"
FORMAT_VERSION = 1
DIGEST_SIZE = 32
_DTYPE = np.dtype("<f8")


@dataclass
class Checkpoint:
    """Decoded checkpoint contents."""

    params: ParameterSet
    step: int = 0
    seed: int = 0
    optimizer_state: Optional[OptimizerState] = None
    extras: Dict[str, np.ndarray] = field(default_factory=dict)
    metadata: Dict[str, Any] = field(default_factory=dict)


def _pack(arrays: List[np.ndarray]) -> bytes:
    return b"".join(np.ascontiguousarray(a, dtype=_DTYPE).tobytes() for a in arrays)


def encode_checkpoint(checkpoint: Checkpoint) -> bytes:
    """Serialize a checkpoint to bytes."""
    params = checkpoint.params
    names = params.names
    extra_names = sorted(checkpoint.extras)
    state = checkpoint.optimizer_state
    header = {
        "config": params.config.model_dump(mode="json"),
        "seed": checkpoint.seed,
        "step": checkpoint.step,
        "names": names,
        "shapes": [list(params.tensors[n].shape) for n in names],
        "extras": extra_names,
        "extra_shapes": [list(checkpoint.extras[n].shape) for n in extra_names],
        "optimizer": None if state is None else {"step": state.step, "names": sorted(state.m)},
        "metadata": checkpoint.metadata,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")

    body = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(header_bytes)), header_bytes]
    body.append(_pack([params.tensors[n] for n in names]))
    body.append(_pack([checkpoint.extras[n] for n in extra_names]))
    if state is not None:
        opt_names = sorted(state.m)
        body.append(_pack([state.m[n] for n in opt_names]))
        body.append(_pack([state.v[n] for n in opt_names]))
    payload = b"".join(body)
    return payload + hashlib.sha256(payload).digest()


def decode_checkpoint(blob: bytes, source: str = "<bytes>") -> Checkpoint:
    """
    Parse and verify checkpoint bytes.

    Raises:
        DependencyError: On bad magic, unknown version, truncation or
            checksum mismatch.
    """
    def corrupt(reason: str) -> DependencyError:
        return DependencyError(
            message=f"Checkpoint {source} is unusable: {reason}",
            details={"artifact": "checkpoint", "path": source, "reason": reason}
        )

    if len(blob) < len(MAGIC) + 8 + DIGEST_SIZE or blob[: len(MAGIC)] != MAGIC:
        raise corrupt("bad magic")
    payload, digest = blob[:-DIGEST_SIZE], blob[-DIGEST_SIZE:]
    if hashlib.sha256(payload).digest() != digest:
        raise corrupt("checksum mismatch")
    version, header_len = struct.unpack_from("<II", payload, len(MAGIC))
    if version != FORMAT_VERSION:
        raise corrupt(f"unsupported format version {version}")
    offset = len(MAGIC) + 8
    header = json.loads(payload[offset: offset + header_len].decode("utf-8"))
    offset += header_len

    def read(shape: List[int]) -> np.ndarray:
        nonlocal offset
        count = int(np.prod(shape)) if shape else 1
        end = offset + count * _DTYPE.itemsize
        if end > len(payload):
            raise corrupt("truncated data")
        arr = np.frombuffer(payload[offset:end], dtype=_DTYPE).reshape(shape).astype(np.float64)
        offset = end
        return arr

    config = ModelConfig.model_validate(header["config"])
    tensors = {name: read(shape) for name, shape in zip(header["names"], header["shapes"])}
    extras = {name: read(shape) for name, shape in zip(header["extras"], header["extra_shapes"])}

    state = None
    if header["optimizer"] is not None:
        opt_names = header["optimizer"]["names"]
        all_shapes = {**{n: list(a.shape) for n, a in tensors.items()},
                      **{n: list(a.shape) for n, a in extras.items()}}
        m = {n: read(all_shapes[n]) for n in opt_names}
        v = {n: read(all_shapes[n]) for n in opt_names}
        state = OptimizerState(m=m, v=v, step=header["optimizer"]["step"])
    if offset != len(payload):
        raise corrupt("trailing bytes")

    return Checkpoint(
        params=ParameterSet(config=config, tensors=tensors),
        step=header["step"],
        seed=header["seed"],
        optimizer_state=state,
        extras=extras,
        metadata=header.get("metadata", {}),
    )


def save_checkpoint(path: Union[str, Path], checkpoint: Checkpoint, verify: bool = True) -> Path:
    """Write a checkpoint; with ``verify`` the file is read back and compared bitwise."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    blob = encode_checkpoint(checkpoint)
    path.write_bytes(blob)
    if verify:
        restored = decode_checkpoint(path.read_bytes(), str(path))
        if not restored.params.bitwise_equal(checkpoint.params):
            raise DependencyError(
                message=f"Checkpoint {path} did not round-trip",
                details={"artifact": "checkpoint", "path": str(path)}
            )
    logger.info(f"Saved checkpoint {path} ({len(blob)} bytes, step {checkpoint.step})")
    return path


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    """
    Read and verify a checkpoint file.

    Raises:
        DependencyError: If the file is missing or fails verification.
    """
    path = Path(path)
    if not path.is_file():
        raise_dependency_error("checkpoint", str(path))
    return decode_checkpoint(path.read_bytes(), str(path))


def arrays_equal(a: Mapping[str, np.ndarray], b: Mapping[str, np.ndarray]) -> bool:
    """Bitwise comparison of two named array maps."""
    return sorted(a) == sorted(b) and all(a[k].tobytes() == b[k].tobytes() for k in a)

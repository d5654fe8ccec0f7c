"""Binary container for named float32 arrays (weights, optimizer state, models).

Byte layout (all integers little-endian):

    offset 0   magic  b"UWEC"
    offset 4   uint32 format version (currently 1)
    offset 8   uint64 header length L
    offset 16  header, UTF-8 JSON (sorted keys, compact separators)
    16 + L     payload: tensors concatenated in header order,
               little-endian float32, C-contiguous
    last 32    SHA-256 digest of every preceding byte

The header is {"kind", "config", "meta", "tensors"} where "tensors" is a list
of {"name", "shape", "offset"} with offsets relative to the payload start.
Saving the result of a load reproduces the file byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

MAGIC = b"UWEC"
FORMAT_VERSION = 1
_DTYPE = np.dtype("<f4")


class CheckpointError(RuntimeError):
    pass


def config_fingerprint(config: dict) -> str:
    """Stable hash of a configuration record (16 hex chars)."""
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def save_arrays(
    path: str | Path,
    arrays: dict[str, np.ndarray],
    kind: str,
    config: dict | None = None,
    meta: dict | None = None,
) -> None:
    """Serialize named arrays; iteration order of `arrays` fixes the layout."""
    tensors = []
    payload = bytearray()
    for name, value in arrays.items():
        data = np.ascontiguousarray(np.asarray(value), dtype=_DTYPE)
        tensors.append({"name": name, "shape": list(data.shape), "offset": len(payload)})
        payload += data.tobytes()
    header = {
        "kind": kind,
        "config": config,
        "meta": meta or {},
        "tensors": tensors,
    }
    if config is not None:
        header["meta"].setdefault("config_hash", config_fingerprint(config))
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()

    blob = bytearray()
    blob += MAGIC
    blob += FORMAT_VERSION.to_bytes(4, "little")
    blob += len(header_bytes).to_bytes(8, "little")
    blob += header_bytes
    blob += payload
    blob += hashlib.sha256(blob).digest()

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(blob)


def load_arrays(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a container back; verifies checksum, magic, and config hash."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"no such checkpoint: {path}")
    blob = path.read_bytes()
    if len(blob) < 48 or blob[:4] != MAGIC:
        raise CheckpointError(f"not a checkpoint container: {path}")
    digest = blob[-32:]
    if hashlib.sha256(blob[:-32]).digest() != digest:
        raise CheckpointError(f"checksum mismatch (corrupt file): {path}")
    version = int.from_bytes(blob[4:8], "little")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported container version {version}: {path}")
    header_len = int.from_bytes(blob[8:16], "little")
    header = json.loads(blob[16 : 16 + header_len].decode())
    payload = blob[16 + header_len : -32]

    config = header.get("config")
    stored_hash = header.get("meta", {}).get("config_hash")
    if config is not None and stored_hash is not None:
        if config_fingerprint(config) != stored_hash:
            raise CheckpointError(f"config hash mismatch: {path}")

    arrays: dict[str, np.ndarray] = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64)) if shape else 1
        start = entry["offset"]
        data = np.frombuffer(payload, dtype=_DTYPE, count=count, offset=start)
        arrays[entry["name"]] = data.reshape(shape).copy()
    return arrays, header

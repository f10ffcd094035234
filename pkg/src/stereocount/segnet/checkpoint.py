"""Versioned binary checkpoint container.

Layout: 8-byte magic, 4-byte little-endian header length, a UTF-8 JSON
header (architecture descriptor, dtype, array names/shapes and the SHA-256
of the payload), then the raw little-endian C-order array bytes in header
order.  Writing the same parameters always produces identical bytes.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .network import NetworkParams

MAGIC = b"SCCKPT01"
VERSION = 1


def _payload(params: NetworkParams, keys: list[str]) -> bytes:
    chunks = []
    for key in keys:
        arr = np.ascontiguousarray(params.arrays[key])
        chunks.append(arr.astype(arr.dtype.newbyteorder("<")).tobytes())
    return b"".join(chunks)


def save_checkpoint(path: str | Path, params: NetworkParams) -> str:
    """Write the checkpoint and return its payload SHA-256."""
    keys = sorted(params.arrays)
    dtype = str(params.arrays[keys[0]].dtype)
    payload = _payload(params, keys)
    digest = hashlib.sha256(payload).hexdigest()
    header = json.dumps(
        {
            "version": VERSION,
            "depth": params.depth,
            "base_channels": params.base_channels,
            "in_channels": params.in_channels,
            "dtype": dtype,
            "keys": keys,
            "shapes": {k: list(params.arrays[k].shape) for k in keys},
            "sha256": digest,
        },
        sort_keys=True,
        separators=(",", ":"),
    ).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(header).to_bytes(4, "little"))
        fh.write(header)
        fh.write(payload)
    return digest


def load_checkpoint(path: str | Path) -> NetworkParams:
    """Read a checkpoint, verifying magic, version and content hash."""
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise ValueError(f"not a checkpoint file: {path}")
    hlen = int.from_bytes(raw[8:12], "little")
    header = json.loads(raw[12 : 12 + hlen].decode())
    if header.get("version") != VERSION:
        raise ValueError(f"unsupported checkpoint version {header.get('version')}")
    payload = raw[12 + hlen :]
    if hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise ValueError(f"checkpoint corrupted (hash mismatch): {path}")
    dtype = np.dtype(header["dtype"])
    params = NetworkParams(header["depth"], header["base_channels"], header["in_channels"])
    offset = 0
    for key in header["keys"]:
        shape = tuple(header["shapes"][key])
        count = int(np.prod(shape))
        arr = np.frombuffer(
            payload, dtype=dtype.newbyteorder("<"), count=count, offset=offset
        ).astype(dtype).reshape(shape)
        params.arrays[key] = arr
        offset += count * dtype.itemsize
    return params

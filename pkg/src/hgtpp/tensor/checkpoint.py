"""Parameter checkpoint container.

Layout::

    b"HGTPP1\\n"                 magic + version
    <8-byte little-endian u64>   header length in bytes
    <header>                     UTF-8 JSON: metadata and one entry per tensor
                                 (name, shape, byte offset into the payload)
    <payload>                    little-endian float64 values, row-major

Offsets are relative to the start of the payload.
"""
import json
import struct

import numpy as np

MAGIC = b"HGTPP1\n"


class CheckpointError(ValueError):
    pass


def dumps(tensors, metadata=None):
    """Serialize an ordered mapping name -> array to bytes."""
    entries = []
    chunks = []
    offset = 0
    for name, value in tensors.items():
        arr = np.array(value, dtype="<f8", order="C")  # keeps 0-d shapes
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        raw = arr.tobytes()
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({"metadata": metadata or {}, "tensors": entries},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(header)) + header + b"".join(chunks)


def loads(blob):
    """Inverse of :func:`dumps`; returns (dict name -> array, metadata)."""
    if not blob.startswith(MAGIC):
        raise CheckpointError("not an HGTPP1 checkpoint (bad magic)")
    pos = len(MAGIC)
    if len(blob) < pos + 8:
        raise CheckpointError("truncated checkpoint header")
    (hlen,) = struct.unpack("<Q", blob[pos:pos + 8])
    pos += 8
    try:
        header = json.loads(blob[pos:pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from None
    payload = memoryview(blob)[pos + hlen:]
    tensors = {}
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        start = entry["offset"]
        end = start + 8 * count
        if end > len(payload):
            raise CheckpointError(f"payload too short for tensor {entry['name']!r}")
        arr = np.frombuffer(payload[start:end], dtype="<f8").astype(np.float64)
        tensors[entry["name"]] = arr.reshape(entry["shape"])
    return tensors, header["metadata"]


def save(path, tensors, metadata=None):
    with open(path, "wb") as fh:
        fh.write(dumps(tensors, metadata))


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())

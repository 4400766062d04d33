"""Binary container for named float64 arrays.

Layout: 8-byte magic, uint32 format version, uint64 header length, JSON
header (sorted keys), raw little-endian float64 payload. The header
records each array's name/shape/offset plus a sha256 of the payload,
verified on load. Writing the same arrays twice yields identical bytes.
"""

import hashlib
import json
import struct

import numpy as np

MAGIC = b"GEOFLOW1"
FORMAT_VERSION = 1


class ContainerError(ValueError):
    """Malformed, truncated or corrupted container file."""


def save_arrays(path, arrays, extra=None):
    """Write name -> ndarray (stored float64) plus an extra JSON dict."""
    manifest = []
    chunks = []
    offset = 0
    for name, arr in arrays.items():
        raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        manifest.append({"name": name, "shape": list(np.shape(arr)), "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    header = {
        "arrays": manifest,
        "content_hash": hashlib.sha256(payload).hexdigest(),
        "extra": extra or {},
    }
    hdr = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        f.write(struct.pack("<Q", len(hdr)))
        f.write(hdr)
        f.write(payload)


def load_arrays(path):
    """Read back (arrays dict, extra dict); verifies magic and hash."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:8] != MAGIC:
        raise ContainerError(f"{path}: bad magic {raw[:8]!r}")
    version = struct.unpack("<I", raw[8:12])[0]
    if version != FORMAT_VERSION:
        raise ContainerError(f"{path}: unsupported format version {version}")
    hdr_len = struct.unpack("<Q", raw[12:20])[0]
    try:
        header = json.loads(raw[20 : 20 + hdr_len])
    except json.JSONDecodeError as e:
        raise ContainerError(f"{path}: corrupt header: {e}") from e
    payload = raw[20 + hdr_len :]
    if hashlib.sha256(payload).hexdigest() != header["content_hash"]:
        raise ContainerError(f"{path}: payload hash mismatch")
    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype="<f8", count=n, offset=start)
        arrays[entry["name"]] = arr.reshape(shape).astype(np.float64)
    return arrays, header["extra"]

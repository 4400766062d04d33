"""16-bit binary PGM/PPM serialization for pixel maps.

Values are stored as big-endian uint16 with maxval 65535 (netpbm P5/P6).
Arrays are float maps in [0,1]; quantization rounds to the nearest code.
The files carry no timestamps, so identical arrays serialize to identical
bytes.
"""

import numpy as np

MAXVAL = 65535


def _quantize(arr):
    return np.round(np.clip(np.asarray(arr, dtype=np.float64), 0.0, 1.0) * MAXVAL).astype(">u2")


def write_pgm16(path, arr):
    """Write a (H, W) map in [0,1] as 16-bit binary PGM."""
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise ValueError(f"PGM wants (H, W), got {arr.shape}")
    h, w = arr.shape
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n%d\n" % (w, h, MAXVAL))
        f.write(_quantize(arr).tobytes())


def write_ppm16(path, arr):
    """Write a (H, W, 3) map in [0,1] as 16-bit binary PPM."""
    arr = np.asarray(arr)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"PPM wants (H, W, 3), got {arr.shape}")
    h, w, _ = arr.shape
    with open(path, "wb") as f:
        f.write(b"P6\n%d %d\n%d\n" % (w, h, MAXVAL))
        f.write(_quantize(arr).tobytes())


def read_pnm16(path):
    """Read a 16-bit binary PGM/PPM back to a float map in [0,1]."""
    with open(path, "rb") as f:
        raw = f.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":  # comment line
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    magic, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"unsupported PNM magic {magic!r} in {path}")
    if maxval != MAXVAL:
        raise ValueError(f"expected 16-bit maxval {MAXVAL}, got {maxval} in {path}")
    channels = 3 if magic == b"P6" else 1
    count = w * h * channels
    data = np.frombuffer(raw, dtype=">u2", count=count, offset=pos).astype(np.float64) / MAXVAL
    if channels == 1:
        return data.reshape(h, w)
    return data.reshape(h, w, 3)

"""Fixed pixel<->latent codecs and the pack/unpack rearrangements.

The latent space is defined by a *fixed* invertible (or near-invertible)
codec rather than a learned autoencoder: ``identity`` maps [0,1] pixels
affinely onto [-1,1], ``avgpool2`` additionally 2x2 mean-pools on encode
and nearest-neighbor upsamples on decode. Pack moves every non-overlapping
2x2 latent patch into the channel dimension; unpack inverts it exactly.

Pack channel order (pinned convention, tests depend on it): for output
cell (i, j) the 4C channels are ordered patch-position-major, row-major
within the patch - positions (2i,2j), (2i,2j+1), (2i+1,2j), (2i+1,2j+1) -
each contributing C consecutive input channels.
"""

from dataclasses import dataclass

import numpy as np

CODEC_KINDS = ("identity", "avgpool2")


@dataclass(frozen=True)
class CodecSpec:
    """Which fixed codec defines the latent space."""

    kind: str = "identity"

    def __post_init__(self):
        if self.kind not in CODEC_KINDS:
            raise ValueError(f"unknown codec kind {self.kind!r}; expected one of {CODEC_KINDS}")

    @property
    def downsample(self):
        return 2 if self.kind == "avgpool2" else 1

    def latent_size(self, h, w):
        f = self.downsample
        if h % f or w % f:
            raise ValueError(f"resolution {h}x{w} not divisible by codec factor {f}")
        return h // f, w // f


def _check_even(h, w, what):
    if h % 2 or w % 2:
        raise ValueError(f"{what} requires even spatial dims, got {h}x{w}")


def encode(x, spec=CodecSpec()):
    """Pixel map (H, W, 3) in [0,1] -> latent in [-1,1]."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != 3:
        raise ValueError(f"encode expects (H, W, 3), got {x.shape}")
    _check_even(x.shape[0], x.shape[1], "encode")
    if spec.kind == "avgpool2":
        h, w, c = x.shape
        x = x.reshape(h // 2, 2, w // 2, 2, c).mean(axis=(1, 3))
    return 2.0 * x - 1.0


def decode(z, spec=CodecSpec()):
    """Latent -> pixel map in [0,1], clamped."""
    z = np.asarray(z, dtype=np.float64)
    x = (z + 1.0) / 2.0
    if spec.kind == "avgpool2":
        x = np.repeat(np.repeat(x, 2, axis=0), 2, axis=1)
    return np.clip(x, 0.0, 1.0)


def encode_scalar(m, spec=CodecSpec()):
    """Scalar map (H, W) in [0,1] -> 3-channel latent (replicated)."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"encode_scalar expects (H, W), got {m.shape}")
    return encode(np.repeat(m[:, :, None], 3, axis=2), spec)


def decode_scalar(z, spec=CodecSpec()):
    """Latent -> scalar map in [0,1] (channel average of the decode)."""
    return decode(z, spec).mean(axis=2)


# ---------------------------------------------------------------------------
# pack / unpack


def pack(z):
    """(H, W, C) -> (H/2, W/2, 4C); pure rearrangement, no arithmetic."""
    z = np.asarray(z)
    h, w, c = z.shape
    _check_even(h, w, "pack")
    return (
        z.reshape(h // 2, 2, w // 2, 2, c)
        .transpose(0, 2, 1, 3, 4)
        .reshape(h // 2, w // 2, 4 * c)
    )


def unpack(z):
    """(H/2, W/2, 4C) -> (H, W, C); exact inverse of pack."""
    z = np.asarray(z)
    hh, wh, c4 = z.shape
    if c4 % 4:
        raise ValueError(f"unpack requires channels divisible by 4, got {c4}")
    c = c4 // 4
    return (
        z.reshape(hh, wh, 2, 2, c)
        .transpose(0, 2, 1, 3, 4)
        .reshape(2 * hh, 2 * wh, c)
    )


def pack_indices(h, w, c):
    """Flat source index map of pack: packed.flat[i] = z.flat[idx[i]]."""
    return pack(np.arange(h * w * c).reshape(h, w, c)).reshape(-1)


def unpack_indices(h, w, c):
    """Flat source index map of unpack for a (H/2, W/2, 4C) input."""
    return unpack(np.arange(h * w * c).reshape(h // 2, w // 2, 4 * c)).reshape(-1)

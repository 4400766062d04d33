"""Trainable velocity network with time conditioning and the local
continuity head.

The trunk is a stack of 3x3 conv + GELU blocks operating on packed
latents: pack -> concat sinusoidal time channels -> input projection ->
blocks -> output projection -> unpack -> optional local continuity module
(two 3x3 convs with a GELU between, applied after unpack to smooth the
2x2 patch seams the parameter-free unpack would otherwise leave).

A variant without pack/unpack runs the same trunk at full resolution with
the projections resized accordingly.
"""

import zlib
from dataclasses import dataclass

import numpy as np

from . import codec
from . import numerics as nm
from .numerics import Tensor


@dataclass(frozen=True)
class NetConfig:
    latent_channels: int = 3
    blocks: int = 4
    hidden: int = 32
    time_dim: int = 8
    conditioned: bool = False  # channel-concat conditioning doubles the input channels
    use_lcm: bool = True
    use_pack: bool = True

    def __post_init__(self):
        if self.time_dim % 2:
            raise ValueError("time_dim must be even (sin/cos pairs)")
        if min(self.latent_channels, self.blocks, self.hidden, self.time_dim) < 1:
            raise ValueError("net dimensions must be positive")

    @property
    def input_channels(self):
        """Channels of the latent map handed to forward (C, or 2C conditioned)."""
        return self.latent_channels * (2 if self.conditioned else 1)

    @property
    def trunk_in(self):
        factor = 4 if self.use_pack else 1
        return factor * self.input_channels + self.time_dim

    @property
    def trunk_out(self):
        factor = 4 if self.use_pack else 1
        return factor * self.latent_channels


class VelocityNet:
    """Parameter container; all arithmetic lives in the functional ops."""

    def __init__(self, config, params, seed):
        self.config = config
        self.params = params  # name -> Tensor, insertion order fixed by _param_shapes
        self.seed = seed

    def parameters(self):
        return list(self.params.values())

    @property
    def param_count(self):
        return sum(p.size for p in self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def state_arrays(self):
        return {name: p.data for name, p in self.params.items()}


def _param_shapes(cfg):
    shapes = {
        "proj_in.kernel": (3, 3, cfg.trunk_in, cfg.hidden),
        "proj_in.bias": (cfg.hidden,),
    }
    for b in range(cfg.blocks):
        shapes[f"block{b}.kernel"] = (3, 3, cfg.hidden, cfg.hidden)
        shapes[f"block{b}.bias"] = (cfg.hidden,)
    shapes["proj_out.kernel"] = (3, 3, cfg.hidden, cfg.trunk_out)
    shapes["proj_out.bias"] = (cfg.trunk_out,)
    if cfg.use_lcm:
        c = cfg.latent_channels
        for name in ("lcm1", "lcm2"):
            shapes[f"{name}.kernel"] = (3, 3, c, c)
            shapes[f"{name}.bias"] = (c,)
    return shapes


def init_params(seed, config):
    """Kaiming-style fan-in uniform kernels, zero biases, reproducible.

    Each parameter draws from its own named substream, so architectures
    sharing a parameter name and shape get identical values from the same
    seed regardless of which other parameters exist.
    """
    params = {}
    for name, shape in _param_shapes(config).items():
        if name.endswith(".bias"):
            params[name] = Tensor(np.zeros(shape), requires_grad=True)
            continue
        fan_in = shape[0] * shape[1] * shape[2]
        bound = np.sqrt(6.0 / fan_in)  # uniform bound giving std sqrt(2/fan_in)
        rng = np.random.default_rng([seed, zlib.crc32(name.encode())])
        params[name] = Tensor(rng.uniform(-bound, bound, shape), requires_grad=True)
    return VelocityNet(config, params, seed)


def time_features(t, dim):
    """Sinusoidal features of t at geometric frequencies pi * 2**k."""
    k = np.arange(dim // 2)
    angles = np.pi * (2.0 ** k) * t
    feats = np.empty(dim)
    feats[0::2] = np.sin(angles)
    feats[1::2] = np.cos(angles)
    return feats


_index_cache = {}


def _cached_indices(kind, h, w, c):
    key = (kind, h, w, c)
    if key not in _index_cache:
        fn = codec.pack_indices if kind == "pack" else codec.unpack_indices
        _index_cache[key] = fn(h, w, c)
    return _index_cache[key]


def forward(net, z_in, t):
    """Velocity/clean-data prediction for latent input z_in at time t.

    Returns a graph Tensor with the annotation latent's shape
    (H, W, latent_channels); differentiable w.r.t. parameters and input.
    """
    cfg = net.config
    x = z_in if isinstance(z_in, Tensor) else Tensor(z_in)
    if x.data.ndim != 3 or x.shape[2] != cfg.input_channels:
        raise nm.ShapeError(
            f"forward expects (H, W, {cfg.input_channels}) input, got {x.shape}"
        )
    h, w = x.shape[0], x.shape[1]
    p = net.params

    if cfg.use_pack:
        if h % 2 or w % 2:
            raise nm.ShapeError(f"pack requires even spatial dims, got {h}x{w}")
        hp, wp = h // 2, w // 2
        idx = _cached_indices("pack", h, w, cfg.input_channels)
        hid = nm.permute(x, idx, (hp, wp, 4 * cfg.input_channels))
    else:
        hp, wp = h, w
        hid = x

    tmap = Tensor(np.broadcast_to(time_features(t, cfg.time_dim), (hp, wp, cfg.time_dim)))
    hid = nm.concat_channels(hid, tmap)
    hid = nm.conv2d(hid, p["proj_in.kernel"], p["proj_in.bias"])
    for b in range(cfg.blocks):
        hid = nm.gelu(nm.conv2d(hid, p[f"block{b}.kernel"], p[f"block{b}.bias"]))
    hid = nm.conv2d(hid, p["proj_out.kernel"], p["proj_out.bias"])

    if cfg.use_pack:
        idx = _cached_indices("unpack", h, w, cfg.latent_channels)
        hid = nm.permute(hid, idx, (h, w, cfg.latent_channels))
    if cfg.use_lcm:
        hid = apply_lcm(hid, p["lcm1.kernel"], p["lcm1.bias"], p["lcm2.kernel"], p["lcm2.bias"])
    return hid


def apply_lcm(h, kernel1, bias1, kernel2, bias2):
    """Local continuity head: conv 3x3 -> GELU -> conv 3x3, same shape."""
    return nm.conv2d(nm.gelu(nm.conv2d(h, kernel1, bias1)), kernel2, bias2)

"""Checkpoint persistence on top of the array container.

A checkpoint holds the parameter tensors, the Adam moment estimates, the
step counter and a full config snapshot, so training resumes bit-exactly
from the saved step.
"""

from dataclasses import dataclass

import numpy as np

from .. import backbone, flows
from ..container import ContainerError, load_arrays, save_arrays
from ..numerics import Tensor


class CheckpointError(ValueError):
    """Missing or inconsistent checkpoint."""


def save_checkpoint(path, net, adam, step, config_dict, extra=None):
    arrays = {}
    for name, p in net.params.items():
        arrays[f"param/{name}"] = p.data
    if adam is not None:
        for name in net.params:
            arrays[f"adam.m/{name}"] = adam.m[name]
            arrays[f"adam.v/{name}"] = adam.v[name]
    meta = {
        "kind": "checkpoint",
        "step": int(step),
        "adam_t": int(adam.t) if adam is not None else 0,
        "config": config_dict,
        "net_seed": net.seed,
        "extra": extra or {},
    }
    save_arrays(path, arrays, extra=meta)


@dataclass
class LoadedCheckpoint:
    net: "backbone.VelocityNet"
    variant: "flows.FlowVariant"
    config: dict
    step: int
    adam_t: int
    adam_m: dict
    adam_v: dict
    extra: dict

    @property
    def schedule(self):
        return flows.TimeSchedule(self.variant.train_steps, self.config.get("inference_steps"))


def load_checkpoint(path):
    try:
        arrays, meta = load_arrays(path)
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}") from None
    except ContainerError as e:
        raise CheckpointError(str(e)) from e
    if meta.get("kind") != "checkpoint":
        raise CheckpointError(f"{path} is not a checkpoint container (kind={meta.get('kind')!r})")
    cfg = meta["config"]
    variant = flows.FlowVariant.make(cfg["variant"], cfg.get("train_steps_t"))
    net_config = backbone.NetConfig(
        latent_channels=cfg.get("latent_channels", 3),
        blocks=cfg["blocks"],
        hidden=cfg["hidden"],
        time_dim=cfg["time_dim"],
        conditioned=variant.conditioned,
        use_lcm=cfg["use_lcm"],
        use_pack=cfg["use_pack"],
    )
    params = {}
    for key, arr in arrays.items():
        if key.startswith("param/"):
            params[key[len("param/"):]] = Tensor(arr.copy(), requires_grad=True)
    net = backbone.VelocityNet(net_config, params, seed=meta.get("net_seed"))
    expected = set(backbone._param_shapes(net_config))
    if set(params) != expected:
        raise CheckpointError(f"{path}: parameter set does not match its net config")
    adam_m = {k[len("adam.m/"):]: arrays[k].copy() for k in arrays if k.startswith("adam.m/")}
    adam_v = {k[len("adam.v/"):]: arrays[k].copy() for k in arrays if k.startswith("adam.v/")}
    return LoadedCheckpoint(
        net=net,
        variant=variant,
        config=cfg,
        step=int(meta["step"]),
        adam_t=int(meta.get("adam_t", 0)),
        adam_m=adam_m,
        adam_v=adam_v,
        extra=meta.get("extra", {}),
    )


class Adam:
    """Standard Adam with bias correction over named parameter tensors."""

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params  # name -> Tensor
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.t = 0

    def load_state(self, m, v, t):
        for name in self.params:
            self.m[name] = m[name].copy()
            self.v[name] = v[name].copy()
        self.t = int(t)

    def step(self, grad_scale=1.0):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad * grad_scale
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[name] / bc1
            v_hat = self.v[name] / bc2
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

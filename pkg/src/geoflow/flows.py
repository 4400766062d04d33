"""Flow formulations: time grids, endpoint assembly, targets, losses and
the Euler sampler.

All variants transport along the straight-line path

    z_t = t * z1 + (1 - t) * z0,        target velocity v = z1 - z0,

trained on the discrete grid {t_i = i/T}. Sampling integrates the learned
field backward from t=1 to t=0 with the first-order rule

    z_next = z_curr - eta * f(z_curr, t_curr).

The four formulations differ only in their endpoints, parameterization
and conditioning:

  stochastic_da      noise -> annotation, velocity target, image-conditioned
  deterministic_da   image -> annotation, velocity target, unconditioned
  core_predictor     image -> annotation, clean-data target, single step (T=1)
  sharpener          coarse prediction -> fine annotation, velocity, T=10
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import backbone
from . import numerics as nm


class ConfigError(ValueError):
    """Variant/configuration mismatch."""


class VariantKind(str, Enum):
    STOCHASTIC_DA = "stochastic_da"
    DETERMINISTIC_DA = "deterministic_da"
    CORE_PREDICTOR = "core_predictor"
    SHARPENER = "sharpener"


@dataclass(frozen=True)
class TimeSchedule:
    """Training grid {i/T} plus the inference step count."""

    steps: int
    inference_steps: int | None = None

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("schedule needs at least one step")
        t_inf = self.effective_inference_steps
        if t_inf < 1 or t_inf > max(self.steps, 1):
            raise ValueError(f"inference steps {t_inf} not in [1, {self.steps}]")

    @property
    def grid(self):
        return np.arange(1, self.steps + 1) / self.steps

    @property
    def effective_inference_steps(self):
        return self.inference_steps if self.inference_steps is not None else min(self.steps, 50)

    def inference_times(self, t_inf=None):
        """Descending times 1 -> 0; step sizes are consecutive differences."""
        n = t_inf if t_inf is not None else self.effective_inference_steps
        return np.linspace(1.0, 0.0, n + 1)

    def draw_t(self, rng):
        """Uniform draw from the training grid."""
        if self.steps == 1:
            return 1.0
        return float(self.grid[rng.integers(0, self.steps)])


# (source p1, target p0, parameterization, conditioned, fixed T or None)
_VARIANT_TABLE = {
    VariantKind.STOCHASTIC_DA: ("gaussian_noise", "annotation_latent", "velocity", True, None),
    VariantKind.DETERMINISTIC_DA: ("image_latent", "annotation_latent", "velocity", False, None),
    VariantKind.CORE_PREDICTOR: ("image_latent", "annotation_latent", "clean_data", False, 1),
    VariantKind.SHARPENER: ("coarse_prediction", "fine_annotation", "velocity", False, 10),
}


@dataclass(frozen=True)
class FlowVariant:
    kind: VariantKind
    source: str
    target: str
    parameterization: str
    conditioned: bool
    train_steps: int

    @staticmethod
    def make(kind, train_steps=None):
        kind = VariantKind(kind)
        source, target, param, cond, fixed_t = _VARIANT_TABLE[kind]
        if fixed_t is not None:
            if train_steps not in (None, fixed_t):
                raise ConfigError(f"{kind.value} fixes T={fixed_t}, got {train_steps}")
            train_steps = fixed_t
        elif train_steps is None:
            train_steps = 50
        return FlowVariant(kind, source, target, param, cond, train_steps)

    def schedule(self, inference_steps=None):
        return TimeSchedule(self.train_steps, inference_steps)


@dataclass
class FlowSample:
    """One interpolated training point with its regression target."""

    z0: np.ndarray
    z1: np.ndarray
    t: float
    z_t: np.ndarray
    target: np.ndarray
    conditioning: np.ndarray | None = None

    def network_input(self):
        if self.conditioning is None:
            return self.z_t
        return np.concatenate([self.z_t, self.conditioning], axis=2)


def interpolate(z0, z1, t):
    """Straight-line point t*z1 + (1-t)*z0; endpoints are bit-exact."""
    z0 = np.asarray(z0, dtype=np.float64)
    z1 = np.asarray(z1, dtype=np.float64)
    if z0.shape != z1.shape:
        raise nm.ShapeError(f"interpolate shapes differ: {z0.shape} vs {z1.shape}")
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    if t == 0.0:
        return z0.copy()
    if t == 1.0:
        return z1.copy()
    return t * z1 + (1.0 - t) * z0


def make_training_sample(variant, z_x, z_y, schedule, rng):
    """Assemble (z_t, t, target, conditioning) for one training item.

    z_x carries the flow source latent (image latent, or the coarse
    prediction for the sharpener); z_y the target annotation latent.
    For stochastic_da the draw order is pinned: t first, then the noise.
    """
    if z_x.shape != z_y.shape:
        raise nm.ShapeError(f"endpoint shapes differ: {z_x.shape} vs {z_y.shape}")
    if schedule.steps != variant.train_steps:
        raise ConfigError(
            f"schedule T={schedule.steps} != variant {variant.kind.value} T={variant.train_steps}"
        )

    if variant.kind is VariantKind.CORE_PREDICTOR:
        # t=1 always: the input latent *is* the image latent.
        z1, z0, t = z_x, z_y, 1.0
        z_t = z1.copy()
        return FlowSample(z0=z0, z1=z1, t=t, z_t=z_t, target=z0.copy())

    t = schedule.draw_t(rng)
    if variant.kind is VariantKind.STOCHASTIC_DA:
        z1 = rng.standard_normal(z_y.shape)
        z0 = z_y
        cond = z_x
    else:  # deterministic_da, sharpener
        z1, z0, cond = z_x, z_y, None
    z_t = interpolate(z0, z1, t)
    target = z1 - z0 if variant.parameterization == "velocity" else z0.copy()
    return FlowSample(z0=z0, z1=z1, t=t, z_t=z_t, target=target, conditioning=cond)


def loss(variant, net_output, sample):
    """Squared-error objective against the sample's target; graph scalar."""
    if net_output.shape != sample.target.shape:
        raise nm.ShapeError(
            f"net output {net_output.shape} vs target {sample.target.shape}"
        )
    return nm.mse(net_output, nm.Tensor(sample.target))


def _velocity(net, z_in, t):
    """Evaluate a velocity model: a VelocityNet, or any (z, t) -> array
    callable (used to inject analytic fields and oracles)."""
    if isinstance(net, backbone.VelocityNet):
        return backbone.forward(net, z_in, t).data
    return np.asarray(net(z_in, t), dtype=np.float64)


def euler_sample(net, z_start, schedule, conditioning=None, t_inf=None):
    """Integrate the learned field from t=1 to t=0 with Euler steps.

    Conditioning, when given, is constant across steps (it is the encoded
    input image) and is concatenated onto the state at every call.
    """
    times = schedule.inference_times(t_inf)
    z = np.array(z_start, dtype=np.float64)
    for k in range(len(times) - 1):
        t_curr = float(times[k])
        eta = float(times[k] - times[k + 1])
        z_in = z if conditioning is None else np.concatenate([z, conditioning], axis=2)
        z = z - eta * _velocity(net, z_in, t_curr)
    return z


def predict_clean(net, z_x, variant):
    """Single-step inference: the clean annotation estimate from z_x.

    clean_data nets return the network output directly; single-step
    velocity (residual) nets return z_x - f(z_x, 1). Multi-step velocity
    variants have no single-step rule and are rejected.
    """
    if variant.parameterization == "clean_data":
        return _velocity(net, z_x, 1.0)
    if variant.train_steps != 1:
        raise ConfigError(
            f"single-step inference needs T=1, variant {variant.kind.value} has T={variant.train_steps}"
        )
    return z_x - _velocity(net, z_x, 1.0)

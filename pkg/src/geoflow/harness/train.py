"""Training loops for the core predictor variants and the detail sharpener.

Every source of randomness is a stateless per-step stream derived from
the config seeds, so runs are bit-reproducible and a resumed run is
indistinguishable from an uninterrupted one.
"""

import csv
import math
from pathlib import Path

import numpy as np

from .. import backbone, codec, flows, scenes
from ..numerics import backward
from .checkpoint import Adam, load_checkpoint, save_checkpoint
from .config import ConfigError


class TrainAbortError(RuntimeError):
    """Training hit a non-finite loss; carries reproduction info."""

    def __init__(self, message, detail):
        super().__init__(message)
        self.detail = detail


def net_config_for(config, variant):
    return backbone.NetConfig(
        latent_channels=3,
        blocks=config.blocks,
        hidden=config.hidden,
        time_dim=config.time_dim,
        conditioned=variant.conditioned,
        use_lcm=config.use_lcm,
        use_pack=config.use_pack,
    )


def _prepare_latents(config, dataset=None):
    """Encode the training split into (z_x, z_y) pairs; returns
    (pairs, pixel resolution). `dataset` may inject preloaded samples."""
    if dataset is None:
        dataset = scenes.load_split(config.dataset, limit=config.limit_samples)
    elif config.limit_samples is not None:
        dataset = dataset[: config.limit_samples]
    spec = codec.CodecSpec(config.codec_kind)
    pairs = []
    resolution = None
    for _, sample in dataset:
        z_x, z_y, _ = scenes.to_latents(sample, config.task, spec)
        pairs.append((z_x, z_y))
        resolution = sample.image.shape[0]
    return pairs, resolution


def train(config, resume=None, dataset=None):
    """Train one flow variant; returns the final checkpoint path.

    resume: optional checkpoint path to continue from (bit-exact with an
    uninterrupted run of the same config).
    """
    variant = flows.FlowVariant.make(config.variant, config.train_steps_t)
    pairs, resolution = _prepare_latents(config, dataset)
    extra = {"resolution": resolution, "latent_hw": list(pairs[0][0].shape[:2])}
    return _train_loop(config, variant, pairs, extra, resume)


def train_sharpener(core_ckpt_path, config, pairs_path=None, dataset=None):
    """Train the coarse->fine refinement flow on core-predictor outputs.

    Coarse/fine latent pairs are generated with the trained core predictor
    (and persisted next to the checkpoint) unless an existing pairs file
    is supplied.
    """
    if config.variant != "sharpener":
        raise ConfigError(f"sharpener training requires variant='sharpener', got {config.variant!r}")
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if pairs_path is not None:
        if not Path(pairs_path).exists():
            raise FileNotFoundError(f"coarse-pair set not found: {pairs_path}")
        stored = scenes.load_coarse_pairs(pairs_path)
    else:
        core = load_checkpoint(core_ckpt_path)
        if core.variant.kind is flows.VariantKind.SHARPENER:
            raise ConfigError("core checkpoint is itself a sharpener")
        split = scenes.load_split(config.dataset, limit=config.limit_samples) if dataset is None \
            else (dataset if config.limit_samples is None else dataset[: config.limit_samples])
        spec = codec.CodecSpec(config.codec_kind)
        stored = scenes.make_coarse_pairs(
            core.net, core.variant, split, config.task, spec,
            out_path=out_dir / "coarse_pairs.bin",
        )
    pairs = [(z_c, z_f) for _, z_c, z_f in stored]
    variant = flows.FlowVariant.make("sharpener")
    latent_hw = list(pairs[0][0].shape[:2])
    factor = codec.CodecSpec(config.codec_kind).downsample
    extra = {"resolution": latent_hw[0] * factor, "latent_hw": latent_hw}
    return _train_loop(config, variant, pairs, extra, resume=None)


# run-extent knobs may change across a resume; everything else defines the run
_MUTABLE_FIELDS = {"steps", "out_dir", "log_every", "checkpoint_every", "stop_loss"}


def _identity_fields(snapshot):
    return {k: v for k, v in snapshot.items() if k not in _MUTABLE_FIELDS}


def _train_loop(config, variant, pairs, ckpt_extra, resume=None):
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    schedule = variant.schedule(config.inference_steps)
    n = len(pairs)

    if resume is not None:
        state = load_checkpoint(resume)
        if _identity_fields(state.config) != _identity_fields(config.snapshot()):
            raise ConfigError("resume checkpoint was written by a different config")
        net = state.net
        adam = Adam(net.params, config.learning_rate, config.beta1, config.beta2, config.adam_eps)
        adam.load_state(state.adam_m, state.adam_v, state.adam_t)
        start_step = state.step
    else:
        net = backbone.init_params(config.params_seed, net_config_for(config, variant))
        adam = Adam(net.params, config.learning_rate, config.beta1, config.beta2, config.adam_eps)
        start_step = 0

    history = []
    final_path = out_dir / "checkpoint.ckpt"
    for step in range(start_step, config.steps):
        batch_rng = np.random.default_rng([config.data_seed, step])
        indices = batch_rng.integers(0, n, size=config.batch_size)
        net.zero_grad()
        losses = []
        for j, i in enumerate(indices):
            item_rng = np.random.default_rng([config.noise_seed, step, j])
            z_x, z_y = pairs[i]
            sample = flows.make_training_sample(variant, z_x, z_y, schedule, item_rng)
            out = backbone.forward(net, sample.network_input(), sample.t)
            item_loss = flows.loss(variant, out, sample)
            backward(item_loss)
            losses.append(float(item_loss.data))
        mean_loss = float(np.mean(losses))
        if not math.isfinite(mean_loss):
            raise TrainAbortError(
                f"non-finite loss at step {step}",
                {
                    "step": step,
                    "data_seed": config.data_seed,
                    "noise_seed": config.noise_seed,
                    "batch_indices": [int(i) for i in indices],
                },
            )
        adam.step(grad_scale=1.0 / config.batch_size)
        history.append((step, mean_loss))
        if config.log_every and (step % config.log_every == 0 or step == config.steps - 1):
            print(f"[train {variant.kind.value}] step {step} loss {mean_loss:.6e}", flush=True)
        if config.checkpoint_every and (step + 1) % config.checkpoint_every == 0:
            save_checkpoint(out_dir / f"ckpt_{step + 1:06d}.ckpt", net, adam, step + 1,
                            config.snapshot(), extra=ckpt_extra)
        if config.stop_loss is not None and mean_loss < config.stop_loss:
            break

    final_step = history[-1][0] + 1 if history else start_step
    save_checkpoint(final_path, net, adam, final_step, config.snapshot(), extra=ckpt_extra)
    with open(out_dir / "training_log.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "loss"])
        for step, value in history:
            w.writerow([step, repr(value)])
    return final_path

"""Two-stage inference and the evaluation/spectrum report paths.

Inference: encode -> single-step core prediction -> optional multi-step
sharpener refinement (Euler, at most 10 steps) -> decode -> denormalize
with the recorded metadata. Reports write CSV/JSON plus a rendered
matplotlib figure alongside.
"""

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .. import codec, flows, metrics, pnm, scenes
from .checkpoint import load_checkpoint
from .config import ConfigError
from . import figures

SHARPENER_MAX_STEPS = 10


class Predictor:
    """A loaded core checkpoint (plus optional sharpener) ready to run."""

    def __init__(self, core_ckpt, sharpener_ckpt=None, refine_steps=None, noise_seed=0):
        self.core = load_checkpoint(core_ckpt)
        if self.core.variant.kind is flows.VariantKind.SHARPENER:
            raise ConfigError("a sharpener checkpoint cannot serve as the core predictor")
        self.spec = codec.CodecSpec(self.core.config.get("codec_kind", "identity"))
        self.task = self.core.config.get("task", "depth")
        self.resolution = self.core.extra.get("resolution")
        self.noise_seed = noise_seed

        if refine_steps == 0:  # documented alias for "no refinement"
            sharpener_ckpt = None
            refine_steps = None
        self.sharpener = None
        self.refine_steps = None
        if sharpener_ckpt is not None:
            self.sharpener = load_checkpoint(sharpener_ckpt)
            if self.sharpener.variant.kind is not flows.VariantKind.SHARPENER:
                raise ConfigError("refinement checkpoint must be a sharpener")
            limit = min(SHARPENER_MAX_STEPS, self.sharpener.variant.train_steps)
            self.refine_steps = limit if refine_steps is None else int(refine_steps)
            if not 1 <= self.refine_steps <= limit:
                raise ConfigError(f"refine steps must lie in [1, {limit}], got {self.refine_steps}")

    def predict_latent(self, z_x, sample_key=0):
        """Coarse (and optionally refined) annotation latent for one image latent."""
        core, variant = self.core, self.core.variant
        if variant.parameterization == "clean_data" or variant.train_steps == 1:
            z = flows.predict_clean(core.net, z_x, variant)
        elif variant.kind is flows.VariantKind.STOCHASTIC_DA:
            rng = np.random.default_rng([self.noise_seed, sample_key])
            eps = rng.standard_normal(z_x.shape)
            z = flows.euler_sample(core.net, eps, core.schedule, conditioning=z_x)
        else:
            z = flows.euler_sample(core.net, z_x, core.schedule)
        if self.sharpener is not None:
            z = flows.euler_sample(self.sharpener.net, z, self.sharpener.schedule,
                                   t_inf=self.refine_steps)
        return z

    def predict_map(self, image, sample_key=0):
        """Pixel image in [0,1] -> decoded prediction map in [0,1]."""
        h, w = image.shape[:2]
        if self.resolution is not None and (h != self.resolution or w != self.resolution):
            raise ConfigError(
                f"image is {h}x{w} but the checkpoint was trained at {self.resolution}"
            )
        z_x = codec.encode(image, self.spec)
        z = self.predict_latent(z_x, sample_key)
        if self.task == "depth":
            return codec.decode_scalar(z, self.spec)
        return codec.decode(z, self.spec)


def infer(core_ckpt, image_path, out_dir, sharpener_ckpt=None, refine_steps=None, noise_seed=0):
    """Predict for one image file (or every sample under a split directory).

    Writes <id>.pgm16 (depth) or <id>.ppm16 (normals) plus <id>.json with
    the normalization metadata and a content hash of the prediction bytes.
    """
    predictor = Predictor(core_ckpt, sharpener_ckpt, refine_steps, noise_seed)
    image_path = Path(image_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if image_path.is_dir():
        written = []
        for i, d in enumerate(scenes.list_sample_dirs(image_path)):
            written.append(_infer_one(predictor, d / "image.ppm", out_dir, sample_key=i))
        return written
    return [_infer_one(predictor, image_path, out_dir, sample_key=0)]


def _infer_one(predictor, image_file, out_dir, sample_key):
    image_file = Path(image_file)
    if not image_file.exists():
        raise FileNotFoundError(f"image not found: {image_file}")
    image = pnm.read_pnm16(image_file)
    pred = predictor.predict_map(image, sample_key)

    # sample id: the parent directory when this is a dataset sample
    meta_path = image_file.parent / "meta.json"
    sample_id = image_file.parent.name if meta_path.exists() else image_file.stem
    norm = {}
    if meta_path.exists():
        sample_meta = json.loads(meta_path.read_text())
        norm = {k: sample_meta[k] for k in ("disparity_min", "disparity_max") if k in sample_meta}

    if predictor.task == "depth":
        out_path = Path(out_dir) / f"{sample_id}.pgm16"
        pnm.write_pgm16(out_path, pred)
    else:
        out_path = Path(out_dir) / f"{sample_id}.ppm16"
        pnm.write_ppm16(out_path, pred)
    meta = {
        "id": sample_id,
        "task": predictor.task,
        "codec": predictor.spec.kind,
        "refined": predictor.sharpener is not None,
        "refine_steps": predictor.refine_steps,
        "normalization": norm,
        "content_hash": hashlib.sha256(out_path.read_bytes()).hexdigest(),
    }
    out_path.with_suffix(".json").write_text(json.dumps(meta, sort_keys=True, indent=1))
    return out_path


# ---------------------------------------------------------------------------
# evaluation


def _prediction_ids(pred_dir, task):
    ext = ".pgm16" if task == "depth" else ".ppm16"
    return {p.stem: p for p in Path(pred_dir).glob(f"*{ext}")}


def evaluate(pred_dir, gt_dir, task, out_prefix=None):
    """Align + score every prediction against its ground-truth sample.

    Sample ids must match exactly between the two directories; mismatches
    are listed and the evaluation aborts. Returns a MetricsReport (and
    writes CSV/JSON/figure when out_prefix is given).
    """
    gt_dirs = {d.name: d for d in scenes.list_sample_dirs(gt_dir)}
    preds = _prediction_ids(pred_dir, task)
    missing = sorted(set(gt_dirs) - set(preds))
    extra = sorted(set(preds) - set(gt_dirs))
    if missing or extra:
        raise ValueError(f"prediction/gt id mismatch: missing={missing[:10]} extra={extra[:10]}")

    report = metrics.MetricsReport(task=task, method=str(pred_dir), dataset=str(gt_dir))
    for sid in sorted(gt_dirs):
        gt = scenes.load_sample(gt_dirs[sid])
        pred = pnm.read_pnm16(preds[sid])
        if task == "depth":
            meta_file = preds[sid].with_suffix(".json")
            if meta_file.exists():
                norm = json.loads(meta_file.read_text()).get("normalization", {})
                if "disparity_min" in norm:
                    pred = scenes.denormalize_disparity(
                        pred, norm["disparity_min"], norm["disparity_max"])
            try:
                aligned = metrics.align(pred, gt.disparity, gt.mask)
            except metrics.AlignmentError as e:
                report.failed.append((sid, str(e)))
                continue
            report.add_row(
                sid,
                absrel=metrics.absrel(aligned.values, gt.disparity, gt.mask),
                delta1=metrics.delta1(aligned.values, gt.disparity, gt.mask),
            )
        else:
            pred_n = pred * 2.0 - 1.0
            mean_deg, pct = metrics.angular_error(pred_n, gt.normal, gt.mask)
            report.add_row(sid, mean_angular=mean_deg, pct_11_25=pct)

    if out_prefix is not None:
        out_prefix = Path(out_prefix)
        out_prefix.parent.mkdir(parents=True, exist_ok=True)
        report.write_csv(out_prefix.with_suffix(".csv"))
        report.write_json(out_prefix.with_suffix(".json"))
        figures.eval_figure(report, out_prefix.with_suffix(".png"))
    return report


# ---------------------------------------------------------------------------
# spectral report


def _scalar_map_for_spectrum(directory, sid):
    directory = Path(directory)
    sample_dir = directory / sid
    if sample_dir.is_dir():  # dataset layout: use the stored normalized disparity
        return pnm.read_pnm16(sample_dir / "disparity.pgm16")
    return pnm.read_pnm16(directory / f"{sid}.pgm16")


def spectrum_report(core_dir, sharpened_dir, gt_dir, out_prefix=None):
    """Mean radially averaged log-power spectrum per source directory.

    Returns (bin indices, {"core": ..., "sharpened": ..., "gt": ...});
    writes CSV plus a figure when out_prefix is given.
    """
    dirs = {"core": Path(core_dir), "sharpened": Path(sharpened_dir), "gt": Path(gt_dir)}
    ids = {}
    for name, d in dirs.items():
        if any(p.is_dir() for p in d.glob("*")):
            ids[name] = sorted(x.name for x in scenes.list_sample_dirs(d))
        else:
            ids[name] = sorted(p.stem for p in d.glob("*.pgm16"))
    if not (ids["core"] == ids["sharpened"] == ids["gt"]):
        raise ValueError("spectrum inputs must share identical sample ids")
    if not ids["core"]:
        raise ValueError("no samples found for the spectrum report")

    columns = {}
    nbins = None
    for name, d in dirs.items():
        acc = None
        for sid in ids[name]:
            m = _scalar_map_for_spectrum(d, sid)
            spec = np.array([p for _, p in metrics.radial_power_spectrum(m)])
            acc = spec if acc is None else acc + spec
        columns[name] = acc / len(ids[name])
        nbins = len(columns[name])
    bins = list(range(nbins))

    if out_prefix is not None:
        out_prefix = Path(out_prefix)
        out_prefix.parent.mkdir(parents=True, exist_ok=True)
        with open(out_prefix.with_suffix(".csv"), "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["bin", "core", "sharpened", "gt"])
            for b in bins:
                w.writerow([b] + [repr(float(columns[c][b])) for c in ("core", "sharpened", "gt")])
        figures.spectrum_figure(bins, columns, out_prefix.with_suffix(".png"))
    return bins, columns

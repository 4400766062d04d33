"""Procedural synthetic scenes with exact analytic geometry.

Each sample is an orthographic rendering of a few primitives (spheres,
axis-aligned boxes, an optional tilted backdrop plane) under one
directional light with Lambertian shading. Depth is analytic and stored
as disparity d = 1/d'; normals are exact unit vectors in the
camera-facing convention (z >= 0 toward the viewer).

View frame: pixels map to x in [-1, 1] (left to right) and y in [-1, 1]
(bottom to top); rays march along +depth. Output normals flip the depth
axis so z points at the camera.

Disk layout per sample: image.ppm, disparity.pgm16, normal.ppm16 and
meta.json (seed, disparity min/max used for storage, primitive manifest).
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import codec, container, flows, pnm

DEFAULT_PALETTE = (
    (0.85, 0.30, 0.25),
    (0.25, 0.60, 0.85),
    (0.35, 0.75, 0.35),
    (0.90, 0.75, 0.25),
    (0.70, 0.40, 0.80),
    (0.90, 0.55, 0.20),
    (0.40, 0.80, 0.75),
    (0.80, 0.80, 0.80),
)


@dataclass(frozen=True)
class SceneConfig:
    resolution: int = 64
    sphere_count: tuple = (1, 4)
    box_count: tuple = (0, 2)
    include_backdrop: bool = True
    depth_range: tuple = (1.5, 8.0)
    sphere_radius: tuple = (0.15, 0.45)
    backdrop_depth: tuple = (5.5, 7.0)
    backdrop_tilt_max: float = 0.35
    light_dir: tuple = (0.35, 0.45, 0.83)
    ambient: float = 0.15
    albedo_palette: tuple = DEFAULT_PALETTE
    background_albedo: tuple = (0.05, 0.05, 0.06)

    def __post_init__(self):
        if self.resolution % 2 or self.resolution < 4:
            raise ValueError("resolution must be even and >= 4")
        if self.depth_range[0] <= 0 or self.depth_range[1] <= self.depth_range[0]:
            raise ValueError(f"depth range must be positive and increasing: {self.depth_range}")
        if not self.include_backdrop and self.sphere_count[1] == 0 and self.box_count[1] == 0:
            raise ValueError("degenerate config: no primitives and no backdrop plane")


@dataclass
class SceneSample:
    image: np.ndarray      # (H, W, 3) in [0, 1]
    disparity: np.ndarray  # (H, W), 1/depth
    normal: np.ndarray     # (H, W, 3) unit, z toward viewer
    mask: np.ndarray       # (H, W) bool, True where a primitive was hit
    seed: list
    manifest: list
    prim_id: np.ndarray | None = field(default=None, repr=False)


def lambert_shade(normal, light_dir, ambient):
    """Scalar shading: ambient + (1-ambient) * max(0, n . l)."""
    l = np.asarray(light_dir, dtype=np.float64)
    l = l / np.linalg.norm(l)
    ndotl = np.clip(normal @ l, 0.0, None)
    return ambient + (1.0 - ambient) * ndotl


def _pixel_grid(res):
    xs = 2.0 * (np.arange(res) + 0.5) / res - 1.0
    ys = 1.0 - 2.0 * (np.arange(res) + 0.5) / res
    return np.meshgrid(xs, ys)  # px[i, j] = xs[j], py[i, j] = ys[i]


def _sample_manifest(cfg, rng):
    prims = []
    if cfg.include_backdrop:
        prims.append({
            "type": "backdrop",
            "depth": float(rng.uniform(*cfg.backdrop_depth)),
            "gx": float(rng.uniform(-cfg.backdrop_tilt_max, cfg.backdrop_tilt_max)),
            "gy": float(rng.uniform(-cfg.backdrop_tilt_max, cfg.backdrop_tilt_max)),
            "albedo": list(cfg.albedo_palette[rng.integers(len(cfg.albedo_palette))]),
        })
    for _ in range(int(rng.integers(cfg.sphere_count[0], cfg.sphere_count[1] + 1))):
        r = float(rng.uniform(*cfg.sphere_radius))
        prims.append({
            "type": "sphere",
            "cx": float(rng.uniform(-0.75, 0.75)),
            "cy": float(rng.uniform(-0.75, 0.75)),
            "depth": float(rng.uniform(cfg.depth_range[0] + r + 0.1, cfg.backdrop_depth[0] - 0.3)),
            "radius": r,
            "albedo": list(cfg.albedo_palette[rng.integers(len(cfg.albedo_palette))]),
        })
    for _ in range(int(rng.integers(cfg.box_count[0], cfg.box_count[1] + 1))):
        cx, cy = rng.uniform(-0.75, 0.75, 2)
        hx, hy = rng.uniform(0.08, 0.45, 2)
        prims.append({
            "type": "box",
            "x0": float(cx - hx), "x1": float(cx + hx),
            "y0": float(cy - hy), "y1": float(cy + hy),
            "depth": float(rng.uniform(cfg.depth_range[0] + 0.3, cfg.backdrop_depth[0] - 0.3)),
            "albedo": list(cfg.albedo_palette[rng.integers(len(cfg.albedo_palette))]),
        })
    return prims


def _render_primitive(prim, px, py):
    """Return (hit mask, hit depth, normals) for one primitive."""
    res = px.shape[0]
    if prim["type"] == "backdrop":
        depth = prim["depth"] + prim["gx"] * px + prim["gy"] * py
        n = np.empty((res, res, 3))
        n[:, :, 0], n[:, :, 1], n[:, :, 2] = prim["gx"], prim["gy"], 1.0
        n /= np.linalg.norm(n, axis=2, keepdims=True)
        return np.ones_like(px, dtype=bool), depth, n
    if prim["type"] == "sphere":
        dx, dy, r = px - prim["cx"], py - prim["cy"], prim["radius"]
        rho2 = dx * dx + dy * dy
        hit = rho2 <= r * r
        bulge = np.sqrt(np.clip(r * r - rho2, 0.0, None))
        depth = np.where(hit, prim["depth"] - bulge, np.inf)
        n = np.zeros((res, res, 3))
        n[:, :, 0] = np.where(hit, dx / r, 0.0)
        n[:, :, 1] = np.where(hit, dy / r, 0.0)
        n[:, :, 2] = np.where(hit, bulge / r, 1.0)
        return hit, depth, n
    if prim["type"] == "box":
        hit = (px >= prim["x0"]) & (px <= prim["x1"]) & (py >= prim["y0"]) & (py <= prim["y1"])
        depth = np.where(hit, prim["depth"], np.inf)
        n = np.zeros((res, res, 3))
        n[:, :, 2] = 1.0  # orthographic view only ever sees the front face
        return hit, depth, n
    raise ValueError(f"unknown primitive type {prim['type']!r}")


def generate(config, seed):
    """Render one deterministic sample from a seed (int or int sequence)."""
    rng = np.random.default_rng(seed)
    manifest = _sample_manifest(config, rng)
    res = config.resolution
    px, py = _pixel_grid(res)

    depth = np.full((res, res), config.depth_range[1])
    normal = np.zeros((res, res, 3))
    normal[:, :, 1] = 1.0  # background: upward normal
    albedo = np.empty((res, res, 3))
    albedo[:] = config.background_albedo
    prim_id = np.full((res, res), -1, dtype=np.int32)

    for k, prim in enumerate(manifest):
        hit, pdepth, pnormal = _render_primitive(prim, px, py)
        nearer = hit & (pdepth < depth)
        depth = np.where(nearer, pdepth, depth)
        normal = np.where(nearer[:, :, None], pnormal, normal)
        albedo = np.where(nearer[:, :, None], np.asarray(prim["albedo"]), albedo)
        prim_id = np.where(nearer, k, prim_id)

    shade = lambert_shade(normal, config.light_dir, config.ambient)
    image = np.clip(albedo * shade[:, :, None], 0.0, 1.0)
    seed_list = [int(seed)] if np.isscalar(seed) else [int(s) for s in seed]
    return SceneSample(
        image=image,
        disparity=1.0 / depth,
        normal=normal,
        mask=prim_id >= 0,
        seed=seed_list,
        manifest=manifest,
        prim_id=prim_id,
    )


# ---------------------------------------------------------------------------
# persistence


def normalize_disparity(disp):
    """Per-sample min-max map to [0,1]; rejects constant maps."""
    dmin, dmax = float(disp.min()), float(disp.max())
    if dmax - dmin < 1e-12:
        raise ValueError("constant disparity map cannot be min-max normalized")
    return (disp - dmin) / (dmax - dmin), dmin, dmax


def denormalize_disparity(disp01, dmin, dmax):
    return disp01 * (dmax - dmin) + dmin


def save_sample(sample_dir, sample):
    d = Path(sample_dir)
    d.mkdir(parents=True, exist_ok=True)
    pnm.write_ppm16(d / "image.ppm", sample.image)
    disp01, dmin, dmax = normalize_disparity(sample.disparity)
    pnm.write_pgm16(d / "disparity.pgm16", disp01)
    pnm.write_ppm16(d / "normal.ppm16", (sample.normal + 1.0) / 2.0)
    meta = {
        "seed": sample.seed,
        "resolution": int(sample.image.shape[0]),
        "disparity_min": dmin,
        "disparity_max": dmax,
        "manifest": sample.manifest,
    }
    if bool(sample.mask.all()):
        meta["mask_all"] = True
    else:
        meta["mask_all"] = False
        meta["mask_hex"] = np.packbits(sample.mask.reshape(-1)).tobytes().hex()
    (d / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1))


def load_sample(sample_dir):
    d = Path(sample_dir)
    meta = json.loads((d / "meta.json").read_text())
    image = pnm.read_pnm16(d / "image.ppm")
    disp01 = pnm.read_pnm16(d / "disparity.pgm16")
    normal01 = pnm.read_pnm16(d / "normal.ppm16")
    res = disp01.shape[0]
    if meta.get("mask_all", True):
        mask = np.ones_like(disp01, dtype=bool)
    else:
        bits = np.frombuffer(bytes.fromhex(meta["mask_hex"]), dtype=np.uint8)
        mask = np.unpackbits(bits)[: res * res].reshape(res, res).astype(bool)
    return SceneSample(
        image=image,
        disparity=denormalize_disparity(disp01, meta["disparity_min"], meta["disparity_max"]),
        normal=normal01 * 2.0 - 1.0,
        mask=mask,
        seed=list(meta["seed"]),
        manifest=meta["manifest"],
    )


SPLIT_INDEX = {"train": 0, "val": 1, "test": 2}


def generate_split(config, root, split, count, base_seed):
    """Write `count` samples under root/split/<id>/; seeds never collide
    across splits because the split index enters the seed sequence."""
    root = Path(root)
    for i in range(count):
        sample = generate(config, seed=[base_seed, SPLIT_INDEX[split], i])
        save_sample(root / split / f"{i:05d}", sample)
    return root / split


def list_sample_dirs(split_dir):
    split_dir = Path(split_dir)
    if not split_dir.is_dir():
        raise FileNotFoundError(f"dataset split directory not found: {split_dir}")
    dirs = sorted(p for p in split_dir.iterdir() if (p / "meta.json").exists())
    if not dirs:
        raise FileNotFoundError(f"no samples under {split_dir}")
    return dirs


def load_split(split_dir, limit=None):
    """Sorted (id, SceneSample) pairs, optionally truncated to the first
    `limit` ids (the deterministic subset used by data-scale sweeps)."""
    dirs = list_sample_dirs(split_dir)
    if limit is not None:
        dirs = dirs[:limit]
    return [(d.name, load_sample(d)) for d in dirs]


# ---------------------------------------------------------------------------
# latent views


def to_latents(sample, task, spec=codec.CodecSpec()):
    """Encode one sample into the (image latent, annotation latent) pair.

    Depth annotations are min-max normalized to [0,1] per sample before
    encoding (metadata keeps the inverse map); normal annotations map
    their components from [-1,1] to [0,1].
    """
    z_x = codec.encode(sample.image, spec)
    if task == "depth":
        disp01, dmin, dmax = normalize_disparity(sample.disparity)
        z_y = codec.encode_scalar(disp01, spec)
        meta = {"task": "depth", "disparity_min": dmin, "disparity_max": dmax}
    elif task == "normal":
        z_y = codec.encode((sample.normal + 1.0) / 2.0, spec)
        meta = {"task": "normal"}
    else:
        raise ValueError(f"unknown task {task!r}")
    return z_x, z_y, meta


def make_coarse_pairs(net, variant, dataset, task, spec=codec.CodecSpec(), out_path=None):
    """Run the core predictor over a dataset and pair each coarse latent
    with its ground-truth latent; optionally persist to a container file.

    dataset: (id, SceneSample) pairs; returns [(id, z_coarse, z_fine)].
    """
    pairs = []
    for sid, sample in dataset:
        z_x, z_y, _ = to_latents(sample, task, spec)
        z_c = flows.predict_clean(net, z_x, variant)
        pairs.append((sid, z_c, z_y))
    if out_path is not None:
        arrays = {}
        for sid, z_c, z_f in pairs:
            arrays[f"coarse/{sid}"] = z_c
            arrays[f"fine/{sid}"] = z_f
        container.save_arrays(
            out_path, arrays,
            extra={"ids": [sid for sid, _, _ in pairs], "task": task, "codec": spec.kind},
        )
    return pairs


def load_coarse_pairs(path):
    arrays, extra = container.load_arrays(path)
    return [(sid, arrays[f"coarse/{sid}"], arrays[f"fine/{sid}"]) for sid in extra["ids"]]

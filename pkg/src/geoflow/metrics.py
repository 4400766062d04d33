"""Evaluation metrics: affine-invariant depth alignment, AbsRel / delta1,
angular error for normals, average rank aggregation and the radially
averaged power spectrum.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

SPECTRUM_LOG_FLOOR = 1e-12


class AlignmentError(ValueError):
    """Least-squares alignment is singular (constant prediction)."""


@dataclass
class AlignedDepth:
    scale: float
    shift: float
    values: np.ndarray  # aligned prediction over masked pixels, 1-d


def align(pred, gt, mask):
    """Closed-form least-squares (scale, shift) fit of pred onto gt.

    Solves the 2x2 normal equations over masked pixels. A constant
    prediction makes the system singular and is reported as an error
    rather than silently degraded.
    """
    mask = np.asarray(mask, dtype=bool)
    p = np.asarray(pred, dtype=np.float64)[mask].ravel()
    d = np.asarray(gt, dtype=np.float64)[mask].ravel()
    m = p.size
    if m < 2:
        raise AlignmentError(f"need >= 2 masked pixels, got {m}")
    sp, spp = p.sum(), (p * p).sum()
    det = m * spp - sp * sp
    # det == m^2 * var(p); relative threshold guards float noise
    if det <= 1e-12 * m * max(spp, 1.0):
        raise AlignmentError("singular alignment: prediction is constant over the mask")
    spd, sd = (p * d).sum(), d.sum()
    s = (m * spd - sp * sd) / det
    b = (spp * sd - sp * spd) / det
    return AlignedDepth(scale=float(s), shift=float(b), values=s * p + b)


def absrel(aligned, gt, mask):
    """Mean |a - d| / d over masked pixels (gt must be positive there)."""
    a, d = _masked_pair(aligned, gt, mask)
    return float(np.mean(np.abs(a - d) / d))


def delta1(aligned, gt, mask):
    """Fraction of masked pixels with max(a/d, d/a) < 1.25.

    Non-positive aligned values cannot satisfy the ratio test and count
    as failures.
    """
    a, d = _masked_pair(aligned, gt, mask)
    ratio = np.full(a.shape, np.inf)
    ok = a > 0
    ratio[ok] = np.maximum(a[ok] / d[ok], d[ok] / a[ok])
    return float(np.mean(ratio < 1.25))


def _masked_pair(a, d, mask):
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("empty mask")
    a = np.asarray(a, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if a.shape == mask.shape:
        a = a[mask]
    if d.shape == mask.shape:
        d = d[mask]
    return a.ravel(), d.ravel()


def angular_error(pred, gt, mask):
    """(mean angular error in degrees, fraction below 11.25 degrees).

    Predictions are renormalized per pixel; zero vectors get 90 degrees.
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("empty mask")
    p = np.asarray(pred, dtype=np.float64)[mask]
    g = np.asarray(gt, dtype=np.float64)[mask]
    pn = np.linalg.norm(p, axis=1)
    gn = np.linalg.norm(g, axis=1)
    nonzero = pn > 0
    dots = np.zeros(p.shape[0])
    np.divide((p * g).sum(axis=1), pn * np.where(gn > 0, gn, 1.0), out=dots, where=nonzero)
    deg = np.degrees(np.arccos(np.clip(dots, -1.0, 1.0)))
    deg = np.where(nonzero, deg, 90.0)
    return float(deg.mean()), float(np.mean(deg < 11.25))


def avg_rank(table, directions):
    """Average per-column rank for each method; ties share the mean rank.

    table: (n_methods, n_columns); directions: per-column "lower" or
    "higher" (which way is better). Missing (NaN) entries are rejected.
    """
    table = np.asarray(table, dtype=np.float64)
    if table.ndim != 2:
        raise ValueError(f"table must be 2-d, got shape {table.shape}")
    if len(directions) != table.shape[1]:
        raise ValueError("one direction per column required")
    if np.isnan(table).any():
        raise ValueError("table has missing entries; avg_rank needs a complete table")
    ranks = np.empty_like(table)
    for j, direction in enumerate(directions):
        if direction not in ("lower", "higher"):
            raise ValueError(f"direction must be 'lower' or 'higher', got {direction!r}")
        col = table[:, j] if direction == "lower" else -table[:, j]
        ranks[:, j] = rankdata(col, method="average")
    return ranks.mean(axis=1)


def radial_power_spectrum(m):
    """Radially averaged DFT power: [(integer radius, log10 mean power)].

    Bins by floor(sqrt(u^2 + v^2)) over centered integer frequencies; the
    mean power per bin is floored at 1e-12 before the log.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square 2-d map, got {m.shape}")
    n = m.shape[0]
    power = np.abs(np.fft.fft2(m)) ** 2
    freqs = np.fft.fftfreq(n) * n
    u, v = np.meshgrid(freqs, freqs)
    radius = np.floor(np.sqrt(u * u + v * v)).astype(np.int64)
    nbins = spectrum_bin_count(n)
    sums = np.bincount(radius.ravel(), weights=power.ravel(), minlength=nbins)
    counts = np.bincount(radius.ravel(), minlength=nbins)
    mean_power = sums / np.maximum(counts, 1)
    log_power = np.log10(mean_power + SPECTRUM_LOG_FLOOR)
    return list(zip(range(nbins), log_power.tolist()))


def spectrum_bin_count(n):
    """Number of radius bins for an n x n map: floor((n/2) * sqrt(2)) + 1."""
    return int(np.floor((n / 2) * np.sqrt(2.0))) + 1


# ---------------------------------------------------------------------------
# report plumbing


@dataclass
class MetricsReport:
    """Per-sample metric rows plus their aggregate (mean of rows)."""

    task: str
    method: str = ""
    dataset: str = ""
    rows: list = field(default_factory=list)  # {"id": ..., metric: value, ...}
    failed: list = field(default_factory=list)  # [(id, reason)]

    @property
    def metric_names(self):
        return ["absrel", "delta1"] if self.task == "depth" else ["mean_angular", "pct_11_25"]

    def add_row(self, sample_id, **values):
        self.rows.append({"id": sample_id, **values})

    def aggregate(self):
        if not self.rows:
            raise ValueError("no successful samples to aggregate")
        return {k: float(np.mean([r[k] for r in self.rows])) for k in self.metric_names}

    def write_csv(self, path):
        agg = self.aggregate()
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["id"] + self.metric_names)
            for r in self.rows:
                w.writerow([r["id"]] + [repr(r[k]) for k in self.metric_names])
            w.writerow(["aggregate"] + [repr(agg[k]) for k in self.metric_names])

    def write_json(self, path):
        doc = {
            "task": self.task,
            "method": self.method,
            "dataset": self.dataset,
            "aggregate": self.aggregate(),
            "samples": self.rows,
            "failed": [{"id": i, "reason": r} for i, r in self.failed],
        }
        Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1))


def block_boundary_statistic(m, block=2):
    """Mean |difference| across block borders minus within blocks.

    Positive values mean neighboring pixels disagree more across the
    2x2 patch seams than inside patches - the grid-artifact signature.
    """
    m = np.asarray(m, dtype=np.float64)
    dcol = np.abs(np.diff(m, axis=1))  # dcol[:, j] = |m[:, j+1] - m[:, j]|
    drow = np.abs(np.diff(m, axis=0))
    j = np.arange(m.shape[1] - 1)
    i = np.arange(m.shape[0] - 1)
    across = np.concatenate([
        dcol[:, j % block == block - 1].ravel(),
        drow[i % block == block - 1, :].ravel(),
    ])
    within = np.concatenate([
        dcol[:, j % block != block - 1].ravel(),
        drow[i % block != block - 1, :].ravel(),
    ])
    return float(across.mean() - within.mean())

"""geoflow: deterministic two-stage rectified-flow dense geometric prediction.

A desk-scale framework: a single-step clean-data core predictor with a
local continuity head produces accurate coarse geometry, and an optional
multi-step detail sharpener refines high frequencies along a noise-free
flow. Includes a synthetic scene dataset, evaluation metrics and an
ablation harness.
"""

__version__ = "0.1.0"

from . import backbone, codec, container, flows, metrics, numerics, pnm, scenes  # noqa: F401

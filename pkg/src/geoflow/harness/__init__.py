"""Training loops, two-stage inference pipeline, ablation runner and CLI."""

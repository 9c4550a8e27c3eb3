"""Weighted combination of the global (code-set) and local (BoF) distance channels."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .match import DistanceMatrix

NORMALIZERS = ("mean", "median", "max")


@dataclass(frozen=True)
class FusionWeights:
    w_global: float = 1.0
    w_local: float = 1.0

    def __post_init__(self):
        if self.w_global < 0 or self.w_local < 0:
            raise ValueError("fusion weights must be nonnegative")
        if self.w_global == 0 and self.w_local == 0:
            raise ValueError("at least one fusion weight must be positive")


def channel_scale(values, normalizer="mean"):
    """Statistic of the off-diagonal entries used to bring a channel to unit scale."""
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    off = values[~np.eye(n, dtype=bool)]
    if off.size == 0:
        raise ValueError("a 1x1 matrix has no off-diagonal entries to normalize by")
    if normalizer == "mean":
        scale = off.mean()
    elif normalizer == "median":
        scale = np.median(off)
    elif normalizer == "max":
        scale = off.max()
    else:
        raise ValueError(f"normalizer must be one of {NORMALIZERS}")
    if not scale > 0:
        raise ValueError(f"channel {normalizer} is zero; cannot normalize an all-zero matrix")
    return float(scale)


def fuse(d_global, d_local, weights=FusionWeights(), normalizer="mean"):
    """``w_g * Dg / scale(Dg) + w_l * Dl / scale(Dl)`` with a zero diagonal."""
    if tuple(d_global.ids) != tuple(d_local.ids):
        raise ValueError("distance matrices list different model ids (or a different order)")
    g = d_global.values / channel_scale(d_global.values, normalizer)
    l = d_local.values / channel_scale(d_local.values, normalizer)
    fused = weights.w_global * g + weights.w_local * l
    np.fill_diagonal(fused, 0.0)
    meta = {"w_global": weights.w_global, "w_local": weights.w_local, "normalizer": normalizer}
    return DistanceMatrix(d_global.ids, fused, meta)

"""Comparison metrics: reward summaries, sample diversity, angular mode coverage."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .errors import ConfigurationError


@dataclass(frozen=True)
class CoverageSpec:
    """Samples are "on target" when | ||x|| - radius | < band_width; coverage is
    the fraction of angular bins containing at least one such sample."""

    radius: float = 2.0
    band_width: float = 0.15
    num_angular_bins: int = 8
    mode_radius: float = 0.6

    def __post_init__(self):
        if self.band_width <= 0 or self.mode_radius <= 0:
            raise ConfigurationError("band_width and mode_radius must be > 0")
        if self.num_angular_bins < 1:
            raise ConfigurationError("num_angular_bins must be >= 1")


def diversity_l2(samples: np.ndarray) -> float:
    """Mean pairwise Euclidean distance over all unordered pairs."""
    samples = np.atleast_2d(samples)
    if samples.shape[0] < 2:
        raise ConfigurationError("diversity_l2 needs at least 2 samples")
    return float(pdist(samples).mean())


def angular_coverage(samples: np.ndarray, spec: CoverageSpec) -> float:
    samples = np.atleast_2d(samples)
    rho = np.linalg.norm(samples[:, :2], axis=1)
    in_band = np.abs(rho - spec.radius) < spec.band_width
    if not in_band.any():
        return 0.0
    theta = np.arctan2(samples[in_band, 1], samples[in_band, 0])
    bins = np.floor((theta + np.pi) / (2.0 * np.pi) * spec.num_angular_bins).astype(int)
    bins = np.clip(bins, 0, spec.num_angular_bins - 1)
    return float(np.unique(bins).size / spec.num_angular_bins)


def reward_summary(rewards: np.ndarray, nfe: np.ndarray | None = None) -> dict:
    """Mean/max/std of event rewards plus the running-best curve vs cumulative NFE."""
    rewards = np.asarray(rewards, dtype=float)
    if rewards.size == 0:
        raise ConfigurationError("reward_summary of an empty event log")
    curve = np.maximum.accumulate(rewards)
    out = {"mean": float(rewards.mean()), "max": float(rewards.max()),
           "std": float(rewards.std()), "curve": curve}
    if nfe is not None:
        out["nfe"] = np.asarray(nfe, dtype=int)
    return out

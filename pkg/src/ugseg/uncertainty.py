"""Ensemble fusion, slice-level uncertainty scoring, and review scheduling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ugseg.core import BinaryMask, ProbabilityGroup, RefineConfig


@dataclass(frozen=True)
class FusedResult:
    """Per-pixel mean probability, population variance, and thresholded mask."""

    mean_map: np.ndarray
    variance_map: np.ndarray
    mask: BinaryMask
    threshold: float = 0.5


@dataclass(frozen=True)
class SliceQueue:
    """Review order: (slice_index, score) pairs, score non-increasing."""

    entries: tuple[tuple[int, float], ...]
    cutoff: int  # number of slices offered for review

    def order(self) -> list[int]:
        return [idx for idx, _ in self.entries]


def fuse_predictions(pg: ProbabilityGroup, threshold: float = 0.5) -> FusedResult:
    """Fuse N predictions into mean/variance maps and a binary mask.

    Variance is the population (biased) variance over the N predictors.
    """
    if pg.n < 1:
        raise ValueError("need at least one predictor")
    mean = pg.data.mean(axis=0, dtype=np.float64)
    var = pg.data.var(axis=0, dtype=np.float64)
    mask = BinaryMask((mean >= threshold).astype(np.uint8))
    return FusedResult(mean, var, mask, threshold)


def slice_uncertainty(u_slice: np.ndarray, y_slice: np.ndarray, zeta: float = 1e-6) -> float:
    """Slice score: summed pixel uncertainty normalized by segmented-region size."""
    u = np.asarray(u_slice, dtype=np.float64)
    y = np.asarray(y_slice, dtype=np.float64)
    if u.shape != y.shape:
        raise ValueError(f"shape mismatch: {u.shape} vs {y.shape}")
    return float(u.sum() / (y.sum() + zeta))


def naive_slice_uncertainty(u_slice: np.ndarray) -> float:
    """Unnormalized slice score (sum of pixel uncertainties)."""
    return float(np.asarray(u_slice, dtype=np.float64).sum())


def rank_slices(fused: FusedResult, cfg: RefineConfig, mode: str = "normalized") -> SliceQueue:
    """Order slices by descending uncertainty score; ties break to the lower index."""
    if mode not in ("normalized", "naive"):
        raise ValueError(f"unknown ranking mode {mode!r}")
    num_slices = fused.variance_map.shape[0]
    scores = []
    for k in range(num_slices):
        if mode == "normalized":
            s = slice_uncertainty(fused.variance_map[k], fused.mask.data[k], cfg.zeta)
        else:
            s = naive_slice_uncertainty(fused.variance_map[k])
        scores.append((k, s))
    scores.sort(key=lambda e: (-e[1], e[0]))
    cutoff = math.ceil(cfg.m_prime_fraction * num_slices)
    return SliceQueue(tuple(scores), cutoff)


def next_slice(queue: SliceQueue, history, early_stop_count: int = 3):
    """Return the next slice to review, or None when the session is done.

    ``history`` is the list of (slice_index, was_edited) pairs for slices
    fetched so far, in queue order. The session ends when the cutoff is
    reached or when the last ``early_stop_count`` fetched slices all
    required no edit.
    """
    m = len(history)
    if m >= queue.cutoff:
        return None
    if m >= early_stop_count and all(not edited for _, edited in history[-early_stop_count:]):
        return None
    return queue.entries[m][0]

"""Segmentation and uncertainty-quality metrics: Dice, ASSD, UEO, RVE."""

from __future__ import annotations

import numpy as np
from scipy import ndimage


def _as_bool(mask) -> np.ndarray:
    m = np.asarray(mask)
    return m.astype(bool)


def dice(a, b) -> float:
    """Dice overlap 2|a&b| / (|a|+|b|); both empty counts as perfect (1.0)."""
    a, b = _as_bool(a), _as_bool(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    denom = a.sum() + b.sum()
    if denom == 0:
        return 1.0
    return float(2.0 * np.logical_and(a, b).sum() / denom)


def boundary(mask) -> np.ndarray:
    """Foreground pixels with at least one background face-neighbor."""
    m = _as_bool(mask)
    structure = ndimage.generate_binary_structure(m.ndim, 1)
    eroded = ndimage.binary_erosion(m, structure=structure, border_value=0)
    return m & ~eroded


def assd(a, b, spacing=None) -> float:
    """Average symmetric surface distance in mm between two non-empty masks."""
    a, b = _as_bool(a), _as_bool(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if not a.any() or not b.any():
        raise ValueError("undefined surface distance for an empty mask")
    if spacing is None:
        spacing = (1.0,) * a.ndim
    ba, bb = boundary(a), boundary(b)
    # distance from every pixel to the nearest boundary pixel of the other mask
    dist_to_b = ndimage.distance_transform_edt(~bb, sampling=spacing)
    dist_to_a = ndimage.distance_transform_edt(~ba, sampling=spacing)
    return float(0.5 * (dist_to_b[ba].mean() + dist_to_a[bb].mean()))


def ueo(uncertainty, pred, gt, threshold: float) -> float:
    """Uncertainty-error overlap: Dice of {U >= t} against the error region."""
    u = np.asarray(uncertainty, dtype=np.float64)
    error = _as_bool(pred) ^ _as_bool(gt)
    if u.shape != error.shape:
        raise ValueError(f"shape mismatch: {u.shape} vs {error.shape}")
    return dice(u >= threshold, error)


def sweep_ueo_threshold(cases, grid):
    """Pick the grid threshold maximizing mean UEO over (U, pred, gt) cases.

    Ties go to the smaller threshold.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("empty threshold grid")
    cases = list(cases)
    if not cases:
        raise ValueError("empty case list")
    best_t, best_score = None, -1.0
    for t in sorted(grid):
        score = float(np.mean([ueo(u, p, g, t) for u, p, g in cases]))
        if score > best_score:
            best_t, best_score = t, score
    return best_t, best_score


def rve(uncertainty, pred, gt, threshold: float) -> float:
    """Relative volume error between the thresholded uncertain region and the
    mis-segmented region (definition: ours; the source metric name has no
    published formula)."""
    u = np.asarray(uncertainty, dtype=np.float64)
    error = _as_bool(pred) ^ _as_bool(gt)
    n_err = int(error.sum())
    if n_err == 0:
        raise ValueError("RVE undefined for an empty error region")
    n_unc = int((u >= threshold).sum())
    return float(abs(n_unc - n_err) / n_err)


def slice_report(pred, gt, uncertainty=None, ueo_threshold: float = 0.2,
                 spacing=None) -> dict:
    """Metric dictionary for one slice; ASSD/RVE are None when undefined."""
    rep = {"dice": dice(pred, gt)}
    pb, gb = _as_bool(pred), _as_bool(gt)
    rep["assd"] = assd(pred, gt, spacing) if (pb.any() and gb.any()) else None
    if uncertainty is not None:
        rep["ueo"] = ueo(uncertainty, pred, gt, ueo_threshold)
        rep["ueo_threshold"] = ueo_threshold
        rep["rve"] = (rve(uncertainty, pred, gt, ueo_threshold)
                      if np.logical_xor(pb, gb).any() else None)
        rep["rve_definition"] = "ours"
    return rep

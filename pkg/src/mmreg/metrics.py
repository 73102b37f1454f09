"""Registration quality metrics: Dice, Hausdorff distance, det(J) statistics, reliability."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .fields import jacobian_determinant


def dice(a, b, label: int = 1) -> float:
    """Overlap ``2|A & B| / (|A| + |B|)`` of one label; 1.0 when both are empty."""
    a = np.asarray(a) == label
    b = np.asarray(b) == label
    if a.shape != b.shape:
        raise ValueError(f"grid mismatch: {a.shape} vs {b.shape}")
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / total


def contour(region) -> np.ndarray:
    """Foreground pixels with at least one face-adjacent background neighbour.

    Pixels on the image border count as adjacent to background outside it.
    Returns integer indices of shape ``(npoints, ndim)``.
    """
    region = np.asarray(region, dtype=bool)
    structure = ndimage.generate_binary_structure(region.ndim, 1)
    interior = ndimage.binary_erosion(region, structure=structure, border_value=0)
    return np.argwhere(region & ~interior)


def hausdorff_mm(a, b, label: int = 1, spacing=None) -> float:
    """Symmetric Hausdorff distance between the contours of one label, in mm."""
    a = np.asarray(a) == label
    b = np.asarray(b) == label
    if a.shape != b.shape:
        raise ValueError(f"grid mismatch: {a.shape} vs {b.shape}")
    if not a.any() or not b.any():
        raise ValueError(f"Hausdorff distance undefined: label {label} is empty in one mask")
    scale = np.ones(a.ndim) if spacing is None else np.asarray(spacing, dtype=float)
    pa = contour(a) * scale
    pb = contour(b) * scale
    d_ab = cKDTree(pb).query(pa)[0].max()
    d_ba = cKDTree(pa).query(pb)[0].max()
    return float(max(d_ab, d_ba))


@dataclass
class DetJStats:
    min: float
    max: float
    pct_nonpositive: float

    def as_dict(self) -> dict:
        return asdict(self)


def detj_stats(phi) -> DetJStats:
    """Range of det(J) and the percentage of grid points with det(J) <= 0."""
    det = jacobian_determinant(phi)
    return DetJStats(float(det.min()), float(det.max()), 100.0 * float(np.mean(det <= 0)))


def reliability(dice_values, d: float) -> float:
    """Fraction of cases whose Dice strictly exceeds ``d``."""
    values = np.asarray(dice_values, dtype=float)
    if values.size == 0:
        raise ValueError("reliability needs at least one case")
    if not 0.0 <= d <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {d}")
    return float(np.count_nonzero(values > d)) / values.size


@dataclass
class MetricReport:
    dice: dict = field(default_factory=dict)
    hd_mm: dict = field(default_factory=dict)
    detj_min: float | None = None
    detj_max: float | None = None
    pct_negative_detj: float | None = None

    def as_dict(self) -> dict:
        out = {"dice": {str(k): v for k, v in self.dice.items()}}
        if self.hd_mm:
            out["hd_mm"] = {str(k): v for k, v in self.hd_mm.items()}
        if self.detj_min is not None:
            out.update(
                detj_min=self.detj_min,
                detj_max=self.detj_max,
                pct_negative_detj=self.pct_negative_detj,
            )
        return out


def evaluate_masks(fixed_mask, moved_mask, labels=None, spacing=None, hd: bool = True, phi=None) -> MetricReport:
    """Dice (and optionally HD) for every label present in either mask."""
    fixed_mask = np.asarray(fixed_mask)
    moved_mask = np.asarray(moved_mask)
    if labels is None:
        labels = sorted(int(v) for v in np.union1d(np.unique(fixed_mask), np.unique(moved_mask)) if v != 0)
    report = MetricReport()
    for label in labels:
        report.dice[label] = dice(fixed_mask, moved_mask, label)
        if hd:
            report.hd_mm[label] = hausdorff_mm(fixed_mask, moved_mask, label, spacing)
    if phi is not None:
        stats = detj_stats(phi)
        report.detj_min, report.detj_max, report.pct_negative_detj = stats.min, stats.max, stats.pct_nonpositive
    return report

"""Confidence aggregation, lowest-average-confidence selection, KDE heatmap.

Selection follows the sorted-ascending-average-score procedure; the heatmap is
a weighted bivariate Gaussian KDE on a regular grid, weighted per point by
(1 - avgConfidence)^2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .projection import ProjectionPoint

HEATMAP_COLORMAP = "Reds"
EXTENT_PADDING = 0.05


class UncertaintyError(Exception):
    pass


class ScoreOutOfRange(UncertaintyError):
    pass


class TooFewPoints(UncertaintyError):
    pass


class NegativeWeight(UncertaintyError):
    pass


@dataclass(frozen=True)
class ImageScore:
    image_id: str
    avg_conf: float


@dataclass
class HeatmapGrid:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    nx: int
    ny: int
    values: np.ndarray  # (nx, ny), values[ix, iy] at cell centers
    bandwidth: np.ndarray  # 2x2 kernel covariance actually used
    colormap_name: str = HEATMAP_COLORMAP
    degenerate: bool = False

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        dx = (self.x_max - self.x_min) / self.nx
        dy = (self.y_max - self.y_min) / self.ny
        xs = self.x_min + (np.arange(self.nx) + 0.5) * dx
        ys = self.y_min + (np.arange(self.ny) + 0.5) * dy
        return xs, ys

    def cell_area(self) -> float:
        return ((self.x_max - self.x_min) / self.nx) * ((self.y_max - self.y_min) / self.ny)


def average_confidence(scores: Iterable[float]) -> float:
    """Mean detection confidence for one image; no detections scores 0.0."""
    scores = list(scores)
    for s in scores:
        if not (0.0 <= s <= 1.0):
            raise ScoreOutOfRange(f"confidence {s} outside [0,1]")
    if not scores:
        return 0.0
    return sum(scores) / len(scores)


def uncertainty_weight(avg_conf: float) -> float:
    """Quadratic uncertainty weight: low-confidence images dominate the KDE."""
    if not (0.0 <= avg_conf <= 1.0):
        raise ScoreOutOfRange(f"avg_conf {avg_conf} outside [0,1]")
    return (1.0 - avg_conf) ** 2


def select_al_samples(
    detections_map: Mapping[str, Sequence[float]],
    exclude: set[str] | frozenset[str] = frozenset(),
    budget: int = 30,
) -> list[ImageScore]:
    """Lowest-average-confidence selection over non-excluded candidates.

    Ties broken by lexicographic image id so the suggestion order is stable.
    """
    if budget < 0:
        raise UncertaintyError("budget must be >= 0")
    candidates = [
        ImageScore(image_id, average_confidence(scores))
        for image_id, scores in detections_map.items()
        if image_id not in exclude
    ]
    candidates.sort(key=lambda s: (s.avg_conf, s.image_id))
    return candidates[:budget]


def _weighted_covariance(xy: np.ndarray, w: np.ndarray) -> np.ndarray:
    # w normalized to sum 1; bias correction via 1 - sum(w^2)
    mean = w @ xy
    centered = xy - mean
    cov = (centered * w[:, None]).T @ centered / (1.0 - float(w @ w))
    return cov


def compute_heatmap(
    points: Sequence[ProjectionPoint],
    weights: Sequence[float],
    nx: int = 128,
    ny: int = 128,
) -> HeatmapGrid:
    """Weighted Gaussian KDE on an nx-by-ny grid over the padded point extent.

    Bandwidth is Scott's rule with the Kish effective sample size
    n_eff = (sum w)^2 / sum(w^2) applied to the weighted data covariance.
    An all-zero weight vector yields a flagged all-zero grid.
    """
    if len(points) != len(weights):
        raise UncertaintyError("points and weights must have equal length")
    if len(points) < 2:
        raise TooFewPoints("need at least 2 points")
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0):
        raise NegativeWeight("weights must be non-negative")
    xy = np.array([[p.x, p.y] for p in points], dtype=np.float64)

    x_lo, x_hi = float(xy[:, 0].min()), float(xy[:, 0].max())
    y_lo, y_hi = float(xy[:, 1].min()), float(xy[:, 1].max())
    pad_x = EXTENT_PADDING * max(x_hi - x_lo, 1e-9)
    pad_y = EXTENT_PADDING * max(y_hi - y_lo, 1e-9)
    x_min, x_max = x_lo - pad_x, x_hi + pad_x
    y_min, y_max = y_lo - pad_y, y_hi + pad_y

    total = w.sum()
    if total <= 0:
        return HeatmapGrid(
            x_min, x_max, y_min, y_max, nx, ny,
            values=np.zeros((nx, ny)),
            bandwidth=np.zeros((2, 2)),
            degenerate=True,
        )

    w = w / total
    n_eff = 1.0 / float(w @ w)
    scott = n_eff ** (-1.0 / 6.0)  # d = 2
    cov = _weighted_covariance(xy, w)
    bandwidth = (scott**2) * cov
    # tiny ridge keeps near-collinear layouts invertible
    bandwidth = bandwidth + np.eye(2) * max(np.trace(bandwidth), 1e-12) * 1e-12

    grid = HeatmapGrid(x_min, x_max, y_min, y_max, nx, ny,
                       values=np.zeros((nx, ny)), bandwidth=bandwidth)
    xs, ys = grid.cell_centers()
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    cells = np.stack([gx.ravel(), gy.ravel()], axis=1)  # (nx*ny, 2)

    # whiten with the Cholesky factor, then a plain squared-norm kernel
    chol = np.linalg.cholesky(bandwidth)
    norm = 1.0 / (2.0 * np.pi * float(np.prod(np.diag(chol))))
    white_pts = np.linalg.solve(chol, xy.T).T  # (n, 2)
    white_cells = np.linalg.solve(chol, cells.T).T  # (m, 2)

    values = np.zeros(cells.shape[0])
    # chunk over grid cells to bound the (m, n) distance matrix size
    chunk = max(1, 2_000_000 // max(len(points), 1))
    for start in range(0, cells.shape[0], chunk):
        block = white_cells[start : start + chunk]
        d2 = (
            (block**2).sum(axis=1)[:, None]
            + (white_pts**2).sum(axis=1)[None, :]
            - 2.0 * block @ white_pts.T
        )
        values[start : start + chunk] = np.exp(-0.5 * np.maximum(d2, 0.0)) @ w
    grid.values = (values * norm).reshape(nx, ny)
    return grid


def heatmap_to_csv(grid: HeatmapGrid) -> str:
    """Grid header plus row-major values; consumed by the service and UI."""
    header = (
        f"# x_min={grid.x_min!r} x_max={grid.x_max!r} "
        f"y_min={grid.y_min!r} y_max={grid.y_max!r} nx={grid.nx} ny={grid.ny} "
        f"bandwidth={','.join(repr(v) for v in grid.bandwidth.ravel())} "
        f"colormap={grid.colormap_name} degenerate={int(grid.degenerate)}"
    )
    rows = [",".join(repr(v) for v in row) for row in grid.values]
    return "\n".join([header, *rows])

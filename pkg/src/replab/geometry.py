"""Area of a planar point cloud from a pruned Delaunay triangulation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay

from .errors import DegenerateCloud

PRUNE_FACTOR = 5.0


@dataclass(frozen=True)
class VolumeEstimate:
    area: float
    n_triangles: int
    n_pruned: int
    prune_threshold: float

    def to_dict(self):
        return {"area": self.area, "n_triangles": self.n_triangles, "n_pruned": self.n_pruned,
                "prune_threshold": self.prune_threshold}


def _check_cloud(points: np.ndarray):
    if points.ndim != 2 or points.shape[1] != 2:
        raise DegenerateCloud(f"volume estimation needs 2-D points, got array of shape {points.shape}")
    if points.shape[0] < 3:
        raise DegenerateCloud(f"need at least 3 points, got {points.shape[0]}")
    centered = points - points.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[0] == 0 or sv[-1] <= 1e-12 * sv[0]:
        raise DegenerateCloud("points are collinear")


def estimate_volume(points, prune_factor: float = PRUNE_FACTOR) -> VolumeEstimate:
    """Sum of triangle areas after dropping triangles whose longest edge is too long.

    The cut-off is ``prune_factor`` times the median edge length of the
    triangulation, so it scales with the sampling density.
    """
    pts = np.asarray(points, dtype=float)
    _check_cloud(pts)
    tri = Delaunay(pts).simplices
    corners = pts[tri]                                   # (T, 3, 2)
    sides = corners[:, [1, 2, 0]] - corners              # edge vectors per triangle
    lengths = np.linalg.norm(sides, axis=-1)             # (T, 3)
    # each undirected edge once, for the median
    edges = np.sort(np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]), axis=1)
    edges = np.unique(edges, axis=0)
    median = float(np.median(np.linalg.norm(pts[edges[:, 0]] - pts[edges[:, 1]], axis=1)))
    threshold = prune_factor * median
    keep = lengths.max(axis=1) <= threshold
    a, b = sides[:, 0], -sides[:, 2]
    areas = 0.5 * np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
    return VolumeEstimate(float(areas[keep].sum()), int(tri.shape[0]), int((~keep).sum()), threshold)

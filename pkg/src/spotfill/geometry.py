"""Point-set kernels: sampling, neighborhoods, grouping, Chamfer metrics.

Everything here is exhaustive-scan based; at the scales this package targets
(N <= 4096) the brute-force scan is both the oracle and the implementation,
so there are no spatial acceleration structures.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .tensor import Tensor, gather_rows, mul, repeat, sqrt, sub, tmean, tsum


class GeometryError(ValueError):
    """Raised on invalid point-set inputs (empty clouds, bad counts, ...)."""


class PointCloud:
    """An N x 3 coordinate set. Coordinates are carried as a Tensor so that
    losses can differentiate through them."""

    __slots__ = ("coords",)

    def __init__(self, coords):
        t = coords if isinstance(coords, Tensor) else Tensor(coords)
        if t.data.ndim != 2 or t.data.shape[1] != 3:
            raise GeometryError(f"point cloud must be [N,3], got {t.data.shape}")
        if t.data.shape[0] < 1:
            raise GeometryError("point cloud must contain at least one point")
        if not np.isfinite(t.data).all():
            raise GeometryError("point cloud contains non-finite coordinates")
        self.coords = t

    @property
    def n(self) -> int:
        return self.coords.data.shape[0]

    @property
    def xyz(self) -> np.ndarray:
        """Plain ndarray view of the coordinates."""
        return self.coords.data


@dataclass
class NeighborIndex:
    """Result of a ball query: for each query point, up to S source indices.

    Entries past valid_counts[i] duplicate the row's first qualifying index
    (or the globally nearest source index when nothing qualified).
    """

    indices: np.ndarray       # [N_query, S] int64 into the source cloud
    valid_counts: np.ndarray  # [N_query] int64

    @property
    def s(self) -> int:
        return self.indices.shape[1]


def _as_xyz(cloud) -> np.ndarray:
    if isinstance(cloud, PointCloud):
        return cloud.xyz
    if isinstance(cloud, Tensor):
        return cloud.data
    return np.asarray(cloud, dtype=np.float64)


def _as_coord_tensor(cloud) -> Tensor:
    if isinstance(cloud, PointCloud):
        return cloud.coords
    if isinstance(cloud, Tensor):
        return cloud
    return Tensor(np.asarray(cloud, dtype=np.float64))


def farthest_point_sample(cloud, count: int) -> np.ndarray:
    """Greedy max-min subset selection, deterministic (seed index 0).

    Returns `count` distinct indices; prefixes of the result are themselves
    valid farthest-point samples of smaller counts.
    """
    pts = np.ascontiguousarray(_as_xyz(cloud))
    n = pts.shape[0]
    if not 1 <= count <= n:
        raise GeometryError(f"farthest_point_sample count {count} out of range [1, {n}]")
    return kernels.farthest_point_sample(pts, count)


def ball_query(query, source, radius: float, max_samples: int) -> NeighborIndex:
    """Source indices strictly within `radius` of each query point.

    Qualifying indices come back in ascending source order, capped at
    max_samples; see NeighborIndex for the padding rules.
    """
    q = np.ascontiguousarray(_as_xyz(query))
    s = np.ascontiguousarray(_as_xyz(source))
    if s.shape[0] == 0:
        raise GeometryError("ball_query: empty source cloud")
    if radius <= 0:
        raise GeometryError(f"ball_query: radius must be positive, got {radius}")
    if max_samples < 1:
        raise GeometryError(f"ball_query: max_samples must be >= 1, got {max_samples}")
    idx, counts = kernels.ball_query(q, s, float(radius), int(max_samples))
    return NeighborIndex(indices=idx, valid_counts=counts)


def group_features(neighbors: NeighborIndex, source_coords, source_feats: Tensor,
                   query_coords) -> tuple[Tensor, Tensor]:
    """Gather neighborhoods: relative offsets and grouped feature rows.

    rel_coords[i, s] = source_coords[neighbors.indices[i, s]] - query_coords[i].
    Gradients flow back through the gather into source_feats (and the
    coordinate tensors, when they require grad).
    """
    src_c = _as_coord_tensor(source_coords)
    qry_c = _as_coord_tensor(query_coords)
    idx = neighbors.indices
    gathered_coords = gather_rows(src_c, idx)                      # [Nq, S, 3]
    centers = qry_c.reshape((qry_c.data.shape[0], 1, 3))
    rel = sub(gathered_coords, repeat(centers, idx.shape[1], axis=1))
    grouped = gather_rows(source_feats, idx)                       # [Nq, S, C]
    return rel, grouped


def chamfer_distance(pc, pg, squared: bool = True) -> Tensor:
    """Symmetric mean nearest-neighbor distance between two clouds.

    squared=True uses squared L2 per match (the usual reporting metric);
    squared=False uses the plain L2 norm. Differentiable through both
    coordinate sets; nearest-neighbor ties resolve to the lowest index.
    """
    a = _as_coord_tensor(pc)
    b = _as_coord_tensor(pg)
    if a.data.shape[0] == 0 or b.data.shape[0] == 0:
        raise GeometryError("chamfer_distance: empty cloud")
    idx_ab, idx_ba = kernels.nearest_neighbors(
        np.ascontiguousarray(a.data), np.ascontiguousarray(b.data))

    def one_side(x: Tensor, y: Tensor, idx: np.ndarray) -> Tensor:
        diff = sub(x, gather_rows(y, idx))
        d2 = tsum(mul(diff, diff), axis=1)
        return tmean(d2 if squared else sqrt(d2))

    return one_side(a, b, idx_ab) + one_side(b, a, idx_ba)


def chamfer_both(pc, pg) -> tuple[float, float]:
    """Plain-value (norm, squared) Chamfer pair from a single neighbor sweep."""
    a = _as_xyz(pc)
    b = _as_xyz(pg)
    idx_ab, idx_ba = kernels.nearest_neighbors(
        np.ascontiguousarray(a), np.ascontiguousarray(b))
    d2_ab = ((a - b[idx_ab]) ** 2).sum(axis=1)
    d2_ba = ((b - a[idx_ba]) ** 2).sum(axis=1)
    cd_norm = float(np.sqrt(d2_ab).mean() + np.sqrt(d2_ba).mean())
    cd_sq = float(d2_ab.mean() + d2_ba.mean())
    return cd_norm, cd_sq


@dataclass
class LossWeights:
    """Per-term weights of the staged composite loss."""

    a1: float = 10.0
    a2: float = 0.5
    a3: float = 0.5
    a_fine: float = 1.0

    def validate(self) -> None:
        if min(self.a1, self.a2, self.a3, self.a_fine) < 0:
            raise ValueError("loss weights must be non-negative")


def composite_loss(outputs: dict[str, Tensor], gt, weights: LossWeights,
                   gt_subsets: dict[str, np.ndarray] | None = None,
                   squared: bool = True) -> tuple[Tensor, dict[str, float]]:
    """Weighted sum of per-resolution Chamfer terms.

    outputs maps {"p1","p2","p3","fine"} to coordinate tensors. Each coarse
    output is scored against a farthest-point subset of the ground truth at
    its own resolution; the fine output is scored against the full cloud.
    Returns (loss tensor, per-term plain values).
    """
    weights.validate()
    gt_t = _as_coord_tensor(gt)
    gt_np = gt_t.data
    if gt_subsets is None:
        gt_subsets = {
            k: farthest_point_sample(gt_np, outputs[k].data.shape[0])
            for k in ("p1", "p2", "p3")
        }
    terms: dict[str, float] = {}
    total: Tensor | None = None
    for key, alpha in (("p1", weights.a1), ("p2", weights.a2), ("p3", weights.a3)):
        target = Tensor(gt_np[gt_subsets[key]])
        cd = chamfer_distance(outputs[key], target, squared=squared)
        terms[key] = cd.item()
        if alpha != 0.0:
            weighted = mul(cd, alpha)
            total = weighted if total is None else total + weighted
    cd_fine = chamfer_distance(outputs["fine"], gt_t, squared=squared)
    terms["fine"] = cd_fine.item()
    if weights.a_fine != 0.0:
        weighted = mul(cd_fine, weights.a_fine)
        total = weighted if total is None else total + weighted
    if total is None:
        total = Tensor(np.zeros(()))
    return total, terms


def normalize_to_unit_sphere(cloud) -> tuple[PointCloud, np.ndarray, float]:
    """Center at the centroid and scale so the farthest point has norm 1.

    Returns (normalized cloud, center, scale); x_original = x * scale + center.
    """
    pts = _as_xyz(cloud)
    center = pts.mean(axis=0)
    shifted = pts - center
    scale = float(np.linalg.norm(shifted, axis=1).max())
    if scale < 1e-12:
        raise GeometryError("normalize_to_unit_sphere: degenerate cloud (all points identical)")
    return PointCloud(shifted / scale), center, scale

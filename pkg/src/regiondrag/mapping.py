"""Dense handle -> target point correspondences.

Two construction paths: a numeric column-by-column scaling that works for
arbitrary brush regions, and exact affine/perspective transforms for 3- or
4-vertex polygon pairs.  Both emit exactly one point pair per target pixel.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (
    DegenerateGeometryError,
    EmptyRegionError,
    Region,
    ValidationError,
    _freeze,
)

_EMPTY_POINTS = np.zeros((0, 4), dtype=np.int64)
_EMPTY_SOURCE = np.zeros(0, dtype=np.int64)


@dataclass(frozen=True)
class MappedPointSet:
    """Point pairs as an (N, 4) int array with columns (hx, hy, tx, ty).

    ``source`` holds the region-pair index that produced each row.  Target
    positions are unique within a set; ``conflicts`` keeps rows dropped by
    :func:`merge_mappings` when a later region pair overwrote the same target.
    """

    points: np.ndarray = field(default_factory=lambda: _EMPTY_POINTS)
    source: np.ndarray = field(default_factory=lambda: _EMPTY_SOURCE)
    space: str = "image"
    column_snaps: int = 0
    hole_snaps: int = 0
    conflicts: np.ndarray = field(default_factory=lambda: np.zeros((0, 5), dtype=np.int64))

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.int64).reshape(-1, 4)
        src = np.asarray(self.source, dtype=np.int64).ravel()
        if len(src) != len(pts):
            raise ValidationError("source index count must match pair count")
        if self.space not in ("image", "latent"):
            raise ValidationError(f"unknown coordinate space {self.space!r}")
        if len(pts):
            keys = pts[:, 2] * (pts[:, 3].max() + 1) + pts[:, 3]
            if len(np.unique(keys)) != len(pts):
                raise ValidationError("duplicate target positions in mapped point set")
        object.__setattr__(self, "points", _freeze(pts))
        object.__setattr__(self, "source", _freeze(src))
        object.__setattr__(self, "conflicts", _freeze(np.asarray(self.conflicts, dtype=np.int64).reshape(-1, 5)))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def handles(self) -> np.ndarray:
        return self.points[:, 0:2]

    @property
    def targets(self) -> np.ndarray:
        return self.points[:, 2:4]

    def to_records(self) -> list[dict]:
        return [
            {"hx": int(hx), "hy": int(hy), "tx": int(tx), "ty": int(ty), "pair_index": int(s)}
            for (hx, hy, tx, ty), s in zip(self.points, self.source)
        ]

    @staticmethod
    def from_records(records: Sequence[dict], space: str = "image") -> "MappedPointSet":
        pts = np.array([[r["hx"], r["hy"], r["tx"], r["ty"]] for r in records], dtype=np.int64)
        src = np.array([r.get("pair_index", 0) for r in records], dtype=np.int64)
        if len(records) == 0:
            return MappedPointSet(space=space)
        return MappedPointSet(points=pts, source=src, space=space)

    def take(self, indices: np.ndarray) -> "MappedPointSet":
        return MappedPointSet(
            points=self.points[indices],
            source=self.source[indices],
            space=self.space,
            column_snaps=self.column_snaps,
            hole_snaps=self.hole_snaps,
        )


def _column_extents(pixels: np.ndarray, width: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-column (min y, max y, non-empty flag) for an (N, 2) pixel array."""
    lo = np.full(width, np.iinfo(np.int64).max, dtype=np.int64)
    hi = np.full(width, np.iinfo(np.int64).min, dtype=np.int64)
    np.minimum.at(lo, pixels[:, 0], pixels[:, 1])
    np.maximum.at(hi, pixels[:, 0], pixels[:, 1])
    return lo, hi, hi >= lo


def map_region_pair_dense(handle: Region, target: Region, index: int = 0,
                          space: str = "image") -> MappedPointSet:
    """Column-wise scaling correspondence between two arbitrary regions.

    Each target pixel (x, y) is assigned a handle pixel (x', y'): x is
    rescaled from the target's x-extent onto the handle's x-extent (floor),
    then y is rescaled from the target column at x onto the handle column at
    x' (floor again).  Zero-length extents map to the minimum.  Two
    repairs keep the output total on ragged regions: x' snaps to the nearest
    non-empty handle column, and y' snaps to the nearest in-region pixel of
    its column (ties toward the smaller coordinate in both cases).
    """
    if len(handle) == 0 or len(target) == 0:
        raise EmptyRegionError("dense mapping needs non-empty handle and target")

    tpx = target.pixels
    hpx = handle.pixels
    tx_min, _, tx_max, _ = target.bbox
    hx_min, _, hx_max, _ = handle.bbox

    x = tpx[:, 0]
    y = tpx[:, 1]
    t_range = tx_max - tx_min
    h_range = hx_max - hx_min
    if t_range == 0:
        xp = np.full(len(x), hx_min, dtype=np.int64)
    else:
        # integer floor of the rational scaling, exact for lattice inputs
        xp = hx_min + (x - tx_min) * h_range // t_range

    width = max(target.image_w, handle.image_w)
    t_lo, t_hi, _ = _column_extents(tpx, width)
    h_lo, h_hi, h_has = _column_extents(hpx, width)

    column_snaps = 0
    if not np.all(h_has[xp]):
        occupied = np.flatnonzero(h_has)
        missing = ~h_has[xp]
        column_snaps = int(missing.sum())
        xp = xp.copy()
        xp[missing] = _snap_nearest(occupied, xp[missing])

    ty_lo = t_lo[x]
    ty_span = t_hi[x] - ty_lo
    hy_lo = h_lo[xp]
    hy_span = h_hi[xp] - hy_lo
    yp = np.where(ty_span == 0, hy_lo, hy_lo + (y - ty_lo) * hy_span // np.maximum(ty_span, 1))

    hole_snaps = 0
    hmask = handle.to_mask()
    misses = ~hmask[np.clip(yp, 0, handle.image_h - 1), xp] | (yp < 0) | (yp >= handle.image_h)
    if np.any(misses):
        hole_snaps = int(misses.sum())
        yp = yp.copy()
        for col in np.unique(xp[misses]):
            sel = misses & (xp == col)
            col_ys = hpx[hpx[:, 0] == col, 1]
            yp[sel] = _snap_nearest(col_ys, yp[sel])

    points = np.stack([xp, yp, x, y], axis=1)
    return MappedPointSet(
        points=points,
        source=np.full(len(points), index, dtype=np.int64),
        space=space,
        column_snaps=column_snaps,
        hole_snaps=hole_snaps,
    )


def _snap_nearest(sorted_values: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """Nearest element of a sorted array for each query; ties pick the smaller."""
    pos = np.searchsorted(sorted_values, queries)
    lo = np.clip(pos - 1, 0, len(sorted_values) - 1)
    hi = np.clip(pos, 0, len(sorted_values) - 1)
    d_lo = np.abs(queries - sorted_values[lo])
    d_hi = np.abs(queries - sorted_values[hi])
    return np.where(d_lo <= d_hi, sorted_values[lo], sorted_values[hi])


def solve_affine(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """3x3 affine matrix taking three src points to three dst points."""
    a = np.column_stack([src, np.ones(3)])
    if abs(np.linalg.det(a)) < 1e-9:
        raise DegenerateGeometryError("collinear source vertices: affine solve is singular")
    coeff = np.linalg.solve(a, dst)  # (3, 2)
    mat = np.eye(3)
    mat[0, :] = [coeff[0, 0], coeff[1, 0], coeff[2, 0]]
    mat[1, :] = [coeff[0, 1], coeff[1, 1], coeff[2, 1]]
    if abs(np.linalg.det(mat[:2, :2])) < 1e-9:
        raise DegenerateGeometryError("collinear destination vertices: transform collapses the plane")
    return mat


def solve_homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """3x3 projective matrix (h33 = 1) taking four src points to four dst points."""
    rows = []
    rhs = []
    for (x, y), (u, v) in zip(src, dst):
        rows.append([x, y, 1, 0, 0, 0, -x * u, -y * u])
        rhs.append(u)
        rows.append([0, 0, 0, x, y, 1, -x * v, -y * v])
        rhs.append(v)
    a = np.array(rows, dtype=np.float64)
    try:
        if abs(np.linalg.det(a)) < 1e-9:
            raise DegenerateGeometryError("degenerate quad: perspective solve is singular")
        h = np.linalg.solve(a, np.array(rhs, dtype=np.float64))
    except np.linalg.LinAlgError as exc:
        raise DegenerateGeometryError(f"perspective solve failed: {exc}") from exc
    mat = np.array([[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]])
    if abs(np.linalg.det(mat)) < 1e-9:
        raise DegenerateGeometryError("degenerate quad: transform is not invertible")
    return mat


def map_region_pair_polygon(handle_vertices: Sequence[tuple[float, float]],
                            target_vertices: Sequence[tuple[float, float]],
                            target: Region, index: int = 0,
                            space: str = "image") -> MappedPointSet:
    """Exact transform correspondence for 3-vertex (affine) or 4-vertex
    (perspective) polygon pairs; vertex k of the target maps to vertex k of
    the handle.  Each target pixel is transformed and rounded to the nearest
    lattice point, clamped to the canvas.
    """
    hv = np.asarray(handle_vertices, dtype=np.float64)
    tv = np.asarray(target_vertices, dtype=np.float64)
    if hv.shape != tv.shape or hv.shape[0] not in (3, 4) or hv.shape[1] != 2:
        raise ValidationError(
            f"vertex lists must both be 3 (affine) or 4 (perspective) points, "
            f"got {tv.shape} -> {hv.shape}"
        )
    if len(target) == 0:
        raise EmptyRegionError("polygon mapping needs a non-empty target region")

    mat = solve_affine(tv, hv) if len(hv) == 3 else solve_homography(tv, hv)

    tpx = target.pixels
    ones = np.ones((len(tpx), 1))
    src = np.hstack([tpx.astype(np.float64), ones]) @ mat.T
    w = src[:, 2]
    if np.any(np.abs(w) < 1e-12):
        raise DegenerateGeometryError("perspective transform folds a target pixel to infinity")
    xs = src[:, 0] / w
    ys = src[:, 1] / w
    # round half up, then clamp into the canvas
    xp = np.clip(np.floor(xs + 0.5).astype(np.int64), 0, target.image_w - 1)
    yp = np.clip(np.floor(ys + 0.5).astype(np.int64), 0, target.image_h - 1)

    points = np.stack([xp, yp, tpx[:, 0], tpx[:, 1]], axis=1)
    return MappedPointSet(
        points=points,
        source=np.full(len(points), index, dtype=np.int64),
        space=space,
    )


def merge_mappings(per_pair: Sequence[MappedPointSet]) -> MappedPointSet:
    """Concatenate mappings in region-pair order; on target collisions the
    later pair wins and the dropped rows are kept in ``conflicts``."""
    if not per_pair:
        return MappedPointSet()
    spaces = {m.space for m in per_pair}
    if len(spaces) != 1:
        raise ValidationError(f"cannot merge mappings across coordinate spaces {sorted(spaces)}")

    points = np.concatenate([m.points for m in per_pair], axis=0)
    source = np.concatenate([m.source for m in per_pair], axis=0)
    if len(points) == 0:
        return MappedPointSet(space=per_pair[0].space)

    keys = points[:, 3] * (points[:, 2].max() + 1) + points[:, 2]
    # last occurrence wins: scan unique keys over the reversed array
    _, first_in_reversed = np.unique(keys[::-1], return_index=True)
    keep = np.sort(len(keys) - 1 - first_in_reversed)
    dropped = np.setdiff1d(np.arange(len(keys)), keep, assume_unique=True)

    conflicts = np.column_stack([points[dropped], source[dropped]])
    return MappedPointSet(
        points=points[keep],
        source=source[keep],
        space=per_pair[0].space,
        column_snaps=sum(m.column_snaps for m in per_pair),
        hole_snaps=sum(m.hole_snaps for m in per_pair),
        conflicts=conflicts,
    )

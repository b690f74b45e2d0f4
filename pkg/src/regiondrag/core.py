"""Shared value types: images, latents, regions, point pairs, edit configuration.

All types are immutable after construction (arrays are marked read-only) and
validate their invariants eagerly, so downstream stages can assume well-formed
inputs.  Coordinates are (x right, y down) with the origin at the top-left
pixel.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Sequence

import numpy as np


class RegionDragError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(RegionDragError, ValueError):
    """Malformed input: bad shapes, out-of-range values, broken invariants."""


class EmptyRegionError(ValidationError):
    """A region resolved to zero pixels (degenerate polygon or all-zero mask)."""


class DegenerateGeometryError(ValidationError):
    """Vertex correspondence yields a singular transform (collinear/degenerate)."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


# ---------------------------------------------------------------------------
# Images and latents


@dataclass(frozen=True)
class ImageBuffer:
    """Row-major real-valued image, shape (height, width, channels), values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise ValidationError(f"image data must be (h, w, c), got shape {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1 or data.shape[2] < 1:
            raise ValidationError(f"image dims must be positive, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValidationError("image data contains non-finite values")
        if data.min() < 0.0 or data.max() > 1.0:
            raise ValidationError("image values must lie in [0, 1]")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class LatentGrid:
    """Channel-major latent grid, shape (channels, height, width), tagged with a diffusion timestep."""

    data: np.ndarray
    timestep: int = 0

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 3:
            raise ValidationError(f"latent data must be (c, h, w), got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValidationError("latent data contains non-finite values")
        if self.timestep < 0:
            raise ValidationError(f"latent timestep must be >= 0, got {self.timestep}")
        object.__setattr__(self, "data", _freeze(data))
        object.__setattr__(self, "timestep", int(self.timestep))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def with_data(self, data: np.ndarray, timestep: int | None = None) -> "LatentGrid":
        return LatentGrid(data, self.timestep if timestep is None else timestep)


# ---------------------------------------------------------------------------
# Regions


@dataclass(frozen=True)
class Region:
    """A set of integer pixels inside a (image_w, image_h) canvas.

    ``pixels`` is an (N, 2) int array of (x, y), deduplicated and sorted
    row-major.  Polygon-born regions keep their vertex list so the matrix
    mapping path and serialization can reuse it.
    """

    pixels: np.ndarray
    image_w: int
    image_h: int
    kind: str = "brush"
    vertices: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[1] != 2:
            raise ValidationError(f"pixels must be (N, 2), got shape {px.shape}")
        if len(px) == 0:
            raise EmptyRegionError("region has no pixels")
        px = np.unique(px.astype(np.int64), axis=0)
        # unique() sorts by (x, y); reorder row-major (y, then x)
        order = np.lexsort((px[:, 0], px[:, 1]))
        px = px[order]
        if px[:, 0].min() < 0 or px[:, 1].min() < 0 or \
                px[:, 0].max() >= self.image_w or px[:, 1].max() >= self.image_h:
            raise ValidationError(
                f"region pixels out of bounds for {self.image_w}x{self.image_h} canvas"
            )
        if self.kind not in ("polygon", "brush"):
            raise ValidationError(f"unknown region kind {self.kind!r}")
        if self.kind == "polygon":
            if self.vertices is None or len(self.vertices) < 3:
                raise ValidationError("polygon regions need >= 3 vertices")
        object.__setattr__(self, "pixels", _freeze(px))

    def __len__(self) -> int:
        return len(self.pixels)

    @property
    def bbox(self) -> tuple[int, int, int, int]:
        """(x_min, y_min, x_max, y_max), inclusive."""
        xs, ys = self.pixels[:, 0], self.pixels[:, 1]
        return int(xs.min()), int(ys.min()), int(xs.max()), int(ys.max())

    def to_mask(self) -> np.ndarray:
        """Dense boolean mask of shape (image_h, image_w)."""
        mask = np.zeros((self.image_h, self.image_w), dtype=bool)
        mask[self.pixels[:, 1], self.pixels[:, 0]] = True
        return mask

    def to_record(self) -> dict:
        if self.kind == "polygon":
            return {
                "type": "polygon",
                "vertices": [[float(x), float(y)] for x, y in self.vertices],
                "image_w": self.image_w,
                "image_h": self.image_h,
            }
        return {
            "type": "brush",
            "mask_rle": encode_mask_rle(self.to_mask()),
            "image_w": self.image_w,
            "image_h": self.image_h,
        }

    @staticmethod
    def from_record(record: dict) -> "Region":
        try:
            kind = record["type"]
            w, h = int(record["image_w"]), int(record["image_h"])
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"bad region record: {exc}") from exc
        if kind == "polygon":
            return rasterize_region([tuple(v) for v in record["vertices"]], w, h)
        if kind == "brush":
            mask = decode_mask_rle(record["mask_rle"])
            if mask.shape != (h, w):
                raise ValidationError(
                    f"mask size {mask.shape} disagrees with image dims ({h}, {w})"
                )
            return rasterize_region(mask, w, h)
        raise ValidationError(f"unknown region record type {kind!r}")


def encode_mask_rle(mask: np.ndarray) -> dict:
    """Row-major run-length encoding; runs alternate starting with zeros."""
    flat = np.asarray(mask, dtype=bool).ravel()
    # run boundaries
    change = np.flatnonzero(np.diff(flat.astype(np.int8))) + 1
    starts = np.concatenate(([0], change, [flat.size]))
    counts = np.diff(starts).tolist()
    if flat.size and flat[0]:
        counts = [0] + counts
    return {"size": [int(mask.shape[0]), int(mask.shape[1])], "counts": counts}


def decode_mask_rle(rle: dict) -> np.ndarray:
    h, w = int(rle["size"][0]), int(rle["size"][1])
    counts = list(rle["counts"])
    if sum(counts) != h * w:
        raise ValidationError("RLE counts do not cover the mask")
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for run in counts:
        if value:
            flat[pos : pos + run] = True
        pos += run
        value = not value
    return flat.reshape(h, w)


def _polygon_lattice_mask(vertices: Sequence[tuple[float, float]], image_w: int, image_h: int) -> np.ndarray:
    """Lattice points covered by a polygon: even-odd interior plus boundary points."""
    vx = np.array([v[0] for v in vertices], dtype=np.float64)
    vy = np.array([v[1] for v in vertices], dtype=np.float64)
    x0 = max(0, int(np.floor(vx.min())))
    y0 = max(0, int(np.floor(vy.min())))
    x1 = min(image_w - 1, int(np.ceil(vx.max())))
    y1 = min(image_h - 1, int(np.ceil(vy.max())))
    mask = np.zeros((image_h, image_w), dtype=bool)
    if x1 < x0 or y1 < y0:
        return mask
    gx, gy = np.meshgrid(np.arange(x0, x1 + 1), np.arange(y0, y1 + 1))
    px = gx.astype(np.float64)
    py = gy.astype(np.float64)

    inside = np.zeros(px.shape, dtype=bool)
    boundary = np.zeros(px.shape, dtype=bool)
    n = len(vertices)
    for i in range(n):
        ax, ay = vx[i], vy[i]
        bx, by = vx[(i + 1) % n], vy[(i + 1) % n]
        # even-odd ray cast toward +x, half-open in y to count shared vertices once
        crosses = (ay > py) != (by > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = ax + (py - ay) * (bx - ax) / (by - ay)
        inside ^= crosses & (px < xint)
        # boundary: point on the closed segment [a, b]
        seg_len2 = (bx - ax) ** 2 + (by - ay) ** 2
        cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
        if seg_len2 == 0.0:
            boundary |= (px == ax) & (py == ay)
            continue
        tol = 1e-9 * max(1.0, seg_len2)
        dot = (px - ax) * (bx - ax) + (py - ay) * (by - ay)
        boundary |= (np.abs(cross) <= tol) & (dot >= -tol) & (dot <= seg_len2 + tol)

    mask[gy, gx] = inside | boundary
    return mask


def rasterize_region(shape, image_w: int, image_h: int) -> Region:
    """Resolve a polygon vertex list or a brush mask into a pixel-set region.

    Polygon interiors follow the even-odd rule; lattice points lying exactly
    on an edge are included.  An empty result raises ``EmptyRegionError``.
    """
    if image_w < 1 or image_h < 1:
        raise ValidationError(f"image dims must be positive, got {image_w}x{image_h}")
    arr = np.asarray(shape)
    if arr.ndim == 2 and arr.shape[1] == 2 and arr.dtype != bool:
        vertices = [(float(x), float(y)) for x, y in arr]
        if len(vertices) < 3:
            raise ValidationError(f"polygon needs >= 3 vertices, got {len(vertices)}")
        for x, y in vertices:
            if not (0 <= x < image_w and 0 <= y < image_h):
                raise ValidationError(f"polygon vertex ({x}, {y}) outside image bounds")
        mask = _polygon_lattice_mask(vertices, image_w, image_h)
        kind = "polygon"
    elif arr.ndim == 2 and arr.dtype == bool:
        if arr.shape != (image_h, image_w):
            raise ValidationError(
                f"brush mask shape {arr.shape} disagrees with image dims ({image_h}, {image_w})"
            )
        mask = arr
        kind = "brush"
        vertices = None
    else:
        raise ValidationError("shape must be a vertex list (N, 2) or a boolean mask")

    ys, xs = np.nonzero(mask)
    if len(xs) == 0:
        raise EmptyRegionError("region rasterized to zero pixels")
    return Region(
        pixels=np.stack([xs, ys], axis=1),
        image_w=image_w,
        image_h=image_h,
        kind=kind,
        vertices=tuple(vertices) if kind == "polygon" else None,
    )


def downscale_region(region: Region, factor: int) -> Region:
    """Floor-divide every pixel by ``factor`` and deduplicate.

    Used to carry image-resolution annotations down to latent resolution.
    """
    if factor < 1:
        raise ValidationError(f"downscale factor must be >= 1, got {factor}")
    if factor == 1:
        return region
    px = region.pixels // factor
    return Region(
        pixels=px,
        image_w=(region.image_w + factor - 1) // factor,
        image_h=(region.image_h + factor - 1) // factor,
        kind="brush",
    )


@dataclass(frozen=True)
class RegionPair:
    """One drag instruction: content of ``handle`` should land on ``target``."""

    handle: Region
    target: Region
    index: int = 0


@dataclass(frozen=True)
class PointPair:
    """A single handle -> target point correspondence."""

    handle: tuple[int, int]
    target: tuple[int, int]
    space: str = "image"

    def __post_init__(self):
        if self.space not in ("image", "latent"):
            raise ValidationError(f"unknown coordinate space {self.space!r}")
        object.__setattr__(self, "handle", (int(self.handle[0]), int(self.handle[1])))
        object.__setattr__(self, "target", (int(self.target[0]), int(self.target[1])))


# ---------------------------------------------------------------------------
# Edit configuration


CP_MODES = ("multi-step", "initial-only")


@dataclass(frozen=True)
class EditConfig:
    """Knobs of the editing pipeline; defaults match the reference setup."""

    total_trained_steps: int = 1000
    sampler_steps: int = 20
    invert_to: int = 500
    cp_stop: int = 200
    blend_alpha: float = 1.0
    eta: float = 1.0
    kv_swap: bool = True
    cp_mode: str = "multi-step"
    seed: int = 0

    def __post_init__(self):
        if self.total_trained_steps < 1:
            raise ValidationError("total_trained_steps must be >= 1")
        if self.sampler_steps < 1:
            raise ValidationError("sampler_steps must be >= 1")
        if not (0 <= self.cp_stop <= self.invert_to <= self.total_trained_steps):
            raise ValidationError(
                f"need 0 <= cp_stop <= invert_to <= total_trained_steps, "
                f"got cp_stop={self.cp_stop}, invert_to={self.invert_to}, "
                f"total={self.total_trained_steps}"
            )
        if not (0.0 <= self.blend_alpha <= 1.0):
            raise ValidationError(f"blend_alpha must be in [0, 1], got {self.blend_alpha}")
        if self.eta < 0.0:
            raise ValidationError(f"eta must be >= 0, got {self.eta}")
        if self.cp_mode not in CP_MODES:
            raise ValidationError(f"cp_mode must be one of {CP_MODES}, got {self.cp_mode!r}")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @staticmethod
    def from_dict(values: dict) -> "EditConfig":
        known = {f.name for f in fields(EditConfig)}
        unknown = set(values) - known
        if unknown:
            raise ValidationError(f"unknown config fields: {sorted(unknown)}")
        return EditConfig(**values)

    def replace(self, **changes) -> "EditConfig":
        return replace(self, **changes)

"""Edit-quality metrics.

Mean Distance measures how far dragged content landed from where it was
supposed to land: for each handle/target point pair, a feature matcher finds
the handle's content in the edited image, restricted to an elliptic-ish
search mask around the pair, and the normalized distance between the match
and the target is averaged over pairs.  Reported values are scaled by 100.

A mean-absolute pixel difference stands in for perceptual similarity; it is
NOT comparable to learned perceptual scores and is labelled accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import ImageBuffer, PointPair, ValidationError


def normalized_distance(p1: tuple[int, int], p2: tuple[int, int],
                        width: int, height: int) -> float:
    """Euclidean distance with each axis normalized by the image extent."""
    if width <= 0 or height <= 0:
        raise ValidationError("image dims must be positive")
    dx = (p2[0] - p1[0]) / width
    dy = (p2[1] - p1[1]) / height
    return float(np.hypot(dx, dy))


@dataclass(frozen=True)
class SearchMask:
    """Pixels worth searching for a dragged feature: everything closer to the
    handle or the target than their separation divided by sqrt(2)."""

    mask: np.ndarray
    handle: tuple[int, int]
    target: tuple[int, int]
    degenerate: bool = False


def build_search_mask(h: tuple[int, int], t: tuple[int, int],
                      width: int, height: int) -> SearchMask:
    """Mask(x) = 1 iff min(d(x,h), d(x,t)) < d(h,t)/sqrt(2), strict inequality.

    Coincident points give an empty mask, flagged degenerate.
    """
    for px, py in (h, t):
        if not (0 <= px < width and 0 <= py < height):
            raise ValidationError(f"point ({px}, {py}) outside {width}x{height} image")
    xs = np.arange(width)[None, :] / width
    ys = np.arange(height)[:, None] / height
    hx, hy = h[0] / width, h[1] / height
    tx, ty = t[0] / width, t[1] / height
    d_h = np.sqrt((xs - hx) ** 2 + (ys - hy) ** 2)
    d_t = np.sqrt((xs - tx) ** 2 + (ys - ty) ** 2)
    threshold = np.hypot(hx - tx, hy - ty) / np.sqrt(2.0)
    mask = np.minimum(d_h, d_t) < threshold
    return SearchMask(mask=mask, handle=tuple(h), target=tuple(t),
                      degenerate=threshold == 0.0)


@dataclass(frozen=True)
class MatchResult:
    handle: tuple[int, int]
    matched: tuple[int, int]
    score: float


class PatchCorrelationMatcher:
    """Normalized cross-correlation of a small patch around the handle point.

    The patch comes from the original image; candidates are every unmasked
    position of the edited image (or the whole image when no mask is given).
    Ties break toward the candidate closest to the target, then row-major.
    Deterministic and dependency-free; a learned feature matcher can be
    plugged in through the same call shape.
    """

    def __init__(self, patch: int = 7):
        if patch % 2 != 1 or patch < 1:
            raise ValidationError("patch size must be odd and positive")
        self.patch = patch
        self.name = f"patch-correlation-{patch}"

    def match(self, original: ImageBuffer, edited: ImageBuffer,
              handle: tuple[int, int], mask: np.ndarray | None = None,
              target: tuple[int, int] | None = None) -> MatchResult:
        if original.data.shape != edited.data.shape:
            raise ValidationError("original and edited images must share dims")
        h_img, w_img = original.height, original.width
        r = self.patch // 2

        pad_orig = np.pad(original.data, ((r, r), (r, r), (0, 0)), mode="edge")
        patch = pad_orig[handle[1]:handle[1] + self.patch, handle[0]:handle[0] + self.patch]
        patch = patch - patch.mean()
        norm = np.linalg.norm(patch)
        patch_hat = patch / norm if norm > 0 else patch

        if mask is None:
            ys, xs = np.mgrid[0:h_img, 0:w_img]
            ys, xs = ys.ravel(), xs.ravel()
        else:
            if mask.shape != (h_img, w_img):
                raise ValidationError(f"mask shape {mask.shape} != image dims {(h_img, w_img)}")
            ys, xs = np.nonzero(mask)
            if len(xs) == 0:
                fallback = tuple(target) if target is not None else tuple(handle)
                return MatchResult(handle=tuple(handle), matched=fallback, score=0.0)

        pad_edit = np.pad(edited.data, ((r, r), (r, r), (0, 0)), mode="edge")
        windows = sliding_window_view(pad_edit, (self.patch, self.patch), axis=(0, 1))
        cands = windows[ys, xs]  # (M, C, k, k)
        cands = cands - cands.mean(axis=(1, 2, 3), keepdims=True)
        denom = np.sqrt((cands ** 2).sum(axis=(1, 2, 3)))
        # candidate patch layout is (C, k, k); align the template the same way
        numer = (cands * patch_hat.transpose(2, 0, 1)).sum(axis=(1, 2, 3))
        with np.errstate(invalid="ignore", divide="ignore"):
            scores = np.where(denom > 0, numer / denom, 0.0)

        best = scores.max()
        tied = np.flatnonzero(scores >= best - 1e-12)
        if target is not None and len(tied) > 1:
            tx, ty = target
            d2 = ((xs[tied] - tx) / w_img) ** 2 + ((ys[tied] - ty) / h_img) ** 2
            tied = tied[d2 <= d2.min() + 1e-18]
        pick = tied[np.lexsort((xs[tied], ys[tied]))[0]]
        return MatchResult(
            handle=tuple(handle),
            matched=(int(xs[pick]), int(ys[pick])),
            score=float(scores[pick]),
        )


def mean_distance(original: ImageBuffer, edited: ImageBuffer,
                  pairs: list[PointPair], matcher: PatchCorrelationMatcher | None = None,
                  search_mask: bool = True) -> float:
    """Mean Distance scaled by 100 (table convention).

    Coincident pairs (nothing was supposed to move) contribute 0.
    ``search_mask=False`` searches the whole image, for ablation.
    """
    report = metric_report(original, edited, pairs, matcher, search_mask=search_mask)
    return report["md_x100"]


def metric_report(original: ImageBuffer, edited: ImageBuffer,
                  pairs: list[PointPair], matcher: PatchCorrelationMatcher | None = None,
                  search_mask: bool = True) -> dict:
    """Full per-pair breakdown plus the aggregate md_x100 / proxy_x100."""
    if original.data.shape != edited.data.shape:
        raise ValidationError("original and edited images must share dims")
    if not pairs:
        raise ValidationError("mean distance needs at least one point pair")
    matcher = matcher or PatchCorrelationMatcher()
    w_img, h_img = original.width, original.height

    per_pair = []
    dists = []
    for pair in pairs:
        h, t = pair.handle, pair.target
        if h == t:
            per_pair.append({"h": list(h), "t": list(t), "h_prime": list(h),
                             "d": 0.0, "score": 1.0, "degenerate": True})
            dists.append(0.0)
            continue
        mask = build_search_mask(h, t, w_img, h_img).mask if search_mask else None
        result = matcher.match(original, edited, h, mask=mask, target=t)
        d = normalized_distance(t, result.matched, w_img, h_img)
        per_pair.append({"h": list(h), "t": list(t), "h_prime": list(result.matched),
                         "d": d, "score": result.score, "degenerate": False})
        dists.append(d)

    return {
        "per_pair": per_pair,
        "md_x100": float(np.mean(dists) * 100.0),
        "proxy_x100": pixel_similarity_proxy(original, edited),
        "matcher": matcher.name,
    }


def pixel_similarity_proxy(a: ImageBuffer, b: ImageBuffer) -> float:
    """Mean absolute pixel difference scaled by 100; a crude stand-in where a
    learned perceptual metric would normally be reported."""
    if a.data.shape != b.data.shape:
        raise ValidationError("images must share dims")
    return float(np.abs(a.data - b.data).mean() * 100.0)

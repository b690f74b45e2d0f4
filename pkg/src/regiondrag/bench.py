"""Benchmark dataset handling and batch evaluation.

Datasets live in a directory with a ``manifest.jsonl`` (one JSON record per
sample) and PNG images.  Samples carry a prompt, optional editing mask,
point-pair annotations, and region-pair annotations; the runner edits each
sample, scores it with Mean Distance plus the pixel proxy, and aggregates.
Synthetic translation fixtures for desk-scale testing are generated here too.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    EditConfig,
    ImageBuffer,
    PointPair,
    Region,
    RegionDragError,
    RegionPair,
    ValidationError,
)
from .imageio import image_dims, load_png, save_png
from .mapping import MappedPointSet, map_region_pair_dense, merge_mappings
from .metrics import PatchCorrelationMatcher, mean_distance, pixel_similarity_proxy
from .pipeline import run_edit
from .rng import CounterRng

MANIFEST_NAME = "manifest.jsonl"


@dataclass
class BenchSample:
    sample_id: str
    image_path: Path
    prompt: str
    mask: Region | None = None
    point_pairs: list[PointPair] = field(default_factory=list)
    region_pairs: list[RegionPair] = field(default_factory=list)

    def __post_init__(self):
        if not self.point_pairs and not self.region_pairs:
            raise ValidationError(f"sample {self.sample_id!r} has no point or region annotations")

    def load_image(self) -> ImageBuffer:
        return load_png(self.image_path)

    def to_record(self, root: Path) -> dict:
        rec: dict = {
            "id": self.sample_id,
            "image": str(self.image_path.relative_to(root)),
            "prompt": self.prompt,
        }
        if self.mask is not None:
            rec["mask"] = self.mask.to_record()
        if self.point_pairs:
            rec["points"] = [
                {"hx": p.handle[0], "hy": p.handle[1], "tx": p.target[0], "ty": p.target[1]}
                for p in self.point_pairs
            ]
        if self.region_pairs:
            rec["regions"] = [
                {"handle": rp.handle.to_record(), "target": rp.target.to_record()}
                for rp in self.region_pairs
            ]
        return rec

    @staticmethod
    def from_record(record: dict, root: Path) -> "BenchSample":
        sample_id = str(record["id"])
        image_path = root / record["image"]
        if not image_path.is_file():
            raise ValidationError(f"image file missing: {image_path}")
        w, h = image_dims(image_path)

        mask = Region.from_record(record["mask"]) if "mask" in record else None
        points = []
        for p in record.get("points", []):
            pair = PointPair(handle=(p["hx"], p["hy"]), target=(p["tx"], p["ty"]))
            for x, y in (pair.handle, pair.target):
                if not (0 <= x < w and 0 <= y < h):
                    raise ValidationError(f"point ({x}, {y}) outside image {w}x{h}")
            points.append(pair)
        regions = []
        for i, rp in enumerate(record.get("regions", [])):
            handle = Region.from_record(rp["handle"])
            target = Region.from_record(rp["target"])
            for r in (handle, target):
                if (r.image_w, r.image_h) != (w, h):
                    raise ValidationError(
                        f"region canvas {r.image_w}x{r.image_h} disagrees with image {w}x{h}"
                    )
            regions.append(RegionPair(handle=handle, target=target, index=i))
        if mask is not None and (mask.image_w, mask.image_h) != (w, h):
            raise ValidationError("mask canvas disagrees with image dims")

        return BenchSample(
            sample_id=sample_id,
            image_path=image_path,
            prompt=str(record.get("prompt", "")),
            mask=mask,
            point_pairs=points,
            region_pairs=regions,
        )


@dataclass
class DatasetLoadResult:
    samples: list[BenchSample]
    rejected: list[dict]

    def __iter__(self):
        return iter(self.samples)

    def __len__(self):
        return len(self.samples)


def load_dataset(root) -> DatasetLoadResult:
    """Read and validate every manifest record; invalid samples are recorded
    with their reason and skipped rather than aborting the load."""
    root = Path(root)
    manifest = root / MANIFEST_NAME
    if not manifest.is_file():
        raise ValidationError(f"no {MANIFEST_NAME} under {root}")
    samples: list[BenchSample] = []
    rejected: list[dict] = []
    for lineno, line in enumerate(manifest.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
            samples.append(BenchSample.from_record(record, root))
        except (ValidationError, KeyError, TypeError, json.JSONDecodeError) as exc:
            rejected.append({
                "line": lineno,
                "id": record.get("id", "?") if isinstance(record, dict) else "?",
                "reason": str(exc),
            })
    return DatasetLoadResult(samples=samples, rejected=rejected)


def write_manifest(samples: list[BenchSample], root) -> Path:
    root = Path(root)
    manifest = root / MANIFEST_NAME
    lines = [json.dumps(s.to_record(root), sort_keys=True) for s in samples]
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


# ---------------------------------------------------------------------------
# Statistics


def equivalent_point_stats(samples: list[BenchSample]) -> dict:
    """Dense-mapping pair counts per region pair, their median, and a
    log10 histogram in 0.25-wide bins."""
    counts = []
    for sample in samples:
        for rp in sample.region_pairs:
            counts.append(len(map_region_pair_dense(rp.handle, rp.target)))
    if not counts:
        return {"per_pair_counts": [], "median": None, "histogram": None}
    logs = np.log10(counts)
    width = 0.25
    top = math.floor(logs.max() / width) + 1
    edges = np.arange(0, top + 1) * width
    hist, _ = np.histogram(logs, bins=edges)
    return {
        "per_pair_counts": [int(c) for c in counts],
        "median": float(np.median(counts)),
        "histogram": {
            "bin_width": width,
            "bin_edges": [float(e) for e in edges],
            "counts": [int(c) for c in hist],
        },
    }


def sample_point_subset(pairs: MappedPointSet, fraction: float, seed: int) -> MappedPointSet:
    """Uniform without-replacement subset of ceil(fraction * N) pairs."""
    if not 0.0 < fraction <= 1.0:
        raise ValidationError(f"fraction must be in (0, 1], got {fraction}")
    if len(pairs) == 0:
        raise ValidationError("cannot subsample an empty point set")
    if fraction == 1.0:
        return pairs
    k = math.ceil(fraction * len(pairs))
    gen = CounterRng(seed).generator("point-subset")
    idx = np.sort(gen.choice(len(pairs), size=k, replace=False))
    return pairs.take(idx)


def run_subset_edit(image: ImageBuffer, region_pairs, prompt: str, cfg: EditConfig,
                    backend, fraction: float, subset_seed: int, codec=None):
    """Edit using only a random fraction of the dense correspondence; the
    sparse-input ablation arm."""
    from .pipeline import IdentityCodec, prepare_mapping

    codec = codec or IdentityCodec()
    mapped = prepare_mapping(region_pairs, codec.scale)
    subset = sample_point_subset(mapped, fraction, subset_seed)
    return run_edit(image, region_pairs, prompt, cfg, backend, codec=codec,
                    mapped_points=subset)


# ---------------------------------------------------------------------------
# Batch runner


@dataclass
class BenchReport:
    rows: list[dict]
    aggregates: dict
    config: dict
    failed: list[dict]

    def to_json_dict(self) -> dict:
        return {
            "rows": self.rows,
            "aggregates": self.aggregates,
            "config": self.config,
            "failed": self.failed,
        }

    def to_table(self) -> str:
        lines = ["id,md_x100,proxy_x100,wall_ms"]
        for row in self.rows:
            lines.append(
                f"{row['id']},{row['md_x100']:.4f},{row['proxy_x100']:.4f},{row['wall_ms']:.2f}"
            )
        return "\n".join(lines) + "\n"


def _eval_points(sample: BenchSample, cap: int = 32) -> list[PointPair]:
    """Points used for scoring: explicit annotations when present, otherwise a
    seeded subset of the dense region correspondence."""
    if sample.point_pairs:
        return sample.point_pairs
    per_pair = [
        map_region_pair_dense(rp.handle, rp.target, index=i)
        for i, rp in enumerate(sample.region_pairs)
    ]
    merged = merge_mappings(per_pair)
    if len(merged) > cap:
        # process-stable seed derived from the sample id
        digest = hashlib.blake2b(sample.sample_id.encode(), digest_size=4).digest()
        merged = sample_point_subset(merged, cap / len(merged),
                                     seed=int.from_bytes(digest, "little"))
    return [
        PointPair(handle=(int(hx), int(hy)), target=(int(tx), int(ty)))
        for hx, hy, tx, ty in merged.points
    ]


def run_benchmark(samples: list[BenchSample], cfg: EditConfig, backend,
                  matcher: PatchCorrelationMatcher | None = None,
                  codec=None, workers: int = 1) -> BenchReport:
    """Edit and score every sample; failures are excluded from aggregates but
    counted.  Report rows follow the input sample order."""
    matcher = matcher or PatchCorrelationMatcher()

    def one(sample: BenchSample) -> tuple[dict | None, dict | None]:
        t0 = time.perf_counter()
        try:
            if not sample.region_pairs:
                raise ValidationError("sample has no region pairs to edit")
            original = sample.load_image()
            result = run_edit(original, sample.region_pairs, sample.prompt, cfg,
                              backend, codec=codec)
            points = _eval_points(sample)
            md = mean_distance(original, result.image, points, matcher)
            proxy = pixel_similarity_proxy(original, result.image)
            wall_ms = (time.perf_counter() - t0) * 1000.0
            return (
                {"id": sample.sample_id, "md_x100": md, "proxy_x100": proxy,
                 "wall_ms": wall_ms},
                None,
            )
        except (RegionDragError, OSError) as exc:
            return None, {"id": sample.sample_id, "reason": str(exc)}

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, samples))
    else:
        outcomes = [one(s) for s in samples]

    rows = [row for row, _ in outcomes if row is not None]
    failed = [err for _, err in outcomes if err is not None]

    aggregates: dict = {"samples": len(rows), "failed": len(failed)}
    if rows:
        aggregates.update({
            "mean_md_x100": float(np.mean([r["md_x100"] for r in rows])),
            "mean_proxy_x100": float(np.mean([r["proxy_x100"] for r in rows])),
            "mean_wall_ms": float(np.mean([r["wall_ms"] for r in rows])),
        })
    return BenchReport(
        rows=rows,
        aggregates=aggregates,
        config={"edit": cfg.to_dict(),
                "backend": getattr(backend, "name", type(backend).__name__),
                "matcher": matcher.name},
        failed=failed,
    )


# ---------------------------------------------------------------------------
# Synthetic fixtures


def textured_square_image(size: int = 64, square: int = 8,
                          origin: tuple[int, int] = (24, 24),
                          base: float = 0.55, span: float = 0.45,
                          tex_seed: int = 7) -> ImageBuffer:
    """Black canvas with one bright square of seeded random texture.

    Random texture keeps every local patch unique (so correlation matching is
    well-posed) and the brightness floor keeps the square separable from
    residual background noise."""
    data = np.zeros((size, size, 3))
    x0, y0 = origin
    gen = np.random.default_rng(tex_seed)
    data[y0:y0 + square, x0:x0 + square] = base + span * gen.random((square, square, 3))
    return ImageBuffer(data)


def brightness_centroid(image: ImageBuffer, threshold: float = 0.5) -> tuple[float, float]:
    """Intensity-weighted centroid of pixels brighter than ``threshold``
    (mean over channels); robust against faint background residue."""
    brightness = image.data.mean(axis=2)
    mask = brightness > threshold
    if not mask.any():
        mask = brightness >= brightness.max()
    ys, xs = np.nonzero(mask)
    weights = brightness[ys, xs]
    total = weights.sum()
    return float((xs * weights).sum() / total), float((ys * weights).sum() / total)


def make_translation_sample(shift: int = 16, size: int = 64, square: int = 8,
                            origin: tuple[int, int] = (24, 24),
                            tex_seed: int = 7) -> dict:
    """One synthetic drag: a textured square moved ``shift`` px to the right.

    The handle rectangle includes a background margin of ``shift`` px to the
    left of the square, so the same region pair both relocates the square and
    repaints its old position with background.
    """
    x0, y0 = origin
    image = textured_square_image(size, square, origin, tex_seed=tex_seed)
    margin = shift
    hx0, hy0 = x0 - margin, y0 - square
    hx1, hy1 = x0 + 2 * square, y0 + 2 * square
    if hx0 < 0 or hy0 < 0 or hx1 + shift > size or hy1 > size:
        raise ValidationError("translation fixture does not fit the canvas")

    hmask = np.zeros((size, size), dtype=bool)
    hmask[hy0:hy1, hx0:hx1] = True
    tmask = np.zeros((size, size), dtype=bool)
    tmask[hy0:hy1, hx0 + shift:hx1 + shift] = True
    handle = Region(pixels=np.argwhere(hmask)[:, ::-1], image_w=size, image_h=size)
    target = Region(pixels=np.argwhere(tmask)[:, ::-1], image_w=size, image_h=size)

    points = [
        PointPair(handle=(x, y), target=(x + shift, y))
        for y in range(y0, y0 + square)
        for x in range(x0, x0 + square)
    ]
    return {
        "image": image,
        "region_pairs": [RegionPair(handle=handle, target=target, index=0)],
        "point_pairs": points,
        "shift": shift,
        "square_center": (x0 + (square - 1) / 2.0, y0 + (square - 1) / 2.0),
    }


def build_synthetic_dataset(root, count: int = 10, shift: int = 16) -> DatasetLoadResult:
    """Write ``count`` translation samples (varying square placement) plus a
    manifest under ``root`` and load them back."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    samples = []
    gen = CounterRng(1234).generator("synthetic-dataset")
    for i in range(count):
        ox = int(gen.integers(shift + 2, 30))
        oy = int(gen.integers(10, 40))
        fixture = make_translation_sample(shift=shift, origin=(ox, oy), tex_seed=i)
        image_name = f"sample_{i:03d}.png"
        save_png(fixture["image"], root / image_name)
        samples.append(BenchSample(
            sample_id=f"synthetic-{i:03d}",
            image_path=root / image_name,
            prompt="a bright textured square on a black background",
            point_pairs=fixture["point_pairs"],
            region_pairs=fixture["region_pairs"],
        ))
    write_manifest(samples, root)
    return load_dataset(root)

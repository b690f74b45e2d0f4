"""End-to-end region-drag editing.

The pipeline encodes the image, inverts it stepwise to the configured depth
while caching every intermediate latent and the attention K/V of each hop,
noise-blends the handle area, then denoises a copy: at every step inside the
copy-paste window the cached source latent is pasted onto the target
positions, and the cached K/V are injected into the backend so the edit keeps
the original's layout.  The copied source is always the cached inversion
latent of the same timestep, which is what makes a single inversion/denoise
cycle sufficient.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .backends import AttentionCache, Conditioning, DenoiserOutput
from .core import (
    EditConfig,
    EmptyRegionError,
    ImageBuffer,
    LatentGrid,
    Region,
    RegionDragError,
    RegionPair,
    ValidationError,
    downscale_region,
)
from .mapping import (
    MappedPointSet,
    map_region_pair_dense,
    map_region_pair_polygon,
    merge_mappings,
)
from .rng import CounterRng
from .schedule import NoiseSchedule, SamplerGrid, blend_handle, build_sampler_grid, transition


class PipelineError(RegionDragError, RuntimeError):
    """A stage failed mid-run; carries the stage name and timestep."""

    def __init__(self, stage: str, timestep: int | None, message: str):
        self.stage = stage
        self.timestep = timestep
        at = f" at t={timestep}" if timestep is not None else ""
        super().__init__(f"{stage} stage failed{at}: {message}")


# ---------------------------------------------------------------------------
# Latent codecs


class IdentityCodec:
    """Pass-through codec: latent = channel-major image, factor 1."""

    scale = 1

    def encode(self, image: ImageBuffer) -> LatentGrid:
        return LatentGrid(image.data.transpose(2, 0, 1), timestep=0)

    def decode(self, latent: LatentGrid) -> ImageBuffer:
        return ImageBuffer(np.clip(latent.data, 0.0, 1.0).transpose(1, 2, 0))


class PoolingCodec:
    """Average-pool encode / nearest-neighbour decode at an integer factor.

    A stand-in with the same geometry as a learned autoencoder (1/8 scale for
    the SD convention); image dims must divide by the factor.
    """

    def __init__(self, scale: int = 8):
        if scale < 1:
            raise ValidationError(f"codec scale must be >= 1, got {scale}")
        self.scale = scale

    def encode(self, image: ImageBuffer) -> LatentGrid:
        f = self.scale
        h, w, c = image.data.shape
        if h % f or w % f:
            raise ValidationError(f"image dims {w}x{h} not divisible by codec scale {f}")
        x = image.data.transpose(2, 0, 1)
        pooled = x.reshape(c, h // f, f, w // f, f).mean(axis=(2, 4))
        return LatentGrid(pooled, timestep=0)

    def decode(self, latent: LatentGrid) -> ImageBuffer:
        f = self.scale
        up = latent.data.repeat(f, axis=1).repeat(f, axis=2)
        return ImageBuffer(np.clip(up, 0.0, 1.0).transpose(1, 2, 0))


# ---------------------------------------------------------------------------
# Copy-paste


def copy_paste(src: LatentGrid, dst: LatentGrid, pairs: MappedPointSet) -> LatentGrid:
    """Write src at every handle point onto dst at the paired target point
    (all channels).  Non-target positions stay bit-identical to dst."""
    if src.data.shape != dst.data.shape:
        raise ValidationError(
            f"source shape {src.data.shape} != destination shape {dst.data.shape}"
        )
    out = dst.data.copy()
    if len(pairs):
        _, h, w = dst.data.shape
        pts = pairs.points
        if (pts < 0).any() or (pts[:, [0, 2]] >= w).any() or (pts[:, [1, 3]] >= h).any():
            raise ValidationError(f"mapped points out of bounds for {w}x{h} latent")
        out[:, pts[:, 3], pts[:, 2]] = src.data[:, pts[:, 1], pts[:, 0]]
    return dst.with_data(out)


# ---------------------------------------------------------------------------
# Session


@dataclass
class EditSession:
    """Everything cached or measured during one edit."""

    config: EditConfig
    grid: SamplerGrid
    trajectory: dict[int, LatentGrid]
    kv_cache: AttentionCache
    mapped_points: MappedPointSet
    handle_mask: np.ndarray
    backend_name: str
    prompt: str
    timings: dict[str, float] = field(default_factory=dict)
    cp_timesteps: list[int] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def validate(self) -> None:
        expected = [0] + [t for t in self.grid.timesteps if t <= self.grid.invert_to]
        missing = [t for t in expected if t not in self.trajectory]
        if missing:
            raise ValidationError(f"inversion trajectory missing timesteps {missing}")
        if len(self.mapped_points):
            z0 = self.trajectory[0]
            pts = self.mapped_points.points
            if (pts < 0).any() or (pts[:, [0, 2]] >= z0.width).any() or \
                    (pts[:, [1, 3]] >= z0.height).any():
                raise ValidationError("mapped points fall outside the latent bounds")

    def timing_report(self) -> dict:
        report = dict(self.timings)
        report["cp_timesteps"] = list(self.cp_timesteps)
        return report

    def export_debug(self, directory) -> None:
        """Dump cached latents and KV sizes for offline inspection."""
        import json
        from pathlib import Path

        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        np.savez_compressed(
            directory / "trajectory.npz",
            **{f"z_{t}": lg.data for t, lg in sorted(self.trajectory.items())},
        )
        (directory / "kv_sizes.json").write_text(
            json.dumps(self.kv_cache.size_report(), indent=2)
        )
        (directory / "timings.json").write_text(json.dumps(self.timing_report(), indent=2))


@dataclass
class EditResult:
    image: ImageBuffer
    session: EditSession


# ---------------------------------------------------------------------------
# Stages


def prepare_mapping(region_pairs: list[RegionPair], scale: int) -> MappedPointSet:
    """Per-pair dense or polygon correspondences at latent resolution, merged.

    Polygon pairs with matching 3- or 4-vertex outlines take the exact
    transform path (vertices divided by the codec scale); everything else
    goes through the numeric column scaling on floor-downscaled regions.
    """
    if not region_pairs:
        raise ValidationError("at least one region pair is required")
    per_pair = []
    for i, pair in enumerate(region_pairs):
        handle, target = pair.handle, pair.target
        if (handle.image_w, handle.image_h) != (target.image_w, target.image_h):
            raise ValidationError(f"region pair {i}: handle and target canvases differ")
        polygon_path = (
            handle.kind == "polygon" and target.kind == "polygon"
            and handle.vertices is not None and target.vertices is not None
            and len(handle.vertices) == len(target.vertices)
            and len(handle.vertices) in (3, 4)
        )
        target_latent = downscale_region(target, scale)
        if polygon_path:
            hv = [(x / scale, y / scale) for x, y in handle.vertices]
            tv = [(x / scale, y / scale) for x, y in target.vertices]
            mapping = map_region_pair_polygon(hv, tv, target_latent, index=i, space="latent")
        else:
            handle_latent = downscale_region(handle, scale)
            mapping = map_region_pair_dense(handle_latent, target_latent, index=i, space="latent")
        per_pair.append(mapping)
    merged = merge_mappings(per_pair)
    if len(merged) == 0:
        raise EmptyRegionError("merged mapping is empty")
    return merged


def latent_handle_mask(region_pairs: list[RegionPair], scale: int,
                       latent_h: int, latent_w: int) -> np.ndarray:
    """Union of all handle regions, floor-downscaled to latent resolution."""
    mask = np.zeros((latent_h, latent_w), dtype=bool)
    for pair in region_pairs:
        r = downscale_region(pair.handle, scale)
        px = r.pixels
        keep = (px[:, 0] < latent_w) & (px[:, 1] < latent_h)
        mask[px[keep, 1], px[keep, 0]] = True
    return mask


def invert_with_cache(z0: LatentGrid, cond: Conditioning, backend,
                      schedule: NoiseSchedule, grid: SamplerGrid, rng: CounterRng,
                      capture_kv: bool = True) -> tuple[dict[int, LatentGrid], AttentionCache]:
    """Walk the grid upward from the clean latent, caching every intermediate
    latent and, per hop, the attention K/V keyed by the destination timestep
    (the step that will consume them on the way back down)."""
    trajectory = {0: z0}
    cache = AttentionCache()
    z = z0
    for s, t in grid.inversion_path():
        try:
            out: DenoiserOutput = backend.predict_noise(z, s, cond, capture_kv=capture_kv)
        except RegionDragError:
            raise
        except Exception as exc:  # backend misbehaved mid-trajectory
            raise PipelineError("invert", s, str(exc)) from exc
        if out.captured_kv is not None:
            cache.put_fragment(t, out.captured_kv)
        z = transition(z, s, t, out.eps, schedule, rng, noise_purpose="invert")
        trajectory[t] = z
    return trajectory, cache


def denoise_with_edits(start: LatentGrid, trajectory: dict[int, LatentGrid],
                       cache: AttentionCache, mapped: MappedPointSet,
                       cfg: EditConfig, cond: Conditioning, backend,
                       schedule: NoiseSchedule, grid: SamplerGrid, rng: CounterRng,
                       ) -> tuple[LatentGrid, list[int], float, float]:
    """Denoise ``start`` down the grid, pasting cached source latents onto the
    target points inside the copy-paste window and injecting cached K/V.

    Returns (final latent, timesteps where copy-paste ran, denoise seconds,
    copy-paste seconds).
    """
    z = start
    cp_steps: list[int] = []
    cp_time = 0.0
    den_time = 0.0
    for s, t in grid.denoising_path():
        if cfg.cp_mode == "initial-only":
            do_cp = s == grid.invert_to
        else:
            do_cp = s >= grid.cp_stop
        if do_cp and len(mapped):
            t0 = time.perf_counter()
            z = copy_paste(trajectory[s], z, mapped)
            cp_time += time.perf_counter() - t0
            cp_steps.append(s)
        t0 = time.perf_counter()
        kv_override = cache.fragment_at(s) if cfg.kv_swap else None
        try:
            out = backend.predict_noise(z, s, cond, kv_override=kv_override)
        except RegionDragError:
            raise
        except Exception as exc:
            raise PipelineError("denoise", s, str(exc)) from exc
        z = transition(z, s, t, out.eps, schedule, rng, noise_purpose="denoise")
        den_time += time.perf_counter() - t0
    return z, cp_steps, den_time, cp_time


def run_edit(image: ImageBuffer, region_pairs: list[RegionPair], prompt: str,
             cfg: EditConfig, backend, codec=None,
             schedule_family: str = "sd-scaled-linear",
             mapped_points: MappedPointSet | None = None) -> EditResult:
    """Execute the full edit and return the decoded image plus the session.

    ``mapped_points`` replaces the derived correspondence when given (the
    point-subset ablation path); it must be in latent coordinates.
    """
    codec = codec or IdentityCodec()
    total0 = time.perf_counter()

    t0 = time.perf_counter()
    if mapped_points is None:
        mapped = prepare_mapping(region_pairs, codec.scale)
    else:
        if mapped_points.space != "latent":
            raise ValidationError("mapped_points override must be in latent coordinates")
        mapped = mapped_points
    map_ms = (time.perf_counter() - t0) * 1000.0

    schedule = NoiseSchedule.create(schedule_family, cfg.total_trained_steps, eta=cfg.eta)
    grid = build_sampler_grid(cfg)
    rng = CounterRng(cfg.seed)
    cond = backend.conditioning(prompt)

    t0 = time.perf_counter()
    z0 = codec.encode(image)
    trajectory, cache = invert_with_cache(
        z0, cond, backend, schedule, grid, rng, capture_kv=cfg.kv_swap
    )
    invert_ms = (time.perf_counter() - t0) * 1000.0

    mask = latent_handle_mask(region_pairs, codec.scale, z0.height, z0.width)
    start = blend_handle(trajectory[grid.invert_to], mask, cfg.blend_alpha, rng)

    final, cp_steps, den_s, cp_s = denoise_with_edits(
        start, trajectory, cache, mapped, cfg, cond, backend, schedule, grid, rng
    )

    t0 = time.perf_counter()
    edited = codec.decode(final)
    decode_ms = (time.perf_counter() - t0) * 1000.0

    warnings = []
    if mapped.column_snaps:
        warnings.append(f"{mapped.column_snaps} mapped points snapped across handle columns")
    if mapped.hole_snaps:
        warnings.append(f"{mapped.hole_snaps} mapped points snapped over handle holes")
    if len(mapped.conflicts):
        warnings.append(f"{len(mapped.conflicts)} overlapping target writes resolved later-wins")

    session = EditSession(
        config=cfg,
        grid=grid,
        trajectory=trajectory,
        kv_cache=cache,
        mapped_points=mapped,
        handle_mask=mask,
        backend_name=getattr(backend, "name", type(backend).__name__),
        prompt=prompt,
        timings={
            "map_ms": map_ms,
            "invert_ms": invert_ms,
            "denoise_ms": den_s * 1000.0,
            "cp_ms": cp_s * 1000.0,
            "decode_ms": decode_ms,
            "total_ms": (time.perf_counter() - total0) * 1000.0,
        },
        cp_timesteps=cp_steps,
        warnings=warnings,
    )
    session.validate()
    return EditResult(image=edited, session=session)

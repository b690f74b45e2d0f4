"""Shared request plumbing for the CLI and the HTTP service."""

from __future__ import annotations

import os

from .backends import create_backend, list_backends
from .core import EditConfig, Region, RegionPair, ValidationError

BACKEND_ENV_VAR = "REGIONDRAG_BACKEND"

CONFIG_FIELDS = (
    "total_trained_steps",
    "sampler_steps",
    "invert_to",
    "cp_stop",
    "blend_alpha",
    "eta",
    "kv_swap",
    "cp_mode",
    "seed",
)


def parse_region_pairs(payload) -> list[RegionPair]:
    """Accept a list of {handle, target} records or a {"pairs": [...]} wrapper."""
    if isinstance(payload, dict):
        payload = payload.get("pairs", payload.get("regions"))
    if not isinstance(payload, list) or not payload:
        raise ValidationError("expected a non-empty list of {handle, target} region records")
    pairs = []
    for i, rec in enumerate(payload):
        if not isinstance(rec, dict) or "handle" not in rec or "target" not in rec:
            raise ValidationError(f"region pair {i} must carry 'handle' and 'target' records")
        pairs.append(RegionPair(
            handle=Region.from_record(rec["handle"]),
            target=Region.from_record(rec["target"]),
            index=i,
        ))
    return pairs


def merged_config(*layers: dict | None) -> EditConfig:
    """Later layers win; None values are treated as unset."""
    values: dict = {}
    for layer in layers:
        if not layer:
            continue
        unknown = set(layer) - set(CONFIG_FIELDS)
        if unknown:
            raise ValidationError(f"unknown config fields: {sorted(unknown)}")
        values.update({k: v for k, v in layer.items() if v is not None})
    return EditConfig.from_dict(values)


def resolve_backend(name: str | None):
    """Explicit name, else the environment default, else the toy backend."""
    return create_backend(name or os.environ.get(BACKEND_ENV_VAR) or "toy")


def backend_names() -> list[str]:
    return list_backends()


def map_preview(pairs: list[RegionPair], scale: int = 1) -> dict:
    """Merged point correspondence for a set of region pairs, as wire records.

    scale 1 previews at image resolution; larger scales preview what the
    pipeline will paste at latent resolution.
    """
    from .core import downscale_region
    from .mapping import map_region_pair_dense, map_region_pair_polygon, merge_mappings

    per_pair = []
    for rp in pairs:
        polygon_path = (
            rp.handle.kind == rp.target.kind == "polygon"
            and len(rp.handle.vertices) == len(rp.target.vertices)
            and len(rp.handle.vertices) in (3, 4)
        )
        space = "image" if scale == 1 else "latent"
        if polygon_path:
            hv = [(x / scale, y / scale) for x, y in rp.handle.vertices]
            tv = [(x / scale, y / scale) for x, y in rp.target.vertices]
            per_pair.append(map_region_pair_polygon(
                hv, tv, downscale_region(rp.target, scale), index=rp.index, space=space))
        else:
            per_pair.append(map_region_pair_dense(
                downscale_region(rp.handle, scale), downscale_region(rp.target, scale),
                index=rp.index, space=space))
    merged = merge_mappings(per_pair)
    return {
        "pairs": merged.to_records(),
        "count": len(merged),
        "space": merged.space,
        "column_snaps": merged.column_snaps,
        "hole_snaps": merged.hole_snaps,
        "conflicts_dropped": len(merged.conflicts),
    }

"""Region-based drag image editing over a pluggable diffusion denoiser."""

from .backends import (
    AttentionCache,
    BackendError,
    Conditioning,
    ConstantDenoiser,
    DenoiserOutput,
    ToyDenoiser,
    ZeroDenoiser,
    create_backend,
    list_backends,
    register_backend,
)
from .core import (
    DegenerateGeometryError,
    EditConfig,
    EmptyRegionError,
    ImageBuffer,
    LatentGrid,
    PointPair,
    Region,
    RegionDragError,
    RegionPair,
    ValidationError,
    downscale_region,
    rasterize_region,
)
from .mapping import (
    MappedPointSet,
    map_region_pair_dense,
    map_region_pair_polygon,
    merge_mappings,
)
from .metrics import (
    PatchCorrelationMatcher,
    SearchMask,
    build_search_mask,
    mean_distance,
    metric_report,
    normalized_distance,
    pixel_similarity_proxy,
)
from .pipeline import (
    EditResult,
    EditSession,
    IdentityCodec,
    PipelineError,
    PoolingCodec,
    copy_paste,
    run_edit,
)
from .rng import CounterRng
from .schedule import (
    NoiseSchedule,
    SamplerGrid,
    ScheduleError,
    blend_handle,
    build_sampler_grid,
    schedule_table,
    transition,
)

__version__ = "0.1.0"

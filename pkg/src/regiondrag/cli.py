"""Command-line front end: edit, map, bench, stats, serve."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bench import equivalent_point_stats, load_dataset, run_benchmark
from .core import EditConfig, RegionDragError, ValidationError
from .imageio import image_dims, load_png, save_png
from .interface import map_preview, merged_config, parse_region_pairs, resolve_backend
from .metrics import PatchCorrelationMatcher
from .pipeline import PipelineError, run_edit

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_PIPELINE = 2


class _Parser(argparse.ArgumentParser):
    # usage problems are validation failures, not crashes
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_VALIDATION)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("edit configuration (mirrors config fields)")
    g.add_argument("--total-trained-steps", type=int, default=None)
    g.add_argument("--sampler-steps", type=int, default=None)
    g.add_argument("--invert-to", type=int, default=None)
    g.add_argument("--cp-stop", type=int, default=None)
    g.add_argument("--blend-alpha", type=float, default=None)
    g.add_argument("--eta", type=float, default=None)
    g.add_argument("--kv-swap", dest="kv_swap", action="store_true", default=None)
    g.add_argument("--no-kv-swap", dest="kv_swap", action="store_false")
    g.add_argument("--cp-mode", choices=["multi-step", "initial-only"], default=None)
    g.add_argument("--seed", type=int, default=None)
    parser.add_argument("--config", type=Path, default=None,
                        help="JSON file with config fields; flags win")
    parser.add_argument("--backend", default=None,
                        help="backend name (falls back to $REGIONDRAG_BACKEND, then 'toy')")


def _config_from_args(args: argparse.Namespace) -> EditConfig:
    file_layer = None
    if args.config is not None:
        file_layer = json.loads(Path(args.config).read_text())
    flag_layer = {
        "total_trained_steps": args.total_trained_steps,
        "sampler_steps": args.sampler_steps,
        "invert_to": args.invert_to,
        "cp_stop": args.cp_stop,
        "blend_alpha": args.blend_alpha,
        "eta": args.eta,
        "kv_swap": args.kv_swap,
        "cp_mode": args.cp_mode,
        "seed": args.seed,
    }
    return merged_config(file_layer, flag_layer)


def _load_region_pairs(path: Path):
    return parse_region_pairs(json.loads(Path(path).read_text()))


def cmd_edit(args) -> int:
    cfg = _config_from_args(args)
    pairs = _load_region_pairs(args.regions)
    image = load_png(args.image)
    backend = resolve_backend(args.backend)
    result = run_edit(image, pairs, args.prompt, cfg, backend)

    save_png(result.image, args.out)
    timings_path = args.timings or Path(str(args.out) + ".timings.json")
    report = {
        "timings": result.session.timing_report(),
        "mapped_point_count": len(result.session.mapped_points),
        "warnings": result.session.warnings,
        "seed": cfg.seed,
        "backend": result.session.backend_name,
    }
    Path(timings_path).write_text(json.dumps(report, indent=2))
    if args.session_dump:
        result.session.export_debug(args.session_dump)
    print(f"wrote {args.out} "
          f"(total {result.session.timings['total_ms']:.0f} ms, "
          f"{len(result.session.mapped_points)} mapped points, seed {cfg.seed})")
    return EXIT_OK


def cmd_map(args) -> int:
    pairs = _load_region_pairs(args.regions)
    if args.image is not None:
        image_dims(args.image)  # existence check only; region records carry dims
    payload = map_preview(pairs, args.latent_scale)
    text = json.dumps(payload, indent=2)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out} ({payload['count']} pairs)")
    else:
        print(text)
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _config_from_args(args)
    loaded = load_dataset(args.dataset)
    for reject in loaded.rejected:
        print(f"rejected sample {reject['id']}: {reject['reason']}", file=sys.stderr)
    backend = resolve_backend(args.backend)
    report = run_benchmark(loaded.samples, cfg, backend,
                           matcher=PatchCorrelationMatcher(), workers=args.workers)
    text = json.dumps(report.to_json_dict(), indent=2)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text)
    if args.csv:
        Path(args.csv).write_text(report.to_table())
        print(f"wrote {args.csv}")
    agg = report.aggregates
    if agg.get("samples"):
        print(f"samples {agg['samples']} (failed {agg['failed']}): "
              f"MD {agg['mean_md_x100']:.2f}, proxy {agg['mean_proxy_x100']:.2f}, "
              f"wall {agg['mean_wall_ms']:.0f} ms")
    return EXIT_OK


def cmd_stats(args) -> int:
    loaded = load_dataset(args.dataset)
    stats = equivalent_point_stats(loaded.samples)
    stats["rejected"] = loaded.rejected
    text = json.dumps(stats, indent=2)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text)
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .server import create_app

    if args.ui_dir is not None and not Path(args.ui_dir).is_dir():
        print(f"error: --ui-dir {args.ui_dir} is not a directory", file=sys.stderr)
        return EXIT_VALIDATION
    app = create_app(
        default_backend=args.backend,
        max_request_bytes=args.max_request_mib * 1024 * 1024,
        request_timeout_s=args.timeout_s,
        static_dir=str(args.ui_dir) if args.ui_dir else None,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="regiondrag",
                     description="Region-based drag image editing, benchmarking, and serving")
    sub = parser.add_subparsers(dest="command", required=True)

    p_edit = sub.add_parser("edit", help="edit one image from region-pair annotations")
    p_edit.add_argument("--image", type=Path, required=True)
    p_edit.add_argument("--regions", type=Path, required=True,
                        help="JSON list of {handle, target} region records")
    p_edit.add_argument("--out", type=Path, required=True)
    p_edit.add_argument("--prompt", default="")
    p_edit.add_argument("--timings", type=Path, default=None,
                        help="timing report path (default: OUT.timings.json)")
    p_edit.add_argument("--session-dump", type=Path, default=None,
                        help="directory for cached latents and KV sizes")
    _add_config_flags(p_edit)
    p_edit.set_defaults(func=cmd_edit)

    p_map = sub.add_parser("map", help="preview the dense mapping for region pairs")
    p_map.add_argument("--regions", type=Path, required=True)
    p_map.add_argument("--image", type=Path, default=None)
    p_map.add_argument("--latent-scale", type=int, default=1)
    p_map.add_argument("--out", type=Path, default=None)
    p_map.set_defaults(func=cmd_map)

    p_bench = sub.add_parser("bench", help="run the benchmark over a dataset directory")
    p_bench.add_argument("--dataset", type=Path, required=True)
    p_bench.add_argument("--out", type=Path, default=None)
    p_bench.add_argument("--csv", type=Path, default=None)
    p_bench.add_argument("--workers", type=int, default=1)
    _add_config_flags(p_bench)
    p_bench.set_defaults(func=cmd_bench)

    p_stats = sub.add_parser("stats", help="equivalent-point statistics for a dataset")
    p_stats.add_argument("--dataset", type=Path, required=True)
    p_stats.add_argument("--out", type=Path, default=None)
    p_stats.set_defaults(func=cmd_stats)

    p_serve = sub.add_parser("serve", help="start the HTTP service")
    p_serve.add_argument("--host", default="127.0.0.1")
    p_serve.add_argument("--port", type=int, default=8321)
    p_serve.add_argument("--backend", default=None)
    p_serve.add_argument("--max-request-mib", type=int, default=16)
    p_serve.add_argument("--timeout-s", type=float, default=60.0)
    p_serve.add_argument("--ui-dir", type=Path, default=None,
                         help="serve a built web UI from this directory at /")
    p_serve.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_VALIDATION
    try:
        return args.func(args)
    except (ValidationError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (PipelineError, RegionDragError) as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE


if __name__ == "__main__":
    raise SystemExit(main())

"""Acceptance suite: one test per release criterion, each printing a
pass/fail line.  Expected values come from independent oracles (exact
rational arithmetic, brute-force enumeration, plain-loop reimplementations),
never from the code paths under test."""

from __future__ import annotations

import time
from fractions import Fraction

import numpy as np
import pytest

from regiondrag.backends import ConstantDenoiser, ToyDenoiser
from regiondrag.bench import (
    brightness_centroid,
    build_synthetic_dataset,
    load_dataset,
    make_translation_sample,
    run_benchmark,
    run_subset_edit,
    textured_square_image,
    write_manifest,
)
from regiondrag.core import EditConfig, ImageBuffer, LatentGrid, PointPair, Region
from regiondrag.mapping import MappedPointSet, map_region_pair_dense
from regiondrag.metrics import build_search_mask, mean_distance, normalized_distance
from regiondrag.pipeline import (
    IdentityCodec,
    copy_paste,
    denoise_with_edits,
    invert_with_cache,
    run_edit,
)
from regiondrag.rng import CounterRng
from regiondrag.schedule import NoiseSchedule, blend_handle, build_sampler_grid, transition

# the synthetic translation family used by the end-to-end criteria
FAMILY_SEEDS = range(20)
FAMILY_SQUARE = 12
FAMILY_ORIGIN = (22, 22)
FAMILY_SHIFT = 16
FAMILY_CFG = dict(blend_alpha=0.0, eta=0.1)
FAMILY_BACKEND = ToyDenoiser(seed=0, out_scale=1.5)


def criterion(name: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def rect_region(x0, y0, w, h, canvas):
    mask = np.zeros((canvas, canvas), dtype=bool)
    mask[y0:y0 + h, x0:x0 + w] = True
    return Region(pixels=np.argwhere(mask)[:, ::-1], image_w=canvas, image_h=canvas)


def random_blob(gen, canvas=48, steps=50):
    x, y = int(gen.integers(4, canvas - 4)), int(gen.integers(4, canvas - 4))
    pts = {(x, y)}
    for _ in range(steps):
        dx, dy = gen.choice([(-1, 0), (1, 0), (0, -1), (0, 1)])
        x = int(np.clip(x + dx, 0, canvas - 1))
        y = int(np.clip(y + dy, 0, canvas - 1))
        pts.add((x, y))
    return Region(pixels=np.array(sorted(pts)), image_w=canvas, image_h=canvas)


@pytest.fixture(scope="module")
def family_runs():
    """All edits of the synthetic family, shared by the end-to-end criteria."""
    fx = make_translation_sample(shift=FAMILY_SHIFT, square=FAMILY_SQUARE,
                                 origin=FAMILY_ORIGIN)
    img, pairs, pts = fx["image"], fx["region_pairs"], fx["point_pairs"]
    cx0, cy0 = fx["square_center"]
    runs = {"multi": [], "initial": [], "subset10": [], "md_full": [], "md_sub": []}
    for seed in FAMILY_SEEDS:
        cfg = EditConfig(seed=seed, **FAMILY_CFG)
        multi = run_edit(img, pairs, "sq", cfg, FAMILY_BACKEND)
        initial = run_edit(img, pairs, "sq", cfg.replace(cp_mode="initial-only"),
                           FAMILY_BACKEND)
        sub = run_subset_edit(img, pairs, "sq", cfg, FAMILY_BACKEND,
                              fraction=0.1, subset_seed=seed)
        runs["multi"].append(multi.image)
        runs["initial"].append(initial.image)
        runs["subset10"].append(sub.image)
        runs["md_full"].append(mean_distance(img, multi.image, pts))
        runs["md_sub"].append(mean_distance(img, sub.image, pts))
    runs["fixture"] = fx
    runs["center"] = (cx0, cy0)
    return runs


class TestMappingCriteria:
    def test_mapping_oracle_equivalence(self):
        """1,000 random rectangle pairs match exact separable floor scaling."""
        gen = np.random.default_rng(101)
        canvas = 160
        t0 = time.perf_counter()
        checked = 0
        for _ in range(1000):
            hw, hh, tw, th = (int(gen.integers(1, 65)) for _ in range(4))
            hx0 = int(gen.integers(0, canvas - hw))
            hy0 = int(gen.integers(0, canvas - hh))
            tx0 = int(gen.integers(0, canvas - tw))
            ty0 = int(gen.integers(0, canvas - th))
            mapped = map_region_pair_dense(
                rect_region(hx0, hy0, hw, hh, canvas),
                rect_region(tx0, ty0, tw, th, canvas),
            )
            # oracle: exact rational per-axis index scaling, floored
            xmap = [hx0 + int(Fraction(ix * (hw - 1), tw - 1)) if tw > 1 else hx0
                    for ix in range(tw)]
            ymap = [hy0 + int(Fraction(iy * (hh - 1), th - 1)) if th > 1 else hy0
                    for iy in range(th)]
            expect = np.array(
                [[xmap[ix], ymap[iy], tx0 + ix, ty0 + iy]
                 for iy in range(th) for ix in range(tw)], dtype=np.int64
            )
            if not np.array_equal(mapped.points, expect):
                criterion("mapping-oracle-equivalence", False,
                          f"mismatch at rect pair #{checked}")
            checked += 1
        elapsed = time.perf_counter() - t0
        criterion("mapping-oracle-equivalence", elapsed < 5.0,
                  f"{checked} rectangle pairs exact, {elapsed:.2f}s (< 5s)")

    def test_mapping_completeness_and_identity(self):
        """1,000 random connected blobs: |pairs| = |target|, and H = T gives
        the identity pairing, with zero violations."""
        blobs = [random_blob(np.random.default_rng(1000 + i)) for i in range(1000)]
        violations = 0
        for i, blob in enumerate(blobs):
            other = blobs[(i + 1) % len(blobs)]
            mapped = map_region_pair_dense(other, blob)
            if len(mapped) != len(blob):
                violations += 1
            identity = map_region_pair_dense(blob, blob)
            if not np.array_equal(identity.handles, identity.targets):
                violations += 1
        criterion("mapping-completeness-identity", violations == 0,
                  f"{len(blobs)} blobs, {violations} violations")


class TestSchedulerCriteria:
    def test_scheduler_round_trip(self):
        """eta = 0, constant eps, 20-step grid: denoise(invert(z)) == z to 1e-5."""
        schedule = NoiseSchedule.create("sd-scaled-linear", 1000, eta=0.0)
        grid = build_sampler_grid(EditConfig(eta=0.0))
        backend = ConstantDenoiser(0.1)
        cond = backend.conditioning("")
        worst = 0.0
        gen = np.random.default_rng(77)
        for _ in range(100):
            z0 = LatentGrid(gen.standard_normal((4, 64, 64)), 0)
            z = z0
            for s, t in grid.inversion_path():
                eps = backend.predict_noise(z, s, cond).eps
                z = transition(z, s, t, eps, schedule)
            for s, t in grid.denoising_path():
                eps = backend.predict_noise(z, s, cond).eps
                z = transition(z, s, t, eps, schedule)
            worst = max(worst, float(np.abs(z.data - z0.data).max()))
        criterion("scheduler-round-trip", worst <= 1e-5,
                  f"max |denoise(invert(z)) - z| = {worst:.2e} (<= 1e-5), 100 latents")

    def test_blend_contract(self):
        gen = np.random.default_rng(3)
        z = LatentGrid(gen.standard_normal((2, 100, 100)), 500)
        mask = np.zeros((100, 100), dtype=bool)
        mask[10:80, 5:90] = True
        rng = CounterRng(5)

        ok_zero = np.array_equal(blend_handle(z, mask, 0.0, rng).data, z.data)

        blended = blend_handle(z, mask, 1.0, rng)
        off_ok = np.array_equal(blended.data[:, ~mask], z.data[:, ~mask])
        inside_in = z.data[:, mask].ravel()
        inside_out = blended.data[:, mask].ravel()
        rho = float(np.corrcoef(inside_in, inside_out)[0, 1])
        corr_ok = abs(rho) < 0.05 and inside_out.size >= 10_000

        var_ok = True
        for alpha in (0.25, 0.5, 0.75):
            var = float(blend_handle(z, mask, alpha, rng).data[:, mask].var())
            var_ok &= 0.9 <= var <= 1.1
        criterion("blend-contract", ok_zero and off_ok and corr_ok and var_ok,
                  f"alpha=0 identity: {ok_zero}, off-mask exact: {off_ok}, "
                  f"|rho|={abs(rho):.4f} (< 0.05), variance within 10%: {var_ok}")


class TestCopyPasteCriterion:
    def test_copy_paste_exactness(self):
        """1,000 random mappings: targets bit-exact, everything else untouched."""
        gen = np.random.default_rng(9)
        failures = 0
        for _ in range(1000):
            h, w = int(gen.integers(4, 24)), int(gen.integers(4, 24))
            src = LatentGrid(gen.standard_normal((3, h, w)), 0)
            dst = LatentGrid(gen.standard_normal((3, h, w)), 0)
            n = int(gen.integers(1, min(h * w, 32)))
            flat = gen.choice(h * w, size=n, replace=False)
            pts = np.stack([
                gen.integers(0, w, n), gen.integers(0, h, n), flat % w, flat // w,
            ], axis=1)
            pairs = MappedPointSet(points=pts, source=np.zeros(n), space="latent")
            out = copy_paste(src, dst, pairs)
            exact = all(
                np.array_equal(out.data[:, ty, tx], src.data[:, hy, hx])
                for hx, hy, tx, ty in pts
            )
            tmask = np.zeros((h, w), dtype=bool)
            tmask[pts[:, 3], pts[:, 2]] = True
            untouched = np.array_equal(out.data[:, ~tmask], dst.data[:, ~tmask])
            if not (exact and untouched):
                failures += 1
        criterion("copy-paste-exactness", failures == 0,
                  f"1000 randomized mappings, {failures} failures")


class TestKvCriterion:
    def test_kv_self_consistency(self):
        """alpha=0, empty mapping, kv swap on: the edited branch retraces a
        plain re-denoise of the cached latent to 1e-6."""
        img = ImageBuffer(np.random.default_rng(15).random((64, 64, 3)))
        cfg = EditConfig(seed=3, blend_alpha=0.0)
        backend = ToyDenoiser(seed=0)
        schedule = NoiseSchedule.create("sd-scaled-linear", 1000, eta=cfg.eta)
        grid = build_sampler_grid(cfg)
        rng = CounterRng(cfg.seed)
        cond = backend.conditioning("")
        z0 = IdentityCodec().encode(img)
        trajectory, cache = invert_with_cache(z0, cond, backend, schedule, grid, rng)

        # edited branch: blend (no-op), empty copy-paste, kv override
        edit = blend_handle(trajectory[grid.invert_to], np.zeros((64, 64), bool), 0.0, rng)
        empty = MappedPointSet(space="latent")
        worst = 0.0
        plain = trajectory[grid.invert_to]
        for s, t in grid.denoising_path():
            edit = copy_paste(trajectory[s], edit, empty)
            out_e = backend.predict_noise(edit, s, cond, kv_override=cache.fragment_at(s))
            edit = transition(edit, s, t, out_e.eps, schedule, rng, noise_purpose="denoise")
            out_p = backend.predict_noise(plain, s, cond, kv_override=cache.fragment_at(s))
            plain = transition(plain, s, t, out_p.eps, schedule, rng, noise_purpose="denoise")
            worst = max(worst, float(np.abs(edit.data - plain.data).max()))
        criterion("kv-self-consistency", worst <= 1e-6,
                  f"max trajectory divergence {worst:.2e} (<= 1e-6)")


class TestEndToEndCriteria:
    def test_toy_translation(self, family_runs):
        """Centroid displacement 16 +/- 2 px in >= 18/20 seeds; MD <= 4.0."""
        cx0, cy0 = family_runs["center"]
        hits = 0
        for image in family_runs["multi"]:
            cx, cy = brightness_centroid(image)
            if abs(cx - cx0 - FAMILY_SHIFT) <= 2.0 and abs(cy - cy0) <= 2.0:
                hits += 1
        md = float(np.mean(family_runs["md_full"]))
        criterion("end-to-end-toy-translation", hits >= 18 and md <= 4.0,
                  f"displacement within 16±2 in {hits}/20 seeds (need >= 18), "
                  f"mean MD {md:.2f} (<= 4.0)")

    def test_point_subset_trend(self, family_runs):
        """Sparser copy-paste input gives worse MD (10% vs 100%)."""
        md_full = float(np.mean(family_runs["md_full"]))
        md_sub = float(np.mean(family_runs["md_sub"]))
        criterion("point-subset-trend", md_sub > md_full,
                  f"mean MD at 10% = {md_sub:.2f} > mean MD at 100% = {md_full:.2f}, 20 seeds")

    def test_initial_only_vs_multi_step(self, family_runs):
        """Copy-paste only at the initial step displaces content less reliably."""
        cx0, cy0 = family_runs["center"]

        def err(image):
            cx, cy = brightness_centroid(image)
            return float(np.hypot(cx - cx0 - FAMILY_SHIFT, cy - cy0))

        err_multi = float(np.mean([err(im) for im in family_runs["multi"]]))
        err_initial = float(np.mean([err(im) for im in family_runs["initial"]]))
        criterion("initial-only-vs-multi-step", err_initial >= err_multi,
                  f"mean displacement error initial-only {err_initial:.3f} px >= "
                  f"multi-step {err_multi:.3f} px, 20 seeds")


class TestMetricCriteria:
    def test_search_mask_exactness(self):
        """Masks equal per-pixel brute force for 100 random pairs at 128x128."""
        gen = np.random.default_rng(21)
        size = 128
        xs = np.arange(size)[None, :] / size
        mismatches = 0
        for _ in range(100):
            h = (int(gen.integers(0, size)), int(gen.integers(0, size)))
            t = (int(gen.integers(0, size)), int(gen.integers(0, size)))
            mask = build_search_mask(h, t, size, size).mask
            thr = np.hypot((h[0] - t[0]) / size, (h[1] - t[1]) / size) / np.sqrt(2.0)
            brute = np.zeros((size, size), dtype=bool)
            for y in range(size):
                for x in range(size):
                    d_h = np.hypot((x - h[0]) / size, (y - h[1]) / size)
                    d_t = np.hypot((x - t[0]) / size, (y - t[1]) / size)
                    brute[y, x] = min(d_h, d_t) < thr
            if not np.array_equal(mask, brute):
                mismatches += 1
        criterion("search-mask-exactness", mismatches == 0,
                  f"100 random pairs at 128x128, {mismatches} mask mismatches")

    def test_md_zero_on_exact_translation(self):
        img = textured_square_image(square=FAMILY_SQUARE, origin=FAMILY_ORIGIN)
        shifted = ImageBuffer(np.roll(img.data, FAMILY_SHIFT, axis=1))
        x0, y0 = FAMILY_ORIGIN
        pts = [PointPair(handle=(x, y), target=(x + FAMILY_SHIFT, y))
               for y in range(y0, y0 + FAMILY_SQUARE)
               for x in range(x0, x0 + FAMILY_SQUARE)]
        md = mean_distance(img, shifted, pts)
        one_pixel = normalized_distance((0, 0), (1, 0), img.width, img.height) * 100
        criterion("md-exact-translation", md <= one_pixel,
                  f"MD {md:.3f} within one-pixel distance {one_pixel:.3f}")


class TestPerformanceCriterion:
    def test_default_pipeline_under_one_second(self):
        """Default 20-step pipeline on a 4x64x64 latent with the toy backend."""
        backend = ToyDenoiser(seed=0)
        cfg = EditConfig(seed=0)
        schedule = NoiseSchedule.create("sd-scaled-linear", 1000, eta=cfg.eta)
        grid = build_sampler_grid(cfg)
        cond = backend.conditioning("benchmark")
        z0 = LatentGrid(np.random.default_rng(0).standard_normal((4, 64, 64)), 0)
        mapping = map_region_pair_dense(
            rect_region(8, 16, 24, 32, 64), rect_region(24, 16, 24, 32, 64),
            space="latent",
        )
        mask = rect_region(8, 16, 24, 32, 64).to_mask()
        backend.predict_noise(z0, 0, cond)  # build per-channel weights up front

        t0 = time.perf_counter()
        rng = CounterRng(cfg.seed)
        trajectory, cache = invert_with_cache(z0, cond, backend, schedule, grid, rng)
        start = blend_handle(trajectory[grid.invert_to], mask, cfg.blend_alpha, rng)
        _, cp_steps, den_s, cp_s = denoise_with_edits(
            start, trajectory, cache, mapping, cfg, cond, backend, schedule, grid, rng
        )
        elapsed = time.perf_counter() - t0
        ratio = cp_s / den_s
        criterion("performance-analog",
                  elapsed < 1.0 and ratio <= 0.05,
                  f"pipeline {elapsed * 1000:.0f} ms (< 1000 ms), copy-paste "
                  f"{cp_s * 1000:.1f} ms = {ratio * 100:.1f}% of denoise (<= 5%), "
                  f"{len(cp_steps)} cp steps")


class TestBenchmarkCriterion:
    def test_benchmark_plumbing(self, tmp_path):
        """10 synthetic samples run end to end; aggregates recompute; manifest
        round-trip is a fixed point."""
        root = tmp_path / "fixture-ds"
        dataset = build_synthetic_dataset(root, count=10)
        ok_load = len(dataset.samples) == 10 and not dataset.rejected

        manifest_before = (root / "manifest.jsonl").read_text()
        write_manifest(load_dataset(root).samples, root)
        ok_roundtrip = (root / "manifest.jsonl").read_text() == manifest_before

        cfg = EditConfig(seed=0, **FAMILY_CFG)
        report = run_benchmark(dataset.samples, cfg, ToyDenoiser(seed=0))
        ok_rows = len(report.rows) == 10 and report.aggregates["failed"] == 0
        ok_mean = (
            report.aggregates["mean_md_x100"]
            == pytest.approx(sum(r["md_x100"] for r in report.rows) / 10)
            and report.aggregates["mean_proxy_x100"]
            == pytest.approx(sum(r["proxy_x100"] for r in report.rows) / 10)
        )
        criterion("benchmark-plumbing",
                  ok_load and ok_roundtrip and ok_rows and ok_mean,
                  f"load 10/10: {ok_load}, manifest fixed point: {ok_roundtrip}, "
                  f"rows: {ok_rows}, aggregates recomputed: {ok_mean}")

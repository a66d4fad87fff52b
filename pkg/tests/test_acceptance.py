"""End-to-end checks on small synthetic scenes."""

import dataclasses
import os
import time

import numpy as np
import pytest

from generate.images import diff_images
from harness.camera import Camera, framing_camera
from harness.config import RenderConfig
from harness.distributed import render_distributed
from harness.oracle import render_oracle, render_single_fragment
from harness.scene import scene_bounds
from march.transfer_function import TransferFunction
from mesh.cells import FACE_TABLE, VERTEX_COUNT, Kind
from mesh.compaction import _compact_rows, reconstruct
from mesh.synthetic import assign_ranks, make_synthetic_partition

TF = TransferFunction([0.0, 0.4, 0.7, 1.0],
                      [[0.9, 0.1, 0.1, 0.15], [0.1, 0.9, 0.2, 0.05], [0.1, 0.3, 0.9, 0.2], [1, 1, 0.2, 0.3]],
                      (0.0, 1.0))

SCENES = {
    "tet-slabs": ((8, 2, 2), "tet", "slabs", 8),
    "tet-combs": ((3, 4, 3), "tet", "interleavedCombs", 8),
    "hex-checkerboard": ((4, 4, 4), "hex", "checkerboard", 8),
    "wed-combs": ((3, 2, 3), "wed", "interleavedCombs", 4),
    "pyr-slabs": ((4, 2, 2), "pyr", "slabs", 4),
    "mixed-checkerboard": ((2, 2, 2), "mixed", "checkerboard", 2),
}


def scene(name, ranks):
    dims, mix, pattern, n = SCENES[name]
    return assign_ranks(make_synthetic_partition(dims, mix, pattern, n), ranks)


def config_for(clusters, ranks, width=5, height=4, **kwargs):
    camera = framing_camera(*scene_bounds(clusters), width, height)
    return RenderConfig(camera=camera, tf=TF, ranks=ranks, step=0.04, **kwargs)


CASES = [(name, r) for name, spec in SCENES.items() for r in (1, 2, 4, 8) if r <= spec[3]]


@pytest.mark.parametrize("name,ranks", CASES)
def test_distributed_equals_oracle(name, ranks):
    clusters = scene(name, ranks)
    config = config_for(clusters, ranks)
    result = render_distributed(config, clusters)
    oracle = render_oracle(config, clusters)
    assert result.total_fragments > 0
    assert np.abs(result.image - oracle).max() <= 1e-5
    for r in result.ranks:
        assert r.march.failures == 0
        assert r.march.within_bounds()


def test_single_fragment_baseline_is_wrong_on_combs():
    # rays run along x, across the teeth, so each rank contributes several fragments per pixel
    clusters = assign_ranks(make_synthetic_partition((6, 2, 4), "tet", "interleavedCombs", 2), 2)
    camera = Camera((-2.0, 0.13, 0.41), (1.0, 0.13, 0.41), (0.0, 0.0, 1.0), 20.0, 16, 16)
    config = RenderConfig(camera=camera, tf=TF, ranks=2, step=0.04)
    result = render_distributed(config, clusters)
    assert max(int(s.counts.max()) for s in result.stores) >= 2
    assert np.abs(result.image - render_oracle(config, clusters)).max() <= 1e-5
    heat, _, mean_l2 = diff_images(result.image, render_single_fragment(result))
    assert mean_l2 > 1e-3
    assert heat.any()


def test_single_fragment_baseline_is_exact_on_convex_slabs():
    clusters = scene("tet-slabs", 8)
    result = render_distributed(config_for(clusters, 8, width=8, height=8), clusters)
    _, _, mean_l2 = diff_images(result.image, render_single_fragment(result))
    assert mean_l2 <= 1e-5


def test_composited_image_is_deterministic():
    clusters = scene("tet-combs", 2)
    config = config_for(clusters, 2)
    first = render_distributed(config, clusters).image
    for _ in range(9):
        assert render_distributed(config, clusters).image.tobytes() == first.tobytes()
    for ranks in (4, 8):
        other = scene("tet-combs", ranks)
        assert np.abs(render_distributed(config_for(other, ranks), other).image - first).max() <= 1e-6


@pytest.mark.parametrize("kind", [Kind.TET, Kind.PYR, Kind.WED])
def test_randomized_reconstruction(kind, rng):
    ids = rng.integers(0, 1 << 30, size=(100_000, VERTEX_COUNT[kind]), dtype=np.int64)
    ids = ids[np.all(np.diff(np.sort(ids, axis=1), axis=1) != 0, axis=1)].astype(np.uint32)
    assert len(ids) > 99_000
    records = _compact_rows(kind, ids)
    for row, rec in zip(ids.tolist(), records):
        expected = tuple(row)
        for slot, local in enumerate(FACE_TABLE[kind]):
            assert reconstruct(rec, kind, slot, [expected[p] for p in local]) == expected


def test_marching_reconstructions_match_stored_elements():
    clusters = scene("tet-combs", 2)
    result = render_distributed(config_for(clusters, 2, verify_reconstruction=True), clusters)
    assert sum(r.march.reconstructions for r in result.ranks) > 0


def test_splitting_a_scene_lowers_per_rank_work():
    work = {}
    for ranks in (1, 2, 8):
        clusters = scene("tet-slabs", ranks)
        result = render_distributed(config_for(clusters, ranks), clusters)
        work[ranks] = max(r.work for r in result.ranks)
    assert work[8] < work[2] < work[1]


def test_per_face_left_tests_render_the_same_image():
    clusters = scene("hex-checkerboard", 2)
    config = config_for(clusters, 2)
    shared = render_distributed(config, clusters)
    per_face = render_distributed(dataclasses.replace(config, share_edges=False), clusters)
    assert per_face.image.tobytes() == shared.image.tobytes()
    for a, b in zip(shared.ranks, per_face.ranks):
        assert b.march.within_bounds(share_edges=False)
        assert b.march.left_tests >= a.march.left_tests


def test_pixel_workers_do_not_change_the_image():
    clusters = scene("wed-combs", 2)
    config = config_for(clusters, 2, width=6, height=5)
    serial = render_distributed(config, clusters)
    pooled = render_distributed(dataclasses.replace(config, workers=2), clusters)
    assert pooled.image.tobytes() == serial.image.tobytes()
    for a, b in zip(serial.stores, pooled.stores):
        np.testing.assert_array_equal(a.counts, b.counts)
    for a, b in zip(serial.ranks, pooled.ranks):
        assert (a.segments, a.march.samples, a.march.element_steps) == (b.segments, b.march.samples, b.march.element_steps)
    oracle = render_oracle(config, clusters)
    assert render_oracle(dataclasses.replace(config, workers=2), clusters).tobytes() == oracle.tobytes()


@pytest.mark.slow
@pytest.mark.parametrize("name", ["tet-slabs", "tet-combs", "hex-checkerboard", "wed-combs", "mixed-checkerboard"])
def test_full_resolution_matches_oracle(name):
    cores = os.cpu_count() or 1
    for ranks in (1, 2, 4, 8):
        if ranks > SCENES[name][3]:
            continue
        clusters = scene(name, ranks)
        config = config_for(clusters, ranks, width=256, height=256, workers=max(1, cores // ranks))
        start = time.perf_counter()
        result = render_distributed(config, clusters)
        oracle = render_oracle(config, clusters)
        assert time.perf_counter() - start <= 240.0
        assert np.abs(result.image - oracle).max() <= 1e-5

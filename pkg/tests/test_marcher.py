import numpy as np
import pytest

from composite.compositor import over
from march.frame import RayFrame
from march.interpolation import contains_and_interpolate
from march.marcher import ClusterData, MarchStats, find_exit_face, integrate_brute_force, integrate_segment
from march.transfer_function import (
    TransferFunction,
    colormap_tf,
    eval_transfer_function,
    format_tf,
    parse_tf,
    transparent_tf,
)
from mesh.cells import LEFT_TEST_BOUND, PER_FACE_LEFT_TEST_BOUND, Kind
from mesh.synthetic import make_synthetic_partition
from raytrace.bvh import trace_brute_force
from raytrace.shell import build_shell, generate_segments
from tests.conftest import UNIT_POINTS, constant_tf, single_element_cluster


def test_ray_frame_basics(rng):
    o = np.array([0.3, -1.0, 2.0])
    d = np.array([1.0, 2.0, -0.5])
    d /= np.linalg.norm(d)
    frame = RayFrame.from_ray(o, d)
    b = frame.basis
    np.testing.assert_allclose(b @ b.T, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(np.cross(frame.u, frame.v), frame.w, atol=1e-12)
    np.testing.assert_allclose(frame.to_ray_centric(o), 0.0, atol=1e-12)
    np.testing.assert_allclose(frame.to_ray_centric(o + 3 * d), [0, 0, 3], atol=1e-12)
    p = rng.normal(size=(20, 3))
    np.testing.assert_allclose(frame.to_world(frame.to_ray_centric(p)), p, atol=1e-12)


def _exit_for(kind, origin, direction, entry_slot, share_edges=True):
    pts = np.asarray(UNIT_POINTS[kind], dtype=np.float64)
    xy = RayFrame.from_ray(origin, direction).project_2d(pts)
    return find_exit_face(kind, tuple(range(len(pts))), entry_slot, xy, share_edges)


def test_tet_exit_in_two_left_tests():
    # enters through slot 0 (the face opposite v2), leaves through slot 1
    slot, tests = _exit_for(Kind.TET, (0.2, -1.0, 0.2), (0.0, 1.0, 0.0), 0)
    assert slot == 1
    assert tests <= 2


def test_hex_exit_through_opposite_face():
    slot, tests = _exit_for(Kind.HEX, (0.3, 0.6, -1.0), (0.0, 0.0, 1.0), 4)
    assert slot == 5
    assert 4 <= tests <= LEFT_TEST_BOUND[Kind.HEX]


def test_hex_per_face_worst_case_bound():
    assert PER_FACE_LEFT_TEST_BOUND[Kind.HEX] == LEFT_TEST_BOUND[Kind.HEX] == 13


def test_hex_per_face_walk_takes_ten_tests():
    # enters x=1, leaves through the bottom after rejecting faces 0, 2 and 3
    d = np.array([-1.0, 0.5, -1.0]) / 1.5
    o = np.array([0.6, 0.8, 0.0]) - 2.0 * d
    slot, tests = _exit_for(Kind.HEX, o, d, 1, share_edges=False)
    assert slot == 4
    assert 10 <= tests <= PER_FACE_LEFT_TEST_BOUND[Kind.HEX]
    shared_slot, shared_tests = _exit_for(Kind.HEX, o, d, 1)
    assert shared_slot == 4
    assert shared_tests < tests


@pytest.mark.parametrize("share_edges", [True, False])
@pytest.mark.parametrize("kind", list(Kind))
def test_exit_face_matches_3d_intersection(kind, share_edges, rng):
    bound = (LEFT_TEST_BOUND if share_edges else PER_FACE_LEFT_TEST_BOUND)[kind]
    cluster = single_element_cluster(kind)
    shell = build_shell(cluster)
    pts = cluster.mesh.positions
    checked = 0
    for _ in range(150):
        w = rng.dirichlet(np.ones(len(pts)))
        p = w @ pts
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        o = p - 5.0 * d
        fwd = trace_brute_force(shell.bvh.tris, o, d)
        back = trace_brute_force(shell.bvh.tris, p + 5.0 * d, -d)
        if fwd is None or back is None:
            continue
        exit_slot = shell.faces[fwd[0]].face_slot
        entry_slot = shell.faces[back[0]].face_slot
        slot, tests = _exit_for(kind, o, d, entry_slot, share_edges)
        assert slot == exit_slot
        assert tests <= bound
        checked += 1
    assert checked > 100


def test_tet_centroid_interpolation():
    pts = np.asarray(UNIT_POINTS[Kind.TET], dtype=np.float64)
    inside, s = contains_and_interpolate(Kind.TET, pts, [0, 0, 0, 4], pts.mean(axis=0))
    assert inside and s == pytest.approx(1.0)
    inside, _ = contains_and_interpolate(Kind.TET, pts, [0, 0, 0, 4], (0.6, 0.6, 0.6))
    assert not inside


def test_hex_trilinear_field():
    pts = np.asarray(UNIT_POINTS[Kind.HEX], dtype=np.float64)
    f = pts[:, 0] * pts[:, 1] * pts[:, 2]
    inside, s = contains_and_interpolate(Kind.HEX, pts, f, (0.5, 0.5, 0.5))
    assert inside
    assert abs(s - 0.125) <= 1e-6
    assert not contains_and_interpolate(Kind.HEX, pts, f, (1.5, 0.5, 0.5))[0]


@pytest.mark.parametrize("kind", [Kind.PYR, Kind.WED, Kind.HEX])
def test_linear_fields_reproduced(kind, rng):
    pts = np.asarray(UNIT_POINTS[kind], dtype=np.float64)
    f = pts @ np.array([1.0, 2.0, 3.0])
    for _ in range(20):
        p = rng.dirichlet(np.ones(len(pts))) @ pts
        inside, s = contains_and_interpolate(kind, pts, f, p)
        assert inside
        assert s == pytest.approx(p @ np.array([1.0, 2.0, 3.0]), abs=1e-9)


def test_transfer_function_lookup():
    tf = parse_tf("domain 0 1\n0 0 0 0 0\n0.5 1 0 0 0.5\n1 1 1 1 1\n")
    rgb, a = eval_transfer_function(tf, -3.0)
    assert rgb.tolist() == [0, 0, 0] and a == 0
    rgb, a = tf.eval(0.5)
    assert rgb.tolist() == [1, 0, 0] and a == 0.5
    rgb, a = tf.eval(0.75)
    np.testing.assert_allclose(rgb, [1, 0.5, 0.5])
    assert a == pytest.approx(0.75)


def test_transfer_function_rejects_unsorted():
    with pytest.raises(ValueError):
        TransferFunction([0.5, 0.2], [[0, 0, 0, 0], [1, 1, 1, 1]], (0, 1))
    with pytest.raises(ValueError):
        parse_tf("0 0 0 0 0\n")


def test_colormap_tf_file_reads_back():
    tf = colormap_tf("viridis", domain=(np.float64(-1.0), np.float64(2.0)))
    text = format_tf(tf)
    assert "np.float64" not in text
    back = parse_tf(text)
    assert back.domain == (-1.0, 2.0)
    np.testing.assert_array_equal(back.scalars, tf.scalars)
    np.testing.assert_array_equal(back.rgba, tf.rgba)


def _segment(cluster, o, d):
    data = ClusterData.prepare(cluster, verify=True)
    segs = generate_segments(data.shell, o, d, locate=data.locate)
    return data, segs


def test_transparent_tf_gives_no_fragment(unit_tet):
    data, segs = _segment(unit_tet, (0.2, 0.2, -1.0), (0.0, 0.0, 1.0))
    assert integrate_segment(segs[0], data, transparent_tf(), 0.1, (0.2, 0.2, -1.0), (0.0, 0.0, 1.0)) is None


def test_single_sample_fragment():
    cluster = single_element_cluster(Kind.TET, scalars=[0.3] * 4)
    o, d = (0.2, 0.2, -1.0), (0.0, 0.0, 1.0)
    data, segs = _segment(cluster, o, d)
    tf = constant_tf((0.2, 0.4, 0.6), 0.5)
    frag = integrate_segment(segs[0], data, tf, 1.0, o, d)
    assert frag.alpha == pytest.approx(0.5)
    np.testing.assert_allclose(frag.color, [0.1, 0.2, 0.3], atol=1e-7)
    assert frag.depth == pytest.approx(1.0)


def test_opaque_tf_stops_after_first_sample():
    cluster = single_element_cluster(Kind.HEX)
    o, d = (0.3, 0.4, -1.0), (0.0, 0.0, 1.0)
    data, segs = _segment(cluster, o, d)
    stats = MarchStats()
    frag = integrate_segment(segs[0], data, constant_tf((1, 1, 1), 1.0), 0.1, o, d, stats=stats)
    assert frag.alpha == 1.0
    assert stats.samples == 1


def _random_rays(rng, n):
    for _ in range(n):
        target = rng.uniform(0.15, 0.85, 3)
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        yield target - 2.0 * d, d


@pytest.mark.parametrize("mix", ["tet", "wed", "pyr", "mixed"])
def test_marching_matches_brute_force_reference(mix, rng):
    cluster = make_synthetic_partition((3, 3, 3), mix, "slabs", 1)[0]
    data = ClusterData.prepare(cluster, verify=True)
    tf = TransferFunction([0.0, 0.5, 1.0], [[1, 0, 0, 0.05], [0, 1, 0, 0.2], [0, 0, 1, 0.1]], (0.0, 1.0))
    stats = MarchStats()
    compared = 0
    for o, d in _random_rays(rng, 8):
        for seg in generate_segments(data.shell, o, d, locate=data.locate):
            got = integrate_segment(seg, data, tf, 0.05, o, d, stats=stats)
            want = integrate_brute_force(cluster, tf, 0.05, o, d, seg.t_entry, seg.t_exit)
            if want is None:
                assert got is None
                continue
            assert got is not None
            np.testing.assert_allclose(got.rgba, want.rgba, atol=1e-6)
            compared += 1
    assert compared > 0
    assert stats.failures == 0
    assert stats.within_bounds()
    assert stats.reconstructions > 0


def test_uncompacted_marching_matches(rng):
    cluster = make_synthetic_partition((3, 3, 3), "tet", "slabs", 1)[0]
    packed = ClusterData.prepare(cluster)
    plain = ClusterData.prepare(cluster, compacted=False)
    tf = constant_tf((0.5, 0.5, 0.5), 0.1)
    for o, d in _random_rays(rng, 5):
        for seg in generate_segments(packed.shell, o, d):
            a = integrate_segment(seg, packed, tf, 0.05, o, d)
            b = integrate_segment(seg, plain, tf, 0.05, o, d)
            assert (a is None) == (b is None)
            if a is not None:
                assert a == b


def test_split_segment_associativity():
    cluster = make_synthetic_partition((3, 3, 3), "tet", "slabs", 1)[0]
    tf = TransferFunction([0.0, 1.0], [[1, 0.5, 0, 0.05], [0, 0.5, 1, 0.1]], (0.0, 1.0))
    o, d = np.array([-1.0, 0.41, 0.53]), np.array([1.0, 0.0, 0.0])
    step = 0.05
    whole = integrate_brute_force(cluster, tf, step, o, d, 1.0, 2.0)
    split = 1.0 + 8 * step
    front = integrate_brute_force(cluster, tf, step, o, d, 1.0, split)
    back = integrate_brute_force(cluster, tf, step, o, d, split, 2.0)
    np.testing.assert_allclose(over(front.rgba, back.rgba), whole.rgba, atol=1e-6)

import numpy as np
import pytest

from common.errors import HandleOverflowError
from march.interpolation import element_contains
from march.marcher import ClusterData
from mesh.cells import FACE_TABLE, Kind
from mesh.mesh_core import face_key
from mesh.synthetic import make_synthetic_partition
from raytrace.bvh import MAX_LEAF_TRIS, trace_brute_force, trace_front_face_culled
from raytrace.shell import build_shell, extract_shell, generate_segments, pack_handle, unpack_handle


def test_pack_handle_examples():
    assert pack_handle(Kind.TET, 0) == 0
    assert pack_handle(Kind.HEX, 5) == 23
    assert unpack_handle(23) == (Kind.HEX, 5)
    assert unpack_handle(pack_handle(Kind.WED, (1 << 30) - 1)) == (Kind.WED, (1 << 30) - 1)
    with pytest.raises(HandleOverflowError):
        pack_handle(Kind.TET, 1 << 30)


def test_single_tet_shell(unit_tet):
    faces = extract_shell(unit_tet)
    assert len(faces) == 4
    assert all(unpack_handle(f.handle) == (Kind.TET, 0) for f in faces)


def test_single_hex_shell(unit_hex):
    faces = extract_shell(unit_hex)
    assert len(faces) == 12
    assert all(len(f.face_ids) == 4 for f in faces)
    first = faces[0]
    assert first.tri == (first.face_ids[0], first.face_ids[1], first.face_ids[2])
    assert faces[1].tri == (first.face_ids[0], first.face_ids[2], first.face_ids[3])


def test_glued_tets_shell_matches_brute_force(glued_tets):
    faces = extract_shell(glued_tets)
    assert len(faces) == 6
    mesh = glued_tets.mesh
    seen = {}
    for k, i in mesh.iter_elements():
        for local in FACE_TABLE[k]:
            key = face_key(mesh.elements[k][i][list(local)])
            seen[key] = seen.get(key, 0) + 1
    boundary = {key for key, n in seen.items() if n == 1}
    assert {face_key(f.face_ids) for f in faces} == boundary
    assert (1, 2, 3) not in {face_key(f.face_ids) for f in faces}


def test_shell_normals_point_out_of_owner(unit_hex):
    pos = unit_hex.mesh.positions
    center = pos.mean(axis=0)
    for f in extract_shell(unit_hex):
        p = pos[list(f.tri)]
        n = np.cross(p[1] - p[0], p[2] - p[0])
        assert np.dot(n, p.mean(axis=0) - center) > 0


def test_trace_hits_far_face_of_tet(unit_tet):
    shell = build_shell(unit_tet)
    hit = trace_front_face_culled(shell.bvh, (0.2, 0.2, -1.0), (0.0, 0.0, 1.0))
    assert hit is not None
    face, t = hit
    assert shell.faces[face].face_slot == 1
    assert t == pytest.approx(1.6)


def test_trace_miss(unit_tet):
    shell = build_shell(unit_tet)
    assert trace_front_face_culled(shell.bvh, (5.0, 5.0, -1.0), (0.0, 0.0, 1.0)) is None


def test_grazing_shared_edge_single_hit(unit_hex):
    shell = build_shell(unit_hex)
    tris = shell.bvh.tris
    # (0.5, 0.5, 1) lies on the split diagonal of the top quad
    hit = trace_front_face_culled(shell.bvh, (0.5, 0.5, -1.0), (0.0, 0.0, 1.0))
    assert hit is not None
    assert hit[1] == pytest.approx(2.0)
    assert hit == trace_brute_force(tris, (0.5, 0.5, -1.0), (0.0, 0.0, 1.0))


def test_bvh_matches_brute_force(rng):
    cluster = make_synthetic_partition((4, 4, 4), "tet", "interleavedCombs", 2)[0]
    shell = build_shell(cluster)
    bvh = shell.bvh
    assert sorted(bvh.order.tolist()) == list(range(len(shell.faces)))
    for _, ids in bvh.leaf_ranges():
        assert len(ids) <= MAX_LEAF_TRIS
    for _ in range(200):
        o = rng.uniform(-0.5, 1.5, 3)
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        got = trace_front_face_culled(bvh, o, d, 1e-9)
        want = trace_brute_force(bvh.tris, o, d, 1e-9)
        if want is None:
            assert got is None
        else:
            assert got is not None and got[1] == pytest.approx(want[1], abs=1e-12)


def test_leaf_boxes_enclose_triangles():
    cluster = make_synthetic_partition((3, 3, 3), "wed", "slabs", 1)[0]
    bvh = build_shell(cluster).bvh
    for node, ids in bvh.leaf_ranges():
        pts = bvh.tris[ids].reshape(-1, 3)
        assert np.all(pts >= bvh.lo[node] - 1e-12) and np.all(pts <= bvh.hi[node] + 1e-12)


def test_single_tet_one_segment(unit_tet):
    shell = build_shell(unit_tet)
    segs = generate_segments(shell, (0.2, 0.2, -1.0), (0.0, 0.0, 1.0), pixel=7)
    assert len(segs) == 1
    seg = segs[0]
    assert seg.pixel == 7
    assert seg.t_entry == pytest.approx(1.0)
    assert seg.t_exit == pytest.approx(1.6)
    assert shell.faces[seg.entry_face].face_slot == 3
    assert unpack_handle(seg.entry_handle) == (Kind.TET, 0)


def comb_clusters():
    # h = 0.25; the middle layer alternates cluster 0 (even x columns) and cluster 1 (odd)
    return make_synthetic_partition((4, 2, 3), "tet", "interleavedCombs", 2)


def test_comb_cluster_entered_twice():
    origin, d = np.array([-1.0, 0.31, 0.37]), np.array([1.0, 0.0, 0.0])
    c0, c1 = comb_clusters()
    segs0 = generate_segments(build_shell(c0), origin, d)
    segs1 = generate_segments(build_shell(c1), origin, d)
    assert len(segs0) == 2 and len(segs1) == 2
    assert segs0[0].t_exit < segs0[1].t_entry
    np.testing.assert_allclose([(s.t_entry, s.t_exit) for s in segs0], [(1.0, 1.25), (1.5, 1.75)], atol=1e-9)
    np.testing.assert_allclose([(s.t_entry, s.t_exit) for s in segs1], [(1.25, 1.5), (1.75, 2.0)], atol=1e-9)
    order = sorted([(s.t_entry, s.cluster_id) for s in segs0 + segs1])
    assert [cid for _, cid in order] == [0, 1, 0, 1]


def _inside_cluster(cluster, p) -> bool:
    mesh = cluster.mesh
    return any(element_contains(k, mesh.positions[mesh.elements[k][i].astype(np.int64)], p)
               for k, i in mesh.iter_elements())


def test_segments_cover_inside_interval(rng):
    for cluster in comb_clusters():
        shell = build_shell(cluster)
        for _ in range(6):
            o = np.array([-0.5, rng.uniform(0.05, 0.45), rng.uniform(0.05, 0.7)])
            d = np.array([1.0, rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)])
            d /= np.linalg.norm(d)
            segs = generate_segments(shell, o, d)
            for a, b in zip(segs, segs[1:]):
                assert a.t_exit < b.t_entry
            for t in np.linspace(0.0, 2.5, 101):
                near = any(abs(t - s.t_entry) < 1e-3 or abs(t - s.t_exit) < 1e-3 for s in segs)
                if near:
                    continue
                covered = any(s.t_entry < t < s.t_exit for s in segs)
                assert covered == _inside_cluster(cluster, o + t * d)


def test_entry_element_contains_entry_point():
    c0, _ = comb_clusters()
    shell = build_shell(c0)
    o, d = np.array([-1.0, 0.31, 0.37]), np.array([1.0, 0.0, 0.0])
    for seg in generate_segments(shell, o, d):
        kind, idx = unpack_handle(seg.entry_handle)
        ids = c0.mesh.elements[kind][idx].astype(np.int64)
        assert element_contains(kind, c0.mesh.positions[ids], o + (seg.t_entry + 1e-6) * d)


def test_origin_inside_uses_point_location(unit_hex):
    data = ClusterData.prepare(unit_hex)
    segs = generate_segments(data.shell, (0.5, 0.4, 0.3), (0.0, 0.0, 1.0), locate=data.locate)
    assert len(segs) == 1
    seg = segs[0]
    assert seg.entry_face == -1
    assert seg.t_entry == pytest.approx(0.0, abs=1e-5)
    assert seg.t_exit == pytest.approx(0.7)
    assert unpack_handle(seg.entry_handle) == (Kind.HEX, 0)


def test_coincident_boundaries_give_well_formed_segments():
    clusters = make_synthetic_partition((4, 4, 4), "hex", "slabs", 2)
    o, d = np.array([-1.0, 0.33, 0.41]), np.array([1.0, 0.0, 0.0])
    segs = [generate_segments(build_shell(c), o, d) for c in clusters]
    assert [len(s) for s in segs] == [1, 1]
    for s in segs:
        assert 0 <= s[0].t_entry < s[0].t_exit
    assert segs[0][0].t_exit == pytest.approx(segs[1][0].t_entry)

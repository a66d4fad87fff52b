import numpy as np
import pytest

from common.errors import CompactionCorruptionError
from mesh.cells import FACE_TABLE, VERTEX_COUNT, Kind
from mesh.compaction import RECORD_BYTES, _compact_rows, compact, compact_mesh, reconstruct, size_account
from mesh.mesh_core import Element
from mesh.synthetic import make_synthetic_partition


def test_record_sizes():
    assert [RECORD_BYTES[k] for k in Kind] == [4, 16, 16, 32]


def test_compact_tet():
    assert int(compact(Element(Kind.TET, (10, 20, 30, 40)))["vx"]) == 40


def test_compact_pyramid():
    rec = compact(Element(Kind.PYR, (1, 2, 3, 4, 5)))
    assert int(rec["dx"]) == 2
    assert rec["diag"].tolist() == [2, 4]
    assert int(rec["top"]) == 5


def test_compact_wedge():
    rec = compact(Element(Kind.WED, (0, 1, 2, 3, 4, 5)))
    assert rec["dx"].tolist() == [1, 4]
    assert rec["diag"].tolist() == [0, 4]


def test_reconstruct_tet_from_entry_face():
    rec = compact(Element(Kind.TET, (10, 20, 30, 40)))
    # slot 0 holds local vertices (0, 1, 3)
    assert reconstruct(rec, Kind.TET, 0, (10, 20, 40)) == (10, 20, 30, 40)


def test_reconstruct_pyramid_through_base_reads_top():
    rec = compact(Element(Kind.PYR, (1, 2, 3, 4, 5)))
    assert reconstruct(rec, Kind.PYR, 0, (1, 4, 3, 2)) == (1, 2, 3, 4, 5)


def test_reconstruct_wedge_through_triangle_with_diag():
    rec = compact(Element(Kind.WED, (0, 1, 2, 3, 4, 5)))
    assert reconstruct(rec, Kind.WED, 0, (0, 1, 2)) == (0, 1, 2, 3, 4, 5)


@pytest.mark.parametrize("kind", list(Kind))
def test_every_face_reconstructs_exact_order(kind, rng):
    n = 300
    ids = np.stack([rng.choice(1 << 30, size=VERTEX_COUNT[kind], replace=False) for _ in range(n)]).astype(np.uint32)
    records = _compact_rows(kind, ids)
    for row, rec in zip(ids, records):
        expected = tuple(int(v) for v in row)
        for slot, local in enumerate(FACE_TABLE[kind]):
            assert reconstruct(rec, kind, slot, [expected[p] for p in local]) == expected


@pytest.mark.parametrize("mix", ["tet", "pyr", "wed", "mixed"])
def test_reconstruct_across_every_interior_face(mix):
    cluster = make_synthetic_partition((3, 3, 3), mix, "slabs", 1)[0]
    mesh = cluster.mesh
    conn = cluster.ensure_connectivity()
    records = compact_mesh(mesh)
    for k, i in mesh.iter_elements():
        ids = mesh.elements[k][i]
        for s, local in enumerate(FACE_TABLE[k]):
            nb = conn.neighbor(k, i, s)
            if nb is None:
                continue
            nk, ni, ns, t = nb
            mine = [int(ids[p]) for p in local]
            entry = [mine[(t - j) % len(mine)] for j in range(len(mine))]
            assert reconstruct(records[nk][ni], nk, ns, entry) == tuple(int(v) for v in mesh.elements[nk][ni])


def test_tet_entry_with_wrong_vertex_count():
    rec = compact(Element(Kind.TET, (10, 20, 30, 40)))
    with pytest.raises(CompactionCorruptionError):
        reconstruct(rec, Kind.TET, 0, (10, 20, 40, 50))


def test_pyramid_triangle_without_diag_is_corrupt():
    rec = compact(Element(Kind.PYR, (1, 2, 3, 4, 5)))
    # slot 1 is (0, 1, 4); swap in ids that match neither diag
    with pytest.raises(CompactionCorruptionError):
        reconstruct(rec, Kind.PYR, 1, (1, 9, 5))


def test_pyramid_wrong_top_is_corrupt():
    rec = compact(Element(Kind.PYR, (1, 2, 3, 4, 5)))
    with pytest.raises(CompactionCorruptionError):
        reconstruct(rec, Kind.PYR, 1, (1, 2, 7))


def test_hex_record_mismatch_is_corrupt():
    rec = compact(Element(Kind.HEX, tuple(range(8))))
    with pytest.raises(CompactionCorruptionError):
        reconstruct(rec, Kind.HEX, 0, (0, 4, 7, 9))


def test_size_account_small_lander():
    full, packed, ratio = size_account({Kind.TET: 766_000_000, Kind.PYR: 47_500, Kind.WED: 32_000_000, Kind.HEX: 0})
    assert full == 16 * 766_000_000 + 20 * 47_500 + 24 * 32_000_000
    assert packed == 4 * 766_000_000 + 16 * 47_500 + 16 * 32_000_000
    assert 0.720 <= ratio <= 0.730
    assert abs(ratio - 0.7249) < 0.005


def test_size_account_pure_kinds():
    assert size_account({Kind.TET: 10})[2] == 0.75
    assert size_account({Kind.HEX: 10})[2] == 0.0


def test_size_account_empty():
    with pytest.raises(ValueError):
        size_account({Kind.TET: 0, Kind.HEX: 0})

"""
XOR-compacted element records and their reconstruction.

Records are stored in four kind-segregated arrays, addressed by the 30-bit
element index of a packed shell handle. Reconstruction needs the entry face
(its slot and its ids in that slot's VTK order) and uses index arithmetic
only; it never touches vertex positions.
"""

from typing import Mapping, Sequence

import numpy as np

from common.errors import CompactionCorruptionError
from mesh.cells import FACE_TABLE, VERTEX_COUNT, Kind
from mesh.mesh_core import Element, Mesh

TET_DTYPE = np.dtype([("vx", "<u4")])
PYR_DTYPE = np.dtype([("dx", "<u4"), ("diag", "<u4", (2,)), ("top", "<u4")])
WED_DTYPE = np.dtype([("dx", "<u4", (2,)), ("diag", "<u4", (2,))])
HEX_DTYPE = np.dtype([("v", "<u4", (8,))])

RECORD_DTYPE = {Kind.TET: TET_DTYPE, Kind.PYR: PYR_DTYPE, Kind.WED: WED_DTYPE, Kind.HEX: HEX_DTYPE}
RECORD_BYTES = {k: d.itemsize for k, d in RECORD_DTYPE.items()}
FULL_BYTES = {k: 4 * VERTEX_COUNT[k] for k in Kind}

# Positions of the explicitly stored diagonal vertices
PYR_DIAG = (1, 3)
WED_DIAG = (0, 4)
# XOR pairs: pyramid dx = v0^v2; wedge dx = (v2^v3, v1^v5)
PYR_DX = (0, 2)
WED_DX = ((2, 3), (1, 5))


def _compact_rows(kind: Kind, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.uint32).reshape(-1, VERTEX_COUNT[kind])
    out = np.zeros(len(v), dtype=RECORD_DTYPE[kind])
    if kind == Kind.TET:
        out["vx"] = v[:, 0] ^ v[:, 1] ^ v[:, 2] ^ v[:, 3]
    elif kind == Kind.PYR:
        out["dx"] = v[:, 0] ^ v[:, 2]
        out["diag"] = v[:, [1, 3]]
        out["top"] = v[:, 4]
    elif kind == Kind.WED:
        out["dx"][:, 0] = v[:, 2] ^ v[:, 3]
        out["dx"][:, 1] = v[:, 1] ^ v[:, 5]
        out["diag"] = v[:, [0, 4]]
    else:
        out["v"] = v
    return out


def compact(element: Element) -> np.void:
    """Compact record of the element's kind (a numpy structured scalar)."""
    return _compact_rows(element.kind, np.array([element.vertex_ids]))[0]


def compact_mesh(mesh: Mesh) -> dict[Kind, np.ndarray]:
    return {k: _compact_rows(k, mesh.elements[k]) for k in Kind}


def _place_entry(kind: Kind, entry_slot: int, entry_ids: Sequence[int]) -> list:
    local = FACE_TABLE[kind][entry_slot]
    if len(entry_ids) != len(local):
        raise CompactionCorruptionError(
            f"entry face slot {entry_slot} of {kind.name.lower()} has {len(local)} vertices, got {len(entry_ids)} ids")
    v = [None] * VERTEX_COUNT[kind]
    for pos, vid in zip(local, entry_ids):
        v[pos] = int(vid)
    return v


def _fill(v: list, pos: int, value: int, what: str) -> None:
    if v[pos] is None:
        v[pos] = int(value)
    elif v[pos] != int(value):
        raise CompactionCorruptionError(f"{what}: slot {pos} holds {v[pos]}, record implies {int(value)}")


def _diag_matches(v: list, diag_pos: tuple, diag: Sequence[int], entry_ids: Sequence[int], what: str) -> int:
    """Count diag ids present on the entry face; a present diag must sit in its own slot."""
    matched = 0
    for pos, d in zip(diag_pos, diag):
        if int(d) in entry_ids:
            matched += 1
            if v[pos] != int(d):
                raise CompactionCorruptionError(f"{what}: diag id {int(d)} on entry face but not in slot {pos}")
    return matched


def _reconstruct_tet(rec, v: list) -> None:
    # The single unknown vertex is the XOR of vx with the three entry ids
    missing = [p for p in range(4) if v[p] is None]
    known = [x for x in v if x is not None]
    v[missing[0]] = int(rec["vx"]) ^ known[0] ^ known[1] ^ known[2]


def _reconstruct_pyr(rec, v: list, entry_ids, shape: str) -> None:
    diag = [int(d) for d in rec["diag"]]
    matched = _diag_matches(v, PYR_DIAG, diag, entry_ids, "pyramid")
    if shape == "quad":
        # Entry through the base: only the apex is missing
        if matched != 2:
            raise CompactionCorruptionError(f"pyramid quad entry must hold both diag ids {diag}")
        if v[0] ^ v[2] != int(rec["dx"]):
            raise CompactionCorruptionError("pyramid quad entry disagrees with dx")
        _fill(v, 4, rec["top"], "pyramid top")
        return
    # Triangle entry: apex + one diag + one dx vertex
    if matched != 1:
        raise CompactionCorruptionError(f"pyramid triangle entry must hold exactly one diag id of {diag}")
    _fill(v, 4, rec["top"], "pyramid top")
    for pos, d in zip(PYR_DIAG, diag):
        _fill(v, pos, d, "pyramid diag")
    a, b = PYR_DX
    if v[a] is not None:
        _fill(v, b, int(rec["dx"]) ^ v[a], "pyramid dx")
    else:
        _fill(v, a, int(rec["dx"]) ^ v[b], "pyramid dx")


def _reconstruct_wed(rec, v: list, entry_ids, shape: str) -> None:
    diag = [int(d) for d in rec["diag"]]
    dx = [int(d) for d in rec["dx"]]
    matched = _diag_matches(v, WED_DIAG, diag, entry_ids, "wedge")
    if shape == "tri" and matched != 1:
        raise CompactionCorruptionError(f"wedge triangle entry must hold exactly one diag id of {diag}")
    if shape == "quad" and matched not in (1, 2):
        raise CompactionCorruptionError(f"wedge quad entry must hold one or both diag ids of {diag}")
    # Unmatched diag is read directly; the rest come from whichever dx pair has one known end
    for pos, d in zip(WED_DIAG, diag):
        _fill(v, pos, d, "wedge diag")
    for (a, b), x in zip(WED_DX, dx):
        if v[a] is not None and v[b] is None:
            v[b] = x ^ v[a]
        elif v[b] is not None and v[a] is None:
            v[a] = x ^ v[b]
        elif v[a] is not None and v[b] is not None and v[a] ^ v[b] != x:
            raise CompactionCorruptionError(f"wedge entry disagrees with dx ({a},{b})")


def reconstruct(record, kind: Kind, entry_slot: int, entry_ids: Sequence[int]) -> tuple[int, ...]:
    """Full VTK-ordered vertex ids from a compact record and its entry face.

    `entry_ids` are the entry face's ids in the order of face slot
    `entry_slot` of this element (see mesh.cells.FACE_TABLE).
    """
    kind = Kind(kind)
    if not 0 <= entry_slot < len(FACE_TABLE[kind]):
        raise CompactionCorruptionError(f"no face slot {entry_slot} on {kind.name.lower()}")
    entry_ids = [int(i) for i in entry_ids]
    v = _place_entry(kind, entry_slot, entry_ids)
    shape = "tri" if len(entry_ids) == 3 else "quad"
    if kind == Kind.TET:
        _reconstruct_tet(record, v)
    elif kind == Kind.PYR:
        _reconstruct_pyr(record, v, entry_ids, shape)
    elif kind == Kind.WED:
        _reconstruct_wed(record, v, entry_ids, shape)
    else:
        for pos, vid in enumerate(record["v"]):
            _fill(v, pos, vid, "hexahedron")
    if any(x is None for x in v) or len(set(v)) != len(v):
        raise CompactionCorruptionError(f"{kind.name.lower()} reconstruction produced {v}")
    return tuple(v)


def size_account(counts: Mapping) -> tuple[int, int, float]:
    """(fullBytes, compactBytes, reductionRatio) for per-kind element counts."""
    c = {Kind(k): int(n) for k, n in counts.items()}
    if any(n < 0 for n in c.values()):
        raise ValueError("element counts must be >= 0")
    full = sum(FULL_BYTES[k] * c.get(k, 0) for k in Kind)
    packed = sum(RECORD_BYTES[k] * c.get(k, 0) for k in Kind)
    if full == 0:
        raise ValueError("reduction ratio is undefined for an empty mesh")
    return full, packed, 1.0 - packed / full

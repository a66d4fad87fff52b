"""
Cluster file reader/writer (little-endian binary, magic "UVM1").

Header: magic, u32 version, u32 vertexCount, u32 tet/pyr/wed/hex counts,
u32 fieldCount, u32 timestepCount. Then positions (f64 x3 per vertex),
element index arrays per kind (u32, VTK order), and scalars as
fieldCount x timestepCount blocks of f32 per vertex.
"""

import os
import struct
from typing import Optional

import numpy as np

from common.errors import ClusterFormatError, MeshError
from common.scene_paths import ensure_dirs_for, read_manifest, write_manifest
from mesh.cells import VERTEX_COUNT, Kind
from mesh.mesh_core import Cluster, Mesh

MAGIC = b"UVM1"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIIIII")


def cluster_to_bytes(cluster: Cluster) -> bytes:
    m = cluster.mesh
    counts = [len(m.elements[k]) for k in Kind]
    parts = [_HEADER.pack(MAGIC, VERSION, m.vertex_count, *counts, m.field_count, m.timestep_count),
             m.positions.astype("<f8").tobytes()]
    for k in Kind:
        parts.append(m.elements[k].astype("<u4").tobytes())
    parts.append(m.scalars.astype("<f4").tobytes())
    return b"".join(parts)


def _take(buf: memoryview, offset: int, nbytes: int, what: str) -> tuple[memoryview, int]:
    if offset + nbytes > len(buf):
        raise ClusterFormatError(f"truncated {what} section: need {nbytes} bytes at offset {offset}, file has {len(buf)}")
    return buf[offset:offset + nbytes], offset + nbytes


def cluster_from_bytes(data: bytes, cluster_id: int = 0, rank: int = 0, validate: bool = True) -> Cluster:
    buf = memoryview(data)
    head, off = _take(buf, 0, _HEADER.size, "header")
    magic, version, nv, nt, npy, nw, nh, nf, ns = _HEADER.unpack(head)
    if magic != MAGIC:
        raise ClusterFormatError(f"bad magic {bytes(magic)!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise ClusterFormatError(f"unsupported version {version}")
    raw, off = _take(buf, off, nv * 24, "positions")
    positions = np.frombuffer(raw, dtype="<f8").reshape(nv, 3).astype(np.float64)
    elements = {}
    for k, n in zip(Kind, (nt, npy, nw, nh)):
        raw, off = _take(buf, off, n * VERTEX_COUNT[k] * 4, f"{k.name.lower()} elements")
        arr = np.frombuffer(raw, dtype="<u4").reshape(n, VERTEX_COUNT[k]).astype(np.uint32)
        if n and int(arr.max()) >= nv:
            raise ClusterFormatError(f"{k.name.lower()} index {int(arr.max())} out of range (vertex count {nv})")
        elements[k] = arr
    raw, off = _take(buf, off, nf * ns * nv * 4, "scalars")
    scalars = np.frombuffer(raw, dtype="<f4").reshape(nf, ns, nv).astype(np.float32)
    if off != len(buf):
        raise ClusterFormatError(f"{len(buf) - off} trailing bytes after scalars")
    mesh = Mesh(positions=positions, elements=elements, scalars=scalars)
    if validate:
        try:
            mesh.validate()
        except MeshError as e:
            raise ClusterFormatError(f"invalid cluster: {e}") from e
    return Cluster(cluster_id=cluster_id, mesh=mesh, rank=rank)


def save_cluster(cluster: Cluster, path: str) -> None:
    ensure_dirs_for(path)
    with open(path, "wb") as f:
        f.write(cluster_to_bytes(cluster))


def load_cluster(path: str, cluster_id: int = 0, rank: int = 0, validate: bool = True) -> Cluster:
    with open(path, "rb") as f:
        data = f.read()
    try:
        return cluster_from_bytes(data, cluster_id=cluster_id, rank=rank, validate=validate)
    except ClusterFormatError as e:
        raise ClusterFormatError(f"{path}: {e}") from e


def load_scene(manifest_path: str, validate: bool = True) -> list[Cluster]:
    """Load every cluster listed in a manifest; cluster ids follow line order."""
    return [load_cluster(path, cluster_id=cid, rank=rank, validate=validate)
            for cid, (rank, path) in enumerate(read_manifest(manifest_path))]


def save_scene(clusters: list[Cluster], manifest_path: str, folder: Optional[str] = None) -> list[str]:
    """Write one file per cluster plus the manifest; returns the cluster paths."""
    folder = folder or os.path.dirname(os.path.abspath(manifest_path))
    paths = []
    for c in clusters:
        path = os.path.join(folder, f"cluster_{c.cluster_id:04d}.uvm")
        save_cluster(c, path)
        paths.append(path)
    write_manifest(manifest_path, [(c.rank, p) for c, p in zip(clusters, paths)])
    return paths

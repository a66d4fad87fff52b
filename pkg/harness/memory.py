import pandas as pd

from mesh.cells import Kind
from mesh.compaction import FULL_BYTES, RECORD_BYTES, size_account
from mesh.mesh_core import Cluster
from raytrace.shell import build_shell

CONNECTIVITY_BYTES_PER_FACE = 4
BVH_NODE_BYTES = 32          # two float32x3 bounds + two int32 child/leaf fields
SHELL_FACE_BYTES = 16        # three uint32 vertex ids + packed handle


def cluster_memory(cluster: Cluster) -> dict:
    conn = cluster.ensure_connectivity()
    counts = cluster.mesh.element_counts()
    shell = build_shell(cluster)
    return {
        "cluster": cluster.cluster_id,
        "rank": cluster.rank,
        "connectivityBytes": CONNECTIVITY_BYTES_PER_FACE * conn.face_slot_count(),
        "compactBytes": sum(RECORD_BYTES[k] * counts[k] for k in Kind),
        "fullBytes": sum(FULL_BYTES[k] * counts[k] for k in Kind),
        "bvhBytes": BVH_NODE_BYTES * shell.bvh.node_count + SHELL_FACE_BYTES * shell.triangle_count,
        **{f"{k.name.lower()}Count": counts[k] for k in Kind},
    }


def memory_report(clusters: list[Cluster]) -> pd.DataFrame:
    """Per-rank bytes for connectivity, element records (compact and full) and the shell BVH."""
    df = pd.DataFrame([cluster_memory(c) for c in clusters])
    per_rank = df.drop(columns=["cluster"]).groupby("rank").sum().reset_index()
    per_rank["totalBytes"] = per_rank[["connectivityBytes", "compactBytes", "bvhBytes"]].sum(axis=1)
    for col in ("connectivityBytes", "compactBytes", "bvhBytes"):
        per_rank[col.replace("Bytes", "Share")] = per_rank[col] / per_rank["totalBytes"]
    per_rank["reduction"] = [
        size_account({k: row[f"{k.name.lower()}Count"] for k in Kind})[2] for _, row in per_rank.iterrows()
    ]
    return per_rank

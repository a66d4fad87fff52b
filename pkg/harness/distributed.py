"""
Rank-simulated distributed rendering.

Every rank runs in its own thread: it traces and marches the clusters it
owns for every pixel, writes fragments into its own store and then joins the
deep compositing protocol. Phase boundaries are barriers, so wall times are
barrier-aligned; per-rank integration cost is measured as thread CPU time
plus the CPU time of the rank's pixel worker processes.

With `workers > 1` a rank splits its pixels into contiguous chunks and traces
them in a process pool. Chunks come back in pixel order, so fragment stores
and images do not depend on the worker count.
"""

import multiprocessing as mp
import threading
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np

from common.errors import TransportError
from common.log import log
from composite.compositor import CompositeResult, RegionAssignment, deep_composite
from composite.deepfb import Fragment, PixelFragmentStore
from composite.transport import InProcessRendezvous, Transport
from harness.config import RenderConfig
from harness.scene import check_field, check_ranks, load_clusters, prepare_rank, scene_eps
from march.marcher import ClusterData, MarchStats, integrate_segment
from march.transfer_function import TransferFunction
from mesh.mesh_core import Cluster
from raytrace.shell import generate_segments


@dataclass
class RankStats:
    rank: int
    clusters: int = 0
    segments: int = 0
    total_fragments: int = 0
    avg_fragments_non_empty: float = 0.0
    pixel_counts: Optional[np.ndarray] = field(default=None, repr=False)
    march: MarchStats = field(default_factory=MarchStats)
    integration_ms: float = 0.0         # thread + pixel worker CPU time
    integration_wall_ms: float = 0.0
    compositing_ms: float = 0.0
    total_ms: float = 0.0
    counter_bytes: int = 0
    fragment_bytes: int = 0
    overflows: int = 0

    @property
    def work(self) -> int:
        """Deterministic integration work: samples taken plus element steps."""
        return self.march.samples + self.march.element_steps

    def as_record(self) -> dict:
        return {
            "rank": self.rank,
            "clusters": self.clusters,
            "totalFragments": self.total_fragments,
            "avgFragmentsNonEmpty": self.avg_fragments_non_empty,
            "integrationMs": self.integration_ms,
            "integrationWallMs": self.integration_wall_ms,
            "compositingMs": self.compositing_ms,
            "totalMs": self.total_ms,
            "segments": self.segments,
            "samples": self.march.samples,
            "elementSteps": self.march.element_steps,
            "marchFailures": self.march.failures,
            "leftTestsMaxTet": self.march.left_test_max[0],
            "leftTestsMaxPyr": self.march.left_test_max[1],
            "leftTestsMaxWed": self.march.left_test_max[2],
            "leftTestsMaxHex": self.march.left_test_max[3],
            "counterBytes": self.counter_bytes,
            "fragmentBytes": self.fragment_bytes,
            "overflows": self.overflows,
        }


@dataclass
class DistributedResult:
    image: np.ndarray
    ranks: list[RankStats]
    stores: list[PixelFragmentStore] = field(repr=False)
    regions: RegionAssignment = None
    wall_ms: float = 0.0

    @property
    def total_fragments(self) -> int:
        return sum(r.total_fragments for r in self.ranks)

    @property
    def fragment_bytes(self) -> int:
        return sum(r.fragment_bytes for r in self.ranks)


def pixel_fragments(datas: list[ClusterData], origin, direction, pixel: int, tf: TransferFunction,
                    config: RenderConfig, stats: Optional[MarchStats] = None) -> Iterator[tuple[int, Fragment]]:
    """(cluster id, fragment) for every segment of one ray, clusters in order, segments front to back."""
    for data in datas:
        for seg in generate_segments(data.shell, origin, direction, pixel, locate=data.locate):
            frag = integrate_segment(seg, data, tf, config.step, origin, direction,
                                     config.field, config.timestep, stats)
            if frag is not None:
                yield data.cluster_id, frag


PixelFragments = list[list[tuple[int, Fragment]]]

_worker_state: Optional[tuple] = None


def _init_pixel_worker(datas: list[ClusterData], tf: TransferFunction, config: RenderConfig) -> None:
    global _worker_state
    _worker_state = (datas, tf, config)


def _trace_serial(datas, origin, first: int, directions, tf, config) -> tuple[PixelFragments, MarchStats]:
    march = MarchStats()
    out = [list(pixel_fragments(datas, origin, d, first + i, tf, config, march)) for i, d in enumerate(directions)]
    return out, march


def _trace_chunk(task) -> tuple[PixelFragments, MarchStats, float]:
    origin, first, directions = task
    datas, tf, config = _worker_state
    cpu0 = time.process_time()
    out, march = _trace_serial(datas, origin, first, directions, tf, config)
    return out, march, (time.process_time() - cpu0) * 1000.0


def trace_pixels(datas: list[ClusterData], origin, directions: np.ndarray, tf: TransferFunction,
                 config: RenderConfig, workers: int = 1) -> tuple[PixelFragments, MarchStats, float]:
    """Per-pixel [(cluster id, fragment)] in pixel order, march stats, worker CPU ms."""
    if workers <= 1 or len(directions) < 2 * workers:
        out, march = _trace_serial(datas, origin, 0, directions, tf, config)
        return out, march, 0.0
    chunk = -(-len(directions) // (4 * workers))
    tasks = [(origin, s, directions[s:s + chunk]) for s in range(0, len(directions), chunk)]
    out: PixelFragments = []
    march = MarchStats()
    cpu_ms = 0.0
    # spawn: ranks are threads, and forking a threaded process is unsafe
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_pixel_worker,
                             initargs=(datas, tf, config), mp_context=mp.get_context("spawn")) as pool:
        for part, part_stats, part_ms in pool.map(_trace_chunk, tasks):
            out.extend(part)
            march.merge(part_stats)
            cpu_ms += part_ms
    return out, march, cpu_ms


def integrate_rank(datas: list[ClusterData], origin, directions: np.ndarray, tf: TransferFunction,
                   config: RenderConfig, store: PixelFragmentStore, stats: RankStats) -> float:
    """Fill the rank's store; returns the CPU ms spent in pixel worker processes."""
    passes = 2 if store.mode == "two-pass" else 1
    worker_ms = 0.0
    for p in range(passes):
        if p == 1:
            store.start_storing()
        march = MarchStats()
        if not tf.is_transparent and datas:
            fragments, march, ms = trace_pixels(datas, origin, directions, tf, config, config.workers)
            worker_ms += ms
            for pixel, frags in enumerate(fragments):
                for _cid, frag in frags:
                    store.write(pixel, frag)
        stats.march = march
        stats.segments = march.segments
    return worker_ms


def _summarize_store(store: PixelFragmentStore, stats: RankStats) -> None:
    counts = store.counts.copy()
    stats.pixel_counts = counts
    stats.total_fragments = int(counts.sum())
    non_empty = counts[counts > 0]
    stats.avg_fragments_non_empty = float(non_empty.mean()) if len(non_empty) else 0.0
    stats.overflows = store.overflows


def run_rank(transport: Transport, datas: list[ClusterData], config: RenderConfig, regions: RegionAssignment,
             store: PixelFragmentStore, stats: RankStats) -> CompositeResult:
    tag = f"RANK-{transport.rank}"
    origin, directions = config.camera.rays()
    tf = config.transfer_function()
    transport.barrier()
    wall0 = time.perf_counter()
    cpu0 = time.thread_time()
    worker_ms = integrate_rank(datas, origin, directions, tf, config, store, stats)
    stats.integration_ms = (time.thread_time() - cpu0) * 1000.0 + worker_ms
    _summarize_store(store, stats)
    log(tag, f"Integrated {len(datas)} clusters: {stats.segments} segments, {stats.total_fragments} fragments")
    transport.barrier()
    wall1 = time.perf_counter()
    result = deep_composite(transport, regions, store, config.precision)
    wall2 = time.perf_counter()
    stats.integration_wall_ms = (wall1 - wall0) * 1000.0
    stats.total_ms = (wall2 - wall0) * 1000.0
    stats.compositing_ms = stats.total_ms - stats.integration_wall_ms
    stats.counter_bytes = result.counter_bytes
    stats.fragment_bytes = result.fragment_bytes
    return result


def render_distributed(config: RenderConfig, clusters: Optional[list[Cluster]] = None) -> DistributedResult:
    """Render with config.ranks concurrent ranks; the image is assembled on rank 0."""
    clusters = load_clusters(config.scene) if clusters is None else clusters
    check_ranks(clusters, config.ranks)
    check_field(clusters, config.field, config.timestep)
    config.transfer_function()
    eps = scene_eps(clusters)
    cam = config.camera
    regions = RegionAssignment(cam.width, cam.height, config.ranks)
    hub = InProcessRendezvous(config.ranks, timeout=config.timeout)
    stores = [PixelFragmentStore(cam.pixel_count, config.frag_mode, config.frag_k, config.overflow)
              for _ in range(config.ranks)]
    stats = [RankStats(r) for r in range(config.ranks)]
    results: list[Optional[CompositeResult]] = [None] * config.ranks
    errors: list[Optional[BaseException]] = [None] * config.ranks

    def worker(rank: int) -> None:
        transport = hub.endpoint(rank)
        try:
            datas = prepare_rank(clusters, rank, config.compacted, config.verify_reconstruction, eps,
                                 config.share_edges)
            stats[rank].clusters = len(datas)
            results[rank] = run_rank(transport, datas, config, regions, stores[rank], stats[rank])
        except BaseException as exc:
            errors[rank] = exc
            transport.abort()

    start = time.perf_counter()
    threads = [threading.Thread(target=worker, args=(r,), name=f"rank-{r}") for r in range(config.ranks)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    wall_ms = (time.perf_counter() - start) * 1000.0
    failed = [e for e in errors if e is not None]
    if failed:
        # Prefer the root cause over the broken-rendezvous errors it triggered elsewhere
        root = next((e for e in failed if not isinstance(e, TransportError)), failed[0])
        raise root
    log("RENDER", f"{config.ranks} ranks, {sum(s.total_fragments for s in stats)} fragments, {wall_ms:.1f} ms")
    return DistributedResult(results[0].image, stats, stores, regions, wall_ms)

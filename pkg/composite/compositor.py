"""
Deep compositing over a collective transport.

Each rank owns a contiguous row-major range of pixels. The protocol runs in
five barrier-separated steps:
    1. local prefix sums and a contiguous send buffer
    2. per-destination counter exchange (bit-packed counter blocks)
    3. fragment exchange sized from the received counters
    4. per-pixel k-way merge of the R received lists, folded with `over`
    5. composited regions gathered on the master (rank 0)
"""

import heapq
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from common.errors import ProtocolError
from composite.deepfb import (
    FRAGMENT_BYTES,
    FRAGMENT_DTYPE,
    CounterBlock,
    PixelFragmentStore,
    build_send_buffer,
    decode_array,
    decode_counters,
    encode_array,
    encode_counters,
    exclusive_prefix,
    finalize_counts,
)
from composite.transport import Transport, frame, unframe

STEP_SEND_BUFFER = 1
STEP_COUNTERS = 2
STEP_FRAGMENTS = 3
STEP_COMPOSITE = 4
STEP_GATHER = 5


def over(front, back) -> np.ndarray:
    """Premultiplied front-to-back over; works on single rgba values or (..., 4) arrays."""
    f = np.asarray(front, dtype=np.float64)
    b = np.asarray(back, dtype=np.float64)
    return f + (1.0 - f[..., 3:4]) * b


def fold(rgba_rows) -> np.ndarray:
    out = np.zeros(4)
    for row in rgba_rows:
        out = over(out, row)
    return out


def _rows(lst):
    if isinstance(lst, np.ndarray):
        for i in range(len(lst)):
            yield float(lst["z"][i]), i, (*lst["rgb"][i].tolist(), float(lst["a"][i]))
    else:
        for i, f in enumerate(lst):
            yield f.depth, i, (*f.color, f.alpha)


def _stream(rank: int, lst):
    for z, i, rgba in _rows(lst):
        yield (z, rank, i), rgba


def composite_pixel(lists: Sequence) -> np.ndarray:
    """k-way merge of per-rank depth-sorted lists by (depth, rank, order), folded front to back."""
    streams = [_stream(r, lst) for r, lst in enumerate(lists)]
    out = np.zeros(4)
    for _key, rgba in heapq.merge(*streams, key=lambda item: item[0]):
        out = over(out, rgba)
    return out


@dataclass(frozen=True)
class RegionAssignment:
    width: int
    height: int
    ranks: int

    def __post_init__(self):
        if self.ranks < 1:
            raise ValueError(f"rank count must be >= 1, got {self.ranks}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"invalid image size {self.width}x{self.height}")

    @property
    def pixel_count(self) -> int:
        return self.width * self.height

    def start(self, rank: int) -> int:
        base, extra = divmod(self.pixel_count, self.ranks)
        return rank * base + min(rank, extra)

    def end(self, rank: int) -> int:
        return self.start(rank + 1)

    def range_of(self, rank: int) -> tuple[int, int]:
        return self.start(rank), self.end(rank)

    def size_of(self, rank: int) -> int:
        return self.end(rank) - self.start(rank)

    def ranges(self) -> list[tuple[int, int]]:
        return [self.range_of(r) for r in range(self.ranks)]

    def region_of(self, pixel: int) -> int:
        for r in range(self.ranks):
            if pixel < self.end(r):
                return r
        raise IndexError(f"pixel {pixel} out of range [0, {self.pixel_count})")


@dataclass
class CompositeResult:
    image: Optional[np.ndarray]                 # (H, W, 4) on the master, None elsewhere
    region: np.ndarray                          # (pixels in my region, 4)
    counter_bytes: int = 0
    fragment_bytes: int = 0
    fragments_sent: int = 0
    fragments_received: int = 0
    received_counts: Optional[np.ndarray] = field(default=None, repr=False)


def deep_composite(
    transport: Transport,
    regions: RegionAssignment,
    store: PixelFragmentStore,
    precision: str = "float",
) -> CompositeResult:
    rank, size = transport.rank, transport.size
    if size != regions.ranks:
        raise ProtocolError(rank, STEP_SEND_BUFFER, f"transport has {size} ranks, regions expect {regions.ranks}")
    if store.pixel_count != regions.pixel_count:
        raise ProtocolError(rank, STEP_SEND_BUFFER,
                            f"store covers {store.pixel_count} pixels, frame has {regions.pixel_count}")

    # 1
    counts, prefix, _total = finalize_counts(store)
    send = build_send_buffer(store, prefix)

    # 2
    outgoing = [frame(STEP_COUNTERS, encode_counters(counts[s:e]).to_bytes()) for s, e in regions.ranges()]
    counter_bytes = sum(len(m) for m in outgoing)
    my_start, my_end = regions.range_of(rank)
    mine = my_end - my_start
    received_counts = np.zeros((size, mine), dtype=np.int64)
    for src, msg in enumerate(transport.all_to_all_variable(outgoing)):
        block = CounterBlock.from_bytes(unframe(msg, STEP_COUNTERS, rank), rank, STEP_COUNTERS)
        got = decode_counters(block)
        if len(got) != mine:
            raise ProtocolError(rank, STEP_COUNTERS, f"rank {src} sent {len(got)} counters for a {mine}-pixel region")
        received_counts[src] = got

    # 3
    outgoing = []
    fragments_sent = 0
    for s, e in regions.ranges():
        lo = int(prefix[s]) if s < len(prefix) else len(send)
        n = int(counts[s:e].sum())
        outgoing.append(frame(STEP_FRAGMENTS, encode_array(send[lo:lo + n], precision)))
        fragments_sent += n
    offsets = exclusive_prefix(received_counts.reshape(-1))
    per_source = received_counts.sum(axis=1)
    recv = np.zeros(int(per_source.sum()), dtype=FRAGMENT_DTYPE)
    fragment_bytes = 0
    cursor = 0
    for src, msg in enumerate(transport.all_to_all_variable(outgoing)):
        payload = unframe(msg, STEP_FRAGMENTS, rank)
        expected = int(per_source[src]) * FRAGMENT_BYTES[precision]
        if len(payload) != expected:
            raise ProtocolError(rank, STEP_FRAGMENTS,
                                f"rank {src} sent {len(payload)} fragment bytes, counters announce {expected}")
        fragment_bytes += len(payload)
        recv[cursor:cursor + per_source[src]] = decode_array(payload, precision)
        cursor += int(per_source[src])

    # 4: fragments from rank r for pixel j start at offsets[r * P + j]
    region = np.zeros((mine, 4))
    for j in np.nonzero(received_counts.sum(axis=0))[0]:
        lists = []
        for r in range(size):
            o = int(offsets[r * mine + j])
            lists.append(recv[o:o + received_counts[r, j]])
        region[j] = composite_pixel(lists)

    # 5
    transport.send_to_master(frame(STEP_GATHER, region.astype("<f4").tobytes()))
    image = None
    if transport.is_master:
        flat = np.zeros((regions.pixel_count, 4))
        for src, msg in enumerate(transport.master_receive_all()):
            s, e = regions.range_of(src)
            payload = unframe(msg, STEP_GATHER, rank)
            if len(payload) != (e - s) * 16:
                raise ProtocolError(rank, STEP_GATHER, f"rank {src} region has {len(payload)} bytes, expected {(e - s) * 16}")
            flat[s:e] = np.frombuffer(payload, dtype="<f4").reshape(-1, 4)
        image = flat.reshape(regions.height, regions.width, 4)
    return CompositeResult(image, region, counter_bytes, fragment_bytes, fragments_sent,
                           int(per_source.sum()), received_counts)


def prefold(store: PixelFragmentStore) -> tuple[np.ndarray, np.ndarray]:
    """One rgba and depth per pixel: the rank's own fragments folded in depth order (inf depth when empty)."""
    rgba = np.zeros((store.pixel_count, 4))
    depth = np.full(store.pixel_count, np.inf)
    for p in np.nonzero(store.counts)[0]:
        frags = store.pixel_fragments(int(p))
        rgba[p] = fold(f.rgba for f in frags)
        depth[p] = frags[0].depth
    return rgba, depth


def single_fragment_composite(images: Sequence[np.ndarray], depths: Sequence[np.ndarray]) -> np.ndarray:
    """Composite one pre-folded fragment per rank per pixel by depth (ties by rank)."""
    rgba = np.stack([np.asarray(i, dtype=np.float64).reshape(-1, 4) for i in images])    # (R, P, 4)
    z = np.stack([np.asarray(d, dtype=np.float64).reshape(-1) for d in depths])          # (R, P)
    order = np.argsort(z, axis=0, kind="stable")
    out = np.zeros(rgba.shape[1:])
    cols = np.arange(rgba.shape[1])
    for k in range(rgba.shape[0]):
        out = over(out, rgba[order[k], cols])
    shape = np.asarray(images[0]).shape
    return out.reshape(shape[:-1] + (4,)) if shape[-1] == 4 else out

"""
Deep framebuffer: per-pixel variable-length fragment lists.

Two-pass mode counts fragments first, allocates exactly from the prefix sum
of the counts and stores on a second pass. Single-pass mode keeps at most K
depth-sorted fragments per pixel and applies an overflow policy (drop the
deepest, or merge the most transparent into its front neighbor).

Wire layouts are little-endian:
    float: r, g, b, z, a as float32 (20 bytes)
    fixed: r, g, b, a as uint8 (value / 255) + z as float32 (8 bytes)
Counters are bit-packed at the smallest width in (2, 4, 8, 32) that holds
the largest count.
"""

import bisect
import struct
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from common.errors import FragmentContractError, ProtocolError
from common.log import log_once

FRAGMENT_DTYPE = np.dtype([("rgb", "<f4", (3,)), ("z", "<f4"), ("a", "<f4")])
FIXED_DTYPE = np.dtype([("rgba", "u1", (4,)), ("z", "<f4")])
PRECISIONS = ("float", "fixed")
FRAGMENT_BYTES = {"float": FRAGMENT_DTYPE.itemsize, "fixed": FIXED_DTYPE.itemsize}

MODES = ("two-pass", "single-pass")
OVERFLOW_POLICIES = ("drop", "merge")
COUNTER_WIDTHS = (2, 4, 8, 32)


def _f32(x: float) -> float:
    return float(np.float32(x))


@dataclass(frozen=True)
class Fragment:
    """Premultiplied color, opacity and depth, held at float32 precision."""
    color: tuple[float, float, float]
    alpha: float
    depth: float

    def __post_init__(self):
        object.__setattr__(self, "color", tuple(_f32(c) for c in self.color))
        object.__setattr__(self, "alpha", _f32(self.alpha))
        object.__setattr__(self, "depth", _f32(self.depth))

    @property
    def rgba(self) -> np.ndarray:
        return np.array([*self.color, self.alpha], dtype=np.float64)


def over_fragments(front: Fragment, back: Fragment, depth: float) -> Fragment:
    k = 1.0 - front.alpha
    color = tuple(f + k * b for f, b in zip(front.color, back.color))
    return Fragment(color, front.alpha + k * back.alpha, depth)


def fragments_to_array(fragments: Iterable[Fragment]) -> np.ndarray:
    fragments = list(fragments)
    out = np.zeros(len(fragments), dtype=FRAGMENT_DTYPE)
    for i, f in enumerate(fragments):
        out[i] = (f.color, f.depth, f.alpha)
    return out


def array_to_fragments(arr: np.ndarray) -> list[Fragment]:
    return [Fragment(tuple(r["rgb"].tolist()), float(r["a"]), float(r["z"])) for r in arr]


class PixelFragmentStore:
    """Per-pixel fragment storage for one rank."""

    def __init__(self, pixel_count: int, mode: str = "two-pass", k: int = 8, overflow: str = "drop"):
        if mode not in MODES:
            raise ValueError(f"unknown fragment mode {mode!r} (expected one of {MODES})")
        if overflow not in OVERFLOW_POLICIES:
            raise ValueError(f"unknown overflow policy {overflow!r} (expected one of {OVERFLOW_POLICIES})")
        if mode == "single-pass" and k < 1:
            raise ValueError(f"single-pass capacity K must be >= 1, got {k}")
        self.pixel_count = int(pixel_count)
        self.mode = mode
        self.k = int(k)
        self.overflow = overflow
        self.counts = np.zeros(self.pixel_count, dtype=np.int64)
        # two-pass
        self.phase = "count" if mode == "two-pass" else "store"
        self.prefix: Optional[np.ndarray] = None
        self.buffer: Optional[np.ndarray] = None
        self.filled: Optional[np.ndarray] = None
        # single-pass
        self.lists: dict[int, list[Fragment]] = {}
        self.overflows = 0

    @classmethod
    def two_pass(cls, pixel_count: int) -> "PixelFragmentStore":
        return cls(pixel_count, "two-pass")

    @classmethod
    def single_pass(cls, pixel_count: int, k: int, overflow: str = "drop") -> "PixelFragmentStore":
        return cls(pixel_count, "single-pass", k, overflow)

    def _check_pixel(self, pixel: int) -> None:
        if not 0 <= pixel < self.pixel_count:
            raise IndexError(f"pixel {pixel} out of range [0, {self.pixel_count})")

    def write(self, pixel: int, fragment: Fragment) -> None:
        self._check_pixel(pixel)
        if fragment.alpha <= 0.0:
            return
        if self.mode == "two-pass":
            if self.phase == "count":
                self.counts[pixel] += 1
                return
            if self.filled[pixel] >= self.counts[pixel]:
                raise FragmentContractError(
                    f"pixel {pixel}: storing fragment {self.filled[pixel] + 1} but only {self.counts[pixel]} were counted")
            self.buffer[self.prefix[pixel] + self.filled[pixel]] = (fragment.color, fragment.depth, fragment.alpha)
            self.filled[pixel] += 1
            return
        self._insert_bounded(pixel, fragment)

    def _insert_bounded(self, pixel: int, fragment: Fragment) -> None:
        lst = self.lists.setdefault(pixel, [])
        if len(lst) < self.k:
            _insert_by_depth(lst, fragment)
        elif self.overflow == "drop":
            self.overflows += 1
            log_once("DEEPFB", "drop", "list overflow: fragment inserted by depth, deepest entry evicted")
            _insert_by_depth(lst, fragment)
            lst.pop()
        else:
            self.overflows += 1
            _merge_overflow(lst, fragment)
        self.counts[pixel] = len(lst)

    def start_storing(self) -> None:
        """End the counting pass of a two-pass store and allocate from the prefix sum."""
        if self.mode != "two-pass" or self.phase != "count":
            raise FragmentContractError("start_storing is only valid after the two-pass counting stage")
        self.prefix = exclusive_prefix(self.counts)
        total = int(self.counts.sum())
        self.buffer = np.zeros(total, dtype=FRAGMENT_DTYPE)
        self.filled = np.zeros(self.pixel_count, dtype=np.int64)
        self.phase = "store"

    def pixel_fragments(self, pixel: int) -> list[Fragment]:
        """Depth-sorted fragments of one pixel (stable for equal depths)."""
        self._check_pixel(pixel)
        if self.mode == "single-pass":
            return list(self.lists.get(pixel, []))
        if self.buffer is None:
            return []
        start = int(self.prefix[pixel])
        chunk = self.buffer[start:start + int(self.filled[pixel])]
        return array_to_fragments(chunk[np.argsort(chunk["z"], kind="stable")])

    def total(self) -> int:
        return int(self.counts.sum())


def _insert_by_depth(lst: list[Fragment], fragment: Fragment) -> None:
    depths = [f.depth for f in lst]
    lst.insert(bisect.bisect_right(depths, fragment.depth), fragment)


def _merge_overflow(lst: list[Fragment], fragment: Fragment) -> None:
    """Insert by depth, then fold the lowest-opacity of the K + 1 onto its front neighbor."""
    _insert_by_depth(lst, fragment)
    if len(lst) == 2:
        lst[:] = [over_fragments(lst[0], lst[1], lst[0].depth)]
        return
    lowest = min(range(len(lst)), key=lambda i: lst[i].alpha)
    if lowest == 0:
        log_once("DEEPFB", "merge-front", "merge overflow: front-most fragment merged onto the one behind it")
        lst[0:2] = [over_fragments(lst[0], lst[1], lst[1].depth)]
    else:
        lst[lowest - 1:lowest + 1] = [over_fragments(lst[lowest - 1], lst[lowest], lst[lowest - 1].depth)]


def write_fragment(store: PixelFragmentStore, pixel: int, fragment: Fragment) -> None:
    store.write(pixel, fragment)


def exclusive_prefix(counts) -> np.ndarray:
    counts = np.asarray(counts, dtype=np.int64)
    out = np.zeros(len(counts), dtype=np.int64)
    if len(counts) > 1:
        np.cumsum(counts[:-1], out=out[1:])
    return out


def finalize_counts(store: PixelFragmentStore) -> tuple[np.ndarray, np.ndarray, int]:
    """(counters, exclusive prefix sums, total); ends the counting pass of a two-pass store."""
    if store.mode == "two-pass" and store.phase == "count":
        store.start_storing()
    counts = store.counts.copy()
    prefix = exclusive_prefix(counts)
    total = int(prefix[-1] + counts[-1]) if len(counts) else 0
    return counts, prefix, total


def build_send_buffer(store: PixelFragmentStore, prefix: np.ndarray) -> np.ndarray:
    """All fragments in pixel order; pixel p occupies [prefix[p], prefix[p] + N_p), depth-sorted."""
    if store.mode == "two-pass":
        if store.buffer is None:
            raise FragmentContractError("build_send_buffer called before the counting pass was finalized")
        short = np.nonzero(store.filled != store.counts)[0]
        if len(short):
            p = int(short[0])
            raise FragmentContractError(f"pixel {p}: counted {store.counts[p]} fragments but stored {store.filled[p]}")
        out = store.buffer.copy()
        for p in np.nonzero(store.counts > 1)[0]:
            lo, hi = int(prefix[p]), int(prefix[p] + store.counts[p])
            chunk = out[lo:hi]
            out[lo:hi] = chunk[np.argsort(chunk["z"], kind="stable")]
        return out
    total = int(store.counts.sum())
    out = np.zeros(total, dtype=FRAGMENT_DTYPE)
    for p, lst in store.lists.items():
        if lst:
            out[int(prefix[p]):int(prefix[p]) + len(lst)] = fragments_to_array(lst)
    return out


def encode_array(arr: np.ndarray, precision: str = "float") -> bytes:
    if precision == "float":
        return np.ascontiguousarray(arr, dtype=FRAGMENT_DTYPE).tobytes()
    if precision == "fixed":
        out = np.zeros(len(arr), dtype=FIXED_DTYPE)
        rgba = np.concatenate([arr["rgb"], arr["a"][:, None]], axis=1).astype(np.float64)
        out["rgba"] = np.clip(np.rint(rgba * 255.0), 0, 255).astype(np.uint8)
        out["z"] = arr["z"]
        return out.tobytes()
    raise ValueError(f"unknown precision {precision!r} (expected one of {PRECISIONS})")


def decode_array(data: bytes, precision: str = "float") -> np.ndarray:
    if precision not in PRECISIONS:
        raise ValueError(f"unknown precision {precision!r} (expected one of {PRECISIONS})")
    size = FRAGMENT_BYTES[precision]
    if len(data) % size:
        raise ValueError(f"truncated fragment stream: {len(data)} bytes is not a multiple of {size}")
    if precision == "float":
        return np.frombuffer(data, dtype=FRAGMENT_DTYPE).copy()
    raw = np.frombuffer(data, dtype=FIXED_DTYPE)
    out = np.zeros(len(raw), dtype=FRAGMENT_DTYPE)
    vals = raw["rgba"].astype(np.float32) / np.float32(255.0)
    out["rgb"] = vals[:, :3]
    out["a"] = vals[:, 3]
    out["z"] = raw["z"]
    return out


def encode_fragments(fragments, precision: str = "float") -> bytes:
    arr = fragments if isinstance(fragments, np.ndarray) else fragments_to_array(fragments)
    return encode_array(arr, precision)


def decode_fragments(data: bytes, precision: str = "float") -> list[Fragment]:
    return array_to_fragments(decode_array(data, precision))


@dataclass(frozen=True)
class CounterBlock:
    bit_width: int
    count: int
    data: bytes

    _HEADER = struct.Struct("<BQ")

    def to_bytes(self) -> bytes:
        return self._HEADER.pack(self.bit_width, self.count) + self.data

    @classmethod
    def from_bytes(cls, payload: bytes, rank: int = -1, step: int = 2) -> "CounterBlock":
        if len(payload) < cls._HEADER.size:
            raise ProtocolError(rank, step, f"counter block of {len(payload)} bytes has no header")
        width, count = cls._HEADER.unpack_from(payload)
        if width not in COUNTER_WIDTHS:
            raise ProtocolError(rank, step, f"invalid counter width {width}")
        data = bytes(payload[cls._HEADER.size:])
        if len(data) != _packed_size(width, count):
            raise ProtocolError(rank, step, f"{count} counters at {width} bits need {_packed_size(width, count)} bytes, got {len(data)}")
        return cls(width, count, data)


def counter_width(max_count: int) -> int:
    for w in COUNTER_WIDTHS:
        if max_count < (1 << w):
            return w
    raise ValueError(f"count {max_count} does not fit in 32 bits")


def _packed_size(width: int, count: int) -> int:
    return 4 * count if width == 32 else -(-count * width // 8)


def encode_counters(counts) -> CounterBlock:
    c = np.asarray(counts, dtype=np.int64).reshape(-1)
    if np.any(c < 0):
        raise ValueError("counters must be >= 0")
    width = counter_width(int(c.max()) if len(c) else 0)
    if width == 32:
        return CounterBlock(32, len(c), c.astype("<u4").tobytes())
    per = 8 // width
    padded = np.zeros(-(-len(c) // per) * per, dtype=np.uint8)
    padded[:len(c)] = c
    lanes = padded.reshape(-1, per)
    packed = np.zeros(len(lanes), dtype=np.uint8)
    for i in range(per):
        packed |= (lanes[:, i] << (width * i)).astype(np.uint8)
    return CounterBlock(width, len(c), packed.tobytes())


def decode_counters(block: CounterBlock) -> np.ndarray:
    if block.bit_width == 32:
        return np.frombuffer(block.data, dtype="<u4").astype(np.int64)
    per = 8 // block.bit_width
    packed = np.frombuffer(block.data, dtype=np.uint8)
    mask = (1 << block.bit_width) - 1
    lanes = np.stack([(packed >> (block.bit_width * i)) & mask for i in range(per)], axis=1)
    return lanes.reshape(-1)[:block.count].astype(np.int64)

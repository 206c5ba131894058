"""Persistence model for byte-addressable persistent memory

One device interface, two backends: a simulated region that records every
store, write-back and fence so crash states can be enumerated, and a real
region backed by a memory-mapped file.
"""

from __future__ import annotations

import enum
import logging
import mmap
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Set, Tuple, Union

import click

log = logging.getLogger(__name__)

CACHE_LINE_SIZE = 64
BLOCK_SIZE = 256
# Torn-write granularity: plain and streaming stores are traced in 8-byte
# aligned fragments.
STORE_UNIT = 8

REPORT_ENV = 'PMEMPRIMS_BACKEND_REPORT'


class Backend(str, enum.Enum):
    SIMULATED = 'simulated'
    REAL = 'real'


class OutOfRangeError(IndexError):
    """Access outside the device region"""


class BackendError(RuntimeError):
    """Operation not supported by the selected backend"""


class DeviceError(OSError):
    """Backing file could not be opened or sized"""


@dataclass(frozen=True)
class DeviceConfig:
    """Geometry and backend of a persistence region

    Cache line and block sizes are fixed by the hardware class being
    modeled; they are fields so the invariants can be checked in one place.
    """

    capacity: int
    backend: Backend = Backend.SIMULATED
    cache_line_size: int = CACHE_LINE_SIZE
    block_size: int = BLOCK_SIZE

    def __post_init__(self):
        object.__setattr__(self, 'backend', Backend(self.backend))

        if self.cache_line_size != CACHE_LINE_SIZE:
            raise ValueError(f"cache_line_size is fixed at {CACHE_LINE_SIZE}, got {self.cache_line_size}")
        if self.block_size != BLOCK_SIZE:
            raise ValueError(f"block_size is fixed at {BLOCK_SIZE}, got {self.block_size}")
        if self.block_size % self.cache_line_size:
            raise ValueError("cache_line_size must divide block_size")
        if self.capacity <= 0 or self.capacity % self.block_size:
            raise ValueError(
                f"capacity must be a positive multiple of {self.block_size} bytes, got {self.capacity}"
            )


class EventKind(str, enum.Enum):
    STORE = 'Store'
    STREAMING_STORE = 'StreamingStore'
    WRITE_BACK = 'WriteBack'
    FENCE = 'Fence'


@dataclass(frozen=True)
class Event:
    """One traced persistence event

    `seq` is the 1-based position in the trace; the state "after event k"
    is crash point k, and crash point 0 is the trace baseline.
    """

    kind: EventKind
    seq: int
    offset: int = 0
    payload: bytes = b''

    @property
    def length(self) -> int:
        if self.kind is EventKind.WRITE_BACK:
            return CACHE_LINE_SIZE
        return len(self.payload)

    @property
    def is_store(self) -> bool:
        return self.kind in (EventKind.STORE, EventKind.STREAMING_STORE)

    def __str__(self) -> str:
        if self.is_store:
            return f"{self.kind.value}({self.offset},{len(self.payload)})"
        if self.kind is EventKind.WRITE_BACK:
            return f"WriteBack({self.offset})"
        return "Fence"


@dataclass
class EventTrace:
    """Ordered events since creation or the last trace reset

    `base` is the region content when the trace started; it is treated as
    fully durable.
    """

    base: bytes
    events: List[Event] = field(default_factory=list)
    cache_line_size: int = CACHE_LINE_SIZE

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def __getitem__(self, index):
        return self.events[index]

    @property
    def capacity(self) -> int:
        return len(self.base)


@dataclass(frozen=True)
class DeviceStats:
    barriers: int = 0
    lines_written_back: int = 0
    distinct_blocks_touched: int = 0
    bytes_stored: int = 0
    repeat_persist_lines: int = 0

    def __sub__(self, other: 'DeviceStats') -> 'DeviceStats':
        return DeviceStats(
            barriers=self.barriers - other.barriers,
            lines_written_back=self.lines_written_back - other.lines_written_back,
            distinct_blocks_touched=self.distinct_blocks_touched - other.distinct_blocks_touched,
            bytes_stored=self.bytes_stored - other.bytes_stored,
            repeat_persist_lines=self.repeat_persist_lines - other.repeat_persist_lines,
        )

    def as_dict(self) -> Dict[str, int]:
        return {
            'barriers': self.barriers,
            'lines_written_back': self.lines_written_back,
            'distinct_blocks_touched': self.distinct_blocks_touched,
            'bytes_stored': self.bytes_stored,
            'repeat_persist_lines': self.repeat_persist_lines,
        }


class _StatsKeeper:
    """Durability counters shared by both backends

    A fence epoch is the interval between two fences. A line counts as
    persisted in an epoch when it receives a write-back or a streaming store
    in it; every epoch after its first adds one repeat.
    """

    def __init__(self, line_size: int, block_size: int):
        self._line_size = line_size
        self._block_size = block_size
        self._lock = threading.Lock()
        self.reset()

    def reset(self) -> None:
        with self._lock:
            self._barriers = 0
            self._lines_written_back = 0
            self._bytes_stored = 0
            self._repeat = 0
            self._blocks: Set[int] = set()
            self._epoch = 0
            self._line_epoch: Dict[int, int] = {}

    def _mark_persisted(self, line: int) -> None:
        last = self._line_epoch.get(line)
        if last is not None and last != self._epoch:
            self._repeat += 1
        self._line_epoch[line] = self._epoch

    def on_store(self, offset: int, length: int, streaming: bool) -> None:
        if length == 0:
            return
        end = offset + length - 1
        with self._lock:
            self._bytes_stored += length
            self._blocks.update(range(offset // self._block_size, end // self._block_size + 1))
            if streaming:
                for line in range(offset // self._line_size, end // self._line_size + 1):
                    self._mark_persisted(line * self._line_size)

    def on_write_back(self, line: int) -> None:
        with self._lock:
            self._lines_written_back += 1
            self._mark_persisted(line)

    def on_fence(self) -> None:
        with self._lock:
            self._barriers += 1
            self._epoch += 1

    def snapshot(self) -> DeviceStats:
        with self._lock:
            return DeviceStats(
                barriers=self._barriers,
                lines_written_back=self._lines_written_back,
                distinct_blocks_touched=len(self._blocks),
                bytes_stored=self._bytes_stored,
                repeat_persist_lines=self._repeat,
            )


def store_fragments(offset: int, data: bytes) -> Iterator[Tuple[int, bytes]]:
    """Split a store into 8-byte aligned fragments in ascending order

    Args:
        offset: Byte offset of the first byte
        data: Bytes to store

    Yields:
        (fragment offset, fragment bytes); no fragment crosses an 8-byte boundary
    """
    pos = 0
    while pos < len(data):
        at = offset + pos
        take = min(STORE_UNIT - at % STORE_UNIT, len(data) - pos)
        yield at, bytes(data[pos:pos + take])
        pos += take


def covering_lines(offset: int, length: int, line_size: int = CACHE_LINE_SIZE) -> range:
    """Start offsets of the cache lines covering [offset, offset + length)"""
    if length <= 0:
        return range(0)
    first = offset - offset % line_size
    return range(first, offset + length, line_size)


class Device:
    """Byte-addressable persistence region

    Stores are visible to `read` immediately; they are durable only once a
    write-back of the covering line (or a streaming store) is followed by a
    fence.
    """

    def __init__(self, config: DeviceConfig):
        self.config = config
        self._stats = _StatsKeeper(config.cache_line_size, config.block_size)

    @property
    def capacity(self) -> int:
        return self.config.capacity

    @property
    def line_size(self) -> int:
        return self.config.cache_line_size

    def _check_range(self, offset: int, length: int) -> None:
        if offset < 0 or length < 0 or offset + length > self.capacity:
            raise OutOfRangeError(
                f"range [{offset}, {offset + length}) outside device of {self.capacity} bytes"
            )

    # Backend hooks

    def _write(self, offset: int, data: bytes, streaming: bool) -> None:
        raise NotImplementedError

    def _write_back(self, line: int) -> None:
        raise NotImplementedError

    def _fence(self) -> None:
        raise NotImplementedError

    def _read(self, offset: int, length: int) -> bytes:
        raise NotImplementedError

    # Operations

    def store(self, offset: int, data: bytes) -> None:
        """Plain store; durable only after write_back of its lines and a fence"""
        self._check_range(offset, len(data))
        if not data:
            return
        self._write(offset, bytes(data), streaming=False)
        self._stats.on_store(offset, len(data), streaming=False)

    def store_streaming(self, offset: int, data: bytes) -> None:
        """Non-temporal store; durable after the next fence without a write-back"""
        self._check_range(offset, len(data))
        if not data:
            return
        self._write(offset, bytes(data), streaming=True)
        self._stats.on_store(offset, len(data), streaming=True)

    def write_back(self, offset: int) -> None:
        """Schedule the cache line containing `offset` for write-back

        Raises:
            OutOfRangeError: If offset is not inside the device
        """
        if offset < 0 or offset >= self.capacity:
            raise OutOfRangeError(f"write_back offset {offset} outside device of {self.capacity} bytes")
        line = offset - offset % self.line_size
        self._write_back(line)
        self._stats.on_write_back(line)

    def fence(self) -> None:
        self._fence()
        self._stats.on_fence()

    def persist(self, offset: int, length: int) -> None:
        """Write back every line covering the range, then fence once"""
        self._check_range(offset, length)
        for line in covering_lines(offset, length, self.line_size):
            self.write_back(line)
        self.fence()

    def read(self, offset: int, length: int) -> bytes:
        self._check_range(offset, length)
        return self._read(offset, length)

    def stats(self) -> DeviceStats:
        return self._stats.snapshot()

    def reset_stats(self) -> None:
        self._stats.reset()

    def trace(self) -> EventTrace:
        raise BackendError(f"{self.config.backend.value} backend does not record an event trace")

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class SimulatedDevice(Device):
    """In-memory region with a full event trace

    Single actor only: crash enumeration needs a total order of events.
    With record_trace=False only the counters are kept (long benchmark runs).
    """

    def __init__(self, config: DeviceConfig, content: Optional[bytes] = None, record_trace: bool = True):
        super().__init__(config)
        self.record_trace = record_trace
        if content is None:
            self._data = bytearray(config.capacity)
        else:
            if len(content) != config.capacity:
                raise ValueError(f"image is {len(content)} bytes, device capacity is {config.capacity}")
            self._data = bytearray(content)
        self._base = bytes(self._data)
        self._events: List[Event] = []

    @classmethod
    def from_image(cls, content: bytes) -> 'SimulatedDevice':
        """Device whose region (and trace baseline) is a given byte image"""
        return cls(DeviceConfig(capacity=len(content)), content)

    def _append(self, kind: EventKind, offset: int = 0, payload: bytes = b'') -> None:
        if not self.record_trace:
            return
        self._events.append(Event(kind, len(self._events) + 1, offset, payload))

    def _write(self, offset: int, data: bytes, streaming: bool) -> None:
        if not self.record_trace:
            self._data[offset:offset + len(data)] = data
            return
        kind = EventKind.STREAMING_STORE if streaming else EventKind.STORE
        for at, fragment in store_fragments(offset, data):
            self._data[at:at + len(fragment)] = fragment
            self._append(kind, at, fragment)

    def _write_back(self, line: int) -> None:
        self._append(EventKind.WRITE_BACK, line)

    def _fence(self) -> None:
        self._append(EventKind.FENCE)

    def _read(self, offset: int, length: int) -> bytes:
        return bytes(self._data[offset:offset + length])

    def trace(self) -> EventTrace:
        if not self.record_trace:
            raise BackendError("trace recording is disabled on this device")
        return EventTrace(base=self._base, events=list(self._events), cache_line_size=self.line_size)

    def reset_trace(self) -> None:
        """Start a new trace whose baseline is the current content"""
        self._base = bytes(self._data)
        self._events = []

    def image(self) -> bytes:
        """Current volatile content of the whole region"""
        return bytes(self._data)


class RealDevice(Device):
    """Region backed by a memory-mapped file

    write_back records the covering page as dirty and fence synchronizes
    the dirty file ranges (msync). Python has no cache-line write-back or
    store-fence primitive, so file-range synchronization is the mapping on
    every platform. Concurrent writers must use disjoint byte ranges.
    """

    durability_mapping = 'write_back=dirty-range tracking, fence=msync(MS_SYNC) of dirty pages'

    def __init__(self, config: DeviceConfig, path: Union[str, Path]):
        super().__init__(config)
        self.path = Path(path)
        self._pending: Set[int] = set()
        self._pending_lock = threading.Lock()

        try:
            created = not self.path.exists()
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fd = os.open(self.path, os.O_RDWR | os.O_CREAT, 0o644)
        except OSError as e:
            raise DeviceError(e.errno, f"Cannot open backing file {self.path}: {e.strerror}") from e

        try:
            size = os.fstat(self._fd).st_size
            if created or size == 0:
                # ftruncate zero-fills the new region
                os.ftruncate(self._fd, config.capacity)
            elif size != config.capacity:
                raise DeviceError(
                    f"Backing file {self.path} is {size} bytes, expected {config.capacity}"
                )
            self._map = mmap.mmap(self._fd, config.capacity, mmap.MAP_SHARED)
        except BaseException:
            os.close(self._fd)
            raise

        log.info("real backend %s (%d bytes): %s", self.path, config.capacity, self.durability_mapping)
        if os.environ.get(REPORT_ENV) == '1':
            click.echo(f"pmemprims: {self.path}: {self.durability_mapping}", err=True)

    def _mark_pages(self, offset: int, length: int) -> None:
        first = offset // mmap.PAGESIZE
        last = (offset + length - 1) // mmap.PAGESIZE
        with self._pending_lock:
            self._pending.update(range(first, last + 1))

    def _write(self, offset: int, data: bytes, streaming: bool) -> None:
        self._map[offset:offset + len(data)] = data
        if streaming:
            self._mark_pages(offset, len(data))

    def _write_back(self, line: int) -> None:
        self._mark_pages(line, self.line_size)

    def _fence(self) -> None:
        with self._pending_lock:
            pages = sorted(self._pending)
            self._pending.clear()

        # msync contiguous page runs
        run_start = None
        previous = None
        for page in pages + [None]:
            if run_start is not None and (page is None or page != previous + 1):
                start = run_start * mmap.PAGESIZE
                end = min((previous + 1) * mmap.PAGESIZE, self.capacity)
                self._map.flush(start, end - start)
                run_start = None
            if page is not None and run_start is None:
                run_start = page
            previous = page

    def _read(self, offset: int, length: int) -> bytes:
        return self._map[offset:offset + length]

    def close(self) -> None:
        if self._map.closed:
            return
        self._map.flush()
        self._map.close()
        os.close(self._fd)


def open_device(config: DeviceConfig, path: Optional[Union[str, Path]] = None) -> Device:
    """Open a persistence region

    Args:
        config: Region geometry and backend
        path: Backing file (real backend only)

    Returns:
        A device whose region reads as zeros when newly created

    Raises:
        ValueError: If the configuration is invalid or a real device has no path
        DeviceError: If the backing file cannot be opened
    """
    if config.backend is Backend.REAL:
        if path is None:
            raise ValueError("real backend requires a backing file path")
        return RealDevice(config, path)
    return SimulatedDevice(config)

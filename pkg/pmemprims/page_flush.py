"""Failure-atomic page propagation

Pages live in fixed slots: a 256-byte header block (pid u64, pvn u64)
followed by the page data. A flush either writes the whole page to a free
slot and then validates its header (copy on write), or records the dirty
cache lines in a per-flusher micro log before patching the slot in place.
Recovery picks the highest pvn per pid and reapplies valid micro logs.

Micro log layout (little-endian): header line {pid u64, pvn u64,
count u32, slot u32}, then an offsets area of u16 line indices, then the
line images. pid 0 marks both free slots and invalid micro logs.
"""

from __future__ import annotations

import bisect
import logging
import struct
import threading
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from pmemprims.pmem_model import BLOCK_SIZE, CACHE_LINE_SIZE, Device, covering_lines

log = logging.getLogger(__name__)

INVALID_PID = 0
SLOT_HEADER_SIZE = BLOCK_SIZE
SLOT_HEADER = struct.Struct('<QQ')           # pid, pvn
MULOG_HEADER = struct.Struct('<QQII')        # pid, pvn, count, slot
PID_FIELD = struct.Struct('<Q')
PVN_FIELD = struct.Struct('<Q')
MULOG_BODY_FIELDS = struct.Struct('<QII')    # pvn, count, slot


class NoFreeSlotError(RuntimeError):
    """Every slot holds the authoritative copy of some page"""


class CorruptionError(RuntimeError):
    """Persistent state that no crash of the protocol can produce"""


class UnknownPageError(KeyError):
    """The pid has never been flushed"""


def _round_up(value: int, multiple: int) -> int:
    return -(-value // multiple) * multiple


@dataclass(frozen=True)
class PageStoreConfig:
    """Geometry and flush policy of a page store

    Attributes:
        slot_count: Physical page slots; needs room for every pid plus one
            in-flight copy per flusher
        page_size: Power-of-two multiple of 256 bytes
        mulog_count: Micro logs, one per flusher
        dirty_threshold_single: Hybrid switches to CoW at this many dirty
            lines when one flusher is configured
        dirty_threshold_multi: Same, with several flushers
        base_offset: Device offset of slot 0 (block aligned)
        flavor: 'streaming' or 'plain' stores
    """

    slot_count: int
    page_size: int = 16384
    mulog_count: int = 1
    dirty_threshold_single: int = 112
    dirty_threshold_multi: int = 32
    base_offset: int = 0
    flavor: str = 'streaming'

    def __post_init__(self):
        size = self.page_size
        if size < BLOCK_SIZE or size % BLOCK_SIZE or size & (size - 1):
            raise ValueError(f"page_size must be a power-of-two multiple of {BLOCK_SIZE}, got {size}")
        if self.slot_count < 1:
            raise ValueError("slot_count must be at least 1")
        if self.mulog_count < 1:
            raise ValueError("mulog_count must be at least 1")
        if self.base_offset < 0 or self.base_offset % BLOCK_SIZE:
            raise ValueError(f"base_offset must be a multiple of {BLOCK_SIZE}")
        if self.flavor not in ('streaming', 'plain'):
            raise ValueError(f"unknown store flavor {self.flavor!r}")

    @property
    def lines_per_page(self) -> int:
        return self.page_size // CACHE_LINE_SIZE

    @property
    def slot_stride(self) -> int:
        return SLOT_HEADER_SIZE + self.page_size

    @property
    def offsets_size(self) -> int:
        return _round_up(2 * self.lines_per_page, CACHE_LINE_SIZE)

    @property
    def mulog_stride(self) -> int:
        return _round_up(CACHE_LINE_SIZE + self.offsets_size + self.page_size, BLOCK_SIZE)

    @property
    def total_size(self) -> int:
        return self.slot_count * self.slot_stride + self.mulog_count * self.mulog_stride

    def slot_offset(self, slot: int) -> int:
        return self.base_offset + slot * self.slot_stride

    def slot_data_offset(self, slot: int) -> int:
        return self.slot_offset(slot) + SLOT_HEADER_SIZE

    def mulog_offset(self, flusher_id: int) -> int:
        return self.base_offset + self.slot_count * self.slot_stride + flusher_id * self.mulog_stride

    def mulog_data_offset(self, flusher_id: int) -> int:
        return self.mulog_offset(flusher_id) + CACHE_LINE_SIZE + self.offsets_size


@dataclass(frozen=True)
class DirtyMask:
    """Bitset over the cache lines of one page"""

    bits: int
    line_count: int = 256

    def __post_init__(self):
        if self.bits < 0 or self.bits >> self.line_count:
            raise ValueError(f"dirty mask has bits outside {self.line_count} lines")

    @classmethod
    def from_lines(cls, lines: Iterable[int], line_count: int = 256) -> 'DirtyMask':
        bits = 0
        for line in lines:
            if not 0 <= line < line_count:
                raise ValueError(f"line {line} outside a {line_count}-line page")
            bits |= 1 << line
        return cls(bits, line_count)

    @classmethod
    def full(cls, line_count: int = 256) -> 'DirtyMask':
        return cls((1 << line_count) - 1, line_count)

    @classmethod
    def diff(cls, old: bytes, new: bytes, line_size: int = CACHE_LINE_SIZE) -> 'DirtyMask':
        """Mask of the lines where two page images differ"""
        if len(old) != len(new) or len(old) % line_size:
            raise ValueError("page images must have equal, line-aligned sizes")
        a = np.frombuffer(old, dtype=np.uint8).reshape(-1, line_size)
        b = np.frombuffer(new, dtype=np.uint8).reshape(-1, line_size)
        changed = np.flatnonzero(np.any(a != b, axis=1))
        return cls.from_lines((int(i) for i in changed), len(a))

    def count(self) -> int:
        return self.bits.bit_count()

    def lines(self) -> List[int]:
        return [i for i in range(self.line_count) if self.bits >> i & 1]

    def __contains__(self, line: int) -> bool:
        return bool(self.bits >> line & 1)


@dataclass(frozen=True)
class PageSlot:
    index: int
    pid: int
    pvn: int


@dataclass(frozen=True)
class MicroLog:
    """A decoded, valid micro log"""

    flusher_id: int
    pid: int
    pvn: int
    slot: int
    offsets: Tuple[int, ...]
    lines: Tuple[bytes, ...] = field(repr=False)


class DirectoryEntry(NamedTuple):
    slot: int
    pvn: int
    image: bytes


class PageStore:
    """Slots, micro logs and the volatile directory over them

    Flushers may run concurrently on distinct pids; each owns one micro log.
    """

    def __init__(self, device: Device, config: PageStoreConfig,
                 slots: Optional[Dict[int, int]] = None,
                 pvns: Optional[Dict[int, int]] = None,
                 free: Optional[Sequence[int]] = None):
        self.device = device
        self.config = config
        self._lock = threading.Lock()
        self._slots: Dict[int, int] = dict(slots or {})
        self._pvns: Dict[int, int] = dict(pvns or {})
        self._free: List[int] = sorted(range(config.slot_count) if free is None else free)

    # Store helpers

    def _store(self, offset: int, data: bytes) -> None:
        if self.config.flavor == 'streaming':
            self.device.store_streaming(offset, data)
        else:
            self.device.store(offset, data)

    def _flush(self, ranges: Iterable[Tuple[int, int]]) -> None:
        """One barrier covering the given (offset, length) ranges"""
        if self.config.flavor == 'plain':
            lines = set()
            for offset, length in ranges:
                lines.update(covering_lines(offset, length, self.device.line_size))
            for line in sorted(lines):
                self.device.write_back(line)
        self.device.fence()

    # Directory

    @property
    def pids(self) -> List[int]:
        with self._lock:
            return sorted(self._slots)

    def slot_of(self, pid: int) -> int:
        with self._lock:
            if pid not in self._slots:
                raise UnknownPageError(pid)
            return self._slots[pid]

    def pvn_of(self, pid: int) -> int:
        with self._lock:
            if pid not in self._pvns:
                raise UnknownPageError(pid)
            return self._pvns[pid]

    @property
    def free_slots(self) -> List[int]:
        with self._lock:
            return list(self._free)

    def _check_image(self, page_image: bytes) -> None:
        if len(page_image) != self.config.page_size:
            raise ValueError(f"page image is {len(page_image)} bytes, page size is {self.config.page_size}")

    # Flushes

    def flush_cow(self, pid: int, page_image: bytes) -> None:
        """Copy the page to a free slot, then validate the slot header

        Two barriers: data, then header (pid stored before pvn on one line).

        Raises:
            ValueError: If pid is 0 or the image has the wrong size
            NoFreeSlotError: If no slot is free
        """
        if pid == INVALID_PID:
            raise ValueError("pid 0 is reserved for free slots")
        self._check_image(page_image)

        with self._lock:
            if not self._free:
                raise NoFreeSlotError(f"no free slot for page {pid} ({self.config.slot_count} slots)")
            slot = self._free.pop(0)
            pvn = self._pvns.get(pid, 0) + 1

        header_at = self.config.slot_offset(slot)
        data_at = self.config.slot_data_offset(slot)

        self._store(data_at, page_image)
        self._flush([(data_at, self.config.page_size)])

        self._store(header_at, PID_FIELD.pack(pid))
        self._store(header_at + PID_FIELD.size, PVN_FIELD.pack(pvn))
        self._flush([(header_at, SLOT_HEADER.size)])

        with self._lock:
            previous = self._slots.get(pid)
            self._slots[pid] = slot
            self._pvns[pid] = pvn
            if previous is not None:
                bisect.insort(self._free, previous)
        log.debug("cow flush pid=%d pvn=%d slot=%d", pid, pvn, slot)

    def flush_cow_dirty(self, pid: int, page_image: bytes, dirty: DirtyMask) -> None:
        """CoW when only the dirty lines are in DRAM

        Clean lines are copied from the durable page before the flush.
        """
        self._check_image(page_image)
        merged = bytearray(self.read_page(pid))
        for line in dirty.lines():
            at = line * CACHE_LINE_SIZE
            merged[at:at + CACHE_LINE_SIZE] = page_image[at:at + CACHE_LINE_SIZE]
        self.flush_cow(pid, bytes(merged))

    def flush_mulog(self, flusher_id: int, pid: int, page_image: bytes, dirty: DirtyMask) -> None:
        """Record dirty lines in the flusher's micro log, then patch the slot

        Four barriers: invalidate the log, write it, validate it, write the
        page in place (lines plus the slot's new pvn).

        Raises:
            UnknownPageError: If the pid has no durable slot
            ValueError: If the mask is empty or the flusher id is out of range
        """
        config = self.config
        if not 0 <= flusher_id < config.mulog_count:
            raise ValueError(f"flusher {flusher_id} out of range (have {config.mulog_count} micro logs)")
        if dirty.line_count != config.lines_per_page:
            raise ValueError(f"dirty mask covers {dirty.line_count} lines, page has {config.lines_per_page}")
        lines = dirty.lines()
        if not lines:
            raise ValueError("dirty mask is empty")
        self._check_image(page_image)

        with self._lock:
            if pid not in self._slots:
                raise UnknownPageError(pid)
            slot = self._slots[pid]
            pvn = self._pvns[pid] + 1

        mulog_at = config.mulog_offset(flusher_id)
        offsets_at = mulog_at + CACHE_LINE_SIZE
        mdata_at = config.mulog_data_offset(flusher_id)
        images = [page_image[line * CACHE_LINE_SIZE:(line + 1) * CACHE_LINE_SIZE] for line in lines]

        # 1. invalidate
        self._store(mulog_at, PID_FIELD.pack(INVALID_PID))
        self._flush([(mulog_at, PID_FIELD.size)])

        # 2. write offsets, line images and pvn
        self._store(offsets_at, struct.pack(f'<{len(lines)}H', *lines))
        for i, content in enumerate(images):
            self._store(mdata_at + i * CACHE_LINE_SIZE, content)
        self._store(mulog_at + PID_FIELD.size, MULOG_BODY_FIELDS.pack(pvn, len(lines), slot))
        self._flush([
            (mulog_at, MULOG_HEADER.size),
            (offsets_at, 2 * len(lines)),
            (mdata_at, len(lines) * CACHE_LINE_SIZE),
        ])

        # 3. validate
        self._store(mulog_at, PID_FIELD.pack(pid))
        self._flush([(mulog_at, PID_FIELD.size)])

        # 4. patch the page in place
        data_at = config.slot_data_offset(slot)
        ranges = []
        for line, content in zip(lines, images):
            self._store(data_at + line * CACHE_LINE_SIZE, content)
            ranges.append((data_at + line * CACHE_LINE_SIZE, CACHE_LINE_SIZE))
        header_at = config.slot_offset(slot)
        self._store(header_at + PID_FIELD.size, PVN_FIELD.pack(pvn))
        ranges.append((header_at, SLOT_HEADER.size))
        self._flush(ranges)

        with self._lock:
            self._pvns[pid] = pvn
        log.debug("mulog flush pid=%d pvn=%d lines=%d flusher=%d", pid, pvn, len(lines), flusher_id)

    def hybrid_threshold(self) -> int:
        if self.config.mulog_count == 1:
            return self.config.dirty_threshold_single
        return self.config.dirty_threshold_multi

    def flush_hybrid(self, flusher_id: int, pid: int, page_image: bytes, dirty: DirtyMask) -> str:
        """Micro log below the dirty-line threshold, CoW otherwise

        A pid without a durable slot always takes the CoW path.

        Returns:
            'mulog' or 'cow', the path taken
        """
        with self._lock:
            known = pid in self._slots
        if known and dirty.count() < self.hybrid_threshold():
            self.flush_mulog(flusher_id, pid, page_image, dirty)
            return 'mulog'
        self.flush_cow(pid, page_image)
        return 'cow'

    def read_page(self, pid: int) -> bytes:
        """Authoritative image of a page"""
        slot = self.slot_of(pid)
        return self.device.read(self.config.slot_data_offset(slot), self.config.page_size)

    def directory(self) -> Dict[int, DirectoryEntry]:
        with self._lock:
            placement = {pid: (slot, self._pvns[pid]) for pid, slot in self._slots.items()}
        return {
            pid: DirectoryEntry(slot, pvn, self.device.read(self.config.slot_data_offset(slot), self.config.page_size))
            for pid, (slot, pvn) in sorted(placement.items())
        }


def _check_fits(device: Device, config: PageStoreConfig) -> None:
    end = config.base_offset + config.total_size
    if end > device.capacity:
        raise ValueError(f"page store needs {end} bytes, device has {device.capacity}")


def store_create(device: Device, config: PageStoreConfig) -> PageStore:
    """Page store over a fresh (zeroed) region"""
    _check_fits(device, config)
    return PageStore(device, config)


def read_slots(device: Device, config: PageStoreConfig) -> List[PageSlot]:
    slots = []
    for index in range(config.slot_count):
        pid, pvn = SLOT_HEADER.unpack(device.read(config.slot_offset(index), SLOT_HEADER.size))
        slots.append(PageSlot(index, pid, pvn))
    return slots


def read_mulog(device: Device, config: PageStoreConfig, flusher_id: int) -> Optional[MicroLog]:
    """Decode a flusher's micro log; None when it is invalid

    Raises:
        CorruptionError: If a valid log is structurally impossible
    """
    at = config.mulog_offset(flusher_id)
    pid, pvn, count, slot = MULOG_HEADER.unpack(device.read(at, MULOG_HEADER.size))
    if pid == INVALID_PID:
        return None

    lines_per_page = config.lines_per_page
    if not 1 <= count <= lines_per_page:
        raise CorruptionError(f"micro log {flusher_id}: count {count} outside 1..{lines_per_page}")
    if slot >= config.slot_count:
        raise CorruptionError(f"micro log {flusher_id}: target slot {slot} out of range")

    offsets = struct.unpack(f'<{count}H', device.read(at + CACHE_LINE_SIZE, 2 * count))
    if any(b <= a for a, b in zip(offsets, offsets[1:])) or offsets[-1] >= lines_per_page:
        raise CorruptionError(f"micro log {flusher_id}: line offsets not strictly increasing within the page")

    data_at = config.mulog_data_offset(flusher_id)
    lines = tuple(device.read(data_at + i * CACHE_LINE_SIZE, CACHE_LINE_SIZE) for i in range(count))
    return MicroLog(flusher_id, pid, pvn, slot, tuple(offsets), lines)


def store_recover(device: Device, config: PageStoreConfig) -> Tuple[PageStore, Dict[int, DirectoryEntry]]:
    """Rebuild the directory from slot headers and valid micro logs

    Args:
        device: Device holding a previously used store
        config: Geometry it was created with

    Returns:
        (store, directory) where directory maps pid -> (slot, pvn, image)

    Raises:
        CorruptionError: If a valid micro log is structurally impossible
    """
    _check_fits(device, config)

    best: Dict[int, PageSlot] = {}
    for slot in read_slots(device, config):
        # pvn 0 marks a header whose pid landed before any pvn was written
        if slot.pid == INVALID_PID or slot.pvn == 0:
            continue
        current = best.get(slot.pid)
        if current is None or slot.pvn > current.pvn:
            best[slot.pid] = slot
        elif slot.pvn == current.pvn:
            log.warning("page %d: slots %d and %d both claim pvn %d; keeping slot %d",
                        slot.pid, current.index, slot.index, slot.pvn, current.index)

    mulogs = [m for m in (read_mulog(device, config, f) for f in range(config.mulog_count)) if m is not None]
    applied = []
    for mulog in sorted(mulogs, key=lambda m: m.pvn):
        target = best.get(mulog.pid)
        if target is None or target.index != mulog.slot:
            log.debug("micro log %d targets a superseded slot; skipped", mulog.flusher_id)
            continue
        # equal pvn: the in-place patch may be partially durable, reapply it
        if target.pvn not in (mulog.pvn - 1, mulog.pvn):
            continue

        data_at = config.slot_data_offset(target.index)
        for line, content in zip(mulog.offsets, mulog.lines):
            device.store(data_at + line * CACHE_LINE_SIZE, content)
            device.write_back(data_at + line * CACHE_LINE_SIZE)
        if target.pvn != mulog.pvn:
            header_at = config.slot_offset(target.index)
            device.store(header_at + PID_FIELD.size, PVN_FIELD.pack(mulog.pvn))
            device.write_back(header_at)
        best[mulog.pid] = PageSlot(target.index, target.pid, mulog.pvn)
        applied.append(mulog.flusher_id)
    if applied:
        device.fence()
        log.info("reapplied micro logs of flushers %s", applied)

    authoritative = {slot.index for slot in best.values()}
    free = [i for i in range(config.slot_count) if i not in authoritative]
    store = PageStore(
        device, config,
        slots={pid: slot.index for pid, slot in best.items()},
        pvns={pid: slot.pvn for pid, slot in best.items()},
        free=free,
    )
    directory = store.directory()
    log.info("recovered %d pages, %d free slots", len(directory), len(free))
    return store, directory

"""Failure-atomic append-only logs

Four writers over a device region, each with a bit-exact layout and a
recovery reader that returns the longest valid prefix:

- Classic: header + payload, barrier, footer (copy of the lsn), barrier.
- Header: entry, barrier, size field in the region header, barrier.
- HeaderDance: like Header, but k size fields on separate cache lines are
  written round-robin; the valid size is their maximum.
- Zero: header carries a popcount of the entry; one barrier. Relies on the
  region being zero-initialized. Entries start on 8-byte boundaries even when
  unaligned, so the pop_cnt field is one atomic store.

All integers are little-endian. lsn 0 never names an entry.
"""

from __future__ import annotations

import enum
import logging
import struct
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Type

import numpy as np

from pmemprims.pmem_model import CACHE_LINE_SIZE, STORE_UNIT, Device

log = logging.getLogger(__name__)

ENTRY_HEADER = struct.Struct('<QII')      # lsn, payload_len, pad
ZERO_HEADER = struct.Struct('<QIIQ')      # lsn, payload_len, pad, pop_cnt
FOOTER = struct.Struct('<Q')              # lsn
SIZE_FIELD = struct.Struct('<Q')

POP_CNT_OFFSET = 16
FLAVORS = ('streaming', 'plain')


class Algorithm(str, enum.Enum):
    CLASSIC = 'classic'
    HEADER = 'header'
    HEADER_DANCE = 'header-dance'
    ZERO = 'zero'


class LogFullError(RuntimeError):
    """The entry does not fit in the remaining region"""


def round_up(value: int, multiple: int = CACHE_LINE_SIZE) -> int:
    return -(-value // multiple) * multiple


@dataclass(frozen=True)
class LogOptions:
    """Algorithm and placement of one log

    Attributes:
        algo: Logging algorithm
        region: (offset, length) within the device, both cache-line aligned
        aligned: Pad entries so no two entries share a cache line
        dance_k: Number of dancing size fields (HeaderDance only)
        flavor: 'streaming' stores, or 'plain' stores followed by write-backs
    """

    algo: Algorithm
    region: Tuple[int, int]
    aligned: bool = False
    dance_k: int = 64
    flavor: str = 'streaming'

    def __post_init__(self):
        object.__setattr__(self, 'algo', Algorithm(self.algo))
        offset, length = self.region
        if offset < 0 or length <= 0 or offset % CACHE_LINE_SIZE or length % CACHE_LINE_SIZE:
            raise ValueError(f"log region {self.region} must be cache-line aligned and non-empty")
        if self.flavor not in FLAVORS:
            raise ValueError(f"unknown store flavor {self.flavor!r}")
        if self.algo is Algorithm.HEADER_DANCE:
            if self.dance_k < 1:
                raise ValueError("dance_k must be at least 1")
            if self.dance_k * CACHE_LINE_SIZE >= length:
                raise ValueError(f"{self.dance_k} size-field lines do not fit in a {length}-byte region")
        if self.algo is Algorithm.HEADER and length <= CACHE_LINE_SIZE:
            raise ValueError(f"a {length}-byte region leaves no room after the size field")

    @property
    def start(self) -> int:
        return self.region[0]

    @property
    def end(self) -> int:
        return self.region[0] + self.region[1]


@dataclass(frozen=True)
class LogEntry:
    lsn: int
    payload: bytes


def popcount_entry(header_bytes: bytes, payload: bytes) -> int:
    """Set bits over a Zero entry header (pop_cnt field taken as zero) and payload

    Args:
        header_bytes: The 24-byte entry header; its pop_cnt field is ignored
        payload: Entry payload

    Returns:
        Population count
    """
    header = bytearray(header_bytes[:ZERO_HEADER.size])
    header[POP_CNT_OFFSET:POP_CNT_OFFSET + 8] = bytes(8)
    bits = np.unpackbits(np.frombuffer(bytes(header) + bytes(payload), dtype=np.uint8))
    return int(bits.sum())


class Log:
    """Single-writer log over a device region

    Create with `log_create`; concurrent appends need external
    serialization.
    """

    algorithm: Algorithm
    # Scan-validated layouts need the area after the valid prefix zeroed.
    scrubs_tail = False

    def __init__(self, device: Device, options: LogOptions, tail: int, next_lsn: int):
        self.device = device
        self.options = options
        self.tail = tail
        self.next_lsn = next_lsn

    # Layout

    @classmethod
    def entries_start(cls, options: LogOptions) -> int:
        return options.start

    @classmethod
    def entry_span(cls, options: LogOptions, payload_len: int) -> int:
        raise NotImplementedError

    # Write path

    def _store(self, offset: int, data: bytes) -> None:
        if self.options.flavor == 'streaming':
            self.device.store_streaming(offset, data)
        else:
            self.device.store(offset, data)

    def _flush(self, offset: int, length: int) -> None:
        # streaming stores only need the fence
        if self.options.flavor == 'streaming':
            self.device.fence()
        else:
            self.device.persist(offset, length)

    def _reserve(self, payload: bytes) -> int:
        span = self.entry_span(self.options, len(payload))
        capacity = self.options.end - self.entries_start(self.options)
        if span > capacity:
            raise ValueError(f"a {len(payload)}-byte payload needs {span} bytes; the region holds {capacity}")
        if self.tail + span > self.options.end:
            raise LogFullError(
                f"log full: entry of {span} bytes at offset {self.tail}, region ends at {self.options.end}"
            )
        return span

    def append(self, payload: bytes) -> int:
        """Append one entry; durable on return

        Returns:
            The lsn assigned to the entry

        Raises:
            LogFullError: If the entry does not fit in the remaining region
            ValueError: If the entry cannot fit even in an empty region
        """
        raise NotImplementedError

    # Recovery

    @classmethod
    def scan(cls, device: Device, options: LogOptions) -> Tuple[List[LogEntry], int]:
        """Valid prefix of entries and the offset where the next entry goes"""
        raise NotImplementedError

    @classmethod
    def recover(cls, device: Device, options: LogOptions) -> Tuple[List[LogEntry], int]:
        entries, _ = cls.scan(device, options)
        return entries, (entries[-1].lsn + 1 if entries else 1)


class ClassicLog(Log):
    algorithm = Algorithm.CLASSIC
    scrubs_tail = True

    @classmethod
    def footer_offset(cls, options: LogOptions, payload_len: int) -> int:
        body = ENTRY_HEADER.size + payload_len
        return round_up(body) if options.aligned else body

    @classmethod
    def entry_span(cls, options: LogOptions, payload_len: int) -> int:
        footer = cls.footer_offset(options, payload_len)
        # aligned: the footer owns its line
        return footer + CACHE_LINE_SIZE if options.aligned else footer + FOOTER.size

    def append(self, payload: bytes) -> int:
        span = self._reserve(payload)
        lsn = self.next_lsn
        start = self.tail
        body = ENTRY_HEADER.pack(lsn, len(payload), 0) + bytes(payload)

        self._store(start, body)
        self._flush(start, len(body))

        footer_at = start + self.footer_offset(self.options, len(payload))
        self._store(footer_at, FOOTER.pack(lsn))
        self._flush(footer_at, FOOTER.size)

        self.tail = start + span
        self.next_lsn = lsn + 1
        log.debug("classic append lsn=%d at %d (%d bytes)", lsn, start, span)
        return lsn

    @classmethod
    def footer_valid(cls, lsn: int, footer_lsn: int) -> bool:
        return lsn >= 1 and footer_lsn == lsn

    @classmethod
    def scan(cls, device: Device, options: LogOptions) -> Tuple[List[LogEntry], int]:
        entries: List[LogEntry] = []
        pos = cls.entries_start(options)
        expected = 1
        while pos + ENTRY_HEADER.size <= options.end:
            lsn, payload_len, _ = ENTRY_HEADER.unpack(device.read(pos, ENTRY_HEADER.size))
            if lsn != expected:
                break
            span = cls.entry_span(options, payload_len)
            if pos + span > options.end:
                break
            footer_at = pos + cls.footer_offset(options, payload_len)
            (footer_lsn,) = FOOTER.unpack(device.read(footer_at, FOOTER.size))
            if not cls.footer_valid(lsn, footer_lsn):
                break
            entries.append(LogEntry(lsn, device.read(pos + ENTRY_HEADER.size, payload_len)))
            pos += span
            expected += 1
        return entries, pos


class HeaderLog(Log):
    """Size-field log: entries are valid iff they lie below the persisted size"""

    algorithm = Algorithm.HEADER

    @classmethod
    def size_field_count(cls, options: LogOptions) -> int:
        return 1

    @classmethod
    def entries_start(cls, options: LogOptions) -> int:
        return options.start + cls.size_field_count(options) * CACHE_LINE_SIZE

    @classmethod
    def entry_span(cls, options: LogOptions, payload_len: int) -> int:
        body = ENTRY_HEADER.size + payload_len
        return round_up(body) if options.aligned else body

    def size_field_offset(self, lsn: int) -> int:
        return self.options.start

    def append(self, payload: bytes) -> int:
        span = self._reserve(payload)
        lsn = self.next_lsn
        start = self.tail
        body = ENTRY_HEADER.pack(lsn, len(payload), 0) + bytes(payload)

        self._store(start, body)
        self._flush(start, len(body))

        size = start + span - self.entries_start(self.options)
        field_at = self.size_field_offset(lsn)
        self._store(field_at, SIZE_FIELD.pack(size))
        self._flush(field_at, SIZE_FIELD.size)

        self.tail = start + span
        self.next_lsn = lsn + 1
        log.debug("%s append lsn=%d size=%d", self.algorithm.value, lsn, size)
        return lsn

    @classmethod
    def read_size(cls, device: Device, options: LogOptions) -> int:
        (size,) = SIZE_FIELD.unpack(device.read(options.start, SIZE_FIELD.size))
        return size

    @classmethod
    def scan(cls, device: Device, options: LogOptions) -> Tuple[List[LogEntry], int]:
        start = cls.entries_start(options)
        size = cls.read_size(device, options)
        limit = start + size
        if limit > options.end:
            log.warning("size field %d overruns the log region; clamping", size)
            limit = options.end

        entries: List[LogEntry] = []
        pos = start
        expected = 1
        while pos + ENTRY_HEADER.size <= limit:
            lsn, payload_len, _ = ENTRY_HEADER.unpack(device.read(pos, ENTRY_HEADER.size))
            span = cls.entry_span(options, payload_len)
            if lsn != expected or pos + span > limit:
                log.warning("entry at %d does not match the recovered size; stopping", pos)
                break
            entries.append(LogEntry(lsn, device.read(pos + ENTRY_HEADER.size, payload_len)))
            pos += span
            expected += 1
        return entries, pos


class DancingHeaderLog(HeaderLog):
    """Header log with k rotating size fields, one per cache line"""

    algorithm = Algorithm.HEADER_DANCE

    @classmethod
    def size_field_count(cls, options: LogOptions) -> int:
        return options.dance_k

    def size_field_offset(self, lsn: int) -> int:
        return self.options.start + ((lsn - 1) % self.options.dance_k) * CACHE_LINE_SIZE

    @classmethod
    def read_size(cls, device: Device, options: LogOptions) -> int:
        # sizes only grow, so the largest field is the latest
        return max(
            SIZE_FIELD.unpack(device.read(options.start + i * CACHE_LINE_SIZE, SIZE_FIELD.size))[0]
            for i in range(options.dance_k)
        )


class ZeroLog(Log):
    algorithm = Algorithm.ZERO
    scrubs_tail = True

    @classmethod
    def entry_span(cls, options: LogOptions, payload_len: int) -> int:
        body = ZERO_HEADER.size + payload_len
        return round_up(body) if options.aligned else round_up(body, STORE_UNIT)

    def append(self, payload: bytes) -> int:
        span = self._reserve(payload)
        lsn = self.next_lsn
        start = self.tail

        header = ZERO_HEADER.pack(lsn, len(payload), 0, 0)
        pop_cnt = popcount_entry(header, payload)
        entry = ZERO_HEADER.pack(lsn, len(payload), 0, pop_cnt) + bytes(payload)

        self._store(start, entry)
        self._flush(start, len(entry))

        self.tail = start + span
        self.next_lsn = lsn + 1
        log.debug("zero append lsn=%d pop_cnt=%d at %d", lsn, pop_cnt, start)
        return lsn

    @classmethod
    def entry_valid(cls, header: bytes, payload: bytes, pop_cnt: int) -> bool:
        return pop_cnt != 0 and popcount_entry(header, payload) == pop_cnt

    @classmethod
    def scan(cls, device: Device, options: LogOptions) -> Tuple[List[LogEntry], int]:
        entries: List[LogEntry] = []
        pos = cls.entries_start(options)
        expected = 1
        while pos + ZERO_HEADER.size <= options.end:
            header = device.read(pos, ZERO_HEADER.size)
            lsn, payload_len, _, pop_cnt = ZERO_HEADER.unpack(header)
            if lsn != expected:
                break
            span = cls.entry_span(options, payload_len)
            if pos + span > options.end:
                break
            payload = device.read(pos + ZERO_HEADER.size, payload_len)
            if not cls.entry_valid(header, payload, pop_cnt):
                break
            entries.append(LogEntry(lsn, payload))
            pos += span
            expected += 1
        return entries, pos


LOG_CLASSES: Dict[Algorithm, Type[Log]] = {
    Algorithm.CLASSIC: ClassicLog,
    Algorithm.HEADER: HeaderLog,
    Algorithm.HEADER_DANCE: DancingHeaderLog,
    Algorithm.ZERO: ZeroLog,
}


def log_class(algo) -> Type[Log]:
    try:
        return LOG_CLASSES[Algorithm(algo)]
    except ValueError:
        names = ', '.join(a.value for a in Algorithm)
        raise ValueError(f"unknown log algorithm {algo!r} (expected one of: {names})") from None


def _check_region(device: Device, options: LogOptions) -> None:
    if options.end > device.capacity:
        raise ValueError(f"log region {options.region} exceeds device of {device.capacity} bytes")


def _scrub_tail(device: Device, tail: int, end: int) -> None:
    """Zero stale bytes left after the valid prefix by an interrupted append"""
    if tail >= end:
        return
    dirty = np.flatnonzero(np.frombuffer(device.read(tail, end - tail), dtype=np.uint8))
    if dirty.size == 0:
        return
    first = tail + int(dirty[0])
    last = tail + int(dirty[-1]) + 1
    log.warning("zeroing %d bytes of torn log data at offset %d", last - first, first)
    device.store(first, bytes(last - first))
    device.persist(first, last - first)


def log_create(device: Device, options: LogOptions, cls: Optional[Type[Log]] = None) -> Log:
    """Open a log over a fresh or previously used region

    Args:
        device: Device holding the region
        options: Algorithm and placement
        cls: Writer class overriding the algorithm's default

    Returns:
        Writer positioned after the recovered valid prefix (lsn 1 on a fresh region)

    Raises:
        ValueError: If the region does not fit the device
    """
    _check_region(device, options)
    cls = cls or log_class(options.algo)
    entries, tail = cls.scan(device, options)
    if cls.scrubs_tail:
        _scrub_tail(device, tail, options.end)
    next_lsn = entries[-1].lsn + 1 if entries else 1
    if entries:
        log.info("reopened %s log with %d entries", options.algo.value, len(entries))
    return cls(device, options, tail, next_lsn)


def log_recover(device: Device, options: LogOptions) -> Tuple[List[LogEntry], int]:
    """Entries of the maximal valid prefix and the next lsn

    Read-only; corruption after the valid prefix is ignored.
    """
    _check_region(device, options)
    return log_class(options.algo).recover(device, options)

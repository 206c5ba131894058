"""Benchmark harness

Sweeps one parameter per experiment and yields one BenchResult per
(algo, threads, param) point:

    bandwidth  adjacent lines per access (real backend)
    latency    access pattern: read (pointer chase), same, sequential, random
    log        payload bytes per entry
    flush      dirty cache lines per page flush
    ycsb       payload bytes per transaction's log entry

Real-backend rows carry timings. Simulated rows carry only structural
counters (fences, bytes stored, repeated line persists), so their CSV is
byte-identical for the same spec and seed.
"""

import csv
import logging
import struct
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterator, List, Optional, Sequence, TextIO, Tuple, Union

import numpy as np

from pmemprims.page_flush import DirtyMask, PageStoreConfig, store_create
from pmemprims.pmem_model import (
    BLOCK_SIZE, CACHE_LINE_SIZE, Backend, Device, DeviceConfig, DeviceStats, RealDevice, SimulatedDevice,
)
from pmemprims.wal import Algorithm, LogOptions, log_class, log_create, round_up

log = logging.getLogger(__name__)

EXPERIMENTS = ('bandwidth', 'latency', 'log', 'flush', 'ycsb')
CSV_COLUMNS = [
    'experiment', 'algo', 'threads', 'param', 'ops_per_s', 'bytes_per_s',
    'ns_mean', 'ns_p50', 'ns_p99', 'fences_per_op', 'bytes_per_op', 'repeat_lines',
]

BANDWIDTH_FLAVORS = ('plain', 'plain+writeback', 'streaming', 'load')
WRITE_FLAVORS = ('plain', 'plain+writeback', 'streaming')
LATENCY_PATTERNS = ('read', 'same', 'sequential', 'random')
FLUSH_ALGOS = ('cow', 'cow-dirty', 'mulog', 'hybrid')
LOG_ALGOS = tuple(a.value for a in Algorithm)
YCSB_ALGOS = ('zero', 'header', 'classic')

DEFAULT_ADJACENT_LINES = tuple(range(1, 13))
DEFAULT_ENTRY_SIZES = (56, 64, 128, 192, 256, 320, 384, 448, 512)
DEFAULT_DIRTY_LINES = (1, 2, 4, 8, 16, 32, 64, 112, 128, 192, 256)
YCSB_KEY = struct.Struct('<Q')
POINTER = struct.Struct('<Q')

MAX_THREADS = 31
MAX_ADJACENT_LINES = 12
ENTRY_SIZE_RANGE = (56, 512)

Param = Union[int, str]


@dataclass(frozen=True)
class BenchSpec:
    """One experiment and its sweep

    Empty sweep tuples select the experiment's default sweep.

    Attributes:
        experiment: One of EXPERIMENTS
        backend: Real timings or simulated structural counters
        threads: Worker counts to sweep
        adjacent_lines: Lines per random access (bandwidth)
        flavor: Store flavor; 'load' measures read bandwidth
        pattern: Latency access patterns
        algo: Log or flush algorithms to compare
        entry_size: Payload bytes per log entry (log, ycsb)
        aligned: Cache-line aligned log entries
        dance_k: Size fields of the header-dance log
        dirty: Dirty lines per flushed page
        ops: Operations per point, split across workers
        seed: Seed of every random choice
        working_set: Bytes touched by bandwidth and latency runs
        page_size: Page size for flush runs
        pages: Pages owned by each flush worker
        records: Rows of the ycsb table
        path: Directory for real-backend files (a temporary one if None)
    """

    experiment: str
    backend: Backend = Backend.SIMULATED
    threads: Tuple[int, ...] = (1,)
    adjacent_lines: Tuple[int, ...] = ()
    flavor: str = 'streaming'
    pattern: Tuple[str, ...] = ()
    algo: Tuple[str, ...] = ()
    entry_size: Tuple[int, ...] = ()
    aligned: bool = False
    dance_k: int = 64
    dirty: Tuple[int, ...] = ()
    ops: int = 100000
    seed: int = 0
    working_set: int = 10 * 2 ** 30
    page_size: int = 16384
    pages: int = 8
    records: int = 1000
    dirty_threshold_single: int = 112
    dirty_threshold_multi: int = 32
    path: Optional[Path] = None

    def __post_init__(self):
        object.__setattr__(self, 'backend', Backend(self.backend))

    @property
    def real(self) -> bool:
        return self.backend is Backend.REAL

    @property
    def store_flavor(self) -> str:
        """Log/page-store flavor: streaming, or plain stores with write-backs"""
        return 'streaming' if self.flavor == 'streaming' else 'plain'

    def algos(self) -> Tuple[str, ...]:
        if self.experiment in ('bandwidth', 'latency'):
            return (self.flavor,)
        if self.algo:
            return self.algo
        return {'log': LOG_ALGOS, 'flush': FLUSH_ALGOS, 'ycsb': YCSB_ALGOS}[self.experiment]

    def params(self) -> Tuple[Param, ...]:
        if self.experiment == 'bandwidth':
            return self.adjacent_lines or DEFAULT_ADJACENT_LINES
        if self.experiment == 'latency':
            return self.pattern or LATENCY_PATTERNS
        if self.experiment == 'flush':
            return self.dirty or DEFAULT_DIRTY_LINES
        if self.experiment == 'ycsb':
            return self.entry_size or (DEFAULT_ENTRY_SIZES[0],)
        return self.entry_size or DEFAULT_ENTRY_SIZES

    def points(self) -> List[Tuple[str, int, Param]]:
        """Every (algo, threads, param) point, in output order"""
        return [(algo, threads, param)
                for algo in self.algos() for threads in self.threads for param in self.params()]

    def validate(self) -> None:
        """Raises ValueError naming the first invalid field"""
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r} (expected one of: {', '.join(EXPERIMENTS)})")
        if self.experiment in ('bandwidth', 'latency') and not self.real:
            raise ValueError(f"{self.experiment} measures time and needs the real backend")
        if self.ops < 0:
            raise ValueError("ops must not be negative")
        if not self.threads or any(not 1 <= t <= MAX_THREADS for t in self.threads):
            raise ValueError(f"threads must lie in 1..{MAX_THREADS}")
        if self.experiment == 'ycsb' and self.threads != (1,):
            raise ValueError("ycsb runs single-threaded")
        if any(not 1 <= k <= MAX_ADJACENT_LINES for k in self.adjacent_lines):
            raise ValueError(f"adjacent lines must lie in 1..{MAX_ADJACENT_LINES}")
        flavors = BANDWIDTH_FLAVORS if self.experiment == 'bandwidth' else WRITE_FLAVORS
        if self.flavor not in flavors:
            raise ValueError(f"flavor must be one of: {', '.join(flavors)}")
        if any(p not in LATENCY_PATTERNS for p in self.pattern):
            raise ValueError(f"pattern must be one of: {', '.join(LATENCY_PATTERNS)}")
        low, high = ENTRY_SIZE_RANGE
        if any(not low <= size <= high for size in self.entry_size):
            raise ValueError(f"entry size must lie in {low}..{high}")
        if self.dance_k < 1:
            raise ValueError("dance_k must be at least 1")
        if self.pages < 1 or self.records < 1:
            raise ValueError("pages and records must be at least 1")

        if self.experiment in ('log', 'ycsb'):
            for algo in self.algos():
                log_class(algo)
        if self.experiment == 'flush':
            unknown = [a for a in self.algos() if a not in FLUSH_ALGOS]
            if unknown:
                raise ValueError(f"unknown flush algorithm {unknown[0]!r} (expected one of: {', '.join(FLUSH_ALGOS)})")
            lines = PageStoreConfig(slot_count=1, page_size=self.page_size).lines_per_page
            if any(not 1 <= d <= lines for d in self.params()):
                raise ValueError(f"dirty lines must lie in 1..{lines}")
        if self.experiment in ('bandwidth', 'latency'):
            region = self.working_set // max(self.threads)
            if region < MAX_ADJACENT_LINES * CACHE_LINE_SIZE + BLOCK_SIZE:
                raise ValueError(f"working set of {self.working_set} bytes is too small for {max(self.threads)} threads")


@dataclass
class BenchResult:
    experiment: str
    algo: str
    threads: int
    param: Param
    ops: int
    bytes_moved: int
    elapsed_ns: Optional[int] = None
    latencies_ns: Optional[np.ndarray] = field(default=None, repr=False)
    stats: Optional[DeviceStats] = None

    @property
    def ops_per_s(self) -> Optional[float]:
        if not self.elapsed_ns:
            return None
        return self.ops * 1e9 / self.elapsed_ns

    @property
    def bytes_per_s(self) -> Optional[float]:
        if not self.elapsed_ns:
            return None
        return self.bytes_moved * 1e9 / self.elapsed_ns

    def latency(self, percentile: Optional[float] = None) -> Optional[float]:
        """Mean latency, or a percentile of it, in nanoseconds"""
        if self.latencies_ns is None or not len(self.latencies_ns):
            return None
        if percentile is None:
            return float(np.mean(self.latencies_ns))
        return float(np.percentile(self.latencies_ns, percentile))

    @property
    def fences_per_op(self) -> Optional[float]:
        if self.stats is None or not self.ops:
            return None
        return self.stats.barriers / self.ops

    @property
    def bytes_per_op(self) -> Optional[float]:
        if self.stats is None or not self.ops:
            return None
        return self.stats.bytes_stored / self.ops

    def row(self) -> Dict[str, str]:
        repeat = None if self.stats is None else self.stats.repeat_persist_lines
        values = {
            'experiment': self.experiment,
            'algo': self.algo,
            'threads': self.threads,
            'param': self.param,
            'ops_per_s': self.ops_per_s,
            'bytes_per_s': self.bytes_per_s,
            'ns_mean': self.latency(),
            'ns_p50': self.latency(50),
            'ns_p99': self.latency(99),
            'fences_per_op': self.fences_per_op,
            'bytes_per_op': self.bytes_per_op,
            'repeat_lines': repeat,
        }
        return {key: _format(value) for key, value in values.items()}


def _format(value) -> str:
    if value is None:
        return ''
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


# Devices and workers

@contextmanager
def bench_device(spec: BenchSpec, capacity: int) -> Iterator[Device]:
    """Device for one sweep point; real backing files are removed afterwards"""
    capacity = max(BLOCK_SIZE, round_up(capacity, BLOCK_SIZE))
    if not spec.real:
        yield SimulatedDevice(DeviceConfig(capacity=capacity), record_trace=False)
        return

    if spec.path is not None:
        Path(spec.path).mkdir(parents=True, exist_ok=True)
    with tempfile.TemporaryDirectory(prefix='pmemprims-', dir=spec.path) as directory:
        device = RealDevice(DeviceConfig(capacity=capacity, backend=Backend.REAL),
                            Path(directory) / f'{spec.experiment}.pmem')
        try:
            yield device
        finally:
            device.close()


def _share(ops: int, workers: int, index: int) -> int:
    return ops // workers + (1 if index < ops % workers else 0)


class _Clock:
    """Per-op latency recorder; records nothing on the simulated backend"""

    def __init__(self, enabled: bool):
        self.enabled = enabled
        self.samples: List[int] = []

    def time(self, op: Callable[[], object]):
        if not self.enabled:
            return op()
        start = time.perf_counter_ns()
        result = op()
        self.samples.append(time.perf_counter_ns() - start)
        return result


def _run_workers(spec: BenchSpec, threads: int,
                 worker: Callable[[int, _Clock], None]) -> Tuple[Optional[int], Optional[np.ndarray]]:
    """Run one worker per thread; returns (elapsed ns, latencies) on the real backend"""
    clocks = [_Clock(spec.real) for _ in range(threads)]
    start = time.perf_counter_ns()
    if spec.real and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for future in [pool.submit(worker, i, clocks[i]) for i in range(threads)]:
                future.result()
    else:
        # simulated runs stay on one thread so counters are deterministic
        for i in range(threads):
            worker(i, clocks[i])
    elapsed = time.perf_counter_ns() - start

    if not spec.real:
        return None, None
    samples = [ns for clock in clocks for ns in clock.samples]
    return elapsed, np.asarray(samples, dtype=np.int64)


def _random_bytes(rng: np.random.Generator, size: int) -> bytes:
    return rng.integers(0, 256, size, dtype=np.uint8).tobytes()


# Bandwidth

def _bandwidth_point(spec: BenchSpec, threads: int, lines: int) -> BenchResult:
    region = (spec.working_set // threads) // BLOCK_SIZE * BLOCK_SIZE
    chunk = lines * CACHE_LINE_SIZE
    last_block = (region - chunk) // BLOCK_SIZE

    with bench_device(spec, region * threads) as device:
        def worker(index: int, clock: _Clock) -> None:
            rng = np.random.default_rng([spec.seed, index])
            count = _share(spec.ops, threads, index)
            offsets = index * region + rng.integers(0, last_block + 1, count) * BLOCK_SIZE
            data = _random_bytes(rng, chunk)

            for offset in offsets.tolist():
                if spec.flavor == 'load':
                    clock.time(lambda: device.read(offset, chunk))
                elif spec.flavor == 'streaming':
                    clock.time(lambda: device.store_streaming(offset, data))
                elif spec.flavor == 'plain':
                    clock.time(lambda: device.store(offset, data))
                else:
                    def store_and_write_back():
                        device.store(offset, data)
                        for line in range(offset, offset + chunk, CACHE_LINE_SIZE):
                            device.write_back(line)
                    clock.time(store_and_write_back)
            if spec.flavor != 'load':
                device.fence()

        device.reset_stats()
        elapsed, latencies = _run_workers(spec, threads, worker)
        stats = device.stats()

    return BenchResult('bandwidth', spec.flavor, threads, lines, spec.ops, spec.ops * chunk,
                       elapsed, latencies, stats)


def run_bandwidth(spec: BenchSpec) -> Iterator[BenchResult]:
    """Random block-aligned accesses of `adjacent_lines` consecutive lines per op"""
    for _, threads, lines in spec.points():
        result = _bandwidth_point(spec, threads, lines)
        log.info("bandwidth %s threads=%d lines=%d: %s B/s", spec.flavor, threads, lines, _format(result.bytes_per_s))
        yield result


# Latency

def build_chain(device: Device, base: int, line_count: int, length: int, rng: np.random.Generator) -> int:
    """Write a random cyclic pointer chain through `length` distinct lines

    Each visited line holds the device offset of the next one.

    Returns:
        Offset of the first line in the chain
    """
    picked = rng.choice(line_count, size=length, replace=False)
    offsets = base + picked.astype(np.int64) * CACHE_LINE_SIZE
    for here, there in zip(offsets.tolist(), np.roll(offsets, -1).tolist()):
        device.store(here, POINTER.pack(there))
        device.write_back(here)
    device.fence()
    return int(offsets[0])


def pointer_chase(device: Device, start: int, steps: int, clock: Optional[_Clock] = None) -> int:
    """Follow a pointer chain for `steps` dependent loads

    Returns:
        The offset reached after the last load
    """
    clock = clock or _Clock(False)
    at = start
    for _ in range(steps):
        (at,) = clock.time(lambda: POINTER.unpack(device.read(at, POINTER.size)))
    return at


def _latency_point(spec: BenchSpec, threads: int, pattern: str) -> BenchResult:
    region = (spec.working_set // threads) // BLOCK_SIZE * BLOCK_SIZE
    region_lines = region // CACHE_LINE_SIZE

    with bench_device(spec, region * threads) as device:
        chains = {}
        if pattern == 'read':
            for index in range(threads):
                rng = np.random.default_rng([spec.seed, index])
                length = max(1, min(region_lines, _share(spec.ops, threads, index)))
                chains[index] = build_chain(device, index * region, region_lines, length, rng)

        def worker(index: int, clock: _Clock) -> None:
            count = _share(spec.ops, threads, index)
            if pattern == 'read':
                pointer_chase(device, chains[index], count, clock)
                return

            rng = np.random.default_rng([spec.seed, index])
            base = index * region
            data = _random_bytes(rng, CACHE_LINE_SIZE)
            if pattern == 'same':
                lines = np.zeros(count, dtype=np.int64)
            elif pattern == 'sequential':
                lines = np.arange(count, dtype=np.int64) % region_lines
            else:
                lines = rng.integers(0, region_lines, count)

            for line in lines.tolist():
                offset = base + line * CACHE_LINE_SIZE

                def persist_line():
                    if spec.flavor == 'streaming':
                        device.store_streaming(offset, data)
                    else:
                        device.store(offset, data)
                        if spec.flavor == 'plain+writeback':
                            device.write_back(offset)
                    device.fence()
                clock.time(persist_line)

        device.reset_stats()
        elapsed, latencies = _run_workers(spec, threads, worker)
        stats = device.stats()

    size = POINTER.size if pattern == 'read' else CACHE_LINE_SIZE
    return BenchResult('latency', spec.flavor, threads, pattern, spec.ops, spec.ops * size,
                       elapsed, latencies, stats)


def run_latency(spec: BenchSpec) -> Iterator[BenchResult]:
    """Dependent-load chains for reads; one persisted line per op for writes"""
    for _, threads, pattern in spec.points():
        result = _latency_point(spec, threads, pattern)
        log.info("latency %s/%s threads=%d: %s ns", spec.flavor, pattern, threads, _format(result.latency()))
        yield result


# Logging

def log_region_size(algo: str, entry_size: int, count: int, aligned: bool = False, dance_k: int = 64) -> int:
    """Block-rounded region size holding `count` entries of `entry_size` payload bytes"""
    cls = log_class(algo)
    layout = LogOptions(algo, (0, (dance_k + 2) * CACHE_LINE_SIZE), aligned=aligned, dance_k=dance_k)
    header = cls.entries_start(layout)
    return round_up(header + max(1, count) * cls.entry_span(layout, entry_size), BLOCK_SIZE)


def _log_point(spec: BenchSpec, algo: str, threads: int, entry_size: int) -> BenchResult:
    counts = [_share(spec.ops, threads, i) for i in range(threads)]
    sizes = [log_region_size(algo, entry_size, c, spec.aligned, spec.dance_k) for c in counts]
    starts = [sum(sizes[:i]) for i in range(threads)]

    with bench_device(spec, sum(sizes)) as device:
        logs = [
            log_create(device, LogOptions(algo, (start, size), aligned=spec.aligned,
                                          dance_k=spec.dance_k, flavor=spec.store_flavor))
            for start, size in zip(starts, sizes)
        ]

        def worker(index: int, clock: _Clock) -> None:
            rng = np.random.default_rng([spec.seed, index])
            payload = _random_bytes(rng, entry_size)
            writer = logs[index]
            for _ in range(counts[index]):
                clock.time(lambda: writer.append(payload))

        device.reset_stats()
        elapsed, latencies = _run_workers(spec, threads, worker)
        stats = device.stats()

    return BenchResult('log', algo, threads, entry_size, spec.ops, spec.ops * entry_size,
                       elapsed, latencies, stats)


def run_log(spec: BenchSpec) -> Iterator[BenchResult]:
    """Appends of fixed-size entries; each worker owns its log"""
    for algo, threads, entry_size in spec.points():
        result = _log_point(spec, algo, threads, entry_size)
        log.info("log %s threads=%d size=%d: %s fences/op", algo, threads, entry_size,
                 _format(result.fences_per_op))
        yield result


# Page flushing

def _flush_point(spec: BenchSpec, algo: str, threads: int, dirty: int) -> BenchResult:
    config = PageStoreConfig(
        slot_count=threads * spec.pages + threads,
        page_size=spec.page_size,
        mulog_count=threads,
        dirty_threshold_single=spec.dirty_threshold_single,
        dirty_threshold_multi=spec.dirty_threshold_multi,
        flavor=spec.store_flavor,
    )
    lines_per_page = config.lines_per_page

    with bench_device(spec, config.total_size) as device:
        store = store_create(device, config)
        pages: Dict[int, np.ndarray] = {}
        for pid in range(1, threads * spec.pages + 1):
            rng = np.random.default_rng([spec.seed, pid])
            pages[pid] = rng.integers(0, 256, (lines_per_page, CACHE_LINE_SIZE), dtype=np.uint8)
            store.flush_cow(pid, pages[pid].tobytes())

        def worker(index: int, clock: _Clock) -> None:
            rng = np.random.default_rng([spec.seed, index, dirty])
            owned = range(index * spec.pages + 1, (index + 1) * spec.pages + 1)
            for i in range(_share(spec.ops, threads, index)):
                pid = owned[i % len(owned)]
                page = pages[pid]
                lines = np.sort(rng.choice(lines_per_page, size=dirty, replace=False))
                page[lines] = rng.integers(0, 256, (dirty, CACHE_LINE_SIZE), dtype=np.uint8)
                image = page.tobytes()
                mask = DirtyMask.from_lines(lines.tolist(), lines_per_page)

                if algo == 'cow':
                    clock.time(lambda: store.flush_cow(pid, image))
                elif algo == 'cow-dirty':
                    clock.time(lambda: store.flush_cow_dirty(pid, image, mask))
                elif algo == 'mulog':
                    clock.time(lambda: store.flush_mulog(index, pid, image, mask))
                else:
                    clock.time(lambda: store.flush_hybrid(index, pid, image, mask))

        device.reset_stats()
        elapsed, latencies = _run_workers(spec, threads, worker)
        stats = device.stats()

    return BenchResult('flush', algo, threads, dirty, spec.ops, spec.ops * dirty * CACHE_LINE_SIZE,
                       elapsed, latencies, stats)


def run_flush(spec: BenchSpec) -> Iterator[BenchResult]:
    """Page flushes with a fixed dirty-line count; each worker owns its pages and micro log"""
    for algo, threads, dirty in spec.points():
        result = _flush_point(spec, algo, threads, dirty)
        log.info("flush %s threads=%d dirty=%d: %s bytes/op", algo, threads, dirty, _format(result.bytes_per_op))
        yield result


# YCSB

def _ycsb_point(spec: BenchSpec, algo: str, entry_size: int) -> BenchResult:
    value_size = entry_size - YCSB_KEY.size
    size = log_region_size(algo, entry_size, spec.ops, spec.aligned, spec.dance_k)

    with bench_device(spec, size) as device:
        wal = log_create(device, LogOptions(algo, (0, size), aligned=spec.aligned,
                                            dance_k=spec.dance_k, flavor=spec.store_flavor))
        rng = np.random.default_rng(spec.seed)
        table = rng.integers(0, 256, (spec.records, value_size), dtype=np.uint8)

        def worker(index: int, clock: _Clock) -> None:
            keys = rng.integers(0, spec.records, spec.ops).tolist()
            for key in keys:
                def update():
                    value = rng.integers(0, 256, value_size, dtype=np.uint8)
                    table[key] = value
                    wal.append(YCSB_KEY.pack(key) + value.tobytes())
                clock.time(update)

        device.reset_stats()
        elapsed, latencies = _run_workers(spec, 1, worker)
        stats = device.stats()

    return BenchResult('ycsb', algo, 1, entry_size, spec.ops, spec.ops * entry_size,
                       elapsed, latencies, stats)


def run_ycsb(spec: BenchSpec) -> Iterator[BenchResult]:
    """Write-only key-value updates, one log append per transaction"""
    for algo, _, entry_size in spec.points():
        result = _ycsb_point(spec, algo, entry_size)
        log.info("ycsb %s size=%d: %s tx/s", algo, entry_size, _format(result.ops_per_s))
        yield result


RUNNERS: Dict[str, Callable[[BenchSpec], Iterator[BenchResult]]] = {
    'bandwidth': run_bandwidth,
    'latency': run_latency,
    'log': run_log,
    'flush': run_flush,
    'ycsb': run_ycsb,
}


def run(spec: BenchSpec) -> List[BenchResult]:
    """Validate a spec and run its whole sweep

    Returns:
        One result per sweep point; empty when no operations were requested

    Raises:
        ValueError: If the spec is invalid
    """
    spec.validate()
    if spec.ops == 0:
        return []
    return list(RUNNERS[spec.experiment](spec))


def write_csv(results: Sequence[BenchResult], out: TextIO) -> None:
    writer = csv.DictWriter(out, fieldnames=CSV_COLUMNS, lineterminator='\n')
    writer.writeheader()
    for result in results:
        writer.writerow(result.row())


def load_reference(path: Optional[Union[str, Path]] = None) -> List[Dict[str, str]]:
    """Hardware magnitudes shipped for side-by-side comparison

    Rows have the columns experiment, series, param, value, unit and note.
    """
    path = Path(path) if path else Path(__file__).parent / 'data' / 'hardware_reference.csv'
    with path.open(newline='') as f:
        return list(csv.DictReader(f))

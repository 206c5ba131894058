"""Crash-consistency scenarios for logs and page stores

Each scenario builds a workload, runs it under the crash checker and judges
every recovered image against what the workload had completed.
"""

import logging
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Type, Union

import numpy as np

from pmemprims import fixtures
from pmemprims.crash_checker import CrashMode, CrashReport, PrefixOracle, check_crash_consistency
from pmemprims.page_flush import DirectoryEntry, DirtyMask, PageStore, PageStoreConfig, store_create, store_recover
from pmemprims.pmem_model import BLOCK_SIZE, CACHE_LINE_SIZE
from pmemprims.wal import Log, LogEntry, LogOptions, log_class, log_create, round_up

log = logging.getLogger(__name__)

DEFAULT_PAYLOAD_SIZES = (0, 7, 64, 65, 200)


def scenario_payloads(sizes: Sequence[int]) -> List[bytes]:
    """Distinct payloads without zero bytes, so a missing fragment always shows"""
    return [bytes((i * 37 + j) % 255 + 1 for j in range(size)) for i, size in enumerate(sizes)]


def _judge_log(payloads: List[bytes], recovered: Tuple[List[LogEntry], int], oracle: PrefixOracle) -> Optional[str]:
    entries, next_lsn = recovered
    allowed = oracle.completed + (1 if oracle.in_flight is not None else 0)
    if not oracle.completed <= len(entries) <= allowed:
        return f"recovered {len(entries)} entries, expected {oracle.completed}..{allowed}"
    for index, entry in enumerate(entries):
        if entry.lsn != index + 1:
            return f"entry {index} has lsn {entry.lsn}"
        if entry.payload != payloads[index]:
            return f"entry lsn={entry.lsn} payload differs from the appended one"
    if next_lsn != len(entries) + 1:
        return f"next lsn {next_lsn} after {len(entries)} entries"
    return None


def check_log(algo: str, payload_sizes: Sequence[int] = DEFAULT_PAYLOAD_SIZES, aligned: bool = False,
              dance_k: int = 4, flavor: str = 'streaming', mode: Optional[CrashMode] = None,
              cls: Optional[Type[Log]] = None) -> CrashReport:
    """Append payloads and check that recovery always returns an exact prefix

    A byte-identical in-flight entry may also be recovered.

    Args:
        algo: Log algorithm
        payload_sizes: One append per size
        aligned: Cache-line aligned entries
        dance_k: Size fields of the header-dance log
        flavor: Store flavor
        mode: Crash image selection (exhaustive by default)
        cls: Writer class replacing the algorithm's own (for mutation checks)
    """
    writer = cls or log_class(algo)
    payloads = scenario_payloads(payload_sizes)
    layout = LogOptions(algo, (0, (dance_k + 2) * CACHE_LINE_SIZE), aligned=aligned, dance_k=dance_k)
    needed = writer.entries_start(layout) + sum(writer.entry_span(layout, len(p)) for p in payloads)
    # room for one more line so scans stop on zeros, not on the region end
    size = round_up(needed + CACHE_LINE_SIZE, BLOCK_SIZE)
    options = LogOptions(algo, (0, size), aligned=aligned, dance_k=dance_k, flavor=flavor)

    workload = [lambda wal, payload=payload: wal.append(payload) for payload in payloads]
    report = check_crash_consistency(
        setup=lambda device: log_create(device, options, writer),
        workload=workload,
        recover=lambda device: writer.recover(device, options),
        predicate=lambda recovered, oracle: _judge_log(payloads, recovered, oracle),
        mode=mode,
        capacity=size,
    )
    report.fixture = ('log', {'algo': algo, 'region': [0, size], 'aligned': aligned, 'dance_k': dance_k})
    log.info("log %s (%s): %s", algo, 'aligned' if aligned else 'unaligned', report.summary())
    return report


class FlushStep(NamedTuple):
    """One flush of a scenario: `dirty` random lines of `pid` change first"""

    algo: str
    pid: int
    dirty: int
    flusher: int = 0


def default_flush_steps(lines_per_page: int) -> List[FlushStep]:
    """Four flushes over two pids mixing CoW and micro logs

    On a 256-line page the dirty counts are 1, 16, 255 and a full page;
    smaller pages change at most half their lines in the second flush.
    """
    return [
        FlushStep('mulog', 1, 1),
        FlushStep('cow', 2, min(16, max(1, lines_per_page // 2))),
        FlushStep('mulog', 2, lines_per_page - 1),
        FlushStep('cow', 1, lines_per_page),
    ]


def alternating_flush_steps() -> List[FlushStep]:
    """Two flushers taking turns micro-logging the same page"""
    return [
        FlushStep('mulog', 1, 2, flusher=0),
        FlushStep('mulog', 1, 3, flusher=1),
        FlushStep('mulog', 1, 1, flusher=0),
        FlushStep('hybrid', 1, 2, flusher=1),
    ]


def _run_step(store: PageStore, step: FlushStep, image: bytes, mask: DirtyMask) -> Tuple[int, int]:
    if step.algo == 'cow':
        store.flush_cow(step.pid, image)
    elif step.algo == 'cow-dirty':
        store.flush_cow_dirty(step.pid, image, mask)
    elif step.algo == 'mulog':
        store.flush_mulog(step.flusher, step.pid, image, mask)
    elif step.algo == 'hybrid':
        store.flush_hybrid(step.flusher, step.pid, image, mask)
    else:
        raise ValueError(f"unknown flush algorithm {step.algo!r}")
    return step.pid, store.pvn_of(step.pid)


def _judge_flush(versions: List[Dict[int, bytes]], steps: Sequence[FlushStep],
                 directory: Dict[int, DirectoryEntry], oracle: PrefixOracle) -> Optional[str]:
    pvns = {pid: 1 for pid in versions[0]}
    for pid, pvn in oracle.results:
        pvns[pid] = pvn

    for pid, before in versions[oracle.completed].items():
        entry = directory.get(pid)
        if entry is None:
            return f"page {pid} lost"
        allowed = [before]
        if oracle.in_flight is not None and steps[oracle.in_flight].pid == pid:
            allowed.append(versions[oracle.in_flight + 1][pid])
        if entry.image not in allowed:
            return f"page {pid} in slot {entry.slot} matches neither the pre- nor the post-flush image"
        if entry.pvn < pvns[pid]:
            return f"page {pid} recovered pvn {entry.pvn} below durable pvn {pvns[pid]}"
    return None


def check_flush(steps: Optional[Sequence[FlushStep]] = None, page_size: int = 512,
                mode: Optional[CrashMode] = None, seed: int = 0, flavor: str = 'streaming',
                crash_points='all') -> CrashReport:
    """Run flushes and check each page recovers to its pre- or post-flush image

    Every pid starts with one CoW flush done during setup (the durable
    baseline). Recovered pvns must never fall below the last completed flush.

    Args:
        steps: Flush sequence (default_flush_steps for the page size if None)
        page_size: Page size in bytes
        mode: Crash image selection
        seed: Seeds page contents and dirty-line choices
        flavor: Store flavor
        crash_points: 'all' or explicit crash points
    """
    layout = PageStoreConfig(slot_count=1, page_size=page_size)
    lines_per_page = layout.lines_per_page
    steps = list(steps) if steps is not None else default_flush_steps(lines_per_page)
    pids = sorted({step.pid for step in steps})
    flushers = max(step.flusher for step in steps) + 1
    config = PageStoreConfig(slot_count=len(pids) + flushers, page_size=page_size,
                             mulog_count=flushers, flavor=flavor)

    rng = np.random.default_rng(seed)
    pages = {pid: rng.integers(0, 256, (lines_per_page, CACHE_LINE_SIZE), dtype=np.uint8) for pid in pids}
    versions: List[Dict[int, bytes]] = [{pid: page.tobytes() for pid, page in pages.items()}]
    inputs: List[Tuple[bytes, DirtyMask]] = []
    for step in steps:
        lines = np.sort(rng.choice(lines_per_page, size=step.dirty, replace=False))
        page = pages[step.pid]
        # xor with a non-zero byte so every dirty line really changes
        page[lines] ^= rng.integers(1, 256, (step.dirty, CACHE_LINE_SIZE), dtype=np.uint8)
        inputs.append((page.tobytes(), DirtyMask.from_lines(lines.tolist(), lines_per_page)))
        versions.append({**versions[-1], step.pid: page.tobytes()})

    def setup(device) -> PageStore:
        store = store_create(device, config)
        for pid in pids:
            store.flush_cow(pid, versions[0][pid])
        return store

    workload = [
        lambda store, step=step, image=image, mask=mask: _run_step(store, step, image, mask)
        for step, (image, mask) in zip(steps, inputs)
    ]
    report = check_crash_consistency(
        setup=setup,
        workload=workload,
        recover=lambda device: store_recover(device, config)[1],
        predicate=lambda directory, oracle: _judge_flush(versions, steps, directory, oracle),
        crash_points=crash_points,
        mode=mode,
        capacity=config.total_size,
    )
    report.fixture = ('page_store', {'slot_count': config.slot_count, 'page_size': page_size,
                                      'mulog_count': config.mulog_count})
    log.info("flush scenario of %d steps: %s", len(steps), report.summary())
    return report


def dump_failures(report: CrashReport, directory: Union[str, Path]) -> List[Path]:
    """Write every failing image of a scenario report as a fixture file

    The files recover with `pmemprims fixture recover` under the scenario's
    own parameters.

    Raises:
        ValueError: If the report did not come from a scenario
    """
    if report.fixture is None:
        raise ValueError("report carries no fixture parameters")
    kind, params = report.fixture
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, failure in enumerate(report.failures):
        name = f"failure-{i:03d}-seq{failure.image.crash_seq}"
        paths.append(fixtures.dump_fixture(directory / f"{name}.yaml", failure.image.content, kind, params, name))
    log.info("wrote %d failing images to %s", len(paths), directory)
    return paths

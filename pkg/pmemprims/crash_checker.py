"""Crash-image enumeration and failure-atomicity checking

A crash image is one durable state a region can be left in when power
fails after a given event. Lines persist independently and monotonically;
the only ordering comes from fences. For each line the durable content is
some replayed state between its enforced floor and the crash point, snapped
to a store boundary.
"""

from __future__ import annotations

import bisect
import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from pmemprims.pmem_model import DeviceConfig, EventKind, EventTrace, SimulatedDevice

log = logging.getLogger(__name__)

DEFAULT_CAP = 2 ** 20


class EnumerationCapExceeded(RuntimeError):
    """Exhaustive enumeration would exceed the configured image cap"""


@dataclass(frozen=True)
class CrashMode:
    """How images are drawn at each crash point

    Use `CrashMode.exhaustive()` or `CrashMode.sampled(n, seed)`.
    """

    kind: str = 'exhaustive'
    samples: int = 0
    seed: int = 0
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        if self.kind not in ('exhaustive', 'sampled'):
            raise ValueError(f"unknown crash mode {self.kind!r}")
        if self.kind == 'sampled' and self.samples < 1:
            raise ValueError("sampled mode needs at least one sample")
        if self.cap < 1:
            raise ValueError("enumeration cap must be positive")

    @classmethod
    def exhaustive(cls, cap: int = DEFAULT_CAP) -> 'CrashMode':
        return cls('exhaustive', cap=cap)

    @classmethod
    def sampled(cls, samples: int, seed: int = 0, cap: int = DEFAULT_CAP) -> 'CrashMode':
        return cls('sampled', samples=samples, seed=seed, cap=cap)

    def __str__(self) -> str:
        if self.kind == 'sampled':
            return f"sampled({self.samples}, {self.seed})"
        return 'exhaustive'


@dataclass(frozen=True, eq=False)
class CrashImage:
    content: bytes
    crash_seq: int
    # Lines absent from the map were never stored to; their persist seq is 0.
    per_line_persist_seq: Dict[int, int] = field(default_factory=dict)


LineChoice = Tuple[int, bytes]


class CrashTimeline:
    """Per-line replay history of one trace

    Built once per trace; answers which line states are legal at any crash
    point. A fence gives each line with a pending write-back (or streaming
    store) a floor: the line content as of that write-back event.
    """

    def __init__(self, trace: EventTrace):
        self.trace = trace
        self.line_size = trace.cache_line_size
        self._history: Dict[int, List[LineChoice]] = {}
        self._history_seqs: Dict[int, List[int]] = {}
        # line -> [(fence seq, content seq)]
        self._floors: Dict[int, List[Tuple[int, int]]] = {}

        line_size = self.line_size
        base = trace.base
        volatile = bytearray(base)
        pending: Dict[int, int] = {}

        for event in trace:
            if event.is_store:
                at = event.offset
                volatile[at:at + len(event.payload)] = event.payload
                line = at - at % line_size
                history = self._history.get(line)
                if history is None:
                    history = self._history[line] = [(0, bytes(base[line:line + line_size]))]
                history.append((event.seq, bytes(volatile[line:line + line_size])))
                if event.kind is EventKind.STREAMING_STORE:
                    pending[line] = event.seq
            elif event.kind is EventKind.WRITE_BACK:
                pending[event.offset] = event.seq
            else:
                for line, content_seq in pending.items():
                    if line in self._history:
                        self._floors.setdefault(line, []).append((event.seq, content_seq))
                pending.clear()

        for line, history in self._history.items():
            self._history_seqs[line] = [seq for seq, _ in history]

    def __len__(self) -> int:
        return len(self.trace)

    @property
    def lines(self) -> List[int]:
        return sorted(self._history)

    def floor(self, line: int, crash_seq: int) -> int:
        """Content seq the line is guaranteed to have reached by crash_seq"""
        floors = self._floors.get(line)
        if not floors:
            return 0
        index = bisect.bisect_right(floors, (crash_seq, float('inf'))) - 1
        return floors[index][1] if index >= 0 else 0

    def choices(self, line: int, crash_seq: int) -> List[LineChoice]:
        """Distinct legal (persist seq, line content) pairs for a line"""
        history = self._history.get(line)
        if history is None:
            return []
        seqs = self._history_seqs[line]
        floor = self.floor(line, crash_seq)
        first = bisect.bisect_right(seqs, floor) - 1
        last = bisect.bisect_right(seqs, crash_seq)

        result: List[LineChoice] = []
        seen = set()
        for seq, content in history[first:last]:
            if content in seen:
                continue
            seen.add(content)
            # the floor snapshot is the line as replayed up to the floor
            result.append((max(seq, floor), content))
        return result

    def volatile_line(self, line: int, crash_seq: int) -> bytes:
        history = self._history.get(line)
        if history is None:
            return bytes(self.trace.base[line:line + self.line_size])
        index = bisect.bisect_right(self._history_seqs[line], crash_seq) - 1
        return history[index][1]

    def image_count(self, crash_seq: int) -> int:
        count = 1
        for line in self._history:
            count *= max(1, len(self.choices(line, crash_seq)))
        return count

    def _split(self, crash_seq: int) -> Tuple[bytearray, Dict[int, int], List[int], List[List[LineChoice]]]:
        template = bytearray(self.trace.base)
        fixed_seqs: Dict[int, int] = {}
        varying: List[int] = []
        options: List[List[LineChoice]] = []
        for line in self.lines:
            line_choices = self.choices(line, crash_seq)
            if len(line_choices) == 1:
                seq, content = line_choices[0]
                template[line:line + self.line_size] = content
                fixed_seqs[line] = seq
            else:
                varying.append(line)
                options.append(line_choices)
        return template, fixed_seqs, varying, options

    def _build(self, template: bytearray, fixed_seqs: Dict[int, int], crash_seq: int,
               varying: List[int], picks: Sequence[LineChoice]) -> CrashImage:
        content = bytearray(template)
        persist_seqs = dict(fixed_seqs)
        for line, (seq, line_content) in zip(varying, picks):
            content[line:line + self.line_size] = line_content
            persist_seqs[line] = seq
        return CrashImage(bytes(content), crash_seq, persist_seqs)

    def images(self, crash_seq: int, mode: Optional[CrashMode] = None) -> Iterator[CrashImage]:
        """Crash images at one crash point

        Args:
            crash_seq: Number of events executed before the crash
            mode: Exhaustive (default) or sampled

        Yields:
            CrashImage objects; exhaustive mode yields each distinct image once

        Raises:
            EnumerationCapExceeded: If exhaustive enumeration exceeds mode.cap
        """
        mode = mode or CrashMode.exhaustive()
        if crash_seq < 0 or crash_seq > len(self.trace):
            raise ValueError(f"crash_seq {crash_seq} outside trace of {len(self.trace)} events")

        template, fixed_seqs, varying, options = self._split(crash_seq)

        if mode.kind == 'exhaustive':
            count = 1
            for line_choices in options:
                count *= len(line_choices)
            if count > mode.cap:
                raise EnumerationCapExceeded(
                    f"{count} crash images at seq {crash_seq} exceed the cap of {mode.cap}; "
                    "use sampled mode"
                )
            for picks in itertools.product(*options):
                yield self._build(template, fixed_seqs, crash_seq, varying, picks)
            return

        rng = np.random.default_rng([mode.seed, crash_seq])
        sizes = [len(line_choices) for line_choices in options]
        for _ in range(mode.samples):
            indices = [int(rng.integers(size)) for size in sizes]
            picks = [line_choices[i] for line_choices, i in zip(options, indices)]
            yield self._build(template, fixed_seqs, crash_seq, varying, picks)


def crash_images(trace: EventTrace, crash_seq: int, mode: Optional[CrashMode] = None) -> Iterator[CrashImage]:
    """All (or sampled) crash-reachable images of a trace at one crash point"""
    return CrashTimeline(trace).images(crash_seq, mode)


@dataclass(frozen=True)
class PrefixOracle:
    """What the workload had done when the crash hit

    Attributes:
        crash_seq: Events executed before the crash
        completed: Number of workload steps that returned
        in_flight: Index of the step interrupted by the crash, if any
        results: Return values of the completed steps
    """

    crash_seq: int
    completed: int
    in_flight: Optional[int]
    results: Tuple[Any, ...] = ()


@dataclass(frozen=True, eq=False)
class CrashFailure:
    image: CrashImage
    diagnostic: str
    # line offset -> durable bytes, for lines that differ from the volatile view
    lost_lines: Dict[int, bytes] = field(default_factory=dict)

    def to_text(self) -> str:
        lines = ' '.join(f"line@{offset}={content.hex()}" for offset, content in sorted(self.lost_lines.items()))
        text = f"crash_seq={self.image.crash_seq} {self.diagnostic}"
        return f"{text} {lines}" if lines else text


@dataclass
class CrashReport:
    mode: CrashMode
    images_checked: int = 0
    crash_points_checked: int = 0
    failures: List[CrashFailure] = field(default_factory=list)
    # (kind, params) under which a failing image can be recovered as a fixture
    fixture: Optional[Tuple[str, Dict[str, Any]]] = None

    @property
    def ok(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        return f"checked={self.images_checked} failed={len(self.failures)}"

    def to_text(self) -> str:
        """One line per failure, then the summary line"""
        lines = [failure.to_text() for failure in self.failures]
        lines.append(self.summary())
        return '\n'.join(lines) + '\n'


Predicate = Callable[[Any, PrefixOracle], Optional[str]]


def check_crash_consistency(
    setup: Callable[[SimulatedDevice], Any],
    workload: Sequence[Callable[[Any], Any]],
    recover: Callable[[SimulatedDevice], Any],
    predicate: Predicate,
    crash_points: Union[str, Iterable[int]] = 'all',
    mode: Optional[CrashMode] = None,
    capacity: int = 4096,
) -> CrashReport:
    """Run a workload on a simulated device and verify recovery at crash points

    Args:
        setup: Prepares a fresh device and returns the state handed to steps;
            its effects form the durable baseline of the trace
        workload: Steps, each called with the setup state
        recover: Rebuilds a recovered state from a device holding a crash image
        predicate: Returns None when the recovered state is acceptable for the
            oracle, else a diagnostic
        crash_points: 'all' event boundaries or an explicit collection
        mode: Image selection; sampling degenerates to enumeration when a crash
            point has fewer images than the sample budget
        capacity: Simulated device size

    Returns:
        CrashReport with every failing image

    Raises:
        EnumerationCapExceeded: From exhaustive enumeration
    """
    mode = mode or CrashMode.exhaustive()
    device = SimulatedDevice(DeviceConfig(capacity=capacity))
    state = setup(device)
    device.reset_trace()

    starts: List[int] = []
    ends: List[int] = []
    results: List[Any] = []
    for step in workload:
        starts.append(len(device.trace()))
        results.append(step(state))
        ends.append(len(device.trace()))

    timeline = CrashTimeline(device.trace())
    if crash_points == 'all':
        points = range(len(timeline) + 1)
    else:
        points = sorted(set(crash_points))

    report = CrashReport(mode=mode)
    for crash_seq in points:
        completed = bisect.bisect_right(ends, crash_seq)
        in_flight = completed if completed < len(starts) and crash_seq > starts[completed] else None
        oracle = PrefixOracle(crash_seq, completed, in_flight, tuple(results[:completed]))

        point_mode = mode
        if mode.kind == 'sampled' and timeline.image_count(crash_seq) <= mode.samples:
            point_mode = CrashMode.exhaustive(cap=mode.cap)

        for image in timeline.images(crash_seq, point_mode):
            report.images_checked += 1
            try:
                recovered = recover(SimulatedDevice.from_image(image.content))
                verdict = predicate(recovered, oracle)
            except Exception as e:
                verdict = f"recovery raised {type(e).__name__}: {e}"
            if verdict:
                lost = {
                    line: image.content[line:line + timeline.line_size]
                    for line in timeline.lines
                    if image.content[line:line + timeline.line_size] != timeline.volatile_line(line, crash_seq)
                }
                report.failures.append(CrashFailure(image, verdict, lost))
        report.crash_points_checked += 1

    log.info("crash check over %d points: %s", report.crash_points_checked, report.summary())
    return report

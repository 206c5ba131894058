import itertools
import struct

import pytest

from pmemprims.crash_checker import (
    CrashMode, CrashTimeline, EnumerationCapExceeded, check_crash_consistency, crash_images,
)
from pmemprims.pmem_model import DeviceConfig, EventKind, SimulatedDevice


def _contents(images):
    return {image.content for image in images}


def test_unfenced_store_may_or_may_not_persist(device):
    device.store(0, b'\x01' * 8)
    images = _contents(crash_images(device.trace(), 1))
    assert images == {bytes(4096), b'\x01' * 8 + bytes(4088)}


def test_crash_point_zero_is_the_baseline(device):
    device.store(0, b'\x01')
    device.persist(0, 1)
    assert _contents(crash_images(device.trace(), 0)) == {bytes(4096)}


def test_fence_after_write_back_pins_the_line(device):
    device.store(0, b'\x01' * 8)
    device.persist(0, 8)
    assert len(list(crash_images(device.trace(), 3))) == 1


def test_streaming_store_is_pinned_by_the_fence(device):
    device.store_streaming(64, b'\x02' * 16)
    before = list(crash_images(device.trace(), 2))
    device.fence()
    after = list(crash_images(device.trace(), 3))
    assert len(before) == 3
    assert len(after) == 1
    assert after[0].content[64:80] == b'\x02' * 16


def test_floor_is_content_as_of_the_write_back(device):
    device.store(0, b'A' * 8)
    device.write_back(0)
    device.store(8, b'B' * 8)
    device.fence()
    lines = {image.content[:16] for image in crash_images(device.trace(), 4)}
    assert lines == {b'A' * 8 + bytes(8), b'A' * 8 + b'B' * 8}


def test_lines_persist_independently(device):
    device.store(0, b'\x01')
    device.store(64, b'\x02')
    assert len(list(crash_images(device.trace(), 2))) == 4


def test_identical_snapshots_are_deduplicated(device):
    device.store(0, b'\x05')
    device.store(0, b'\x00')
    # the second store restores the baseline content of the line
    assert len(list(crash_images(device.trace(), 2))) == 2


def test_per_line_persist_seq(device):
    device.store(0, b'\x01')
    device.persist(0, 1)
    image = next(iter(crash_images(device.trace(), 3)))
    assert image.per_line_persist_seq == {0: 2}


def _brute_force(trace, crash_seq, line_size=64):
    """Legal durable lines, computed by replaying prefixes of the trace"""
    events = list(trace)[:crash_seq]
    replays = [bytearray(trace.base)]
    for event in events:
        current = bytearray(replays[-1])
        if event.is_store:
            current[event.offset:event.offset + len(event.payload)] = event.payload
        replays.append(current)

    touched = sorted({e.offset - e.offset % line_size for e in events if e.is_store})
    per_line = []
    for line in touched:
        floor = 0
        pending = None
        for event in events:
            on_line = event.offset - event.offset % line_size == line
            if event.kind is EventKind.WRITE_BACK and on_line:
                pending = event.seq
            elif event.kind is EventKind.STREAMING_STORE and on_line:
                pending = event.seq
            elif event.kind is EventKind.FENCE and pending is not None:
                floor, pending = pending, None
        per_line.append((line, {bytes(replays[j][line:line + line_size]) for j in range(floor, crash_seq + 1)}))

    images = set()
    for picks in itertools.product(*(sorted(choices) for _, choices in per_line)):
        content = bytearray(trace.base)
        for (line, _), pick in zip(per_line, picks):
            content[line:line + line_size] = pick
        images.add(bytes(content))
    return images


def test_enumeration_matches_brute_force(device):
    device.store(0, struct.pack('<QQ', 1, 2))
    device.store_streaming(64, b'\x07' * 12)
    device.write_back(0)
    device.store(16, b'\x09' * 4)
    device.fence()
    device.store(4, b'\x0a' * 8)
    device.store(128, b'\x0b')
    device.write_back(128)
    device.store(70, b'\x0c' * 3)
    trace = device.trace()

    timeline = CrashTimeline(trace)
    for crash_seq in range(len(trace) + 1):
        assert _contents(timeline.images(crash_seq)) == _brute_force(trace, crash_seq), crash_seq


def test_cap_is_enforced(device):
    for line in range(12):
        device.store(line * 64, b'\x01')
    with pytest.raises(EnumerationCapExceeded):
        list(crash_images(device.trace(), 12, CrashMode.exhaustive(cap=1000)))


def test_sampling_is_deterministic_and_legal(device):
    for line in range(12):
        device.store(line * 64, b'\x01' * 8)
    trace = device.trace()
    timeline = CrashTimeline(trace)
    first = [i.content for i in timeline.images(len(trace), CrashMode.sampled(50, seed=7))]
    second = [i.content for i in timeline.images(len(trace), CrashMode.sampled(50, seed=7))]
    assert first == second
    assert len(first) == 50
    legal = _contents(timeline.images(len(trace)))
    assert set(first) <= legal


def test_crash_mode_validation():
    with pytest.raises(ValueError):
        CrashMode('sometimes')
    with pytest.raises(ValueError):
        CrashMode.sampled(0)
    assert str(CrashMode.sampled(10, 3)) == 'sampled(10, 3)'


RECORD = 16


def _flagged_write(device):
    device.store(0, b'\x11' * RECORD)
    device.persist(0, RECORD)
    device.store(64, b'\x01')
    device.persist(64, 1)


def _torn_write(device):
    # record spans two lines with no ordering: a crash can keep either half
    device.store(56, b'\x11' * RECORD)
    device.store(64 + 56, b'\x01')
    device.persist(56, RECORD + 64)


def _all_or_nothing(offset):
    def predicate(recovered, oracle):
        flagged = recovered.read(offset, 1) == b'\x01'
        record = recovered.read(0 if offset == 64 else 56, RECORD)
        if flagged and record != b'\x11' * RECORD:
            return "flag set over a torn record"
        if oracle.in_flight is None and oracle.completed == 1 and not flagged:
            return "completed write lost"
        return None
    return predicate


def test_harness_accepts_a_correct_protocol():
    report = check_crash_consistency(
        setup=lambda device: device,
        workload=[_flagged_write],
        recover=lambda device: device,
        predicate=_all_or_nothing(64),
    )
    assert report.ok
    assert report.crash_points_checked == 8
    assert report.to_text().endswith(f"checked={report.images_checked} failed=0\n")


def test_harness_reports_a_torn_protocol():
    report = check_crash_consistency(
        setup=lambda device: device,
        workload=[_torn_write],
        recover=lambda device: device,
        predicate=_all_or_nothing(120),
    )
    assert not report.ok
    failure = report.failures[0]
    assert 'torn' in failure.diagnostic
    assert failure.to_text().startswith(f"crash_seq={failure.image.crash_seq} ")
    assert report.summary() == f"checked={report.images_checked} failed={len(report.failures)}"


def test_oracle_tracks_completed_and_in_flight_steps():
    seen = {}

    def step(device):
        device.store_streaming(0, b'\x01' * 8)
        device.fence()
        return 'done'

    def predicate(recovered, oracle):
        seen[oracle.crash_seq] = (oracle.completed, oracle.in_flight, oracle.results)
        return None

    check_crash_consistency(lambda d: d, [step, step], lambda d: d, predicate)
    assert seen[0] == (0, None, ())
    assert seen[1] == (0, 0, ())
    assert seen[2] == (1, None, ('done',))
    assert seen[3] == (1, 1, ('done',))
    assert seen[4] == (2, None, ('done', 'done'))


def test_recovery_exceptions_are_failures():
    def recover(device):
        raise RuntimeError("boom")

    report = check_crash_consistency(lambda d: d, [lambda d: d.store(0, b'\x01')], recover,
                                     lambda r, o: None, crash_points=[1])
    assert len(report.failures) == 2
    assert 'RuntimeError' in report.failures[0].diagnostic


def test_sampled_mode_falls_back_to_enumeration_for_small_points():
    report = check_crash_consistency(
        lambda d: d, [_flagged_write], lambda d: d, _all_or_nothing(64),
        mode=CrashMode.sampled(1000, seed=1),
    )
    exhaustive = check_crash_consistency(lambda d: d, [_flagged_write], lambda d: d, _all_or_nothing(64))
    assert report.images_checked == exhaustive.images_checked


def test_checker_uses_a_fresh_device_per_image():
    devices = []

    def recover(device):
        devices.append(device)
        return device

    check_crash_consistency(lambda d: d, [lambda d: d.store(0, b'\x01')], recover, lambda r, o: None)
    assert len({id(d) for d in devices}) == len(devices)
    assert all(isinstance(d, SimulatedDevice) and d.config == DeviceConfig(capacity=4096) for d in devices)

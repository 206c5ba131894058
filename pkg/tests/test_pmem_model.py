import pytest

from pmemprims.pmem_model import (
    Backend, BackendError, DeviceConfig, DeviceError, DeviceStats, EventKind, OutOfRangeError,
    RealDevice, SimulatedDevice, covering_lines, open_device, store_fragments,
)


def test_config_rejects_bad_geometry():
    with pytest.raises(ValueError):
        DeviceConfig(capacity=1000)
    with pytest.raises(ValueError):
        DeviceConfig(capacity=0)
    with pytest.raises(ValueError):
        DeviceConfig(capacity=4096, cache_line_size=128)
    assert DeviceConfig(capacity=4096, backend='real').backend is Backend.REAL


def test_store_is_visible_immediately(device):
    device.store(100, b'abc')
    assert device.read(99, 5) == b'\x00abc\x00'


def test_out_of_range_access(device):
    with pytest.raises(OutOfRangeError):
        device.store(4095, b'ab')
    with pytest.raises(OutOfRangeError):
        device.read(-1, 1)
    with pytest.raises(OutOfRangeError):
        device.write_back(4096)
    # an IndexError subclass
    with pytest.raises(IndexError):
        device.read(4000, 200)


def test_store_fragments_split_on_eight_byte_boundaries():
    fragments = list(store_fragments(5, bytes(range(20))))
    assert [(offset, len(data)) for offset, data in fragments] == [(5, 3), (8, 8), (16, 8), (24, 1)]
    assert b''.join(data for _, data in fragments) == bytes(range(20))


def test_covering_lines():
    assert list(covering_lines(60, 8)) == [0, 64]
    assert list(covering_lines(64, 64)) == [64]
    assert list(covering_lines(10, 0)) == []


def test_trace_records_fragments_write_backs_and_fences(device):
    device.store(5, bytes(20))
    device.persist(5, 20)
    kinds = [event.kind for event in device.trace()]
    assert kinds == [EventKind.STORE] * 4 + [EventKind.WRITE_BACK, EventKind.FENCE]
    assert [event.seq for event in device.trace()] == list(range(1, 7))


def test_reset_trace_takes_current_content_as_baseline(device):
    device.store(0, b'\x01' * 8)
    device.reset_trace()
    trace = device.trace()
    assert len(trace) == 0
    assert trace.base[:8] == b'\x01' * 8


def test_persist_counts_barriers_and_lines(device):
    device.store(60, bytes(8))
    device.persist(60, 8)
    stats = device.stats()
    assert stats.barriers == 1
    assert stats.lines_written_back == 2
    assert stats.bytes_stored == 8
    assert stats.distinct_blocks_touched == 1


def test_distinct_blocks(device):
    device.store(0, b'a')
    device.store(255, b'b')
    device.store(300, b'c')
    assert device.stats().distinct_blocks_touched == 2


def test_two_persists_of_the_same_line_count_one_repeat(device):
    device.store(0, b'a')
    device.persist(0, 1)
    device.store(1, b'b')
    device.persist(1, 1)
    assert device.stats().repeat_persist_lines == 1


def test_write_backs_within_one_epoch_are_not_repeats(device):
    device.store(0, b'a')
    device.write_back(0)
    device.write_back(0)
    device.fence()
    assert device.stats().repeat_persist_lines == 0


def test_streaming_stores_count_toward_repeats(device):
    device.store_streaming(0, b'a' * 8)
    device.fence()
    device.store_streaming(8, b'b' * 8)
    device.fence()
    stats = device.stats()
    assert stats.repeat_persist_lines == 1
    assert stats.lines_written_back == 0


def test_reset_stats_forgets_line_history(device):
    device.store(0, b'a')
    device.persist(0, 1)
    device.reset_stats()
    device.store(0, b'b')
    device.persist(0, 1)
    assert device.stats() == DeviceStats(barriers=1, lines_written_back=1, distinct_blocks_touched=1,
                                         bytes_stored=1, repeat_persist_lines=0)


def test_stats_difference():
    a = DeviceStats(barriers=5, bytes_stored=100)
    b = DeviceStats(barriers=2, bytes_stored=40)
    assert (a - b).as_dict()['barriers'] == 3
    assert (a - b).bytes_stored == 60


def test_untraced_device_still_counts():
    device = SimulatedDevice(DeviceConfig(capacity=1024), record_trace=False)
    device.store_streaming(0, b'x' * 100)
    device.fence()
    assert device.read(0, 100) == b'x' * 100
    assert device.stats().barriers == 1
    with pytest.raises(BackendError):
        device.trace()


def test_from_image():
    image = bytes(range(256))
    device = SimulatedDevice.from_image(image)
    assert device.image() == image
    assert device.capacity == 256


def test_real_device_is_zero_filled_and_persists(tmp_path):
    path = tmp_path / 'region.pmem'
    config = DeviceConfig(capacity=8192, backend=Backend.REAL)
    with open_device(config, path) as device:
        assert device.read(0, 8192) == bytes(8192)
        device.store(5000, b'durable')
        device.persist(5000, 7)
        assert device.stats().barriers == 1
        with pytest.raises(BackendError):
            device.trace()

    assert path.stat().st_size == 8192
    with RealDevice(config, path) as device:
        assert device.read(5000, 7) == b'durable'


def test_real_device_rejects_size_mismatch(tmp_path):
    path = tmp_path / 'region.pmem'
    path.write_bytes(bytes(1000))
    with pytest.raises(DeviceError):
        RealDevice(DeviceConfig(capacity=4096, backend=Backend.REAL), path)


def test_real_backend_needs_a_path():
    with pytest.raises(ValueError):
        open_device(DeviceConfig(capacity=4096, backend=Backend.REAL))


def test_backend_report(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv('PMEMPRIMS_BACKEND_REPORT', '1')
    with RealDevice(DeviceConfig(capacity=4096, backend=Backend.REAL), tmp_path / 'r.pmem'):
        pass
    assert 'msync' in capsys.readouterr().err

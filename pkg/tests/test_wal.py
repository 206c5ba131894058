import pytest

from pmemprims import fixtures, scenarios
from pmemprims.crash_checker import CrashMode, CrashReport
from pmemprims.pmem_model import DeviceConfig, SimulatedDevice
from pmemprims.wal import (
    ENTRY_HEADER, FOOTER, ZERO_HEADER, Algorithm, ClassicLog, DancingHeaderLog, LogFullError, LogOptions,
    ZeroLog, log_create, log_recover, popcount_entry,
)

ALGOS = [a.value for a in Algorithm]


def _device(capacity=16384):
    return SimulatedDevice(DeviceConfig(capacity=capacity))


@pytest.mark.parametrize('flavor', ['streaming', 'plain'])
@pytest.mark.parametrize('algo,barriers', [('zero', 1), ('classic', 2), ('header', 2), ('header-dance', 2)])
def test_barriers_per_append(algo, barriers, flavor):
    device = _device()
    wal = log_create(device, LogOptions(algo, (0, 16384), dance_k=4, flavor=flavor))
    for payload in (b'', b'x' * 7, b'y' * 100):
        before = device.stats()
        wal.append(payload)
        assert (device.stats() - before).barriers == barriers


@pytest.mark.parametrize('aligned', [False, True])
@pytest.mark.parametrize('algo', ALGOS)
def test_recovery_returns_what_was_appended(algo, aligned):
    device = _device()
    options = LogOptions(algo, (0, 16384), aligned=aligned)
    wal = log_create(device, options)
    payloads = [bytes([size % 251 + 1]) * size for size in (0, 1, 7, 8, 63, 64, 65, 512)]
    lsns = [wal.append(payload) for payload in payloads]

    entries, next_lsn = log_recover(device, options)
    assert lsns == list(range(1, 9))
    assert [e.lsn for e in entries] == lsns
    assert [e.payload for e in entries] == payloads
    assert next_lsn == 9


def test_fresh_region_recovers_empty():
    assert log_recover(_device(), LogOptions('zero', (0, 4096))) == ([], 1)
    assert log_recover(_device(), LogOptions('classic', (0, 4096))) == ([], 1)


@pytest.mark.parametrize('algo', ALGOS)
def test_aligned_entries_never_repeat_a_line(algo):
    device = _device(65536)
    wal = log_create(device, LogOptions(algo, (0, 65536), aligned=True))
    for size in [*range(0, 512, 13), 512]:
        device.reset_stats()
        wal.append(b'\x01' * size)
        assert device.stats().repeat_persist_lines == 0, size


def test_unaligned_classic_footer_shares_the_body_line():
    device = _device()
    wal = log_create(device, LogOptions('classic', (0, 4096)))
    wal.append(b'\x01' * 40)
    assert device.stats().repeat_persist_lines >= 1


def test_dancing_size_fields_avoid_repeats():
    header_device, dance_device = _device(), _device()
    header = log_create(header_device, LogOptions('header', (0, 16384), aligned=True))
    dance = log_create(dance_device, LogOptions('header-dance', (0, 16384), aligned=True, dance_k=64))
    for i in range(64):
        header.append(bytes([i + 1]) * 8)
        dance.append(bytes([i + 1]) * 8)

    assert header_device.stats().repeat_persist_lines == 63
    assert dance_device.stats().repeat_persist_lines == 0


def test_dance_wraps_around_its_size_fields():
    device = _device()
    options = LogOptions('header-dance', (0, 4096), aligned=True, dance_k=4)
    wal = log_create(device, options)
    for i in range(6):
        wal.append(bytes([i + 1]) * 8)

    assert device.stats().repeat_persist_lines == 2
    assert DancingHeaderLog.read_size(device, options) == 6 * 64
    entries, next_lsn = log_recover(device, options)
    assert len(entries) == 6
    assert next_lsn == 7


def test_layout_rules():
    assert DancingHeaderLog.entries_start(LogOptions('header-dance', (0, 8192))) == 4096
    assert ZeroLog.entry_span(LogOptions('zero', (0, 4096), aligned=True), 40) == 64
    assert ZeroLog.entry_span(LogOptions('zero', (0, 4096)), 40) == 64
    assert ZeroLog.entry_span(LogOptions('zero', (0, 4096)), 7) == 32
    assert ZeroLog.entry_span(LogOptions('zero', (0, 4096)), 0) == 24
    assert ClassicLog.entry_span(LogOptions('classic', (0, 4096), aligned=True), 40) == 128
    assert ClassicLog.entry_span(LogOptions('classic', (0, 4096)), 40) == 64


def test_options_validation():
    with pytest.raises(ValueError):
        LogOptions('zero', (0, 32))
    with pytest.raises(ValueError):
        LogOptions('zero', (8, 64))
    with pytest.raises(ValueError):
        LogOptions('header-dance', (0, 4096), dance_k=64)
    with pytest.raises(ValueError):
        LogOptions('zero', (0, 4096), flavor='temporal')
    with pytest.raises(ValueError):
        LogOptions('fancy', (0, 4096))


def test_region_must_fit_the_device():
    with pytest.raises(ValueError):
        log_create(_device(4096), LogOptions('zero', (0, 8192)))


def test_popcount_of_an_empty_first_entry():
    header = ZERO_HEADER.pack(1, 0, 0, 0)
    assert popcount_entry(header, b'') == 1
    # the pop_cnt field itself is ignored
    assert popcount_entry(ZERO_HEADER.pack(1, 0, 0, 0xFFFF), b'') == 1
    assert popcount_entry(ZERO_HEADER.pack(3, 2, 0, 0), b'\xff\x01') == 2 + 1 + 9


def test_aligned_zero_entry_occupies_one_line():
    device = _device()
    wal = log_create(device, LogOptions('zero', (0, 4096), aligned=True))
    wal.append(b'\x07' * 40)
    assert wal.tail == 64
    assert device.stats().barriers == 1


def test_log_full():
    device = _device(256)
    wal = log_create(device, LogOptions('zero', (0, 256)))
    with pytest.raises(ValueError):
        wal.append(b'\x01' * 300)
    wal.append(b'\x01' * 200)
    wal.append(b'\x02' * 8)
    assert wal.tail == 256
    with pytest.raises(LogFullError):
        wal.append(b'')
    assert wal.next_lsn == 3


def test_reopen_continues_after_the_valid_prefix():
    device = _device(4096)
    options = LogOptions('zero', (0, 4096))
    wal = log_create(device, options)
    wal.append(b'first')
    wal.append(b'second')
    tail = wal.tail
    # leftovers of an append that never reached its barrier
    device.store(tail, b'\x05' * 10)

    reopened = log_create(device, options)
    assert reopened.tail == tail
    assert reopened.next_lsn == 3
    assert device.read(tail, 10) == bytes(10)

    assert reopened.append(b'third') == 3
    entries, _ = log_recover(device, options)
    assert [e.payload for e in entries] == [b'first', b'second', b'third']


def test_classic_scan_stops_at_a_missing_footer():
    device = _device(4096)
    options = LogOptions('classic', (0, 4096))
    wal = log_create(device, options)
    wal.append(b'\x01' * 20)
    wal.append(b'\x02' * 20)
    # clear the second footer
    device.store(wal.tail - 8, bytes(8))
    entries, next_lsn = log_recover(device, options)
    assert [e.lsn for e in entries] == [1]
    assert next_lsn == 2


def test_zero_scan_stops_at_a_bad_popcount():
    device = _device(4096)
    options = LogOptions('zero', (0, 4096))
    wal = log_create(device, options)
    wal.append(b'\x01' * 20)
    second = wal.tail
    wal.append(b'\x02' * 20)
    device.store(second + ZERO_HEADER.size, b'\x03')
    assert [e.lsn for e in log_recover(device, options)[0]] == [1]


def test_zero_log_fixture():
    image = fixtures.load_fixture('zero_log_3.yaml')
    recovery = fixtures.recover_fixture(image)
    assert [(e.lsn, e.payload) for e in recovery.entries] == [(1, b'\x01'), (2, b'\x03\x03'), (3, b'\xff')]
    assert recovery.next_lsn == 4
    assert fixtures.check_expectation(image, recovery) == []


@pytest.mark.parametrize('aligned', [False, True])
@pytest.mark.parametrize('algo', ALGOS)
def test_appends_are_failure_atomic(algo, aligned):
    report = scenarios.check_log(algo, aligned=aligned, dance_k=4)
    assert report.ok, report.to_text()
    assert report.images_checked > report.crash_points_checked


def test_appends_are_failure_atomic_with_plain_stores():
    report = scenarios.check_log('zero', payload_sizes=(7, 65), flavor='plain')
    assert report.ok, report.to_text()


def test_unaligned_zero_entries_start_on_store_units():
    device = _device(4096)
    wal = log_create(device, LogOptions('zero', (0, 4096)))
    starts = []
    for size in (0, 7, 64, 65, 200):
        starts.append(wal.tail)
        wal.append(b'\x09' * size)
    assert starts == [0, 24, 56, 144, 240]
    assert wal.tail == 464


class DenseZeroLog(ZeroLog):
    """Packs entries at byte granularity, so pop_cnt may straddle two stores"""

    @classmethod
    def entry_span(cls, options, payload_len):
        if options.aligned:
            return super().entry_span(options, payload_len)
        return ZERO_HEADER.size + payload_len


@pytest.mark.parametrize('flavor', ['streaming', 'plain'])
def test_unaligned_zero_log_survives_a_torn_pop_cnt(flavor):
    sizes = (0, 7, 64, 65)
    assert scenarios.check_log('zero', payload_sizes=sizes, flavor=flavor).ok
    # entry 3 starts at byte 55 when packed densely
    report = scenarios.check_log('zero', payload_sizes=sizes, flavor=flavor, cls=DenseZeroLog)
    assert not report.ok


class UnorderedClassicLog(ClassicLog):
    """Writes the footer without waiting for the entry body"""

    def append(self, payload):
        span = self._reserve(payload)
        lsn = self.next_lsn
        start = self.tail
        self._store(start, ENTRY_HEADER.pack(lsn, len(payload), 0) + payload)
        footer_at = start + self.footer_offset(self.options, len(payload))
        self._store(footer_at, FOOTER.pack(lsn))
        self._flush(footer_at, FOOTER.size)
        self.tail = start + span
        self.next_lsn = lsn + 1
        return lsn


class TrustingZeroLog(ZeroLog):
    """Accepts any entry with a plausible lsn"""

    @classmethod
    def entry_valid(cls, header, payload, pop_cnt):
        return True


def test_checker_catches_a_missing_barrier():
    report = scenarios.check_log('classic', payload_sizes=(65, 100), cls=UnorderedClassicLog)
    assert not report.ok


def test_checker_catches_a_missing_validity_check():
    report = scenarios.check_log('zero', payload_sizes=(65, 100), cls=TrustingZeroLog)
    assert not report.ok
    assert any('payload differs' in f.diagnostic for f in report.failures)


def test_failing_images_are_written_as_fixtures(tmp_path):
    report = scenarios.check_log('zero', payload_sizes=(65, 100), cls=TrustingZeroLog)
    paths = scenarios.dump_failures(report, tmp_path / 'failures')
    assert len(paths) == len(report.failures)

    image = fixtures.load_fixture(paths[0])
    assert image.kind == 'log'
    assert image.content == report.failures[0].image.content
    assert image.params['algo'] == 'zero'
    # the real zero log refuses what the trusting one accepted
    recovery = fixtures.recover_fixture(image)
    assert [e.payload for e in recovery.entries] == scenarios.scenario_payloads((65, 100))[:len(recovery.entries)]


def test_only_scenario_reports_can_be_dumped(tmp_path):
    with pytest.raises(ValueError):
        scenarios.dump_failures(CrashReport(CrashMode.exhaustive()), tmp_path)

"""Device image fixtures in YAML

A fixture describes a zero-filled region plus the non-zero segments written
into it, and how to interpret the region (a log or a page store):

    name: zero-log-3
    capacity: 256
    kind: log
    params: {algo: zero, region: [0, 256], aligned: false}
    segments:
      - {offset: 0, hex: "0100..."}
      - {offset: 256, fill: "b2", length: 256}
    expect: {...}

Hex strings must be quoted so YAML keeps them as text.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import yaml

from pmemprims.page_flush import DirectoryEntry, PageStoreConfig, store_recover
from pmemprims.pmem_model import CACHE_LINE_SIZE, DeviceConfig, SimulatedDevice
from pmemprims.wal import LogEntry, LogOptions, log_recover

log = logging.getLogger(__name__)

DATA_DIR = Path(__file__).parent / 'data'
KINDS = ('log', 'page_store')


@dataclass(frozen=True)
class ImageFixture:
    name: str
    capacity: int
    kind: str
    content: bytes = field(repr=False)
    params: Dict[str, Any] = field(default_factory=dict)
    expect: Dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class FixtureRecovery:
    """What recovery found in a fixture

    Log fixtures fill `entries` and `next_lsn`; page store fixtures fill
    `directory`.
    """

    kind: str
    entries: List[LogEntry] = field(default_factory=list)
    next_lsn: int = 0
    directory: Dict[int, DirectoryEntry] = field(default_factory=dict)


def data_path(name: str) -> Path:
    """Path of a fixture shipped with the package"""
    return DATA_DIR / name


def _hex(value: Any, where: str) -> bytes:
    if not isinstance(value, str):
        raise ValueError(f"{where}: hex data must be a quoted string, got {value!r}")
    try:
        return bytes.fromhex(''.join(value.split()))
    except ValueError as e:
        raise ValueError(f"{where}: invalid hex: {e}") from None


def _segment_bytes(segment: Dict[str, Any], where: str) -> bytes:
    if 'hex' in segment:
        return _hex(segment['hex'], where)
    if 'fill' in segment:
        pattern = _hex(segment['fill'], where)
        length = segment.get('length')
        if not pattern or not isinstance(length, int) or length < 0:
            raise ValueError(f"{where}: fill needs a non-empty pattern and a length")
        return (pattern * (length // len(pattern) + 1))[:length]
    raise ValueError(f"{where}: segment needs 'hex' or 'fill'")


def parse_fixture(document: Dict[str, Any], name: str = '<fixture>') -> ImageFixture:
    """Build a fixture from a parsed YAML document

    Raises:
        ValueError: On missing fields, overlapping segments or segments
            outside the region
    """
    if not isinstance(document, dict):
        raise ValueError(f"{name}: fixture must be a mapping")
    capacity = document.get('capacity')
    if not isinstance(capacity, int) or capacity <= 0:
        raise ValueError(f"{name}: capacity must be a positive integer")
    kind = document.get('kind')
    if kind not in KINDS:
        raise ValueError(f"{name}: kind must be one of {', '.join(KINDS)}")

    content = bytearray(capacity)
    written = np.zeros(capacity, dtype=bool)
    for i, segment in enumerate(document.get('segments') or []):
        where = f"{name}: segment {i}"
        offset = segment.get('offset')
        if not isinstance(offset, int) or offset < 0:
            raise ValueError(f"{where}: offset must be a non-negative integer")
        data = _segment_bytes(segment, where)
        end = offset + len(data)
        if end > capacity:
            raise ValueError(f"{where}: [{offset}, {end}) exceeds capacity {capacity}")
        if written[offset:end].any():
            raise ValueError(f"{where}: overlaps an earlier segment")
        written[offset:end] = True
        content[offset:end] = data

    return ImageFixture(
        name=document.get('name', name),
        capacity=capacity,
        kind=kind,
        content=bytes(content),
        params=dict(document.get('params') or {}),
        expect=dict(document.get('expect') or {}),
    )


def load_fixture(path: Union[str, Path]) -> ImageFixture:
    """Read a fixture file

    Args:
        path: YAML file, or the name of a fixture shipped in pmemprims/data

    Raises:
        FileNotFoundError: If the file does not exist
        ValueError: If the file is malformed
    """
    path = Path(path)
    if not path.exists() and not path.is_absolute() and data_path(path.name).exists():
        path = data_path(path.name)
    if not path.exists():
        raise FileNotFoundError(f"Fixture not found: {path}")
    try:
        document = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise ValueError(f"{path}: invalid YAML: {e}") from e
    return parse_fixture(document, path.stem)


def _segments(content: bytes) -> List[Dict[str, Any]]:
    """Non-zero cache-line runs of an image as fixture segments"""
    padded = content + bytes(-len(content) % CACHE_LINE_SIZE)
    lines = np.frombuffer(padded, dtype=np.uint8).reshape(-1, CACHE_LINE_SIZE)
    used = np.flatnonzero(lines.any(axis=1))

    runs: List[Tuple[int, int]] = []
    for line in used:
        line = int(line)
        if runs and runs[-1][1] == line:
            runs[-1] = (runs[-1][0], line + 1)
        else:
            runs.append((line, line + 1))

    segments = []
    for first, last in runs:
        start = first * CACHE_LINE_SIZE
        data = content[start:min(last * CACHE_LINE_SIZE, len(content))]
        if len(set(data)) == 1 and len(data) > CACHE_LINE_SIZE:
            segments.append({'offset': start, 'fill': data[:1].hex(), 'length': len(data)})
        else:
            segments.append({'offset': start, 'hex': data.hex()})
    return segments


def dump_fixture(path: Union[str, Path], content: bytes, kind: str,
                 params: Optional[Dict[str, Any]] = None, name: Optional[str] = None) -> Path:
    """Write an image (for example a failing crash image) as a fixture file"""
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {', '.join(KINDS)}")
    path = Path(path)
    document = {
        'name': name or path.stem,
        'capacity': len(content),
        'kind': kind,
        'params': params or {},
        'segments': _segments(content),
    }
    path.write_text(yaml.safe_dump(document, sort_keys=False))
    log.debug("wrote fixture %s (%d segments)", path, len(document['segments']))
    return path


def fixture_device(fixture: ImageFixture) -> SimulatedDevice:
    return SimulatedDevice(DeviceConfig(capacity=fixture.capacity), fixture.content)


def log_options(fixture: ImageFixture) -> LogOptions:
    params = fixture.params
    region = params.get('region', [0, fixture.capacity])
    return LogOptions(
        algo=params.get('algo', 'zero'),
        region=(int(region[0]), int(region[1])),
        aligned=bool(params.get('aligned', False)),
        dance_k=int(params.get('dance_k', 64)),
    )


def page_store_config(fixture: ImageFixture) -> PageStoreConfig:
    params = fixture.params
    return PageStoreConfig(
        slot_count=int(params['slot_count']),
        page_size=int(params.get('page_size', 16384)),
        mulog_count=int(params.get('mulog_count', 1)),
        base_offset=int(params.get('base_offset', 0)),
    )


def recover_fixture(fixture: ImageFixture) -> FixtureRecovery:
    """Run the matching recovery over a fixture image

    Raises:
        KeyError: If a page store fixture lacks slot_count
        CorruptionError: From page store recovery
    """
    device = fixture_device(fixture)
    if fixture.kind == 'log':
        entries, next_lsn = log_recover(device, log_options(fixture))
        return FixtureRecovery('log', entries=entries, next_lsn=next_lsn)
    _, directory = store_recover(device, page_store_config(fixture))
    return FixtureRecovery('page_store', directory=directory)


def _expected_image(spec: Dict[str, Any], size: int, where: str) -> bytes:
    if 'fill' in spec:
        return _segment_bytes({'fill': spec['fill'], 'length': size}, where)
    return _hex(spec.get('hex', ''), where)


def check_expectation(fixture: ImageFixture, recovery: FixtureRecovery) -> List[str]:
    """Differences between a recovery and the fixture's `expect` block

    Returns:
        One message per mismatch; empty when everything matches
    """
    expect = fixture.expect
    problems: List[str] = []
    if recovery.kind == 'log':
        if 'next_lsn' in expect and recovery.next_lsn != expect['next_lsn']:
            problems.append(f"next lsn {recovery.next_lsn}, expected {expect['next_lsn']}")
        if 'entries' in expect:
            wanted = [(e['lsn'], _hex(e.get('payload', ''), f"entry {e['lsn']}")) for e in expect['entries']]
            found = [(e.lsn, e.payload) for e in recovery.entries]
            if found != wanted:
                problems.append(f"entries {[(l, p.hex()) for l, p in found]}, "
                                f"expected {[(l, p.hex()) for l, p in wanted]}")
        return problems

    wanted_directory = expect.get('directory')
    if wanted_directory is None:
        return problems
    size = page_store_config(fixture).page_size
    if set(recovery.directory) != {int(pid) for pid in wanted_directory}:
        problems.append(f"pids {sorted(recovery.directory)}, expected {sorted(int(p) for p in wanted_directory)}")
    for pid, spec in wanted_directory.items():
        entry = recovery.directory.get(int(pid))
        if entry is None:
            continue
        if entry.slot != spec.get('slot', entry.slot) or entry.pvn != spec.get('pvn', entry.pvn):
            problems.append(f"page {pid}: slot {entry.slot} pvn {entry.pvn}, "
                            f"expected slot {spec.get('slot')} pvn {spec.get('pvn')}")
        if ('fill' in spec or 'hex' in spec) and entry.image != _expected_image(spec, size, f"page {pid}"):
            problems.append(f"page {pid}: image differs from the expected one")
    return problems

"""Memory dump files as ordered, immutable sets of memory regions.

Two container formats are understood:

* raw images: the whole file is a single region based at virtual address 0;
* a minidump subset: the standard 32-byte header and stream directory, with
  memory ranges taken from a Memory64List stream (type 9) or, failing that,
  a MemoryList stream (type 5).  All other streams are ignored.

Both parsers validate every offset against the file bounds before reading,
so malformed input produces a typed error rather than an exception from
slicing or ``struct``.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Sequence

from .errors import (
    BadMagic,
    EmptyInput,
    NoMemoryStream,
    OverlappingRegions,
    Truncated,
)

MAGIC = b"MDMP"
HEADER_LEN = 32
DIR_ENTRY_LEN = 12
STREAM_MEMORY_LIST = 5
STREAM_MEMORY64_LIST = 9

# Caps the whole-file read strategy; desk-scale corpora stay well below this.
MAX_FILE_SIZE = 4 * 1024 * 1024 * 1024

# Value written into the header's version field.  Readers ignore it.
_WRITER_VERSION = 0xA793

_U64_MAX = (1 << 64) - 1


class SourceKind(str, Enum):
    RAW = "raw"
    MINIDUMP = "minidump"


@dataclass(frozen=True)
class MemoryRegion:
    """One contiguous range of process memory.

    ``file_offset`` is where ``data`` sat in the source file, kept so scan
    findings can be located with a hex editor.
    """

    base_va: int
    data: bytes
    file_offset: int

    def __post_init__(self) -> None:
        if not self.data:
            raise ValueError("memory region data must be non-empty")
        if not 0 <= self.base_va <= _U64_MAX:
            raise ValueError(f"base_va {self.base_va:#x} outside 64-bit range")
        if self.file_offset < 0:
            raise ValueError(f"file_offset {self.file_offset} is negative")
        if self.base_va + len(self.data) - 1 > _U64_MAX:
            raise ValueError("region extends past the 64-bit address space")

    @property
    def end_va(self) -> int:
        return self.base_va + len(self.data)


@dataclass(frozen=True)
class Dump:
    """An ordered, non-overlapping set of memory regions."""

    regions: tuple[MemoryRegion, ...]
    source_kind: SourceKind
    source_name: str

    @classmethod
    def from_regions(
        cls,
        regions: Sequence[MemoryRegion],
        source_kind: SourceKind,
        source_name: str,
    ) -> "Dump":
        """Sort regions by base address and reject VA overlaps."""
        ordered = tuple(sorted(regions, key=lambda r: r.base_va))
        for prev, cur in zip(ordered, ordered[1:]):
            if cur.base_va < prev.end_va:
                raise OverlappingRegions(
                    f"{source_name}: region at {cur.base_va:#x} overlaps region "
                    f"[{prev.base_va:#x}, {prev.end_va:#x})"
                )
        return cls(ordered, source_kind, source_name)

    @property
    def total_size(self) -> int:
        return sum(len(r.data) for r in self.regions)


def iter_regions(dump: Dump) -> Iterator[tuple[int, bytes]]:
    """Yield (base_va, data) pairs in ascending base address order."""
    for region in dump.regions:
        yield region.base_va, region.data


def load_raw(data: bytes, name: str) -> Dump:
    """Wrap a flat memory image as a single region based at VA 0."""
    if not data:
        raise EmptyInput(f"{name}: empty input")
    if len(data) > MAX_FILE_SIZE:
        raise Truncated(
            f"{name}: {len(data)} bytes exceeds the {MAX_FILE_SIZE}-byte limit"
        )
    region = MemoryRegion(base_va=0, data=bytes(data), file_offset=0)
    return Dump.from_regions([region], SourceKind.RAW, name)


def _u32(data: bytes, offset: int) -> int:
    return struct.unpack_from("<I", data, offset)[0]


def _u64(data: bytes, offset: int) -> int:
    return struct.unpack_from("<Q", data, offset)[0]


def _require(data: bytes, end: int, name: str, what: str) -> None:
    if end > len(data):
        raise Truncated(f"{name}: {what} extends past end of file ({end} > {len(data)})")


def parse_minidump(data: bytes, name: str) -> Dump:
    """Parse the supported minidump subset into a Dump.

    Prefers a Memory64List stream when both memory stream types are present;
    the 64-bit form is what full-memory dumps carry and what the writer emits.
    """
    if not data:
        raise EmptyInput(f"{name}: empty input")
    if len(data) > MAX_FILE_SIZE:
        raise Truncated(
            f"{name}: {len(data)} bytes exceeds the {MAX_FILE_SIZE}-byte limit"
        )
    if len(data) < len(MAGIC):
        # Too short to hold the magic: only a strict prefix of it is
        # "right format, cut off"; anything else is the wrong format.
        if MAGIC.startswith(data):
            raise Truncated(f"{name}: file shorter than the 4-byte magic")
        raise BadMagic(f"{name}: expected magic {MAGIC!r}")
    if data[:4] != MAGIC:
        raise BadMagic(f"{name}: expected magic {MAGIC!r}, got {data[:4]!r}")
    _require(data, HEADER_LEN, name, "header")

    num_streams = _u32(data, 8)
    dir_rva = _u32(data, 12)
    _require(data, dir_rva + num_streams * DIR_ENTRY_LEN, name, "stream directory")

    mem64: tuple[int, int] | None = None
    mem32: tuple[int, int] | None = None
    for i in range(num_streams):
        entry = dir_rva + i * DIR_ENTRY_LEN
        stream_type = _u32(data, entry)
        data_size = _u32(data, entry + 4)
        rva = _u32(data, entry + 8)
        _require(data, rva + data_size, name, f"stream {i} (type {stream_type})")
        if stream_type == STREAM_MEMORY64_LIST and mem64 is None:
            mem64 = (rva, data_size)
        elif stream_type == STREAM_MEMORY_LIST and mem32 is None:
            mem32 = (rva, data_size)

    if mem64 is not None:
        regions = _parse_memory64_list(data, mem64[0], name)
    elif mem32 is not None:
        regions = _parse_memory_list(data, mem32[0], name)
    else:
        raise NoMemoryStream(f"{name}: no MemoryList or Memory64List stream")
    return Dump.from_regions(regions, SourceKind.MINIDUMP, name)


def _parse_memory64_list(data: bytes, rva: int, name: str) -> list[MemoryRegion]:
    _require(data, rva + 16, name, "Memory64List header")
    count = _u64(data, rva)
    base_rva = _u64(data, rva + 8)
    _require(data, rva + 16 + count * 16, name, "Memory64List descriptor table")

    regions = []
    content = base_rva
    for i in range(count):
        entry = rva + 16 + i * 16
        start_va = _u64(data, entry)
        size = _u64(data, entry + 8)
        if size == 0:
            continue
        _require(data, content + size, name, f"memory range {i} content")
        regions.append(
            MemoryRegion(base_va=start_va, data=data[content : content + size], file_offset=content)
        )
        content += size
    return regions


def _parse_memory_list(data: bytes, rva: int, name: str) -> list[MemoryRegion]:
    _require(data, rva + 4, name, "MemoryList header")
    count = _u32(data, rva)
    _require(data, rva + 4 + count * 16, name, "MemoryList descriptor table")

    regions = []
    for i in range(count):
        entry = rva + 4 + i * 16
        start_va = _u64(data, entry)
        size = _u32(data, entry + 8)
        content = _u32(data, entry + 12)
        if size == 0:
            continue
        _require(data, content + size, name, f"memory range {i} content")
        regions.append(
            MemoryRegion(base_va=start_va, data=data[content : content + size], file_offset=content)
        )
    return regions


def write_minidump(dump: Dump) -> bytes:
    """Serialize regions as a minidump with a single Memory64List stream.

    Layout: header, one directory entry, the Memory64List stream, then all
    region contents back to back.  Putting content last means any truncated
    prefix of the output still fails parsing with a defined error.
    """
    if not dump.regions:
        raise ValueError("cannot write a dump with zero regions")
    count = len(dump.regions)
    stream_rva = HEADER_LEN + DIR_ENTRY_LEN
    stream_size = 16 + count * 16
    base_rva = stream_rva + stream_size

    out = bytearray()
    out += struct.pack(
        "<4sIIIIIQ", MAGIC, _WRITER_VERSION, 1, HEADER_LEN, 0, 0, 0
    )
    out += struct.pack("<III", STREAM_MEMORY64_LIST, stream_size, stream_rva)
    out += struct.pack("<QQ", count, base_rva)
    for region in dump.regions:
        out += struct.pack("<QQ", region.base_va, len(region.data))
    for region in dump.regions:
        out += region.data
    return bytes(out)


def load_dump_bytes(data: bytes, name: str) -> Dump:
    """Parse as minidump when the magic matches, otherwise as a raw image."""
    if data[:4] == MAGIC:
        return parse_minidump(data, name)
    return load_raw(data, name)


def load_dump_file(path: str | os.PathLike[str]) -> Dump:
    """Read a dump file from disk, capping size before the read."""
    path = os.fspath(path)
    size = os.stat(path).st_size
    if size > MAX_FILE_SIZE:
        raise Truncated(f"{path}: {size} bytes exceeds the {MAX_FILE_SIZE}-byte limit")
    with open(path, "rb") as fh:
        data = fh.read()
    return load_dump_bytes(data, path)

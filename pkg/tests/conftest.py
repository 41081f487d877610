"""Shared test helpers and hypothesis configuration."""

from __future__ import annotations

from hypothesis import HealthCheck, settings

from dumpscout import Dump, MemoryRegion, SourceKind

# The sandbox has a single CPU; wall-clock deadlines are too flaky to keep.
settings.register_profile(
    "dumpscout",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("dumpscout")

# Acceptance tests record their verdicts here; the terminal-summary hook
# prints them after the run, outside pytest's output capture.
ACCEPTANCE_RESULTS: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_RESULTS:
        terminalreporter.ensure_newline()
        for n in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(f"ACCEPTANCE {n}: {ACCEPTANCE_RESULTS[n]}")


def make_dump(*datas: bytes, base_va: int = 0x100000, va_gap: int = 0x10000) -> Dump:
    """A raw dump whose regions hold the given byte strings.

    Virtual addresses start at base_va with fixed gaps; file offsets are the
    concatenation offsets, like the raw loader produces.
    """
    regions = []
    file_offset = 0
    va = base_va
    for data in datas:
        regions.append(MemoryRegion(base_va=va, data=data, file_offset=file_offset))
        file_offset += len(data)
        va += max(len(data), 1) + va_gap
        va = (va + 0xFFF) & ~0xFFF
    return Dump.from_regions(regions, source_kind=SourceKind.RAW, source_name="<test>")

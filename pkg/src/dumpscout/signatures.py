"""Byte-signature scanning over memory dumps.

A signature is a short byte pattern (with optional single-byte wildcards)
plus a rule for carving an extraction window around each match: the
``window_len`` bytes after the match end or before the match start.
Printable text runs decoded from the window become credential candidates.

Match semantics are defined by the naive rule "signature s matches region
data at offset o iff every concrete token equals the byte at o+i"; the
implementation here is an optimized equivalent.  Matches are found at every
offset (overlaps included) and never span region boundaries.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    AnchorOutOfRange,
    DuplicateId,
    EmptyNeedle,
    FindingFormatError,
    InvalidPattern,
    SignatureFileError,
)
from .memdump import Dump, MemoryRegion

MIN_PATTERN_LEN = 4
MAX_PATTERN_LEN = 256
MAX_WINDOW_LEN = 65536
DEFAULT_WINDOW_LEN = 300
DEFAULT_MIN_PRINTABLE_RUN = 4

# bytes.find on a concrete run this long beats a numpy sweep; shorter
# anchors produce too many false candidates on random data.
_MIN_ANCHOR_LEN = 4

# Chunk size for the numpy first-pass sweep, in bytes.
_SWEEP_CHUNK = 1 << 25

# Byte frequencies are estimated from a sample this large per region; a
# full histogram of a multi-GiB region would cost more than the scan.
_FREQ_SAMPLE = 1 << 20


class Direction(str, Enum):
    AFTER = "after"
    BEFORE = "before"


class Encoding(str, Enum):
    UTF8 = "utf8"
    UTF16LE = "utf16le"


DEFAULT_ENCODINGS: tuple[Encoding, ...] = (Encoding.UTF8, Encoding.UTF16LE)


@dataclass(frozen=True)
class Signature:
    """A scan rule: pattern, window direction/length, decoding options.

    ``pattern`` tokens are byte values 0..255 or None for a single-byte
    wildcard.  Structural invariants are enforced by :func:`compile`.
    """

    id: str
    pattern: tuple[int | None, ...]
    direction: Direction
    window_len: int = DEFAULT_WINDOW_LEN
    encodings: tuple[Encoding, ...] = DEFAULT_ENCODINGS
    min_printable_run: int = DEFAULT_MIN_PRINTABLE_RUN

    def __post_init__(self) -> None:
        object.__setattr__(self, "pattern", tuple(self.pattern))
        object.__setattr__(self, "encodings", tuple(self.encodings))


@dataclass(frozen=True)
class DecodedCandidate:
    """One printable text run found inside an extraction window."""

    encoding: Encoding
    text: str
    offset_in_window: int


@dataclass(frozen=True)
class Finding:
    """One signature match with its window and decoded candidates."""

    signature_id: str
    region_index: int
    match_va: int
    match_file_offset: int
    window: bytes
    candidates: tuple[DecodedCandidate, ...]


# --- pattern text syntax -------------------------------------------------


def parse_pattern(text: str) -> tuple[int | None, ...]:
    """Parse "80 00 04 ?? 00" into pattern tokens (None = wildcard)."""
    tokens: list[int | None] = []
    for part in text.split():
        if part == "??":
            tokens.append(None)
            continue
        if len(part) != 2:
            raise InvalidPattern(f"pattern token {part!r} is not a 2-digit hex byte or '??'")
        try:
            tokens.append(int(part, 16))
        except ValueError:
            raise InvalidPattern(f"pattern token {part!r} is not a 2-digit hex byte or '??'") from None
    return tuple(tokens)


def format_pattern(tokens: Iterable[int | None]) -> str:
    return " ".join("??" if t is None else f"{t:02x}" for t in tokens)


# --- compilation ---------------------------------------------------------


def _validate_signature(sig: Signature) -> None:
    if not sig.id:
        raise InvalidPattern("signature id must be non-empty")
    n = len(sig.pattern)
    if not MIN_PATTERN_LEN <= n <= MAX_PATTERN_LEN:
        raise InvalidPattern(
            f"signature {sig.id!r}: pattern length {n} outside "
            f"[{MIN_PATTERN_LEN}, {MAX_PATTERN_LEN}]"
        )
    concrete = 0
    for i, tok in enumerate(sig.pattern):
        if tok is None:
            continue
        if not isinstance(tok, int) or not 0 <= tok <= 255:
            raise InvalidPattern(f"signature {sig.id!r}: token {i} is not a byte value or None")
        concrete += 1
    if concrete * 2 < n:
        raise InvalidPattern(
            f"signature {sig.id!r}: only {concrete} of {n} tokens are concrete; "
            "at least half must be"
        )
    if not 1 <= sig.window_len <= MAX_WINDOW_LEN:
        raise InvalidPattern(
            f"signature {sig.id!r}: window_len {sig.window_len} outside [1, {MAX_WINDOW_LEN}]"
        )
    if not isinstance(sig.direction, Direction):
        raise InvalidPattern(f"signature {sig.id!r}: direction must be 'after' or 'before'")
    if not sig.encodings:
        raise InvalidPattern(f"signature {sig.id!r}: encodings must be non-empty")
    seen: set[Encoding] = set()
    for enc in sig.encodings:
        if not isinstance(enc, Encoding):
            raise InvalidPattern(f"signature {sig.id!r}: unknown encoding {enc!r}")
        if enc in seen:
            raise InvalidPattern(f"signature {sig.id!r}: duplicate encoding {enc.value}")
        seen.add(enc)
    if sig.min_printable_run < 1:
        raise InvalidPattern(f"signature {sig.id!r}: min_printable_run must be >= 1")


def _longest_concrete_run(pattern: Sequence[int | None]) -> tuple[int, bytes]:
    """Return (offset, bytes) of the longest run of concrete tokens."""
    best_off, best_len = 0, 0
    i = 0
    n = len(pattern)
    while i < n:
        if pattern[i] is None:
            i += 1
            continue
        j = i
        while j < n and pattern[j] is not None:
            j += 1
        if j - i > best_len:
            best_off, best_len = i, j - i
        i = j
    return best_off, bytes(pattern[best_off : best_off + best_len])


@dataclass(frozen=True)
class _CompiledSignature:
    signature: Signature
    length: int
    # All concrete (offset, value) pairs, for verification passes.
    concrete_offs: np.ndarray
    concrete_vals: np.ndarray
    # Longest concrete run usable as a bytes.find anchor, if long enough.
    anchor_off: int
    anchor: bytes
    # Concrete pairs outside the anchor run.
    rest_offs: np.ndarray
    rest_vals: np.ndarray


def _compile_one(sig: Signature) -> _CompiledSignature:
    offs = np.array([i for i, t in enumerate(sig.pattern) if t is not None], dtype=np.int64)
    vals = np.array([t for t in sig.pattern if t is not None], dtype=np.uint8)
    run_off, run = _longest_concrete_run(sig.pattern)
    if len(run) >= _MIN_ANCHOR_LEN:
        outside = (offs < run_off) | (offs >= run_off + len(run))
        return _CompiledSignature(
            sig, len(sig.pattern), offs, vals, run_off, run, offs[outside], vals[outside]
        )
    return _CompiledSignature(
        sig, len(sig.pattern), offs, vals, -1, b"", offs, vals
    )


class Matcher:
    """An immutable compiled signature set; share freely across threads."""

    def __init__(self, compiled: tuple[_CompiledSignature, ...]):
        self._compiled = compiled

    @property
    def signatures(self) -> tuple[Signature, ...]:
        return tuple(cs.signature for cs in self._compiled)

    def __len__(self) -> int:
        return len(self._compiled)


def compile(signatures: Sequence[Signature]) -> Matcher:  # noqa: A001 - public API name
    """Validate signatures and build a matcher for :func:`scan`."""
    seen_ids: set[str] = set()
    compiled = []
    for sig in signatures:
        _validate_signature(sig)
        if sig.id in seen_ids:
            raise DuplicateId(f"duplicate signature id {sig.id!r}")
        seen_ids.add(sig.id)
        compiled.append(_compile_one(sig))
    return Matcher(tuple(compiled))


# --- scanning ------------------------------------------------------------


def _anchor_candidates(data: bytes, cs: _CompiledSignature, limit: int) -> np.ndarray:
    """Candidate match positions from overlapping finds of the anchor run."""
    positions = []
    start = 0
    while True:
        hit = data.find(cs.anchor, start)
        if hit < 0:
            break
        pos = hit - cs.anchor_off
        if 0 <= pos <= limit:
            positions.append(pos)
        start = hit + 1
    return np.array(positions, dtype=np.int64)


def _sweep_candidates(
    arr: np.ndarray, counts: np.ndarray, cs: _CompiledSignature, limit: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Candidate positions by sweeping for the rarest concrete byte.

    Returns (candidates, remaining_offs, remaining_vals) still to verify.
    """
    order = np.argsort(counts[cs.concrete_vals], kind="stable")
    first = int(order[0])
    off0 = int(cs.concrete_offs[first])
    val0 = int(cs.concrete_vals[first])
    chunks = []
    for chunk_start in range(0, limit + 1, _SWEEP_CHUNK):
        chunk_end = min(chunk_start + _SWEEP_CHUNK, limit + 1)
        hits = np.flatnonzero(arr[chunk_start + off0 : chunk_end + off0] == val0)
        if hits.size:
            chunks.append(hits.astype(np.int64) + chunk_start)
    if chunks:
        cand = np.concatenate(chunks)
    else:
        cand = np.empty(0, dtype=np.int64)
    keep = np.delete(np.arange(len(cs.concrete_offs)), first)
    # Verify rarest-first so each pass prunes as much as possible.
    keep = keep[np.argsort(counts[cs.concrete_vals[keep]], kind="stable")]
    return cand, cs.concrete_offs[keep], cs.concrete_vals[keep]


def _match_positions(
    data: bytes, arr: np.ndarray, counts: np.ndarray, cs: _CompiledSignature
) -> list[int]:
    limit = len(data) - cs.length
    if limit < 0:
        return []
    if cs.anchor_off >= 0:
        cand = _anchor_candidates(data, cs, limit)
        rest_offs, rest_vals = cs.rest_offs, cs.rest_vals
    else:
        cand, rest_offs, rest_vals = _sweep_candidates(arr, counts, cs, limit)
    for off, val in zip(rest_offs, rest_vals):
        if not cand.size:
            break
        cand = cand[arr[cand + int(off)] == val]
    return cand.tolist()


def _carve_window(data: bytes, pos: int, cs: _CompiledSignature) -> tuple[int, bytes]:
    """Window start offset and bytes for a match at pos."""
    sig = cs.signature
    if sig.direction is Direction.AFTER:
        start = pos + cs.length
        return start, data[start : start + sig.window_len]
    start = max(0, pos - sig.window_len)
    return start, data[start:pos]


def scan(dump: Dump, matcher: Matcher) -> list[Finding]:
    """Find every signature match in every region, with decoded windows.

    Output is ordered by (region_index, match_file_offset, signature_id)
    and is a pure function of the dump bytes and the signature set.
    """
    findings: list[Finding] = []
    if not len(matcher):
        return findings
    for region_index, region in enumerate(dump.regions):
        data = region.data
        arr = np.frombuffer(data, dtype=np.uint8)
        counts = np.bincount(arr[:_FREQ_SAMPLE], minlength=256)
        for cs in matcher._compiled:
            sig = cs.signature
            for pos in _match_positions(data, arr, counts, cs):
                _, window = _carve_window(data, pos, cs)
                findings.append(
                    Finding(
                        signature_id=sig.id,
                        region_index=region_index,
                        match_va=region.base_va + pos,
                        match_file_offset=region.file_offset + pos,
                        window=window,
                        candidates=tuple(
                            decode_candidates(window, sig.encodings, sig.min_printable_run)
                        ),
                    )
                )
    findings.sort(key=lambda f: (f.region_index, f.match_file_offset, f.signature_id))
    return findings


def count_occurrences(dump: Dump, needle: bytes) -> int:
    """Non-overlapping left-to-right occurrences of needle across regions."""
    if not needle:
        raise EmptyNeedle("cannot count occurrences of an empty needle")
    return sum(region.data.count(needle) for region in dump.regions)


def extract_window(
    region: MemoryRegion, anchor: int, direction: Direction, n: int
) -> bytes:
    """The n bytes after (or before) anchor, clamped at the region edge."""
    if n < 1:
        raise ValueError(f"window length must be positive, got {n}")
    if not 0 <= anchor <= len(region.data):
        raise AnchorOutOfRange(
            f"anchor {anchor} outside region of {len(region.data)} bytes"
        )
    if direction is Direction.AFTER:
        return region.data[anchor : anchor + n]
    return region.data[max(0, anchor - n) : anchor]


# --- candidate decoding --------------------------------------------------


@lru_cache(maxsize=1 << 16)
def _is_printable(ch: str) -> bool:
    # Letters, numbers, punctuation, symbols, and the plain space; excludes
    # control, separator, and mark categories that never appear in typed
    # credentials.
    return ch == " " or unicodedata.category(ch)[0] in "LNPS"


_UTF8_LEN = [0] * 256
for _b in range(0x00, 0x80):
    _UTF8_LEN[_b] = 1
for _b in range(0xC2, 0xE0):
    _UTF8_LEN[_b] = 2
for _b in range(0xE0, 0xF0):
    _UTF8_LEN[_b] = 3
for _b in range(0xF0, 0xF5):
    _UTF8_LEN[_b] = 4
del _b


def _utf8_runs(window: bytes, min_run: int) -> Iterator[tuple[int, str]]:
    """Maximal printable UTF-8 runs of at least min_run characters."""
    n = len(window)
    i = 0
    while i < n:
        j = i
        chars: list[str] = []
        while j < n:
            size = _UTF8_LEN[window[j]]
            if size == 0 or j + size > n:
                break
            try:
                ch = window[j : j + size].decode("utf-8")
            except UnicodeDecodeError:
                break
            if not _is_printable(ch):
                break
            chars.append(ch)
            j += size
        if len(chars) >= min_run:
            yield i, "".join(chars)
        i = j + 1 if j > i else i + 1


def _utf16_unit(window: bytes, off: int) -> int:
    return window[off] | (window[off + 1] << 8)


def _utf16le_runs(window: bytes, min_run: int) -> Iterator[tuple[int, str]]:
    """Maximal printable UTF-16LE runs at even offsets within the window."""
    n = len(window)
    i = 0
    while i + 1 < n:
        j = i
        chars: list[str] = []
        while j + 1 < n:
            unit = _utf16_unit(window, j)
            if 0xDC00 <= unit <= 0xDFFF:
                break
            if 0xD800 <= unit <= 0xDBFF:
                if j + 3 >= n:
                    break
                low = _utf16_unit(window, j + 2)
                if not 0xDC00 <= low <= 0xDFFF:
                    break
                ch = chr(0x10000 + ((unit - 0xD800) << 10) + (low - 0xDC00))
                if not _is_printable(ch):
                    break
                chars.append(ch)
                j += 4
                continue
            ch = chr(unit)
            if not _is_printable(ch):
                break
            chars.append(ch)
            j += 2
        if len(chars) >= min_run:
            yield i, "".join(chars)
        i = j + 2 if j > i else i + 2


def decode_candidates(
    window: bytes, encodings: Sequence[Encoding], min_run: int
) -> list[DecodedCandidate]:
    """Printable text runs in the window, ordered by offset.

    Runs shorter than min_run characters are dropped; duplicate
    (encoding, offset, text) triples are removed.  Ties at one offset keep
    the order of the encodings argument.
    """
    out: list[DecodedCandidate] = []
    seen: set[tuple[Encoding, int, str]] = set()
    for enc in encodings:
        runs = _utf8_runs(window, min_run) if enc is Encoding.UTF8 else _utf16le_runs(window, min_run)
        for off, text in runs:
            key = (enc, off, text)
            if key not in seen:
                seen.add(key)
                out.append(DecodedCandidate(encoding=enc, text=text, offset_in_window=off))
    out.sort(key=lambda c: c.offset_in_window)
    return out


def encode_text(text: str, encoding: Encoding) -> bytes:
    """Encode text the way the decoders expect to find it."""
    return text.encode("utf-8" if encoding is Encoding.UTF8 else "utf-16-le")


# --- signature set files -------------------------------------------------


def signature_to_dict(sig: Signature) -> dict:
    return {
        "id": sig.id,
        "pattern": format_pattern(sig.pattern),
        "direction": sig.direction.value,
        "window_len": sig.window_len,
        "encodings": [e.value for e in sig.encodings],
        "min_printable_run": sig.min_printable_run,
    }


def signature_from_dict(obj: object) -> Signature:
    """Build a Signature from one JSON object; unknown keys are ignored."""
    if not isinstance(obj, dict):
        raise SignatureFileError(f"signature entry must be an object, got {type(obj).__name__}")
    try:
        sig_id = obj["id"]
        pattern_text = obj["pattern"]
        direction_text = obj["direction"]
    except KeyError as exc:
        raise SignatureFileError(f"signature entry missing required key {exc.args[0]!r}") from None
    if not isinstance(sig_id, str) or not isinstance(pattern_text, str):
        raise SignatureFileError("signature id and pattern must be strings")
    try:
        direction = Direction(direction_text)
    except ValueError:
        raise SignatureFileError(
            f"signature {sig_id!r}: direction must be 'after' or 'before', got {direction_text!r}"
        ) from None
    window_len = obj.get("window_len", DEFAULT_WINDOW_LEN)
    if not isinstance(window_len, int) or isinstance(window_len, bool):
        raise SignatureFileError(f"signature {sig_id!r}: window_len must be an integer")
    min_run = obj.get("min_printable_run", DEFAULT_MIN_PRINTABLE_RUN)
    if not isinstance(min_run, int) or isinstance(min_run, bool):
        raise SignatureFileError(f"signature {sig_id!r}: min_printable_run must be an integer")
    encodings_raw = obj.get("encodings", [e.value for e in DEFAULT_ENCODINGS])
    if not isinstance(encodings_raw, list):
        raise SignatureFileError(f"signature {sig_id!r}: encodings must be a list")
    encodings = []
    for item in encodings_raw:
        try:
            encodings.append(Encoding(item))
        except ValueError:
            raise SignatureFileError(
                f"signature {sig_id!r}: unknown encoding {item!r}"
            ) from None
    return Signature(
        id=sig_id,
        pattern=parse_pattern(pattern_text),
        direction=direction,
        window_len=window_len,
        encodings=tuple(encodings),
        min_printable_run=min_run,
    )


def parse_signature_set(text: str) -> list[Signature]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SignatureFileError(f"signature set is not valid JSON: {exc}") from None
    if not isinstance(doc, list):
        raise SignatureFileError("signature set must be a JSON list")
    return [signature_from_dict(entry) for entry in doc]


def load_signature_file(path: str) -> list[Signature]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_signature_set(fh.read())


# --- findings serialization ---------------------------------------------


def finding_to_dict(finding: Finding) -> dict:
    return {
        "signature_id": finding.signature_id,
        "region_index": finding.region_index,
        "match_va": finding.match_va,
        "match_file_offset": finding.match_file_offset,
        "window": finding.window.hex(),
        "candidates": [
            {"encoding": c.encoding.value, "text": c.text, "offset_in_window": c.offset_in_window}
            for c in finding.candidates
        ],
    }


def finding_from_dict(obj: object) -> Finding:
    if not isinstance(obj, dict):
        raise FindingFormatError(f"finding must be an object, got {type(obj).__name__}")
    try:
        candidates = tuple(
            DecodedCandidate(
                encoding=Encoding(c["encoding"]),
                text=c["text"],
                offset_in_window=c["offset_in_window"],
            )
            for c in obj["candidates"]
        )
        finding = Finding(
            signature_id=obj["signature_id"],
            region_index=obj["region_index"],
            match_va=obj["match_va"],
            match_file_offset=obj["match_file_offset"],
            window=bytes.fromhex(obj["window"]),
            candidates=candidates,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FindingFormatError(f"malformed finding entry: {exc}") from None
    for name in ("region_index", "match_va", "match_file_offset"):
        if not isinstance(getattr(finding, name), int):
            raise FindingFormatError(f"finding field {name} must be an integer")
    if not isinstance(finding.signature_id, str):
        raise FindingFormatError("finding field signature_id must be a string")
    return finding


def findings_to_jsonl(findings: Iterable[Finding]) -> str:
    lines = [
        json.dumps(finding_to_dict(f), ensure_ascii=False, separators=(",", ":"))
        for f in findings
    ]
    return "".join(line + "\n" for line in lines)


def parse_findings_jsonl(text: str) -> list[Finding]:
    findings = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FindingFormatError(f"line {lineno}: not valid JSON: {exc}") from None
        findings.append(finding_from_dict(obj))
    return findings

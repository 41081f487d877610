"""Signature compilation, scanning, decoding, and serialization."""

from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dumpscout import (
    AnchorOutOfRange,
    DecodedCandidate,
    Direction,
    DuplicateId,
    EmptyNeedle,
    Encoding,
    FindingFormatError,
    InvalidPattern,
    MemoryRegion,
    Signature,
    SignatureFileError,
    compile,
    count_occurrences,
    decode_candidates,
    extract_window,
    scan,
)
from dumpscout.signatures import (
    DEFAULT_ENCODINGS,
    DEFAULT_MIN_PRINTABLE_RUN,
    DEFAULT_WINDOW_LEN,
    MAX_WINDOW_LEN,
    encode_text,
    findings_to_jsonl,
    format_pattern,
    parse_findings_jsonl,
    parse_pattern,
    parse_signature_set,
    signature_from_dict,
    signature_to_dict,
)

from conftest import make_dump
from naive_oracle import (
    naive_count_occurrences,
    naive_decode_candidates,
    naive_match_positions,
    naive_scan,
)


def sig(pattern: str, direction: str = "after", **kw) -> Signature:
    return Signature(
        id=kw.pop("id", "s"),
        pattern=parse_pattern(pattern),
        direction=Direction(direction),
        **kw,
    )


# --- pattern text syntax -------------------------------------------------


def test_parse_pattern():
    assert parse_pattern("80 00 04 ?? 00") == (0x80, 0x00, 0x04, None, 0x00)
    assert parse_pattern("") == ()
    assert parse_pattern("ff FE Aa") == (0xFF, 0xFE, 0xAA)


@pytest.mark.parametrize("bad", ["8", "080", "zz", "8g", "0x80", "??0", "80,00"])
def test_parse_pattern_rejects_bad_tokens(bad):
    with pytest.raises(InvalidPattern):
        parse_pattern(bad)


@given(st.lists(st.one_of(st.none(), st.integers(0, 255)), max_size=20))
def test_pattern_text_round_trip(tokens):
    assert parse_pattern(format_pattern(tokens)) == tuple(tokens)


# --- compilation and validation ------------------------------------------


def test_signature_defaults():
    s = sig("80 00 04 00")
    assert s.window_len == DEFAULT_WINDOW_LEN == 300
    assert s.encodings == DEFAULT_ENCODINGS == (Encoding.UTF8, Encoding.UTF16LE)
    assert s.min_printable_run == DEFAULT_MIN_PRINTABLE_RUN == 4


def test_compile_accepts_half_concrete():
    matcher = compile([sig("80 ?? 04 ??")])
    assert len(matcher) == 1


@pytest.mark.parametrize(
    "bad",
    [
        sig("80 00 04"),  # too short
        sig(" ".join(["80"] * 257)),  # too long
        sig("80 ?? ?? ??"),  # under half concrete
        sig("80 00 04 00", window_len=0),
        sig("80 00 04 00", window_len=MAX_WINDOW_LEN + 1),
        sig("80 00 04 00", encodings=()),
        sig("80 00 04 00", encodings=(Encoding.UTF8, Encoding.UTF8)),
        sig("80 00 04 00", min_printable_run=0),
        sig("80 00 04 00", id=""),
    ],
)
def test_compile_rejects_invalid(bad):
    with pytest.raises(InvalidPattern):
        compile([bad])


def test_compile_rejects_duplicate_ids():
    with pytest.raises(DuplicateId):
        compile([sig("80 00 04 00", id="x"), sig("11 22 33 44", id="x")])


def test_window_len_bounds_are_inclusive():
    compile([sig("80 00 04 00", window_len=1), sig("80 00 04 00", id="t", window_len=MAX_WINDOW_LEN)])


# --- matching ------------------------------------------------------------


def test_prefix_signature_extracts_following_password():
    data = b"\x00\x00\x80\x00\x04\x00" + b"hunter2" + b"\x00" * 20
    findings = scan(make_dump(data), compile([sig("80 00 04 00")]))
    assert len(findings) == 1
    f = findings[0]
    assert f.match_file_offset == 2
    assert f.match_va == 0x100000 + 2
    assert f.window.startswith(b"hunter2\x00")
    assert any(c.encoding is Encoding.UTF8 and c.text == "hunter2" for c in f.candidates)


def test_before_signature_window_precedes_match():
    data = b"\x00" * 8 + b"hunter2" + b"\xde\xad\xbe\xef" + b"\x00" * 8
    findings = scan(make_dump(data), compile([sig("de ad be ef", "before", window_len=7)]))
    assert len(findings) == 1
    assert findings[0].window == b"hunter2"
    assert any(c.text == "hunter2" for c in findings[0].candidates)


def test_wildcards_match_any_byte():
    matcher = compile([sig("80 ?? 04 00")])
    hits = scan(make_dump(b"\x80\xff\x04\x00" + b"\x80\x00\x05\x00" + b"\x80\x11\x04\x00"), matcher)
    assert [f.match_file_offset for f in hits] == [0, 8]


def test_overlapping_matches_all_reported():
    data = b"\x61" * 6  # pattern aaaa matches at 0, 1, 2
    findings = scan(make_dump(data), compile([sig("61 61 61 61")]))
    assert [f.match_file_offset for f in findings] == [0, 1, 2]


def test_matches_do_not_cross_region_boundaries():
    matcher = compile([sig("11 22 33 44")])
    split = scan(make_dump(b"\x00\x11\x22", b"\x33\x44\x00"), matcher)
    assert split == []
    joined = scan(make_dump(b"\x00\x11\x22\x33\x44\x00"), matcher)
    assert len(joined) == 1


def test_window_clamped_at_region_end():
    data = b"\x80\x00\x04\x00" + b"tail"
    findings = scan(make_dump(data), compile([sig("80 00 04 00", window_len=100)]))
    assert findings[0].window == b"tail"


def test_window_clamped_at_region_start():
    data = b"hi" + b"\xde\xad\xbe\xef"
    findings = scan(make_dump(data), compile([sig("de ad be ef", "before", window_len=100)]))
    assert findings[0].window == b"hi"


def test_zero_signatures_scan_is_empty():
    assert scan(make_dump(b"\x00" * 64), compile([])) == []


def test_findings_sorted_and_deterministic():
    rng = random.Random(7)
    data = bytes(rng.randrange(256) for _ in range(4096))
    matcher = compile(
        [sig("80 ?? 04 00", id="b"), sig("80 00 04 00", id="a"), sig("?? 00 04 ??", id="c")]
    )
    dump = make_dump(data, data)
    first = scan(dump, matcher)
    assert first == scan(dump, matcher)
    keys = [(f.region_index, f.match_file_offset, f.signature_id) for f in first]
    assert keys == sorted(keys)


# --- scan equivalence with the naive oracle ------------------------------


def _random_signature(rng: random.Random, ident: str) -> Signature:
    n = rng.randrange(4, 12)
    # Roughly a third wildcards, capped to keep patterns half concrete.
    tokens: list[int | None] = [rng.randrange(256) for _ in range(n)]
    for i in rng.sample(range(n), k=min(n // 3, n // 2)):
        tokens[i] = None
    return Signature(
        id=ident,
        pattern=tuple(tokens),
        direction=rng.choice([Direction.AFTER, Direction.BEFORE]),
        window_len=rng.choice([1, 7, 32, 300]),
        encodings=rng.choice([(Encoding.UTF8,), (Encoding.UTF16LE,), DEFAULT_ENCODINGS]),
        min_printable_run=rng.choice([1, 2, 4]),
    )


def _plant(data: bytearray, rng: random.Random, sig_: Signature) -> None:
    concrete = bytes(rng.randrange(256) if t is None else t for t in sig_.pattern)
    for _ in range(rng.randrange(1, 4)):
        pos = rng.randrange(0, len(data) - len(concrete))
        data[pos : pos + len(concrete)] = concrete


@pytest.mark.parametrize("seed", range(8))
def test_scan_equals_naive_oracle(seed):
    rng = random.Random(seed)
    signatures = [_random_signature(rng, f"sig{i}") for i in range(rng.randrange(1, 5))]
    blobs = []
    for _ in range(rng.randrange(1, 4)):
        blob = bytearray(rng.randbytes(rng.randrange(64, 2048)))
        for sig_ in signatures:
            if rng.random() < 0.8:
                _plant(blob, rng, sig_)
        blobs.append(bytes(blob))
    dump = make_dump(*blobs)
    assert scan(dump, compile(signatures)) == naive_scan(dump, signatures)


@given(
    data=st.binary(min_size=0, max_size=300),
    tokens=st.lists(st.one_of(st.integers(0, 3), st.none()), min_size=4, max_size=6).filter(
        lambda t: 2 * sum(x is not None for x in t) >= len(t)
    ),
)
@settings(max_examples=120)
def test_match_positions_equal_naive(data, tokens):
    # A tiny alphabet makes accidental matches common.
    data = bytes(b & 3 for b in data)
    s = Signature(id="t", pattern=tuple(tokens), direction=Direction.AFTER)
    found = [f.match_file_offset for f in scan(make_dump(data or b"\xff"), compile([s]))]
    assert found == naive_match_positions(data or b"\xff", tokens)


# --- occurrence counting -------------------------------------------------


def test_count_occurrences_sums_regions():
    dump = make_dump(b"xKEYx" * 3, b"KEYKEY")
    assert count_occurrences(dump, b"KEY") == 5


def test_count_occurrences_non_overlapping():
    assert count_occurrences(make_dump(b"aaaa"), b"aa") == 2
    assert count_occurrences(make_dump(b"aaa"), b"aa") == 1


def test_count_occurrences_empty_needle():
    with pytest.raises(EmptyNeedle):
        count_occurrences(make_dump(b"abc"), b"")


@given(data=st.binary(min_size=1, max_size=200), needle=st.binary(min_size=1, max_size=4))
def test_count_occurrences_equals_naive(data, needle):
    data = bytes(b & 1 for b in data)
    needle = bytes(b & 1 for b in needle)
    dump = make_dump(data)
    assert count_occurrences(dump, needle) == naive_count_occurrences(dump, needle)


# --- window extraction ---------------------------------------------------


def test_extract_window_after_and_before():
    region = MemoryRegion(base_va=0, data=b"0123456789", file_offset=0)
    assert extract_window(region, 4, Direction.AFTER, 3) == b"456"
    assert extract_window(region, 4, Direction.BEFORE, 3) == b"123"
    assert extract_window(region, 0, Direction.BEFORE, 5) == b""
    assert extract_window(region, 10, Direction.AFTER, 5) == b""
    assert extract_window(region, 8, Direction.AFTER, 100) == b"89"
    assert extract_window(region, 2, Direction.BEFORE, 100) == b"01"


def test_extract_window_anchor_bounds():
    region = MemoryRegion(base_va=0, data=b"0123", file_offset=0)
    with pytest.raises(AnchorOutOfRange):
        extract_window(region, -1, Direction.AFTER, 1)
    with pytest.raises(AnchorOutOfRange):
        extract_window(region, 5, Direction.AFTER, 1)
    with pytest.raises(ValueError):
        extract_window(region, 0, Direction.AFTER, 0)


# --- candidate decoding --------------------------------------------------


def test_decode_utf8_run():
    got = decode_candidates(b"\x00hunter2\x00junk\x07", [Encoding.UTF8], 4)
    assert (
        DecodedCandidate(encoding=Encoding.UTF8, text="hunter2", offset_in_window=1) in got
    )
    assert any(c.text == "junk" for c in got)


def test_decode_utf16le_run():
    window = "hunter2".encode("utf-16-le")
    got = decode_candidates(window, [Encoding.UTF16LE], 4)
    assert got == [DecodedCandidate(encoding=Encoding.UTF16LE, text="hunter2", offset_in_window=0)]


def test_runs_split_at_nul_and_nonprintable():
    got = decode_candidates(b"alpha\x00beta\x07gamma", [Encoding.UTF8], 4)
    assert [c.text for c in got] == ["alpha", "beta", "gamma"]


def test_min_run_counts_characters_not_bytes():
    euro4 = ("€" * 4).encode("utf-8")  # 12 bytes, 4 characters
    got = decode_candidates(euro4, [Encoding.UTF8], 4)
    assert [c.text for c in got] == ["€" * 4]
    assert decode_candidates(("€" * 3).encode("utf-8"), [Encoding.UTF8], 4) == []


def test_space_is_printable_but_other_separators_are_not():
    got = decode_candidates(b"pass word", [Encoding.UTF8], 4)
    assert [c.text for c in got] == ["pass word"]
    nbsp = "pass word".encode("utf-8")
    assert [c.text for c in decode_candidates(nbsp, [Encoding.UTF8], 4)] == ["pass", "word"]


def test_utf16_surrogate_pair_is_one_character():
    text = "ok\U0001f600go"  # 5 characters, 12 bytes in UTF-16LE
    got = decode_candidates(text.encode("utf-16-le"), [Encoding.UTF16LE], 5)
    assert [c.text for c in got] == [text]


def test_candidates_ordered_by_offset():
    window = b"firstrun\x00\x00" + "second".encode("utf-16-le")
    got = decode_candidates(window, list(DEFAULT_ENCODINGS), 4)
    offsets = [c.offset_in_window for c in got]
    assert offsets == sorted(offsets)
    assert ("firstrun", Encoding.UTF8) == (got[0].text, got[0].encoding)


_printable_text = st.text(
    alphabet=st.characters(
        whitelist_categories=("L", "N", "P", "S"), whitelist_characters=" "
    ),
    min_size=4,
    max_size=20,
)


@given(text=_printable_text, enc=st.sampled_from(list(DEFAULT_ENCODINGS)))
@settings(max_examples=150)
def test_encode_decode_round_trip(text, enc):
    got = decode_candidates(encode_text(text, enc), [enc], 4)
    assert any(c.text == text and c.offset_in_window == 0 for c in got)


@given(window=st.binary(max_size=80), min_run=st.sampled_from([1, 2, 4, 8]))
@settings(max_examples=200)
def test_decode_equals_naive(window, min_run):
    assert decode_candidates(window, list(DEFAULT_ENCODINGS), min_run) == naive_decode_candidates(
        window, DEFAULT_ENCODINGS, min_run
    )


@given(window=st.binary(max_size=60))
def test_decode_mostly_text_equals_naive(window):
    # Bias toward ASCII-ish bytes so long runs and edge splits are common.
    window = bytes(b | 0x20 if b < 0x80 else b for b in window)
    assert decode_candidates(window, list(DEFAULT_ENCODINGS), 2) == naive_decode_candidates(
        window, DEFAULT_ENCODINGS, 2
    )


# --- signature set files -------------------------------------------------


def test_signature_dict_round_trip():
    s = sig("80 ?? 04 00", "before", window_len=64, encodings=(Encoding.UTF8,), min_printable_run=6)
    assert signature_from_dict(signature_to_dict(s)) == s


def test_signature_from_dict_defaults_and_unknown_keys():
    s = signature_from_dict(
        {"id": "x", "pattern": "80 00 04 00", "direction": "after", "comment": "ignored"}
    )
    assert s.window_len == DEFAULT_WINDOW_LEN
    assert s.encodings == DEFAULT_ENCODINGS
    assert s.min_printable_run == DEFAULT_MIN_PRINTABLE_RUN


@pytest.mark.parametrize(
    "broken",
    [
        "not json",
        '{"id": "x"}',  # not a list
        '[{"pattern": "80 00 04 00", "direction": "after"}]',  # missing id
        '[{"id": "x", "pattern": "80 00 04 00", "direction": "sideways"}]',
        '[{"id": "x", "pattern": "80 00 04 00", "direction": "after", "window_len": "big"}]',
        '[{"id": "x", "pattern": "80 00 04 00", "direction": "after", "encodings": "utf8"}]',
        '[{"id": "x", "pattern": "80 00 04 00", "direction": "after", "encodings": ["ebcdic"]}]',
        "[42]",
    ],
)
def test_parse_signature_set_rejects_malformed(broken):
    with pytest.raises(SignatureFileError):
        parse_signature_set(broken)


def test_parse_signature_set_round_trip():
    sigs = [sig("80 00 04 ?? 00", id="a"), sig("de ad be ef", "before", id="b")]
    import json

    text = json.dumps([signature_to_dict(s) for s in sigs])
    assert parse_signature_set(text) == sigs


# --- findings serialization ----------------------------------------------


def test_findings_jsonl_round_trip():
    data = b"\x00\x00\x80\x00\x04\x00" + b"hunter2" + b"\x00" * 20
    findings = scan(make_dump(data), compile([sig("80 00 04 00")]))
    assert parse_findings_jsonl(findings_to_jsonl(findings)) == findings


def test_findings_jsonl_blank_lines_ignored():
    assert parse_findings_jsonl("\n\n") == []


@pytest.mark.parametrize(
    "line",
    [
        "junk",
        '{"signature_id": "s"}',
        '{"signature_id": 5, "region_index": 0, "match_va": 0, '
        '"match_file_offset": 0, "window": "", "candidates": []}',
        '{"signature_id": "s", "region_index": 0, "match_va": 0, '
        '"match_file_offset": 0, "window": "zz", "candidates": []}',
    ],
)
def test_findings_jsonl_rejects_malformed(line):
    with pytest.raises(FindingFormatError):
        parse_findings_jsonl(line + "\n")

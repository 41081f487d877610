"""Mine the byte context around known planted secrets into signatures.

Workflow: locate every occurrence of each known secret in a set of dumps,
keep the bytes before and after each occurrence, and reduce each side to
the longest stable pattern across all samples (wildcards where samples
disagree).  Patterns anchored before the secret become direction=after
signatures, patterns anchored after it become direction=before, so a scan
window always covers the secret itself.  Candidates are then graded
against held-out dumps with known plants.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, replace
from typing import Sequence

from .errors import SecretTooShort, TooFewSamples
from .memdump import Dump
from .signatures import (
    DEFAULT_ENCODINGS,
    MAX_PATTERN_LEN,
    Direction,
    Encoding,
    Matcher,
    Signature,
    compile as compile_signatures,
    encode_text,
    scan,
    signature_to_dict,
)

DEFAULT_CONTEXT_LEN = 64
MIN_SECRET_LEN = 4
MIN_SUPPORT = 2


@dataclass(frozen=True)
class ContextSample:
    """The bytes surrounding one located secret occurrence."""

    secret: str
    dump_name: str
    prefix: bytes
    suffix: bytes
    encoding: Encoding


@dataclass(frozen=True)
class CandidateSignature:
    """A mined signature with its evidence and (optional) grading."""

    signature: Signature
    support: int
    recall: float | None = None
    precision: float | None = None

    def __post_init__(self) -> None:
        if self.support < MIN_SUPPORT:
            raise ValueError(
                f"candidate {self.signature.id!r}: support {self.support} below {MIN_SUPPORT}"
            )


def locate_secret(
    dump: Dump, secret: str, encodings: Sequence[Encoding] = DEFAULT_ENCODINGS
) -> list[tuple[int, int, Encoding]]:
    """All non-overlapping occurrences of each encoding of the secret.

    Results are (region_index, region_offset, encoding), sorted by region
    and offset; ties at one offset keep the order of the encodings argument.
    """
    if len(secret) < MIN_SECRET_LEN:
        raise SecretTooShort(
            f"secret of {len(secret)} chars is below the {MIN_SECRET_LEN}-char minimum"
        )
    rank = {enc: i for i, enc in enumerate(encodings)}
    hits: list[tuple[int, int, Encoding]] = []
    for region_index, region in enumerate(dump.regions):
        data = region.data
        for enc in encodings:
            needle = encode_text(secret, enc)
            start = 0
            while True:
                found = data.find(needle, start)
                if found < 0:
                    break
                hits.append((region_index, found, enc))
                start = found + len(needle)
    hits.sort(key=lambda h: (h[0], h[1], rank[h[2]]))
    return hits


def collect_contexts(
    dumps: Sequence[Dump], secrets: Sequence[str], c: int
) -> list[ContextSample]:
    """One ContextSample per located occurrence, with c bytes per side.

    Prefix and suffix are shorter than c only where the occurrence sits
    within c bytes of a region edge.
    """
    if not 8 <= c <= 1024:
        raise ValueError(f"context length must be in [8, 1024], got {c}")
    samples: list[ContextSample] = []
    for dump in dumps:
        for secret in dict.fromkeys(secrets):
            for region_index, offset, enc in locate_secret(dump, secret):
                data = dump.regions[region_index].data
                end = offset + len(encode_text(secret, enc))
                samples.append(
                    ContextSample(
                        secret=secret,
                        dump_name=dump.source_name,
                        prefix=data[max(0, offset - c) : offset],
                        suffix=data[end : end + c],
                        encoding=enc,
                    )
                )
    return samples


def _agree_tokens(
    contexts: Sequence[bytes], length: int, from_end: bool
) -> list[int | None]:
    """Per-position agreement tokens, in byte order, over the first/last
    ``length`` bytes of each context.  None marks disagreement."""
    tokens: list[int | None] = []
    for pos in range(length):
        index = -(length - pos) if from_end else pos
        values = {ctx[index] for ctx in contexts}
        tokens.append(values.pop() if len(values) == 1 else None)
    return tokens


def _trim_far_wildcards(tokens: list[int | None], far_is_front: bool) -> list[int | None]:
    """Drop wildcards at the end away from the secret; they carry no info."""
    if far_is_front:
        i = 0
        while i < len(tokens) and tokens[i] is None:
            i += 1
        return tokens[i:]
    j = len(tokens)
    while j > 0 and tokens[j - 1] is None:
        j -= 1
    return tokens[:j]


def mine_stable_patterns(
    samples: Sequence[ContextSample],
    min_len: int = 4,
    max_len: int = DEFAULT_CONTEXT_LEN,
) -> list[CandidateSignature]:
    """Reduce samples to at most one candidate per side of the secret.

    A side yields a candidate only when its stable portion has at least
    min_len concrete tokens and wildcards in at most half the positions.
    Ordering: support descending, then concrete-token count descending,
    then direction (after before before) for determinism.
    """
    if len(samples) < MIN_SUPPORT:
        raise TooFewSamples(f"need at least {MIN_SUPPORT} samples, got {len(samples)}")
    if min_len < 4:
        raise ValueError(f"min_len must be at least 4, got {min_len}")
    if max_len < min_len:
        raise ValueError(f"max_len {max_len} is below min_len {min_len}")

    candidates: list[CandidateSignature] = []
    sides = (
        ("prefix", Direction.AFTER, [s.prefix for s in samples]),
        ("suffix", Direction.BEFORE, [s.suffix for s in samples]),
    )
    for side, direction, contexts in sides:
        length = min(min(len(ctx) for ctx in contexts), max_len, MAX_PATTERN_LEN)
        if length == 0:
            continue
        # Prefix-side patterns end at the secret, so agreement is measured
        # from the tail of each prefix; suffix-side from the head.
        tokens = _agree_tokens(contexts, length, from_end=(side == "prefix"))
        tokens = _trim_far_wildcards(tokens, far_is_front=(side == "prefix"))
        concrete = sum(1 for t in tokens if t is not None)
        if concrete < min_len or concrete * 2 < len(tokens):
            continue
        signature = Signature(
            id=f"mined-{direction.value}",
            pattern=tuple(tokens),
            direction=direction,
        )
        candidates.append(CandidateSignature(signature=signature, support=len(samples)))

    def concrete_count(cand: CandidateSignature) -> int:
        return sum(1 for t in cand.signature.pattern if t is not None)

    candidates.sort(
        key=lambda cand: (-cand.support, -concrete_count(cand), cand.signature.direction.value)
    )
    return candidates


def validate_signature(
    candidate: CandidateSignature,
    validation_dumps: Sequence[tuple[Dump, Sequence[str]]],
) -> CandidateSignature:
    """Grade a candidate against dumps whose planted secrets are known.

    recall: fraction of planted occurrences whose exact location was
    recovered by scan + decode (a candidate text equal to the secret at
    the occurrence's offset).  precision: fraction of findings that
    decoded at least one planted secret.  Each is None when its
    denominator is zero (nothing planted / no findings).
    """
    matcher: Matcher = compile_signatures([candidate.signature])
    sig = candidate.signature
    pattern_len = len(sig.pattern)

    total_planted = 0
    recovered = 0
    total_findings = 0
    findings_with_secret = 0
    for dump, secrets in validation_dumps:
        unique_secrets = list(dict.fromkeys(secrets))
        secret_set = set(unique_secrets)
        found: dict[str, set[tuple[int, int]]] = defaultdict(set)
        findings = scan(dump, matcher)
        total_findings += len(findings)
        for finding in findings:
            region = dump.regions[finding.region_index]
            match_rel = finding.match_file_offset - region.file_offset
            if sig.direction is Direction.AFTER:
                window_start = match_rel + pattern_len
            else:
                window_start = match_rel - len(finding.window)
            hit = False
            for cand_text in finding.candidates:
                if cand_text.text in secret_set:
                    hit = True
                    found[cand_text.text].add(
                        (finding.region_index, window_start + cand_text.offset_in_window)
                    )
            if hit:
                findings_with_secret += 1
        for secret in unique_secrets:
            occurrences = {
                (region_index, offset)
                for region_index, offset, _ in locate_secret(dump, secret)
            }
            total_planted += len(occurrences)
            recovered += len(occurrences & found[secret])

    recall = recovered / total_planted if total_planted else None
    precision = findings_with_secret / total_findings if total_findings else None
    return replace(candidate, recall=recall, precision=precision)


def candidate_to_dict(candidate: CandidateSignature) -> dict:
    """JSON form for discovery reports; loadable as a signature set entry."""
    doc = signature_to_dict(candidate.signature)
    doc["support"] = candidate.support
    doc["recall"] = candidate.recall
    doc["precision"] = candidate.precision
    return doc

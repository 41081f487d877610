"""Aggregate scan findings into a targets-by-scenarios leak matrix.

A cell answers two questions for one target in one scenario: did the
master password leak, and did any entry password leak, each with an
occurrence count.  The headline entry count follows the newly added entry
in S4 and the clicked entry in S5; per-entry detail is retained in the
JSON rendering.  Cells can be marked not-applicable, for targets a
scenario does not apply to.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .errors import DuplicateCell, MatrixSchemaError
from .lab import CredentialSet, Scenario
from .signatures import Finding

ALL_SCENARIOS: tuple[Scenario, ...] = tuple(Scenario)


class Applicability(str, Enum):
    APPLICABLE = "applicable"
    NA = "n/a"


@dataclass(frozen=True)
class SecretCatalog:
    """The secrets one scan run should be graded against."""

    master: str
    entries: tuple[str, ...]
    fresh_entry: str | None = None
    clicked_index: int | None = None

    @classmethod
    def from_vault(cls, vault: CredentialSet) -> "SecretCatalog":
        return cls(
            master=vault.master_password,
            entries=tuple(e.password for e in vault.entries),
        )

    @classmethod
    def from_truth(cls, truth: Mapping) -> "SecretCatalog":
        try:
            master = truth["master_password"]
            entries = tuple(truth["entry_passwords"])
        except (KeyError, TypeError) as exc:
            raise MatrixSchemaError(f"truth record missing field: {exc}") from None
        if not isinstance(master, str) or not all(isinstance(e, str) for e in entries):
            raise MatrixSchemaError("truth record passwords must be strings")
        return cls(
            master=master,
            entries=entries,
            fresh_entry=truth.get("fresh_entry_password"),
            clicked_index=truth.get("clicked_index"),
        )


@dataclass(frozen=True)
class RunCounts:
    """Per-secret finding counts for one scan run."""

    master: int
    entry_counts: tuple[int, ...]
    fresh_entry: int | None = None
    clicked_index: int | None = None
    unclassified: int = 0


def classify_findings(
    findings: Sequence[Finding], credentials: "CredentialSet | SecretCatalog"
) -> RunCounts:
    """Count findings per secret: a finding counts toward every secret any
    of its decoded candidates equals; findings matching none are counted
    as unclassified and never contribute to leak booleans."""
    catalog = (
        SecretCatalog.from_vault(credentials)
        if isinstance(credentials, CredentialSet)
        else credentials
    )
    master = 0
    entry_counts = [0] * len(catalog.entries)
    fresh = 0
    unclassified = 0
    for finding in findings:
        texts = {c.text for c in finding.candidates}
        matched = False
        if catalog.master in texts:
            master += 1
            matched = True
        for i, secret in enumerate(catalog.entries):
            if secret in texts:
                entry_counts[i] += 1
                matched = True
        if catalog.fresh_entry is not None and catalog.fresh_entry in texts:
            fresh += 1
            matched = True
        if not matched:
            unclassified += 1
    return RunCounts(
        master=master,
        entry_counts=tuple(entry_counts),
        fresh_entry=fresh if catalog.fresh_entry is not None else None,
        clicked_index=catalog.clicked_index,
        unclassified=unclassified,
    )


def merge_run_counts(runs: Sequence[RunCounts]) -> RunCounts:
    """Combine seed replicates of one cell by taking per-field maxima.

    clicked_index survives only when all replicates agree; otherwise the
    S5 headline falls back to the maximum entry count, which equals the
    clicked entry's count in every replicate.
    """
    if not runs:
        raise ValueError("cannot merge zero runs")
    width = max(len(r.entry_counts) for r in runs)
    entry_counts = tuple(
        max((r.entry_counts[i] if i < len(r.entry_counts) else 0) for r in runs)
        for i in range(width)
    )
    fresh_values = [r.fresh_entry for r in runs if r.fresh_entry is not None]
    clicked = {r.clicked_index for r in runs}
    return RunCounts(
        master=max(r.master for r in runs),
        entry_counts=entry_counts,
        fresh_entry=max(fresh_values) if fresh_values else None,
        clicked_index=clicked.pop() if len(clicked) == 1 else None,
        unclassified=max(r.unclassified for r in runs),
    )


@dataclass(frozen=True)
class CellDetail:
    """Non-headline counts kept for the JSON rendering."""

    entry_counts: tuple[int, ...]
    fresh_entry: int | None
    clicked_index: int | None
    unclassified: int


@dataclass(frozen=True)
class CellResult:
    """One (target, scenario) cell.

    Counts of None in an applicable cell mean "not reported" (some
    transcribed fixtures carry leak marks only); the leak-count
    consistency rule applies whenever a count is present.
    """

    applicability: Applicability
    master_leak: bool
    entry_leak: bool
    master_count: int | None
    entry_count: int | None
    detail: CellDetail | None = None

    def __post_init__(self) -> None:
        if self.applicability is Applicability.NA:
            if self.master_leak or self.entry_leak:
                raise ValueError("n/a cell cannot carry leak marks")
            if self.master_count is not None or self.entry_count is not None:
                raise ValueError("n/a cell cannot carry counts")
            if self.detail is not None:
                raise ValueError("n/a cell cannot carry detail")
            return
        if self.master_count is not None and self.master_leak != (self.master_count > 0):
            raise ValueError(
                f"master_leak={self.master_leak} contradicts master_count={self.master_count}"
            )
        if self.entry_count is not None and self.entry_leak != (self.entry_count > 0):
            raise ValueError(
                f"entry_leak={self.entry_leak} contradicts entry_count={self.entry_count}"
            )


NA_CELL = CellResult(
    applicability=Applicability.NA,
    master_leak=False,
    entry_leak=False,
    master_count=None,
    entry_count=None,
)


@dataclass(frozen=True)
class LeakMatrix:
    targets: tuple[str, ...]
    scenarios: tuple[Scenario, ...]
    cells: Mapping[tuple[str, Scenario], CellResult]


def _headline_entry_count(scenario: Scenario, counts: RunCounts) -> int:
    """The entry count a cell reports: the newly added entry for S4, the
    clicked entry for S5, otherwise the worst (max) entry.  When the focal
    secret shows zero but another entry leaked anyway, fall back to the
    max so the count never contradicts the leak mark."""
    focal = None
    if scenario is Scenario.S4:
        focal = counts.fresh_entry
    elif (
        scenario is Scenario.S5
        and counts.clicked_index is not None
        and 0 <= counts.clicked_index < len(counts.entry_counts)
    ):
        focal = counts.entry_counts[counts.clicked_index]
    if focal:
        return focal
    pool = list(counts.entry_counts)
    if counts.fresh_entry is not None:
        pool.append(counts.fresh_entry)
    return max(pool, default=0)


def cell_from_counts(scenario: Scenario, counts: RunCounts) -> CellResult:
    entry_count = _headline_entry_count(scenario, counts)
    any_entry = any(counts.entry_counts) or bool(counts.fresh_entry)
    return CellResult(
        applicability=Applicability.APPLICABLE,
        master_leak=counts.master > 0,
        entry_leak=any_entry,
        master_count=counts.master,
        entry_count=entry_count,
        detail=CellDetail(
            entry_counts=counts.entry_counts,
            fresh_entry=counts.fresh_entry,
            clicked_index=counts.clicked_index,
            unclassified=counts.unclassified,
        ),
    )


def build_leak_matrix(
    runs: Iterable[tuple[str, Scenario, "RunCounts | None", Applicability]],
) -> LeakMatrix:
    """Assemble cells from runs; missing cells become not-applicable.

    Targets are sorted, so any permutation of the same runs produces an
    identical matrix.
    """
    cells: dict[tuple[str, Scenario], CellResult] = {}
    for target, scenario, counts, applicability in runs:
        key = (target, scenario)
        if key in cells:
            raise DuplicateCell(f"duplicate cell for {target!r} {scenario.value}")
        if applicability is Applicability.NA:
            if counts is not None:
                raise ValueError(f"n/a run for {target!r} {scenario.value} must not carry counts")
            cells[key] = NA_CELL
        else:
            if counts is None:
                raise ValueError(f"applicable run for {target!r} {scenario.value} needs counts")
            cells[key] = cell_from_counts(scenario, counts)
    targets = tuple(sorted({target for target, _ in cells}))
    for target in targets:
        for scenario in ALL_SCENARIOS:
            cells.setdefault((target, scenario), NA_CELL)
    return LeakMatrix(targets=targets, scenarios=ALL_SCENARIOS, cells=cells)


# --- rendering -----------------------------------------------------------


def _mark(flag: bool) -> str:
    return "✓" if flag else "✗"


def _count_text(count: int | None) -> str:
    return "-" if not count else str(count)


def _render_markdown(matrix: LeakMatrix) -> str:
    header = "| Target | " + " | ".join(s.value for s in matrix.scenarios) + " |"
    rule = "| --- |" + " --- |" * len(matrix.scenarios)
    lines = ["# Credential leak matrix", "", "## Leaks (master/entry)", "", header, rule]
    for target in matrix.targets:
        row = [target]
        for scenario in matrix.scenarios:
            cell = matrix.cells[(target, scenario)]
            if cell.applicability is Applicability.NA:
                row.append("n/a")
            else:
                row.append(f"{_mark(cell.master_leak)}/{_mark(cell.entry_leak)}")
        lines.append("| " + " | ".join(row) + " |")
    lines += ["", "## Occurrence counts (master/entry)", "", header, rule]
    for target in matrix.targets:
        row = [target]
        for scenario in matrix.scenarios:
            cell = matrix.cells[(target, scenario)]
            if cell.applicability is Applicability.NA:
                row.append("n/a")
            else:
                row.append(f"{_count_text(cell.master_count)}/{_count_text(cell.entry_count)}")
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def _render_csv(matrix: LeakMatrix) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(
        ["target", "scenario", "applicability", "master_leak", "entry_leak",
         "master_count", "entry_count"]
    )
    for target in matrix.targets:
        for scenario in matrix.scenarios:
            cell = matrix.cells[(target, scenario)]
            writer.writerow(
                [
                    target,
                    scenario.value,
                    cell.applicability.value,
                    "true" if cell.master_leak else "false",
                    "true" if cell.entry_leak else "false",
                    "" if cell.master_count is None else cell.master_count,
                    "" if cell.entry_count is None else cell.entry_count,
                ]
            )
    return buf.getvalue()


def matrix_to_dict(matrix: LeakMatrix) -> dict:
    cells = []
    for target in matrix.targets:
        for scenario in matrix.scenarios:
            cell = matrix.cells[(target, scenario)]
            doc = {
                "target": target,
                "scenario": scenario.value,
                "applicability": cell.applicability.value,
                "master_leak": cell.master_leak,
                "entry_leak": cell.entry_leak,
                "master_count": cell.master_count,
                "entry_count": cell.entry_count,
            }
            if cell.detail is not None:
                doc["detail"] = {
                    "entry_counts": list(cell.detail.entry_counts),
                    "fresh_entry": cell.detail.fresh_entry,
                    "clicked_index": cell.detail.clicked_index,
                    "unclassified": cell.detail.unclassified,
                }
            cells.append(doc)
    return {
        "targets": list(matrix.targets),
        "scenarios": [s.value for s in matrix.scenarios],
        "cells": cells,
    }


def render(matrix: LeakMatrix, format: str = "markdown") -> str:  # noqa: A002 - public API name
    if format == "markdown":
        return _render_markdown(matrix)
    if format == "csv":
        return _render_csv(matrix)
    if format == "json":
        return json.dumps(matrix_to_dict(matrix), ensure_ascii=False, indent=2) + "\n"
    raise ValueError(f"unknown render format {format!r}")


# --- parsing -------------------------------------------------------------


def _cell_from_dict(obj: Mapping) -> tuple[str, Scenario, CellResult]:
    try:
        target = obj["target"]
        scenario = Scenario(obj["scenario"])
        applicability = Applicability(obj["applicability"])
        master_leak = obj["master_leak"]
        entry_leak = obj["entry_leak"]
        master_count = obj["master_count"]
        entry_count = obj["entry_count"]
    except (KeyError, ValueError, TypeError) as exc:
        raise MatrixSchemaError(f"malformed matrix cell: {exc}") from None
    if not isinstance(target, str):
        raise MatrixSchemaError("cell target must be a string")
    for name, value in (("master_leak", master_leak), ("entry_leak", entry_leak)):
        if not isinstance(value, bool):
            raise MatrixSchemaError(f"cell {name} must be a boolean")
    for name, value in (("master_count", master_count), ("entry_count", entry_count)):
        if value is not None and (not isinstance(value, int) or isinstance(value, bool)):
            raise MatrixSchemaError(f"cell {name} must be an integer or null")
    detail = None
    if "detail" in obj and obj["detail"] is not None:
        d = obj["detail"]
        if not isinstance(d, Mapping):
            raise MatrixSchemaError("cell detail must be an object")
        try:
            detail = CellDetail(
                entry_counts=tuple(d["entry_counts"]),
                fresh_entry=d["fresh_entry"],
                clicked_index=d["clicked_index"],
                unclassified=d["unclassified"],
            )
        except (KeyError, TypeError) as exc:
            raise MatrixSchemaError(f"malformed cell detail: {exc}") from None
    try:
        cell = CellResult(
            applicability=applicability,
            master_leak=master_leak,
            entry_leak=entry_leak,
            master_count=master_count,
            entry_count=entry_count,
            detail=detail,
        )
    except ValueError as exc:
        raise MatrixSchemaError(str(exc)) from None
    return target, scenario, cell


def parse_matrix_json(text: str) -> LeakMatrix:
    """Parse a matrix JSON document, preserving its target order."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MatrixSchemaError(f"matrix is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise MatrixSchemaError("matrix document must be a JSON object")
    targets = doc.get("targets")
    scenarios_raw = doc.get("scenarios")
    cells_raw = doc.get("cells")
    if not isinstance(targets, list) or not all(isinstance(t, str) for t in targets):
        raise MatrixSchemaError("matrix targets must be a list of strings")
    if len(set(targets)) != len(targets):
        raise MatrixSchemaError("matrix targets must be unique")
    if scenarios_raw != [s.value for s in ALL_SCENARIOS]:
        raise MatrixSchemaError(f"matrix scenarios must be {[s.value for s in ALL_SCENARIOS]}")
    if not isinstance(cells_raw, list):
        raise MatrixSchemaError("matrix cells must be a list")

    cells: dict[tuple[str, Scenario], CellResult] = {}
    for entry in cells_raw:
        if not isinstance(entry, Mapping):
            raise MatrixSchemaError("matrix cell must be an object")
        target, scenario, cell = _cell_from_dict(entry)
        if target not in targets:
            raise MatrixSchemaError(f"cell names unknown target {target!r}")
        key = (target, scenario)
        if key in cells:
            raise MatrixSchemaError(f"duplicate cell for {target!r} {scenario.value}")
        cells[key] = cell
    for target in targets:
        for scenario in ALL_SCENARIOS:
            if (target, scenario) not in cells:
                raise MatrixSchemaError(f"missing cell for {target!r} {scenario.value}")
    return LeakMatrix(targets=tuple(targets), scenarios=ALL_SCENARIOS, cells=cells)

"""Command-line pipeline: corpus generation, scanning, discovery, reporting.

Exit codes: 0 clean, 1 completed with skipped or failed inputs, 2 usage or
configuration error, 3 environment error (unwritable outputs and similar).
Logs go to stderr; data goes to files or stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

from . import discovery, lab, report
from .errors import (
    DiscoveryError,
    DumpFormatError,
    DumpscoutError,
    MatrixSchemaError,
    ProfileError,
    SignatureError,
)
from .memdump import load_dump_file
from .signatures import (
    compile as compile_signatures,
    findings_to_jsonl,
    load_signature_file,
    parse_findings_jsonl,
    scan,
)

log = logging.getLogger("dumpscout")

JOBS_ENV_VAR = "DUMPSCOUT_JOBS"


def _default_jobs() -> int:
    raw = os.environ.get(JOBS_ENV_VAR)
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        log.warning("ignoring non-integer %s=%r", JOBS_ENV_VAR, raw)
        return 1


def _seed_list(text: str) -> list[int]:
    try:
        seeds = [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must be comma-separated integers: {text!r}")
    if not seeds:
        raise argparse.ArgumentTypeError("at least one seed is required")
    return seeds


# --- corpus --------------------------------------------------------------


def cmd_corpus(args: argparse.Namespace) -> int:
    try:
        if args.profiles is None:
            profiles = lab.bundled_profile_pack()
        else:
            profiles = lab.load_profile_pack(args.profiles)
    except (ProfileError, OSError) as exc:
        log.error("cannot load profile pack: %s", exc)
        return 2

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-probe"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        log.error("output directory not writable: %s", exc)
        return 3

    try:
        count = lab.write_corpus(profiles, args.seeds, out, n_entries=args.entries)
    except OSError as exc:
        log.error("cannot write corpus: %s", exc)
        return 3
    except DumpscoutError as exc:
        log.error("corpus generation failed: %s", exc)
        return 1
    print(f"wrote {count} corpus cells under {out}")
    return 0


# --- scan ----------------------------------------------------------------


def _scan_output_paths(inputs: Sequence[str], out_dir: str) -> list[Path]:
    """Mirror inputs below out_dir, relative to their common parent."""
    resolved = [Path(p).resolve() for p in inputs]
    if len(resolved) == 1:
        common = resolved[0].parent
    else:
        common = Path(os.path.commonpath([p.parent for p in resolved]))
    out_paths = []
    for path in resolved:
        rel = path.parent.relative_to(common)
        out_paths.append(Path(out_dir) / rel / (path.stem + ".findings.jsonl"))
    return out_paths


def _scan_worker(task: tuple[str, str, str]) -> tuple[str, str, str, int]:
    """Scan one file; returns (input, status, message, finding_count)."""
    signature_path, input_path, out_path = task
    try:
        matcher = compile_signatures(load_signature_file(signature_path))
        dump = load_dump_file(input_path)
    except (SignatureError, DumpFormatError, OSError) as exc:
        return (input_path, "skip", str(exc), 0)
    findings = scan(dump, matcher)
    try:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        Path(out_path).write_text(findings_to_jsonl(findings), encoding="utf-8")
    except OSError as exc:
        return (input_path, "env", str(exc), 0)
    return (input_path, "ok", "", len(findings))


def cmd_scan(args: argparse.Namespace) -> int:
    try:
        matcher = compile_signatures(load_signature_file(args.signatures))
    except (SignatureError, OSError) as exc:
        log.error("cannot load signatures: %s", exc)
        return 2
    log.info("loaded %d signatures from %s", len(matcher), args.signatures)

    out_paths = _scan_output_paths(args.inputs, args.out)
    if len(set(out_paths)) != len(out_paths):
        log.error("two inputs map to the same output file; rename inputs or split runs")
        return 2
    tasks = [
        (args.signatures, str(Path(input_path)), str(out_path))
        for input_path, out_path in zip(args.inputs, out_paths)
    ]

    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_scan_worker, tasks))
    else:
        results = [_scan_worker(task) for task in tasks]

    skipped = 0
    env_failed = 0
    for input_path, status, message, count in results:
        if status == "ok":
            log.info("%s: %d findings", input_path, count)
        elif status == "skip":
            skipped += 1
            log.error("%s: skipped: %s", input_path, message)
        else:
            env_failed += 1
            log.error("%s: cannot write output: %s", input_path, message)
    log.info("scanned %d of %d inputs", len(results) - skipped - env_failed, len(results))
    if env_failed:
        return 3
    return 1 if skipped else 0


# --- discover ------------------------------------------------------------


def _load_credentials(path: str) -> list[str]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    secrets: list[str] = []

    def add(value: object) -> None:
        if isinstance(value, str) and value:
            secrets.append(value)

    if isinstance(doc, list):
        for item in doc:
            add(item)
    elif isinstance(doc, dict):
        add(doc.get("master_password"))
        for item in doc.get("entry_passwords", []):
            add(item)
        add(doc.get("fresh_entry_password"))
        for item in doc.get("secrets", []):
            add(item)
    return list(dict.fromkeys(secrets))


def _load_dump_dir(root: str) -> tuple[list, int]:
    """Load every *.dmp under root (sorted); returns (dumps, skipped)."""
    dumps = []
    skipped = 0
    for path in sorted(Path(root).rglob("*.dmp")):
        try:
            dumps.append(load_dump_file(path))
        except (DumpFormatError, OSError) as exc:
            skipped += 1
            log.error("%s: skipped: %s", path, exc)
    return dumps, skipped


def _sidecar_secrets(dump_name: str, fallback: Sequence[str]) -> list[str]:
    """Secrets for one validation dump: its truth sidecar when present."""
    dump_path = Path(dump_name)
    sidecar = dump_path.parent / (dump_path.stem + ".truth.json")
    if not sidecar.exists():
        return list(fallback)
    try:
        with open(sidecar, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError):
        return list(fallback)
    secrets = [doc.get("master_password")]
    secrets += list(doc.get("entry_passwords", []))
    secrets.append(doc.get("fresh_entry_password"))
    return [s for s in dict.fromkeys(secrets) if isinstance(s, str) and s]


def cmd_discover(args: argparse.Namespace) -> int:
    try:
        secrets = _load_credentials(args.credentials)
    except (OSError, json.JSONDecodeError) as exc:
        log.error("cannot load credentials: %s", exc)
        return 2
    if not secrets:
        log.error("credentials file %s contains no secrets", args.credentials)
        return 2

    mining_dumps, skipped = _load_dump_dir(args.mining)
    if len(mining_dumps) < 2:
        log.error("need at least 2 readable mining dumps, found %d", len(mining_dumps))
        return 2

    try:
        samples = discovery.collect_contexts(mining_dumps, secrets, args.context)
        if len(samples) >= discovery.MIN_SUPPORT:
            candidates = discovery.mine_stable_patterns(
                samples, min_len=args.min_len, max_len=args.max_len or args.context
            )
        else:
            candidates = []
    except (DiscoveryError, ValueError) as exc:
        log.error("discovery failed: %s", exc)
        return 2
    log.info("%d context samples, %d candidates", len(samples), len(candidates))

    mining_sets = [(dump, secrets) for dump in mining_dumps]
    graded = [discovery.validate_signature(c, mining_sets) for c in candidates]
    docs = [discovery.candidate_to_dict(c) for c in graded]

    if args.validate is not None:
        validation_dumps, v_skipped = _load_dump_dir(args.validate)
        skipped += v_skipped
        validation_sets = [
            (dump, _sidecar_secrets(dump.source_name, secrets)) for dump in validation_dumps
        ]
        for doc, candidate in zip(docs, candidates):
            held_out = discovery.validate_signature(candidate, validation_sets)
            doc["holdout_recall"] = held_out.recall
            doc["holdout_precision"] = held_out.precision

    try:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(json.dumps(docs, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        log.error("cannot write report: %s", exc)
        return 3
    return 1 if skipped else 0


# --- report --------------------------------------------------------------


def cmd_report(args: argparse.Namespace) -> int:
    truth_root = Path(args.truth)
    findings_root = Path(args.findings)
    truth_files = sorted(truth_root.rglob("*.truth.json"))

    grouped: dict[tuple[str, lab.Scenario], list[report.RunCounts]] = {}
    for truth_path in truth_files:
        try:
            with open(truth_path, "r", encoding="utf-8") as fh:
                truth = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            log.error("%s: bad truth sidecar: %s", truth_path, exc)
            return 2
        try:
            target = truth["profile_id"]
            scenario = lab.Scenario(truth["scenario"])
            catalog = report.SecretCatalog.from_truth(truth)
        except (KeyError, ValueError, MatrixSchemaError) as exc:
            log.error("%s: bad truth sidecar: %s", truth_path, exc)
            return 2

        rel = truth_path.relative_to(truth_root)
        seed_stem = truth_path.name[: -len(".truth.json")]
        findings_path = findings_root / rel.parent / (seed_stem + ".findings.jsonl")
        findings = []
        if findings_path.exists():
            try:
                findings = parse_findings_jsonl(
                    findings_path.read_text(encoding="utf-8")
                )
            except DumpscoutError as exc:
                log.error("%s: bad findings file: %s", findings_path, exc)
                return 2
        counts = report.classify_findings(findings, catalog)
        grouped.setdefault((target, scenario), []).append(counts)

    runs = [
        (target, scenario, report.merge_run_counts(counts_list), report.Applicability.APPLICABLE)
        for (target, scenario), counts_list in sorted(grouped.items())
    ]
    matrix = report.build_leak_matrix(runs)
    rendered = report.render(matrix, args.format)
    try:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(rendered, encoding="utf-8")
    except OSError as exc:
        log.error("cannot write matrix: %s", exc)
        return 3
    log.info("wrote %s matrix for %d targets to %s", args.format, len(matrix.targets), out)
    return 0


# --- parser --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dumpscout",
        description="Find plaintext credentials in process memory dumps.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_corpus = sub.add_parser("corpus", help="generate a synthetic dump corpus")
    p_corpus.add_argument("--profiles", help="profile pack JSON (default: bundled pack)")
    p_corpus.add_argument("--seeds", type=_seed_list, default=[1, 2, 3],
                          help="comma-separated seeds (default 1,2,3)")
    p_corpus.add_argument("--entries", type=int, default=3,
                          help="vault entries per seed (default 3)")
    p_corpus.add_argument("--out", required=True, help="corpus output directory")
    p_corpus.set_defaults(func=cmd_corpus)

    p_scan = sub.add_parser("scan", help="scan dumps with a signature set")
    p_scan.add_argument("--signatures", required=True, help="signature set JSON")
    p_scan.add_argument("--out", required=True, help="findings output directory")
    p_scan.add_argument("--jobs", type=int, default=_default_jobs(),
                        help=f"parallel files (default ${JOBS_ENV_VAR} or 1)")
    p_scan.add_argument("inputs", nargs="+", help="dump files (raw or minidump)")
    p_scan.set_defaults(func=cmd_scan)

    p_disc = sub.add_parser("discover", help="mine signatures from dumps with known secrets")
    p_disc.add_argument("--credentials", required=True,
                        help="JSON file of known secrets (list or truth sidecar)")
    p_disc.add_argument("--mining", required=True, help="directory of mining dumps")
    p_disc.add_argument("--validate", help="directory of held-out dumps")
    p_disc.add_argument("--context", type=int, default=discovery.DEFAULT_CONTEXT_LEN,
                        help="context bytes per side (default 64)")
    p_disc.add_argument("--min-len", type=int, default=4, dest="min_len",
                        help="minimum concrete tokens in a candidate (default 4)")
    p_disc.add_argument("--max-len", type=int, default=None, dest="max_len",
                        help="maximum pattern length (default: context length)")
    p_disc.add_argument("--out", required=True, help="discovery report JSON path")
    p_disc.set_defaults(func=cmd_discover)

    p_rep = sub.add_parser("report", help="build a leak matrix from findings and truth")
    p_rep.add_argument("--truth", required=True, help="corpus directory with truth sidecars")
    p_rep.add_argument("--findings", required=True, help="directory of findings files")
    p_rep.add_argument("--format", choices=("markdown", "csv", "json"), default="markdown")
    p_rep.add_argument("--out", required=True, help="matrix output path")
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

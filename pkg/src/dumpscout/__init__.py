"""Find plaintext credentials in process memory dumps.

The package has four layers:

* :mod:`dumpscout.memdump` loads raw images and a minidump subset into
  immutable memory regions;
* :mod:`dumpscout.signatures` compiles byte signatures (with wildcards)
  and scans dumps, carving printable credential candidates from a window
  around each match;
* :mod:`dumpscout.discovery` mines new signatures from dumps whose
  planted secrets are known, and grades them on held-out dumps;
* :mod:`dumpscout.lab` and :mod:`dumpscout.report` generate deterministic
  synthetic password-manager images across six user scenarios and
  aggregate scan results into a leak matrix.

The ``dumpscout`` command ties these into a corpus/scan/discover/report
pipeline.
"""

from . import errors
from .errors import (
    AnchorOutOfRange,
    BadMagic,
    CollisionUnresolvable,
    DiscoveryError,
    DumpFormatError,
    DumpscoutError,
    DuplicateCell,
    DuplicateId,
    EmptyInput,
    EmptyNeedle,
    FindingFormatError,
    InvalidPattern,
    LabError,
    MatrixSchemaError,
    NoMemoryStream,
    OverlappingRegions,
    ProfileError,
    ReportError,
    SecretTooShort,
    SignatureError,
    SignatureFileError,
    TooFewSamples,
    Truncated,
)
from .discovery import (
    CandidateSignature,
    ContextSample,
    collect_contexts,
    locate_secret,
    mine_stable_patterns,
    validate_signature,
)
from .lab import (
    CredentialSet,
    LeakProfile,
    MemoryImage,
    PlantRecord,
    Scenario,
    VaultEntry,
    bundled_profile_pack,
    emit_dump,
    filler_collision_check,
    new_vault,
    simulate,
)
from .memdump import (
    Dump,
    MemoryRegion,
    SourceKind,
    iter_regions,
    load_dump_bytes,
    load_dump_file,
    load_raw,
    parse_minidump,
    write_minidump,
)
from .report import (
    Applicability,
    CellResult,
    LeakMatrix,
    RunCounts,
    SecretCatalog,
    build_leak_matrix,
    classify_findings,
    render,
)
from .signatures import (
    DecodedCandidate,
    Direction,
    Encoding,
    Finding,
    Matcher,
    Signature,
    compile,
    count_occurrences,
    decode_candidates,
    extract_window,
    scan,
)

__version__ = "0.1.0"

__all__ = [
    "errors",
    "AnchorOutOfRange",
    "BadMagic",
    "CollisionUnresolvable",
    "DiscoveryError",
    "DumpFormatError",
    "DumpscoutError",
    "DuplicateCell",
    "DuplicateId",
    "EmptyInput",
    "EmptyNeedle",
    "FindingFormatError",
    "InvalidPattern",
    "LabError",
    "MatrixSchemaError",
    "NoMemoryStream",
    "OverlappingRegions",
    "ProfileError",
    "ReportError",
    "SecretTooShort",
    "SignatureError",
    "SignatureFileError",
    "TooFewSamples",
    "Truncated",
    "CandidateSignature",
    "ContextSample",
    "collect_contexts",
    "locate_secret",
    "mine_stable_patterns",
    "validate_signature",
    "CredentialSet",
    "LeakProfile",
    "MemoryImage",
    "PlantRecord",
    "Scenario",
    "VaultEntry",
    "bundled_profile_pack",
    "emit_dump",
    "filler_collision_check",
    "new_vault",
    "simulate",
    "Dump",
    "MemoryRegion",
    "SourceKind",
    "iter_regions",
    "load_dump_bytes",
    "load_dump_file",
    "load_raw",
    "parse_minidump",
    "write_minidump",
    "Applicability",
    "CellResult",
    "LeakMatrix",
    "RunCounts",
    "SecretCatalog",
    "build_leak_matrix",
    "classify_findings",
    "render",
    "DecodedCandidate",
    "Direction",
    "Encoding",
    "Finding",
    "Matcher",
    "Signature",
    "compile",
    "count_occurrences",
    "decode_candidates",
    "extract_window",
    "scan",
    "__version__",
]

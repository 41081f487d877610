"""Deterministic synthetic memory images with exact ground truth.

A leak profile describes how a simulated password manager leaves secrets
behind in each user scenario: how many copies of the master and entry
passwords, in which text encoding, optionally XOR-masked, and always framed
by 16 profile-stable bytes on each side.  ``simulate`` lays those copies
into 2-8 regions of pseudorandom filler and records every plant, so scans
can be graded against known truth.

Scenarios model user-state snapshots:

* S1 unlock the vault, S2 lock it manually, S3 let it auto-lock,
* S4 add a new entry, S5 open/click one entry, S6 restart without unlocking.

Everything is a pure function of (profile, scenario, vault, seed); the same
inputs reproduce byte-identical images.
"""

from __future__ import annotations

import hashlib
import json
import random
import string
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

from .errors import CollisionUnresolvable, ProfileError
from .memdump import Dump, MemoryRegion, SourceKind, write_minidump
from .signatures import Direction, Encoding, Signature, encode_text

FRAMING_LEN = 16
MAX_FILLER_RETRIES = 16

# Plants keep this much distance from region edges so extraction windows
# (default 300 bytes) never clamp, and this much byte gap from each other
# so one plant's window cannot reach into a neighbor.
_EDGE_MARGIN = 384
_PLANT_GAP = 512

_PLACEMENT_TRIES = 200

_PW_ALPHABET = string.ascii_letters + string.digits + "!#$%&()*+,-./:;<=>?@[]^_{|}~"


class Scenario(str, Enum):
    S1 = "S1"
    S2 = "S2"
    S3 = "S3"
    S4 = "S4"
    S5 = "S5"
    S6 = "S6"


class Obfuscation(str, Enum):
    NONE = "none"
    XOR = "xor"


@dataclass(frozen=True)
class ScenarioResidue:
    """Copies of each secret left in memory for one scenario."""

    master_copies: int = 0
    entry_copies: int = 0


@dataclass(frozen=True)
class VaultEntry:
    service_url: str
    username: str
    password: str


@dataclass(frozen=True)
class CredentialSet:
    master_password: str
    entries: tuple[VaultEntry, ...]

    def all_passwords(self) -> list[str]:
        return [self.master_password] + [e.password for e in self.entries]


@dataclass(frozen=True)
class LeakProfile:
    """A synthetic target's leak behavior, loaded from a profile pack."""

    id: str
    residue: Mapping[Scenario, ScenarioResidue]
    encoding: Encoding
    obfuscation: Obfuscation
    xor_key: bytes | None
    prefix_seed: int
    suffix_seed: int
    clear_on_lock: bool
    requires_interaction: bool

    def validate(self) -> None:
        if not self.id:
            raise ProfileError("profile id must be non-empty")
        for scenario in Scenario:
            res = self.residue.get(scenario, ScenarioResidue())
            for fld in ("master_copies", "entry_copies"):
                value = getattr(res, fld)
                if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                    raise ProfileError(
                        f"profile {self.id!r}: residue.{scenario.value}.{fld} "
                        "must be a non-negative integer"
                    )
        s6 = self.residue.get(Scenario.S6, ScenarioResidue())
        if s6.master_copies or s6.entry_copies:
            raise ProfileError(f"profile {self.id!r}: residue.S6 must be all-zero")
        if self.clear_on_lock:
            for scenario in (Scenario.S2, Scenario.S3):
                res = self.residue.get(scenario, ScenarioResidue())
                if res.master_copies or res.entry_copies:
                    raise ProfileError(
                        f"profile {self.id!r}: clear_on_lock requires zero residue "
                        f"in {scenario.value}"
                    )
        if not isinstance(self.encoding, Encoding):
            raise ProfileError(f"profile {self.id!r}: encoding must be utf8 or utf16le")
        if self.obfuscation is Obfuscation.XOR:
            key = self.xor_key
            if not isinstance(key, bytes) or not 1 <= len(key) <= 16:
                raise ProfileError(
                    f"profile {self.id!r}: xor_key must hold 1 to 16 bytes"
                )
            if any(b == 0 for b in key):
                raise ProfileError(f"profile {self.id!r}: xor_key bytes must be non-zero")
        elif self.xor_key is not None:
            raise ProfileError(
                f"profile {self.id!r}: xor_key given but obfuscation is none"
            )
        for fld in ("prefix_seed", "suffix_seed"):
            value = getattr(self, fld)
            if not isinstance(value, int) or isinstance(value, bool) or not 0 <= value < 1 << 64:
                raise ProfileError(f"profile {self.id!r}: framing.{fld} must be a 64-bit integer")

    def residue_for(self, scenario: Scenario) -> ScenarioResidue:
        return self.residue.get(scenario, ScenarioResidue())

    @property
    def framing_prefix(self) -> bytes:
        return _framing_bytes(self.prefix_seed, "prefix")

    @property
    def framing_suffix(self) -> bytes:
        return _framing_bytes(self.suffix_seed, "suffix")


@dataclass(frozen=True)
class PlantRecord:
    """One planted secret copy; offset is region-relative to the body bytes."""

    secret_kind: str  # "master" or "entry"
    entry_index: int | None  # vault index; None for master and the S4 fresh entry
    region_index: int
    offset: int
    length: int
    encoding: Encoding
    obfuscated: bool


@dataclass(frozen=True)
class MemoryImage:
    regions: tuple[MemoryRegion, ...]
    ground_truth: tuple[PlantRecord, ...]
    profile_id: str
    scenario: Scenario
    seed: int
    encoding: Encoding
    obfuscation: Obfuscation
    xor_key: bytes | None
    fresh_entry: VaultEntry | None
    clicked_index: int | None


def _mix_seed(*parts: object) -> int:
    """Stable 64-bit seed from a tagged tuple of ints and strings."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _framing_bytes(seed: int, role: str) -> bytes:
    raw = bytearray(random.Random(_mix_seed("framing", role, seed)).randbytes(FRAMING_LEN))
    # The two bytes touching the secret are forced to NUL so printable-run
    # decoding stops exactly at the secret boundary in both encodings.
    if role == "prefix":
        raw[FRAMING_LEN - 2] = raw[FRAMING_LEN - 1] = 0
    else:
        raw[0] = raw[1] = 0
    return bytes(raw)


def framing_signature(profile: LeakProfile, direction: Direction = Direction.AFTER) -> Signature:
    """The profile's framing bytes as a scannable signature.

    direction=after matches the 16 bytes immediately preceding each planted
    secret; direction=before matches the 16 bytes following it.
    """
    framing = profile.framing_prefix if direction is Direction.AFTER else profile.framing_suffix
    return Signature(
        id=f"{profile.id}-framing-{direction.value}",
        pattern=tuple(framing),
        direction=direction,
    )


def xor_mask(data: bytes, key: bytes) -> bytes:
    """XOR data with a repeating key; applying it twice is the identity."""
    if not key:
        raise ValueError("xor key must be non-empty")
    repeats = -(-len(data) // len(key))
    return bytes(a ^ b for a, b in zip(data, key * repeats))


# --- vault generation ----------------------------------------------------


def _draw_password(rng: random.Random, taken: Sequence[str]) -> str:
    for _ in range(1000):
        length = rng.randint(12, 20)
        pw = "".join(rng.choice(_PW_ALPHABET) for _ in range(length))
        if any(pw in other or other in pw for other in taken):
            continue
        return pw
    raise RuntimeError("could not draw a distinct password")


def _draw_entry(rng: random.Random, index: int, taken: Sequence[str]) -> VaultEntry:
    password = _draw_password(rng, taken)
    token = "".join(rng.choice(string.ascii_lowercase) for _ in range(6))
    return VaultEntry(
        service_url=f"https://{token}{index}.example.com/login",
        username=f"user_{token}{index}",
        password=password,
    )


def new_vault(seed: int, n_entries: int) -> CredentialSet:
    """Deterministic credentials: distinct, mutually non-substring passwords."""
    if not 1 <= n_entries <= 100:
        raise ValueError(f"n_entries must be in [1, 100], got {n_entries}")
    rng = random.Random(_mix_seed("vault", seed))
    master = _draw_password(rng, [])
    taken = [master]
    entries = []
    for i in range(n_entries):
        entry = _draw_entry(rng, i, taken)
        taken.append(entry.password)
        entries.append(entry)
    return CredentialSet(master_password=master, entries=tuple(entries))


# --- scenario plant planning ---------------------------------------------


def _plant_specs(
    profile: LeakProfile,
    scenario: Scenario,
    vault: CredentialSet,
    fresh_entry: VaultEntry | None,
    clicked_index: int | None,
) -> list[tuple[str, int | None, str]]:
    """(kind, entry_index, secret) for every copy this cell should plant.

    requires_interaction suppresses all entry residue except the S5 clicked
    entry: merely unlocking (S1-S3), or adding an entry (S4), is not an
    interaction with a stored entry.
    """
    res = profile.residue_for(scenario)
    specs: list[tuple[str, int | None, str]] = []
    for _ in range(res.master_copies):
        specs.append(("master", None, vault.master_password))
    gated = profile.requires_interaction
    for index, entry in enumerate(vault.entries):
        copies = res.entry_copies
        if gated:
            copies = res.entry_copies if scenario is Scenario.S5 and index == clicked_index else 0
        for _ in range(copies):
            specs.append(("entry", index, entry.password))
    if scenario is Scenario.S4 and fresh_entry is not None and not gated:
        for _ in range(res.entry_copies):
            specs.append(("entry", None, fresh_entry.password))
    return specs


class _PlacementFailed(Exception):
    """Internal: rejection sampling could not fit all plants; retry layout."""


def _build_image(
    profile: LeakProfile,
    scenario: Scenario,
    vault: CredentialSet,
    specs: Sequence[tuple[str, int | None, str]],
    fresh_entry: VaultEntry | None,
    clicked_index: int | None,
    seed: int,
    rng: random.Random,
) -> MemoryImage:
    prefix = profile.framing_prefix
    suffix = profile.framing_suffix

    payloads = []
    for kind, index, secret in specs:
        body = encode_text(secret, profile.encoding)
        obfuscated = profile.obfuscation is Obfuscation.XOR
        if obfuscated:
            body = xor_mask(body, profile.xor_key)
        payloads.append((kind, index, prefix + body + suffix, len(body)))

    n_regions = rng.randint(2, 8)
    sizes = [rng.randrange(24 * 1024, 64 * 1024) for _ in range(n_regions)]
    needed = sum(len(p[2]) + 2 * _PLANT_GAP for p in payloads)
    capacity = sum(max(0, s - 2 * _EDGE_MARGIN) for s in sizes)
    if capacity < 2 * needed:
        factor = -(-2 * needed // capacity)
        sizes = [s * factor for s in sizes]

    assignment = [rng.randrange(n_regions) for _ in payloads]
    occupied: list[list[tuple[int, int]]] = [[] for _ in range(n_regions)]
    placements: list[tuple[int, int]] = []
    for k, (_, _, payload, _) in enumerate(payloads):
        region = assignment[k]
        size = sizes[region]
        for _ in range(_PLACEMENT_TRIES):
            offset = rng.randrange(_EDGE_MARGIN, size - _EDGE_MARGIN - len(payload) + 1)
            guard = (offset - _PLANT_GAP, offset + len(payload) + _PLANT_GAP)
            if all(guard[1] <= lo or hi <= guard[0] for lo, hi in occupied[region]):
                occupied[region].append(guard)
                placements.append((region, offset))
                break
        else:
            raise _PlacementFailed

    buffers = [bytearray(rng.randbytes(size)) for size in sizes]
    truth = []
    for (kind, index, payload, body_len), (region, offset) in zip(payloads, placements):
        buffers[region][offset : offset + len(payload)] = payload
        truth.append(
            PlantRecord(
                secret_kind=kind,
                entry_index=index,
                region_index=region,
                offset=offset + FRAMING_LEN,
                length=body_len,
                encoding=profile.encoding,
                obfuscated=profile.obfuscation is Obfuscation.XOR,
            )
        )
    truth.sort(key=lambda p: (p.region_index, p.offset))

    regions = []
    va = 0x100000
    file_offset = 0
    for buf in buffers:
        regions.append(MemoryRegion(base_va=va, data=bytes(buf), file_offset=file_offset))
        span = (len(buf) + 0xFFF) & ~0xFFF
        va += span + rng.randrange(1, 64) * 0x1000
        file_offset += len(buf)

    return MemoryImage(
        regions=tuple(regions),
        ground_truth=tuple(truth),
        profile_id=profile.id,
        scenario=scenario,
        seed=seed,
        encoding=profile.encoding,
        obfuscation=profile.obfuscation,
        xor_key=profile.xor_key,
        fresh_entry=fresh_entry,
        clicked_index=clicked_index,
    )


def simulate(
    profile: LeakProfile, scenario: Scenario, vault: CredentialSet, seed: int
) -> MemoryImage:
    """Generate this cell's memory image; byte-identical for equal inputs."""
    profile.validate()
    plan_rng = random.Random(_mix_seed("plan", profile.id, scenario.value, seed))
    fresh_entry = None
    if scenario is Scenario.S4:
        fresh_entry = _draw_entry(
            plan_rng, len(vault.entries), vault.all_passwords()
        )
    clicked_index = None
    if scenario is Scenario.S5 and vault.entries:
        clicked_index = plan_rng.randrange(len(vault.entries))

    specs = _plant_specs(profile, scenario, vault, fresh_entry, clicked_index)
    for attempt in range(MAX_FILLER_RETRIES):
        rng = random.Random(
            _mix_seed("layout", profile.id, scenario.value, seed, attempt)
        )
        try:
            image = _build_image(
                profile, scenario, vault, specs, fresh_entry, clicked_index, seed, rng
            )
        except _PlacementFailed:
            continue
        if filler_collision_check(image, vault):
            return image
    raise CollisionUnresolvable(
        f"profile {profile.id!r} {scenario.value} seed {seed}: filler kept "
        f"colliding with secrets after {MAX_FILLER_RETRIES} layouts"
    )


def filler_collision_check(image: MemoryImage, vault: CredentialSet) -> bool:
    """True iff no secret occurs in image bytes outside its recorded plants."""
    secrets = list(vault.all_passwords())
    if image.fresh_entry is not None:
        secrets.append(image.fresh_entry.password)

    allowed: set[tuple[int, int, Encoding, str]] = set()
    for plant in image.ground_truth:
        if plant.obfuscated:
            continue
        allowed.add(
            (plant.region_index, plant.offset, plant.encoding, _plant_secret(image, vault, plant))
        )

    for region_index, region in enumerate(image.regions):
        data = region.data
        for secret in set(secrets):
            for encoding in (Encoding.UTF8, Encoding.UTF16LE):
                needle = encode_text(secret, encoding)
                start = 0
                while True:
                    hit = data.find(needle, start)
                    if hit < 0:
                        break
                    if (region_index, hit, encoding, secret) not in allowed:
                        return False
                    start = hit + 1
    return True


def _plant_secret(image: MemoryImage, vault: CredentialSet, plant: PlantRecord) -> str:
    if plant.secret_kind == "master":
        return vault.master_password
    if plant.entry_index is None:
        if image.fresh_entry is None:
            raise ValueError("entry plant without index in an image with no fresh entry")
        return image.fresh_entry.password
    return vault.entries[plant.entry_index].password


def read_plant(image: MemoryImage, plant: PlantRecord) -> str:
    """Read a plant's bytes back, undo any masking, and decode the secret."""
    data = image.regions[plant.region_index].data
    body = data[plant.offset : plant.offset + plant.length]
    if plant.obfuscated:
        body = xor_mask(body, image.xor_key)
    codec = "utf-8" if plant.encoding is Encoding.UTF8 else "utf-16-le"
    return body.decode(codec)


def image_to_dump(image: MemoryImage) -> Dump:
    name = f"synthetic:{image.profile_id}:{image.scenario.value}:{image.seed}"
    return Dump.from_regions(image.regions, SourceKind.RAW, name)


def emit_dump(image: MemoryImage, format: SourceKind) -> bytes:  # noqa: A002 - public API name
    """Serialize the image as a flat raw file or a minidump."""
    if format is SourceKind.RAW:
        return b"".join(region.data for region in image.regions)
    dump = Dump.from_regions(
        image.regions,
        SourceKind.MINIDUMP,
        f"synthetic:{image.profile_id}:{image.scenario.value}:{image.seed}",
    )
    return write_minidump(dump)


# --- ground truth sidecars -----------------------------------------------


def truth_to_json(image: MemoryImage, vault: CredentialSet) -> str:
    doc = {
        "profile_id": image.profile_id,
        "scenario": image.scenario.value,
        "seed": image.seed,
        "encoding": image.encoding.value,
        "obfuscation": image.obfuscation.value,
        "xor_key": image.xor_key.hex() if image.xor_key else None,
        "master_password": vault.master_password,
        "entry_passwords": [e.password for e in vault.entries],
        "fresh_entry_password": image.fresh_entry.password if image.fresh_entry else None,
        "clicked_index": image.clicked_index,
        "plants": [
            {
                "secret_kind": p.secret_kind,
                "entry_index": p.entry_index,
                "region_index": p.region_index,
                "offset": p.offset,
                "length": p.length,
                "encoding": p.encoding.value,
                "obfuscated": p.obfuscated,
            }
            for p in image.ground_truth
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


# --- profile packs -------------------------------------------------------


def _parse_hex_bytes(text: str, context: str) -> bytes:
    try:
        return bytes.fromhex(text.replace(" ", ""))
    except ValueError:
        raise ProfileError(f"{context}: not a hex byte string: {text!r}") from None


def profile_from_dict(obj: object) -> LeakProfile:
    if not isinstance(obj, dict):
        raise ProfileError(f"profile entry must be an object, got {type(obj).__name__}")
    profile_id = obj.get("id")
    if not isinstance(profile_id, str) or not profile_id:
        raise ProfileError("profile field 'id' must be a non-empty string")

    residue_raw = obj.get("residue")
    if not isinstance(residue_raw, dict):
        raise ProfileError(f"profile {profile_id!r}: field 'residue' must be an object")
    residue: dict[Scenario, ScenarioResidue] = {}
    for key, value in residue_raw.items():
        try:
            scenario = Scenario(key)
        except ValueError:
            raise ProfileError(
                f"profile {profile_id!r}: residue key {key!r} is not a scenario S1-S6"
            ) from None
        if not isinstance(value, dict):
            raise ProfileError(
                f"profile {profile_id!r}: residue.{key} must be an object"
            )
        unknown = set(value) - {"master_copies", "entry_copies"}
        if unknown:
            raise ProfileError(
                f"profile {profile_id!r}: residue.{key} has unknown field "
                f"{sorted(unknown)[0]!r}"
            )
        residue[scenario] = ScenarioResidue(
            master_copies=value.get("master_copies", 0),
            entry_copies=value.get("entry_copies", 0),
        )

    encoding_raw = obj.get("encoding", "utf8")
    try:
        encoding = Encoding(encoding_raw)
    except ValueError:
        raise ProfileError(
            f"profile {profile_id!r}: encoding must be utf8 or utf16le, got {encoding_raw!r}"
        ) from None

    obfuscation_raw = obj.get("obfuscation", "none")
    try:
        obfuscation = Obfuscation(obfuscation_raw)
    except ValueError:
        raise ProfileError(
            f"profile {profile_id!r}: obfuscation must be none or xor, got {obfuscation_raw!r}"
        ) from None
    xor_key_raw = obj.get("xor_key")
    xor_key = None
    if xor_key_raw is not None:
        if not isinstance(xor_key_raw, str):
            raise ProfileError(f"profile {profile_id!r}: xor_key must be a hex string")
        xor_key = _parse_hex_bytes(xor_key_raw, f"profile {profile_id!r}: xor_key")

    framing = obj.get("framing")
    if not isinstance(framing, dict):
        raise ProfileError(f"profile {profile_id!r}: field 'framing' must be an object")
    seeds = {}
    for fld in ("prefix_seed", "suffix_seed"):
        value = framing.get(fld)
        if not isinstance(value, int) or isinstance(value, bool):
            raise ProfileError(f"profile {profile_id!r}: framing.{fld} must be an integer")
        seeds[fld] = value

    flags = {}
    for fld in ("clear_on_lock", "requires_interaction"):
        value = obj.get(fld, False)
        if not isinstance(value, bool):
            raise ProfileError(f"profile {profile_id!r}: field {fld!r} must be a boolean")
        flags[fld] = value

    profile = LeakProfile(
        id=profile_id,
        residue=residue,
        encoding=encoding,
        obfuscation=obfuscation,
        xor_key=xor_key,
        prefix_seed=seeds["prefix_seed"],
        suffix_seed=seeds["suffix_seed"],
        clear_on_lock=flags["clear_on_lock"],
        requires_interaction=flags["requires_interaction"],
    )
    profile.validate()
    return profile


def parse_profile_pack(text: str) -> list[LeakProfile]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProfileError(f"profile pack is not valid JSON: {exc}") from None
    if not isinstance(doc, list) or not doc:
        raise ProfileError("profile pack must be a non-empty JSON list")
    profiles = [profile_from_dict(entry) for entry in doc]
    seen: set[str] = set()
    for profile in profiles:
        if profile.id in seen:
            raise ProfileError(f"duplicate profile id {profile.id!r}")
        seen.add(profile.id)
    return profiles


def load_profile_pack(path: str) -> list[LeakProfile]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_profile_pack(fh.read())


def bundled_profile_pack() -> list[LeakProfile]:
    """The profile pack shipped with the package."""
    text = resources.files("dumpscout").joinpath("data/profiles.json").read_text("utf-8")
    return parse_profile_pack(text)


# --- corpus generation ---------------------------------------------------


def write_corpus(
    profiles: Sequence[LeakProfile],
    seeds: Sequence[int],
    out_dir: str | Path,
    n_entries: int = 3,
    scenarios: Sequence[Scenario] = tuple(Scenario),
) -> int:
    """Write <out>/<profile>/<scenario>/<seed>.dmp plus truth sidecars.

    Returns the number of cells written.  One vault is drawn per seed and
    shared by every profile and scenario, mirroring a user who keeps the
    same credentials while scenarios change.
    """
    out = Path(out_dir)
    count = 0
    for profile in profiles:
        for scenario in scenarios:
            cell_dir = out / profile.id / scenario.value
            cell_dir.mkdir(parents=True, exist_ok=True)
            for seed in seeds:
                vault = new_vault(seed, n_entries)
                image = simulate(profile, scenario, vault, seed)
                (cell_dir / f"{seed}.dmp").write_bytes(
                    emit_dump(image, SourceKind.MINIDUMP)
                )
                (cell_dir / f"{seed}.truth.json").write_text(
                    truth_to_json(image, vault), encoding="utf-8"
                )
                count += 1
    return count

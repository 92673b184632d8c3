"""Template manifest: the verifiable bill of materials for a twin.

A manifest lists every artifact someone would need to (re)construct the
vehicle and its twin — control software, the kinematic model, documentation,
hardware blueprints — each with a SHA-256 content hash. Software and model
entries are mandatory; missing documentation or blueprints only degrade the
manifest to "incomplete" with warnings.
"""

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ManifestError

MANIFEST_VERSION = 1

ROLES = ("pt-software", "digital-model", "documentation", "blueprint")
MANDATORY_ROLES = ("pt-software", "digital-model")


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass(frozen=True)
class ManifestEntry:
    role: str
    identifier: str  # path relative to the manifest file
    version: str
    sha256: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ManifestError(f"unknown artifact role {self.role!r}; expected one of {ROLES}")
        if len(self.sha256) != 64 or any(c not in "0123456789abcdef" for c in self.sha256):
            raise ManifestError(f"{self.identifier}: sha256 must be 64 lowercase hex chars")


@dataclass(frozen=True)
class TemplateManifest:
    name: str
    version: str
    entries: tuple[ManifestEntry, ...]

    def roles_present(self) -> set[str]:
        return {entry.role for entry in self.entries}

    def completeness(self) -> dict[str, bool]:
        present = self.roles_present()
        return {role: role in present for role in ROLES}


@dataclass(frozen=True)
class ValidationIssue:
    severity: str  # "error" | "warning"
    message: str


@dataclass
class ValidationReport:
    manifest: TemplateManifest
    issues: list[ValidationIssue] = field(default_factory=list)
    checked_files: int = 0

    @property
    def errors(self) -> list[str]:
        return [i.message for i in self.issues if i.severity == "error"]

    @property
    def warnings(self) -> list[str]:
        return [i.message for i in self.issues if i.severity == "warning"]

    @property
    def ok(self) -> bool:
        return not self.errors

    def to_dict(self) -> dict:
        return {
            "manifest": self.manifest.name,
            "ok": self.ok,
            "checked_files": self.checked_files,
            "errors": self.errors,
            "warnings": self.warnings,
            "completeness": self.manifest.completeness(),
        }


def build_manifest(
    root: Path, name: str, version: str, artifacts: dict[str, list[str]]
) -> TemplateManifest:
    """Hash the given files (``role -> [relative paths]``) under ``root``."""
    entries = []
    for role, paths in artifacts.items():
        for rel in paths:
            target = root / rel
            if not target.is_file():
                raise ManifestError(f"artifact file missing: {target}")
            entries.append(ManifestEntry(role, rel, version, sha256_file(target)))
    return TemplateManifest(name, version, tuple(entries))


def save_manifest(manifest: TemplateManifest, path: Path) -> None:
    payload = {
        "manifest_version": MANIFEST_VERSION,
        "name": manifest.name,
        "version": manifest.version,
        "artifacts": [
            {
                "role": e.role,
                "identifier": e.identifier,
                "version": e.version,
                "sha256": e.sha256,
            }
            for e in manifest.entries
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_manifest(path: Path) -> TemplateManifest:
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest file not found: {path}")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ManifestError("manifest root must be a JSON object")
    if payload.get("manifest_version") != MANIFEST_VERSION:
        raise ManifestError(f"unsupported manifest_version {payload.get('manifest_version')!r}")
    try:
        entries = tuple(
            ManifestEntry(a["role"], a["identifier"], a["version"], a["sha256"])
            for a in payload["artifacts"]
        )
        return TemplateManifest(payload["name"], payload["version"], entries)
    except (KeyError, TypeError) as exc:
        raise ManifestError(f"malformed manifest entry: {exc}") from exc


def validate_manifest(manifest: TemplateManifest, root: Path) -> ValidationReport:
    """Check mandatory roles and verify every content hash against ``root``."""
    report = ValidationReport(manifest)
    present = manifest.roles_present()
    for role in MANDATORY_ROLES:
        if role not in present:
            report.issues.append(ValidationIssue("error", f"mandatory role missing: {role}"))
    for role in ROLES:
        if role not in MANDATORY_ROLES and role not in present:
            report.issues.append(ValidationIssue("warning", f"optional role missing: {role}"))
    for entry in manifest.entries:
        target = Path(root) / entry.identifier
        if not target.is_file():
            report.issues.append(ValidationIssue("error", f"{entry.identifier}: file not found"))
            continue
        actual = sha256_file(target)
        report.checked_files += 1
        if actual != entry.sha256:
            report.issues.append(
                ValidationIssue(
                    "error",
                    f"{entry.identifier}: hash mismatch (manifest {entry.sha256[:12]}…, file {actual[:12]}…)",
                )
            )
    return report


def validate_manifest_file(path: Path) -> ValidationReport:
    """Load and validate; artifact paths resolve relative to the manifest."""
    path = Path(path)
    return validate_manifest(load_manifest(path), path.parent)

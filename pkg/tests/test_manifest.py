"""Template manifests: hashing, mandatory roles, tamper detection."""

import hashlib
import json

import pytest

from twincar.errors import ManifestError
from twincar.manifest import (
    MANDATORY_ROLES,
    ROLES,
    ManifestEntry,
    build_manifest,
    load_manifest,
    save_manifest,
    sha256_file,
    validate_manifest,
    validate_manifest_file,
)


@pytest.fixture
def artifact_tree(tmp_path):
    (tmp_path / "firmware").mkdir()
    (tmp_path / "firmware" / "drive.py").write_text("print('drive')\n")
    (tmp_path / "model.yaml").write_text("wheelbase_m: 0.095\n")
    (tmp_path / "README.txt").write_text("how to assemble\n")
    (tmp_path / "chassis.step").write_text("solid chassis\n")
    return tmp_path


@pytest.fixture
def full_manifest(artifact_tree):
    return build_manifest(
        artifact_tree,
        name="toycar",
        version="1.0",
        artifacts={
            "pt-software": ["firmware/drive.py"],
            "digital-model": ["model.yaml"],
            "documentation": ["README.txt"],
            "blueprint": ["chassis.step"],
        },
    )


def test_roles():
    assert ROLES == ("pt-software", "digital-model", "documentation", "blueprint")
    assert MANDATORY_ROLES == ("pt-software", "digital-model")


def test_sha256_file_matches_hashlib(artifact_tree):
    path = artifact_tree / "model.yaml"
    assert sha256_file(path) == hashlib.sha256(path.read_bytes()).hexdigest()


def test_entry_validation():
    good = "0" * 64
    ManifestEntry("pt-software", "a.py", "1", good)
    with pytest.raises(ManifestError, match="unknown artifact role"):
        ManifestEntry("recipe", "a.py", "1", good)
    with pytest.raises(ManifestError, match="64 lowercase hex"):
        ManifestEntry("pt-software", "a.py", "1", "abc")
    with pytest.raises(ManifestError, match="64 lowercase hex"):
        ManifestEntry("pt-software", "a.py", "1", "G" * 64)


def test_build_manifest_hashes_files(full_manifest, artifact_tree):
    assert len(full_manifest.entries) == 4
    entry = next(e for e in full_manifest.entries if e.identifier == "model.yaml")
    assert entry.sha256 == sha256_file(artifact_tree / "model.yaml")
    assert full_manifest.completeness() == {role: True for role in ROLES}


def test_build_manifest_missing_file(artifact_tree):
    with pytest.raises(ManifestError, match="missing"):
        build_manifest(artifact_tree, "x", "1", {"pt-software": ["ghost.py"]})


def test_save_load_round_trip(full_manifest, tmp_path):
    path = tmp_path / "manifest.json"
    save_manifest(full_manifest, path)
    assert load_manifest(path) == full_manifest
    payload = json.loads(path.read_text())
    assert payload["manifest_version"] == 1
    assert len(payload["artifacts"]) == 4


def test_load_rejects_garbage(tmp_path):
    missing = tmp_path / "none.json"
    with pytest.raises(ManifestError, match="not found"):
        load_manifest(missing)

    bad_json = tmp_path / "bad.json"
    bad_json.write_text("{not json")
    with pytest.raises(ManifestError, match="JSON"):
        load_manifest(bad_json)

    wrong_version = tmp_path / "v9.json"
    wrong_version.write_text(json.dumps({"manifest_version": 9, "name": "x", "version": "1", "artifacts": []}))
    with pytest.raises(ManifestError, match="manifest_version"):
        load_manifest(wrong_version)

    malformed = tmp_path / "m.json"
    malformed.write_text(
        json.dumps({"manifest_version": 1, "name": "x", "version": "1", "artifacts": [{"role": "pt-software"}]})
    )
    with pytest.raises(ManifestError, match="malformed"):
        load_manifest(malformed)


def test_validate_clean_manifest(full_manifest, artifact_tree):
    report = validate_manifest(full_manifest, artifact_tree)
    assert report.ok
    assert report.errors == []
    assert report.warnings == []
    assert report.checked_files == 4
    assert report.to_dict()["ok"] is True


def test_missing_mandatory_role_is_error(artifact_tree):
    manifest = build_manifest(artifact_tree, "x", "1", {"pt-software": ["firmware/drive.py"]})
    report = validate_manifest(manifest, artifact_tree)
    assert not report.ok
    assert any("digital-model" in e for e in report.errors)


def test_missing_optional_role_is_warning_only(artifact_tree):
    manifest = build_manifest(
        artifact_tree,
        "x",
        "1",
        {"pt-software": ["firmware/drive.py"], "digital-model": ["model.yaml"]},
    )
    report = validate_manifest(manifest, artifact_tree)
    assert report.ok
    assert len(report.warnings) == 2  # documentation + blueprint
    assert report.to_dict()["completeness"]["blueprint"] is False


def test_tampered_file_fails_hash_check(full_manifest, artifact_tree):
    (artifact_tree / "model.yaml").write_text("wheelbase_m: 0.200\n")
    report = validate_manifest(full_manifest, artifact_tree)
    assert not report.ok
    assert any("hash mismatch" in e for e in report.errors)


def test_deleted_file_is_error(full_manifest, artifact_tree):
    (artifact_tree / "chassis.step").unlink()
    report = validate_manifest(full_manifest, artifact_tree)
    assert not report.ok
    assert any("not found" in e for e in report.errors)
    assert report.checked_files == 3


def test_validate_manifest_file_resolves_relative_to_manifest(full_manifest, artifact_tree):
    path = artifact_tree / "manifest.json"
    save_manifest(full_manifest, path)
    report = validate_manifest_file(path)
    assert report.ok and report.checked_files == 4

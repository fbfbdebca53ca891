import hashlib
import json

import pytest

from jc_blockade.manifest_service import ManifestService


@pytest.fixture
def manifest(tmp_path):
    return ManifestService(tmp_path / "out" / "run")


def test_paths_follow_prefix(manifest, tmp_path):
    assert manifest.path_for("g2.csv") == tmp_path / "out" / "run_g2.csv"
    assert manifest.manifest_path == tmp_path / "out" / "run_manifest.json"


def test_write_registers_hash(manifest):
    path = manifest.write_text("steady.csv", "# {}\nphoton_number\n0.5\n", "table")
    assert path.read_text(encoding="utf-8") == "# {}\nphoton_number\n0.5\n"
    entry = manifest.get_artifacts()["run_steady.csv"]
    assert entry["kind"] == "table"
    assert entry["sha256"] == hashlib.sha256(path.read_bytes()).hexdigest()
    assert entry["bytes"] == len(path.read_bytes())


def test_non_ascii_is_hashed_as_utf8(manifest):
    path = manifest.write_text("note.txt", "θ = π/4\n", "note")
    assert manifest.get_artifacts()[path.name]["sha256"] == ManifestService.compute_hash("θ = π/4\n".encode("utf-8"))


def test_artifact_view_is_read_only(manifest):
    manifest.write_text("a.txt", "a", "note")
    view = manifest.get_artifacts()
    with pytest.raises(TypeError):
        view["b.txt"] = {}


def test_save_and_verify(manifest):
    manifest.write_text("a.txt", "alpha\n", "note")
    manifest.write_text("b.txt", "beta\n", "note")
    path = manifest.save_manifest()
    assert sorted(ManifestService.load_manifest(path)) == ["run_a.txt", "run_b.txt"]
    assert ManifestService.verify(path) == []


def test_verify_detects_tampering_and_missing(manifest, caplog):
    a = manifest.write_text("a.txt", "alpha\n", "note")
    b = manifest.write_text("b.txt", "beta\n", "note")
    path = manifest.save_manifest()
    a.write_text("alpha!\n", encoding="utf-8")
    b.unlink()
    assert ManifestService.verify(path) == ["run_a.txt", "run_b.txt"]
    assert "清单校验失败" in caplog.text


def test_manifest_text_is_deterministic(tmp_path):
    texts = []
    for order in (("a.txt", "b.txt"), ("b.txt", "a.txt")):
        service = ManifestService(tmp_path / "run")
        for name in order:
            service.write_text(name, name.upper(), "note")
        texts.append(service.manifest_text())
    assert texts[0] == texts[1]
    payload = json.loads(texts[0])
    assert list(payload["artifacts"]) == ["run_a.txt", "run_b.txt"]


def test_rewrite_replaces_entry(manifest):
    manifest.write_text("a.txt", "first", "note")
    manifest.write_text("a.txt", "second", "note")
    assert len(manifest.get_artifacts()) == 1
    assert manifest.get_artifacts()["run_a.txt"]["sha256"] == ManifestService.compute_hash("second")

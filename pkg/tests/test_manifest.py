import pytest

from ml_pipeline.exceptions import ManifestError
from ml_pipeline.feature_store.feature_definitions import LanguageId
from ml_pipeline.feature_store.manifest import CorpusManifest, merge_manifests

from .conftest import make_record


@pytest.fixture
def manifest(tmp_path):
    records = [
        make_record("A00_000", LanguageId.A, gender="F"),
        make_record("A00_001", LanguageId.A, split="valid"),
        make_record("B00_000", LanguageId.B, content_id="", ppg_path="ppg/mppg/B00_000.xvcf"),
        make_record(
            "B01_TA00", LanguageId.B, speaker_id="B01", split="test",
            content_id="TA00", content_language=LanguageId.A,
        ),
    ]
    return CorpusManifest(records, tmp_path)


class TestCorpusManifest:
    def test_save_load_preserves_records(self, manifest, tmp_path):
        path = manifest.save(tmp_path / "manifest.jsonl")
        loaded = CorpusManifest.load(path)
        assert loaded.records == manifest.records
        assert loaded.root == tmp_path

    def test_one_json_object_per_line(self, manifest, tmp_path):
        path = manifest.save(tmp_path / "manifest.jsonl")
        assert len(path.read_text().strip().splitlines()) == 4

    def test_lookup_and_missing_id(self, manifest):
        assert manifest["B01_TA00"].content_language is LanguageId.B.other
        with pytest.raises(ManifestError):
            manifest["Z99_000"]

    def test_duplicate_ids_rejected(self, tmp_path):
        record = make_record("A00_000", LanguageId.A)
        with pytest.raises(ManifestError):
            CorpusManifest([record, record], tmp_path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ManifestError):
            CorpusManifest.load(tmp_path / "absent.jsonl")

    def test_missing_required_field(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"utterance_id": "A00_000", "language": "A"}\n')
        with pytest.raises(ManifestError):
            CorpusManifest.load(path)

    def test_empty_manifest_round_trips(self, tmp_path):
        path = CorpusManifest([], tmp_path).save(tmp_path / "empty.jsonl")
        assert len(CorpusManifest.load(path)) == 0

    def test_filters(self, manifest):
        assert [r.utterance_id for r in manifest.by_split("valid")] == ["A00_001"]
        assert len(manifest.by_language(LanguageId.B)) == 2
        assert manifest.speakers() == ["A00", "B00", "B01"]
        assert manifest.speakers(LanguageId.B) == ["B00", "B01"]
        assert manifest.languages() == [LanguageId.A, LanguageId.B]

    def test_resolve_relative_to_root(self, manifest, tmp_path):
        assert manifest.resolve("acoustic/x.xvcf") == tmp_path / "acoustic" / "x.xvcf"
        assert manifest.resolve(str(tmp_path / "abs.xvcf")) == tmp_path / "abs.xvcf"

    def test_with_updates_leaves_original(self, manifest):
        updated = manifest.with_updates({"A00_000": {"ppg_path": "ppg/bppg/A00_000.xvcf"}})
        assert updated["A00_000"].ppg_path == "ppg/bppg/A00_000.xvcf"
        assert manifest["A00_000"].ppg_path is None

    def test_digest_tracks_records_not_location(self, manifest, tmp_path):
        moved = CorpusManifest(list(reversed(manifest.records)), tmp_path / "elsewhere")
        assert moved.digest() == manifest.digest()
        loaded = CorpusManifest.load(manifest.save(tmp_path / "manifest.jsonl"))
        assert loaded.digest() == manifest.digest()
        updated = manifest.with_updates({"A00_000": {"num_frames": 99}})
        assert updated.digest() != manifest.digest()
        assert manifest.filter(lambda r: r.split != "test").digest() != manifest.digest()

    def test_counts(self, manifest):
        counts = manifest.counts()
        assert list(counts.columns) == ["language", "speaker_id", "split", "utterances"]
        assert counts["utterances"].sum() == 4

    def test_merge_requires_same_root(self, manifest, tmp_path):
        other = CorpusManifest([make_record("A01_000", LanguageId.A)], tmp_path / "elsewhere")
        with pytest.raises(ManifestError):
            merge_manifests([manifest, other])
        with pytest.raises(ManifestError):
            merge_manifests([])
        merged = merge_manifests([manifest, CorpusManifest([make_record("A01_000", LanguageId.A)], tmp_path)])
        assert len(merged) == 5

import struct
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ml_pipeline.exceptions import (
    BadMagicError,
    DimensionMismatchError,
    TruncatedPayloadError,
    UnsupportedVersionError,
)
from ml_pipeline.feature_store.feature_definitions import (
    AcousticLayout,
    AcousticSequence,
    FeatureKind,
    Posteriorgram,
    PosteriorgramKind,
    SpeakerEmbedding,
    build_input_frames,
)
from ml_pipeline.feature_store.feature_io import (
    HEADER_SIZE,
    read_acoustic,
    read_feature_file,
    read_posteriorgram,
    read_speaker_embedding,
    write_acoustic,
    write_feature_file,
    write_posteriorgram,
    write_speaker_embedding,
)

GOLDEN = Path(__file__).parent / "data" / "golden_mixed_ppg.xvcf"
GOLDEN_MATRIX = np.array([[0.5, 0.25, 0.25], [1.0, 0.0, 0.0]])


class TestGoldenLayout:
    def test_header_fields(self):
        raw = GOLDEN.read_bytes()
        assert raw[0:4] == b"XVCF"
        assert struct.unpack_from("<H", raw, 4)[0] == 1
        assert struct.unpack_from("<H", raw, 6)[0] == FeatureKind.MIXED_LINGUAL_PPG
        assert struct.unpack_from("<I", raw, 8)[0] == 3
        assert struct.unpack_from("<I", raw, 12)[0] == 2
        assert HEADER_SIZE == 16
        assert len(raw) == HEADER_SIZE + 4 * 2 * 3

    def test_payload_is_row_major_float32(self):
        raw = GOLDEN.read_bytes()
        payload = struct.unpack_from("<6f", raw, HEADER_SIZE)
        assert payload == (0.5, 0.25, 0.25, 1.0, 0.0, 0.0)

    def test_reader_decodes_golden(self):
        kind_code, matrix = read_feature_file(GOLDEN)
        assert kind_code == FeatureKind.MIXED_LINGUAL_PPG
        assert matrix.dtype == np.float64
        np.testing.assert_array_equal(matrix, GOLDEN_MATRIX)

    def test_writer_reproduces_golden_bytes(self, tmp_path):
        out = tmp_path / "copy.xvcf"
        write_feature_file(out, FeatureKind.MIXED_LINGUAL_PPG, GOLDEN_MATRIX)
        assert out.read_bytes() == GOLDEN.read_bytes()


class TestRoundTrip:
    @settings(max_examples=25, deadline=None)
    @given(
        arrays(
            np.float32,
            st.tuples(st.integers(1, 12), st.integers(1, 9)),
            elements=st.floats(-1e6, 1e6, width=32, allow_nan=False),
        )
    )
    def test_binary32_values_round_trip_exactly(self, tmp_path_factory, matrix):
        path = tmp_path_factory.mktemp("rt") / "m.xvcf"
        write_feature_file(path, FeatureKind.ACOUSTIC, matrix)
        kind_code, loaded = read_feature_file(path)
        assert kind_code == FeatureKind.ACOUSTIC
        np.testing.assert_array_equal(loaded, matrix.astype(np.float64))

    def test_binary64_input_is_stored_as_binary32(self, tmp_path):
        path = tmp_path / "m.xvcf"
        write_feature_file(path, FeatureKind.ACOUSTIC, np.array([[0.1, 1.0 / 3.0]]))
        _, loaded = read_feature_file(path)
        np.testing.assert_array_equal(loaded, np.array([[0.1, 1.0 / 3.0]], dtype=np.float32).astype(np.float64))

    def test_posteriorgram_blocks_follow_the_kind(self, tmp_path):
        frames = np.hstack([np.full((3, 2), 0.5), np.full((3, 4), 0.25)])
        ppg = Posteriorgram(PosteriorgramKind.BILINGUAL_STACKED, frames, (2, 4))
        write_posteriorgram(tmp_path / "p.xvcf", ppg)
        loaded = read_posteriorgram(tmp_path / "p.xvcf", dim_a=2)
        assert loaded.kind is PosteriorgramKind.BILINGUAL_STACKED
        assert loaded.block_dims == (2, 4)
        assert loaded.expected_row_sum == 2.0

    def test_speaker_embedding_round_trip(self, tmp_path):
        values = np.array([0.6, 0.8])
        write_speaker_embedding(tmp_path / "e.xvcf", SpeakerEmbedding("A00", values))
        loaded = read_speaker_embedding(tmp_path / "e.xvcf", "A00")
        np.testing.assert_array_equal(loaded.values, values.astype(np.float32).astype(np.float64))


class TestMalformedFiles:
    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.xvcf"
        path.write_bytes(b"ABCD" + GOLDEN.read_bytes()[4:])
        with pytest.raises(BadMagicError):
            read_feature_file(path)

    @pytest.mark.parametrize("raw", [b"", b"AB", b"XVCG\x01\x00"])
    def test_short_file_with_wrong_prefix_is_bad_magic(self, tmp_path, raw):
        path = tmp_path / "short.xvcf"
        path.write_bytes(raw)
        with pytest.raises(BadMagicError):
            read_feature_file(path)

    @pytest.mark.parametrize("length", [2, 4, 10, 15])
    def test_cut_off_header_is_truncated(self, tmp_path, length):
        path = tmp_path / "short.xvcf"
        path.write_bytes(GOLDEN.read_bytes()[:length])
        with pytest.raises(TruncatedPayloadError) as info:
            read_feature_file(path)
        assert info.value.expected == 16
        assert info.value.actual == length

    def test_unsupported_version(self, tmp_path):
        raw = bytearray(GOLDEN.read_bytes())
        raw[4:6] = struct.pack("<H", 2)
        path = tmp_path / "v2.xvcf"
        path.write_bytes(bytes(raw))
        with pytest.raises(UnsupportedVersionError):
            read_feature_file(path)

    def test_truncated_payload_reports_sizes(self, tmp_path):
        path = tmp_path / "cut.xvcf"
        path.write_bytes(GOLDEN.read_bytes()[:-4])
        with pytest.raises(TruncatedPayloadError) as info:
            read_feature_file(path)
        assert info.value.expected == 24
        assert info.value.actual == 20

    def test_trailing_bytes_are_rejected(self, tmp_path):
        path = tmp_path / "long.xvcf"
        path.write_bytes(GOLDEN.read_bytes() + b"\x00")
        with pytest.raises(TruncatedPayloadError):
            read_feature_file(path)

    @pytest.mark.parametrize("shape", [(0, 3), (3, 0)])
    def test_empty_matrix_cannot_be_written(self, tmp_path, shape):
        with pytest.raises(DimensionMismatchError):
            write_feature_file(tmp_path / "e.xvcf", FeatureKind.ACOUSTIC, np.zeros(shape))

    def test_acoustic_reader_checks_kind(self):
        with pytest.raises(DimensionMismatchError):
            read_acoustic(GOLDEN)


class TestTypes:
    def test_acoustic_layout_slices(self):
        layout = AcousticLayout(mcc_dim=4)
        assert layout.width == 19
        assert (layout.mcc.start, layout.mcc.stop) == (1, 13)
        assert (layout.lf0.start, layout.lf0.stop) == (13, 16)
        assert (layout.ap.start, layout.ap.stop) == (16, 19)
        assert AcousticLayout.from_width(127).mcc_dim == 40

    def test_invalid_acoustic_width(self):
        with pytest.raises(DimensionMismatchError):
            AcousticLayout.from_width(20)

    def test_acoustic_sequence_round_trip(self, tmp_path):
        frames = np.arange(2 * 19, dtype=np.float64).reshape(2, 19)
        write_acoustic(tmp_path / "a.xvcf", AcousticSequence(frames, mcc_dim=4))
        loaded = read_acoustic(tmp_path / "a.xvcf")
        assert loaded.mcc_dim == 4
        np.testing.assert_array_equal(loaded.frames, frames)
        np.testing.assert_array_equal(loaded.log_f0, frames[:, 13])

    def test_arrays_are_read_only(self):
        ppg = Posteriorgram(PosteriorgramKind.MIXED_LINGUAL, GOLDEN_MATRIX, (3,))
        with pytest.raises(ValueError):
            ppg.frames[0, 0] = 1.0

    def test_stacked_posteriorgram_needs_two_blocks(self):
        with pytest.raises(DimensionMismatchError):
            Posteriorgram(PosteriorgramKind.BILINGUAL_STACKED, GOLDEN_MATRIX, (3,))

    def test_input_frames_repeat_the_embedding(self):
        ppg = Posteriorgram(PosteriorgramKind.MIXED_LINGUAL, GOLDEN_MATRIX, (3,))
        frames = build_input_frames(ppg, SpeakerEmbedding("B01", [0.0, 1.0]))
        assert frames.width == 5
        np.testing.assert_array_equal(frames.rows[:, 3:], [[0.0, 1.0], [0.0, 1.0]])
        np.testing.assert_array_equal(frames.rows[:, :3], GOLDEN_MATRIX)

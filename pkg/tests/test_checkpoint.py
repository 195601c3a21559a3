from collections import OrderedDict

import numpy as np
import pytest

from ml_pipeline.exceptions import CheckpointError
from ml_pipeline.model_development.checkpoint import file_digest, load_checkpoint, save_checkpoint


@pytest.fixture
def tensors():
    return OrderedDict(
        [
            ("trunk.proj.W", np.arange(6, dtype=np.float64).reshape(2, 3) / 7.0),
            ("trunk.proj.b", np.array([np.pi, -np.e])),
            ("scalar", np.array(1e-300)),
        ]
    )


class TestCheckpoint:
    def test_round_trip_is_exact_and_ordered(self, tmp_path, tensors):
        path = save_checkpoint(tmp_path / "model.xvck", tensors, {"seed": 3, "note": "x"})
        checkpoint = load_checkpoint(path)
        assert list(checkpoint.tensors) == list(tensors)
        for name, value in tensors.items():
            np.testing.assert_array_equal(checkpoint.tensors[name], value)
        assert checkpoint.metadata == {"seed": 3, "note": "x"}

    def test_header_lines(self, tmp_path, tensors):
        raw = save_checkpoint(tmp_path / "model.xvck", tensors, {}).read_bytes()
        first, second, _ = raw.split(b"\n", 2)
        assert first == b"XVCK 1"
        assert int(second) > 0

    def test_no_partial_file_left(self, tmp_path, tensors):
        save_checkpoint(tmp_path / "model.xvck", tensors, {})
        assert [p.name for p in tmp_path.iterdir()] == ["model.xvck"]

    def test_same_content_same_digest(self, tmp_path, tensors):
        first = save_checkpoint(tmp_path / "a.xvck", tensors, {"seed": 1})
        second = save_checkpoint(tmp_path / "b.xvck", tensors, {"seed": 1})
        assert file_digest(first) == file_digest(second)

    def test_reserved_metadata_key(self, tmp_path, tensors):
        with pytest.raises(CheckpointError):
            save_checkpoint(tmp_path / "m.xvck", tensors, {"tensors": []})

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.xvck"
        path.write_bytes(b"NOPE 1\n2\n{}")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_unknown_version(self, tmp_path, tensors):
        path = save_checkpoint(tmp_path / "m.xvck", tensors, {})
        path.write_bytes(path.read_bytes().replace(b"XVCK 1", b"XVCK 9", 1))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_truncated_payload(self, tmp_path, tensors):
        path = save_checkpoint(tmp_path / "m.xvck", tensors, {})
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

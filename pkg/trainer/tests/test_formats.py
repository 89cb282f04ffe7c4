"""File-format layer: HSC/PGM readers and the HSWT container."""

import struct

import numpy as np
import pytest

from hsitrain import FormatError, load_cube, load_labels, load_tensors, save_tensors


def _hsc_bytes(data: np.ndarray, stage: int = 3) -> bytes:
    bands, h, w = data.shape[2], data.shape[0], data.shape[1]
    header = struct.pack("<4sBBHII", b"HSC1", stage, 0, bands, h, w)
    return header + data.transpose(2, 0, 1).astype("<f4").tobytes()


class TestLoadCube:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        data = rng.random((6, 9, 4), dtype=np.float32)
        path = tmp_path / "c.hsc"
        path.write_bytes(_hsc_bytes(data, stage=2))
        got, stage = load_cube(path)
        assert stage == "filtered"
        assert got.shape == (6, 9, 4)
        assert np.array_equal(got, data)

    def test_stage_names(self, tmp_path):
        data = np.zeros((2, 2, 1), dtype=np.float32)
        for code, name in enumerate(("reflectance", "aligned", "filtered",
                                     "normalized")):
            path = tmp_path / f"s{code}.hsc"
            path.write_bytes(_hsc_bytes(data, stage=code))
            assert load_cube(path)[1] == name

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "c.hsc"
        path.write_bytes(b"HSC2" + bytes(20))
        with pytest.raises(FormatError, match="magic"):
            load_cube(path)

    def test_unknown_stage(self, tmp_path):
        path = tmp_path / "c.hsc"
        path.write_bytes(_hsc_bytes(np.zeros((2, 2, 1), np.float32), stage=9))
        with pytest.raises(FormatError, match="stage"):
            load_cube(path)

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "c.hsc"
        path.write_bytes(b"HSC1\x00")
        with pytest.raises(FormatError, match="truncated"):
            load_cube(path)

    def test_payload_length_mismatch(self, tmp_path):
        path = tmp_path / "c.hsc"
        path.write_bytes(_hsc_bytes(np.zeros((2, 2, 1), np.float32))[:-4])
        with pytest.raises(FormatError, match="payload"):
            load_cube(path)

    def test_matches_primary_writer(self, tmp_path):
        hypercube = pytest.importorskip("specdrive.hypercube")
        rng = np.random.default_rng(1)
        data = rng.random((8, 5, 3), dtype=np.float32)
        cube = hypercube.HyperCube.from_array(data, hypercube.Stage.NORMALIZED)
        path = tmp_path / "c.hsc"
        hypercube.save_cube(cube, path)
        got, stage = load_cube(path)
        assert stage == "normalized"
        assert np.array_equal(got, data)


class TestLoadLabels:
    def test_plain(self, tmp_path):
        path = tmp_path / "l.pgm"
        path.write_bytes(b"P5\n4 3\n255\n" + bytes(range(12)))
        got = load_labels(path)
        assert got.shape == (3, 4)
        assert got[2, 3] == 11

    def test_comments_and_whitespace(self, tmp_path):
        path = tmp_path / "l.pgm"
        path.write_bytes(b"P5\n# comment line\n 2  # more\n2\n255\n" + bytes(4))
        assert load_labels(path).shape == (2, 2)

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "l.pgm"
        path.write_bytes(b"P2\n2 2\n255\n0 0 0 0\n")
        with pytest.raises(FormatError, match="P5|binary"):
            load_labels(path)

    def test_wrong_maxval(self, tmp_path):
        path = tmp_path / "l.pgm"
        path.write_bytes(b"P5\n2 2\n99\n" + bytes(4))
        with pytest.raises(FormatError, match="maxval"):
            load_labels(path)

    def test_short_payload(self, tmp_path):
        path = tmp_path / "l.pgm"
        path.write_bytes(b"P5\n4 4\n255\n" + bytes(7))
        with pytest.raises(FormatError, match="length"):
            load_labels(path)

    def test_non_numeric_header(self, tmp_path):
        path = tmp_path / "l.pgm"
        path.write_bytes(b"P5\nx 2\n255\n" + bytes(4))
        with pytest.raises(FormatError, match="numeric"):
            load_labels(path)

    def test_writable_copy(self, tmp_path):
        path = tmp_path / "l.pgm"
        path.write_bytes(b"P5\n2 2\n255\n" + bytes(4))
        got = load_labels(path)
        got[0, 0] = 7  # must not raise: reader returns an owned array


class TestHswt:
    def tensors(self):
        rng = np.random.default_rng(2)
        return {
            "a.w": rng.normal(size=(3, 2, 3, 3)).astype(np.float32),
            "a.b": np.zeros(3, dtype=np.float32),
            "codes": rng.integers(-100, 100, size=(4, 5)).astype(np.int8),
            "steps": np.array([1, -2, 3], dtype=np.int32),
        }

    def test_round_trip(self, tmp_path):
        path = tmp_path / "w.hswt"
        tensors = self.tensors()
        save_tensors(path, tensors, {"model": "demo", "count": 4})
        got, meta = load_tensors(path)
        assert list(got) == list(tensors)
        for name in tensors:
            assert got[name].dtype == tensors[name].dtype
            assert np.array_equal(got[name], tensors[name])
        assert meta == {"model": "demo", "count": "4"}

    def test_scalar_tensor_promoted(self, tmp_path):
        # 0-d arrays come back as (1,): the writer stores them contiguous,
        # which promotes the shape (matching the consumer's writer exactly)
        path = tmp_path / "w.hswt"
        save_tensors(path, {"s": np.float32(2.5).reshape(())})
        got, _ = load_tensors(path)
        assert got["s"].shape == (1,)
        assert got["s"][0] == np.float32(2.5)

    def test_order_preserved(self, tmp_path):
        path = tmp_path / "w.hswt"
        names = [f"t{i}" for i in (5, 1, 9, 3)]
        save_tensors(path, {n: np.zeros(1, np.float32) for n in names},
                     {"z": 1, "a": 2})
        got, meta = load_tensors(path)
        assert list(got) == names
        assert list(meta) == ["z", "a"]

    def test_unsupported_dtype(self, tmp_path):
        with pytest.raises(FormatError, match="dtype"):
            save_tensors(tmp_path / "w.hswt", {"x": np.zeros(2, np.float64)})

    def test_duplicate_name(self, tmp_path):
        path = tmp_path / "w.hswt"
        save_tensors(path, {"aa": np.zeros(2, np.float32),
                            "ab": np.zeros(2, np.float32)})
        raw = path.read_bytes().replace(b"ab", b"aa")
        path.write_bytes(raw)
        with pytest.raises(FormatError, match="duplicate"):
            load_tensors(path)

    def test_trailing_bytes(self, tmp_path):
        path = tmp_path / "w.hswt"
        save_tensors(path, {"x": np.zeros(2, np.float32)})
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(FormatError, match="trailing"):
            load_tensors(path)

    def test_truncation(self, tmp_path):
        path = tmp_path / "w.hswt"
        save_tensors(path, {"x": np.arange(32, dtype=np.float32)})
        path.write_bytes(path.read_bytes()[:-9])
        with pytest.raises(FormatError, match="truncated"):
            load_tensors(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "w.hswt"
        save_tensors(path, {"x": np.zeros(2, np.float32)})
        path.write_bytes(b"XSWT" + path.read_bytes()[4:])
        with pytest.raises(FormatError, match="magic"):
            load_tensors(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "w.hswt"
        save_tensors(path, {"x": np.zeros(2, np.float32)})
        raw = bytearray(path.read_bytes())
        raw[4] = 9
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="version"):
            load_tensors(path)

    def test_unknown_dtype_code(self, tmp_path):
        path = tmp_path / "w.hswt"
        save_tensors(path, {"x": np.zeros(2, np.float32)})
        raw = bytearray(path.read_bytes())
        # magic(4) version+count(4) name_len(2) name(1) -> dtype byte
        raw[11] = 7
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="dtype"):
            load_tensors(path)

    def test_writer_matches_primary_bytes(self, tmp_path):
        hswt = pytest.importorskip("specdrive.hswt")
        tensors = self.tensors()
        meta = {"model": "demo", "n": 3}
        ours = tmp_path / "ours.hswt"
        theirs = tmp_path / "theirs.hswt"
        save_tensors(ours, tensors, meta)
        hswt.save_tensors(theirs, tensors, meta)
        assert ours.read_bytes() == theirs.read_bytes()
        got, gmeta = hswt.load_tensors(ours)
        assert list(got) == list(tensors)
        assert gmeta == {"model": "demo", "n": "3"}

import numpy as np
import pytest

from sceneadapt.errors import DataError, UsageError
from sceneadapt.fileio import (atomic_write_json, atomic_write_text, read_pgm,
                               read_ppm, write_pgm, write_ppm)


@pytest.fixture
def rng():
    return np.random.default_rng(9)


def test_ppm_round_trip_uint8(tmp_path, rng):
    img = rng.integers(0, 256, (13, 7, 3)).astype(np.uint8)
    path = str(tmp_path / "img.ppm")
    write_ppm(path, img)
    assert np.array_equal(read_ppm(path), img)


def test_ppm_float_input_quantizes(tmp_path):
    img = np.zeros((2, 2, 3))
    img[0, 0] = [0.0, 0.5, 1.0]
    path = str(tmp_path / "img.ppm")
    write_ppm(path, img)
    assert list(read_ppm(path)[0, 0]) == [0, 128, 255]


def test_pgm_round_trip(tmp_path, rng):
    mask = rng.integers(0, 13, (9, 16)).astype(np.uint8)
    path = str(tmp_path / "mask.pgm")
    write_pgm(path, mask)
    assert np.array_equal(read_pgm(path), mask)


def test_ppm_header_layout(tmp_path):
    path = str(tmp_path / "img.ppm")
    write_ppm(path, np.zeros((3, 5, 3), dtype=np.uint8))
    raw = open(path, "rb").read()
    assert raw.startswith(b"P6\n5 3\n255\n")
    assert len(raw) == len(b"P6\n5 3\n255\n") + 45


def test_read_rejects_wrong_magic(tmp_path):
    path = str(tmp_path / "bad.ppm")
    (tmp_path / "bad.ppm").write_bytes(b"P3\n1 1\n255\n\x00\x00\x00")
    with pytest.raises(DataError):
        read_ppm(path)


def test_read_rejects_truncated_payload(tmp_path):
    path = str(tmp_path / "cut.pgm")
    (tmp_path / "cut.pgm").write_bytes(b"P5\n4 4\n255\n\x00\x00")
    with pytest.raises(DataError):
        read_pgm(path)


def test_read_skips_comment_lines(tmp_path, rng):
    mask = rng.integers(0, 9, (2, 3)).astype(np.uint8)
    path = str(tmp_path / "c.pgm")
    (tmp_path / "c.pgm").write_bytes(b"P5\n# a comment\n3 2\n255\n" + mask.tobytes())
    assert np.array_equal(read_pgm(path), mask)


def test_write_rejects_out_of_range_floats(tmp_path):
    with pytest.raises(UsageError):
        write_ppm(str(tmp_path / "x.ppm"), np.full((2, 2, 3), 1.5))


def test_write_rejects_bad_shapes(tmp_path):
    with pytest.raises(UsageError):
        write_ppm(str(tmp_path / "x.ppm"), np.zeros((2, 2), dtype=np.uint8))
    with pytest.raises(UsageError):
        write_pgm(str(tmp_path / "x.pgm"), np.zeros((2, 2, 3), dtype=np.uint8))


def test_atomic_writes_leave_no_temp_files(tmp_path):
    atomic_write_text(str(tmp_path / "a.txt"), "hello\n")
    atomic_write_json(str(tmp_path / "b.json"), {"k": [1, 2]})
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["a.txt", "b.json"]
    assert (tmp_path / "a.txt").read_text() == "hello\n"

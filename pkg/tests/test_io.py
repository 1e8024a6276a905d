import numpy as np
import pytest

from hfsdiff.errors import IOFormatError
from hfsdiff.io import coils_from_cfl, coils_to_cfl, read_cfl, read_pgm, write_cfl, write_pgm

from conftest import rand_field


def test_cfl_roundtrip_complex64(tmp_path):
    x = rand_field((5, 7, 3), 1)
    write_cfl(tmp_path / "a", x)
    back = read_cfl(tmp_path / "a.cfl")
    assert back.shape == x.shape
    assert np.array_equal(back, x.astype(np.complex64).astype(np.complex128))


def test_cfl_layout_column_major(tmp_path):
    x = np.arange(6).reshape(2, 3) + 0j
    write_cfl(tmp_path / "b", x)
    assert (tmp_path / "b.hdr").read_text().splitlines() == ["# Dimensions", "2 3"]
    raw = np.frombuffer((tmp_path / "b.cfl").read_bytes(), dtype="<c8")
    assert raw.real.tolist() == [0, 3, 1, 4, 2, 5]


def test_cfl_errors(tmp_path):
    with pytest.raises(IOFormatError):
        read_cfl(tmp_path / "missing")
    write_cfl(tmp_path / "c", np.ones((2, 2)))
    (tmp_path / "c.hdr").write_text("# Dimensions\n3 3\n")
    with pytest.raises(IOFormatError):
        read_cfl(tmp_path / "c")
    (tmp_path / "c.hdr").write_text("junk\n")
    with pytest.raises(IOFormatError):
        read_cfl(tmp_path / "c")


def test_coil_axis_order():
    maps = rand_field((4, 6, 5), 2)
    disk = coils_to_cfl(maps)
    assert disk.shape == (6, 5, 4)
    assert np.array_equal(coils_from_cfl(disk), maps)
    assert coils_from_cfl(np.ones((6, 5))).shape == (1, 6, 5)


def test_pgm_roundtrip(tmp_path):
    img = rand_field((9, 13), 3)
    lo, hi = write_pgm(tmp_path / "x.pgm", img)
    pix = read_pgm(tmp_path / "x.pgm")
    assert pix.shape == (9, 13) and pix.min() == 0 and pix.max() == 65535
    np.testing.assert_allclose(lo + pix * (hi - lo) / 65535, np.abs(img), atol=(hi - lo) / 65535)
    write_pgm(tmp_path / "flat.pgm", np.ones((4, 4)))
    assert not np.any(read_pgm(tmp_path / "flat.pgm"))
    (tmp_path / "bad.pgm").write_bytes(b"P2 1 1 255 0")
    with pytest.raises(IOFormatError):
        read_pgm(tmp_path / "bad.pgm")

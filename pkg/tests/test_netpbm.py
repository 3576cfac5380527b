import numpy as np
import pytest

from camoadapt import netpbm
from camoadapt.netpbm import NetpbmError


def test_p6_round_trip(tmp_path, rng):
    img = rng.integers(0, 256, size=(5, 7, 3), dtype=np.uint8)
    netpbm.io_netpbm(tmp_path / "a.ppm", "write", "P6", img)
    back = netpbm.io_netpbm(tmp_path / "a.ppm", "read", "P6")
    assert back.dtype == np.uint8 and back.tobytes() == img.tobytes()


def test_p5_mask_binarizes_back(tmp_path, rng):
    mask = rng.random((6, 4)) < 0.5
    netpbm.write(tmp_path / "m.pgm", np.where(mask, 255, 0).astype(np.uint8))
    assert np.array_equal(netpbm.binarize(netpbm.read(tmp_path / "m.pgm", "P5")), mask)


def test_header_and_truncation():
    raster = bytes(64 * 64 * 3)
    assert netpbm.decode(b"P6 64 64 255\n" + raster).shape == (64, 64, 3)
    with pytest.raises(NetpbmError, match="truncated"):
        netpbm.decode(b"P6 64 64 255\n" + raster[:-1])


def test_comments_in_header():
    img = netpbm.decode(b"P5\n# made by hand\n2 1\n# max\n255\n\x01\x02")
    assert img.tolist() == [[1, 2]]


@pytest.mark.parametrize("buf,match", [
    (b"P3 1 1 255\n\x00\x00\x00", "magic"),
    (b"P5 1 1 65535\n\x00\x00", "maxval"),
    (b"P5 x 1 255\n\x00", "non-integer"),
    (b"P5 1 1", "header"),
    (b"P5 0 1 255\n", "size"),
])
def test_malformed(buf, match):
    with pytest.raises(NetpbmError, match=match):
        netpbm.decode(buf)


def test_kind_mismatch():
    with pytest.raises(NetpbmError, match="expected P6"):
        netpbm.decode(b"P5 1 1 255\n\x00", "P6")


def test_writer_rejects_bad_arrays(tmp_path):
    with pytest.raises(NetpbmError):
        netpbm.encode(np.zeros((2, 2), dtype=np.float32))
    with pytest.raises(NetpbmError):
        netpbm.io_netpbm(tmp_path / "x.pgm", "write", "P5", np.zeros((2, 2, 3), np.uint8))
    with pytest.raises(NetpbmError):
        netpbm.io_netpbm(tmp_path / "x.pgm", "append", "P5")


def test_to_bytes_rounding():
    assert netpbm.to_bytes(np.array([0.0, 0.5, 1.0, 1.5, -1.0])).tolist() == [0, 128, 255, 255, 0]


def test_binarize_threshold():
    assert netpbm.binarize(np.array([127, 128, 255], np.uint8)).tolist() == [False, True, True]

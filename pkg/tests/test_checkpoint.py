import struct

import numpy as np
import pytest

from camoadapt import checkpoint as ckpt
from camoadapt.checkpoint import CheckpointError
from camoadapt.config import Config
from camoadapt.model import SamCod
from camoadapt.pipeline import load_model


@pytest.fixture
def arrays(rng):
    return {"b.w": rng.normal(size=(3, 4)).astype(np.float32), "a": np.array(2.5, np.float32),
            "c": np.zeros((0, 2), np.float32)}


def test_round_trip(arrays, tmp_path):
    ckpt.save(tmp_path / "x.smcd", arrays)
    back = ckpt.load(tmp_path / "x.smcd")
    assert sorted(back) == sorted(arrays)
    for k in arrays:
        assert back[k].dtype == np.float32 and back[k].shape == np.shape(arrays[k])
        assert back[k].tobytes() == np.asarray(arrays[k], np.float32).tobytes()


def test_save_load_save_byte_identical(small_config, tmp_path):
    model = SamCod(small_config)
    ckpt.checkpoint_io("save", tmp_path / "a.smcd", model.params)
    fresh = SamCod(small_config.with_(seed=9))
    ckpt.checkpoint_io("load", tmp_path / "a.smcd", fresh.params)
    ckpt.checkpoint_io("save", tmp_path / "b.smcd", fresh.params)
    assert (tmp_path / "a.smcd").read_bytes() == (tmp_path / "b.smcd").read_bytes()


def test_layout(arrays):
    buf = ckpt.encode(arrays)
    assert buf[:4] == b"SMCD"
    assert struct.unpack("<II", buf[4:12]) == (1, 3)
    # entries sorted by name: "a" comes first, rank 0
    assert struct.unpack("<I", buf[12:16]) == (1,) and buf[16:17] == b"a"
    assert buf[17] == 1 and struct.unpack("<I", buf[18:22]) == (0,)
    assert struct.unpack("<f", buf[22:26]) == (2.5,)


def test_insertion_order_irrelevant(arrays):
    assert ckpt.encode(arrays) == ckpt.encode(dict(reversed(list(arrays.items()))))


@pytest.mark.parametrize("offset", [30, 40, -5])
def test_flipped_byte_fails_crc(arrays, offset):
    buf = bytearray(ckpt.encode(arrays))
    buf[offset] ^= 0x01
    with pytest.raises(CheckpointError, match="CRC"):
        ckpt.decode(bytes(buf))


def test_bad_magic(arrays):
    with pytest.raises(CheckpointError, match="magic"):
        ckpt.decode(b"XMCD" + ckpt.encode(arrays)[4:])


def _recrc(body: bytes) -> bytes:
    import zlib
    return body + struct.pack("<I", zlib.crc32(body))


def test_bad_version(arrays):
    body = bytearray(ckpt.encode(arrays)[:-4])
    body[4:8] = struct.pack("<I", 2)
    with pytest.raises(CheckpointError, match="version 2"):
        ckpt.decode(_recrc(bytes(body)))


def test_truncated_entries(arrays):
    body = ckpt.encode(arrays)[:-4]
    with pytest.raises(CheckpointError, match="truncated"):
        ckpt.decode(_recrc(body[:-3]))


def test_trailing_bytes(arrays):
    with pytest.raises(CheckpointError, match="trailing"):
        ckpt.decode(_recrc(ckpt.encode(arrays)[:-4] + b"\x00"))


def test_embed_dim_mismatch_names_tensor(small_config, tmp_path):
    ckpt.checkpoint_io("save", tmp_path / "a.smcd", SamCod(small_config).params)
    other = small_config.with_(embed_dim=24, heads=2)
    with pytest.raises(CheckpointError, match=r"encoder\.patch\.weight"):
        load_model(other, tmp_path / "a.smcd")


def test_missing_tensor_reported(small_config, tmp_path):
    arrays = SamCod(small_config).params.arrays()
    del arrays["mixer.pw.bias"]
    ckpt.save(tmp_path / "a.smcd", arrays)
    with pytest.raises(CheckpointError, match="mixer.pw.bias"):
        load_model(small_config, tmp_path / "a.smcd")


def test_unknown_mode():
    with pytest.raises(ValueError):
        ckpt.checkpoint_io("peek", "x")

import struct

import numpy as np
import pytest

from dfngan import tensorio
from dfngan.audio import Spectrogram


def test_round_trip_keeps_shape_values_and_meta(tmp_path, rng):
    a = rng.standard_normal((3, 4, 5)).astype(np.float32)
    path = tmp_path / "a.dfnt"
    tensorio.save(path, a, seed=7, note="x")
    back, header = tensorio.load(path)
    assert back.dtype == np.float64
    np.testing.assert_array_equal(back, a)
    assert header["shape"] == [3, 4, 5] and header["dtype"] == "<f4"
    assert header["seed"] == 7 and header["note"] == "x"


def test_layout_is_magic_version_header_data():
    buf = tensorio.dumps(np.array([1.0, 2.0]), k=1)
    assert buf[:4] == b"DFNT"
    version, hlen = struct.unpack("<HI", buf[4:10])
    assert version == tensorio.VERSION
    assert len(buf) == 10 + hlen + 8
    np.testing.assert_array_equal(np.frombuffer(buf[10 + hlen:], "<f4"), [1.0, 2.0])


def test_bytes_are_deterministic():
    a = np.arange(6.0).reshape(2, 3)
    assert tensorio.dumps(a, b=1, a=2) == tensorio.dumps(a, a=2, b=1)


def test_scalar_round_trip():
    back, header = tensorio.loads(tensorio.dumps(np.float32(2.5)))
    assert back.shape == () and float(back) == 2.5


@pytest.mark.parametrize("mutate", [
    lambda b: b"XXXX" + b[4:],
    lambda b: b[:4] + struct.pack("<H", 9) + b[6:],
    lambda b: b[:-1],
    lambda b: b[:6],
    lambda b: b[:10] + b"[" + b[11:],
])
def test_corrupt_files_raise(mutate):
    buf = tensorio.dumps(np.ones((2, 2)), tag="t")
    with pytest.raises(tensorio.TensorFormatError):
        tensorio.loads(mutate(buf))


def test_spectrogram_round_trip(tmp_path):
    sp = Spectrogram(data=np.arange(12.0).reshape(3, 4), scale_kind="log", source="a.wav", phase_ref="p.dfnt",
                     meta={"sample_rate": 16000, "frame_hop": 400, "scale_frequencies": [100.0, 200.0, 400.0]})
    path = tmp_path / "s.dfnt"
    tensorio.save_spectrogram(path, sp, config_hash="abc")
    back = tensorio.load_spectrogram(path)
    np.testing.assert_array_equal(back.data, sp.data)
    assert (back.scale_kind, back.source, back.phase_ref) == ("log", "a.wav", "p.dfnt")
    assert back.meta["frame_hop"] == 400 and back.meta["config_hash"] == "abc"
    assert back.meta["scale_frequencies"] == [100.0, 200.0, 400.0]

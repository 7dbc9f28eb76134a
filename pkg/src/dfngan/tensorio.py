"""Tensor file format shared by spectrograms, matrices and reports.

Layout::

    b"DFNT" | u16 version | u32 header length | JSON header (utf-8) | data

The header carries ``dtype`` (always ``"<f4"``), ``shape`` and free-form
metadata such as ``scale_kind``, ``sample_rate``, ``frame_hop``,
``scale_frequencies``, ``config_hash`` and ``seed``. Data is row-major
little-endian float32.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"DFNT"
VERSION = 1


class TensorFormatError(ValueError):
    pass


def dumps(array, **meta) -> bytes:
    arr = np.require(np.asarray(array, dtype="<f4"), requirements="C")
    header = dict(meta)
    header["dtype"] = "<f4"
    header["shape"] = list(arr.shape)
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    return MAGIC + struct.pack("<HI", VERSION, len(blob)) + blob + arr.tobytes()


def loads(buf: bytes):
    if len(buf) < 10 or buf[:4] != MAGIC:
        raise TensorFormatError("not a tensor file (bad magic)")
    version, hlen = struct.unpack("<HI", buf[4:10])
    if version != VERSION:
        raise TensorFormatError(f"unsupported tensor file version {version}")
    try:
        header = json.loads(buf[10:10 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise TensorFormatError(f"corrupt header: {exc}") from exc
    shape = tuple(header.get("shape", ()))
    count = int(np.prod(shape)) if shape else 1
    data = buf[10 + hlen:]
    if len(data) != 4 * count:
        raise TensorFormatError(f"expected {4 * count} data bytes, found {len(data)}")
    arr = np.frombuffer(data, dtype="<f4").reshape(shape).astype(np.float64)
    return arr, header


def save(path, array, **meta) -> None:
    Path(path).write_bytes(dumps(array, **meta))


def load(path):
    """Return ``(array, header)``; the array is promoted to float64."""
    return loads(Path(path).read_bytes())


def save_spectrogram(path, sp, **extra) -> None:
    meta = dict(sp.meta)
    meta.update(scale_kind=sp.scale_kind, source=sp.source, phase_ref=sp.phase_ref)
    meta.update(extra)
    save(path, sp.data, **meta)


def load_spectrogram(path):
    from .audio import Spectrogram

    arr, header = load(path)
    meta = {k: v for k, v in header.items() if k not in ("scale_kind", "source", "phase_ref", "dtype", "shape")}
    return Spectrogram(
        data=arr,
        scale_kind=header.get("scale_kind", "linear"),
        source=header.get("source", ""),
        phase_ref=header.get("phase_ref"),
        meta=meta,
    )

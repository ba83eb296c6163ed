"""Binary containers for complex 3-D tensors.

Layout (little-endian): 4 magic bytes, u32 version, three u32 dims, then
``prod(dims)`` complex entries as (f64 real, f64 imag) pairs, row-major.
Channels use magic ``HBFC`` with dims (N_c, K, N_t); digital beamformers
use ``HBFB`` with dims (N_c, K, K).
"""

import struct
from pathlib import Path

import numpy as np

from .errors import ConfigurationError

CHANNEL_MAGIC = b"HBFC"
BEAMFORMER_MAGIC = b"HBFB"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")


def dumps(array, magic: bytes) -> bytes:
    arr = np.asarray(array)
    if arr.ndim != 3:
        raise ConfigurationError(f"container holds 3-D tensors, got shape {arr.shape}")
    body = np.ascontiguousarray(arr, dtype="<c16").tobytes()
    return _HEADER.pack(magic, VERSION, *arr.shape) + body


def loads(data: bytes, magic: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise ConfigurationError("container truncated before end of header")
    got_magic, version, *dims = _HEADER.unpack_from(data)
    if got_magic != magic:
        raise ConfigurationError(f"bad magic {got_magic!r}, expected {magic!r}")
    if version != VERSION:
        raise ConfigurationError(f"unsupported container version {version}")
    expected = _HEADER.size + 16 * int(np.prod(dims, dtype=np.int64))
    if len(data) != expected:
        raise ConfigurationError(f"container length {len(data)} != expected {expected}")
    body = np.frombuffer(data, dtype="<c16", offset=_HEADER.size)
    return body.reshape(dims).astype(complex)


def save_channel(path, h) -> None:
    Path(path).write_bytes(dumps(h, CHANNEL_MAGIC))


def load_channel(path, config=None):
    from .channel import ChannelSet

    return ChannelSet(loads(Path(path).read_bytes(), CHANNEL_MAGIC), config=config)


def save_beamformer(path, f_bb) -> None:
    Path(path).write_bytes(dumps(f_bb, BEAMFORMER_MAGIC))


def load_beamformer(path):
    from .digital import DigitalBeamformer

    return DigitalBeamformer(loads(Path(path).read_bytes(), BEAMFORMER_MAGIC))

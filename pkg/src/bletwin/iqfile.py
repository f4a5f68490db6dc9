"""I/Q capture containers.

IQ16 holds complex baseband as little-endian int16 pairs (I then Q) after a
40-byte header::

    offset  type      field
    0       4s        magic  b"BTIQ"
    4       uint16    version (1)
    6       uint16    reserved (0)
    8       float64   sample_rate  [Hz]
    16      float64   center_offset [Hz]  (IqFrame.center_hz)
    24      float64   scale  (sample = int16 * scale)
    32      uint64    n_samples

Q4 stores the output of a 4-bit (or narrower) ADC, one byte per sample
pair: I in the low nibble, Q in the high nibble, both two's complement.
Its 72-byte header carries the receiver settings needed to demodulate::

    0   4s       magic b"BTQ4"
    4   uint16   version (1)
    6   uint16   adc_bits
    8   float64  sample_rate
    16  float64  center_offset (the IF)
    24  float64  deviation
    32  float64  symbol_rate
    40  float64  full_scale (NaN when it was set automatically)
    48  float64  step
    56  uint32   detector_span
    60  uint32   reserved (0)
    64  uint64   n_samples

All fields are little-endian regardless of the host.
"""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigError, FileFormatError
from .phy_rx import FrontEndConfig, QuantizedIq
from .phy_tx import IqFrame

IQ16_MAGIC = b"BTIQ"
Q4_MAGIC = b"BTQ4"
VERSION = 1
_IQ16_HEADER = struct.Struct("<4sHHdddQ")
_Q4_HEADER = struct.Struct("<4sHHddddddIIQ")
IQ16_HEADER_SIZE = _IQ16_HEADER.size
Q4_HEADER_SIZE = _Q4_HEADER.size


def _read(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise FileFormatError(f"cannot read {path}: {exc.strerror}") from exc


def _check_magic(blob: bytes, header: struct.Struct, magic: bytes):
    if len(blob) >= 4 and blob[:4] != magic:
        raise FileFormatError(f"bad magic {blob[:4]!r}, expected {magic!r}")
    if len(blob) < header.size:
        raise FileFormatError(f"truncated header: {len(blob)} of {header.size} bytes")
    fields = header.unpack_from(blob)
    if fields[1] != VERSION:
        raise FileFormatError(f"unsupported version {fields[1]}")
    return fields


def _check_size(blob: bytes, expected: int):
    if len(blob) < expected:
        raise FileFormatError(f"truncated data: {len(blob)} of {expected} bytes")
    if len(blob) > expected:
        raise FileFormatError(f"{len(blob) - expected} unexpected trailing bytes")


def detect_format(path) -> str:
    """``"iq16"`` or ``"q4"`` from the file magic."""
    head = _read(path)[:4]
    if head == IQ16_MAGIC:
        return "iq16"
    if head == Q4_MAGIC:
        return "q4"
    raise FileFormatError(f"unrecognised magic {head!r}")


# --------------------------------------------------------------------------
# IQ16
# --------------------------------------------------------------------------

def iq16_encode(frame: IqFrame, scale: float | None = None) -> bytes:
    """Serialise a frame.  ``scale=None`` maps the largest component to 32767."""
    x = frame.samples
    if scale is None:
        peak = float(max(np.abs(x.real).max(initial=0.0), np.abs(x.imag).max(initial=0.0)))
        scale = peak / 32767 if peak > 0 else 1.0
    if not scale > 0 or not math.isfinite(scale):
        raise ConfigError(f"scale must be positive and finite, got {scale}")
    inter = np.empty(2 * x.size, dtype=np.float64)
    inter[0::2] = x.real / scale
    inter[1::2] = x.imag / scale
    codes = np.clip(np.rint(inter), -32768, 32767).astype("<i2")
    header = _IQ16_HEADER.pack(IQ16_MAGIC, VERSION, 0, frame.sample_rate, frame.center_hz, scale, x.size)
    return header + codes.tobytes()


def iq16_decode(blob: bytes) -> IqFrame:
    _, _, _, fs, center, scale, n = _check_magic(blob, _IQ16_HEADER, IQ16_MAGIC)
    _check_size(blob, IQ16_HEADER_SIZE + 4 * n)
    codes = np.frombuffer(blob, dtype="<i2", offset=IQ16_HEADER_SIZE, count=2 * n).astype(np.float64)
    if not fs > 0 or not scale > 0:
        raise FileFormatError("header has a non-positive sample rate or scale")
    return IqFrame((codes[0::2] + 1j * codes[1::2]) * scale, fs, center_hz=center, origin="file")


def write_iq(path, frame: IqFrame, scale: float | None = None) -> int:
    """Write an IQ16 file; returns the number of bytes written."""
    blob = iq16_encode(frame, scale)
    Path(path).write_bytes(blob)
    return len(blob)


def read_iq(path) -> IqFrame:
    return iq16_decode(_read(path))


# --------------------------------------------------------------------------
# Q4
# --------------------------------------------------------------------------

def q4_encode(q: QuantizedIq) -> bytes:
    cfg = q.cfg
    if cfg.adc_bits > 4:
        raise ConfigError(f"Q4 holds at most 4-bit codes, front end has {cfg.adc_bits}")
    i = np.asarray(q.i_codes, dtype=np.int64)
    qq = np.asarray(q.q_codes, dtype=np.int64)
    if i.size and (min(i.min(), qq.min()) < -8 or max(i.max(), qq.max()) > 7):
        raise ConfigError("codes outside the 4-bit two's-complement range")
    packed = ((i & 0xF) | ((qq & 0xF) << 4)).astype(np.uint8)
    fs_field = math.nan if cfg.full_scale is None else cfg.full_scale
    header = _Q4_HEADER.pack(Q4_MAGIC, VERSION, cfg.adc_bits, cfg.sample_rate, cfg.if_hz, cfg.deviation,
                             cfg.symbol_rate, fs_field, q.step, cfg.detector_span, 0, i.size)
    return header + packed.tobytes()


def q4_decode(blob: bytes) -> QuantizedIq:
    (_, _, bits, fs, if_hz, dev, rate, full_scale, step, span, _, n) = _check_magic(blob, _Q4_HEADER, Q4_MAGIC)
    _check_size(blob, Q4_HEADER_SIZE + n)
    try:
        cfg = FrontEndConfig(if_hz=if_hz, sample_rate=fs, adc_bits=bits,
                             full_scale=None if math.isnan(full_scale) else full_scale,
                             deviation=dev, symbol_rate=rate, detector_span=span)
    except ConfigError as exc:
        raise FileFormatError(f"header holds an invalid receiver setting: {exc}") from exc
    raw = np.frombuffer(blob, dtype=np.uint8, offset=Q4_HEADER_SIZE, count=n).astype(np.int16)
    # sign-extend each nibble
    i = ((raw & 0xF) ^ 8) - 8
    q = ((raw >> 4) ^ 8) - 8
    return QuantizedIq(i.astype(np.int16), q.astype(np.int16), cfg, step)


def write_q4(path, quantized: QuantizedIq) -> int:
    blob = q4_encode(quantized)
    Path(path).write_bytes(blob)
    return len(blob)


def read_q4(path) -> QuantizedIq:
    return q4_decode(_read(path))

"""Bit-exact BLE 4.0 advertising-channel packet codec.

Bits are carried as ``numpy.uint8`` arrays of 0/1 values in transmission
order.  Multi-bit fields are sent least significant bit first.

On-air layout of an advertising packet::

    preamble (8) | access address (32) | whitened( header (16) | payload | CRC (24) )

CRC-24
    Polynomial x^24 + x^10 + x^9 + x^6 + x^4 + x^3 + x + 1 (0x00065B), register
    preset to 0x555555.  PDU bits are clocked in transmission order into a
    left-shifting register: ``fb = reg[23] ^ bit; reg <<= 1; if fb: reg ^= poly``.
    The 24 CRC bits are emitted from register position 23 down to position 0,
    so the transmitted CRC equals the remainder of the conventional
    (non-reflected) polynomial division with the first PDU bit as the highest
    power.

Whitening
    7-bit register, positions 0..6.  Position 0 is preset to 1 and positions
    1..6 hold the channel index with its most significant bit in position 1.
    Each clock outputs position 6, which is XORed into the data bit, shifted
    into position 0 and XORed into position 4 (x^7 + x^4 + 1).  The keystream
    has period 127 and depends only on the channel, so it is cached.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .errors import (
    AccessAddressError,
    CrcError,
    InvalidChannelError,
    MalformedLengthError,
    OversizeError,
    UnknownPduTypeError,
)

ADV_ACCESS_ADDRESS = 0x8E89BED6
CRC_POLY = 0x00065B
CRC_INIT = 0x555555
ADVERTISING_CHANNELS = (37, 38, 39)
MIN_PAYLOAD = 6
MAX_PAYLOAD = 37
MAX_PACKET_BITS = 8 + 32 + 16 + 8 * MAX_PAYLOAD + 24  # 376
MAX_GAP_DATA = 30


class PduType(enum.IntEnum):
    ADV_IND = 0b0000
    SCAN_REQ = 0b0011
    SCAN_RSP = 0b0100


# --------------------------------------------------------------------------
# bit helpers
# --------------------------------------------------------------------------

def int_to_bits(value: int, n_bits: int) -> np.ndarray:
    """LSB-first bit expansion of ``value``."""
    return ((int(value) >> np.arange(n_bits)) & 1).astype(np.uint8)


def bits_to_int(bits) -> int:
    bits = np.asarray(bits, dtype=np.int64)
    return int((bits << np.arange(bits.size, dtype=np.int64)).sum())


def bytes_to_bits(data: bytes) -> np.ndarray:
    """Each byte expanded LSB first, byte order preserved."""
    return np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8), bitorder="little")


def bits_to_bytes(bits) -> bytes:
    bits = np.asarray(bits, dtype=np.uint8)
    return np.packbits(bits, bitorder="little").tobytes()


ACCESS_ADDRESS_BITS = int_to_bits(ADV_ACCESS_ADDRESS, 32)


# --------------------------------------------------------------------------
# domain types
# --------------------------------------------------------------------------

def channel_frequency_hz(index: int) -> float:
    """Centre frequency of a BLE channel index (2 MHz raster from 2.402 GHz)."""
    index = check_channel(index)
    if index == 37:
        rf = 0
    elif index == 38:
        rf = 12
    elif index == 39:
        rf = 39
    elif index <= 10:
        rf = index + 1
    else:
        rf = index + 2
    return 2.402e9 + 2e6 * rf


def check_channel(index: int, advertising: bool = False) -> int:
    if not isinstance(index, (int, np.integer)) or not 0 <= index <= 39:
        raise InvalidChannelError(f"channel index {index!r} outside 0..39")
    if advertising and index not in ADVERTISING_CHANNELS:
        raise InvalidChannelError(f"channel {index} is not an advertising channel")
    return int(index)


@dataclass(frozen=True)
class DeviceAddress:
    """48-bit device address.  ``octets`` are stored in on-air order (LSB octet first)."""

    octets: bytes

    def __post_init__(self):
        object.__setattr__(self, "octets", bytes(self.octets))
        if len(self.octets) != 6:
            raise ValueError(f"device address must be 6 bytes, got {len(self.octets)}")

    @classmethod
    def from_string(cls, text: str) -> "DeviceAddress":
        """Parse the usual ``AA:BB:CC:DD:EE:FF`` notation (most significant octet first)."""
        raw = bytes.fromhex(text.replace(":", "").replace("-", ""))
        return cls(raw[::-1])

    @classmethod
    def from_int(cls, value: int) -> "DeviceAddress":
        return cls(int(value).to_bytes(6, "little"))

    def __int__(self) -> int:
        return int.from_bytes(self.octets, "little")

    def __str__(self) -> str:
        return ":".join(f"{b:02X}" for b in self.octets[::-1])


@dataclass(frozen=True)
class PduHeader:
    pdu_type: int
    length: int
    tx_add: int = 0
    rx_add: int = 0
    rfu: int = 0

    def to_bits(self) -> np.ndarray:
        return np.concatenate([
            int_to_bits(self.pdu_type, 4),
            int_to_bits(self.rfu, 2),
            int_to_bits(self.tx_add, 1),
            int_to_bits(self.rx_add, 1),
            int_to_bits(self.length, 8),
        ])

    @classmethod
    def from_bits(cls, bits) -> "PduHeader":
        bits = np.asarray(bits)
        return cls(
            pdu_type=bits_to_int(bits[0:4]),
            rfu=bits_to_int(bits[4:6]),
            tx_add=int(bits[6]),
            rx_add=int(bits[7]),
            length=bits_to_int(bits[8:16]),
        )


@dataclass(frozen=True)
class GapBlock:
    code: int
    data: bytes = b""

    def __post_init__(self):
        object.__setattr__(self, "data", bytes(self.data))
        if not 0 <= self.code <= 0xFF:
            raise ValueError(f"GAP code {self.code} does not fit in a byte")
        if len(self.data) > MAX_GAP_DATA:
            raise OversizeError(f"GAP block data of {len(self.data)} bytes exceeds {MAX_GAP_DATA}")

    def to_bytes(self) -> bytes:
        # the length byte counts the code byte but not itself
        return bytes([1 + len(self.data), self.code]) + self.data


@dataclass(frozen=True)
class AdvPdu:
    """An ADV_IND, SCAN_REQ or SCAN_RSP protocol data unit."""

    kind: PduType
    adv_addr: DeviceAddress
    scan_addr: DeviceAddress | None = None
    blocks: tuple[GapBlock, ...] = field(default_factory=tuple)
    tx_add: int = 0
    rx_add: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", PduType(self.kind))
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if self.kind == PduType.SCAN_REQ:
            if self.scan_addr is None:
                raise ValueError("SCAN_REQ needs a scanner address")
            if self.blocks:
                raise ValueError("SCAN_REQ carries no GAP blocks")
        elif self.scan_addr is not None:
            raise ValueError(f"{self.kind.name} has no scanner address field")

    @classmethod
    def adv_ind(cls, adv_addr: DeviceAddress, blocks=()) -> "AdvPdu":
        return cls(PduType.ADV_IND, adv_addr, blocks=tuple(blocks))

    @classmethod
    def scan_req(cls, scan_addr: DeviceAddress, adv_addr: DeviceAddress) -> "AdvPdu":
        return cls(PduType.SCAN_REQ, adv_addr, scan_addr=scan_addr)

    @classmethod
    def scan_rsp(cls, adv_addr: DeviceAddress, blocks=()) -> "AdvPdu":
        return cls(PduType.SCAN_RSP, adv_addr, blocks=tuple(blocks))

    def payload_bytes(self) -> bytes:
        if self.kind == PduType.SCAN_REQ:
            return self.scan_addr.octets + self.adv_addr.octets
        return self.adv_addr.octets + b"".join(b.to_bytes() for b in self.blocks)

    @property
    def header(self) -> PduHeader:
        return PduHeader(int(self.kind), len(self.payload_bytes()), self.tx_add, self.rx_add)

    def summary(self) -> str:
        if self.kind == PduType.SCAN_REQ:
            return f"{self.kind.name} ScanA={self.scan_addr} AdvA={self.adv_addr}"
        data = " ".join(b.to_bytes().hex() for b in self.blocks)
        return f"{self.kind.name} AdvA={self.adv_addr} data=[{data}]"


# --------------------------------------------------------------------------
# CRC and whitening
# --------------------------------------------------------------------------

def crc24(pdu_bits) -> int:
    """CRC-24 register value after clocking the un-whitened PDU bits."""
    return _accel.crc24_register(np.asarray(pdu_bits, dtype=np.uint8), CRC_INIT, CRC_POLY)


def crc_to_bits(crc: int) -> np.ndarray:
    """CRC bits in transmission order (register position 23 first)."""
    return int_to_bits(crc, 24)[::-1].copy()


@functools.lru_cache(maxsize=40)
def _whitening_period(channel: int) -> np.ndarray:
    reg = [1] + [(channel >> (5 - i)) & 1 for i in range(6)]
    out = np.empty(127, dtype=np.uint8)
    for n in range(127):
        o = reg[6]
        out[n] = o
        reg = [o, reg[0], reg[1], reg[2], reg[3] ^ o, reg[4], reg[5]]
    out.setflags(write=False)
    return out


def whitening_keystream(channel: int, n_bits: int) -> np.ndarray:
    period = _whitening_period(check_channel(channel))
    reps = -(-n_bits // 127)
    return np.tile(period, max(reps, 1))[:n_bits]


def whiten(bits, channel: int) -> np.ndarray:
    """XOR ``bits`` with the channel's whitening keystream; its own inverse."""
    bits = np.asarray(bits, dtype=np.uint8)
    return bits ^ whitening_keystream(channel, bits.size)


# --------------------------------------------------------------------------
# serialisation
# --------------------------------------------------------------------------

def serialize_pdu(pdu: AdvPdu) -> np.ndarray:
    payload = pdu.payload_bytes()
    if len(payload) > MAX_PAYLOAD:
        raise OversizeError(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    return np.concatenate([pdu.header.to_bits(), bytes_to_bits(payload)])


def preamble_for(first_aa_bit: int) -> np.ndarray:
    """Alternating preamble whose last bit differs from the first access-address bit."""
    last = 1 - int(first_aa_bit)
    return np.array([(last + 1 + i) % 2 for i in range(8)], dtype=np.uint8)


def assemble_packet(pdu: AdvPdu, channel: int) -> np.ndarray:
    """Full on-air bit sequence: preamble, access address, whitened PDU and CRC."""
    channel = check_channel(channel, advertising=True)
    pdu_bits = serialize_pdu(pdu)
    body = np.concatenate([pdu_bits, crc_to_bits(crc24(pdu_bits))])
    return np.concatenate([preamble_for(ACCESS_ADDRESS_BITS[0]), ACCESS_ADDRESS_BITS, whiten(body, channel)])


def _parse_blocks(data: bytes) -> tuple[GapBlock, ...]:
    blocks = []
    i = 0
    while i < len(data):
        n = data[i]
        if n == 0 or i + 1 + n > len(data):
            raise MalformedLengthError(f"GAP block length {n} at offset {i} overruns payload")
        blocks.append(GapBlock(data[i + 1], data[i + 2:i + 1 + n]))
        i += 1 + n
    return tuple(blocks)


def _locate_pdu(bits: np.ndarray, max_aa_errors: int) -> int:
    # accept input starting at the access address or at the preamble
    for start in (0, 8):
        window = bits[start:start + 32]
        if window.size == 32 and int(np.count_nonzero(window != ACCESS_ADDRESS_BITS)) <= max_aa_errors:
            return start + 32
    raise AccessAddressError("access address not found at bit 0 or bit 8")


def parse_packet(bits, channel: int, max_aa_errors: int = 0) -> AdvPdu:
    """Inverse of :func:`assemble_packet`; raises a :class:`FrameError` subclass on failure."""
    channel = check_channel(channel)
    bits = np.asarray(bits, dtype=np.uint8)
    start = _locate_pdu(bits, max_aa_errors)
    body = bits[start:]
    if body.size < 16:
        raise MalformedLengthError(f"only {body.size} bits after the access address")
    header = PduHeader.from_bits(whiten(body[:16], channel))
    if not MIN_PAYLOAD <= header.length <= MAX_PAYLOAD:
        raise MalformedLengthError(f"header length {header.length} outside {MIN_PAYLOAD}..{MAX_PAYLOAD}")
    n_pdu = 16 + 8 * header.length
    if body.size < n_pdu + 24:
        raise MalformedLengthError(
            f"header promises {header.length} payload + 3 CRC bytes but only {(body.size - 16) // 8} follow")
    clear = whiten(body[:n_pdu + 24], channel)
    pdu_bits, crc_bits = clear[:n_pdu], clear[n_pdu:]
    if not np.array_equal(crc_to_bits(crc24(pdu_bits)), crc_bits):
        raise CrcError("CRC mismatch")
    try:
        kind = PduType(header.pdu_type)
    except ValueError:
        raise UnknownPduTypeError(header.pdu_type) from None
    payload = bits_to_bytes(pdu_bits[16:])
    if kind == PduType.SCAN_REQ:
        if header.length != 12:
            raise MalformedLengthError(f"SCAN_REQ payload must be 12 bytes, got {header.length}")
        return AdvPdu(kind, DeviceAddress(payload[6:12]), scan_addr=DeviceAddress(payload[:6]),
                      tx_add=header.tx_add, rx_add=header.rx_add)
    return AdvPdu(kind, DeviceAddress(payload[:6]), blocks=_parse_blocks(payload[6:]),
                  tx_add=header.tx_add, rx_add=header.rx_add)


# --------------------------------------------------------------------------
# hex dump format and random packets
# --------------------------------------------------------------------------

def air_bits_to_hex(bits) -> str:
    """Transmission-order bytes; the first bit on air is the LSB of the first byte."""
    return bits_to_bytes(bits).hex().upper()


def hex_to_air_bits(text: str) -> np.ndarray:
    return bytes_to_bits(bytes.fromhex(text.replace(" ", "").replace(":", "")))


def pdu_from_bytes(raw: bytes) -> AdvPdu:
    """Build a PDU from un-whitened header+payload bytes (no CRC)."""
    raw = bytes(raw)
    if len(raw) < 2:
        raise MalformedLengthError("PDU needs at least a 2-byte header")
    bits = bytes_to_bits(raw)
    header = PduHeader.from_bits(bits[:16])
    if header.length != len(raw) - 2:
        raise MalformedLengthError(f"header length {header.length} but {len(raw) - 2} payload bytes given")
    if len(raw) - 2 > MAX_PAYLOAD:
        raise OversizeError(f"payload of {len(raw) - 2} bytes exceeds {MAX_PAYLOAD}")
    body = np.concatenate([bits, crc_to_bits(crc24(bits))])
    return parse_packet(np.concatenate([ACCESS_ADDRESS_BITS, whiten(body, 37)]), 37)


def random_pdu(rng: np.random.Generator, payload_bytes: int | None = None, kind: PduType | None = None) -> AdvPdu:
    """Random valid PDU.  ``payload_bytes`` fixes the payload size (ADV_IND / SCAN_RSP only)."""
    if kind is None:
        kind = PduType.SCAN_REQ if payload_bytes is None and rng.random() < 0.2 else (
            PduType.ADV_IND if rng.random() < 0.5 else PduType.SCAN_RSP)
    adv = DeviceAddress(rng.bytes(6))
    if kind == PduType.SCAN_REQ:
        return AdvPdu.scan_req(DeviceAddress(rng.bytes(6)), adv)
    if payload_bytes is None:
        payload_bytes = int(rng.choice([n for n in range(MIN_PAYLOAD, MAX_PAYLOAD + 1) if n != 7]))
    if not MIN_PAYLOAD <= payload_bytes <= MAX_PAYLOAD or payload_bytes == 7:
        # 7 bytes would leave a single byte, too short for a GAP block
        raise OversizeError(f"cannot fill a {payload_bytes}-byte payload with GAP blocks")
    room = payload_bytes - 6
    blocks = []
    while room >= 2:
        size = int(rng.integers(2, min(room, MAX_GAP_DATA + 2) + 1))
        if room - size == 1:
            size = room if room - 2 <= MAX_GAP_DATA else size - 1
        blocks.append(GapBlock(int(rng.integers(0, 256)), rng.bytes(size - 2)))
        room -= size
    return AdvPdu(kind, adv, blocks=tuple(blocks))

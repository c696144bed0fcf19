"""Wire format of FADE-10G Ethernet frames.

Every frame is a standard Ethernet header (destination, source, Ethertype
0xFADE), a 16-bit protocol version, one of five payloads, 0xA5 filler up to
the Ethernet minimum and the IEEE 802.3 FCS. All protocol fields are
big-endian; the FCS is appended least-significant byte first, as on any
Ethernet wire.

Payload kinds are recognised without a direction hint:

* first word 0x0003 / 0x0004 -> acknowledgment (ACK / NACK)
* first word 0xA5A5 in a full-size frame -> data packet
* first word 0xA5A6 in a full-size frame -> last data packet
* first word 0xA5A5 in a short frame -> command response packet (the 2-byte
  filler is the protocol filler pattern)
* anything else in a short frame -> user command request
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Union

ETHERTYPE = 0xFADE
VERSION = 0x0100

KIND_ACK = 0x0003
KIND_NACK = 0x0004
MARKER_DATA = 0xA5A5
MARKER_LAST = 0xA5A6
RESPONSE_FILLER = 0xA5A5
FILLER_BYTE = 0xA5

# Command codes. ACK/NACK occupy 0x0003/0x0004, so the core's built-in
# commands avoid them. Code 0 in a response field means "no response".
CMD_NONE = 0x0000
CMD_START = 0x0001
CMD_STOP = 0x0002
CMD_RESET = 0x0005
CMD_USER_MIN = 0x0100
RESERVED_COMMAND_CODES = frozenset(
    {CMD_NONE, KIND_ACK, KIND_NACK, MARKER_DATA, MARKER_LAST}
)

WORD_BYTES = 8
PACKET_WORDS = 1024
PACKET_BYTES = PACKET_WORDS * WORD_BYTES
LAST_DATA_BYTES = PACKET_BYTES - WORD_BYTES
MAX_VALID_WORDS = PACKET_WORDS - 1

HEADER_BYTES = 14 + 2
FCS_BYTES = 4
MIN_FRAME_BYTES = 64

ACK_BYTES = 12
COMMAND_REQUEST_BYTES = 8
RESPONSE_FIELD_BYTES = 12
DATA_PAYLOAD_BYTES = 2 + 2 + 4 + 4 + RESPONSE_FIELD_BYTES + PACKET_BYTES
RESPONSE_PACKET_BYTES = 2 + RESPONSE_FIELD_BYTES
DATA_FRAME_BYTES = HEADER_BYTES + DATA_PAYLOAD_BYTES + FCS_BYTES

PKT_MODULUS = 1 << 32
SEQ_MODULUS = 1 << 16

_ETH = struct.Struct("!6s6sHH")
_ACK = struct.Struct("!HHII")
_REQUEST = struct.Struct("!HHI")
_RESPONSE = struct.Struct("!HH8s")
_DATA_HEAD = struct.Struct("!HHII")
_WORD = struct.Struct("!Q")


class FrameError(Exception):
    """Base class for frames that cannot be decoded."""


class BadFcs(FrameError):
    pass


class BadEthertype(FrameError):
    pass


class BadVersion(FrameError):
    def __init__(self, version: int, source: bytes = b""):
        super().__init__(f"unsupported protocol version 0x{version:04x}")
        self.version = version
        self.source = source


class Truncated(FrameError):
    pass


class UnknownPayloadMarker(FrameError):
    pass


class InvalidPayload(ValueError):
    """Raised by the encoder for values that do not fit the wire format."""


class Order(Enum):
    OLDER = -1
    EQUAL = 0
    NEWER = 1


def modular_order(a: int, b: int, modulus: int) -> Order:
    """``a`` is newer when ``(a - b) mod modulus`` lies in ``1 .. modulus/2``.

    The half-way point counts as newer from both sides; zero difference is
    reported as equal rather than newer.
    """
    diff = (a - b) % modulus
    if diff == 0:
        return Order.EQUAL
    if diff <= modulus >> 1:
        return Order.NEWER
    return Order.OLDER


def packet_newer(a: int, b: int) -> Order:
    """Order of packet number ``a`` relative to ``b`` on the 2**32 circle."""
    return modular_order(a, b, PKT_MODULUS)


def seq_newer(a: int, b: int) -> Order:
    """Order of frame sequence number ``a`` relative to ``b`` on the 2**16 circle."""
    return modular_order(a, b, SEQ_MODULUS)


def compute_fcs(data: bytes) -> int:
    # zlib's crc32 is the reflected 0x04C11DB7 CRC with all-ones init/xorout.
    return zlib.crc32(data) & 0xFFFFFFFF


def _mac(value: bytes | str) -> bytes:
    if isinstance(value, str):
        raw = bytes.fromhex(value.replace(":", "").replace("-", ""))
    else:
        raw = bytes(value)
    if len(raw) != 6:
        raise ValueError(f"MAC address must be 6 bytes, got {len(raw)}")
    return raw


@dataclass(frozen=True)
class MacAddress:
    octets: bytes

    def __post_init__(self):
        object.__setattr__(self, "octets", _mac(self.octets))

    @classmethod
    def parse(cls, text: str) -> "MacAddress":
        return cls(_mac(text))

    def __str__(self):
        return ":".join(f"{b:02x}" for b in self.octets)


@dataclass(frozen=True)
class FrameHeader:
    destination: MacAddress
    source: MacAddress
    ethertype: int = ETHERTYPE
    version: int = VERSION


@dataclass(frozen=True)
class CommandResponseField:
    command_code: int = CMD_NONE
    csn: int = 0
    return_value: bytes = bytes(8)

    def pack(self) -> bytes:
        _check_u16(self.command_code, "command_code")
        _check_u16(self.csn, "csn")
        if len(self.return_value) != 8:
            raise InvalidPayload("return_value must be exactly 8 bytes")
        return _RESPONSE.pack(self.command_code, self.csn, bytes(self.return_value))

    @classmethod
    def unpack(cls, raw: bytes) -> "CommandResponseField":
        code, csn, value = _RESPONSE.unpack(raw)
        return cls(code, csn, value)

    @property
    def empty(self) -> bool:
        return self.command_code == CMD_NONE


NO_RESPONSE = CommandResponseField()


@dataclass(frozen=True)
class Ack:
    kind: int
    seq: int
    packet: int
    delay_echo: int = 0

    @property
    def is_nack(self) -> bool:
        return self.kind == KIND_NACK


@dataclass(frozen=True)
class CommandRequest:
    command_code: int
    csn: int
    argument: int = 0


@dataclass(frozen=True)
class DataPacket:
    seq: int
    packet: int
    delay: int
    data: bytes
    cmd_response: CommandResponseField = NO_RESPONSE
    marker = MARKER_DATA


@dataclass(frozen=True)
class LastDataPacket:
    seq: int
    packet: int
    delay: int
    data: bytes
    valid_words: int
    cmd_response: CommandResponseField = NO_RESPONSE
    marker = MARKER_LAST

    @property
    def valid_data(self) -> bytes:
        return self.data[: self.valid_words * WORD_BYTES]


@dataclass(frozen=True)
class CommandResponsePacket:
    cmd_response: CommandResponseField
    filler: int = RESPONSE_FILLER


Payload = Union[Ack, CommandRequest, DataPacket, LastDataPacket, CommandResponsePacket]


@dataclass(frozen=True)
class WireFrame:
    header: FrameHeader
    payload: Payload
    filler: int = 0
    fcs: int = field(default=0, compare=False)
    raw: bytes = field(default=b"", compare=False, repr=False)


def _check_u16(value: int, name: str) -> None:
    if not 0 <= value <= 0xFFFF:
        raise InvalidPayload(f"{name}={value} does not fit in 16 bits")


def _check_u32(value: int, name: str) -> None:
    if not 0 <= value <= 0xFFFFFFFF:
        raise InvalidPayload(f"{name}={value} does not fit in 32 bits")


def encode_payload(payload: Payload) -> bytes:
    if isinstance(payload, Ack):
        if payload.kind not in (KIND_ACK, KIND_NACK):
            raise InvalidPayload(f"ack kind 0x{payload.kind:04x}")
        _check_u16(payload.seq, "seq")
        _check_u32(payload.packet, "packet")
        _check_u32(payload.delay_echo, "delay_echo")
        return _ACK.pack(payload.kind, payload.seq, payload.packet, payload.delay_echo)
    if isinstance(payload, CommandRequest):
        _check_u16(payload.command_code, "command_code")
        if payload.command_code in RESERVED_COMMAND_CODES:
            raise InvalidPayload(f"command code 0x{payload.command_code:04x} is reserved")
        _check_u16(payload.csn, "csn")
        _check_u32(payload.argument, "argument")
        return _REQUEST.pack(payload.command_code, payload.csn, payload.argument)
    if isinstance(payload, (DataPacket, LastDataPacket)):
        _check_u16(payload.seq, "seq")
        _check_u32(payload.packet, "packet")
        _check_u32(payload.delay, "delay")
        head = _DATA_HEAD.pack(payload.marker, payload.seq, payload.packet, payload.delay)
        response = payload.cmd_response.pack()
        if isinstance(payload, DataPacket):
            if len(payload.data) != PACKET_BYTES:
                raise InvalidPayload(f"data packet carries {len(payload.data)} bytes")
            return b"".join((head, response, payload.data))
        if not 0 <= payload.valid_words <= MAX_VALID_WORDS:
            raise InvalidPayload(f"valid_words={payload.valid_words} out of range")
        if len(payload.data) != LAST_DATA_BYTES:
            raise InvalidPayload(f"last data packet carries {len(payload.data)} bytes")
        return b"".join((head, response, payload.data, _WORD.pack(payload.valid_words)))
    if isinstance(payload, CommandResponsePacket):
        _check_u16(payload.filler, "filler")
        return struct.pack("!H", payload.filler) + payload.cmd_response.pack()
    raise InvalidPayload(f"unsupported payload {type(payload).__name__}")


def _assemble(header: FrameHeader, payload_bytes: bytes) -> bytes:
    body = bytearray(
        _ETH.pack(header.destination.octets, header.source.octets, header.ethertype, header.version)
    )
    body += payload_bytes
    short = MIN_FRAME_BYTES - FCS_BYTES - len(body)
    if short > 0:
        body += bytes([FILLER_BYTE]) * short
    body += struct.pack("<I", compute_fcs(body))
    return bytes(body)


def encode_frame(header: FrameHeader, payload: Payload) -> bytes:
    return _assemble(header, encode_payload(payload))


def build_frame(header: FrameHeader, payload: Payload) -> WireFrame:
    """Encode ``payload`` and return the structured frame with its wire bytes."""
    payload_bytes = encode_payload(payload)
    raw = _assemble(header, payload_bytes)
    filler = len(raw) - HEADER_BYTES - FCS_BYTES - len(payload_bytes)
    (fcs,) = struct.unpack_from("<I", raw, len(raw) - FCS_BYTES)
    return WireFrame(header, payload, filler, fcs, raw)


def encoded_length(payload_width: int) -> int:
    return max(MIN_FRAME_BYTES, HEADER_BYTES + payload_width + FCS_BYTES)


def decode_frame(data: bytes) -> WireFrame:
    data = bytes(data)
    if len(data) < MIN_FRAME_BYTES:
        raise Truncated(f"{len(data)} bytes is below the Ethernet minimum")
    (fcs,) = struct.unpack_from("<I", data, len(data) - FCS_BYTES)
    if compute_fcs(memoryview(data)[:-FCS_BYTES]) != fcs:
        raise BadFcs("frame check sequence mismatch")
    dst, src, ethertype, version = _ETH.unpack_from(data)
    if ethertype != ETHERTYPE:
        raise BadEthertype(f"ethertype 0x{ethertype:04x}")
    if version != VERSION:
        raise BadVersion(version, src)
    header = FrameHeader(MacAddress(dst), MacAddress(src), ethertype, version)
    area = memoryview(data)[HEADER_BYTES:-FCS_BYTES]
    payload, used = _decode_payload(area)
    return WireFrame(header, payload, len(area) - used, fcs, data)


def _decode_payload(area: memoryview) -> tuple[Payload, int]:
    (marker,) = struct.unpack_from("!H", area)
    full = len(area) >= DATA_PAYLOAD_BYTES
    if marker in (MARKER_DATA, MARKER_LAST) and full:
        _, seq, packet, delay = _DATA_HEAD.unpack_from(area)
        response = CommandResponseField.unpack(area[12:24])
        if marker == MARKER_DATA:
            return DataPacket(seq, packet, delay, bytes(area[24:DATA_PAYLOAD_BYTES]), response), DATA_PAYLOAD_BYTES
        (valid,) = _WORD.unpack_from(area, DATA_PAYLOAD_BYTES - WORD_BYTES)
        if valid > MAX_VALID_WORDS:
            raise UnknownPayloadMarker(f"valid word count {valid} out of range")
        data = bytes(area[24 : DATA_PAYLOAD_BYTES - WORD_BYTES])
        return LastDataPacket(seq, packet, delay, data, valid, response), DATA_PAYLOAD_BYTES
    if full:
        raise UnknownPayloadMarker(f"full-size frame with marker 0x{marker:04x}")
    if marker == MARKER_LAST or (marker == MARKER_DATA and len(area) > MIN_FRAME_BYTES - HEADER_BYTES - FCS_BYTES):
        raise Truncated(f"data frame payload of {len(area)} bytes")
    if marker == RESPONSE_FILLER:
        response = CommandResponseField.unpack(area[2:RESPONSE_PACKET_BYTES])
        return CommandResponsePacket(response, marker), RESPONSE_PACKET_BYTES
    if marker in (KIND_ACK, KIND_NACK):
        kind, seq, packet, delay = _ACK.unpack_from(area)
        return Ack(kind, seq, packet, delay), ACK_BYTES
    code, csn, argument = _REQUEST.unpack_from(area)
    return CommandRequest(code, csn, argument), COMMAND_REQUEST_BYTES


def frame_type(payload: Payload) -> str:
    """Short name used in traces."""
    if isinstance(payload, Ack):
        return "nack" if payload.is_nack else "ack"
    if isinstance(payload, DataPacket):
        return "data"
    if isinstance(payload, LastDataPacket):
        return "last"
    if isinstance(payload, CommandRequest):
        return "cmd"
    return "resp"

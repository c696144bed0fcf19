import struct
import zlib

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fade10g.frame import (
    ACK_BYTES,
    COMMAND_REQUEST_BYTES,
    DATA_FRAME_BYTES,
    DATA_PAYLOAD_BYTES,
    KIND_ACK,
    KIND_NACK,
    RESERVED_COMMAND_CODES,
    RESPONSE_PACKET_BYTES,
    Ack,
    BadEthertype,
    BadFcs,
    BadVersion,
    CommandRequest,
    CommandResponseField,
    CommandResponsePacket,
    DataPacket,
    FrameHeader,
    InvalidPayload,
    LastDataPacket,
    MacAddress,
    Order,
    Truncated,
    UnknownPayloadMarker,
    build_frame,
    compute_fcs,
    decode_frame,
    encode_frame,
    encode_payload,
    encoded_length,
    frame_type,
    modular_order,
    packet_newer,
    seq_newer,
)

HDR = FrameHeader(MacAddress.parse("02:da:9c:00:00:01"), MacAddress.parse("02:fa:de:00:00:01"))


def crc32_bitwise(data: bytes) -> int:
    """Reference reflected CRC-32, one bit at a time."""
    crc = 0xFFFFFFFF
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = (crc >> 1) ^ (0xEDB88320 if crc & 1 else 0)
    return crc ^ 0xFFFFFFFF


# field widths as listed per payload variant, summed independently of the codec
WIDTHS = {
    "ack": [2, 2, 4, 4],
    "cmd": [2, 2, 4],
    "data": [2, 2, 4, 4, 12, 8192],
    "last": [2, 2, 4, 4, 12, 8184, 8],
    "resp": [2, 12],
    "response_field": [2, 2, 8],
}


def test_width_constants_match_field_sums():
    assert sum(WIDTHS["ack"]) == ACK_BYTES == 12
    assert sum(WIDTHS["cmd"]) == COMMAND_REQUEST_BYTES == 8
    assert sum(WIDTHS["data"]) == sum(WIDTHS["last"]) == DATA_PAYLOAD_BYTES == 8216
    assert sum(WIDTHS["resp"]) == RESPONSE_PACKET_BYTES == 14
    assert sum(WIDTHS["response_field"]) == 12
    assert 14 + 2 + DATA_PAYLOAD_BYTES + 4 == DATA_FRAME_BYTES == 8236


@pytest.mark.parametrize(
    "payload, width",
    [
        (Ack(KIND_ACK, 1, 2, 3), 12),
        (CommandRequest(0x100, 1, 2), 8),
        (DataPacket(0, 0, 0, bytes(8192)), 8216),
        (LastDataPacket(0, 0, 0, bytes(8184), 5), 8216),
        (CommandResponsePacket(CommandResponseField(0x100, 1, bytes(8))), 14),
    ],
)
def test_encoded_widths_and_length_law(payload, width):
    assert len(encode_payload(payload)) == width
    raw = encode_frame(HDR, payload)
    assert len(raw) == encoded_length(width) == max(64, 14 + 2 + width + 4)


def test_fcs_check_value_and_empty():
    assert compute_fcs(b"123456789") == 0xCBF43926
    assert compute_fcs(b"") == 0
    assert crc32_bitwise(b"123456789") == 0xCBF43926


@settings(max_examples=200)
@given(st.binary(max_size=300))
def test_fcs_matches_bitwise_reference(data):
    assert compute_fcs(data) == crc32_bitwise(data)


def test_fcs_residue():
    raw = encode_frame(HDR, Ack(KIND_ACK, 7, 9, 0))
    # running the CRC over message plus little-endian FCS leaves the 802.3 residue
    assert zlib.crc32(raw) ^ 0xFFFFFFFF == 0xDEBB20E3
    assert struct.unpack("<I", raw[-4:])[0] == crc32_bitwise(raw[:-4])


def test_ack_frame_layout():
    raw = encode_frame(HDR, Ack(KIND_ACK, 0x1234, 0xDEADBEEF, 0x01020304))
    assert len(raw) == 64
    assert raw[0:6] == HDR.destination.octets
    assert raw[6:12] == HDR.source.octets
    assert raw[12:16] == b"\xfa\xde\x01\x00"
    assert raw[16:28] == bytes.fromhex("0003 1234 deadbeef 01020304".replace(" ", ""))
    assert raw[28:60] == b"\xa5" * 32


def test_response_packet_layout_zero_value():
    raw = encode_frame(HDR, CommandResponsePacket(CommandResponseField(0x0101, 0x0203, bytes(8))))
    assert raw[16:30] == b"\xa5\xa5\x01\x01\x02\x03" + bytes(8)
    assert set(raw[30:60]) == {0xA5}


def test_data_frame_has_no_filler():
    frame = build_frame(HDR, DataPacket(1, 2, 3, bytes(range(256)) * 32))
    assert len(frame.raw) == DATA_FRAME_BYTES
    assert frame.filler == 0


macs = st.binary(min_size=6, max_size=6).map(MacAddress)
u16 = st.integers(0, 0xFFFF)
u32 = st.integers(0, 0xFFFFFFFF)
responses = st.builds(CommandResponseField, u16, u16, st.binary(min_size=8, max_size=8))
user_codes = u16.filter(lambda c: c not in RESERVED_COMMAND_CODES)
payloads = st.one_of(
    st.builds(Ack, st.sampled_from([KIND_ACK, KIND_NACK]), u16, u32, u32),
    st.builds(CommandRequest, user_codes, u16, u32),
    st.builds(DataPacket, u16, u32, u32, st.binary(min_size=8192, max_size=8192), responses),
    st.builds(
        LastDataPacket, u16, u32, u32, st.binary(min_size=8184, max_size=8184), st.integers(0, 1023), responses
    ),
    st.builds(CommandResponsePacket, responses),
)


@settings(max_examples=150, deadline=None)
@given(macs, macs, payloads)
def test_round_trip(dst, src, payload):
    header = FrameHeader(dst, src)
    raw = encode_frame(header, payload)
    frame = decode_frame(raw)
    assert frame.header == header
    assert frame.payload == payload
    assert raw[-4:] == struct.pack("<I", crc32_bitwise(raw[:-4]))
    assert set(raw[len(raw) - 4 - frame.filler : len(raw) - 4]) <= {0xA5}


@settings(max_examples=100, deadline=None)
@given(payloads, st.data())
def test_single_bit_flip_is_detected(payload, data):
    raw = bytearray(encode_frame(HDR, payload))
    bit = data.draw(st.integers(0, len(raw) * 8 - 1))
    raw[bit // 8] ^= 1 << (bit % 8)
    with pytest.raises(BadFcs):
        decode_frame(bytes(raw))


def _reseal(body: bytes) -> bytes:
    return body + struct.pack("<I", compute_fcs(body))


def test_bad_version_and_ethertype():
    raw = encode_frame(HDR, Ack(KIND_ACK, 0, 0))
    with pytest.raises(BadVersion):
        decode_frame(_reseal(raw[:14] + b"\x00\x01" + raw[16:-4]))
    with pytest.raises(BadEthertype):
        decode_frame(_reseal(raw[:12] + b"\x08\x00" + raw[14:-4]))


def test_truncated_and_unknown_marker():
    with pytest.raises(Truncated):
        decode_frame(bytes(63))
    raw = encode_frame(HDR, DataPacket(0, 0, 0, bytes(8192)))
    with pytest.raises(UnknownPayloadMarker):
        decode_frame(_reseal(raw[:16] + b"\x12\x34" + raw[18:-4]))
    # a data marker in a frame too short to hold a packet
    with pytest.raises(Truncated):
        decode_frame(_reseal(raw[:16] + b"\xa5\xa6" + raw[18:100]))


@pytest.mark.parametrize(
    "payload",
    [
        LastDataPacket(0, 0, 0, bytes(8184), 1024),
        DataPacket(0, 0, 0, bytes(100)),
        Ack(KIND_ACK, 1 << 16, 0),
        Ack(KIND_ACK, 0, 1 << 32),
        Ack(0x0007, 0, 0),
        CommandRequest(0xA5A5, 0, 0),
        CommandRequest(0x0000, 0, 0),
        CommandResponsePacket(CommandResponseField(1, 1, bytes(7))),
    ],
)
def test_invalid_payloads_rejected(payload):
    with pytest.raises(InvalidPayload):
        encode_frame(HDR, payload)


def test_frame_type_names():
    assert frame_type(Ack(KIND_NACK, 0, 0)) == "nack"
    assert frame_type(CommandRequest(0x100, 0)) == "cmd"
    assert frame_type(LastDataPacket(0, 0, 0, bytes(8184), 0)) == "last"


def test_mac_address():
    mac = MacAddress.parse("02-FA-DE-00-00-01")
    assert str(mac) == "02:fa:de:00:00:01"
    with pytest.raises(ValueError):
        MacAddress(b"\x00" * 5)


def formula(a, b, bits):
    if a == b:
        return Order.EQUAL
    return Order.NEWER if (a - b) % (1 << bits) <= 1 << (bits - 1) else Order.OLDER


def test_comparator_brute_force_8bit():
    for a in range(256):
        for b in range(256):
            want = formula(a, b, 8)
            assert modular_order(a, b, 256) is want
            assert packet_newer(a << 24, b << 24) is want
            assert seq_newer(a << 8, b << 8) is want


def test_comparator_examples():
    assert packet_newer(5, 5) is Order.EQUAL
    assert packet_newer(0, 2**32 - 1) is Order.NEWER
    assert seq_newer(1, 0) is Order.NEWER
    assert seq_newer(0, 65535) is Order.NEWER
    # exactly half the circle apart counts as newer from both sides
    assert packet_newer(0, 2**31) is Order.NEWER
    assert packet_newer(2**31, 0) is Order.NEWER
    assert seq_newer(0, 32767) is Order.OLDER


@settings(max_examples=300)
@given(u32, st.integers(0, 2**31 - 1), st.integers(0, 2**31 - 1))
def test_comparator_orders_any_window(base, i, j):
    if i == j:
        return
    i, j = sorted((i, j))
    assert packet_newer((base + j) % 2**32, (base + i) % 2**32) is Order.NEWER
    assert packet_newer((base + i) % 2**32, (base + j) % 2**32) is Order.OLDER

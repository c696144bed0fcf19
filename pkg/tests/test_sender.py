import struct

import numpy as np
import pytest

from fade10g.frame import (
    CMD_RESET,
    CMD_START,
    CMD_STOP,
    KIND_ACK,
    PACKET_WORDS,
    Ack,
    CommandRequest,
    CommandResponsePacket,
    DataPacket,
    FrameHeader,
    LastDataPacket,
    build_frame,
)
from fade10g.sender import BadConfig, DelayAdapter, NotStarted, ProtocolError, SenderConfig, SenderCore


def started(**kwargs) -> SenderCore:
    core = SenderCore(SenderConfig(**kwargs))
    core.start()
    return core


def fill(core: SenderCore, packets: int, start: int = 0) -> None:
    words = np.arange(start * PACKET_WORDS, (start + packets) * PACKET_WORDS, dtype=np.uint64)
    assert core.offer_words(words) == len(words)


def drain(core: SenderCore, now: int = 0) -> list:
    out = []
    while (frame := core.poll_output(now)) is not None:
        out.append(frame.payload)
    return out


def test_initial_ring():
    core = SenderCore(SenderConfig(n_fpga=4))
    assert core.ring_size == 16
    assert all(core.descriptor(i).flags == "----" for i in range(16))
    assert (core.head, core.tail, core.started) == (0, 0, False)


@pytest.mark.parametrize("n", [0, 33, -1])
def test_bad_window(n):
    with pytest.raises(BadConfig):
        SenderCore(SenderConfig(n_fpga=n))


def test_large_window_is_cheap():
    core = started(n_fpga=32)
    assert core.ring_size == 2**32
    fill(core, 3)
    assert core.in_flight == 3


def test_offer_requires_start():
    with pytest.raises(NotStarted):
        SenderCore().offer_words([1, 2, 3])


def test_offer_one_packet():
    core = started()
    fill(core, 1)
    d = core.descriptor(0)
    assert (d.valid, d.sent, d.pkt) == (True, False, 0)
    assert core.head == 1


def test_offer_1500_words_two_slot_ring():
    core = started(n_fpga=1)
    assert core.offer_words(np.arange(1500, dtype=np.uint64)) == 1500
    assert core.descriptor(0).valid and not core.descriptor(1).valid
    assert core.fill_words == 476


def test_full_window_blocks_input():
    core = started(n_fpga=2)
    fill(core, 4)
    assert not core.ready
    assert core.offer_words([1, 2]) == 0
    assert core.writable_words() == 0


def test_words_are_big_endian_in_packet():
    core = started()
    fill(core, 1)
    frame = core.poll_output(0)
    assert frame.payload.data[:16] == struct.pack(">QQ", 0, 1)


def test_emission_stamps_seq_and_flags():
    core = started()
    fill(core, 2)
    first, second = drain(core)
    assert isinstance(first, DataPacket)
    assert (first.seq, first.packet, second.seq, second.packet) == (0, 0, 1, 1)
    assert core.descriptor(0).flags == "VS--"
    assert core.descriptor(0).seq == 0


def test_ack_confirms_and_frees():
    core = started(n_fpga=2)
    fill(core, 4)
    drain(core)
    core.handle_ack(1, 1)
    assert core.descriptor(1).confirmed
    assert core.tail == 0
    core.handle_ack(0, 0)
    assert core.tail == 2
    assert core.descriptor(0).flags == "----"
    assert core.ready


def test_ack_beyond_last_sent_is_protocol_error():
    core = started()
    fill(core, 4)
    drain(core)
    with pytest.raises(ProtocolError):
        core.handle_ack(0, 10)
    assert core.counters.protocol_errors == 1


def test_stale_duplicate_ack_is_ignored():
    core = started()
    fill(core, 2)
    drain(core)
    core.handle_ack(0, 0)
    core.handle_ack(0, 0)
    assert core.tail == 1


def test_fig4_early_retransmission_with_suppression():
    core = started()
    fill(core, 7)
    sent = drain(core)
    assert [p.packet for p in sent] == list(range(7))
    core.handle_ack(0, 0)
    core.handle_ack(1, 1)
    core.handle_ack(3, 3)  # packet 2 lost
    (retx,) = [core.poll_output(0).payload]
    assert (retx.packet, retx.seq) == (2, 7)
    fill(core, 1, start=7)
    assert core.poll_output(0).payload.packet == 7  # seq 8
    core.handle_ack(5, 5)  # ack of 4 lost
    frame = core.poll_output(0).payload
    assert (frame.packet, frame.seq) == (4, 9)
    assert core.poll_output(0) is None
    assert core.counters.spurious_retransmissions == 0


def test_fig4_without_suppression_resends_packet_two():
    core = started(seq_suppression=False)
    fill(core, 8)
    drain(core)
    core.handle_ack(0, 0)
    core.handle_ack(1, 1)
    core.handle_ack(3, 3)
    assert core.poll_output(0).payload.packet == 2
    core.handle_ack(5, 5)
    again = [p.packet for p in drain(core)]
    assert again.count(2) == 1 and 4 in again
    assert core.counters.spurious_retransmissions == 1


def test_nack_moves_packet_to_front():
    core = started()
    fill(core, 4)
    drain(core)
    for p in range(3):
        core.handle_ack(p, p)
    core.handle_nack(0, 3)
    assert core.poll_output(0).payload.packet == 3
    core.handle_ack(4, 3)
    core.handle_nack(4, 3)  # confirmed: nothing to do
    core.handle_nack(0, 9)  # never sent
    assert core.poll_output(0) is None


def test_stop_flushes_partial_packet():
    core = started()
    core.offer_words(np.arange(512, dtype=np.uint64))
    core.stop()
    (last,) = drain(core)
    assert isinstance(last, LastDataPacket)
    assert last.valid_words == 512
    assert core.descriptor(0).flushed


def test_stop_on_packet_boundary_sends_empty_last():
    core = started()
    fill(core, 1)
    core.stop()
    frames = drain(core)
    assert isinstance(frames[-1], LastDataPacket) and frames[-1].valid_words == 0


def test_stop_deferred_while_ring_full():
    core = started(n_fpga=1)
    fill(core, 2)
    core.offer_words([])
    core.stop()
    drain(core)
    assert core.in_flight == 2
    core.handle_ack(0, 0)
    assert core.in_flight == 2  # the last packet took the freed slot
    frames = drain(core)
    assert isinstance(frames[0], LastDataPacket)


def test_delay_gate():
    core = started(min_delay=100)
    fill(core, 2)
    assert core.poll_output(0).payload.packet == 0
    core.transmit_done(8256)
    assert core.poll_output(8300) is None
    assert core.next_wakeup(8300) == 8356
    assert core.poll_output(8356).payload.packet == 1


def test_command_exactly_once():
    calls = []

    def hook(code, arg):
        calls.append((code, arg))
        return arg * 2

    core = SenderCore(SenderConfig(command_handler=hook))
    core.handle_command(0x100, 1, 21)
    first = core.poll_output(0).payload
    core.handle_command(0x100, 1, 21)
    second = core.poll_output(0).payload
    assert calls == [(0x100, 21)]
    assert isinstance(first, CommandResponsePacket) and first == second
    assert first.cmd_response.return_value == struct.pack("!Q", 42)


def test_response_piggybacks_on_data():
    core = started()
    fill(core, 1)
    core.handle_command(0x100, 5, 1)
    frame = core.poll_output(0).payload
    assert isinstance(frame, DataPacket)
    assert (frame.cmd_response.command_code, frame.cmd_response.csn) == (0x100, 5)
    assert core.poll_output(0) is None


def test_start_stop_via_commands():
    core = SenderCore()
    core.handle_command(CMD_START, 1, 0)
    assert core.started
    core.offer_words([7])
    core.handle_command(CMD_STOP, 2, 0)
    frames = drain(core)
    assert isinstance(frames[0], LastDataPacket) and frames[0].valid_words == 1
    assert frames[0].cmd_response.command_code == CMD_STOP


def test_reset_clears_state_without_response():
    core = started()
    fill(core, 3)
    drain(core)
    core.handle_command(CMD_RESET, 0, 0)
    assert (core.head, core.tail, core.in_flight, core.started) == (0, 0, 0, False)
    assert core.poll_output(0) is None
    assert core.adapter.tx_count == 0


def test_receive_decodes_frames_and_filters_destination():
    core = started()
    fill(core, 1)
    drain(core)
    cfg = core.config
    ack = build_frame(FrameHeader(cfg.mac, cfg.peer_mac), Ack(KIND_ACK, 0, 0, 99)).raw
    core.receive(ack)
    assert core.tail == 1 and core.counters.last_delay_echo == 99
    elsewhere = build_frame(FrameHeader(cfg.peer_mac, cfg.peer_mac), CommandRequest(0x100, 1)).raw
    core.receive(elsewhere)
    assert core.pending_response is None
    core.receive(b"\x00" * 64)
    assert core.counters.bad_frames == 1


def test_periodic_rescan_retransmits():
    core = started(rescan_interval=1000)
    fill(core, 1)
    drain(core, 0)
    assert core.poll_output(999) is None
    assert core.next_wakeup(999) == 1000
    frame = core.poll_output(1000).payload
    assert frame.packet == 0 and frame.seq == 1
    assert core.last_action == "retransmit"


class TestDelayAdapter:
    def test_floor_clamp(self):
        a = DelayAdapter(adapt_window=4)
        for _ in range(4):
            a.record(False)
        assert a.current_delay == 0

    def test_increase_on_high_ratio(self):
        a = DelayAdapter(hi_threshold=0.1, adapt_window=4, delay_step=10)
        for retx in (True, False, True, False):
            a.record(retx)
        assert a.current_delay == 10
        assert a.history == [(0.5, 10)]

    def test_dead_band(self):
        a = DelayAdapter(hi_threshold=0.5, lo_threshold=0.1, adapt_window=4, current_delay=30)
        for retx in (True, False, False, False):
            a.record(retx)
        assert a.current_delay == 30

    def test_decrease_and_ceiling(self):
        a = DelayAdapter(adapt_window=1, delay_step=10, max_delay=15, current_delay=15)
        a.record(True)
        assert a.current_delay == 15
        a.record(False)
        assert a.current_delay == 5

    def test_bad_thresholds(self):
        with pytest.raises(BadConfig):
            DelayAdapter(hi_threshold=0.01, lo_threshold=0.05)

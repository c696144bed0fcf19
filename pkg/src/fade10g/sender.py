"""Behavioral model of the FPGA-side FADE-10G core.

The core packs a stream of 64-bit words into 1024-word packets held in a
ring of ``2**n_fpga`` descriptors, transmits and retransmits them, adapts
the inter-packet delay to the observed retransmission ratio and executes
commands exactly once.

The ring is stored sparsely (only occupied descriptors exist), so the
large configurations the hardware supports (``n_fpga`` up to 32) cost
nothing until packets are actually buffered.
"""

from __future__ import annotations

import logging
import struct
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .frame import (
    CMD_RESET,
    CMD_START,
    CMD_STOP,
    KIND_NACK,
    NO_RESPONSE,
    PACKET_BYTES,
    PACKET_WORDS,
    PKT_MODULUS,
    SEQ_MODULUS,
    WORD_BYTES,
    Ack,
    CommandRequest,
    CommandResponseField,
    CommandResponsePacket,
    DataPacket,
    FrameError,
    FrameHeader,
    LastDataPacket,
    MacAddress,
    Order,
    WireFrame,
    build_frame,
    decode_frame,
    packet_newer,
    seq_newer,
)

log = logging.getLogger(__name__)

CommandHandler = Callable[[int, int], Union[bytes, int]]


class SenderError(Exception):
    pass


class BadConfig(SenderError, ValueError):
    pass


class NotStarted(SenderError):
    pass


class ProtocolError(SenderError):
    pass


def echo_handler(code: int, argument: int) -> bytes:
    """Default user-command hook: returns the code and argument it was given."""
    return struct.pack("!IHH", argument, 0, code)


@dataclass
class DelayAdapter:
    """Adjusts the inter-packet delay from the retransmission ratio.

    Delays are in byte-times. Every ``adapt_window`` emissions the ratio
    ``retx / (tx + retx)`` is compared against the two thresholds; between
    them the delay is left alone.
    """

    hi_threshold: float = 0.05
    lo_threshold: float = 0.01
    adapt_window: int = 1024
    delay_step: int = 512
    min_delay: int = 0
    max_delay: int = 1 << 20
    current_delay: Optional[int] = None
    tx_count: int = 0
    retx_count: int = 0
    history: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if not 0 <= self.lo_threshold <= self.hi_threshold <= 1:
            raise BadConfig("thresholds must satisfy 0 <= lo <= hi <= 1")
        if self.adapt_window < 1 or self.delay_step < 0:
            raise BadConfig("adapt_window must be positive and delay_step non-negative")
        if not 0 <= self.min_delay <= self.max_delay < 1 << 32:
            raise BadConfig("need 0 <= min_delay <= max_delay < 2**32")
        if self.current_delay is None:
            self.current_delay = self.min_delay
        self.current_delay = min(max(self.current_delay, self.min_delay), self.max_delay)

    def record(self, retransmission: bool) -> None:
        if retransmission:
            self.retx_count += 1
        else:
            self.tx_count += 1
        if self.tx_count + self.retx_count >= self.adapt_window:
            self.adapt_delay()

    def adapt_delay(self) -> int:
        total = self.tx_count + self.retx_count
        ratio = self.retx_count / total if total else 0.0
        if ratio > self.hi_threshold:
            self.current_delay = min(self.current_delay + self.delay_step, self.max_delay)
        elif ratio < self.lo_threshold:
            self.current_delay = max(self.current_delay - self.delay_step, self.min_delay)
        self.history.append((ratio, self.current_delay))
        self.tx_count = self.retx_count = 0
        return self.current_delay

    def reset(self) -> None:
        self.current_delay = self.min_delay
        self.tx_count = self.retx_count = 0


@dataclass
class SenderConfig:
    n_fpga: int = 4
    mac: MacAddress = field(default_factory=lambda: MacAddress.parse("02:fa:de:00:00:01"))
    peer_mac: MacAddress = field(default_factory=lambda: MacAddress.parse("02:da:9c:00:00:01"))
    hi_threshold: float = 0.05
    lo_threshold: float = 0.01
    adapt_window: int = 1024
    delay_step: int = 512
    min_delay: int = 0
    max_delay: int = 1 << 20
    # Minimum age (byte-times) of a sent, unconfirmed packet before the ring
    # scan sends it again. Early retransmission is not subject to it.
    rescan_interval: int = 1 << 17
    early_retransmit: bool = True
    seq_suppression: bool = True
    command_handler: CommandHandler = echo_handler

    def make_adapter(self) -> DelayAdapter:
        return DelayAdapter(
            hi_threshold=self.hi_threshold,
            lo_threshold=self.lo_threshold,
            adapt_window=self.adapt_window,
            delay_step=self.delay_step,
            min_delay=self.min_delay,
            max_delay=self.max_delay,
        )


@dataclass
class PacketDescriptor:
    valid: bool = False
    sent: bool = False
    confirmed: bool = False
    flushed: bool = False
    pkt: int = 0
    seq: int = 0
    data: bytes = field(default=b"", repr=False)
    valid_words: Optional[int] = None
    sent_at: int = 0
    emissions: int = 0

    @property
    def flags(self) -> str:
        return "".join(c if on else "-" for c, on in zip("VSCF", (self.valid, self.sent, self.confirmed, self.flushed)))


@dataclass
class SenderCounters:
    data_frames_sent: int = 0
    retransmissions: int = 0
    early_retransmissions: int = 0
    spurious_retransmissions: int = 0
    response_packets_sent: int = 0
    protocol_errors: int = 0
    commands_executed: int = 0
    duplicate_commands: int = 0
    resets: int = 0
    bad_frames: int = 0
    max_in_flight: int = 0
    last_delay_echo: int = 0


class SenderCore:
    """Descriptor ring, transmit scheduler and command processor of one link."""

    def __init__(self, config: Optional[SenderConfig] = None):
        config = config or SenderConfig()
        if not isinstance(config.n_fpga, int) or not 1 <= config.n_fpga <= 32:
            raise BadConfig(f"n_fpga must be in 1..32, got {config.n_fpga!r}")
        if config.rescan_interval < 0:
            raise BadConfig("rescan_interval must be non-negative")
        self.config = config
        self.ring_size = 1 << config.n_fpga
        self.adapter = config.make_adapter()
        self.counters = SenderCounters()
        self._header = FrameHeader(config.peer_mac, config.mac)
        self._reset_state()

    def _reset_state(self) -> None:
        self.started = False
        self.head = 0
        self.tail = 0
        self._fill = bytearray()
        self._descs: dict[int, PacketDescriptor] = {}
        self._blocked = False
        self._stop_pending = False
        self._next_seq = 0
        self._last_sent: Optional[int] = None
        self._cursor = 0
        self._early: deque = deque()
        self._early_set: set = set()
        self._last_emit: Optional[int] = None
        self._last_csn: Optional[int] = None
        self._last_response: Optional[CommandResponseField] = None
        self.pending_response: Optional[CommandResponseField] = None
        self.last_action: Optional[str] = None
        self.adapter.reset()

    # ring inspection

    def _slot(self, pkt: int) -> int:
        return pkt & (self.ring_size - 1)

    def descriptor(self, slot: int) -> PacketDescriptor:
        """Descriptor in ``slot``; free slots read back with all flags clear."""
        return self._descs.get(slot) or PacketDescriptor()

    def _lookup(self, pkt: int) -> Optional[PacketDescriptor]:
        desc = self._descs.get(self._slot(pkt))
        if desc is not None and desc.pkt == pkt:
            return desc
        return None

    @property
    def ready(self) -> bool:
        return self.started and not self._blocked and not self._stop_pending

    @property
    def in_flight(self) -> int:
        """Number of occupied (V=1) descriptors."""
        return len(self._descs)

    @property
    def current_delay(self) -> int:
        return self.adapter.current_delay

    @property
    def fill_words(self) -> int:
        return len(self._fill) // WORD_BYTES

    @property
    def drained(self) -> bool:
        return not self._descs and not self._fill and not self._stop_pending

    def writable_words(self) -> int:
        if not self.ready:
            return 0
        free_packets = self.ring_size - len(self._descs) - 1
        return PACKET_WORDS - self.fill_words + free_packets * PACKET_WORDS

    # data source side

    def start(self) -> None:
        self.started = True

    def offer_words(self, words: Union[Sequence[int], np.ndarray, bytes]) -> int:
        """Append words to the head packet; returns how many were taken."""
        if not self.started:
            raise NotStarted("core is not started")
        if isinstance(words, (bytes, bytearray, memoryview)):
            raw = memoryview(words).cast("B")
            if len(raw) % WORD_BYTES:
                raise ValueError("byte input must be a whole number of 64-bit words")
        else:
            raw = memoryview(np.asarray(words, dtype=np.uint64).astype(">u8", copy=False).tobytes())
        pos = 0
        while pos < len(raw) and self.ready:
            take = min(len(raw) - pos, PACKET_BYTES - len(self._fill))
            self._fill += raw[pos : pos + take]
            pos += take
            if len(self._fill) == PACKET_BYTES:
                self._seal_head(last=False)
        return pos // WORD_BYTES

    def stop(self) -> None:
        """Finish the stream: flush the partial head packet as the last packet."""
        self.started = False
        if self._blocked:
            self._stop_pending = True
        else:
            self._seal_head(last=True)

    def _seal_head(self, last: bool) -> None:
        desc = PacketDescriptor(valid=True, pkt=self.head, flushed=last)
        if last:
            desc.valid_words = self.fill_words
            desc.data = bytes(self._fill).ljust(PACKET_BYTES - WORD_BYTES, b"\0")
        else:
            desc.data = bytes(self._fill)
        self._fill = bytearray()
        self._descs[self._slot(self.head)] = desc
        self.counters.max_in_flight = max(self.counters.max_in_flight, len(self._descs))
        if len(self._descs) < self.ring_size:
            self.head = (self.head + 1) % PKT_MODULUS
        else:
            self._blocked = True

    def _advance_tail(self) -> None:
        while True:
            desc = self._descs.get(self._slot(self.tail))
            if desc is None or desc.pkt != self.tail or not desc.confirmed:
                break
            del self._descs[self._slot(self.tail)]
            self.tail = (self.tail + 1) % PKT_MODULUS
            if self._blocked:
                self._blocked = False
                self.head = (self.head + 1) % PKT_MODULUS
                if self._stop_pending:
                    self._stop_pending = False
                    self._seal_head(last=True)

    # acknowledgments and commands

    def handle_ack(self, seq: int, packet: int, delay_echo: int = 0) -> None:
        self.counters.last_delay_echo = delay_echo
        if self._last_sent is None or packet_newer(packet, self._last_sent) is Order.NEWER:
            self.counters.protocol_errors += 1
            raise ProtocolError(f"ack for packet {packet} beyond last transmitted {self._last_sent}")
        desc = self._lookup(packet)
        if desc is not None and desc.sent:
            desc.confirmed = True
        self._advance_tail()
        if self.config.early_retransmit:
            self._schedule_early(seq, packet)

    def _schedule_early(self, seq: int, packet: int) -> None:
        for desc in self._descs.values():
            if not desc.sent or desc.confirmed:
                continue
            stale = seq_newer(seq, desc.seq) is Order.NEWER
            if self.config.seq_suppression:
                if stale:
                    self._queue_early(desc.pkt, spurious=False)
            elif packet_newer(packet, desc.pkt) is Order.NEWER:
                self._queue_early(desc.pkt, spurious=not stale)

    def _queue_early(self, pkt: int, spurious: bool, front: bool = False) -> None:
        if pkt in self._early_set:
            return
        self._early_set.add(pkt)
        if front:
            self._early.appendleft((pkt, spurious))
        else:
            self._early.append((pkt, spurious))

    def handle_nack(self, seq: int, packet: int) -> None:
        desc = self._lookup(packet)
        if desc is None or not desc.sent or desc.confirmed:
            return
        if packet in self._early_set:
            self._early = deque(e for e in self._early if e[0] != packet)
            self._early_set.discard(packet)
        self._queue_early(packet, spurious=False, front=True)

    def handle_command(self, code: int, csn: int, argument: int) -> None:
        if code == CMD_RESET:
            self.counters.resets += 1
            self._reset_state()
            return
        if csn == self._last_csn and self._last_response is not None:
            self.counters.duplicate_commands += 1
            self.pending_response = self._last_response
            return
        self._last_csn = csn
        if code == CMD_START:
            self.start()
            value = bytes(8)
        elif code == CMD_STOP:
            if self.started:
                self.stop()
            value = bytes(8)
        else:
            value = self.config.command_handler(code, argument)
            if isinstance(value, int):
                value = struct.pack("!Q", value & 0xFFFFFFFFFFFFFFFF)
            self.counters.commands_executed += 1
        response = CommandResponseField(code, csn, bytes(value))
        self._last_response = response
        self.pending_response = response

    def receive(self, raw: bytes, now: int = 0) -> None:
        """Ethernet Receiver: decode one frame and act on it. Bad frames are dropped."""
        try:
            frame = decode_frame(raw)
        except FrameError as exc:
            self.counters.bad_frames += 1
            log.debug("sender dropped frame: %s", exc)
            return
        if frame.header.destination != self.config.mac:
            return
        payload = frame.payload
        if isinstance(payload, Ack):
            if payload.kind == KIND_NACK:
                self.handle_nack(payload.seq, payload.packet)
                return
            try:
                self.handle_ack(payload.seq, payload.packet, payload.delay_echo)
            except ProtocolError as exc:
                log.warning("%s", exc)
        elif isinstance(payload, CommandRequest):
            self.handle_command(payload.command_code, payload.csn, payload.argument)
        else:
            self.counters.bad_frames += 1

    # transmission

    def _gate_open(self, now: int) -> bool:
        return self._last_emit is None or now >= self._last_emit + self.adapter.current_delay

    def _eligible(self, desc: PacketDescriptor, now: int) -> bool:
        if not desc.valid or desc.confirmed:
            return False
        return not desc.sent or now - desc.sent_at >= self.config.rescan_interval

    def _scan(self, now: int) -> Optional[PacketDescriptor]:
        count = len(self._descs)
        if not count:
            return None
        start = (self._cursor - self.tail) % PKT_MODULUS
        if start >= count:
            start = 0
        for i in range(count):
            pkt = (self.tail + (start + i) % count) % PKT_MODULUS
            desc = self._lookup(pkt)
            if desc is not None and self._eligible(desc, now):
                return desc
        return None

    def _peek_early(self) -> Optional[PacketDescriptor]:
        while self._early:
            pkt, _ = self._early[0]
            desc = self._lookup(pkt)
            if desc is not None and desc.sent and not desc.confirmed:
                return desc
            self._early.popleft()
            self._early_set.discard(pkt)
        return None

    def has_data_pending(self, now: int) -> bool:
        return self._peek_early() is not None or self._scan(now) is not None

    def poll_output(self, now: int) -> Optional[WireFrame]:
        """Next frame to put on the wire at time ``now``, if any."""
        self.last_action = None
        if self._gate_open(now):
            desc = self._peek_early()
            if desc is not None:
                _, spurious = self._early.popleft()
                self._early_set.discard(desc.pkt)
                if spurious:
                    self.counters.spurious_retransmissions += 1
                return self._emit(desc, now, "early_retransmit")
            desc = self._scan(now)
            if desc is not None:
                return self._emit(desc, now, "retransmit" if desc.sent else "sent")
        if self.pending_response is not None:
            response, self.pending_response = self.pending_response, None
            self.counters.response_packets_sent += 1
            self.last_action = "response"
            return build_frame(self._header, CommandResponsePacket(response))
        return None

    def _emit(self, desc: PacketDescriptor, now: int, action: str) -> WireFrame:
        seq = self._next_seq
        self._next_seq = (seq + 1) % SEQ_MODULUS
        retransmission = desc.sent
        desc.seq = seq
        desc.sent = True
        desc.sent_at = now
        desc.emissions += 1
        response = self.pending_response or NO_RESPONSE
        self.pending_response = None
        delay = self.adapter.current_delay
        if desc.valid_words is None:
            payload = DataPacket(seq, desc.pkt, delay, desc.data, response)
        else:
            payload = LastDataPacket(seq, desc.pkt, delay, desc.data, desc.valid_words, response)
        c = self.counters
        c.data_frames_sent += 1
        if retransmission:
            c.retransmissions += 1
            if action == "early_retransmit":
                c.early_retransmissions += 1
        if self._last_sent is None or packet_newer(desc.pkt, self._last_sent) is Order.NEWER:
            self._last_sent = desc.pkt
        self._cursor = (desc.pkt + 1) % PKT_MODULUS
        self._last_emit = now
        self.last_action = action
        self.adapter.record(retransmission)
        return build_frame(self._header, payload)

    def transmit_done(self, now: int) -> None:
        """The Ethernet Sender finished serializing the last data frame."""
        self._last_emit = now

    def next_wakeup(self, now: int) -> Optional[int]:
        """Earliest time at which ``poll_output`` may return something new."""
        if self.pending_response is not None:
            return now
        if self.has_data_pending(now):
            if self._gate_open(now):
                return now
            return self._last_emit + self.adapter.current_delay
        times = [
            d.sent_at + self.config.rescan_interval
            for d in self._descs.values()
            if d.sent and not d.confirmed
        ]
        return min(times) if times else None

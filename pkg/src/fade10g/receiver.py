"""Computer-side FADE-10G endpoint, modeled on the Linux protocol handler.

One :class:`ReceiverCore` services up to ``max_slaves`` FEBs. Each associated
FEB has a :class:`SlaveContext` holding a circular receiver buffer of
``2**n_cpu`` packet slots. The user application talks to it through the
ioctl-equivalent methods (``open_slave``, ``start``, ``read_pointers``,
``consume``, ``send_user_command`` ...) and reads data directly out of
:meth:`ReceiverCore.buffer`, the stand-in for the mmap'ed kernel buffer.

Methods are not internally locked; callers driving one slave from several
threads must serialize access themselves.
"""

from __future__ import annotations

import enum
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .frame import (
    CMD_RESET,
    CMD_START,
    CMD_STOP,
    KIND_ACK,
    PACKET_BYTES,
    PKT_MODULUS,
    SEQ_MODULUS,
    WORD_BYTES,
    Ack,
    BadEthertype,
    BadFcs,
    BadVersion,
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
)

log = logging.getLogger(__name__)


class ReceiverError(Exception):
    pass


class TooManySlaves(ReceiverError):
    pass


class AlreadyAssociated(ReceiverError):
    pass


class NotAssociated(ReceiverError):
    pass


class OverConsume(ReceiverError):
    pass


class CommandBusy(ReceiverError):
    pass


class SlaveState(enum.Enum):
    CLOSED = "closed"
    ASSOCIATED = "associated"
    RUNNING = "running"
    FINISHED = "finished"


class EventKind(enum.Enum):
    DATA_AVAILABLE = "data_available"
    END_OF_TRANSMISSION = "end_of_transmission"
    COMMAND_COMPLETE = "command_complete"
    COMMAND_TIMEOUT = "command_timeout"


@dataclass(frozen=True)
class ConsumerEvent:
    kind: EventKind
    slave: int
    detail: bytes = b""
    code: int = 0
    csn: int = 0


@dataclass(frozen=True)
class Pointers:
    head: int
    tail: int
    available: int


@dataclass
class ReceiverConfig:
    n_cpu: int = 6
    # Exponent of the sender's transmission window (defaults to n_cpu).
    # Packets further than this ahead of the first missing packet are
    # protocol errors; closer ones that merely do not fit the buffer are
    # dropped for retransmission.
    window_exponent: Optional[int] = None
    max_slaves: int = 4
    mac: MacAddress = field(default_factory=lambda: MacAddress.parse("02:da:9c:00:00:01"))
    wakeup_threshold: int = 0
    control_retries: int = 10
    control_timeout: int = 100_000

    def __post_init__(self):
        if not 1 <= self.n_cpu <= 24:
            raise ValueError(f"n_cpu must be in 1..24, got {self.n_cpu}")
        if self.window_exponent is not None and not 1 <= self.window_exponent <= 32:
            raise ValueError("window_exponent must be in 1..32")
        if self.max_slaves < 1:
            raise ValueError("max_slaves must be positive")


class ReceiverSlotBuffer:
    """Circular buffer of ``2**n_cpu`` packet slots with head/tail byte pointers.

    Pointers are kept as absolute byte counts; the ring positions reported
    to the consumer are these modulo the capacity.
    """

    def __init__(self, n_cpu: int):
        self.n_cpu = n_cpu
        self.slots = 1 << n_cpu
        self.capacity = self.slots * PACKET_BYTES
        self.data = bytearray(self.capacity)
        self.last_confirmed: list[Optional[int]] = [None] * self.slots
        self.head_abs = 0
        self.tail_abs = 0

    @property
    def head(self) -> int:
        return self.head_abs % self.capacity

    @property
    def tail(self) -> int:
        return self.tail_abs % self.capacity

    @property
    def available(self) -> int:
        return self.head_abs - self.tail_abs

    @property
    def base_packet(self) -> int:
        """Number of the packet holding the oldest unread byte."""
        return (self.tail_abs // PACKET_BYTES) % PKT_MODULUS

    def store(self, pkt: int, payload: bytes) -> None:
        slot = pkt & (self.slots - 1)
        offset = slot * PACKET_BYTES
        self.data[offset : offset + len(payload)] = payload
        self.last_confirmed[slot] = pkt

    def peek(self, nbytes: int) -> bytes:
        nbytes = min(nbytes, self.available)
        start = self.tail
        end = start + nbytes
        if end <= self.capacity:
            return bytes(self.data[start:end])
        return bytes(self.data[start:]) + bytes(self.data[: end - self.capacity])


@dataclass
class PendingCommand:
    code: int
    csn: int
    argument: int
    retries_left: int
    timeout: int
    deadline: int
    attempts: int = 1


@dataclass
class SlaveContext:
    mac: MacAddress
    interface: int
    buffer: ReceiverSlotBuffer
    wakeup_threshold: int = 0
    state: SlaveState = SlaveState.ASSOCIATED
    bad_version: bool = False
    bad_type: bool = False
    protocol_error: bool = False
    last_packet_flag: bool = False
    end_of_transmission: bool = False
    last_packet: Optional[int] = None
    last_valid_words: int = 0
    next_packet: int = 0
    pending_command: Optional[PendingCommand] = None
    next_csn: int = 0
    last_result: Optional[CommandResponseField] = None
    acks: deque = field(default_factory=deque)
    commands: deque = field(default_factory=deque)
    # diagnostics
    max_window_offset: int = -1

    def reset_stream(self) -> None:
        self.buffer = ReceiverSlotBuffer(self.buffer.n_cpu)
        self.last_packet_flag = False
        self.end_of_transmission = False
        self.last_packet = None
        self.last_valid_words = 0
        self.next_packet = 0
        self.acks.clear()


@dataclass
class ReceiverCounters:
    acks_sent: int = 0
    reacks: int = 0
    data_frames_received: int = 0
    packets_accepted: int = 0
    dropped_no_space: int = 0
    protocol_errors: int = 0
    bad_frames: int = 0
    resets_sent: int = 0
    commands_sent: int = 0
    commands_completed: int = 0
    command_retries: int = 0
    command_timeouts: int = 0
    stale_responses: int = 0
    end_of_transmission_events: int = 0


class ReceiverCore:
    def __init__(self, config: Optional[ReceiverConfig] = None):
        self.config = config or ReceiverConfig()
        self._slaves: list[Optional[SlaveContext]] = [None] * self.config.max_slaves
        self._orphans: deque = deque()
        self.counters = ReceiverCounters()
        self.last_action: Optional[str] = None

    # association (GETMAC / FREEMAC)

    def open_slave(self, mac: MacAddress, interface: int = 0) -> int:
        for ctx in self._slaves:
            if ctx is not None and ctx.mac == mac:
                raise AlreadyAssociated(f"{mac} is already associated")
        for handle, ctx in enumerate(self._slaves):
            if ctx is None:
                self._slaves[handle] = SlaveContext(
                    mac, interface, ReceiverSlotBuffer(self.config.n_cpu), self.config.wakeup_threshold
                )
                return handle
        raise TooManySlaves(f"max_slaves={self.config.max_slaves} reached")

    def free_slave(self, slave: int) -> None:
        self._ctx(slave)
        self._slaves[slave] = None

    def _ctx(self, slave: int) -> SlaveContext:
        if not 0 <= slave < len(self._slaves) or self._slaves[slave] is None:
            raise NotAssociated(f"no FEB associated with slave {slave}")
        return self._slaves[slave]

    def context(self, slave: int) -> SlaveContext:
        return self._ctx(slave)

    @property
    def slaves(self) -> list[int]:
        return [i for i, ctx in enumerate(self._slaves) if ctx is not None]

    def _find(self, mac: MacAddress) -> Optional[int]:
        for handle, ctx in enumerate(self._slaves):
            if ctx is not None and ctx.mac == mac:
                return handle
        return None

    # buffer access (READPTRS / WRITEPTRS / SETWAKEUP / GETBUFLEN / mmap)

    def read_pointers(self, slave: int) -> Pointers:
        buf = self._ctx(slave).buffer
        return Pointers(buf.head, buf.tail, buf.available)

    def consume(self, slave: int, nbytes: int) -> int:
        buf = self._ctx(slave).buffer
        if nbytes < 0 or nbytes > buf.available:
            raise OverConsume(f"cannot consume {nbytes} of {buf.available} available bytes")
        buf.tail_abs += nbytes
        return buf.tail

    def set_wakeup_threshold(self, slave: int, nbytes: int) -> None:
        if nbytes < 0:
            raise ValueError("wake-up threshold must be non-negative")
        self._ctx(slave).wakeup_threshold = nbytes

    def buffer_length(self, slave: int) -> int:
        return self._ctx(slave).buffer.capacity

    def buffer(self, slave: int) -> memoryview:
        return memoryview(self._ctx(slave).buffer.data)

    def peek(self, slave: int, nbytes: int) -> bytes:
        """Copy up to ``nbytes`` unread bytes starting at the tail pointer."""
        return self._ctx(slave).buffer.peek(nbytes)

    # commands (STARTMAC / STOPMAC / RESETMAC / USERCMD)

    def _issue(self, ctx: SlaveContext, code: int, argument: int, retries: int, timeout: int, now: int) -> int:
        if ctx.pending_command is not None:
            raise CommandBusy("a command is already pending on this slave")
        ctx.next_csn = (ctx.next_csn + 1) % SEQ_MODULUS
        ctx.pending_command = PendingCommand(code, ctx.next_csn, argument, retries, timeout, now + timeout)
        ctx.commands.append(CommandRequest(code, ctx.next_csn, argument))
        return ctx.next_csn

    def start(self, slave: int, now: int = 0) -> int:
        ctx = self._ctx(slave)
        csn = self._issue(ctx, CMD_START, 0, self.config.control_retries, self.config.control_timeout, now)
        ctx.state = SlaveState.RUNNING
        return csn

    def stop(self, slave: int, now: int = 0) -> int:
        ctx = self._ctx(slave)
        return self._issue(ctx, CMD_STOP, 0, self.config.control_retries, self.config.control_timeout, now)

    def reset_slave(self, slave: int) -> None:
        ctx = self._ctx(slave)
        ctx.next_csn = (ctx.next_csn + 1) % SEQ_MODULUS
        ctx.pending_command = None
        ctx.commands.clear()
        ctx.commands.append(CommandRequest(CMD_RESET, ctx.next_csn, 0))
        ctx.reset_stream()
        ctx.state = SlaveState.ASSOCIATED

    def send_user_command(
        self, slave: int, code: int, argument: int = 0, retries: int = 3, timeout: int = 100_000, now: int = 0
    ) -> int:
        if retries < 0 or timeout <= 0:
            raise ValueError("retries must be >= 0 and timeout positive")
        return self._issue(self._ctx(slave), code, argument, retries, timeout, now)

    def next_deadline(self) -> Optional[int]:
        deadlines = [c.pending_command.deadline for c in self._slaves if c is not None and c.pending_command]
        return min(deadlines) if deadlines else None

    def tick(self, now: int) -> list[ConsumerEvent]:
        """Re-send or give up on commands whose response is overdue."""
        events = []
        for handle, ctx in enumerate(self._slaves):
            cmd = ctx.pending_command if ctx is not None else None
            if cmd is None or now < cmd.deadline:
                continue
            if cmd.retries_left > 0:
                cmd.retries_left -= 1
                cmd.attempts += 1
                cmd.deadline = now + cmd.timeout
                ctx.commands.append(CommandRequest(cmd.code, cmd.csn, cmd.argument))
                self.counters.command_retries += 1
            else:
                ctx.pending_command = None
                self.counters.command_timeouts += 1
                events.append(ConsumerEvent(EventKind.COMMAND_TIMEOUT, handle, code=cmd.code, csn=cmd.csn))
        return events

    # reception

    def handle_frame(self, raw: bytes, now: int = 0, interface: int = 0) -> list[ConsumerEvent]:
        try:
            frame = decode_frame(raw)
        except (BadFcs, BadEthertype) as exc:
            self.counters.bad_frames += 1
            log.debug("dropped frame: %s", exc)
            return []
        except FrameError as exc:
            self.counters.bad_frames += 1
            source = MacAddress(bytes(raw[6:12]))
            handle = self._find(source)
            if handle is None:
                self._reset_orphan(source, interface)
            elif isinstance(exc, BadVersion):
                self._slaves[handle].bad_version = True
            else:
                self._slaves[handle].bad_type = True
            return []
        handle = self._find(frame.header.source)
        if handle is None:
            self._reset_orphan(frame.header.source, interface)
            return []
        ctx = self._slaves[handle]
        payload = frame.payload
        if isinstance(payload, CommandResponsePacket):
            return self._service_response(handle, ctx, payload.cmd_response)
        if not isinstance(payload, (DataPacket, LastDataPacket)):
            ctx.bad_type = True
            return []
        events = self._service_response(handle, ctx, payload.cmd_response)
        events += self._handle_data(handle, ctx, payload)
        return events

    def _reset_orphan(self, mac: MacAddress, interface: int) -> None:
        self.counters.resets_sent += 1
        self._orphans.append((mac, interface))

    def _service_response(self, handle: int, ctx: SlaveContext, response: CommandResponseField) -> list:
        if response.empty:
            return []
        cmd = ctx.pending_command
        if cmd is None or cmd.code != response.command_code or cmd.csn != response.csn:
            self.counters.stale_responses += 1
            return []
        ctx.pending_command = None
        ctx.last_result = response
        self.counters.commands_completed += 1
        return [
            ConsumerEvent(EventKind.COMMAND_COMPLETE, handle, response.return_value, response.command_code, response.csn)
        ]

    def _handle_data(self, handle: int, ctx: SlaveContext, payload) -> list:
        self.counters.data_frames_received += 1
        buf = ctx.buffer
        pkt = payload.packet
        slot = pkt & (buf.slots - 1)
        if packet_newer(pkt, ctx.next_packet) is Order.OLDER or buf.last_confirmed[slot] == pkt:
            self._queue_ack(ctx, payload, reack=True)
            return []
        ahead = (pkt - ctx.next_packet) % PKT_MODULUS
        if ahead >= 1 << (self.config.window_exponent or self.config.n_cpu):
            ctx.protocol_error = True
            self.counters.protocol_errors += 1
            return []
        offset = (pkt - buf.base_packet) % PKT_MODULUS
        if offset >= buf.slots:
            self.counters.dropped_no_space += 1
            return []
        is_last = isinstance(payload, LastDataPacket)
        buf.store(pkt, payload.valid_data if is_last else payload.data)
        ctx.max_window_offset = max(ctx.max_window_offset, offset)
        self.counters.packets_accepted += 1
        if is_last:
            ctx.last_packet_flag = True
            ctx.last_packet = pkt
            ctx.last_valid_words = payload.valid_words
        self._queue_ack(ctx, payload, reack=False)
        return self._advance_head(handle, ctx)

    def _queue_ack(self, ctx: SlaveContext, payload, reack: bool) -> None:
        ctx.acks.append((Ack(KIND_ACK, payload.seq, payload.packet, payload.delay), reack))

    def _advance_head(self, handle: int, ctx: SlaveContext) -> list:
        buf = ctx.buffer
        moved = False
        while not ctx.end_of_transmission:
            pkt = ctx.next_packet
            if buf.last_confirmed[pkt & (buf.slots - 1)] != pkt:
                break
            moved = True
            ctx.next_packet = (pkt + 1) % PKT_MODULUS
            if ctx.last_packet_flag and pkt == ctx.last_packet:
                buf.head_abs += ctx.last_valid_words * WORD_BYTES
                ctx.end_of_transmission = True
            else:
                buf.head_abs += PACKET_BYTES
        events = []
        if ctx.end_of_transmission and ctx.state is not SlaveState.FINISHED:
            ctx.state = SlaveState.FINISHED
            self.counters.end_of_transmission_events += 1
            events.append(ConsumerEvent(EventKind.DATA_AVAILABLE, handle))
            events.append(ConsumerEvent(EventKind.END_OF_TRANSMISSION, handle))
        elif moved and buf.available >= ctx.wakeup_threshold:
            events.append(ConsumerEvent(EventKind.DATA_AVAILABLE, handle))
        return events

    # transmission

    def _header(self, mac: MacAddress) -> FrameHeader:
        return FrameHeader(mac, self.config.mac)

    def poll_outgoing(self, slave: Optional[int] = None, now: int = 0, interface: Optional[int] = None) -> Optional[WireFrame]:
        """Next frame toward ``slave``: queued acks first, then commands.

        With ``slave=None`` the resets addressed to unknown FEBs are drained
        instead (optionally only those seen on ``interface``).
        """
        self.last_action = None
        if slave is None:
            for i, (mac, iface) in enumerate(self._orphans):
                if interface is None or iface == interface:
                    del self._orphans[i]
                    self.last_action = "reset"
                    return build_frame(self._header(mac), CommandRequest(CMD_RESET, 0, 0))
            return None
        ctx = self._ctx(slave)
        if ctx.acks:
            ack, reack = ctx.acks.popleft()
            self.counters.acks_sent += 1
            if reack:
                self.counters.reacks += 1
            self.last_action = "reack" if reack else "ack"
            return build_frame(self._header(ctx.mac), ack)
        if ctx.commands:
            request = ctx.commands.popleft()
            self.counters.commands_sent += 1
            self.last_action = "sent"
            return build_frame(self._header(ctx.mac), request)
        return None

"""Deterministic discrete-event simulation of FEBs talking to one receiver.

Time is counted in byte-times: one tick is the time the line needs to
serialize one byte. Every sender gets its own full-duplex link to the
receiver; each link direction draws from an independent PCG64 substream
spawned from the scenario seed, so runs are reproducible bit for bit.
"""

from __future__ import annotations

import heapq
import itertools
import logging
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional

import numpy as np

from .frame import (
    CMD_USER_MIN,
    PACKET_BYTES,
    PACKET_WORDS,
    RESERVED_COMMAND_CODES,
    WORD_BYTES,
    Ack,
    CommandRequest,
    CommandResponsePacket,
    DataPacket,
    LastDataPacket,
    MacAddress,
    WireFrame,
    frame_type,
)
from .receiver import EventKind, ReceiverConfig, ReceiverCore
from .sender import SenderConfig, SenderCore
from .stats import ScenarioStats, command_rate, goodput_fraction

log = logging.getLogger(__name__)

TO_DAQ = "feb->daq"
TO_FEB = "daq->feb"
DIRECTIONS = (TO_DAQ, TO_FEB)


class ScenarioError(Exception):
    pass


class ScenarioDeadlock(ScenarioError):
    pass


class ScenarioTimeout(ScenarioError):
    pass


@dataclass
class ChannelConfig:
    loss_probability: float = 0.0
    # per-direction overrides of loss_probability
    loss_to_daq: Optional[float] = None
    loss_to_feb: Optional[float] = None
    latency: int = 0
    jitter: int = 0
    reorder_probability: float = 0.0
    # only used to convert byte-times into seconds
    line_rate: float = 10e9
    framing_overhead: int = 20
    seed: int = 0
    scripted_losses: list = field(default_factory=list)

    def __post_init__(self):
        for name in ("loss_probability", "loss_to_daq", "loss_to_feb", "reorder_probability"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be within [0, 1], got {value}")
        if self.line_rate <= 0:
            raise ValueError("line_rate must be positive")
        if self.latency < 0 or self.jitter < 0 or self.framing_overhead < 0:
            raise ValueError("latency, jitter and framing_overhead must be non-negative")
        self.scripted_losses = [tuple(x) for x in self.scripted_losses]
        last = {}
        for direction, ordinal in self.scripted_losses:
            if direction not in DIRECTIONS:
                raise ValueError(f"unknown direction {direction!r} in scripted_losses")
            if ordinal <= last.get(direction, -1):
                raise ValueError(f"scripted loss ordinals for {direction} must be strictly increasing")
            last[direction] = ordinal

    def loss(self, direction: str) -> float:
        override = self.loss_to_daq if direction == TO_DAQ else self.loss_to_feb
        return self.loss_probability if override is None else override


@dataclass(order=True)
class SimEvent:
    time: int
    order: int
    kind: str = field(compare=False)
    action: Callable = field(compare=False, repr=False)
    payload: object = field(default=None, compare=False, repr=False)


class Simulator:
    """Event queue with a stable tie-break on insertion order."""

    def __init__(self):
        self.now = 0
        self._queue: list[SimEvent] = []
        self._order = itertools.count()

    def schedule(self, time: int, kind: str, action: Callable, payload=None) -> SimEvent:
        if time < self.now:
            raise ValueError(f"cannot schedule in the past ({time} < {self.now})")
        event = SimEvent(int(time), next(self._order), kind, action, payload)
        heapq.heappush(self._queue, event)
        return event

    def step(self) -> Optional[SimEvent]:
        if not self._queue:
            return None
        event = heapq.heappop(self._queue)
        self.now = event.time
        event.action(event)
        return event

    def __len__(self):
        return len(self._queue)


class _Flight:
    __slots__ = ("frame", "delivered")

    def __init__(self, frame: WireFrame):
        self.frame = frame
        self.delivered = False


class Channel:
    """One direction of a link: loss, latency, jitter and adjacent swaps."""

    def __init__(
        self,
        sim: Simulator,
        config: ChannelConfig,
        direction: str,
        rng: np.random.Generator,
        deliver: Callable[[WireFrame], None],
        on_drop: Optional[Callable[[WireFrame], None]] = None,
    ):
        self.sim = sim
        self.config = config
        self.direction = direction
        self.rng = rng
        self.deliver = deliver
        self.on_drop = on_drop
        self.loss = config.loss(direction)
        self.scripted = {o for d, o in config.scripted_losses if d == direction}
        self.sent = 0
        self.dropped = 0
        self.delivered = 0
        self._last_flight: Optional[_Flight] = None

    @property
    def in_flight(self) -> int:
        return self.sent - self.dropped - self.delivered

    def serialization_time(self, nbytes: int) -> int:
        return nbytes + self.config.framing_overhead

    def send(self, frame: WireFrame, now: int) -> Optional[int]:
        """Put ``frame`` on the wire at ``now``; returns its delivery time or None if lost."""
        ordinal = self.sent
        self.sent += 1
        lost = self.loss > 0 and self.rng.random() < self.loss
        if ordinal in self.scripted or lost:
            self.dropped += 1
            if self.on_drop:
                self.on_drop(frame)
            return None
        cfg = self.config
        at = now + self.serialization_time(len(frame.raw)) + cfg.latency
        if cfg.jitter:
            at += int(self.rng.integers(0, cfg.jitter + 1))
        flight = _Flight(frame)
        prev = self._last_flight
        if cfg.reorder_probability > 0 and self.rng.random() < cfg.reorder_probability:
            if prev is not None and not prev.delivered:
                flight.frame, prev.frame = prev.frame, flight.frame
        self._last_flight = flight
        self.sim.schedule(at, "deliver_frame", self._arrive, flight)
        return at

    def _arrive(self, event: SimEvent) -> None:
        flight = event.payload
        flight.delivered = True
        self.delivered += 1
        self.deliver(flight.frame)


# data source and consumer models


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


@dataclass(frozen=True)
class DataPattern:
    """Position-addressable word stream, so the consumer can check it without a copy."""

    kind: str = "counter"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("counter", "prng", "zeros"):
            raise ValueError(f"unknown data pattern {self.kind!r}")

    def words(self, start: int, count: int) -> np.ndarray:
        index = np.arange(start, start + count, dtype=np.uint64)
        if self.kind == "counter":
            return index
        if self.kind == "zeros":
            return np.zeros(count, dtype=np.uint64)
        with np.errstate(over="ignore"):
            return _splitmix64(index + np.uint64(self.seed & 0xFFFFFFFFFFFFFFFF) * np.uint64(0xD1342543DE82EF95))


@dataclass
class SourceModel:
    total_words: int = 0
    pattern: DataPattern = field(default_factory=DataPattern)
    # words per byte-time; None keeps the core's input saturated
    rate: Optional[float] = None
    # "local": the FEB ends its own stream; "command": the DAQ sends STOP
    stop: str = "local"

    def __post_init__(self):
        if self.total_words < 0:
            raise ValueError("total_words must be non-negative")
        if self.rate is not None and self.rate <= 0:
            raise ValueError("source rate must be positive")
        if self.stop not in ("local", "command"):
            raise ValueError("source stop must be 'local' or 'command'")

    @classmethod
    def packets(cls, count: int, **kwargs) -> "SourceModel":
        return cls(total_words=count * PACKET_WORDS, **kwargs)


@dataclass
class ConsumerModel:
    # bytes per byte-time; None consumes everything as soon as it is woken
    rate: Optional[float] = None
    chunk: int = PACKET_BYTES
    verify: bool = True
    wakeup_threshold: int = 0

    def __post_init__(self):
        if self.rate is not None and self.rate <= 0:
            raise ValueError("consumer rate must be positive")
        if self.chunk <= 0 or self.chunk % WORD_BYTES:
            raise ValueError("consumer chunk must be a positive multiple of 8")


def _check_command(code: int, retries: int, timeout: int) -> None:
    if not 0 < code <= 0xFFFF or code in RESERVED_COMMAND_CODES:
        raise ValueError(f"command code 0x{code:04x} is reserved or out of range")
    if retries < 0 or timeout <= 0:
        raise ValueError("retries must be non-negative and timeout positive")


@dataclass
class CommandSpec:
    at_time: int
    code: int
    argument: int = 0
    retries: int = 3
    timeout: int = 100_000
    slave: int = 0

    def __post_init__(self):
        _check_command(self.code, self.retries, self.timeout)
        if self.at_time < 0 or self.slave < 0:
            raise ValueError("at_time and slave must be non-negative")


@dataclass
class CommandStream:
    """Back-to-back user commands: the next one is sent when the previous ends."""

    count: int
    code: int = CMD_USER_MIN
    retries: int = 5
    timeout: int = 100_000
    start_time: int = 0
    slave: int = 0

    def __post_init__(self):
        _check_command(self.code, self.retries, self.timeout)
        if self.count < 0 or self.start_time < 0 or self.slave < 0:
            raise ValueError("count, start_time and slave must be non-negative")


@dataclass
class Scenario:
    senders: list = field(default_factory=lambda: [SenderConfig()])
    receiver: ReceiverConfig = field(default_factory=ReceiverConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    source: SourceModel = field(default_factory=SourceModel)
    consumer: ConsumerModel = field(default_factory=ConsumerModel)
    commands: list = field(default_factory=list)
    command_stream: Optional[CommandStream] = None
    time_limit: Optional[int] = None
    trace: bool = False
    name: str = "scenario"


class StreamVerifier:
    def __init__(self, pattern: DataPattern, total_words: int):
        self.pattern = pattern
        self.total_words = total_words
        self.words_checked = 0
        self.bytes_seen = 0
        self.ok = True
        self.first_error: Optional[int] = None
        self._carry = b""

    def feed(self, chunk: bytes) -> None:
        self.bytes_seen += len(chunk)
        data = self._carry + chunk
        usable = len(data) - len(data) % WORD_BYTES
        self._carry = data[usable:]
        if not usable or not self.ok:
            return
        got = np.frombuffer(data[:usable], dtype=">u8")
        want = self.pattern.words(self.words_checked, len(got))
        if self.words_checked + len(got) > self.total_words or not np.array_equal(got, want):
            self.ok = False
            bad = np.nonzero(got[: len(want)] != want)[0]
            self.first_error = self.words_checked + (int(bad[0]) if len(bad) else len(want))
        self.words_checked += len(got)

    @property
    def complete(self) -> bool:
        return self.ok and not self._carry and self.words_checked == self.total_words


@dataclass
class ScenarioResult:
    stats: ScenarioStats
    trace: list
    senders: list
    receiver: ReceiverCore
    verifiers: list
    command_results: list

    def trace_text(self) -> str:
        return "".join(line + "\n" for line in [TRACE_HEADER, *self.trace])


TRACE_HEADER = "# time\tlink\tdirection\ttype\tpacket\tseq\taction"


def _describe(payload) -> tuple[str, str, str]:
    kind = frame_type(payload)
    if isinstance(payload, (DataPacket, LastDataPacket, Ack)):
        return kind, str(payload.packet), str(payload.seq)
    if isinstance(payload, CommandRequest):
        return kind, f"code=0x{payload.command_code:04x}", f"csn={payload.csn}"
    if isinstance(payload, CommandResponsePacket):
        r = payload.cmd_response
        return kind, f"code=0x{r.command_code:04x}", f"csn={r.csn}"
    return kind, "-", "-"


class _Port:
    __slots__ = ("busy_until", "wake_at")

    def __init__(self):
        self.busy_until = 0
        self.wake_at: Optional[int] = None


class _SourceState:
    def __init__(self, model: SourceModel):
        self.model = model
        self.offered = 0
        self.budget = 0
        self.done = False
        self.started_at: Optional[int] = None


class _ConsumerState:
    def __init__(self):
        self.busy = False


def _mac(prefix: str, index: int) -> MacAddress:
    return MacAddress.parse(f"{prefix}:{(index >> 8) & 0xFF:02x}:{index & 0xFF:02x}")


class ScenarioRunner:
    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.sim = Simulator()
        n = len(scenario.senders)
        if n < 1:
            raise ValueError("a scenario needs at least one sender")
        rx_config = replace(scenario.receiver, max_slaves=max(scenario.receiver.max_slaves, n))
        if rx_config.window_exponent is None:
            rx_config.window_exponent = max(c.n_fpga for c in scenario.senders)
        self.receiver = ReceiverCore(rx_config)
        self.senders: list[SenderCore] = []
        macs = [c.mac for c in scenario.senders]
        unique = len(set(macs)) == n
        for i, cfg in enumerate(scenario.senders):
            mac = cfg.mac if unique else _mac("02:fa:de:00", i + 1)
            self.senders.append(SenderCore(replace(cfg, mac=mac, peer_mac=rx_config.mac)))
        self.handles = [self.receiver.open_slave(s.config.mac, interface=i) for i, s in enumerate(self.senders)]
        for h in self.handles:
            self.receiver.set_wakeup_threshold(h, scenario.consumer.wakeup_threshold)

        streams = np.random.SeedSequence(scenario.channel.seed).spawn(2 * n)
        self.down: list[Channel] = []
        self.up: list[Channel] = []
        for i in range(n):
            self.down.append(
                Channel(
                    self.sim, scenario.channel, TO_DAQ, np.random.Generator(np.random.PCG64(streams[2 * i])),
                    self._deliver_to_daq(i), self._dropped(i, TO_DAQ),
                )
            )
            self.up.append(
                Channel(
                    self.sim, scenario.channel, TO_FEB, np.random.Generator(np.random.PCG64(streams[2 * i + 1])),
                    self._deliver_to_feb(i), self._dropped(i, TO_FEB),
                )
            )
        self.feb_ports = [_Port() for _ in range(n)]
        self.daq_ports = [_Port() for _ in range(n)]
        self.sources = [_SourceState(scenario.source) for _ in range(n)]
        self.consumers = [_ConsumerState() for _ in range(n)]
        self.verifiers = [StreamVerifier(scenario.source.pattern, scenario.source.total_words) for _ in range(n)]
        self.delivered = [0] * n
        self.cmd_queues = [deque() for _ in range(n)]
        self.stream_issued = 0
        self.command_results: list = []
        self.trace: list[str] = []
        self._rx_timer: Optional[int] = None
        self._pending_scripted = len(scenario.commands)

    # tracing

    def _record(self, link: int, direction: str, frame: WireFrame, action: str) -> None:
        if self.scenario.trace:
            kind, pkt, seq = _describe(frame.payload)
            self.trace.append(f"{self.sim.now}\t{link}\t{direction}\t{kind}\t{pkt}\t{seq}\t{action}")

    def _dropped(self, link: int, direction: str):
        def on_drop(frame: WireFrame) -> None:
            self._record(link, direction, frame, "dropped")

        return on_drop

    # frame delivery

    def _deliver_to_daq(self, i: int):
        def deliver(frame: WireFrame) -> None:
            self._record(i, TO_DAQ, frame, "delivered")
            events = self.receiver.handle_frame(frame.raw, self.sim.now, interface=i)
            self._handle_events(events)
            self._pump_daq(i)
            self._arm_rx_timer()

        return deliver

    def _deliver_to_feb(self, i: int):
        def deliver(frame: WireFrame) -> None:
            self._record(i, TO_FEB, frame, "delivered")
            self.senders[i].receive(frame.raw, self.sim.now)
            self._feed(i)
            self._pump_feb(i)

        return deliver

    # transmit pumps

    def _wake(self, port: _Port, at: int, pump: Callable[[], None]) -> None:
        if port.wake_at is not None and port.wake_at <= at:
            return
        port.wake_at = at

        def fire(event: SimEvent) -> None:
            if port.wake_at == event.time:
                port.wake_at = None
            pump()

        self.sim.schedule(at, "timer", fire)

    def _pump_feb(self, i: int) -> None:
        port = self.feb_ports[i]
        now = self.sim.now
        if now < port.busy_until:
            self._wake(port, port.busy_until, lambda: self._pump_feb(i))
            return
        sender = self.senders[i]
        frame = sender.poll_output(now)
        if frame is None:
            at = sender.next_wakeup(now)
            if at is not None:
                self._wake(port, max(at, now + 1), lambda: self._pump_feb(i))
            return
        self._record(i, TO_DAQ, frame, sender.last_action)
        done = now + self.down[i].serialization_time(len(frame.raw))
        port.busy_until = done
        self.down[i].send(frame, now)
        is_data = isinstance(frame.payload, (DataPacket, LastDataPacket))

        def finished(event: SimEvent) -> None:
            if is_data:
                sender.transmit_done(event.time)
            self._pump_feb(i)

        self.sim.schedule(done, "timer", finished)

    def _pump_daq(self, i: int) -> None:
        port = self.daq_ports[i]
        now = self.sim.now
        if now < port.busy_until:
            self._wake(port, port.busy_until, lambda: self._pump_daq(i))
            return
        frame = self.receiver.poll_outgoing(self.handles[i], now)
        if frame is None:
            frame = self.receiver.poll_outgoing(None, now, interface=i)
        if frame is None:
            return
        self._record(i, TO_FEB, frame, self.receiver.last_action)
        done = now + self.up[i].serialization_time(len(frame.raw))
        port.busy_until = done
        self.up[i].send(frame, now)
        self.sim.schedule(done, "timer", lambda event: self._pump_daq(i))

    def _arm_rx_timer(self) -> None:
        at = self.receiver.next_deadline()
        if at is None or (self._rx_timer is not None and self._rx_timer <= at):
            return
        self._rx_timer = at

        def fire(event: SimEvent) -> None:
            if self._rx_timer == event.time:
                self._rx_timer = None
            self._handle_events(self.receiver.tick(self.sim.now))
            for i in range(len(self.senders)):
                self._pump_daq(i)
            self._arm_rx_timer()

        self.sim.schedule(at, "timer", fire)

    # source

    def _feed(self, i: int) -> None:
        state = self.sources[i]
        sender = self.senders[i]
        if state.done or not sender.started:
            return
        model = state.model
        now = self.sim.now
        if state.started_at is None:
            state.started_at = now
            if model.rate is not None:
                self._schedule_source_step(i)
        remaining = model.total_words - state.offered
        limit = remaining if model.rate is None else min(remaining, state.budget)
        count = min(limit, sender.writable_words())
        if count:
            words = model.pattern.words(state.offered, count)
            taken = sender.offer_words(words)
            state.offered += taken
            state.budget -= taken
            self._pump_feb(i)
        if state.offered == model.total_words:
            state.done = True
            if model.stop == "local":
                sender.stop()
                self._pump_feb(i)
            else:
                self.cmd_queues[i].append(("stop",))
                self._issue_commands(i)

    def _schedule_source_step(self, i: int) -> None:
        rate = self.sources[i].model.rate
        interval = max(1, int(round(PACKET_WORDS / rate)))

        def step(event: SimEvent) -> None:
            state = self.sources[i]
            if state.done:
                return
            state.budget += PACKET_WORDS
            self._feed(i)
            if not state.done:
                self.sim.schedule(self.sim.now + interval, "source_step", step)

        self.sim.schedule(self.sim.now + interval, "source_step", step)

    # consumer

    def _consume(self, i: int) -> None:
        model = self.scenario.consumer
        handle = self.handles[i]
        available = self.receiver.read_pointers(handle).available
        if model.rate is None:
            while available:
                self._take(i, available)
                available = self.receiver.read_pointers(handle).available
            return
        state = self.consumers[i]
        if state.busy or not available:
            return
        state.busy = True
        nbytes = min(available, model.chunk)
        duration = max(1, int(round(nbytes / model.rate)))

        def done(event: SimEvent) -> None:
            self._take(i, nbytes)
            state.busy = False
            self._consume(i)

        self.sim.schedule(self.sim.now + duration, "consumer_step", done)

    def _take(self, i: int, nbytes: int) -> None:
        handle = self.handles[i]
        if self.scenario.consumer.verify:
            self.verifiers[i].feed(self.receiver.peek(handle, nbytes))
        self.receiver.consume(handle, nbytes)
        self.delivered[i] += nbytes

    # commands

    def _schedule_commands(self) -> None:
        for spec in self.scenario.commands:
            def enqueue(event: SimEvent, spec=spec) -> None:
                self.cmd_queues[spec.slave].append(("user", spec))
                self._pending_scripted -= 1
                self._issue_commands(spec.slave)

            self.sim.schedule(spec.at_time, "timer", enqueue)
        stream = self.scenario.command_stream
        if stream is not None and stream.count:
            self.sim.schedule(stream.start_time, "timer", lambda event: self._issue_commands(stream.slave))

    def _issue_commands(self, i: int) -> None:
        handle = self.handles[i]
        ctx = self.receiver.context(handle)
        if ctx.pending_command is not None:
            return
        now = self.sim.now
        queue = self.cmd_queues[i]
        stream = self.scenario.command_stream
        if queue:
            item = queue.popleft()
            if item[0] == "start":
                self.receiver.start(handle, now)
            elif item[0] == "stop":
                self.receiver.stop(handle, now)
            else:
                spec = item[1]
                self.receiver.send_user_command(handle, spec.code, spec.argument, spec.retries, spec.timeout, now)
        elif (
            stream is not None
            and stream.slave == i
            and self.stream_issued < stream.count
            and now >= stream.start_time
        ):
            self.receiver.send_user_command(
                handle, stream.code, self.stream_issued, stream.retries, stream.timeout, now
            )
            self.stream_issued += 1
        else:
            return
        self._pump_daq(i)
        self._arm_rx_timer()

    def _handle_events(self, events: Iterable) -> None:
        for event in events:
            i = self.handles.index(event.slave)
            if event.kind is EventKind.DATA_AVAILABLE:
                self._consume(i)
            elif event.kind in (EventKind.COMMAND_COMPLETE, EventKind.COMMAND_TIMEOUT):
                self.command_results.append(event)
                self._issue_commands(i)

    # driver

    def _finished(self) -> bool:
        if self._pending_scripted:
            return False
        stream = self.scenario.command_stream
        if stream is not None and self.stream_issued < stream.count:
            return False
        for i, handle in enumerate(self.handles):
            ctx = self.receiver.context(handle)
            if not self.sources[i].done or not ctx.end_of_transmission:
                return False
            if ctx.buffer.available or ctx.pending_command is not None or self.cmd_queues[i]:
                return False
        return True

    def run(self) -> ScenarioResult:
        for i in range(len(self.senders)):
            self.cmd_queues[i].append(("start",))
            self.sim.schedule(0, "timer", lambda event, i=i: self._issue_commands(i))
        self._schedule_commands()
        limit = self.scenario.time_limit
        while not self._finished():
            if self.sim.step() is None:
                raise ScenarioDeadlock(f"{self.scenario.name}: no pending events at t={self.sim.now}")
            if limit is not None and self.sim.now > limit:
                raise ScenarioTimeout(f"{self.scenario.name}: time limit {limit} exceeded")
        finished_at = self.sim.now
        # let frames already on the wire land so the channel counts balance
        while any(ch.in_flight for ch in (*self.down, *self.up)):
            self.sim.step()
        return ScenarioResult(
            self._collect(finished_at), self.trace, self.senders, self.receiver, self.verifiers, self.command_results
        )

    def _collect(self, finished_at: int) -> ScenarioStats:
        s = ScenarioStats()
        for sender in self.senders:
            c = sender.counters
            s.data_frames_sent += c.data_frames_sent
            s.retransmissions += c.retransmissions
            s.early_retransmissions += c.early_retransmissions
            s.spurious_retransmissions += c.spurious_retransmissions
            s.response_packets_sent += c.response_packets_sent
            s.protocol_errors += c.protocol_errors
            s.commands_executed += c.commands_executed
            s.max_in_flight = max(s.max_in_flight, c.max_in_flight)
        r = self.receiver.counters
        s.acks_sent = r.acks_sent
        s.reacks = r.reacks
        s.protocol_errors += r.protocol_errors
        s.commands_completed = r.commands_completed
        s.command_retries = r.command_retries
        s.command_timeouts = r.command_timeouts
        s.packets_dropped_no_space = r.dropped_no_space
        s.end_of_transmission_events = r.end_of_transmission_events
        for ch in self.down:
            s.frames_sent_to_daq += ch.sent
            s.frames_dropped_to_daq += ch.dropped
            s.frames_delivered_to_daq += ch.delivered
        for ch in self.up:
            s.frames_sent_to_feb += ch.sent
            s.frames_dropped_to_feb += ch.dropped
            s.frames_delivered_to_feb += ch.delivered
        s.max_receiver_window_offset = max(self.receiver.context(h).max_window_offset for h in self.handles)
        s.bytes_offered = sum(src.offered for src in self.sources) * WORD_BYTES
        s.bytes_delivered_to_consumer = sum(self.delivered)
        if self.scenario.consumer.verify:
            s.stream_intact = all(v.complete for v in self.verifiers)
        else:
            s.stream_intact = s.bytes_delivered_to_consumer == s.bytes_offered
        s.simulated_duration = finished_at
        s.goodput_fraction = goodput_fraction(s)
        s.command_rate = command_rate(s, self.scenario.channel.line_rate)
        s.final_delay = max(sender.current_delay for sender in self.senders)
        return s


def run_scenario(scenario: Scenario) -> ScenarioResult:
    return ScenarioRunner(scenario).run()

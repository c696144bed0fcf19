"""Ready-made scenarios used by the CLI, the acceptance suite and the tests."""

from __future__ import annotations

from typing import Optional

from .frame import ACK_BYTES, DATA_FRAME_BYTES, MIN_FRAME_BYTES, PACKET_WORDS, encoded_length
from .netsim import (
    TO_DAQ,
    TO_FEB,
    ChannelConfig,
    CommandStream,
    ConsumerModel,
    DataPattern,
    Scenario,
    SourceModel,
)
from .receiver import ReceiverConfig
from .sender import SenderConfig

# Early-retransmission walkthrough timing: one data frame occupies T byte-times and the
# round trip (data propagation, ack serialization, ack propagation) is 2.5 T,
# so the ack of the frame sent in slot k arrives halfway through slot k + 3.
FRAMING_OVERHEAD = 20
DATA_SLOT = DATA_FRAME_BYTES + FRAMING_OVERHEAD
ACK_SLOT = encoded_length(ACK_BYTES) + FRAMING_OVERHEAD
FIG4_LATENCY = (5 * DATA_SLOT // 2 - ACK_SLOT) // 2
FIG4_PACKETS = 12
FIG4_LOST_DATA_PACKET = 2
FIG4_LOST_ACK_PACKET = 4

assert encoded_length(ACK_BYTES) == MIN_FRAME_BYTES


def lossless(packets: int = 1000, latency: int = 0, framing_overhead: int = FRAMING_OVERHEAD, **kwargs) -> Scenario:
    return Scenario(
        channel=ChannelConfig(latency=latency, framing_overhead=framing_overhead),
        source=SourceModel.packets(packets),
        name="lossless",
        **kwargs,
    )


def lossy(
    loss: float,
    packets: int = 10_000,
    seed: int = 42,
    latency: int = 1000,
    pattern: Optional[DataPattern] = None,
    **kwargs,
) -> Scenario:
    return Scenario(
        channel=ChannelConfig(loss_probability=loss, latency=latency, seed=seed),
        source=SourceModel.packets(packets, pattern=pattern or DataPattern()),
        name=f"lossy-{loss:g}",
        **kwargs,
    )


def fig4(suppression: bool = True, trace: bool = True) -> Scenario:
    """Scripted drop of packet 2's data frame and of packet 4's ack.

    Frame ordinals count from 0 per direction. Toward the FEB the START
    command takes ordinal 0 and the lost packet 2 never gets an ack, so the
    ack of packet 4 is ordinal 4.
    """
    sender = SenderConfig(n_fpga=4, seq_suppression=suppression)
    return Scenario(
        senders=[sender],
        receiver=ReceiverConfig(n_cpu=6),
        channel=ChannelConfig(
            latency=FIG4_LATENCY,
            framing_overhead=FRAMING_OVERHEAD,
            scripted_losses=[(TO_DAQ, FIG4_LOST_DATA_PACKET), (TO_FEB, FIG4_LOST_ACK_PACKET)],
        ),
        # the last packet carries half a packet of words
        source=SourceModel(total_words=(FIG4_PACKETS - 1) * PACKET_WORDS + PACKET_WORDS // 2),
        trace=trace,
        name="fig4b" if suppression else "fig4a",
    )


def commands_under_load(
    count: int,
    loss: float = 0.0,
    packets: int = 10_000,
    seed: int = 42,
    latency: int = 1000,
    retries: int = 5,
    timeout: Optional[int] = None,
) -> Scenario:
    """A data stream with ``count`` back-to-back user commands on top."""
    if timeout is None:
        timeout = 4 * DATA_SLOT + 2 * latency
    return Scenario(
        channel=ChannelConfig(loss_probability=loss, latency=latency, seed=seed),
        source=SourceModel.packets(packets),
        command_stream=CommandStream(count=count, retries=retries, timeout=timeout),
        name=f"commands-{count}",
    )


def slow_consumer(
    packets: int = 20_000,
    rate: float = 0.5,
    n_cpu: int = 6,
    adapt_window: int = 512,
    delay_step: int = 256,
    seed: int = 42,
    latency: int = 1000,
) -> Scenario:
    """Consumer draining at ``rate`` bytes per byte-time behind a small buffer."""
    return Scenario(
        senders=[SenderConfig(n_fpga=4, adapt_window=adapt_window, delay_step=delay_step)],
        receiver=ReceiverConfig(n_cpu=n_cpu),
        channel=ChannelConfig(latency=latency, seed=seed),
        source=SourceModel.packets(packets),
        consumer=ConsumerModel(rate=rate),
        name=f"slow-consumer-{rate:g}",
    )

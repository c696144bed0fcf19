"""FADE-10G: a reliable transport for streaming detector data over raw Ethernet frames.

The package holds a bit-exact frame codec, behavioral models of the FPGA
sender core and of the computer-side receiver, a deterministic network
simulator to connect them, and a command-line front end.
"""

from .frame import (
    Ack,
    CommandRequest,
    CommandResponseField,
    CommandResponsePacket,
    DataPacket,
    FrameHeader,
    LastDataPacket,
    MacAddress,
    Order,
    WireFrame,
    build_frame,
    compute_fcs,
    decode_frame,
    encode_frame,
    packet_newer,
    seq_newer,
)
from .netsim import ChannelConfig, ConsumerModel, DataPattern, Scenario, SourceModel, run_scenario
from .receiver import ReceiverConfig, ReceiverCore
from .sender import SenderConfig, SenderCore
from .stats import ScenarioStats, command_rate, goodput_fraction

__version__ = "0.1.0"

__all__ = [
    "Ack",
    "ChannelConfig",
    "CommandRequest",
    "CommandResponseField",
    "CommandResponsePacket",
    "ConsumerModel",
    "DataPacket",
    "DataPattern",
    "FrameHeader",
    "LastDataPacket",
    "MacAddress",
    "Order",
    "ReceiverConfig",
    "ReceiverCore",
    "Scenario",
    "ScenarioStats",
    "SenderConfig",
    "SenderCore",
    "SourceModel",
    "WireFrame",
    "build_frame",
    "command_rate",
    "compute_fcs",
    "decode_frame",
    "encode_frame",
    "goodput_fraction",
    "packet_newer",
    "run_scenario",
    "seq_newer",
]

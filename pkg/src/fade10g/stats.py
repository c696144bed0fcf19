"""Scenario counters and the derived efficiency figures."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from typing import Optional


@dataclass
class ScenarioStats:
    data_frames_sent: int = 0
    retransmissions: int = 0
    early_retransmissions: int = 0
    spurious_retransmissions: int = 0
    response_packets_sent: int = 0
    acks_sent: int = 0
    reacks: int = 0
    protocol_errors: int = 0
    commands_executed: int = 0
    commands_completed: int = 0
    command_retries: int = 0
    command_timeouts: int = 0
    packets_dropped_no_space: int = 0
    frames_sent_to_daq: int = 0
    frames_dropped_to_daq: int = 0
    frames_delivered_to_daq: int = 0
    frames_sent_to_feb: int = 0
    frames_dropped_to_feb: int = 0
    frames_delivered_to_feb: int = 0
    end_of_transmission_events: int = 0
    bytes_offered: int = 0
    bytes_delivered_to_consumer: int = 0
    stream_intact: bool = True
    max_in_flight: int = 0
    max_receiver_window_offset: int = -1
    simulated_duration: int = 0
    goodput_fraction: float = 0.0
    command_rate: Optional[float] = None
    final_delay: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_text(self) -> str:
        width = max(len(f.name) for f in fields(self))
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, float):
                value = f"{value:.6f}"
            elif value is None:
                value = "-"
            lines.append(f"{f.name:<{width}}  {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioStats":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown stats fields: {sorted(unknown)}")
        return cls(**data)


def goodput_fraction(stats: ScenarioStats, bytes_per_tick: float = 1.0) -> float:
    """Delivered payload bytes per byte the link could have carried.

    Time is counted in byte-times, so a link moves one byte per tick unless
    told otherwise.
    """
    if stats.simulated_duration <= 0:
        return 0.0
    return stats.bytes_delivered_to_consumer / (bytes_per_tick * stats.simulated_duration)


def command_rate(stats: ScenarioStats, line_rate_bps: float = 10e9) -> Optional[float]:
    """User commands executed per simulated second, or None for an empty run."""
    if stats.simulated_duration <= 0:
        return None
    seconds = stats.simulated_duration * 8 / line_rate_bps
    return stats.commands_executed / seconds

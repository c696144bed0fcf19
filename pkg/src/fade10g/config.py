"""Scenario files: TOML documents with one table per part of the simulation.

Example::

    [sender]
    n_fpga = 4

    [receiver]
    n_cpu = 6
    consumer_rate = 0.5

    [channel]
    loss_probability = 0.01
    latency = 1000
    scripted_losses = [["feb->daq", 2]]

    [source]
    total_packets = 1000

    [[commands]]
    at_time = 50000
    code = 0x0100

    [run]
    time_limit = 1_000_000_000
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Optional

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from .frame import PACKET_WORDS
from .netsim import ChannelConfig, CommandSpec, CommandStream, ConsumerModel, DataPattern, Scenario, SourceModel
from .receiver import ReceiverConfig
from .sender import SenderConfig, SenderCore


class ConfigError(ValueError):
    pass


@dataclass
class RunOptions:
    trace_path: Optional[str] = None
    json_path: Optional[str] = None
    plot_path: Optional[str] = None


SENDER_KEYS = {
    "count", "n_fpga", "hi_threshold", "lo_threshold", "adapt_window", "delay_step",
    "min_delay", "max_delay", "rescan_interval", "early_retransmit", "seq_suppression",
}
RECEIVER_KEYS = {
    "n_cpu", "window_exponent", "max_slaves", "wakeup_threshold", "control_retries", "control_timeout",
    "consumer_rate", "consumer_chunk", "verify",
}
CHANNEL_KEYS = {f.name for f in fields(ChannelConfig)}
SOURCE_KEYS = {"total_packets", "total_words", "pattern", "pattern_seed", "rate", "stop"}
COMMAND_KEYS = {f.name for f in fields(CommandSpec)}
STREAM_KEYS = {f.name for f in fields(CommandStream)}
RUN_KEYS = {"name", "time_limit", "trace", "trace_path", "json_path", "plot_path"}
SECTIONS = {
    "sender": SENDER_KEYS,
    "receiver": RECEIVER_KEYS,
    "channel": CHANNEL_KEYS,
    "source": SOURCE_KEYS,
    "commands": COMMAND_KEYS,
    "command_stream": STREAM_KEYS,
    "run": RUN_KEYS,
}


def _table(doc: dict, name: str) -> dict:
    value = doc.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"[{name}] must be a table")
    _check_keys(name, value, SECTIONS[name])
    return value


def _check_keys(where: str, table: dict, allowed: set) -> None:
    for key in table:
        if key not in allowed:
            raise ConfigError(f"{where}.{key}: unknown key")


def _build(where: str, factory, **kwargs) -> Any:
    try:
        return factory(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}] {exc}") from None


def _pick(table: dict, *keys: str) -> dict:
    return {k: table[k] for k in keys if k in table}


def parse_scenario(doc: dict) -> tuple[Scenario, RunOptions]:
    for name in doc:
        if name not in SECTIONS:
            raise ConfigError(f"[{name}]: unknown section")

    sender = _table(doc, "sender")
    count = sender.get("count", 1)
    if not isinstance(count, int) or count < 1:
        raise ConfigError("sender.count: must be a positive integer")
    tuning = {k: v for k, v in sender.items() if k != "count"}
    # the runner gives each FEB its own MAC address
    senders = [_build("sender", SenderConfig, **tuning) for _ in range(count)]
    _build("sender", SenderCore, config=senders[0])

    receiver = _table(doc, "receiver")
    receiver_cfg = _build(
        "receiver",
        ReceiverConfig,
        **_pick(receiver, "n_cpu", "window_exponent", "max_slaves", "wakeup_threshold", "control_retries", "control_timeout"),
    )
    consumer = _build(
        "receiver",
        ConsumerModel,
        rate=receiver.get("consumer_rate"),
        chunk=receiver.get("consumer_chunk", ConsumerModel.chunk),
        verify=receiver.get("verify", True),
        wakeup_threshold=receiver.get("wakeup_threshold", 0),
    )

    channel = _table(doc, "channel")
    channel_cfg = _build("channel", ChannelConfig, **channel)

    source = _table(doc, "source")
    if ("total_packets" in source) == ("total_words" in source):
        raise ConfigError("[source] exactly one of total_packets or total_words is required")
    words = source["total_words"] if "total_words" in source else source["total_packets"] * PACKET_WORDS
    pattern = _build("source", DataPattern, kind=source.get("pattern", "counter"), seed=source.get("pattern_seed", 0))
    source_model = _build(
        "source", SourceModel, total_words=words, pattern=pattern, **_pick(source, "rate", "stop")
    )

    raw_commands = doc.get("commands", [])
    if not isinstance(raw_commands, list):
        raise ConfigError("[[commands]] must be an array of tables")
    commands = []
    for i, entry in enumerate(raw_commands):
        _check_keys(f"commands[{i}]", entry, COMMAND_KEYS)
        commands.append(_build(f"commands[{i}]", CommandSpec, **entry))

    stream = None
    if "command_stream" in doc:
        stream = _build("command_stream", CommandStream, **_table(doc, "command_stream"))

    run = _table(doc, "run")
    scenario = Scenario(
        senders=senders,
        receiver=receiver_cfg,
        channel=channel_cfg,
        source=source_model,
        consumer=consumer,
        commands=commands,
        command_stream=stream,
        time_limit=run.get("time_limit"),
        trace=bool(run.get("trace", False) or run.get("trace_path")),
        name=run.get("name", "scenario"),
    )
    options = RunOptions(run.get("trace_path"), run.get("json_path"), run.get("plot_path"))
    return scenario, options


def load_scenario(path: str | Path) -> tuple[Scenario, RunOptions]:
    """Read and validate a scenario file; raises OSError or ConfigError."""
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    try:
        return parse_scenario(doc)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None

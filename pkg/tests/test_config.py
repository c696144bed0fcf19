import pytest

from fade10g.config import ConfigError, load_scenario, parse_scenario
from fade10g.frame import PACKET_WORDS
from fade10g.netsim import TO_DAQ

MINIMAL = {"source": {"total_packets": 3}}


def test_defaults():
    scenario, options = parse_scenario(MINIMAL)
    assert len(scenario.senders) == 1
    assert scenario.source.total_words == 3 * PACKET_WORDS
    assert scenario.consumer.rate is None
    assert options.trace_path is None and not scenario.trace


def test_full_document():
    scenario, options = parse_scenario(
        {
            "sender": {"count": 3, "n_fpga": 5, "seq_suppression": False},
            "receiver": {"n_cpu": 7, "consumer_rate": 0.5, "wakeup_threshold": 16384},
            "channel": {"loss_probability": 0.01, "scripted_losses": [[TO_DAQ, 2]]},
            "source": {"total_words": 100, "pattern": "prng", "pattern_seed": 4, "stop": "command"},
            "commands": [{"at_time": 10, "code": 0x100}],
            "command_stream": {"count": 5},
            "run": {"name": "full", "trace_path": "out.trace", "time_limit": 10**9},
        }
    )
    assert [s.n_fpga for s in scenario.senders] == [5, 5, 5]
    assert not scenario.senders[0].seq_suppression
    assert scenario.receiver.n_cpu == 7
    assert scenario.consumer.wakeup_threshold == 16384
    assert scenario.channel.scripted_losses == [(TO_DAQ, 2)]
    assert scenario.source.pattern.kind == "prng" and scenario.source.stop == "command"
    assert scenario.commands[0].code == 0x100 and scenario.command_stream.count == 5
    assert scenario.trace and options.trace_path == "out.trace" and scenario.name == "full"


@pytest.mark.parametrize(
    "doc, message",
    [
        ({"source": {"total_packets": 1}, "extra": {}}, "unknown section"),
        ({"source": {"total_packets": 1, "colour": 1}}, "source.colour: unknown key"),
        ({"source": {}}, "exactly one of"),
        ({"source": {"total_packets": 1, "total_words": 1}}, "exactly one of"),
        ({"source": {"total_packets": 1}, "sender": {"count": 0}}, "sender.count"),
        ({"source": {"total_packets": 1}, "sender": {"n_fpga": 40}}, "[sender]"),
        ({"source": {"total_packets": 1}, "channel": {"loss_probability": 2}}, "[channel]"),
        ({"source": {"total_packets": 1}, "commands": [{"at_time": 0, "code": 3}]}, "commands[0]"),
        ({"source": {"total_packets": 1, "pattern": "noise"}}, "[source]"),
    ],
)
def test_rejects_bad_documents(doc, message):
    with pytest.raises(ConfigError, match=message.replace("[", r"\[").replace("]", r"\]")):
        parse_scenario(doc)


def test_load_reports_path(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("[source\n")
    with pytest.raises(ConfigError, match="bad.toml"):
        load_scenario(bad)
    with pytest.raises(FileNotFoundError):
        load_scenario(tmp_path / "missing.toml")


@pytest.mark.parametrize("name", ["lossless", "lossy", "slow_consumer", "commands"])
def test_sample_scenarios_parse(name, scenarios_dir):
    scenario, _ = load_scenario(scenarios_dir / f"{name}.toml")
    assert scenario.name.replace("-", "_") == name

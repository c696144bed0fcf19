import json

import pytest

from fade10g.stats import ScenarioStats, command_rate, goodput_fraction


def test_goodput_fraction():
    assert goodput_fraction(ScenarioStats()) == 0.0
    s = ScenarioStats(bytes_delivered_to_consumer=900, simulated_duration=1000)
    assert goodput_fraction(s) == pytest.approx(0.9)
    assert goodput_fraction(s, bytes_per_tick=2.0) == pytest.approx(0.45)


def test_command_rate_in_simulated_seconds():
    # 10 ms at 10 Gbit/s is 12.5 million byte-times
    s = ScenarioStats(commands_executed=100, simulated_duration=12_500_000)
    assert command_rate(s) == pytest.approx(10_000)
    assert command_rate(ScenarioStats(commands_executed=5)) is None


def test_json_round_trip():
    s = ScenarioStats(data_frames_sent=7, goodput_fraction=0.5, command_rate=None, stream_intact=False)
    data = json.loads(s.to_json())
    assert data["data_frames_sent"] == 7 and data["command_rate"] is None
    assert ScenarioStats.from_dict(data) == s
    with pytest.raises(ValueError):
        ScenarioStats.from_dict({"bogus": 1})


def test_text_lists_every_field():
    text = ScenarioStats(goodput_fraction=0.25).to_text()
    rows = dict(line.split(None, 1) for line in text.splitlines())
    assert rows["goodput_fraction"] == "0.250000"
    assert rows["command_rate"] == "-"
    assert len(rows) == len(ScenarioStats().to_dict())

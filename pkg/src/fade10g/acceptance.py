"""Protocol-level acceptance checks, shared by ``fade10g selftest`` and the test suite.

Each check runs one or more simulated scenarios and returns a
:class:`CriterionResult`. The stats JSON of every scenario a check ran is
kept in ``fingerprints`` so the determinism check can re-run it and compare.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from importlib import resources
from typing import Callable, Optional

import numpy as np

from .frame import DATA_FRAME_BYTES, PACKET_BYTES, Order, modular_order, packet_newer, seq_newer
from .netsim import (
    ChannelConfig,
    ConsumerModel,
    DataPattern,
    Scenario,
    ScenarioResult,
    SourceModel,
    run_scenario,
)
from .receiver import ReceiverConfig
from .scenarios import (
    FIG4_LOST_ACK_PACKET,
    FIG4_LOST_DATA_PACKET,
    commands_under_load,
    fig4,
    lossless,
    lossy,
    slow_consumer,
)
from .sender import SenderConfig

LOSS_RATES = (0.0, 0.01, 0.05, 0.10)
SEED = 42
GOLDEN = {"fig4a": "fig4a.trace", "fig4b": "fig4b.trace"}


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    fingerprints: list = field(default_factory=list, repr=False)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.number}. {self.name}: {self.detail} ({self.seconds:.1f}s)"


def golden_trace(name: str) -> str:
    return resources.files("fade10g").joinpath("golden").joinpath(GOLDEN[name]).read_text()


def _run(scenario: Scenario, prints: list) -> ScenarioResult:
    result = run_scenario(scenario)
    prints.append(result.stats.to_json())
    return result


def reliability(packets: int = 10_000, seed: int = SEED) -> CriterionResult:
    prints, notes, ok = [], [], True
    for loss in LOSS_RATES:
        s = _run(lossy(loss, packets=packets, seed=seed), prints).stats
        good = (
            s.stream_intact
            and s.end_of_transmission_events == 1
            and s.bytes_delivered_to_consumer == packets * PACKET_BYTES
            and (loss == 0 or s.retransmissions > 0)
        )
        ok &= good
        notes.append(f"loss={loss:g} intact={s.stream_intact} eot={s.end_of_transmission_events} retx={s.retransmissions}")
    return CriterionResult(1, "reliability", ok, "; ".join(notes), fingerprints=prints)


def _emissions(result: ScenarioResult) -> list[tuple[int, int, str]]:
    """(packet, seq, action) of every data frame the FEB emitted."""
    rows = []
    for line in result.trace:
        _, _, direction, kind, pkt, seq, action = line.split("\t")
        if direction == "feb->daq" and kind in ("data", "last") and action not in ("dropped", "delivered"):
            rows.append((int(pkt), int(seq), action))
    return rows


def fig4_reproduction() -> CriterionResult:
    prints, notes, ok = [], [], True
    for suppression, name in ((True, "fig4b"), (False, "fig4a")):
        result = _run(fig4(suppression), prints)
        retx = [(p, q) for p, q, a in _emissions(result) if a != "sent"]
        count = {p: sum(1 for x, _ in retx if x == p) for p in (FIG4_LOST_DATA_PACKET, FIG4_LOST_ACK_PACKET)}
        matches = result.trace_text() == golden_trace(name)
        if suppression:
            good = (
                count[FIG4_LOST_DATA_PACKET] == 1
                and count[FIG4_LOST_ACK_PACKET] == 1
                and len(retx) == 2
                and result.stats.spurious_retransmissions == 0
            )
        else:
            good = count[FIG4_LOST_DATA_PACKET] == 2 and result.stats.spurious_retransmissions > 0
        ok &= good and matches and result.stats.stream_intact
        notes.append(
            f"{name}: pkt2 x{count[FIG4_LOST_DATA_PACKET]} pkt4 x{count[FIG4_LOST_ACK_PACKET]} "
            f"spurious={result.stats.spurious_retransmissions} golden={'match' if matches else 'DIFF'}"
        )
    return CriterionResult(2, "fig4 schedule", ok, "; ".join(notes), fingerprints=prints)


def efficiency(packets: int = 10_000, tolerance: float = 0.002) -> CriterionResult:
    prints, notes, ok = [], [], True
    for overhead in (20, 0):
        target = PACKET_BYTES / (DATA_FRAME_BYTES + overhead)
        s = _run(lossless(packets, latency=0, framing_overhead=overhead), prints).stats
        good = abs(s.goodput_fraction - target) <= tolerance and s.retransmissions == 0
        ok &= good
        notes.append(f"overhead={overhead} goodput={s.goodput_fraction:.5f} target={target:.5f}")
    return CriterionResult(3, "efficiency bound", ok, "; ".join(notes), fingerprints=prints)


def exactly_once(count: int = 1000, loss: float = 0.10, seed: int = SEED) -> CriterionResult:
    prints = []
    result = _run(commands_under_load(count, loss=loss, seed=seed, retries=5), prints)
    s = result.stats
    ok = s.command_timeouts == 0 and s.commands_executed == count and s.stream_intact
    detail = (
        f"executed={s.commands_executed}/{count} timeouts={s.command_timeouts} "
        f"retries={s.command_retries} duplicates={result.senders[0].counters.duplicate_commands}"
    )
    return CriterionResult(4, "exactly-once commands", ok, detail, fingerprints=prints)


def coexistence(count: int = 1000, packets: int = 10_000, limit: float = 0.01) -> CriterionResult:
    prints = []
    base = _run(commands_under_load(0, packets=packets), prints).stats
    loaded = _run(commands_under_load(count, packets=packets), prints).stats
    change = abs(loaded.goodput_fraction - base.goodput_fraction) / base.goodput_fraction
    ok = change < limit and loaded.commands_executed == count and loaded.stream_intact
    detail = (
        f"goodput {base.goodput_fraction:.5f} -> {loaded.goodput_fraction:.5f} ({100 * change:.3f}%), "
        f"{loaded.command_rate:.0f} commands/s"
    )
    return CriterionResult(5, "command/data coexistence", ok, detail, fingerprints=prints)


def congestion_backoff(tail_windows: int = 8) -> CriterionResult:
    prints = []
    scenario = slow_consumer()
    result = _run(scenario, prints)
    adapter = result.senders[0].adapter
    ratios = [r for r, _ in adapter.history]
    tail = ratios[-tail_windows:]
    tail_ratio = sum(tail) / len(tail) if tail else 1.0
    peak = max((d for _, d in adapter.history), default=0)
    s = result.stats
    ok = peak > adapter.min_delay and tail_ratio < adapter.hi_threshold and s.stream_intact
    detail = (
        f"delay rose to {peak} (final {s.final_delay}), ratio over last {len(tail)} windows "
        f"{tail_ratio:.4f} < {adapter.hi_threshold}, goodput {s.goodput_fraction:.4f}"
    )
    return CriterionResult(6, "congestion back-off", ok, detail, fingerprints=prints)


def _formula_newer(a: int, b: int, bits: int) -> Optional[bool]:
    """Reference comparator: a > b iff (a - b) mod 2**bits <= 2**(bits-1); None when equal."""
    if a == b:
        return None
    return (a - b) % (1 << bits) <= 1 << (bits - 1)


def comparator_oracle(bits: int = 8) -> CriterionResult:
    expect_map = {None: Order.EQUAL, True: Order.NEWER, False: Order.OLDER}
    mismatches = 0
    n = 1 << bits
    for a in range(n):
        for b in range(n):
            want = expect_map[_formula_newer(a, b, bits)]
            got = (
                modular_order(a, b, n),
                packet_newer(a << (32 - bits), b << (32 - bits)),
                seq_newer(a << (16 - bits), b << (16 - bits)),
            )
            mismatches += sum(g is not want for g in got)
    detail = f"{n * n} ordered pairs, {mismatches} mismatches (modular_order, packet_newer, seq_newer)"
    return CriterionResult(7, "comparator oracle", mismatches == 0, detail)


def random_schedule(rng: np.random.Generator, exponents=(2, 4, 6)) -> Scenario:
    n_fpga = int(rng.choice(exponents))
    n_cpu = int(rng.choice(exponents))
    return Scenario(
        senders=[SenderConfig(n_fpga=n_fpga, rescan_interval=int(rng.integers(1, 4)) << 15)],
        receiver=ReceiverConfig(n_cpu=n_cpu),
        channel=ChannelConfig(
            loss_probability=float(rng.uniform(0, 0.3)),
            reorder_probability=float(rng.uniform(0, 0.3)),
            latency=int(rng.integers(0, 20_000)),
            jitter=int(rng.integers(0, 5_000)),
            seed=int(rng.integers(0, 1 << 63)),
        ),
        source=SourceModel(total_words=int(rng.integers(0, 40 * 1024)), pattern=DataPattern("prng", int(rng.integers(0, 1 << 32)))),
        consumer=ConsumerModel(rate=None if rng.random() < 0.5 else float(rng.uniform(0.1, 2.0))),
        name="window-safety",
    )


def window_safety(count: int = 1000, seed: int = SEED) -> CriterionResult:
    rng = np.random.default_rng(seed)
    prints, failures = [], []
    worst_flight = worst_offset = 0.0
    for i in range(count):
        scenario = random_schedule(rng)
        n_fpga = scenario.senders[0].n_fpga
        n_cpu = scenario.receiver.n_cpu
        s = _run(scenario, prints).stats
        worst_flight = max(worst_flight, s.max_in_flight / (1 << n_fpga))
        worst_offset = max(worst_offset, (s.max_receiver_window_offset + 1) / (1 << n_cpu))
        if s.max_in_flight > 1 << n_fpga or s.max_receiver_window_offset >= 1 << n_cpu:
            failures.append(f"#{i} window exceeded")
        elif not s.stream_intact or s.protocol_errors:
            failures.append(f"#{i} intact={s.stream_intact} protocol_errors={s.protocol_errors}")
    for n_fpga in (16, 32):
        scenario = Scenario(
            senders=[SenderConfig(n_fpga=n_fpga)],
            channel=ChannelConfig(loss_probability=0.05, latency=1000, seed=seed),
            source=SourceModel.packets(200),
        )
        s = _run(scenario, prints).stats
        if not s.stream_intact or s.max_in_flight > 1 << n_fpga:
            failures.append(f"n_fpga={n_fpga} smoke run failed")
    detail = (
        f"{count} random schedules + n_fpga 16/32 smoke; peak sender occupancy {worst_flight:.2f} of window, "
        f"peak receiver offset {worst_offset:.2f} of window"
    )
    if failures:
        detail += "; failures: " + ", ".join(failures[:5])
    return CriterionResult(8, "window safety", not failures, detail, fingerprints=prints)


CRITERIA: dict[int, Callable[[], CriterionResult]] = {
    1: reliability,
    2: fig4_reproduction,
    3: efficiency,
    4: exactly_once,
    5: coexistence,
    6: congestion_backoff,
    7: comparator_oracle,
    8: window_safety,
}


def determinism(first: dict[int, CriterionResult]) -> CriterionResult:
    differing = []
    for number, check in CRITERIA.items():
        again = _timed(check)
        if again.fingerprints != first[number].fingerprints or again.passed != first[number].passed:
            differing.append(str(number))
    scenarios = sum(len(r.fingerprints) for r in first.values())
    detail = f"re-ran criteria 1-8 ({scenarios} scenarios): " + (
        "stats JSON identical" if not differing else "differs for " + ", ".join(differing)
    )
    return CriterionResult(9, "determinism", not differing, detail)


def _timed(check: Callable[[], CriterionResult]) -> CriterionResult:
    started = time.perf_counter()
    result = check()
    result.seconds = time.perf_counter() - started
    return result


def run_all(
    only: Optional[list[int]] = None, report: Optional[Callable[[CriterionResult], None]] = None
) -> list[CriterionResult]:
    """Run the selected criteria (all by default); criterion 9 re-runs 1-8."""
    wanted = sorted(only) if only else [*CRITERIA, 9]
    results: dict[int, CriterionResult] = {}
    for number in wanted:
        if number == 9:
            base = {n: results.get(n) or _timed(CRITERIA[n]) for n in CRITERIA}
            result = _timed(lambda: determinism(base))
        else:
            result = _timed(CRITERIA[number])
        results[number] = result
        if report:
            report(result)
    return [results[n] for n in wanted]

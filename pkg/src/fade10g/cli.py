"""Command-line front end: ``fade10g run|fig4|sweep|selftest``.

Exit status is 0 on success, 1 when a scenario fails (protocol error,
deadlock, time limit or corrupted stream) and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .config import ConfigError, load_scenario
from .netsim import ScenarioError, ScenarioResult, run_scenario

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

log = logging.getLogger("fade10g")


class UsageError(Exception):
    pass


def _write(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


def _failed(result: ScenarioResult) -> Optional[str]:
    s = result.stats
    if s.protocol_errors:
        return f"{s.protocol_errors} protocol error(s)"
    if not s.stream_intact:
        return "delivered stream does not match the source"
    return None


def cmd_run(args) -> int:
    try:
        scenario, options = load_scenario(args.scenario)
    except FileNotFoundError:
        raise UsageError(f"{args.scenario}: file not found") from None
    except OSError as exc:
        raise UsageError(f"{args.scenario}: {exc.strerror}") from None
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    if args.seed is not None:
        scenario.channel = replace(scenario.channel, seed=args.seed)
    trace_path = args.trace or options.trace_path
    json_path = args.json or options.json_path
    plot_path = args.plot or options.plot_path
    if trace_path:
        scenario.trace = True
    try:
        result = run_scenario(scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    if trace_path:
        _write(trace_path, result.trace_text())
    if json_path:
        _write(json_path, result.stats.to_json())
    if plot_path:
        from .plotting import plot_delay_history

        adapter = result.senders[0].adapter
        plot_delay_history(adapter.history, plot_path, adapter.hi_threshold, adapter.lo_threshold)
    if not args.quiet:
        sys.stdout.write(result.stats.to_text())
    problem = _failed(result)
    if problem:
        print(f"error: {scenario.name}: {problem}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def format_schedule(result: ScenarioResult) -> str:
    lost = set()
    rows = []
    for line in result.trace:
        time, _, direction, kind, pkt, seq, action = line.split("\t")
        if direction == "feb->daq" and kind in ("data", "last"):
            if action == "dropped":
                lost.add((pkt, seq))
            elif action != "delivered":
                rows.append((time, seq, pkt, action))
        elif direction == "daq->feb" and kind == "ack" and action == "dropped":
            rows.append((time, "-", pkt, "ack lost"))
    out = [f"{'time':>8}  {'seq':>4}  {'packet':>6}  action"]
    for time, seq, pkt, action in rows:
        note = " (lost)" if (pkt, seq) in lost else ""
        out.append(f"{time:>8}  {seq:>4}  {pkt:>6}  {action}{note}")
    return "\n".join(out) + "\n"


def cmd_fig4(args) -> int:
    from .acceptance import golden_trace
    from .scenarios import fig4

    suppression = not args.no_suppression
    scenario = fig4(suppression)
    result = run_scenario(scenario)
    if args.trace:
        _write(args.trace, result.trace_text())
    if args.plot:
        from .plotting import plot_timeline

        title = "with" if suppression else "without"
        plot_timeline(result.trace, args.plot, title=f"early retransmission {title} seq suppression")
    counts: dict[str, int] = {}
    for line in result.trace:
        _, _, direction, kind, pkt, _, action = line.split("\t")
        if direction == "feb->daq" and action in ("retransmit", "early_retransmit"):
            counts[pkt] = counts.get(pkt, 0) + 1
    if not args.quiet:
        print(f"{scenario.name}: sequence-number suppression {'on' if suppression else 'off'}")
        sys.stdout.write(format_schedule(result))
        summary = ", ".join(f"packet {p} x{n}" for p, n in sorted(counts.items(), key=lambda kv: int(kv[0])))
        print(f"retransmitted: {summary or 'nothing'}; spurious: {result.stats.spurious_retransmissions}")
    if args.check and result.trace_text() != golden_trace(scenario.name):
        print(f"error: {scenario.name} trace differs from the golden file", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def parse_range(text: str) -> list[float]:
    """``a:b:step`` with both ends included, or a single value."""
    parts = text.split(":")
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise UsageError(f"--loss {text!r}: expected a:b:step") from None
    if len(values) == 1:
        return values
    if len(values) != 3 or values[2] <= 0 or values[1] < values[0]:
        raise UsageError(f"--loss {text!r}: expected a:b:step with a <= b and step > 0")
    start, stop, step = values
    count = int(round((stop - start) / step)) + 1
    out = [round(start + i * step, 12) for i in range(count)]
    if any(not 0 <= v <= 1 for v in out):
        raise UsageError(f"--loss {text!r}: probabilities must lie within [0, 1]")
    return out


def _sweep_point(job: tuple) -> dict:
    from .scenarios import lossy

    loss, packets, seed, latency = job
    s = run_scenario(lossy(loss, packets=packets, seed=seed, latency=latency)).stats
    return {
        "loss": loss,
        "intact": s.stream_intact,
        "data_frames_sent": s.data_frames_sent,
        "retransmissions": s.retransmissions,
        "early_retransmissions": s.early_retransmissions,
        "goodput_fraction": s.goodput_fraction,
        "final_delay": s.final_delay,
    }


def cmd_sweep(args) -> int:
    losses = parse_range(args.loss)
    jobs = [(loss, args.packets, args.seed, args.latency) for loss in losses]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(job) for job in jobs]
    if not args.quiet:
        print(f"{'loss':>6}  {'intact':>6}  {'frames':>7}  {'retx':>6}  {'early':>6}  {'goodput':>8}  {'delay':>6}")
        for r in rows:
            print(
                f"{r['loss']:>6.3f}  {str(r['intact']):>6}  {r['data_frames_sent']:>7}  {r['retransmissions']:>6}  "
                f"{r['early_retransmissions']:>6}  {r['goodput_fraction']:>8.5f}  {r['final_delay']:>6}"
            )
    if args.json:
        _write(args.json, json.dumps(rows, indent=2) + "\n")
    if args.plot:
        from .plotting import plot_sweep

        plot_sweep(rows, args.plot)
    return EXIT_OK if all(r["intact"] for r in rows) else EXIT_FAILURE


def cmd_selftest(args) -> int:
    from .acceptance import run_all

    def report(result):
        if not args.quiet:
            print(result.line(), flush=True)

    results = run_all(args.criteria, report)
    if args.json:
        rows = [{"number": r.number, "name": r.name, "passed": r.passed, "detail": r.detail} for r in results]
        _write(args.json, json.dumps(rows, indent=2) + "\n")
    passed = sum(r.passed for r in results)
    if not args.quiet:
        print(f"{passed}/{len(results)} criteria passed")
    return EXIT_OK if passed == len(results) else EXIT_FAILURE


def _criteria(text: str) -> list[int]:
    try:
        numbers = [int(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError("expected a comma-separated list of criterion numbers") from None
    if not numbers or any(not 1 <= n <= 9 for n in numbers):
        raise argparse.ArgumentTypeError("criterion numbers run from 1 to 9")
    return numbers


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fade10g", description="FADE-10G protocol simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeat for debug)")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--quiet", action="store_true", help="print nothing on success")
    common.add_argument("--json", metavar="PATH", help="write results as JSON ('-' for stdout)")

    p = sub.add_parser("run", parents=[common], help="run a scenario file")
    p.add_argument("scenario", help="TOML scenario file")
    p.add_argument("--seed", type=int, help="override the channel seed")
    p.add_argument("--trace", metavar="PATH", help="write the per-frame event trace")
    p.add_argument("--plot", metavar="PATH", help="render the delay-adaptation history")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("fig4", parents=[common], help="scripted early-retransmission scenario")
    p.add_argument("--no-suppression", action="store_true", help="disable sequence-number suppression")
    p.add_argument("--trace", metavar="PATH", help="write the per-frame event trace")
    p.add_argument("--plot", metavar="PATH", help="render the emission timeline")
    p.add_argument("--check", action="store_true", help="fail unless the trace matches the golden file")
    p.set_defaults(func=cmd_fig4)

    p = sub.add_parser("sweep", parents=[common], help="reliability and goodput across loss rates")
    p.add_argument("--loss", default="0:0.1:0.02", help="loss probabilities as a:b:step (default %(default)s)")
    p.add_argument("--packets", type=int, default=2000, help="stream length per point (default %(default)s)")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--latency", type=int, default=1000, help="one-way latency in byte-times")
    p.add_argument("--jobs", type=int, default=1, help="run points in parallel processes")
    p.add_argument("--plot", metavar="PATH", help="render goodput against loss")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("selftest", parents=[common], help="run the acceptance suite")
    p.add_argument("--criteria", type=_criteria, help="comma-separated subset, e.g. 1,3,7")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

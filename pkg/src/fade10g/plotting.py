"""Figures for the CLI: emission timelines, delay history and loss sweeps."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_MARKERS = {
    "sent": ("o", "tab:blue"),
    "retransmit": ("s", "tab:orange"),
    "early_retransmit": ("D", "tab:red"),
}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_timeline(trace: list[str], path: str | Path, title: str = "FEB emissions") -> Path:
    """Packet number of every data frame the FEB put on the wire, against time.

    Frames lost on the way are drawn hollow; each point is labeled with its
    frame sequence number.
    """
    emitted, lost = [], set()
    for line in trace:
        time, _, direction, kind, pkt, seq, action = line.split("\t")
        if direction != "feb->daq" or kind not in ("data", "last"):
            continue
        if action == "dropped":
            lost.add((int(pkt), int(seq)))
        elif action in _MARKERS:
            emitted.append((int(time), int(pkt), int(seq), action))
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for action, (marker, color) in _MARKERS.items():
        rows = [r for r in emitted if r[3] == action]
        if not rows:
            continue
        for t, pkt, seq, _ in rows:
            hollow = (pkt, seq) in lost
            ax.scatter(t, pkt, marker=marker, s=40, edgecolors=color, facecolors="none" if hollow else color)
            ax.annotate(str(seq), (t, pkt), textcoords="offset points", xytext=(4, 4), fontsize=7)
        ax.scatter([], [], marker=marker, color=color, label=action.replace("_", " "))
    ax.scatter([], [], marker="o", edgecolors="gray", facecolors="none", label="lost on the wire")
    ax.set_xlabel("time (byte-times)")
    ax.set_ylabel("packet number")
    ax.set_title(title)
    ax.legend(loc="upper left", fontsize=8)
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_delay_history(history: list[tuple[float, int]], path: str | Path, hi: float, lo: float) -> Path:
    """Retransmission ratio and inter-packet delay at the end of each adapt window."""
    fig, ax = plt.subplots(figsize=(8, 4))
    windows = range(1, len(history) + 1)
    ax.plot(windows, [r for r, _ in history], color="tab:red", label="retransmission ratio")
    ax.axhline(hi, color="tab:red", linestyle="--", linewidth=0.8, label="hi threshold")
    ax.axhline(lo, color="tab:green", linestyle="--", linewidth=0.8, label="lo threshold")
    ax.set_xlabel("adapt window")
    ax.set_ylabel("ratio")
    twin = ax.twinx()
    twin.step(windows, [d for _, d in history], where="post", color="tab:blue", label="delay")
    twin.set_ylabel("inter-packet delay (byte-times)")
    lines = ax.get_legend_handles_labels()
    more = twin.get_legend_handles_labels()
    ax.legend(lines[0] + more[0], lines[1] + more[1], fontsize=8, loc="upper right")
    ax.set_title("delay adaptation")
    return _save(fig, path)


def plot_sweep(rows: list[dict], path: str | Path) -> Path:
    """Goodput fraction and retransmission share across loss probabilities."""
    loss = [r["loss"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(loss, [r["goodput_fraction"] for r in rows], marker="o", label="goodput fraction")
    ax.plot(
        loss,
        [r["retransmissions"] / max(r["data_frames_sent"], 1) for r in rows],
        marker="s",
        label="retransmitted share of data frames",
    )
    ax.set_xlabel("loss probability (each direction)")
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    ax.set_title("loss sweep")
    return _save(fig, path)

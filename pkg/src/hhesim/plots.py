"""Figure rendering for the report paths.

Every figure goes to a file next to the delimited output; nothing is shown
interactively, so the Agg backend is forced before pyplot is imported.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def save_sizes_chart(rows: list[dict], path: str) -> str:
    """Grouped payload vs ciphertext bars, one group per parameter set."""
    names = [r["paramset"] for r in rows]
    x = range(len(rows))
    width = 0.38
    fig, ax = plt.subplots(figsize=(7, 3.6))
    ax.bar([i - width / 2 for i in x], [r["payload_bytes"] for r in rows],
           width, label="payload (B)", color="#4878cf")
    ax.bar([i + width / 2 for i in x],
           [r["ciphertext_bytes"] for r in rows],
           width, label="ciphertext (B)", color="#d65f5f")
    ax.set_xticks(list(x))
    ax.set_xticklabels(names, rotation=20, ha="right")
    ax.set_ylabel("bytes")
    ax.set_title("Symmetric ciphertext size vs plaintext payload")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_expansion_chart(rows: list[dict], path: str) -> str:
    """Log-scale ciphertext sizes with fragment counts annotated."""
    labels = [r["scheme"] for r in rows]
    sizes = [r["ciphertext_bytes"] for r in rows]
    frags = [r["fragments"] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 3.8))
    ax1.bar(labels, sizes, color="#6acc65")
    ax1.set_yscale("log")
    ax1.set_ylabel("ciphertext bytes (log)")
    ax1.tick_params(axis="x", rotation=30)
    for lab in ax1.get_xticklabels():
        lab.set_ha("right")
    ax1.set_title("Ciphertext size per scheme")
    ax2.bar(labels, frags, color="#956cb4")
    ax2.set_yscale("log")
    ax2.set_ylabel("MTU fragments (log)")
    ax2.tick_params(axis="x", rotation=30)
    for lab in ax2.get_xticklabels():
        lab.set_ha("right")
    ax2.set_title("Fragments per message")
    for i, f in enumerate(frags):
        ax2.annotate(str(f), (i, f), textcoords="offset points",
                     xytext=(0, 3), ha="center", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_scenario_charts(report, outdir: str,
                         basename: str = "report") -> list[str]:
    """Per-cycle byte volumes and the online latency distribution."""
    os.makedirs(outdir, exist_ok=True)
    paths = []

    cycles = [c["cycle"] for c in report.cycles]
    up = [c["uplink_bytes"] for c in report.cycles]
    down = [c["downlink_bytes"] for c in report.cycles]
    fig, ax = plt.subplots(figsize=(7, 3.6))
    ax.plot(cycles, up, marker="o", ms=3, label="uplink (online)")
    ax.plot(cycles, down, marker="s", ms=3, label="downlink")
    ax.set_xlabel("cycle")
    ax.set_ylabel("bytes")
    ax.set_yscale("log")
    mode = report.header.get("mode", "")
    ax.set_title(f"Per-cycle traffic ({mode}, {report.header.get('paramset')})")
    ax.legend(frameon=False)
    fig.tight_layout()
    path = os.path.join(outdir, f"{basename}_traffic.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    paths.append(path)

    lat = [
        m.latency_s * 1000 for m in report.messages if not m.offline
    ]
    fig, ax = plt.subplots(figsize=(7, 3.6))
    ax.hist(lat, bins=min(40, max(5, len(set(lat)))), color="#4878cf")
    ax.set_xlabel("message latency (ms)")
    ax.set_ylabel("messages")
    ax.set_title("Online message latency")
    fig.tight_layout()
    path = os.path.join(outdir, f"{basename}_latency.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    paths.append(path)

    return paths

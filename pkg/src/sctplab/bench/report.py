"""Turn benchmark CSV files into text tables and PNG figures.

The CSV schema is recognized from the exact header line, so any file
produced by emit_csv can be fed back here without extra arguments.
"""

import csv
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .metrics import SCHEMAS


class ReportError(ValueError):
    """Input file is not one of the known benchmark CSV shapes."""


def sniff_kind(columns):
    for kind, schema in SCHEMAS.items():
        if tuple(columns) == schema:
            return kind
    raise ReportError("unrecognized CSV header: %s" % ",".join(columns))


def _parse_cell(text):
    try:
        as_float = float(text)
    except ValueError:
        return text
    if as_float.is_integer() and "." not in text and "e" not in text.lower():
        return int(text)
    return as_float


def load_csv(path):
    """Read one benchmark CSV; returns (kind, columns, rows-as-dicts)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ReportError("%s: empty file" % path)
        kind = sniff_kind(header)
        rows = []
        for raw in reader:
            rows.append({c: _parse_cell(v) for c, v in zip(header, raw)})
    return kind, tuple(header), rows


def table_text(columns, rows):
    """Plain aligned text table, right-justified numbers."""
    def cell(row, col):
        v = row[col]
        return "%.6g" % v if isinstance(v, float) else str(v)

    widths = {c: len(c) for c in columns}
    rendered = []
    for row in rows:
        line = {c: cell(row, c) for c in columns}
        rendered.append(line)
        for c in columns:
            widths[c] = max(widths[c], len(line[c]))
    out = ["  ".join(c.rjust(widths[c]) for c in columns)]
    out.append("  ".join("-" * widths[c] for c in columns))
    for line in rendered:
        out.append("  ".join(line[c].rjust(widths[c]) for c in columns))
    return "\n".join(out)


MODE_STYLE = {
    "tcp": ("tab:gray", "s"),
    "sctp_sack": ("tab:blue", "o"),
    "sctp_gbn": ("tab:orange", "^"),
}


def _fig_loss_sweep(rows, out_path):
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    modes = sorted({r["mode"] for r in rows})
    for mode in modes:
        pts = sorted((r["drop_prob"], r["goodput_mbps"])
                     for r in rows if r["mode"] == mode)
        xs = np.array([p[0] for p in pts]) * 100.0
        ys = np.array([p[1] for p in pts])
        color, marker = MODE_STYLE.get(mode, ("tab:green", "x"))
        ax.plot(xs, ys, color=color, marker=marker, label=mode)
    ax.set_xlabel("packet loss (%)")
    ax.set_ylabel("goodput (Mb/s)")
    ax.set_title("goodput vs. loss")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def _fig_scaling(rows, out_path):
    fig, (ax, ax2) = plt.subplots(1, 2, figsize=(8.0, 4.0))
    xs = [r["n_conns"] for r in rows]
    ax.plot(xs, [r["goodput_mbps"] for r in rows], marker="o",
            color="tab:blue")
    ax.set_xlabel("connections")
    ax.set_ylabel("aggregate goodput (Mb/s)")
    ax.set_xticks(xs)
    ax.grid(True, alpha=0.3)
    ax2.plot(xs, [r["cpu_proxy"] for r in rows], marker="s",
             color="tab:red")
    ax2.set_xlabel("connections")
    ax2.set_ylabel("cpu cost (units)")
    ax2.set_xticks(xs)
    ax2.grid(True, alpha=0.3)
    fig.suptitle("connection scaling")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def _fig_multistream(rows, out_path):
    fig, (ax, ax2) = plt.subplots(1, 2, figsize=(8.6, 4.0))
    labels = [r["topology"] for r in rows]
    pos = np.arange(len(rows))
    ax.bar(pos, [r["goodput_mbps"] for r in rows], color="tab:blue",
           width=0.6)
    ax.set_xticks(pos)
    ax.set_xticklabels(labels)
    ax.set_ylabel("aggregate goodput (Mb/s)")
    width = 0.38
    ax2.bar(pos - width / 2, [r["elapsed_coarse"] for r in rows], width,
            label="coarse lock", color="tab:orange")
    ax2.bar(pos + width / 2, [r["elapsed_fine"] for r in rows], width,
            label="fine lock", color="tab:green")
    ax2.set_xticks(pos)
    ax2.set_xticklabels(labels)
    ax2.set_ylabel("elapsed cost (units)")
    ax2.legend()
    fig.suptitle("connection layouts")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def _fig_failover(rows, out_path):
    fig, ax = plt.subplots(figsize=(7.0, 1.6 + 0.9 * len(rows)))
    marks = (("t_kill_ms", "v", "tab:red", "kill"),
             ("t_last_primary_ms", "<", "tab:gray", "last primary"),
             ("t_first_alternate_ms", ">", "tab:blue", "first alternate"),
             ("t_failover_ms", "x", "tab:orange", "failover"),
             ("t_revive_ms", "^", "tab:green", "revive"),
             ("t_back_primary_ms", "o", "tab:purple", "back on primary"))
    for i, row in enumerate(rows):
        for col, marker, color, label in marks:
            t = row[col]
            if t < 0:
                continue
            ax.plot([t], [i], marker=marker, color=color, linestyle="",
                    label=label if i == 0 else None)
    ax.set_yticks(range(len(rows)))
    ax.set_yticklabels(["seed %s" % r["seed"] for r in rows])
    ax.set_xlabel("time (ms)")
    ax.set_title("path failover timeline")
    ax.grid(True, axis="x", alpha=0.3)
    ax.legend(loc="center left", bbox_to_anchor=(1.01, 0.5), fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def _fig_run(rows, out_path):
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    labels = ["%s/%s/%s" % (r["scenario"], r["protocol"], r["seed"])
              for r in rows]
    pos = np.arange(len(rows))
    ax.bar(pos, [r["goodput_mbps"] for r in rows], color="tab:blue",
           width=0.6)
    ax.set_xticks(pos)
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_ylabel("goodput (Mb/s)")
    ax.set_title("run goodput")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


FIGURES = {
    "loss_sweep": _fig_loss_sweep,
    "scaling": _fig_scaling,
    "multistream": _fig_multistream,
    "failover": _fig_failover,
    "run": _fig_run,
}


def render_file(path, out_dir=None, out=None):
    """Print the table for one CSV and render its figure.

    Returns the figure path, or None when the file had no data rows.
    """
    kind, columns, rows = load_csv(path)
    text = table_text(columns, rows)
    if out is not None:
        out.write("%s  [%s]\n%s\n" % (path, kind, text))
    if not rows:
        return None
    stem = os.path.splitext(os.path.basename(path))[0]
    directory = out_dir if out_dir else (os.path.dirname(path) or ".")
    fig_path = os.path.join(directory, stem + ".png")
    FIGURES[kind](rows, fig_path)
    return fig_path

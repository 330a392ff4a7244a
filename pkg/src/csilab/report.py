"""Report emission: delimited accuracy/gain tables, per-sub-band SGCS trace
data, and rendered figures next to the text outputs.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .experiment import ResultTable

GAIN_HEADER_NOTE = ("# capacity gain of ML feedback over the wideband codebook "
                    "baseline; over-the-air throughput percentages are not "
                    "modeled and are not comparable")


def _fmt(val: float) -> str:
    return f"{val:.4f}"


def _write_rows(path: Path, rows: list[list[str]], fmt: str, note: str | None = None):
    if fmt == "csv":
        lines = [",".join(r) for r in rows]
    else:
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    text = ""
    if note:
        text += note + "\n"
    text += "\n".join(lines) + "\n"
    path.write_text(text)


def emit_report(table: ResultTable, fmt: str, out_dir) -> list[Path]:
    """Write the accuracy table, gain summary, trace data and figures.

    fmt is "txt" (aligned columns) or "csv". Raises if the table is missing
    any configured (family, rank, method) cell.
    """
    if fmt not in ("txt", "csv"):
        raise ValueError(f"unknown format {fmt!r}")
    table.check_complete()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    # (a) accuracy matrix: methods as columns, family x rank as rows
    rows = [["family", "rank"] + list(table.methods)]
    for fam in table.families:
        for rank in range(1, table.n_layers + 1):
            rows.append([fam, str(rank)]
                        + [_fmt(table.sgcs_cell(fam, rank, m)) for m in table.methods])
        rows.append([fam, "avg"]
                    + [_fmt(table.method_average(fam, m)) for m in table.methods])
    path = out / f"sgcs_table.{fmt}"
    _write_rows(path, rows, fmt)
    written.append(path)

    # (b) gain summary: trained-on rows, eval-scenario columns
    evals = sorted({k.split("|")[0] for k in table.gains})
    trains = sorted({k.split("|")[1] for k in table.gains})
    rows = [["trained_on"] + [f"eval:{e}" for e in evals] + ["average"]]
    for ts in trains:
        vals = [table.gains[ResultTable.gain_key(e, ts)] for e in evals]
        rows.append([ts] + [_fmt(v) for v in vals] + [_fmt(float(np.mean(vals)))])
    path = out / f"gain_summary.{fmt}"
    _write_rows(path, rows, fmt, note=GAIN_HEADER_NOTE)
    written.append(path)

    # (c) per-sub-band SGCS trace data (one row per layer x sub-band)
    if table.traces:
        tr = table.traces
        rows = [["layer", "subband", "sgcs_mean", "sgcs_snapshot"]]
        for i in range(len(tr["layer"])):
            rows.append([str(tr["layer"][i]), str(tr["subband"][i]),
                         _fmt(tr["sgcs_mean"][i]), _fmt(tr["sgcs_snapshot"][i])])
        path = out / "sgcs_trace.csv"
        _write_rows(path, rows, "csv")
        written.append(path)
        written.append(_plot_trace(table, out / "sgcs_trace.png"))

    written.append(_plot_gains(table, out / "gain_summary.png"))
    return written


def _plot_trace(table: ResultTable, path: Path) -> Path:
    tr = table.traces
    layers = np.asarray(tr["layer"])
    subbands = np.asarray(tr["subband"])
    means = np.asarray(tr["sgcs_mean"])
    fig, ax = plt.subplots(figsize=(7, 4))
    for l in sorted(set(layers.tolist())):
        sel = layers == l
        order = np.argsort(subbands[sel])
        ax.plot(subbands[sel][order], means[sel][order], label=f"layer {l}")
    ax.set_xlabel("sub-band index")
    ax.set_ylabel("SGCS")
    ax.set_ylim(0.0, 1.02)
    ax.legend(loc="lower left")
    ax.grid(True, alpha=0.3)
    ax.set_title("Reconstruction accuracy per sub-band")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _plot_gains(table: ResultTable, path: Path) -> Path:
    evals = sorted({k.split("|")[0] for k in table.gains})
    trains = sorted({k.split("|")[1] for k in table.gains})
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.8 / max(len(trains), 1)
    xs = np.arange(len(evals))
    for i, ts in enumerate(trains):
        vals = [100.0 * table.gains[ResultTable.gain_key(e, ts)] for e in evals]
        ax.bar(xs + i * width, vals, width=width, label=f"trained on {ts}")
    ax.set_xticks(xs + width * (len(trains) - 1) / 2)
    ax.set_xticklabels(evals)
    ax.set_xlabel("evaluation scenario")
    ax.set_ylabel("capacity gain over baseline [%]")
    ax.axhline(0.0, color="k", linewidth=0.8)
    ax.legend()
    ax.grid(True, axis="y", alpha=0.3)
    ax.set_title("Closed-loop capacity gain vs wideband codebook")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path

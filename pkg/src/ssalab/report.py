"""Markdown and SVG rendering of a run directory's metric CSVs."""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

plt.rcParams["svg.hashsalt"] = "ssalab"


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _num(x):
    try:
        return float(x)
    except (TypeError, ValueError):
        return None


def markdown_table(rows: list[dict], digits: int = 4) -> str:
    if not rows:
        return "(empty)\n"
    cols = list(rows[0].keys())
    out = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
    for r in rows:
        cells = []
        for c in cols:
            v = r.get(c, "")
            f = _num(v)
            cells.append(f"{f:.{digits}g}" if f is not None and "." in str(v) else str(v))
        out.append("| " + " | ".join(cells) + " |")
    return "\n".join(out) + "\n"


def _save(fig, path: Path) -> None:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_corruption(rows, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for kind in sorted({r["kind"] for r in rows}):
        rs = sorted((r for r in rows if r["kind"] == kind), key=lambda r: float(r["rate"]))
        ax.plot([float(r["rate"]) for r in rs], [float(r["solve_rate"]) for r in rs], "o-", label=f"{kind} solve rate")
        if kind == "fp" and all(_num(r.get("bound")) is not None for r in rs):
            ax.plot([float(r["rate"]) for r in rs], [float(r["bound"]) for r in rs], "k--", label="survival bound")
    ax.set_xlabel("corruption rate")
    ax.set_ylabel("solve rate")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_star(rows, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for enc in sorted({r["encoding"] for r in rows}):
        rs = sorted((r for r in rows if r["encoding"] == enc), key=lambda r: int(r["k"]))
        ax.plot([int(r["k"]) for r in rs], [float(r["accuracy"]) for r in rs], "o-", label=enc)
        pred = [(int(r["k"]), _num(r.get("predicted"))) for r in rs]
        if all(p is not None for _, p in pred):
            ax.plot([k for k, _ in pred], [p for _, p in pred], "k:", label=f"{enc} fitted")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("star size k")
    ax.set_ylabel("all-correct accuracy")
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_eval(rows, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    labels = [f"{r.get('model', '')}\n{r['protocol']}" for r in rows]
    ax.bar(range(len(rows)), [float(r["solve_rate"]) for r in rows])
    ax.set_xticks(range(len(rows)), labels, fontsize=7)
    ax.set_ylabel("solve rate")
    ax.set_ylim(0, 1)
    _save(fig, path)


def plot_loss(rows, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot([int(r["epoch"]) for r in rows], [float(r["loss"]) for r in rows], "o-")
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    _save(fig, path)


PLOTTERS = {"corruption": plot_corruption, "star_sweep": plot_star, "eval": plot_eval, "train_loss": plot_loss}


def render_report(root, csvs) -> list[str]:
    """Write report.md and one SVG per recognised table; returns relative output paths."""
    root = Path(root)
    (root / "plots").mkdir(exist_ok=True)
    outputs = []
    parts = [f"# Run report: {root.name}\n"]
    for p in csvs:
        p = Path(p)
        rows = read_csv(p)
        parts.append(f"## {p.stem}\n")
        parts.append(markdown_table(rows))
        if p.stem in PLOTTERS and rows:
            svg = root / "plots" / f"{p.stem}.svg"
            PLOTTERS[p.stem](rows, svg)
            rel = f"plots/{p.stem}.svg"
            parts.append(f"\n![{p.stem}]({rel})\n")
            outputs.append(rel)
    (root / "report.md").write_text("\n".join(parts), encoding="utf-8")
    outputs.append("report.md")
    return outputs

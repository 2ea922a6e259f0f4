"""Report rendering: JSON/CSV artifacts plus matplotlib figures.

Everything lands under one report directory. Figures are SVG with a pinned
hash salt and no Date metadata, so a rerun with the same config and seed
reproduces every output byte for byte. All writers embed the provenance
triple (config digest, seed, artifact version).
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .errors import ConfigError
from .training import EvalReport, SweepRow, TrainHistory, history_to_csv, sweep_to_csv

__all__ = [
    "ARTIFACT_VERSION",
    "provenance_triple",
    "write_eval_report",
    "write_history",
    "write_sweep",
    "render_history_figure",
    "render_sweep_figure",
    "render_score_figure",
]

ARTIFACT_VERSION = "1"

plt.rcParams["svg.hashsalt"] = "advfas"
plt.rcParams["svg.fonttype"] = "path"  # no font queries, identical output everywhere

_SVG_METADATA = {"Date": None, "Creator": None}


def provenance_triple(digest: str, seed: int) -> dict[str, str]:
    return {"config_digest": digest, "seed": str(int(seed)), "artifact_version": ARTIFACT_VERSION}


def _ensure_dir(path: Path) -> None:
    path.mkdir(parents=True, exist_ok=True)


def write_eval_report(report: EvalReport, out_dir: str | Path, digest: str, seed: int, stem: str = "eval") -> Path:
    out_dir = Path(out_dir)
    _ensure_dir(out_dir)
    payload = dict(report.to_dict())
    payload["provenance"] = provenance_triple(digest, seed)
    path = out_dir / f"{stem}.json"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def write_history(history: TrainHistory, out_dir: str | Path, digest: str, seed: int, stem: str = "history") -> Path:
    out_dir = Path(out_dir)
    _ensure_dir(out_dir)
    path = out_dir / f"{stem}.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(history_to_csv(history, provenance_triple(digest, seed)))
    return path


def write_sweep(rows: list[SweepRow], out_dir: str | Path, digest: str, seed: int, stem: str = "sweep") -> Path:
    out_dir = Path(out_dir)
    _ensure_dir(out_dir)
    path = out_dir / f"{stem}.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(sweep_to_csv(rows, provenance_triple(digest, seed)))
    return path


def _save(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata=_SVG_METADATA)
    plt.close(fig)


def render_history_figure(history: TrainHistory, out_dir: str | Path, stem: str = "history") -> Path:
    """Loss curves on the left axis, validation accuracies on the right."""
    rows = history.rows()
    if not rows:
        raise ConfigError("history is empty, nothing to plot")
    out_dir = Path(out_dir)
    _ensure_dir(out_dir)
    epochs = [r["epoch"] for r in rows]

    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(epochs, [r["l_cs"] for r in rows], color="tab:blue", label="combined loss")
    ax.plot(epochs, [r["l_spoof"] for r in rows], color="tab:cyan", linestyle="--", label="detector loss")
    ax.plot(epochs, [r["l_cor"] for r in rows], color="tab:purple", linestyle=":", label="corrector loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax2 = ax.twinx()
    ax2.plot(epochs, [r["val_acc_clean"] for r in rows], color="tab:green", label="val clean acc")
    ax2.plot(epochs, [r["val_acc_adv"] for r in rows], color="tab:red", label="val adversarial acc")
    ax2.set_ylabel("validation accuracy")
    ax2.set_ylim(0.0, 1.05)
    lines = ax.get_lines() + ax2.get_lines()
    ax.legend(lines, [ln.get_label() for ln in lines], loc="center right", fontsize=8)
    fig.tight_layout()
    path = out_dir / f"{stem}.svg"
    _save(fig, path)
    return path


def render_sweep_figure(rows: list[SweepRow], out_dir: str | Path, stem: str = "sweep") -> Path:
    """One line per adaptive objective: acc_avg against the eta grid."""
    if not rows:
        raise ConfigError("sweep is empty, nothing to plot")
    out_dir = Path(out_dir)
    _ensure_dir(out_dir)
    by_objective: dict[str, list[SweepRow]] = {}
    for row in rows:
        by_objective.setdefault(row.objective, []).append(row)

    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for name in sorted(by_objective):
        group = sorted(by_objective[name], key=lambda r: r.eta)
        ax.plot([r.eta for r in group], [r.acc_avg for r in group], marker="o", label=name)
    ax.set_xscale("log")
    ax.set_xlabel("eta")
    ax.set_ylabel("ACC (avg), percent")
    ax.set_ylim(0.0, 105.0)
    ax.axhline(60.0, color="gray", linestyle="--", linewidth=0.8)
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = out_dir / f"{stem}.svg"
    _save(fig, path)
    return path


def render_score_figure(
    scores_real: "list[float] | object",
    scores_spoof: "list[float] | object",
    scores_adv: "list[float] | object",
    threshold: float,
    out_dir: str | Path,
    stem: str = "scores",
) -> Path:
    """Histogram of decision scores with the selected threshold marked."""
    out_dir = Path(out_dir)
    _ensure_dir(out_dir)
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    bins = [i / 50.0 for i in range(51)]
    ax.hist(scores_real, bins=bins, alpha=0.55, label="clean real", color="tab:green")
    ax.hist(scores_spoof, bins=bins, alpha=0.55, label="clean spoof", color="tab:blue")
    ax.hist(scores_adv, bins=bins, alpha=0.55, label="adversarial spoof", color="tab:red")
    ax.axvline(threshold, color="black", linestyle="--", linewidth=1.0, label="threshold")
    ax.set_xlabel("decision score")
    ax.set_ylabel("count")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = out_dir / f"{stem}.svg"
    _save(fig, path)
    return path

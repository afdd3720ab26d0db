"""PNG figures rendered next to an experiment's CSV tables."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metadata import CORRECT, MIXED, OVERSELL  # noqa: E402

STAT_LABELS = {"p_value": "p-value", "odds_ratio": "odds ratio", "maf": "MAF"}
MARKERS = "os^Dv<>"
# fixed metadata keeps PNG bytes stable across runs
PNG_METADATA = {"Software": None}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=PNG_METADATA)
    plt.close(fig)
    return path


def _eps_label(eps) -> str:
    return "sampling" if eps is None else f"eps={eps:g}"


def plot_tpr_vs_epsilon(rows, path: Path) -> Path | None:
    rows = [r for r in rows if r["experiment"] == "epsilon" and r["scenario"] == CORRECT and r["epsilon"] is not None]
    if not rows:
        return None
    fig, ax = plt.subplots(figsize=(5, 3.6))
    for i, stat in enumerate(STAT_LABELS):
        for l in sorted({r["l"] for r in rows}):
            pts = sorted((r["epsilon"], r["tpr"]) for r in rows if r["statistic"] == stat and r["l"] == l)
            if pts:
                ax.plot(*zip(*pts), marker=MARKERS[i], label=f"{STAT_LABELS[stat]} (l={l})")
    ax.set_xlabel("epsilon")
    ax.set_ylabel("TPR")
    ax.set_ylim(0, 1.02)
    ax.legend(fontsize=7)
    return _save(fig, path)


def plot_tnr_vs_loss(rows, experiment: str, path: Path, statistic: str = "p_value") -> Path | None:
    rows = [r for r in rows if r["experiment"] == experiment and r["scenario"] == OVERSELL
            and r["statistic"] == statistic and r["target_loss"] is not None]
    if not rows:
        return None
    fig, ax = plt.subplots(figsize=(5, 3.6))
    series = sorted({(r["l"], r["epsilon"] if r["epsilon"] is not None else -1, r["param"]) for r in rows})
    for i, (l, eps, param) in enumerate(series):
        eps = None if eps == -1 else eps
        pts = sorted((r["utility_loss"], r["tnr"]) for r in rows
                     if r["l"] == l and r["epsilon"] == eps and r["param"] == param)
        label = ", ".join(x for x in (_eps_label(eps), f"l={l}", param) if x)
        ax.plot(*zip(*pts), marker=MARKERS[i % len(MARKERS)], label=label)
    ax.set_xlabel(f"utility loss ({STAT_LABELS[statistic]})")
    ax.set_ylabel("TNR")
    ax.set_ylim(0, 1.02)
    ax.legend(fontsize=7)
    return _save(fig, path)


def plot_mixed(rows, path: Path) -> Path | None:
    rows = [r for r in rows if r["experiment"] == "mixed" and r["scenario"] == MIXED and r["statistic"] == "p_value"]
    if not rows:
        return None
    fig, ax = plt.subplots(figsize=(5, 3.6))
    pts = sorted((r["utility_loss"], r["accuracy3"], r["accuracy"]) for r in rows)
    d, a3, a2 = zip(*pts)
    ax.plot(d, a3, "o-", label="oversell / undersell / correct")
    ax.plot(d, a2, "s-", label="incorrect / correct")
    ax.set_xlabel("mean p-value distance of incorrect statistics")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0, 1.02)
    ax.legend(fontsize=7)
    return _save(fig, path)


def plot_power(power, path: Path) -> Path | None:
    if not power:
        return None
    fig, ax = plt.subplots(figsize=(5, 3.6))
    series = sorted({(p.score_kind, -1 if p.epsilon is None else p.epsilon) for p in power})
    for i, (kind, eps) in enumerate(series):
        pts = sorted((p.value, p.power) for p in power
                     if p.score_kind == kind and (p.epsilon if p.epsilon is not None else -1) == eps)
        label = "LRT" if kind == "lrt" else f"ED eps={eps:g}"
        ax.plot(*zip(*pts), marker=MARKERS[i % len(MARKERS)], label=label)
    ax.set_xlabel("number of SNPs (l for LRT, k for ED)")
    ax.set_ylabel("power at 5% FPR")
    ax.set_ylim(0, 1.02)
    ax.legend(fontsize=7)
    return _save(fig, path)


def render_figures(result, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    made = [
        plot_tpr_vs_epsilon(result.rows, out / "tpr_vs_epsilon.png"),
        plot_tnr_vs_loss(result.rows, "epsilon", out / "tnr_vs_loss.png"),
        plot_tnr_vs_loss(result.rows, "dp", out / "tnr_vs_loss_dp.png"),
        plot_tnr_vs_loss(result.rows, "sampling", out / "tnr_vs_loss_sampling.png"),
        plot_mixed(result.rows, out / "mixed_accuracy.png"),
        plot_power(result.power, out / "power_curves.png"),
    ]
    return [p for p in made if p is not None]

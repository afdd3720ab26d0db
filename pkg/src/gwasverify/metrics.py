"""Classification and utility metrics."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class ConfusionMetrics:
    """Counts where "positive" means the statistic is correct.

    TP: correct statistic classified correct; FP: incorrect classified correct;
    FN: correct classified incorrect; TN: incorrect classified incorrect.
    """

    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def tpr(self) -> float:
        d = self.tp + self.fn
        return self.tp / d if d else float("nan")

    @property
    def tnr(self) -> float:
        d = self.tn + self.fp
        return self.tn / d if d else float("nan")

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else float("nan")

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
                "tpr": self.tpr, "tnr": self.tnr, "accuracy": self.accuracy}


def confusion_metrics(truth_correct: Sequence[bool], verdict_correct: Sequence[bool]) -> ConfusionMetrics:
    t = np.asarray(truth_correct, dtype=bool)
    v = np.asarray(verdict_correct, dtype=bool)
    if t.shape != v.shape:
        raise ValueError(f"{t.size} ground-truth labels but {v.size} verdicts")
    return ConfusionMetrics(
        tp=int(np.sum(t & v)), fp=int(np.sum(~t & v)), tn=int(np.sum(~t & ~v)), fn=int(np.sum(t & ~v))
    )


def utility_loss(reported: Sequence[float], correct: Sequence[float], z_norm: float = 1.0) -> float:
    """Mean of |reported - correct| / z_norm."""
    r = np.asarray(reported, dtype=float)
    c = np.asarray(correct, dtype=float)
    if r.shape != c.shape:
        raise ValueError(f"{r.size} reported values but {c.size} correct values")
    if not z_norm > 0:
        raise ValueError("z_norm must be positive")
    if r.size == 0:
        return 0.0
    return float(np.mean(np.abs(r - c)) / z_norm)


def z_norms(correct_odds_ratios: Sequence[float]) -> dict[str, float]:
    """Normalizers per statistic: p-value 1, MAF 0.5, OR the largest correct OR."""
    o = np.asarray(correct_odds_ratios, dtype=float)
    z_o = float(np.nanmax(o)) if o.size and np.nanmax(o) > 0 else 1.0
    return {"p": 1.0, "a": 0.5, "o": z_o}

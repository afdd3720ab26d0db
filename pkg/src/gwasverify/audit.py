"""Membership-inference audit of released statistics and partial noisy datasets.

Two attacks are scored against a set A of outsiders and a set B of case-group
members: a likelihood-ratio test on the released case MAFs, and a minimum
Hamming distance between a target genome and the case rows of the partial
dataset. Thresholds are set on A at a fixed false-positive rate.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ._seeding import derive_seed, rng_for
from .genotype import CaseControlDataset
from .ldp import PartialNoisyDataset

logger = logging.getLogger(__name__)

LRT = "lrt"
EDIT_DISTANCE = "edit_distance"
HIGHER, LOWER = "higher", "lower"
FREQ_CLAMP = 1e-6
DEFAULT_FPR = 0.05
POWER_FIELDS = ("attack", "axis", "value", "epsilon", "gamma", "power")


@dataclass(frozen=True, eq=False)
class AttackCohorts:
    """Outsiders (A) and case-group members (B) with genotypes over ``snp_ids``."""

    set_a: np.ndarray
    set_b: np.ndarray
    snp_ids: tuple[str, ...]
    member_rows: tuple[int, ...] = ()

    def __post_init__(self):
        a = np.asarray(self.set_a)
        b = np.asarray(self.set_b)
        if a.ndim != 2 or b.ndim != 2 or a.shape[0] == 0 or b.shape[0] == 0:
            raise ValueError("both cohorts must be non-empty genotype matrices")
        if a.shape[1] != len(self.snp_ids) or b.shape[1] != len(self.snp_ids):
            raise ValueError("cohort genotypes must cover every SNP id")
        object.__setattr__(self, "set_a", a)
        object.__setattr__(self, "set_b", b)
        object.__setattr__(self, "snp_ids", tuple(self.snp_ids))

    def columns(self, snp_ids: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        pos = {s: i for i, s in enumerate(self.snp_ids)}
        idx = [pos[s] for s in snp_ids]
        return self.set_a[:, idx], self.set_b[:, idx]


def draw_cohorts(dataset: CaseControlDataset, outsiders: np.ndarray, size_a: int = 25, size_b: int = 25,
                 seed: int = 0) -> AttackCohorts:
    """B: ``size_b`` random case members of ``dataset``; A: ``size_a`` random
    rows of ``outsiders`` (genotypes of individuals outside the study, over the
    dataset's SNPs)."""
    outsiders = np.asarray(outsiders)
    cases = np.flatnonzero(dataset.labels)
    if size_b > cases.size or size_a > outsiders.shape[0]:
        raise ValueError(f"cohort sizes {size_a}/{size_b} exceed the {outsiders.shape[0]} outsiders / "
                         f"{cases.size} cases available")
    if size_a < 1 or size_b < 1:
        raise ValueError("cohort sizes must be positive")
    rng = rng_for(seed, "cohorts")
    rows_b = np.sort(rng.choice(cases, size_b, replace=False))
    rows_a = np.sort(rng.choice(outsiders.shape[0], size_a, replace=False))
    return AttackCohorts(outsiders[rows_a], dataset.genotypes[rows_b], dataset.snp_ids, tuple(int(r) for r in rows_b))


# -- scores ---------------------------------------------------------------------

@dataclass
class ClampRecord:
    """Count of frequencies moved into [FREQ_CLAMP, 1 - FREQ_CLAMP]."""

    clamped: int = 0


def _clamp(freqs: np.ndarray, record: ClampRecord | None) -> np.ndarray:
    f = np.asarray(freqs, dtype=float)
    if np.any((f < 0) | (f > 1)) or np.any(np.isnan(f)):
        raise ValueError("frequencies must lie in [0, 1]")
    out = np.clip(f, FREQ_CLAMP, 1 - FREQ_CLAMP)
    moved = int(np.sum(out != f))
    if moved:
        logger.warning("clamped %d frequencies at 0 or 1", moved)
        if record is not None:
            record.clamped += moved
    return out


def lrt_weights(case_freqs: np.ndarray, pop_freqs: np.ndarray, record: ClampRecord | None = None
                ) -> tuple[np.ndarray, np.ndarray]:
    a = _clamp(case_freqs, record)
    p = _clamp(pop_freqs, record)
    if a.shape != p.shape:
        raise ValueError(f"{a.size} case frequencies but {p.size} population frequencies")
    return np.log(a / p), np.log((1 - a) / (1 - p))


def lrt_statistic(target, case_freqs, pop_freqs, per_allele: bool = False,
                  record: ClampRecord | None = None) -> float:
    """Log-likelihood ratio of a target over the released SNPs.

    Default form: sum of x*ln(a/pop) + (1-x)*ln((1-a)/(1-pop)) with x the
    0/1/2 genotype, as literally defined. ``per_allele`` switches to the
    binomial form with weights x and 2-x.
    """
    return float(lrt_scores(np.atleast_2d(target), case_freqs, pop_freqs, per_allele, record)[0])


def lrt_scores(targets: np.ndarray, case_freqs, pop_freqs, per_allele: bool = False,
               record: ClampRecord | None = None) -> np.ndarray:
    x = np.asarray(targets, dtype=float)
    w1, w0 = lrt_weights(np.asarray(case_freqs), np.asarray(pop_freqs), record)
    if x.shape[-1] != w1.size:
        raise ValueError(f"target covers {x.shape[-1]} SNPs but {w1.size} frequencies given")
    other = (2.0 - x) if per_allele else (1.0 - x)
    return x @ w1 + other @ w0


def edit_distance(g1, g2) -> int:
    """Number of positions where two equal-length genotype vectors differ."""
    a = np.asarray(g1)
    b = np.asarray(g2)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    return int(np.count_nonzero(a != b))


def edit_distance_score(target, partial: PartialNoisyDataset, target_snp_ids: Sequence[str] | None = None) -> int:
    """Minimum edit distance from ``target`` to the case rows of ``partial``.

    ``target`` is either aligned with ``partial.snp_ids`` or, with
    ``target_snp_ids``, a wider vector that is restricted first.
    """
    return int(edit_distance_scores(np.atleast_2d(target), partial, target_snp_ids)[0])


def edit_distance_scores(targets: np.ndarray, partial: PartialNoisyDataset,
                         target_snp_ids: Sequence[str] | None = None) -> np.ndarray:
    t = np.asarray(targets)
    if target_snp_ids is not None:
        pos = {s: i for i, s in enumerate(target_snp_ids)}
        missing = [s for s in partial.snp_ids if s not in pos]
        if missing:
            raise ValueError(f"target lacks {len(missing)} SNPs of the partial dataset")
        t = t[:, [pos[s] for s in partial.snp_ids]]
    if t.shape[1] != partial.k:
        raise ValueError(f"target covers {t.shape[1]} SNPs, partial dataset has {partial.k}")
    cases = partial.genotypes[partial.labels]
    if cases.shape[0] == 0:
        raise ValueError("partial dataset has no case rows")
    diff = (t[:, None, :] != cases[None, :, :]).sum(axis=2)
    return diff.min(axis=1)


# -- power ---------------------------------------------------------------------

@dataclass(frozen=True)
class PowerResult:
    gamma: float
    power: float
    fpr_target: float = DEFAULT_FPR
    score_kind: str = ""
    axis: str = ""
    value: int | None = None
    epsilon: float | None = None
    per_rep: tuple[float, ...] = field(default=(), repr=False)

    def row(self) -> list:
        eps = "" if self.epsilon is None else repr(float(self.epsilon))
        return [self.score_kind, self.axis, "" if self.value is None else self.value, eps,
                repr(float(self.gamma)), repr(float(self.power))]


def attack_power(scores_a, scores_b, direction: str = HIGHER, fpr: float = DEFAULT_FPR) -> PowerResult:
    """Threshold at the A-score quantile leaving ceil((1-fpr)|A|) of A unflagged.

    ``direction`` says which side is suspicious: ``higher`` flags scores above
    gamma, ``lower`` flags scores below it.
    """
    a = np.sort(np.asarray(scores_a, dtype=float))
    b = np.asarray(scores_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("both score sets must be non-empty")
    if not 0 <= fpr < 1:
        raise ValueError("fpr must lie in [0, 1)")
    keep = math.ceil((1 - fpr) * a.size - 1e-9)
    if direction == HIGHER:
        gamma = float(a[keep - 1]) if keep else -math.inf
        power = float(np.mean(b > gamma))
    elif direction == LOWER:
        gamma = float(a[a.size - keep]) if keep else math.inf
        power = float(np.mean(b < gamma))
    else:
        raise ValueError(f"direction must be {HIGHER!r} or {LOWER!r}")
    return PowerResult(gamma, power, fpr)


BundleFactory = Callable[[int, float | None, int], object]


def power_curve(dataset: CaseControlDataset, bundle_factory: BundleFactory, attack: str,
                axis_values: Sequence[int], epsilons: Sequence[float | None], cohort_factory: Callable[[int], AttackCohorts],
                seed: int, reps: int = 50, pop_freqs: Callable[[Sequence[str]], np.ndarray] | None = None,
                per_allele: bool = False, fpr: float = DEFAULT_FPR) -> list[PowerResult]:
    """Mean attack power per (axis value, epsilon) over ``reps`` repetitions.

    ``bundle_factory(value, epsilon, rep_seed)`` returns a MetadataBundle (or
    anything with ``reported`` and ``partial``); ``cohort_factory(rep_seed)``
    draws fresh A/B cohorts. Repetition r uses the same seed at every grid
    point, so curves share their randomness across the axis.
    """
    values = list(axis_values)
    if values != sorted(values):
        raise ValueError("axis values must be sorted ascending")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if attack == LRT and pop_freqs is None:
        raise ValueError("the LRT attack needs population frequencies")
    axis = "l" if attack == LRT else "k"
    out = []
    for eps in epsilons:
        for v in values:
            powers, gammas = [], []
            for r in range(reps):
                rep_seed = derive_seed(seed, "rep", r)
                cohorts = cohort_factory(rep_seed)
                bundle = bundle_factory(v, eps, rep_seed)
                if attack == LRT:
                    ids = bundle.reported.snp_ids.tolist()
                    xa, xb = cohorts.columns(ids)
                    freqs = bundle.reported.maf
                    pops = pop_freqs(ids)
                    res = attack_power(lrt_scores(xa, freqs, pops, per_allele),
                                       lrt_scores(xb, freqs, pops, per_allele), HIGHER, fpr)
                elif attack == EDIT_DISTANCE:
                    xa, xb = cohorts.columns(bundle.partial.snp_ids)
                    res = attack_power(edit_distance_scores(xa, bundle.partial),
                                       edit_distance_scores(xb, bundle.partial), LOWER, fpr)
                else:
                    raise ValueError(f"unknown attack {attack!r}")
                powers.append(res.power)
                gammas.append(res.gamma)
            out.append(PowerResult(float(np.mean(gammas)), float(np.mean(powers)), fpr, attack, axis, int(v),
                                   None if eps is None else float(eps), tuple(powers)))
    return out


def write_power_csv(results: Sequence[PowerResult], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(POWER_FIELDS)
        for r in results:
            w.writerow(r.row())

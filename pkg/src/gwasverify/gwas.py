"""Case-control association statistics on collapsed 2x2 contingency tables.

For every SNP the engine reports the odds ratio of carrying at least one minor
allele, the standard error of its log, a 95% confidence interval, the normal
deviate z = ln(OR) / SE, the two-sided normal-tail p-value and the case-group
minor-allele frequency.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import erfc

from .errors import DatasetFormatError, DegenerateTableError
from .genotype import CaseControlDataset

Z95 = 1.96
P_FLOOR = 1e-300
CSV_FIELDS = ("snp_id", "odds_ratio", "p_value", "maf", "se", "ci_low", "ci_high", "z")


@dataclass(frozen=True)
class ContingencyTable:
    S0: int
    S1: int
    S2: int
    C0: int
    C1: int
    C2: int

    def __post_init__(self):
        if min(self.S0, self.S1, self.S2, self.C0, self.C1, self.C2) < 0:
            raise ValueError("contingency counts must be non-negative")

    @property
    def S(self) -> int:
        return self.S0 + self.S1 + self.S2

    @property
    def C(self) -> int:
        return self.C0 + self.C1 + self.C2

    @property
    def n0(self) -> int:
        return self.S0 + self.C0

    @property
    def n1(self) -> int:
        return self.S1 + self.C1

    @property
    def n2(self) -> int:
        return self.S2 + self.C2

    @property
    def n(self) -> int:
        return self.S + self.C

    def collapsed(self) -> tuple[int, int, int, int]:
        """(S0, S1+S2, C0, C1+C2)."""
        return self.S0, self.S1 + self.S2, self.C0, self.C1 + self.C2

    def swapped(self) -> "ContingencyTable":
        return ContingencyTable(self.C0, self.C1, self.C2, self.S0, self.S1, self.S2)


@dataclass(frozen=True)
class SnpStatistics:
    snp_id: str
    odds_ratio: float
    p_value: float
    maf: float
    se: float = float("nan")
    ci_low: float = float("nan")
    ci_high: float = float("nan")
    z: float = float("nan")

    def replace(self, **changes) -> "SnpStatistics":
        return dataclasses.replace(self, **changes)


def contingency_table(genotype_column: Sequence[int], labels: Sequence[bool]) -> ContingencyTable:
    g = np.asarray(genotype_column)
    lab = np.asarray(labels, dtype=bool)
    if g.shape != lab.shape:
        raise ValueError(f"genotype column has {g.size} entries but {lab.size} labels")
    if g.size == 0:
        raise ValueError("empty genotype column")
    if not np.all(np.isin(g, (0, 1, 2))):
        raise ValueError("genotype values must be in {0, 1, 2}")
    s = np.bincount(g[lab].astype(np.intp), minlength=3)
    c = np.bincount(g[~lab].astype(np.intp), minlength=3)
    return ContingencyTable(int(s[0]), int(s[1]), int(s[2]), int(c[0]), int(c[1]), int(c[2]))


def genotype_counts(genotypes: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-SNP genotype tallies, each of shape (3, m): case counts, control counts."""
    labels = np.asarray(labels, dtype=bool)
    g = np.asarray(genotypes)
    case = np.stack([(g[labels] == v).sum(axis=0) for v in range(3)])
    ctrl = np.stack([(g[~labels] == v).sum(axis=0) for v in range(3)])
    return case, ctrl


def _two_sided_tail(z: np.ndarray) -> np.ndarray:
    return np.maximum(erfc(np.abs(z) / np.sqrt(2.0)), P_FLOOR)


def statistics_arrays(case: np.ndarray, ctrl: np.ndarray, continuity_correction: bool = True) -> dict:
    """Vectorized statistics for count arrays of shape (3, m).

    With ``continuity_correction`` a table holding a zero cell in its 2x2 view
    gets 0.5 added to all four cells; tables without zero cells are untouched.
    Without it, zero-cell tables yield NaN odds ratios (callers decide how to
    treat them).
    """
    case = np.asarray(case, dtype=float)
    ctrl = np.asarray(ctrl, dtype=float)
    s0, s12 = case[0], case[1] + case[2]
    c0, c12 = ctrl[0], ctrl[1] + ctrl[2]
    S = case.sum(axis=0)
    zero = (s0 == 0) | (s12 == 0) | (c0 == 0) | (c12 == 0)
    if continuity_correction:
        adj = np.where(zero, 0.5, 0.0)
        s0, s12, c0, c12 = s0 + adj, s12 + adj, c0 + adj, c12 + adj
    with np.errstate(divide="ignore", invalid="ignore"):
        o = (c0 * s12) / (s0 * c12)
        se = np.sqrt(1.0 / s12 + 1.0 / s0 + 1.0 / c12 + 1.0 / c0)
        log_o = np.log(o)
        z = log_o / se
        ci_low = np.exp(log_o - Z95 * se)
        ci_high = np.exp(log_o + Z95 * se)
        maf = (case[1] + 2.0 * case[2]) / (2.0 * S)
    if not continuity_correction:
        bad = zero
        o, se, z, ci_low, ci_high = (np.where(bad, np.nan, x) for x in (o, se, z, ci_low, ci_high))
    p = np.where(np.isnan(z), np.nan, _two_sided_tail(np.nan_to_num(z)))
    return {"odds_ratio": o, "p_value": p, "maf": maf, "se": se, "ci_low": ci_low, "ci_high": ci_high,
            "z": z, "degenerate": zero}


def compute_statistics(table: ContingencyTable, continuity_correction: bool = True,
                       snp_id: str = "") -> SnpStatistics:
    """Association statistics for a single table.

    Raises:
        DegenerateTableError: a zero cell in the 2x2 view and no continuity correction.
    """
    case = np.array([[table.S0], [table.S1], [table.S2]])
    ctrl = np.array([[table.C0], [table.C1], [table.C2]])
    if table.S == 0 or table.C == 0:
        raise DegenerateTableError("table needs both cases and controls")
    r = statistics_arrays(case, ctrl, continuity_correction)
    if not continuity_correction and r["degenerate"][0]:
        raise DegenerateTableError(f"zero cell in 2x2 table {table.collapsed()}")
    return SnpStatistics(snp_id, *(float(r[k][0]) for k in CSV_FIELDS[1:]))


@dataclass(frozen=True, eq=False)
class GwasTable:
    """Column-oriented per-SNP statistics (one entry per SNP, in row order)."""

    snp_ids: np.ndarray
    odds_ratio: np.ndarray
    p_value: np.ndarray
    maf: np.ndarray
    se: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "snp_ids", np.asarray(self.snp_ids, dtype=str))
        for name in CSV_FIELDS[1:]:
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    def __len__(self) -> int:
        return self.snp_ids.shape[0]

    def take(self, idx) -> "GwasTable":
        idx = np.asarray(idx, dtype=np.intp)
        return GwasTable(**{name: getattr(self, name)[idx] for name in CSV_FIELDS_ATTR})

    def ranked(self) -> "GwasTable":
        """Sorted by increasing p-value, ties broken by SNP id."""
        return self.take(np.lexsort((self.snp_ids, self.p_value)))

    def head(self, l: int) -> "GwasTable":
        return self.take(np.arange(min(l, len(self))))

    def index_of(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.snp_ids.tolist())}

    def select(self, snp_ids: Sequence[str]) -> "GwasTable":
        idx = self.index_of()
        return self.take([idx[s] for s in snp_ids])

    def records(self) -> list[SnpStatistics]:
        return [
            SnpStatistics(str(s), *(float(getattr(self, k)[i]) for k in CSV_FIELDS[1:]))
            for i, s in enumerate(self.snp_ids)
        ]

    def column(self, kind: str) -> np.ndarray:
        return {"p": self.p_value, "o": self.odds_ratio, "a": self.maf}[kind]

    def with_values(self, **columns) -> "GwasTable":
        return dataclasses.replace(self, **columns)

    @classmethod
    def from_records(cls, records: Sequence[SnpStatistics]) -> "GwasTable":
        return cls(**{attr: [getattr(r, name) for r in records] for attr, name in zip(CSV_FIELDS_ATTR, CSV_FIELDS)})

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_FIELDS)
            for i in range(len(self)):
                w.writerow([self.snp_ids[i]] + [repr(float(getattr(self, k)[i])) for k in CSV_FIELDS[1:]])

    @classmethod
    def read_csv(cls, path: str | Path) -> "GwasTable":
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows or tuple(rows[0]) != CSV_FIELDS:
            raise DatasetFormatError(f"{path}: statistics CSV header must be {','.join(CSV_FIELDS)}")
        try:
            cols = {name: [] for name in CSV_FIELDS}
            for r in rows[1:]:
                if len(r) != len(CSV_FIELDS):
                    raise ValueError(r)
                cols["snp_id"].append(r[0])
                for name, v in zip(CSV_FIELDS[1:], r[1:]):
                    cols[name].append(float(v))
        except ValueError as exc:
            raise DatasetFormatError(f"{path}: malformed statistics row {exc}") from None
        cols["snp_ids"] = cols.pop("snp_id")
        return cls(**cols)


CSV_FIELDS_ATTR = ("snp_ids",) + CSV_FIELDS[1:]


def gwas_table(dataset: CaseControlDataset, continuity_correction: bool = True) -> GwasTable:
    """Statistics for every SNP of ``dataset`` in column order."""
    case, ctrl = genotype_counts(dataset.genotypes, dataset.labels)
    r = statistics_arrays(case, ctrl, continuity_correction)
    return GwasTable(np.asarray(dataset.snp_ids), *(r[k] for k in CSV_FIELDS[1:]))


def rank_snps(dataset: CaseControlDataset, continuity_correction: bool = True) -> GwasTable:
    """Full ranking by increasing p-value. Degenerate SNPs are dropped when
    ``continuity_correction`` is off."""
    table = gwas_table(dataset, continuity_correction)
    if not continuity_correction:
        table = table.take(np.flatnonzero(~np.isnan(table.p_value)))
    return table.ranked()


def run_gwas(dataset: CaseControlDataset, l: int, continuity_correction: bool = True,
             full: bool = False) -> list[SnpStatistics]:
    """The ``l`` most associated SNPs (or all of them with ``full=True``)."""
    if not 1 <= l <= dataset.m:
        raise ValueError(f"l must lie in [1, {dataset.m}], got {l}")
    ranked = rank_snps(dataset, continuity_correction)
    return ranked.records() if full else ranked.head(l).records()

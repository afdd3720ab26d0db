"""Researcher-side bundle construction and controlled error injection.

A bundle carries what the researcher publishes alongside the top-l
statistics: phenotype, population, n, m, the declared privacy parameter and
a partial noisy dataset for k LD-independent top SNPs. Ground truth is kept
in a separate object that is never serialized into the bundle.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._seeding import derive_seed, rng_for
from .errors import SchemaError
from .genotype import CaseControlDataset
from .gwas import GwasTable, rank_snps
from .ldp import PartialNoisyDataset, build_partial_noisy_dataset, sample_partial_dataset
from .metrics import utility_loss, z_norms

DEFAULT_R2 = 0.2
BUNDLE_FIELDS = ("phenotype", "population", "n", "m", "epsilon", "partial_ref", "reported_ref")


# -- LD pruning --------------------------------------------------------------

@dataclass(frozen=True)
class LdPruneResult:
    representatives: tuple[str, ...]
    linkage: dict[str, str] = field(default_factory=dict)


def _standardize(col: np.ndarray) -> np.ndarray | None:
    x = col.astype(float)
    x = x - x.mean()
    norm = np.sqrt(x @ x)
    return None if norm == 0 else x / norm


def ld_prune(dataset: CaseControlDataset, candidate_snps: Sequence[str], r2_threshold: float = DEFAULT_R2,
             max_keep: int | None = None) -> LdPruneResult:
    """Greedy pruning in candidate order using genotype Pearson r^2.

    A candidate is kept if its r^2 with every kept SNP is below the
    threshold; otherwise it is linked to the kept SNP with the highest r^2.
    Stops early once ``max_keep`` representatives exist.
    """
    if not 0 < r2_threshold <= 1:
        raise ValueError("r2_threshold must lie in (0, 1]")
    cols = dataset.columns(candidate_snps)
    kept_ids: list[str] = []
    kept_std: list[np.ndarray | None] = []
    kept_raw: list[np.ndarray] = []
    linkage: dict[str, str] = {}
    for sid, c in zip(candidate_snps, cols):
        if max_keep is not None and len(kept_ids) >= max_keep:
            break
        raw = dataset.genotypes[:, c]
        z = _standardize(raw)
        best, best_r2 = None, -1.0
        for kid, kz, kraw in zip(kept_ids, kept_std, kept_raw):
            if z is None or kz is None:
                r2 = 1.0 if np.array_equal(raw, kraw) else 0.0
            else:
                r2 = float(z @ kz) ** 2
            if r2 > best_r2:
                best, best_r2 = kid, r2
        if best is not None and best_r2 >= r2_threshold:
            linkage[sid] = best
        else:
            kept_ids.append(sid)
            kept_std.append(z)
            kept_raw.append(raw)
    return LdPruneResult(tuple(kept_ids), linkage)


# -- bundle --------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MetadataBundle:
    phenotype: str
    population: str
    n: int
    m: int
    epsilon_declared: float | None
    partial: PartialNoisyDataset
    reported: GwasTable

    @property
    def l(self) -> int:
        return len(self.reported)

    @property
    def k(self) -> int:
        return self.partial.k

    def replace(self, **changes) -> "MetadataBundle":
        return dataclasses.replace(self, **changes)

    def equals(self, other: "MetadataBundle") -> bool:
        a, b = self.reported, other.reported
        return (
            (self.phenotype, self.population, self.n, self.m, self.epsilon_declared)
            == (other.phenotype, other.population, other.n, other.m, other.epsilon_declared)
            and self.partial.equals(other.partial)
            and np.array_equal(a.snp_ids, b.snp_ids)
            and all(np.array_equal(getattr(a, f), getattr(b, f), equal_nan=True)
                    for f in ("odds_ratio", "p_value", "maf", "se", "ci_low", "ci_high", "z"))
        )


def write_bundle(bundle: MetadataBundle, directory: str | Path, stem: str = "bundle") -> Path:
    """Write ``<stem>.json`` plus the partial TSV (+ sidecar) and reported CSV it references."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    partial_ref = f"{stem}.partial.tsv"
    reported_ref = f"{stem}.reported.csv"
    bundle.partial.write(directory / partial_ref)
    bundle.reported.to_csv(directory / reported_ref)
    doc = {
        "phenotype": bundle.phenotype,
        "population": bundle.population,
        "n": bundle.n,
        "m": bundle.m,
        "epsilon": bundle.epsilon_declared,
        "partial_ref": partial_ref,
        "reported_ref": reported_ref,
    }
    path = directory / f"{stem}.json"
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return path


def read_bundle(path: str | Path) -> MetadataBundle:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from None
    missing = [f for f in BUNDLE_FIELDS if f not in doc]
    if missing:
        raise SchemaError(f"{path}: missing bundle fields {missing}")
    base = path.parent
    partial = PartialNoisyDataset.read(base / doc["partial_ref"])
    reported = GwasTable.read_csv(base / doc["reported_ref"])
    eps = doc["epsilon"]
    return MetadataBundle(str(doc["phenotype"]), str(doc["population"]), int(doc["n"]), int(doc["m"]),
                          None if eps is None else float(eps), partial, reported)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Evaluation-only knowledge about how a bundle was produced."""

    dataset: CaseControlDataset
    ranking: GwasTable
    start_rank: int
    correct: GwasTable
    seed: int
    linkage: dict[str, str] = field(default_factory=dict)


def build_metadata(dataset: CaseControlDataset, l: int, k: int, epsilon: float | None, seed: int, *,
                   start_rank: int = 0, r2_threshold: float = DEFAULT_R2, prune: bool = True,
                   b: int | None = None, ranking: GwasTable | None = None,
                   ranks: Sequence[int] | None = None) -> tuple[MetadataBundle, GroundTruth]:
    """Run GWAS, pick the top-l statistics and a k-SNP partial dataset.

    ``start_rank`` shifts the researcher's window down the ranking, so the
    researcher's own strongest SNP sits at that rank (used to simulate
    overselling). ``ranks`` replaces the window by explicit, increasing rank
    positions. With ``b`` set, the partial dataset is built by sampling from
    ``b`` sample partitions instead of randomized response.
    """
    if not 1 <= l <= k <= dataset.m:
        raise ValueError(f"need 1 <= l <= k <= m, got l={l}, k={k}, m={dataset.m}")
    if ranking is None:
        ranking = rank_snps(dataset)
    if ranks is not None:
        chosen = np.asarray(ranks, dtype=np.intp)
        if chosen.size != l or np.any(np.diff(chosen) <= 0) or chosen[0] < 0 or chosen[-1] >= len(ranking):
            raise ValueError(f"ranks must be {l} increasing positions within the ranking")
        start_rank = int(chosen[0])
    else:
        if start_rank < 0 or start_rank + l > len(ranking):
            raise ValueError(f"window starting at rank {start_rank} leaves fewer than {l} SNPs")
        chosen = np.arange(start_rank, start_rank + l)
    rest = np.setdiff1d(np.arange(start_rank, len(ranking)), chosen)
    window = ranking.snp_ids[np.r_[chosen, rest]].tolist()
    if prune:
        pr = ld_prune(dataset, window, r2_threshold, max_keep=k)
    else:
        pr = LdPruneResult(tuple(window[:k]))
    if len(pr.representatives) < k:
        raise ValueError(f"only {len(pr.representatives)} LD-independent SNPs available, need k={k}")
    reps = list(pr.representatives)
    if b is not None:
        partial = sample_partial_dataset(dataset, reps, b, derive_seed(seed, "partial"))
        eps = None
    else:
        if epsilon is None:
            raise ValueError("epsilon is required unless sampling (b) is used")
        partial = build_partial_noisy_dataset(dataset, reps, epsilon, derive_seed(seed, "partial"))
        eps = float(epsilon)
    reported = ranking.take(chosen)
    bundle = MetadataBundle(dataset.phenotype, dataset.population, dataset.n, dataset.m, eps, partial, reported)
    truth = GroundTruth(dataset, ranking, start_rank, reported, seed, dict(pr.linkage))
    return bundle, truth


# -- error injection -----------------------------------------------------------

OVERSELL, UNDERSELL, MIXED, CORRECT, METADATA_EPSILON = (
    "oversell", "undersell", "mixed", "correct", "metadata_epsilon")
SCENARIO_KINDS = (OVERSELL, UNDERSELL, MIXED, CORRECT, METADATA_EPSILON)


@dataclass(frozen=True)
class ErrorScenario:
    """How a researcher's report deviates from the correct one.

    ``offset`` is the rank shift between a reported SNP and the SNP whose
    statistics it borrows. ``target_loss`` may replace it: the smallest shift
    reaching that p-value utility loss on the dataset at hand is used.
    ``mix_fractions`` is (oversell, undersell, correct).
    """

    kind: str
    offset: int | None = None
    target_loss: float | None = None
    mix_fractions: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    epsilon_actual: float | None = None

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.kind in (OVERSELL, UNDERSELL, MIXED):
            if self.offset is None and self.target_loss is None:
                raise ValueError(f"{self.kind} needs an offset or a target_loss")
            if self.offset is not None and self.offset < 1:
                raise ValueError("offset must be >= 1")
        fr = self.mix_fractions
        if len(fr) != 3 or min(fr) < 0 or not np.isclose(sum(fr), 1.0):
            raise ValueError("mix_fractions must be three non-negative numbers summing to 1")
        if self.kind == METADATA_EPSILON and not (self.epsilon_actual and self.epsilon_actual > 0):
            raise ValueError("metadata_epsilon needs a positive epsilon_actual")

    @property
    def is_correct(self) -> bool:
        return self.kind in (CORRECT, METADATA_EPSILON)

    def needs_window(self) -> bool:
        return self.kind in (OVERSELL, MIXED)


def shifted_loss(ranking: GwasTable, l: int, offset: int, start: int = 0) -> float:
    """p-value utility loss when ranks [start+offset, +l) are swapped with [start, +l)."""
    p = ranking.p_value
    return float(np.mean(p[start + offset:start + offset + l]) - np.mean(p[start:start + l]))


def offset_for_loss(ranking: GwasTable, l: int, target: float) -> int:
    """Smallest rank shift whose p-value utility loss reaches ``target``."""
    hi = len(ranking) - l
    if hi < 1 or shifted_loss(ranking, l, hi) < target:
        raise ValueError(f"utility loss {target} unreachable with {len(ranking)} SNPs and l={l}")
    lo = 1
    while lo < hi:
        mid = (lo + hi) // 2
        if shifted_loss(ranking, l, mid) >= target:
            hi = mid
        else:
            lo = mid + 1
    return lo


def resolve_offset(scenario: ErrorScenario, ranking: GwasTable, l: int) -> ErrorScenario:
    if scenario.offset is not None or scenario.kind not in (OVERSELL, UNDERSELL, MIXED):
        return scenario
    return dataclasses.replace(scenario, offset=offset_for_loss(ranking, l, scenario.target_loss))


@dataclass(frozen=True, eq=False)
class InjectionRecord:
    """What was injected: per-SNP labels and utility losses (evaluation only)."""

    labels: tuple[str, ...]
    correct: GwasTable
    losses: dict[str, float]
    scenario: ErrorScenario

    @property
    def truth_correct(self) -> np.ndarray:
        return np.array([lab == CORRECT for lab in self.labels])


def inject_errors(bundle: MetadataBundle, truth: GroundTruth, scenario: ErrorScenario, seed: int
                  ) -> tuple[MetadataBundle, InjectionRecord]:
    """Return a copy of ``bundle`` whose reported statistics follow ``scenario``.

    Reported SNP ids are never changed; only their attached statistic values
    are replaced by those of the SNP ``offset`` ranks stronger (oversell) or
    weaker (undersell) in the full ranking.
    """
    scenario = resolve_offset(scenario, truth.ranking, bundle.l)
    ranking = truth.ranking
    pos = ranking.index_of()
    ranks = np.array([pos[s] for s in bundle.reported.snp_ids])
    l = bundle.l
    if scenario.kind in (CORRECT, METADATA_EPSILON):
        kinds = np.array([CORRECT] * l, dtype=object)
    elif scenario.kind == MIXED:
        rng = rng_for(seed, "mixed-kinds")
        kinds = rng.choice(np.array([OVERSELL, UNDERSELL, CORRECT], dtype=object), size=l,
                           p=np.asarray(scenario.mix_fractions) / sum(scenario.mix_fractions))
    else:
        kinds = np.array([scenario.kind] * l, dtype=object)

    source = ranks.copy()
    off = scenario.offset or 0
    source[kinds == OVERSELL] -= off
    source[kinds == UNDERSELL] += off
    if np.any(source < 0) or np.any(source >= len(ranking)):
        raise ValueError(f"offset {off} exceeds the available ranks for this bundle")
    borrowed = ranking.take(source)
    reported = borrowed.with_values(snp_ids=bundle.reported.snp_ids)

    partial = bundle.partial
    if scenario.kind == METADATA_EPSILON:
        partial = build_partial_noisy_dataset(truth.dataset, list(partial.snp_ids), scenario.epsilon_actual,
                                              derive_seed(truth.seed, "partial"))
    correct = truth.ranking.take(ranks)
    norms = z_norms(correct.odds_ratio)
    losses = {kind: utility_loss(reported.column(kind), correct.column(kind), norms[kind]) for kind in "poa"}
    record = InjectionRecord(tuple(str(k) for k in kinds), correct, losses, scenario)
    return bundle.replace(reported=reported, partial=partial), record

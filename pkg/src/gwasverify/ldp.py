"""Local perturbation of genotypes and global perturbation of released statistics.

* direct-encoding randomized response over the genotype domain {0, 1, 2}
  and its unbiased count estimator;
* the sampling alternative that assembles a partial dataset from sample
  partitions without adding noise;
* Laplace noise on released per-SNP statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._seeding import commitment, derive_seed, rng_for
from .errors import DatasetFormatError, UnidentifiableError
from .genotype import CaseControlDataset, partition_dataset
from .gwas import P_FLOOR, SnpStatistics

GENOTYPE_DOMAIN = 3


@dataclass(frozen=True)
class RrParameters:
    epsilon: float
    d: int
    p_keep: float
    q_flip: float


def rr_probabilities(epsilon: float, d: int = GENOTYPE_DOMAIN) -> RrParameters:
    """Keep/flip probabilities of d-ary randomized response.

    p_keep = e^eps / (d - 1 + e^eps), q_flip = 1 / (d - 1 + e^eps), written in
    the overflow-free form for large ``epsilon``.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if d < 2:
        raise ValueError(f"domain size must be >= 2, got {d}")
    t = math.exp(-epsilon)
    denom = 1.0 + (d - 1) * t
    return RrParameters(float(epsilon), int(d), 1.0 / denom, t / denom)


def perturb_value(value: int, params: RrParameters, rng: np.random.Generator) -> int:
    if not 0 <= value < params.d:
        raise ValueError(f"value {value} outside domain [0, {params.d})")
    if rng.random() < params.p_keep:
        return int(value)
    return int((value + rng.integers(1, params.d)) % params.d)


def perturb_column(values: np.ndarray, params: RrParameters, rng: np.random.Generator) -> np.ndarray:
    """Vectorized ``perturb_value`` over one column."""
    values = np.asarray(values)
    keep = rng.random(values.shape) < params.p_keep
    shift = rng.integers(1, params.d, size=values.shape)
    return np.where(keep, values, (values + shift) % params.d).astype(values.dtype)


@dataclass(frozen=True)
class Mechanism:
    kind: str  # "rr" or "sampling"
    epsilon: float | None = None
    b: int | None = None

    def describe(self) -> str:
        return f"RR{{{self.epsilon:g}}}" if self.kind == "rr" else f"Sampling{{{self.b}}}"


@dataclass(frozen=True, eq=False)
class PartialNoisyDataset:
    """Perturbed (or sampled) genotypes for a chosen subset of SNPs."""

    snp_ids: tuple[str, ...]
    genotypes: np.ndarray
    labels: np.ndarray
    mechanism: Mechanism
    seed_commitment: str = ""
    sample_ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        g = np.array(self.genotypes, dtype=np.int8, copy=True)
        g.setflags(write=False)
        lab = np.array(self.labels, dtype=bool, copy=True)
        lab.setflags(write=False)
        if g.ndim != 2 or g.shape[1] != len(self.snp_ids) or g.shape[0] != lab.shape[0]:
            raise DatasetFormatError("partial dataset shape does not match its ids/labels")
        if len(self.snp_ids) < 1:
            raise DatasetFormatError("partial dataset needs at least one SNP")
        object.__setattr__(self, "genotypes", g)
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "snp_ids", tuple(self.snp_ids))
        if not self.sample_ids:
            w = len(str(g.shape[0]))
            object.__setattr__(self, "sample_ids", tuple(f"r{i:0{w}d}" for i in range(g.shape[0])))

    @property
    def k(self) -> int:
        return len(self.snp_ids)

    def as_dataset(self, phenotype: str = "trait", population: str = "unknown") -> CaseControlDataset:
        return CaseControlDataset(self.sample_ids, self.labels, self.snp_ids, self.genotypes,
                                  phenotype, population)

    def equals(self, other: "PartialNoisyDataset") -> bool:
        return (self.snp_ids == other.snp_ids and self.mechanism == other.mechanism
                and self.seed_commitment == other.seed_commitment
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.genotypes, other.genotypes))

    def write(self, path: str | Path) -> Path:
        """Write TSV plus a ``.mechanism`` key=value sidecar; returns the TSV path."""
        from .genotype import write_dataset

        path = Path(path)
        write_dataset(self.as_dataset(), path)
        side = mechanism_path(path)
        lines = [f"mechanism={self.mechanism.kind}"]
        if self.mechanism.kind == "rr":
            lines.append(f"epsilon={self.mechanism.epsilon!r}")
        else:
            lines.append(f"b={self.mechanism.b}")
        lines.append(f"seed_commitment={self.seed_commitment}")
        side.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    @classmethod
    def read(cls, path: str | Path) -> "PartialNoisyDataset":
        from .genotype import load_dataset

        path = Path(path)
        ds = load_dataset(path)
        side = mechanism_path(path)
        if not side.exists():
            raise DatasetFormatError(f"missing mechanism sidecar {side}")
        kv = {}
        for line in side.read_text(encoding="utf-8").splitlines():
            if line.strip():
                key, _, value = line.partition("=")
                kv[key.strip()] = value.strip()
        try:
            if kv["mechanism"] == "rr":
                mech = Mechanism("rr", epsilon=float(kv["epsilon"]))
            elif kv["mechanism"] == "sampling":
                mech = Mechanism("sampling", b=int(kv["b"]))
            else:
                raise KeyError("mechanism")
        except (KeyError, ValueError) as exc:
            raise DatasetFormatError(f"{side}: bad mechanism descriptor ({exc})") from None
        return cls(ds.snp_ids, ds.genotypes, ds.labels, mech, kv.get("seed_commitment", ""), ds.sample_ids)


def mechanism_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".mechanism")


def perturb_snps(genotypes: np.ndarray, snp_ids: Sequence[str], params: RrParameters, seed: int) -> np.ndarray:
    """Perturb each column with its own stream keyed by (seed, snp_id).

    A SNP's noise never depends on which other SNPs are perturbed alongside it.
    """
    out = np.empty_like(genotypes)
    for j, sid in enumerate(snp_ids):
        out[:, j] = perturb_column(genotypes[:, j], params, rng_for(seed, "rr", sid))
    return out


def build_partial_noisy_dataset(dataset: CaseControlDataset, snp_ids: Sequence[str], epsilon: float,
                                seed: int) -> PartialNoisyDataset:
    """Randomized-response copy of the ``snp_ids`` columns; labels copied as-is."""
    cols = dataset.columns(snp_ids)
    params = rr_probabilities(epsilon)
    noisy = perturb_snps(dataset.genotypes[:, cols], list(snp_ids), params, seed)
    return PartialNoisyDataset(tuple(snp_ids), noisy, dataset.labels, Mechanism("rr", epsilon=float(epsilon)),
                               commitment(seed))


def estimate_counts(observed: np.ndarray, params: RrParameters, postprocess: bool = True) -> np.ndarray:
    """Unbiased estimate of true value counts from randomized reports.

    ``observed`` has the domain on its last axis. The raw estimate is
    (c_i - n q) / (p - q); post-processing clamps negatives to zero and
    rescales so each estimate again sums to n.

    Raises:
        UnidentifiableError: p_keep equals q_flip.
    """
    c = np.asarray(observed, dtype=float)
    if c.shape[-1] != params.d:
        raise ValueError(f"last axis must have length {params.d}")
    gap = params.p_keep - params.q_flip
    if gap <= 0:
        raise UnidentifiableError("p_keep == q_flip; counts are not identifiable")
    n = c.sum(axis=-1, keepdims=True)
    raw = (c - n * params.q_flip) / gap
    if not postprocess:
        return raw
    clamped = np.maximum(raw, 0.0)
    total = clamped.sum(axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        scaled = np.where(total > 0, clamped * n / total, n / params.d)
    return scaled


def round_to_total(estimates: np.ndarray, totals: np.ndarray | None = None) -> np.ndarray:
    """Largest-remainder rounding along the last axis, preserving integer totals."""
    est = np.asarray(estimates, dtype=float)
    if totals is None:
        totals = np.rint(est.sum(axis=-1))
    totals = np.asarray(totals).astype(np.int64)
    base = np.floor(est).astype(np.int64)
    short = totals - base.sum(axis=-1)
    frac = est - base
    # stable order: larger remainder first, then lower genotype value
    order = np.argsort(-frac, axis=-1, kind="stable")
    ranks = np.argsort(order, axis=-1, kind="stable")
    return base + (ranks < short[..., None]).astype(np.int64)


def sample_partial_dataset(dataset: CaseControlDataset, snp_ids: Sequence[str], b: int,
                           seed: int) -> PartialNoisyDataset:
    """Assemble a partial dataset by drawing each SNP column from one of ``b`` sample partitions.

    Every partition keeps the case/control balance; each column is taken from
    an independently chosen partition and truncated to the smallest partition's
    case and control counts, so all columns share one row layout.
    """
    if b < 2:
        raise ValueError("b must be >= 2")
    if b > dataset.n // 2 or b > min(dataset.n_case, dataset.n_control):
        raise ValueError(f"b={b} too large for {dataset.n_case} cases / {dataset.n_control} controls")
    parts = partition_dataset(dataset, b, axis="samples", seed=derive_seed(seed, "sampling-partitions"))
    n_case = min(p.n_case for p in parts)
    n_ctrl = min(p.n_control for p in parts)
    cols = dataset.columns(snp_ids)
    rng = rng_for(seed, "sampling-choice")
    choice = rng.integers(0, b, size=len(cols))
    out = np.empty((n_case + n_ctrl, len(cols)), dtype=np.int8)
    blocks = []
    for p in parts:
        g = p.genotypes[:, p.columns(snp_ids)]
        blocks.append(np.vstack([g[p.labels][:n_case], g[~p.labels][:n_ctrl]]))
    for j, part in enumerate(choice):
        out[:, j] = blocks[part][:, j]
    labels = np.r_[np.ones(n_case, bool), np.zeros(n_ctrl, bool)]
    return PartialNoisyDataset(tuple(snp_ids), out, labels, Mechanism("sampling", b=int(b)), commitment(seed))


@dataclass(frozen=True)
class SensitivityModel:
    """Per-statistic sensitivity used to scale Laplace noise.

    MAF sensitivity defaults to 1/S (one case individual changes at most one
    allele pair out of 2S); p-value and odds-ratio bounds are user supplied.
    """

    p_value: float = 1.0
    odds_ratio: float = 1.0
    maf: float | None = None
    n_case: int | None = None

    def maf_sensitivity(self) -> float:
        if self.maf is not None:
            return self.maf
        if not self.n_case:
            raise ValueError("MAF sensitivity needs n_case or an explicit bound")
        return 1.0 / self.n_case


def laplace_perturb_statistics(stats: Sequence[SnpStatistics], epsilon_dp: float, sensitivity: SensitivityModel,
                               seed: int) -> list[SnpStatistics]:
    """Add independent Laplace(0, sensitivity / epsilon_dp) noise to p, OR and MAF.

    Results are clamped to their domains: p to [1e-300, 1], MAF to [0, 1],
    OR to (0, inf).
    """
    if not epsilon_dp > 0:
        raise ValueError(f"epsilon_dp must be positive, got {epsilon_dp}")
    scales = {
        "p_value": sensitivity.p_value / epsilon_dp,
        "odds_ratio": sensitivity.odds_ratio / epsilon_dp,
        "maf": sensitivity.maf_sensitivity() / epsilon_dp,
    }
    out = []
    for s in stats:
        rng = rng_for(seed, "laplace", s.snp_id)
        noise = {k: rng.laplace(0.0, v) for k, v in scales.items()}
        out.append(s.replace(
            p_value=float(min(max(s.p_value + noise["p_value"], P_FLOOR), 1.0)),
            odds_ratio=float(max(s.odds_ratio + noise["odds_ratio"], 1e-12)),
            maf=float(min(max(s.maf + noise["maf"], 0.0), 1.0)),
        ))
    return out

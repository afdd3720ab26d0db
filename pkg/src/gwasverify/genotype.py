"""Genotype data model, TSV I/O, synthetic case-control cohorts and splitting.

Genotypes are minor-allele counts in {0, 1, 2}. Labels are stored as a boolean
vector where ``True`` marks a case.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ._seeding import rng_for
from .errors import (
    DatasetFormatError,
    EmptyGroupError,
    GenotypeDomainError,
    InfeasibleConfigError,
)

logger = logging.getLogger(__name__)

CASE = "case"
CONTROL = "control"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CaseControlDataset:
    """An immutable n x m genotype matrix with case/control labels."""

    sample_ids: tuple[str, ...]
    labels: np.ndarray
    snp_ids: tuple[str, ...]
    genotypes: np.ndarray
    phenotype: str = "trait"
    population: str = "unknown"

    def __post_init__(self):
        sample_ids = tuple(str(s) for s in self.sample_ids)
        snp_ids = tuple(str(s) for s in self.snp_ids)
        labels = np.asarray(self.labels, dtype=bool).reshape(-1)
        g = np.asarray(self.genotypes)
        if g.ndim != 2:
            raise DatasetFormatError(f"genotype matrix must be 2-D, got shape {g.shape}")
        n, m = g.shape
        if len(sample_ids) != n or labels.shape[0] != n:
            raise DatasetFormatError(
                f"{n} genotype rows but {len(sample_ids)} sample ids and {labels.shape[0]} labels"
            )
        if len(snp_ids) != m:
            raise DatasetFormatError(f"{m} genotype columns but {len(snp_ids)} SNP ids")
        if len(set(snp_ids)) != m:
            raise DatasetFormatError("duplicate SNP ids")
        if g.size and (not np.issubdtype(g.dtype, np.integer) or g.min() < 0 or g.max() > 2):
            if not np.all(np.isin(g, (0, 1, 2))):
                raise GenotypeDomainError("genotype values must be in {0, 1, 2}")
        n_case = int(labels.sum())
        if n_case == 0 or n_case == n:
            raise EmptyGroupError(f"need both cases and controls, got {n_case} cases out of {n}")
        object.__setattr__(self, "sample_ids", sample_ids)
        object.__setattr__(self, "snp_ids", snp_ids)
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "genotypes", _frozen(g.astype(np.int8)))

    @property
    def n(self) -> int:
        return self.genotypes.shape[0]

    @property
    def m(self) -> int:
        return self.genotypes.shape[1]

    @property
    def n_case(self) -> int:
        return int(self.labels.sum())

    @property
    def n_control(self) -> int:
        return self.n - self.n_case

    @cached_property
    def snp_index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.snp_ids)}

    def columns(self, snp_ids: Iterable[str]) -> np.ndarray:
        """Column indices of ``snp_ids``; raises ``KeyError`` on unknown ids."""
        idx = self.snp_index
        out = []
        for s in snp_ids:
            if s not in idx:
                raise KeyError(f"unknown SNP id {s!r}")
            out.append(idx[s])
        return np.asarray(out, dtype=np.intp)

    def select_snps(self, snp_ids: Sequence[str]) -> "CaseControlDataset":
        cols = self.columns(snp_ids)
        return dataclasses.replace(
            self, snp_ids=tuple(self.snp_ids[c] for c in cols), genotypes=self.genotypes[:, cols]
        )

    def select_samples(self, rows: Sequence[int]) -> "CaseControlDataset":
        rows = np.asarray(rows, dtype=np.intp)
        return dataclasses.replace(
            self,
            sample_ids=tuple(self.sample_ids[r] for r in rows),
            labels=self.labels[rows],
            genotypes=self.genotypes[rows],
        )

    def with_labels(self, labels: np.ndarray) -> "CaseControlDataset":
        return dataclasses.replace(self, labels=np.asarray(labels, dtype=bool))

    def equals(self, other: "CaseControlDataset") -> bool:
        return (
            self.sample_ids == other.sample_ids
            and self.snp_ids == other.snp_ids
            and self.phenotype == other.phenotype
            and self.population == other.population
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.genotypes, other.genotypes)
        )


# -- TSV format --------------------------------------------------------------

def write_dataset(dataset: CaseControlDataset, path: str | Path) -> None:
    """Write ``dataset`` as TSV: ``sample_id  label  <snp_id...>``.

    Phenotype and population travel as ``#key=value`` lines above the header.
    """
    path = Path(path)
    lines = [
        f"#phenotype={dataset.phenotype}",
        f"#population={dataset.population}",
        "\t".join(("sample_id", "label") + dataset.snp_ids),
    ]
    digits = np.array(["0", "1", "2"])
    for sid, is_case, row in zip(dataset.sample_ids, dataset.labels, dataset.genotypes):
        lines.append("\t".join([sid, CASE if is_case else CONTROL, *digits[row]]))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_tsv(path: Path) -> tuple[dict, list[str], list[bool], list[str], np.ndarray]:
    meta = {"phenotype": "trait", "population": "unknown"}
    header = None
    sample_ids, labels, rows = [], [], []
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\r\n")
            if not line:
                continue
            if header is None and line.startswith("#"):
                key, sep, value = line[1:].partition("=")
                if sep:
                    meta[key.strip()] = value.strip()
                continue
            fields = line.split("\t")
            if header is None:
                if fields[:2] != ["sample_id", "label"]:
                    raise DatasetFormatError(f"{path}:{lineno}: header must start with 'sample_id\\tlabel'")
                header = fields[2:]
                continue
            if len(fields) != len(header) + 2:
                raise DatasetFormatError(
                    f"{path}:{lineno}: expected {len(header) + 2} fields, got {len(fields)}"
                )
            label = fields[1]
            if label not in (CASE, CONTROL):
                raise DatasetFormatError(f"{path}:{lineno}: label must be 'case' or 'control', got {label!r}")
            bad = [t for t in fields[2:] if t not in ("0", "1", "2")]
            if bad:
                raise GenotypeDomainError(f"{path}:{lineno}: genotype token {bad[0]!r} not in {{0,1,2}}")
            sample_ids.append(fields[0])
            labels.append(label == CASE)
            rows.append(fields[2:])
    if header is None:
        raise DatasetFormatError(f"{path}: missing header row")
    if not rows:
        raise EmptyGroupError(f"{path}: no samples")
    g = np.array(rows, dtype=np.int8).reshape(len(rows), len(header))
    return meta, sample_ids, labels, header, g


def load_dataset(path: str | Path, format: str = "tsv") -> CaseControlDataset:
    """Load a genotype file.

    Raises:
        DatasetFormatError: unsupported format or malformed row.
        GenotypeDomainError: a genotype token outside {0, 1, 2}.
        EmptyGroupError: no cases or no controls.
    """
    if format != "tsv":
        raise DatasetFormatError(f"unsupported genotype format {format!r}")
    meta, sample_ids, labels, header, g = _read_tsv(Path(path))
    return CaseControlDataset(
        sample_ids=tuple(sample_ids),
        labels=np.array(labels, dtype=bool),
        snp_ids=tuple(header),
        genotypes=g,
        phenotype=meta["phenotype"],
        population=meta["population"],
    )


def write_panel(genotypes: np.ndarray, snp_ids: Sequence[str], path: str | Path, population: str = "synthetic") -> None:
    """Write unlabelled reference genotypes in the dataset TSV layout (all rows ``control``)."""
    g = np.asarray(genotypes)
    width = len(str(g.shape[0]))
    digits = np.array(["0", "1", "2"])
    lines = [f"#population={population}", "\t".join(("sample_id", "label") + tuple(snp_ids))]
    for i, row in enumerate(g):
        lines.append("\t".join([f"p{i:0{width}d}", CONTROL, *digits[row]]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_panel(path: str | Path) -> tuple[tuple[str, ...], np.ndarray]:
    """Read a genotype file without requiring both groups: (snp_ids, genotypes)."""
    _, _, _, header, g = _read_tsv(Path(path))
    return tuple(header), g


# -- synthesis ---------------------------------------------------------------

# "neutral" draws baseline MAFs with density proportional to 1/q, so rare
# variants dominate as in real cohorts.
MAF_SPECTRA = ("uniform", "neutral")

@dataclass(frozen=True)
class SynthesisConfig:
    n_case: int = 60
    n_control: int = 60
    m: int = 5000
    n_associated: int = 20
    effect_range: tuple[float, float] = (0.15, 0.25)
    baseline_maf_range: tuple[float, float] = (0.05, 0.5)
    seed: int = 0
    ld_block_size: int = 1
    ld_flip_prob: float = 0.05
    maf_spectrum: str = "uniform"
    phenotype: str = "trait"
    population: str = "synthetic"
    snp_prefix: str = "snp"

    def __post_init__(self):
        if self.n_case < 1 or self.n_control < 1:
            raise InfeasibleConfigError("n_case and n_control must be positive")
        if self.m < 1:
            raise InfeasibleConfigError("m must be positive")
        if not 0 <= self.n_associated <= self.m:
            raise InfeasibleConfigError("n_associated must lie in [0, m]")
        lo, hi = self.baseline_maf_range
        if not (0 < lo <= hi <= 0.5):
            raise InfeasibleConfigError("baseline_maf_range must lie in (0, 0.5]")
        if self.effect_range[0] > self.effect_range[1]:
            raise InfeasibleConfigError("effect_range must be ordered (low, high)")
        if self.maf_spectrum not in MAF_SPECTRA:
            raise InfeasibleConfigError(f"maf_spectrum must be one of {MAF_SPECTRA}")
        if self.ld_block_size < 1 or not 0 <= self.ld_flip_prob <= 1:
            raise InfeasibleConfigError("invalid LD block settings")
        if self.ld_block_size > 1:
            n_blocks = -(-self.m // self.ld_block_size)
            if self.n_associated > n_blocks:
                raise InfeasibleConfigError("block-LD mode needs n_associated <= number of blocks")

    def replace(self, **changes) -> "SynthesisConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        out = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(repr(float(x)) for x in v)
            out.append(f"{f.name}={v}")
        return "\n".join(out) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SynthesisConfig":
        """Parse a flat ``key=value`` file. Pairs are comma separated."""
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        kwargs = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or key not in types:
                raise InfeasibleConfigError(f"line {lineno}: unknown or malformed entry {raw!r}")
            t = str(types[key])
            try:
                if t.startswith("tuple"):
                    parts = [float(x) for x in value.split(",")]
                    if len(parts) != 2:
                        raise ValueError
                    kwargs[key] = (parts[0], parts[1])
                elif t == "int":
                    kwargs[key] = int(value)
                elif t == "float":
                    kwargs[key] = float(value)
                else:
                    kwargs[key] = value
            except ValueError:
                raise InfeasibleConfigError(f"line {lineno}: bad value for {key}: {value!r}") from None
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "SynthesisConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class SnpModel:
    """Per-SNP generating frequencies behind a synthetic cohort."""

    snp_ids: tuple[str, ...]
    control_maf: np.ndarray
    case_maf: np.ndarray
    associated: np.ndarray = field(repr=False)


def snp_model(config: SynthesisConfig) -> SnpModel:
    """Draw per-SNP control/case minor-allele frequencies for ``config``.

    Raises:
        InfeasibleConfigError: an effect gap cannot fit inside [0, 0.5].
    """
    rng = rng_for(config.seed, "snp-model")
    m = config.m
    lo, hi = config.baseline_maf_range
    u = rng.uniform(0.0, 1.0, size=m)
    control = lo + (hi - lo) * u if config.maf_spectrum == "uniform" else lo * (hi / lo) ** u
    case = control.copy()

    width = -(-m // config.ld_block_size)
    leaders = np.arange(0, m, config.ld_block_size) if config.ld_block_size > 1 else np.arange(m)
    associated = np.sort(rng.choice(leaders[:width], size=config.n_associated, replace=False))
    if associated.size:
        gaps = rng.uniform(*config.effect_range, size=associated.size)
        # control MAF must keep control + gap inside (0, 0.5]
        c_lo = np.maximum(lo, np.maximum(1e-9, 1e-9 - gaps))
        c_hi = np.minimum(hi, 0.5 - gaps)
        if np.any(c_lo > c_hi):
            raise InfeasibleConfigError(
                f"effect_range {config.effect_range} pushes MAF outside [0, 0.5] "
                f"for baseline range {config.baseline_maf_range}"
            )
        control[associated] = rng.uniform(c_lo, c_hi)
        case[associated] = control[associated] + gaps
    ids = tuple(f"{config.snp_prefix}{i:06d}" for i in range(m))
    return SnpModel(ids, control, case, associated)


def _draw(rng: np.random.Generator, maf: np.ndarray, rows: int) -> np.ndarray:
    return rng.binomial(2, np.broadcast_to(maf, (rows, maf.size))).astype(np.int8)


def _apply_blocks(g: np.ndarray, config: SynthesisConfig, rng: np.random.Generator) -> np.ndarray:
    size = config.ld_block_size
    if size <= 1:
        return g
    g = g.copy()
    for start in range(0, g.shape[1], size):
        lead = g[:, start]
        for j in range(start + 1, min(start + size, g.shape[1])):
            flip = rng.random(g.shape[0]) < config.ld_flip_prob
            shift = rng.integers(1, 3, size=g.shape[0])
            g[:, j] = np.where(flip, (lead + shift) % 3, lead)
    return g


def synthesize_dataset(config: SynthesisConfig) -> CaseControlDataset:
    """Draw a synthetic case-control cohort.

    Associated SNPs get case MAF = control MAF + gap with the gap drawn from
    ``effect_range``; all other SNPs share one MAF across groups. Genotypes
    follow Hardy-Weinberg (Binomial(2, MAF)). Output depends only on
    ``config``.
    """
    model = snp_model(config)
    cases = _draw(rng_for(config.seed, "genotypes", "case"), model.case_maf, config.n_case)
    controls = _draw(rng_for(config.seed, "genotypes", "control"), model.control_maf, config.n_control)
    g = np.vstack([cases, controls])
    g = _apply_blocks(g, config, rng_for(config.seed, "ld-blocks"))
    n = config.n_case + config.n_control
    width = len(str(n))
    return CaseControlDataset(
        sample_ids=tuple(f"s{i:0{width}d}" for i in range(n)),
        labels=np.r_[np.ones(config.n_case, bool), np.zeros(config.n_control, bool)],
        snp_ids=model.snp_ids,
        genotypes=g,
        phenotype=config.phenotype,
        population=config.population,
    )


def draw_population(config: SynthesisConfig, n: int, seed: int) -> np.ndarray:
    """Genotypes of ``n`` unaffected individuals from the population behind ``config``.

    Columns line up with ``synthesize_dataset(config).snp_ids``. Used as a
    public reference panel and as outsider cohorts for membership attacks.
    """
    model = snp_model(config)
    g = _draw(rng_for(seed, "population", config.seed), model.control_maf, n)
    return _apply_blocks(g, config, rng_for(seed, "population-ld", config.seed))


# -- labelling and partitioning ----------------------------------------------

def partition_dataset(
    dataset: CaseControlDataset, parts: int, axis: str = "snps", seed: int = 0
) -> list[CaseControlDataset]:
    """Split ``dataset`` into ``parts`` disjoint pieces.

    ``axis="snps"`` gives disjoint SNP sets whose sizes differ by at most one.
    ``axis="samples"`` splits cases and controls separately so every part keeps
    the case/control balance to within one sample.
    """
    if parts < 2:
        raise ValueError("parts must be >= 2")
    rng = rng_for(seed, "partition", axis)
    if axis == "snps":
        if parts > dataset.m:
            raise ValueError(f"cannot split {dataset.m} SNPs into {parts} parts")
        perm = rng.permutation(dataset.m)
        out = []
        for chunk in np.array_split(perm, parts):
            cols = np.sort(chunk)
            out.append(dataset.select_snps([dataset.snp_ids[c] for c in cols]))
        return out
    if axis == "samples":
        if parts > min(dataset.n_case, dataset.n_control):
            raise ValueError(
                f"cannot split {dataset.n_case} cases / {dataset.n_control} controls into {parts} parts"
            )
        case_rows = rng.permutation(np.flatnonzero(dataset.labels))
        ctrl_rows = rng.permutation(np.flatnonzero(~dataset.labels))
        case_chunks = np.array_split(case_rows, parts)
        # give the larger control chunks to the smaller case chunks
        ctrl_chunks = np.array_split(ctrl_rows, parts)[::-1] if dataset.n_case % parts else np.array_split(ctrl_rows, parts)
        return [
            dataset.select_samples(np.sort(np.r_[c, k])) for c, k in zip(case_chunks, ctrl_chunks)
        ]
    raise ValueError(f"axis must be 'snps' or 'samples', got {axis!r}")


def random_label(dataset: CaseControlDataset, seed: int = 0) -> CaseControlDataset:
    """Replace labels with a uniformly random balanced case/control assignment."""
    if dataset.n % 2:
        raise ValueError(f"random labelling needs an even sample count, got {dataset.n}")
    rng = rng_for(seed, "random-label")
    labels = np.zeros(dataset.n, dtype=bool)
    labels[rng.permutation(dataset.n)[: dataset.n // 2]] = True
    return dataset.with_labels(labels)

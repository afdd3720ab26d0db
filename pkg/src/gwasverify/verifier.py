"""Verifier side: reconstruct statistics from the partial noisy dataset,
compare deviations against the expected deviation on a public dataset, and
classify each reported statistic against calibrated cut-offs.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._seeding import derive_seed
from .errors import CalibrationError, CalibrationMismatchError, DegenerateTableError, UndefinedDeviationError
from .genotype import CaseControlDataset
from .gwas import GwasTable, genotype_counts, rank_snps, statistics_arrays
from .ldp import (
    PartialNoisyDataset,
    build_partial_noisy_dataset,
    estimate_counts,
    round_to_total,
    rr_probabilities,
    sample_partial_dataset,
)
from .metadata import (
    CORRECT,
    OVERSELL,
    UNDERSELL,
    ErrorScenario,
    MetadataBundle,
    build_metadata,
    inject_errors,
    resolve_offset,
)
from .metrics import confusion_metrics

logger = logging.getLogger(__name__)

KINDS = ("o", "p", "a")
KIND_NAMES = {"o": "odds_ratio", "p": "p_value", "a": "maf"}
GRID_SIZE = 512
STRONG_P = 0.05
PAIRINGS = ("rank", "mean")


# -- reconstruction -------------------------------------------------------------

def reconstruct_statistics(partial: PartialNoisyDataset, epsilon_declared: float | None,
                           continuity_correction: bool = True) -> GwasTable:
    """Statistics recomputed from a partial dataset.

    For randomized response, genotype counts are estimated per group with the
    declared epsilon, clamped, rescaled and rounded (largest remainder) so
    each group keeps its exact size. Sampled partial datasets are used as-is.

    Raises:
        DegenerateTableError: without continuity correction, when an estimated
            2x2 table has an empty cell.
    """
    case, ctrl = genotype_counts(partial.genotypes, partial.labels)
    if partial.mechanism.kind == "rr":
        eps = epsilon_declared if epsilon_declared is not None else partial.mechanism.epsilon
        params = rr_probabilities(eps)
        case = round_to_total(estimate_counts(case.T, params)).T
        ctrl = round_to_total(estimate_counts(ctrl.T, params)).T
    r = statistics_arrays(case, ctrl, continuity_correction)
    if not continuity_correction and np.any(r["degenerate"]):
        bad = [partial.snp_ids[i] for i in np.flatnonzero(r["degenerate"])]
        raise DegenerateTableError(f"degenerate estimated tables for {bad[:5]}")
    return GwasTable(np.asarray(partial.snp_ids), r["odds_ratio"], r["p_value"], r["maf"], r["se"],
                     r["ci_low"], r["ci_high"], r["z"])


# -- deviation metrics ------------------------------------------------------------

def deviation(kind: str, reported: float, reconstructed: float) -> float:
    """Relative error between a reported and a reconstructed statistic.

    p-values are compared on the -ln scale; OR and MAF on the raw scale.

    Raises:
        UndefinedDeviationError: reported p-value of 1, or reported OR/MAF of 0.
    """
    value = float(deviations(kind, np.array([reported]), np.array([reconstructed]))[0])
    if math.isnan(value):
        raise UndefinedDeviationError(f"deviation undefined for {kind}: reported={reported}")
    return value


def deviations(kind: str, reported: np.ndarray, reconstructed: np.ndarray) -> np.ndarray:
    """Vectorized deviation; undefined entries come back as NaN."""
    rep = np.asarray(reported, dtype=float)
    rec = np.asarray(reconstructed, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        if kind == "p":
            lr, lh = -np.log(rep), -np.log(rec)
            out = np.abs(lr - lh) / lr
            bad = ~(rep < 1) | ~(rep > 0) | np.isnan(rec)
        elif kind in ("o", "a"):
            out = np.abs(rep - rec) / rep
            bad = ~(rep != 0) | np.isnan(rec) | np.isnan(rep)
        else:
            raise ValueError(f"unknown statistic kind {kind!r}")
    return np.where(bad, np.nan, out)


def relative_change(re_d: float, re_e: float) -> float:
    """|re_d - re_e| / re_e. Equal deviations give 0, including both zero;
    ``re_e == 0`` with ``re_d > 0`` is undefined (NaN)."""
    return float(relative_changes(np.array([re_d]), np.array([re_e]))[0])


def relative_changes(re_d: np.ndarray, re_e: np.ndarray) -> np.ndarray:
    re_d = np.asarray(re_d, dtype=float)
    re_e = np.asarray(re_e, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.abs(re_d - re_e) / re_e
    phi = np.where(re_d == re_e, 0.0, phi)
    return np.where(re_e > 0, phi, np.where(re_d == re_e, 0.0, np.nan))


@dataclass(frozen=True)
class ExpectedDeviation:
    """Per-rank expected deviation (RE on the public dataset) for each statistic."""

    p: np.ndarray
    o: np.ndarray
    a: np.ndarray
    epsilon: float | None
    l: int
    trials: int
    warnings: tuple[str, ...] = ()
    per_trial: dict = field(default_factory=dict, repr=False)

    def of(self, kind: str) -> np.ndarray:
        return getattr(self, kind)


def expected_deviation(public: CaseControlDataset, l: int, epsilon: float | None, seed: int, trials: int = 5,
                       n: int | None = None, b: int | None = None) -> ExpectedDeviation:
    """Expected per-rank deviation on a public dataset.

    The top-l SNPs of ``public`` are perturbed with ``epsilon`` (or sampled
    from ``b`` partitions), reconstructed and compared with their clean
    statistics; RE values are averaged over ``trials`` independent draws.
    """
    if b is None and epsilon is None:
        raise ValueError("expected deviation needs epsilon or b")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if public.n_case != public.n_control:
        raise ValueError(f"public dataset must be balanced, got {public.n_case}/{public.n_control}")
    if n is not None and public.n != n:
        raise ValueError(f"public dataset has {public.n} samples, researcher's has {n}")
    ranking = rank_snps(public)
    if l > len(ranking):
        raise ValueError(f"l={l} exceeds the {len(ranking)} SNPs of the public dataset")
    top = ranking.head(l)
    warnings = []
    if float(np.mean(top.p_value)) >= STRONG_P:
        msg = f"public dataset lacks strong associations: mean top-{l} p-value {np.mean(top.p_value):.3g}"
        logger.warning(msg)
        warnings.append(msg)
    ids = top.snp_ids.tolist()
    runs = {kind: [] for kind in KINDS}
    for t in range(trials):
        if b is None:
            partial = build_partial_noisy_dataset(public, ids, epsilon, derive_seed(seed, "expected", t))
        else:
            partial = sample_partial_dataset(public, ids, b, derive_seed(seed, "expected", t))
        rec = reconstruct_statistics(partial, epsilon)
        for kind in KINDS:
            runs[kind].append(deviations(kind, top.column(kind), rec.column(kind)))
    means = {kind: np.mean(np.vstack(runs[kind]), axis=0) for kind in KINDS}
    return ExpectedDeviation(means["p"], means["o"], means["a"], None if epsilon is None else float(epsilon), l,
                             trials, tuple(warnings),
                             {k: np.vstack(v) for k, v in runs.items()})


def pairing_order(reported: GwasTable) -> np.ndarray:
    """Rank of each reported statistic by reported p-value (ties by SNP id).

    The j-th strongest reported statistic is compared with the j-th strongest
    public-dataset statistic.
    """
    order = np.lexsort((reported.snp_ids, reported.p_value))
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return rank


# -- classification -----------------------------------------------------------------

CORRECT_VERDICT = "Correct"
INCORRECT_VERDICT = "Incorrect"
UNVERIFIED_VERDICT = "Unverified"


def strength(kind: str, value: float | np.ndarray):
    return -np.log(value) if kind == "p" else value


def classify_statistic(phi: float, tau: float, reported: float, reconstructed: float, kind: str
                       ) -> tuple[str, str]:
    """Verdict and direction for one statistic.

    Correct iff phi <= tau. Otherwise the direction is Oversell when the
    reported value is stronger than the reconstructed one, else Undersell.
    """
    if tau < 0:
        raise ValueError("tau must be non-negative")
    if not math.isnan(phi) and phi <= tau:
        return CORRECT_VERDICT, "n/a"
    with np.errstate(divide="ignore"):
        gap = strength(kind, reported) - strength(kind, reconstructed)
    return INCORRECT_VERDICT, ("Oversell" if gap > 0 else "Undersell")


# -- cut-off calibration ----------------------------------------------------------------

@dataclass(frozen=True)
class CutoffSet:
    tau_o: float
    tau_p: float
    tau_a: float
    record: dict = field(default_factory=dict)

    def tau(self, kind: str) -> float:
        return {"o": self.tau_o, "p": self.tau_p, "a": self.tau_a}[kind]

    @property
    def epsilon(self) -> float | None:
        return self.record.get("epsilon")

    @property
    def l(self) -> int | None:
        return self.record.get("l")

    def to_json(self) -> str:
        doc = {"tau_o": self.tau_o, "tau_p": self.tau_p, "tau_a": self.tau_a, "record": self.record}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "CutoffSet":
        doc = json.loads(text)
        return cls(float(doc["tau_o"]), float(doc["tau_p"]), float(doc["tau_a"]), doc.get("record", {}))


def select_cutoff(phi_correct: np.ndarray, phi_incorrect: np.ndarray, grid_size: int = GRID_SIZE
                  ) -> tuple[float, dict]:
    """Threshold minimizing FN rate + FP rate over an even grid.

    NaN entries (undefined relative change) count as flagged at every
    threshold. Ties go to the larger threshold; with perfect separation the
    midpoint between the two classes is returned.
    """
    pc = np.asarray(phi_correct, dtype=float)
    pi = np.asarray(phi_incorrect, dtype=float)
    if pc.size == 0 or pi.size == 0:
        raise CalibrationError("calibration needs both correct and incorrect examples")
    pooled = np.concatenate([pc, pi])
    pooled = pooled[np.isfinite(pooled)]
    if pooled.size == 0 or np.all(pooled == pooled[0]):
        raise CalibrationError("degenerate relative-change distributions; cannot calibrate")
    grid = np.linspace(pooled.min(), pooled.max(), grid_size)
    fc, fi = pc[np.isfinite(pc)], pi[np.isfinite(pi)]
    fn = 1.0 - np.searchsorted(np.sort(fc), grid, side="right") / pc.size
    fp = np.searchsorted(np.sort(fi), grid, side="right") / pi.size
    err = fn + fp
    best = np.flatnonzero(np.isclose(err, err.min(), rtol=0, atol=1e-12))
    tau = float(grid[best[-1]])
    if err.min() == 0 and fc.size and fi.size and fc.max() < fi.min():
        tau = float((fc.max() + fi.min()) / 2)
    return max(tau, 0.0), {"fn_rate": float(fn[best[-1]]), "fp_rate": float(fp[best[-1]]),
                           "grid_min": float(grid[0]), "grid_max": float(grid[-1]), "grid_size": grid_size}


@dataclass(frozen=True, eq=False)
class PhiSample:
    """Relative changes of one bundle with its evaluation labels."""

    phi: dict
    reported: GwasTable
    reconstructed: GwasTable
    labels: tuple[str, ...]
    covered: np.ndarray


def bundle_phi(bundle: MetadataBundle, expected: ExpectedDeviation, epsilon: float | None = None,
               pairing: str = "rank") -> dict:
    """Per-statistic deviation and relative change for every reported SNP.

    With ``pairing="rank"`` the j-th strongest reported statistic is compared
    with the j-th public expected deviation; ``"mean"`` uses the average
    expected deviation of the statistic kind for every SNP. Reported SNPs
    without partial data come back with NaN and ``covered`` False.
    """
    if pairing not in PAIRINGS:
        raise ValueError(f"pairing must be one of {PAIRINGS}, got {pairing!r}")
    eps = bundle.epsilon_declared if epsilon is None else epsilon
    rec_all = reconstruct_statistics(bundle.partial, eps)
    pos = rec_all.index_of()
    ids = bundle.reported.snp_ids.tolist()
    covered = np.array([s in pos for s in ids])
    idx = np.array([pos.get(s, 0) for s in ids], dtype=np.intp)
    rec = rec_all.take(idx)
    rank = pairing_order(bundle.reported)
    if len(expected.p) < len(ids):
        raise CalibrationMismatchError(f"expected deviation has {len(expected.p)} ranks, bundle reports {len(ids)}")
    out = {"reconstructed": rec, "covered": covered, "reported": bundle.reported}
    for kind in KINDS:
        re_d = deviations(kind, bundle.reported.column(kind), rec.column(kind))
        re_e = expected.of(kind)[rank]
        if pairing == "mean":
            re_e = np.full(rank.shape, float(np.mean(expected.of(kind)[:len(ids)])))
        phi = relative_changes(re_d, re_e)
        out[kind] = {"re_d": np.where(covered, re_d, np.nan), "re_e": re_e, "phi": np.where(covered, phi, np.nan)}
    return out


def scenario_phi(dataset: CaseControlDataset, expected: ExpectedDeviation, l: int, epsilon: float | None,
                 scenario: ErrorScenario, seed: int, ranking: GwasTable | None = None,
                 pairing: str = "rank", start_rank: int | None = None, transform=None,
                 **build_kwargs) -> tuple[dict, "InjectionRecord"]:
    """Build a bundle from a labelled dataset, inject ``scenario`` and compute its phi values.

    By default an oversold report's window starts ``offset`` ranks down the
    ranking; ``start_rank`` (or ``ranks`` among ``build_kwargs``) overrides
    it. ``transform(bundle)`` may rewrite the injected bundle before
    verification, e.g. to add noise to the released statistics.
    """
    if ranking is None:
        ranking = rank_snps(dataset)
    scenario = resolve_offset(scenario, ranking, l)
    if start_rank is None:
        start_rank = scenario.offset if scenario.needs_window() else 0
    bundle, truth = build_metadata(dataset, l, l, epsilon, derive_seed(seed, "bundle"), start_rank=start_rank,
                                   ranking=ranking, **build_kwargs)
    bundle, record = inject_errors(bundle, truth, scenario, derive_seed(seed, "inject"))
    if transform is not None:
        bundle = transform(bundle)
    return bundle_phi(bundle, expected, epsilon, pairing), record


def calibrate_cutoffs(f_splits: Sequence[CaseControlDataset], public: CaseControlDataset, l: int,
                      epsilon: float | None, scenario_sweep: Sequence[ErrorScenario], seed: int, trials: int = 5,
                      grid_size: int = GRID_SIZE, expected: ExpectedDeviation | None = None,
                      pairing: str = "rank", b: int | None = None) -> CutoffSet:
    """Cut-offs from labelled calibration splits.

    Each split simulates every scenario of ``scenario_sweep``; relative
    changes are pooled into a correct and an incorrect class per statistic
    and the threshold minimizing FN rate + FP rate is kept.

    Raises:
        CalibrationError: fewer than two splits, a sweep lacking either class,
            or degenerate distributions.
    """
    if len(f_splits) < 2:
        raise CalibrationError("need at least two calibration splits")
    if not any(s.is_correct for s in scenario_sweep) or all(s.is_correct for s in scenario_sweep):
        raise CalibrationError("scenario sweep must contain correct and incorrect scenarios")
    if expected is None:
        expected = expected_deviation(public, l, epsilon, derive_seed(seed, "calib-expected"), trials, b=b)
    pools = {kind: {True: [], False: []} for kind in KINDS}
    for si, split in enumerate(f_splits):
        ranking = rank_snps(split)
        for ci, scenario in enumerate(scenario_sweep):
            res, record = scenario_phi(split, expected, l, epsilon, scenario, derive_seed(seed, "calib", si, ci),
                                       ranking=ranking, pairing=pairing, b=b)
            truth = record.truth_correct
            for kind in KINDS:
                phi = res[kind]["phi"][res["covered"]]
                t = truth[res["covered"]]
                pools[kind][True].append(phi[t])
                pools[kind][False].append(phi[~t])
    taus, details = {}, {}
    for kind in KINDS:
        tau, info = select_cutoff(np.concatenate(pools[kind][True]), np.concatenate(pools[kind][False]), grid_size)
        taus[kind], details[kind] = tau, info
    record = {
        "epsilon": None if epsilon is None else float(epsilon),
        "b": b,
        "l": int(l),
        "splits": len(f_splits),
        "split_sizes": [s.m for s in f_splits],
        "public_n": public.n,
        "public_m": public.m,
        "trials": trials,
        "pairing": pairing,
        "seed": int(seed),
        "scenario_sweep": [scenario_text(s) for s in scenario_sweep],
        "selection": details,
        "warnings": list(expected.warnings),
    }
    return CutoffSet(taus["o"], taus["p"], taus["a"], record)


def scenario_text(s: ErrorScenario) -> str:
    parts = [s.kind]
    if s.offset is not None:
        parts.append(f"offset={s.offset}")
    if s.target_loss is not None:
        parts.append(f"loss={s.target_loss:g}")
    if s.kind == "mixed":
        parts.append("mix=" + "/".join(f"{x:g}" for x in s.mix_fractions))
    if s.epsilon_actual is not None:
        parts.append(f"eps_actual={s.epsilon_actual:g}")
    return ":".join(parts)


# -- full verification ---------------------------------------------------------------------

REPORT_FIELDS = ("snp_id", "statistic", "phi", "tau", "verdict", "direction")


@dataclass(frozen=True, eq=False)
class VerificationReport:
    """One row per reported SNP x statistic."""

    rows: tuple[dict, ...]
    summary: dict = field(default_factory=dict)

    def verdicts(self, kind: str) -> list[str]:
        name = KIND_NAMES[kind]
        return [r["verdict"] for r in self.rows if r["statistic"] == name]

    def directions(self, kind: str) -> list[str]:
        name = KIND_NAMES[kind]
        return [r["direction"] for r in self.rows if r["statistic"] == name]

    def phis(self, kind: str) -> np.ndarray:
        name = KIND_NAMES[kind]
        return np.array([r["phi"] for r in self.rows if r["statistic"] == name], dtype=float)

    @property
    def all_correct(self) -> bool:
        return all(r["verdict"] == CORRECT_VERDICT for r in self.rows)

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_FIELDS)
            for r in self.rows:
                w.writerow([r["snp_id"], r["statistic"], repr(float(r["phi"])), repr(float(r["tau"])),
                            r["verdict"], r["direction"]])

    def summary_json(self) -> str:
        return json.dumps(self.summary, indent=2, sort_keys=True, default=_json_default) + "\n"

    def with_truth(self, truth_correct: Sequence[bool]) -> "VerificationReport":
        """Attach TPR/TNR/accuracy per statistic given per-SNP ground truth."""
        truth = np.asarray(truth_correct, dtype=bool)
        summary = dict(self.summary)
        for kind in KINDS:
            v = np.array([x == CORRECT_VERDICT for x in self.verdicts(kind)])
            summary[f"metrics_{KIND_NAMES[kind]}"] = confusion_metrics(truth, v).as_dict()
        return VerificationReport(self.rows, summary)


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


def verify_bundle(bundle: MetadataBundle, public_e: CaseControlDataset, cutoffs: CutoffSet, trials: int = 5,
                  seed: int = 0, expected: ExpectedDeviation | None = None) -> VerificationReport:
    """Classify every reported statistic of ``bundle``.

    Raises:
        CalibrationMismatchError: the cut-offs were calibrated for another
            epsilon or l.
    """
    eps = bundle.epsilon_declared
    b = None
    if bundle.partial.mechanism.kind == "rr":
        if cutoffs.epsilon is None or eps is None or not math.isclose(cutoffs.epsilon, eps):
            raise CalibrationMismatchError(f"cut-offs calibrated for epsilon={cutoffs.epsilon}, bundle declares {eps}")
    else:
        b = bundle.partial.mechanism.b
        if cutoffs.record.get("b") != b:
            raise CalibrationMismatchError(f"cut-offs calibrated for b={cutoffs.record.get('b')}, bundle sampled b={b}")
    if cutoffs.l is not None and cutoffs.l != bundle.l:
        raise CalibrationMismatchError(f"cut-offs calibrated for l={cutoffs.l}, bundle reports l={bundle.l}")
    if expected is None:
        expected = expected_deviation(public_e, bundle.l, eps, derive_seed(seed, "expected"), trials, n=bundle.n,
                                      b=b)
    res = bundle_phi(bundle, expected, pairing=cutoffs.record.get("pairing", "rank"))
    rec = res["reconstructed"]
    rows = []
    counts = {}
    for kind in KINDS:
        tau = cutoffs.tau(kind)
        rep_vals = bundle.reported.column(kind)
        rec_vals = rec.column(kind)
        phis = res[kind]["phi"]
        n_bad = 0
        for j, sid in enumerate(bundle.reported.snp_ids.tolist()):
            if not res["covered"][j]:
                verdict, direction = UNVERIFIED_VERDICT, "n/a"
            else:
                verdict, direction = classify_statistic(phis[j], tau, rep_vals[j], rec_vals[j], kind)
            n_bad += verdict == INCORRECT_VERDICT
            rows.append({"snp_id": sid, "statistic": KIND_NAMES[kind], "phi": float(phis[j]), "tau": tau,
                         "verdict": verdict, "direction": direction,
                         "reason": "undefined-phi" if np.isnan(phis[j]) and res["covered"][j] else ""})
        counts[KIND_NAMES[kind]] = {"incorrect": int(n_bad), "total": bundle.l}
    summary = {
        "epsilon": eps,
        "l": bundle.l,
        "k": bundle.k,
        "mechanism": bundle.partial.mechanism.describe(),
        "tau": {"odds_ratio": cutoffs.tau_o, "p_value": cutoffs.tau_p, "maf": cutoffs.tau_a},
        "counts": counts,
        "all_correct": all(r["verdict"] == CORRECT_VERDICT for r in rows),
        "warnings": list(expected.warnings),
    }
    return VerificationReport(tuple(rows), summary)


def classify_arrays(phi: np.ndarray, tau: float, reported: np.ndarray, reconstructed: np.ndarray, kind: str
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``classify_statistic``: (is_correct, is_oversell)."""
    phi = np.asarray(phi, dtype=float)
    ok = np.isfinite(phi) & (phi <= tau)
    with np.errstate(divide="ignore", invalid="ignore"):
        gap = strength(kind, np.asarray(reported, float)) - strength(kind, np.asarray(reconstructed, float))
    return ok, (~ok) & (gap > 0)

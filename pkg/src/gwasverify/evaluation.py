"""Experiment orchestration over grids of privacy and error settings.

Every repetition ("trial") of an experiment synthesizes its own research
dataset D, public dataset E and calibration dataset F, calibrates cut-offs on
F's splits and verifies simulated reports built from D. Seeds come from the
root seed by hashing labels (trial index, grid coordinates), never from a
running counter, so dropping a grid cell leaves all other cells untouched.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._seeding import derive_seed
from .audit import EDIT_DISTANCE, LRT, PowerResult, draw_cohorts, power_curve, write_power_csv
from .errors import GwasVerifyError, SchemaError
from .genotype import CaseControlDataset, SynthesisConfig, draw_population, partition_dataset, random_label, synthesize_dataset
from .gwas import GwasTable, rank_snps
from .ldp import SensitivityModel, build_partial_noisy_dataset, laplace_perturb_statistics
from .metadata import (
    CORRECT,
    METADATA_EPSILON,
    MIXED,
    OVERSELL,
    UNDERSELL,
    ErrorScenario,
    InjectionRecord,
    build_metadata,
    ld_prune,
)
from .metrics import confusion_metrics, utility_loss, z_norms
from .verifier import (
    KIND_NAMES,
    KINDS,
    CutoffSet,
    ExpectedDeviation,
    bundle_phi,
    calibrate_cutoffs,
    classify_arrays,
    expected_deviation,
    scenario_phi,
)

logger = logging.getLogger(__name__)

EXPERIMENTS = ("epsilon", "strong", "mixed", "metadata_epsilon", "dp", "sampling", "attack")
WEAK_P = 0.08
STRONG_P = 0.05

TRIAL_FIELDS = ("experiment", "trial", "epsilon", "l", "scenario", "param", "statistic", "target_loss",
                "utility_loss", "tp", "fp", "tn", "fn", "tpr", "tnr", "accuracy", "accuracy3", "status")
AGG_FIELDS = ("experiment", "epsilon", "l", "scenario", "param", "statistic", "target_loss", "utility_loss",
              "tpr", "tpr_sd", "tnr", "tnr_sd", "accuracy", "accuracy3", "trials", "status")
SWEEP_FIELDS = ("experiment", "epsilon", "l", "param", "statistic", "target_loss", "utility_loss", "tnr")
_GROUP = ("experiment", "epsilon", "l", "scenario", "param", "statistic", "target_loss")


@dataclass(frozen=True)
class AttackSettings:
    values: tuple[int, ...] = (20, 40, 60, 80, 100)
    epsilons: tuple[float, ...] = (1.0, 3.0, 5.0)
    reps: int = 50
    cohort_size: int = 25
    panel_size: int = 1000
    outsiders: int = 500
    per_allele: bool = False


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment grid. ``trials`` is the number of independent
    repetitions of the whole pipeline; ``re_trials`` the number of
    perturbations averaged into the expected deviation."""

    name: str = "experiment"
    seed: int = 0
    trials: int = 5
    re_trials: int = 5
    experiments: tuple[str, ...] = ("epsilon",)
    epsilons: tuple[float, ...] = (3.0,)
    ls: tuple[int, ...] = (100,)
    losses: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4)
    calibration_losses: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5)
    mixed_losses: tuple[float, ...] = (0.01, 0.02, 0.03, 0.05, 0.1)
    mix_fractions: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    epsilon_actual: tuple[float, ...] = (1.0, 3.0, 5.0)
    epsilon_dp: tuple[float, ...] = (1.0, 3.0, 5.0)
    dp_sensitivity: float = 1.0
    b: int = 3
    splits: int = 5
    pairing: str = "rank"
    public_random_labels: bool = True
    cutoffs: dict | None = None
    dataset: SynthesisConfig = field(default_factory=SynthesisConfig)
    attack: AttackSettings = field(default_factory=AttackSettings)
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1 or self.re_trials < 1:
            raise SchemaError("trials must be >= 1")
        unknown = set(self.experiments) - set(EXPERIMENTS)
        if unknown:
            raise SchemaError(f"unknown experiments {sorted(unknown)}; choose from {EXPERIMENTS}")
        if self.splits < 2:
            raise SchemaError("need at least two calibration splits")
        if self.cutoffs is not None and set(self.cutoffs) != {"tau_o", "tau_p", "tau_a"}:
            raise SchemaError("fixed cutoffs need exactly tau_o, tau_p and tau_a")

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["dataset"] = dataclasses.asdict(self.dataset)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        if not isinstance(doc, dict):
            raise SchemaError("experiment config must be a JSON object")
        doc = dict(doc)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise SchemaError(f"unknown config keys {sorted(unknown)}")
        try:
            if "dataset" in doc:
                ds = dict(doc["dataset"])
                for key in ("effect_range", "baseline_maf_range"):
                    if key in ds:
                        ds[key] = tuple(float(x) for x in ds[key])
                doc["dataset"] = SynthesisConfig(**ds)
            if "attack" in doc:
                at = dict(doc["attack"])
                for key in ("values", "epsilons"):
                    if key in at:
                        at[key] = tuple(at[key])
                doc["attack"] = AttackSettings(**at)
            for key, f in ((f.name, f) for f in dataclasses.fields(cls)):
                if key in doc and str(f.type).startswith("tuple"):
                    doc[key] = tuple(doc[key])
            return cls(**doc)
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"invalid experiment config: {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"experiment config is not valid JSON: {exc}") from None
        return cls.from_dict(doc)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True, eq=False)
class TrialData:
    seed: int
    research: CaseControlDataset
    public: CaseControlDataset
    splits: tuple[CaseControlDataset, ...]


def trial_seed(config: ExperimentConfig, trial: int) -> int:
    return derive_seed(config.seed, "trial", trial)


def trial_data(config: ExperimentConfig, trial: int) -> TrialData:
    ts = trial_seed(config, trial)
    base = config.dataset
    research = synthesize_dataset(base.replace(seed=derive_seed(ts, "D")))
    public = synthesize_dataset(base.replace(seed=derive_seed(ts, "E")))
    if config.public_random_labels:
        public = random_label(public, derive_seed(ts, "E-labels"))
    f = synthesize_dataset(base.replace(seed=derive_seed(ts, "F"), m=base.m * config.splits,
                                        n_associated=base.n_associated * config.splits))
    splits = partition_dataset(f, config.splits, "snps", derive_seed(ts, "F-split"))
    return TrialData(ts, research, public, tuple(splits))


@dataclass(frozen=True, eq=False)
class Calibration:
    cutoffs: CutoffSet
    expected: ExpectedDeviation


def calibration_sweep(config: ExperimentConfig) -> list[ErrorScenario]:
    return [ErrorScenario(CORRECT)] + [ErrorScenario(OVERSELL, target_loss=u) for u in config.calibration_losses]


def calibrate(config: ExperimentConfig, data: TrialData, epsilon: float | None, l: int,
              b: int | None = None) -> Calibration:
    seed = derive_seed(data.seed, "calibrate", epsilon, l, b)
    expected = expected_deviation(data.public, l, epsilon, derive_seed(seed, "expected"), config.re_trials, b=b)
    if config.cutoffs is not None:
        c = config.cutoffs
        cut = CutoffSet(float(c["tau_o"]), float(c["tau_p"]), float(c["tau_a"]),
                        {"epsilon": epsilon, "l": l, "b": b, "pairing": config.pairing, "source": "fixed"})
    else:
        cut = calibrate_cutoffs(list(data.splits), data.public, l, epsilon, calibration_sweep(config), seed,
                                config.re_trials, expected=expected, pairing=config.pairing, b=b)
    return Calibration(cut, expected)


# -- cell evaluation -------------------------------------------------------------

def _row(experiment, trial, epsilon, l, scenario, param, kind, target_loss=None, utility=None, metrics=None,
         accuracy3=None, status="ok") -> dict:
    row = {"experiment": experiment, "trial": trial, "epsilon": epsilon, "l": l, "scenario": scenario,
           "param": param, "statistic": KIND_NAMES[kind] if kind in KIND_NAMES else kind,
           "target_loss": target_loss, "utility_loss": utility, "accuracy3": accuracy3, "status": status}
    m = metrics.as_dict() if metrics is not None else {}
    for key in ("tp", "fp", "tn", "fn", "tpr", "tnr", "accuracy"):
        row[key] = m.get(key)
    return row


def _evaluate(res: dict, record, kind: str, cut: CutoffSet) -> tuple:
    """(confusion metrics, predicted 3-way labels, covered mask) for one statistic."""
    cov = res["covered"]
    rep = res["reported"].column(kind)
    rec = res["reconstructed"].column(kind)
    ok, over = classify_arrays(res[kind]["phi"], cut.tau(kind), rep, rec, kind)
    truth = record.truth_correct
    m = confusion_metrics(truth[cov], ok[cov])
    pred = np.where(ok, CORRECT, np.where(over, OVERSELL, UNDERSELL))
    return m, pred, cov


def _cell_seed(data: TrialData, *labels) -> int:
    return derive_seed(data.seed, "cell", *labels)


def _run_scenario(config, data, ranking, cal, epsilon, l, scenario, seed, **kw):
    return scenario_phi(data.research, cal.expected, l, epsilon, scenario, seed, ranking=ranking,
                        pairing=config.pairing, **kw)


def _tpr_tnr_rows(config, data, ranking, cal, experiment, trial, epsilon, l, param, *, b=None,
                  transform_for=None) -> list[dict]:
    rows = []
    sc = ErrorScenario(CORRECT)
    tf = transform_for("correct") if transform_for else None
    res, record = _run_scenario(config, data, ranking, cal, epsilon, l, sc,
                                _cell_seed(data, experiment, epsilon, l, param, "correct"), b=b, transform=tf)
    for kind in KINDS:
        m, _, _ = _evaluate(res, record, kind, cal.cutoffs)
        rows.append(_row(experiment, trial, epsilon, l, sc.kind, param, kind, None, 0.0, m))
    for u in config.losses:
        tf = transform_for(("loss", u)) if transform_for else None
        res, record = _run_scenario(config, data, ranking, cal, epsilon, l, ErrorScenario(OVERSELL, target_loss=u),
                                    _cell_seed(data, experiment, epsilon, l, param, "oversell", u), b=b, transform=tf)
        correct = record.correct
        for kind in KINDS:
            m, _, _ = _evaluate(res, record, kind, cal.cutoffs)
            loss = _loss(res["reported"], correct, kind)
            rows.append(_row(experiment, trial, epsilon, l, OVERSELL, param, kind, u, loss, m))
    return rows


def _loss(reported: GwasTable, correct: GwasTable, kind: str) -> float:
    return utility_loss(reported.column(kind), correct.column(kind), z_norms(correct.odds_ratio)[kind])


def strong_selection(ranking: GwasTable, l: int) -> tuple[np.ndarray, int, np.ndarray]:
    """Ranks for the strong-association checks.

    Returns l evenly spaced ranks among p < 0.08 (correct report), the start
    of an l-window of weak SNPs beginning at p = 0.08, and l evenly spaced
    ranks among p < 0.05 whose statistics the weak window borrows.
    """
    p = ranking.p_value
    n_weak = int(np.searchsorted(p, WEAK_P, side="left"))
    n_strong = int(np.searchsorted(p, STRONG_P, side="left"))
    if n_strong < l or n_weak + l > len(p):
        raise ValueError(f"{n_strong} SNPs with p < {STRONG_P} and {len(p) - n_weak} with p >= {WEAK_P}; "
                         f"need l={l} of each")
    spread = np.round(np.linspace(0, n_weak - 1, l)).astype(int)
    source = np.round(np.linspace(0, n_strong - 1, l)).astype(int)
    if np.unique(spread).size < l or np.unique(source).size < l:
        raise ValueError("not enough distinct ranks below p = 0.05")
    return spread, n_weak, source


def _strong_rows(config, data, ranking, cal, trial, epsilon, l) -> list[dict]:
    rows = []
    spread, start, source = strong_selection(ranking, l)
    res, record = _run_scenario(config, data, ranking, cal, epsilon, l, ErrorScenario(CORRECT),
                                _cell_seed(data, "strong", epsilon, l, "correct"), ranks=spread)
    strong = res["reported"].p_value < STRONG_P
    for kind in KINDS:
        cov = res["covered"]
        rep, rec = res["reported"].column(kind), res["reconstructed"].column(kind)
        ok, _ = classify_arrays(res[kind]["phi"], cal.cutoffs.tau(kind), rep, rec, kind)
        sel = cov & strong
        m = confusion_metrics(np.ones(int(sel.sum()), bool), ok[sel])
        rows.append(_row("strong", trial, epsilon, l, CORRECT, "p<0.05", kind, None, 0.0, m))
    bundle, truth = build_metadata(data.research, l, l, epsilon, derive_seed(_cell_seed(data, "strong", epsilon, l,
                                                                                         "oversell"), "bundle"),
                                   start_rank=start, ranking=ranking)
    bundle = bundle.replace(reported=ranking.take(source).with_values(snp_ids=bundle.reported.snp_ids))
    res = bundle_phi(bundle, cal.expected, epsilon, config.pairing)
    record = InjectionRecord((OVERSELL,) * l, truth.correct, {}, ErrorScenario(OVERSELL, offset=1))
    for kind in KINDS:
        m, _, _ = _evaluate(res, record, kind, cal.cutoffs)
        rows.append(_row("strong", trial, epsilon, l, OVERSELL, "p~0.08", kind, None,
                         _loss(res["reported"], record.correct, kind), m))
    return rows


def _mixed_rows(config, data, ranking, cal, trial, epsilon, l) -> list[dict]:
    rows = []
    for u in config.mixed_losses:
        sc = ErrorScenario(MIXED, target_loss=u, mix_fractions=tuple(config.mix_fractions))
        res, record = _run_scenario(config, data, ranking, cal, epsilon, l, sc,
                                    _cell_seed(data, "mixed", epsilon, l, u))
        labels = np.array(record.labels, dtype=object)
        wrong = labels != CORRECT
        for kind in KINDS:
            m, pred, cov = _evaluate(res, record, kind, cal.cutoffs)
            acc3 = float(np.mean(pred[cov] == labels[cov]))
            dist = np.abs(res["reported"].column(kind) - record.correct.column(kind))[wrong]
            distance = float(np.mean(dist)) if dist.size else 0.0
            rows.append(_row("mixed", trial, epsilon, l, MIXED, "", kind, u, distance, m, acc3))
    return rows


def _metadata_rows(config, data, ranking, cal, trial, epsilon, l) -> list[dict]:
    rows = []
    for ey in config.epsilon_actual:
        sc = ErrorScenario(METADATA_EPSILON, epsilon_actual=ey)
        res, record = _run_scenario(config, data, ranking, cal, epsilon, l, sc,
                                    _cell_seed(data, "metadata_epsilon", epsilon, l, ey))
        for kind in KINDS:
            m, _, _ = _evaluate(res, record, kind, cal.cutoffs)
            rows.append(_row("metadata_epsilon", trial, epsilon, l, METADATA_EPSILON, f"eps_actual={ey:g}", kind,
                             None, 0.0, m))
    return rows


def dp_transform(epsilon_dp: float, sensitivity: float, n_case: int, seed: int):
    model = SensitivityModel(p_value=sensitivity, odds_ratio=sensitivity, n_case=n_case)

    def apply(bundle):
        noisy = laplace_perturb_statistics(bundle.reported.records(), epsilon_dp, model, seed)
        return bundle.replace(reported=GwasTable.from_records(noisy))
    return apply


def _dp_rows(config, data, ranking, cal, trial, epsilon, l) -> list[dict]:
    rows = _tpr_tnr_rows(config, data, ranking, cal, "dp", trial, epsilon, l, "none")
    for ed in config.epsilon_dp:
        def factory(tag, ed=ed):
            return dp_transform(ed, config.dp_sensitivity, data.research.n_case,
                                _cell_seed(data, "dp", epsilon, l, ed, "laplace", tag))
        rows += _tpr_tnr_rows(config, data, ranking, cal, "dp", trial, epsilon, l, f"eps_dp={ed:g}",
                              transform_for=factory)
    return rows


class _Release:
    def __init__(self, reported=None, partial=None):
        self.reported, self.partial = reported, partial


def attack_curves(dataset, outsiders: np.ndarray, panel: np.ndarray, settings: AttackSettings, seed: int,
                  attacks: Sequence[str] = (LRT, EDIT_DISTANCE)) -> list[PowerResult]:
    """LRT power over the top-l released MAFs and edit-distance power over k
    LD-pruned randomized-response SNPs. ``outsiders`` and ``panel`` are
    genotype matrices aligned with ``dataset.snp_ids``; the panel supplies the
    population allele frequencies."""
    st = settings
    ds = dataset
    pos = ds.snp_index
    ranking = rank_snps(ds)
    values = sorted(st.values)

    def pop_freqs(ids):
        return panel[:, [pos[s] for s in ids]].mean(axis=0) / 2.0

    def cohorts(rs):
        return draw_cohorts(ds, outsiders, st.cohort_size, st.cohort_size, rs)

    out = []
    if LRT in attacks:
        out += power_curve(ds, lambda v, e, rs: _Release(reported=ranking.head(v)), LRT, values, [None], cohorts,
                           seed, st.reps, pop_freqs, st.per_allele)
    if EDIT_DISTANCE in attacks:
        reps = list(ld_prune(ds, ranking.snp_ids.tolist(), max_keep=max(values)).representatives)
        out += power_curve(ds, lambda v, e, rs: _Release(partial=build_partial_noisy_dataset(ds, reps[:v], e, rs)),
                           EDIT_DISTANCE, values, st.epsilons, cohorts, seed, st.reps)
    return out


def _attack_rows(config, data, trial) -> list[dict]:
    st = config.attack
    base = config.dataset.replace(seed=derive_seed(data.seed, "D"))
    outsiders = draw_population(base, st.outsiders, derive_seed(data.seed, "outsiders"))
    panel = draw_population(base, st.panel_size, derive_seed(data.seed, "panel"))
    res = attack_curves(data.research, outsiders, panel, st, derive_seed(data.seed, "attack"))
    return [{"trial": trial, "result": r} for r in res]


def run_trial(config: ExperimentConfig, trial: int) -> tuple[list[dict], list[dict]]:
    """All grid cells of one repetition: (verification rows, power rows)."""
    data = trial_data(config, trial)
    ranking = rank_snps(data.research)
    rows, power = [], []
    wanted = set(config.experiments)
    rr = wanted & {"epsilon", "strong", "mixed", "metadata_epsilon", "dp"}
    for l in config.ls:
        for eps in config.epsilons:
            if not rr:
                break
            try:
                cal = calibrate(config, data, eps, l)
            except (GwasVerifyError, ValueError) as exc:
                rows += [_row(x, trial, eps, l, "", "", "all", status=_status(exc)) for x in sorted(rr)]
                continue
            for name, fn in (("epsilon", lambda: _tpr_tnr_rows(config, data, ranking, cal, "epsilon", trial, eps, l,
                                                               "")),
                             ("strong", lambda: _strong_rows(config, data, ranking, cal, trial, eps, l)),
                             ("mixed", lambda: _mixed_rows(config, data, ranking, cal, trial, eps, l)),
                             ("metadata_epsilon", lambda: _metadata_rows(config, data, ranking, cal, trial, eps, l)),
                             ("dp", lambda: _dp_rows(config, data, ranking, cal, trial, eps, l))):
                if name in wanted:
                    rows += _guard(fn, name, trial, eps, l)
        if "sampling" in wanted:
            def sampling():
                cal_b = calibrate(config, data, None, l, b=config.b)
                return _tpr_tnr_rows(config, data, ranking, cal_b, "sampling", trial, None, l, f"b={config.b}",
                                     b=config.b)
            rows += _guard(sampling, "sampling", trial, None, l)
    if "attack" in wanted:
        try:
            power = _attack_rows(config, data, trial)
        except (GwasVerifyError, ValueError) as exc:
            rows.append(_row("attack", trial, None, None, "", "", "all", status=_status(exc)))
    return rows, power


def _status(exc: Exception) -> str:
    code = getattr(exc, "code", "E_VALUE")
    return f"error:{code}:{exc}"


def _guard(fn, name, trial, eps, l) -> list[dict]:
    try:
        return fn()
    except (GwasVerifyError, ValueError) as exc:
        logger.warning("cell %s eps=%s l=%s trial %d failed: %s", name, eps, l, trial, exc)
        return [_row(name, trial, eps, l, "", "", "all", status=_status(exc))]


def _run_trial_args(args):
    return run_trial(*args)


# -- aggregation and report --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ExperimentResult:
    config: ExperimentConfig
    trial_rows: tuple[dict, ...]
    rows: tuple[dict, ...]
    power: tuple[PowerResult, ...]
    power_trials: tuple[dict, ...]

    def select(self, **where) -> list[dict]:
        return [r for r in self.rows if all(_same(r.get(k), v) for k, v in where.items())]

    def value(self, column: str, **where) -> float:
        hits = self.select(**where)
        if len(hits) != 1:
            raise KeyError(f"{len(hits)} rows match {where}")
        return hits[0][column]

    def trial_values(self, column: str, **where) -> np.ndarray:
        hits = [r for r in self.trial_rows if all(_same(r.get(k), v) for k, v in where.items())]
        return np.array([np.nan if r[column] is None else r[column] for r in hits], dtype=float)

    def power_of(self, attack: str, value: int, epsilon: float | None = None) -> float:
        for r in self.power:
            if r.score_kind == attack and r.value == value and _same(r.epsilon, epsilon):
                return r.power
        raise KeyError((attack, value, epsilon))


def _same(a, b) -> bool:
    if isinstance(a, float) and isinstance(b, (int, float)) and not isinstance(b, bool):
        return math.isclose(a, b)
    return a == b


def _nanmean(xs) -> float:
    v = np.array([np.nan if x is None else x for x in xs], dtype=float)
    v = v[np.isfinite(v)]
    return float(v.mean()) if v.size else float("nan")


def _nansd(xs) -> float:
    v = np.array([np.nan if x is None else x for x in xs], dtype=float)
    v = v[np.isfinite(v)]
    return float(v.std(ddof=1)) if v.size > 1 else float("nan")


def aggregate(trial_rows: Sequence[dict]) -> list[dict]:
    """Mean of per-trial rates for each grid cell (no pooling across trials)."""
    groups: dict[tuple, list[dict]] = {}
    for r in trial_rows:
        groups.setdefault(tuple(r[k] for k in _GROUP), []).append(r)
    out = []
    for key, rs in groups.items():
        ok = [r for r in rs if r["status"] == "ok"]
        row = dict(zip(_GROUP, key))
        row.update({
            "utility_loss": _nanmean(r["utility_loss"] for r in ok),
            "tpr": _nanmean(r["tpr"] for r in ok), "tpr_sd": _nansd(r["tpr"] for r in ok),
            "tnr": _nanmean(r["tnr"] for r in ok), "tnr_sd": _nansd(r["tnr"] for r in ok),
            "accuracy": _nanmean(r["accuracy"] for r in ok),
            "accuracy3": _nanmean(r["accuracy3"] for r in ok),
            "trials": len(ok),
            "status": "ok" if len(ok) == len(rs) else f"failed:{len(rs) - len(ok)}",
        })
        out.append(row)
    return out


def aggregate_power(power_rows: Sequence[dict]) -> list[PowerResult]:
    groups: dict[tuple, list[PowerResult]] = {}
    for r in power_rows:
        p = r["result"]
        groups.setdefault((p.score_kind, p.axis, p.value, p.epsilon), []).append(p)
    return [PowerResult(float(np.mean([p.gamma for p in ps])), float(np.mean([p.power for p in ps])),
                        ps[0].fpr_target, kind, axis, value, eps, tuple(p.power for p in ps))
            for (kind, axis, value, eps), ps in groups.items()]


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Run every trial (optionally across worker processes) and aggregate."""
    args = [(config, t) for t in range(config.trials)]
    if config.workers > 1 and config.trials > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_trial_args, args))
    else:
        results = [run_trial(*a) for a in args]
    trial_rows = [r for rows, _ in results for r in rows]
    power_rows = [p for _, ps in results for p in ps]
    return ExperimentResult(config, tuple(trial_rows), tuple(aggregate(trial_rows)),
                            tuple(aggregate_power(power_rows)), tuple(power_rows))


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_rows(path: Path, fields: Sequence[str], rows: Sequence[dict]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([_fmt(r.get(f)) for f in fields])


def summary(result: ExperimentResult) -> dict:
    """Headline tables: TPR per (statistic, epsilon) and power per attack point."""
    tpr = {}
    for r in result.select(experiment="epsilon", scenario=CORRECT):
        tpr.setdefault(r["statistic"], {})[f"l={r['l']},eps={_fmt(r['epsilon'])}"] = r["tpr"]
    statuses = sorted({r["status"] for r in result.trial_rows if r["status"] != "ok"})
    config = result.config.to_dict()
    config.pop("workers")  # execution detail, not part of the result
    return {
        "name": result.config.name,
        "config": config,
        "tpr_table": tpr,
        "cells": len(result.rows),
        "failed_cells": statuses,
        "power": [{"attack": p.score_kind, "value": p.value, "epsilon": p.epsilon, "power": p.power}
                  for p in result.power],
    }


def write_report(result: ExperimentResult, out_dir: str | Path, figures: bool = True) -> list[Path]:
    """Write CSV tables, summary.json and (optionally) PNG figures to ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "tpr_tnr.csv", out / "trials.csv", out / "utility_sweep.csv", out / "power_curves.csv",
             out / "summary.json"]
    _write_rows(paths[0], AGG_FIELDS, result.rows)
    _write_rows(paths[1], TRIAL_FIELDS, result.trial_rows)
    _write_rows(paths[2], SWEEP_FIELDS, [r for r in result.rows if r["target_loss"] is not None])
    write_power_csv(result.power, paths[3])
    paths[4].write_text(json.dumps(summary(result), indent=2, sort_keys=True, default=_json_default) + "\n",
                        encoding="utf-8")
    if figures:
        from .plotting import render_figures
        paths += render_figures(result, out)
    return paths


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))

"""Command-line front end.

Exit codes: 0 success (or every verified statistic Correct), 1 at least one
statistic judged Incorrect, 2 operational error. Errors are printed to stderr
as ``error[CODE]: message``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import audit, evaluation
from ._seeding import derive_seed
from .errors import GwasVerifyError
from .genotype import (
    SynthesisConfig,
    draw_population,
    load_dataset,
    load_panel,
    partition_dataset,
    random_label,
    synthesize_dataset,
    write_dataset,
    write_panel,
)
from .gwas import rank_snps
from .metadata import (
    CORRECT,
    METADATA_EPSILON,
    SCENARIO_KINDS,
    ErrorScenario,
    build_metadata,
    inject_errors,
    read_bundle,
    resolve_offset,
    write_bundle,
)
from .verifier import (
    CORRECT_VERDICT,
    INCORRECT_VERDICT,
    CutoffSet,
    calibrate_cutoffs,
    scenario_text,
    verify_bundle,
)

EXIT_OK, EXIT_NEGATIVE, EXIT_ERROR = 0, 1, 2


class UsageError(Exception):
    code = "E_USAGE"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _common(p: argparse.ArgumentParser, out_help: str) -> None:
    p.add_argument("--seed", type=int, default=0, help="root seed")
    p.add_argument("--out", required=True, help=out_help)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gwasverify", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="synthesize a case-control cohort")
    _common(p, "output genotype TSV")
    p.add_argument("--config", help="key=value synthesis config file")
    p.add_argument("--n-case", type=int)
    p.add_argument("--n-control", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--n-associated", type=int)
    p.add_argument("--random-labels", action="store_true", help="shuffle case/control labels (public dataset)")
    p.add_argument("--panel", help="also write unaffected individuals from the same population here")
    p.add_argument("--panel-size", type=int, default=500)
    p.add_argument("--panel-seed", type=int, help="seed for the panel draw (default: derived from --seed)")

    p = sub.add_parser("gwas", help="association statistics for a cohort")
    _common(p, "output statistics CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--l", type=int, help="keep the l most associated SNPs (default: all)")
    p.add_argument("--no-correction", action="store_true", help="drop zero-cell tables instead of correcting")

    p = sub.add_parser("metadata", help="build a metadata bundle, optionally with injected errors")
    _common(p, "output directory")
    p.add_argument("--input", required=True)
    p.add_argument("--l", type=int, required=True)
    p.add_argument("--k", type=int)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--epsilon", type=float)
    group.add_argument("--b", type=int)
    p.add_argument("--r2", type=float, default=0.2)
    p.add_argument("--stem", default="bundle")
    p.add_argument("--scenario", choices=SCENARIO_KINDS, default=CORRECT)
    p.add_argument("--offset", type=int)
    p.add_argument("--loss", type=float, help="target p-value utility loss (instead of --offset)")
    p.add_argument("--mix", type=_floats, help="oversell,undersell,correct fractions")
    p.add_argument("--epsilon-actual", type=float)
    p.add_argument("--epsilon-dp", type=float, help="add Laplace noise to the released statistics")
    p.add_argument("--dp-sensitivity", type=float, default=1.0)

    p = sub.add_parser("calibrate", help="calibrate cut-offs on a labelled dataset")
    _common(p, "output cut-off JSON")
    p.add_argument("--calibration", required=True, help="labelled calibration dataset F")
    p.add_argument("--public", required=True, help="public dataset E")
    p.add_argument("--splits", type=int, default=5)
    p.add_argument("--l", type=int, required=True)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--epsilon", type=float)
    group.add_argument("--b", type=int)
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--losses", type=_floats, default=(0.1, 0.2, 0.3, 0.4, 0.5))
    p.add_argument("--pairing", choices=("rank", "mean"), default="rank")

    p = sub.add_parser("verify", help="verify a metadata bundle")
    _common(p, "output directory")
    p.add_argument("--bundle", required=True)
    p.add_argument("--public", required=True)
    p.add_argument("--cutoffs", required=True)
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--truth", help="ground-truth CSV from `metadata` to add TPR/TNR to the summary")

    p = sub.add_parser("audit", help="membership-inference power curves")
    _common(p, "output directory")
    p.add_argument("--input", required=True)
    p.add_argument("--outsiders", required=True, help="genotypes of individuals outside the study")
    p.add_argument("--reference", required=True, help="population panel for allele frequencies")
    p.add_argument("--attack", choices=("lrt", "ed", "both"), default="both")
    p.add_argument("--values", type=_ints, default=(20, 40, 60, 80, 100), help="l / k values")
    p.add_argument("--epsilon", type=_floats, default=(1.0, 3.0, 5.0))
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--cohort", type=int, default=25)
    p.add_argument("--per-allele", action="store_true")

    p = sub.add_parser("experiment", help="run an experiment grid")
    _common(p, "output directory")
    p.add_argument("--config", help="JSON experiment config (defaults otherwise)")
    p.add_argument("--trials", type=int)
    p.add_argument("--epsilon", type=_floats)
    p.add_argument("--epsilon-dp", type=_floats)
    p.add_argument("--l", type=_ints)
    p.add_argument("--b", type=int)
    p.add_argument("--threads", type=int, default=1, help="worker processes (outputs do not depend on it)")
    p.add_argument("--no-figures", action="store_true")
    return parser


# -- commands ---------------------------------------------------------------------

def cmd_synth(args) -> int:
    cfg = SynthesisConfig.from_file(args.config) if args.config else SynthesisConfig()
    changes = {k: v for k, v in (("n_case", args.n_case), ("n_control", args.n_control), ("m", args.m),
                                 ("n_associated", args.n_associated)) if v is not None}
    cfg = cfg.replace(seed=args.seed, **changes)
    ds = synthesize_dataset(cfg)
    if args.random_labels:
        ds = random_label(ds, derive_seed(args.seed, "labels"))
    write_dataset(ds, args.out)
    if args.panel:
        panel_seed = derive_seed(args.seed, "panel") if args.panel_seed is None else args.panel_seed
        write_panel(draw_population(cfg, args.panel_size, panel_seed), ds.snp_ids, args.panel, cfg.population)
    return EXIT_OK


def cmd_gwas(args) -> int:
    ranking = rank_snps(load_dataset(args.input), not args.no_correction)
    if args.l is not None:
        if args.l < 1:
            raise ValueError("--l must be positive")
        ranking = ranking.head(args.l)
    ranking.to_csv(args.out)
    return EXIT_OK


TRUTH_FIELDS = ("snp_id", "label", "correct_odds_ratio", "correct_p_value", "correct_maf")


def cmd_metadata(args) -> int:
    ds = load_dataset(args.input)
    k = args.k if args.k is not None else args.l
    scenario = ErrorScenario(args.scenario, offset=args.offset, target_loss=args.loss,
                             mix_fractions=args.mix or (1 / 3, 1 / 3, 1 / 3), epsilon_actual=args.epsilon_actual)
    ranking = rank_snps(ds)
    scenario = resolve_offset(scenario, ranking, args.l)
    start = scenario.offset if scenario.needs_window() else 0
    bundle, truth = build_metadata(ds, args.l, k, args.epsilon, derive_seed(args.seed, "bundle"), start_rank=start,
                                   r2_threshold=args.r2, b=args.b, ranking=ranking)
    bundle, record = inject_errors(bundle, truth, scenario, derive_seed(args.seed, "inject"))
    if args.epsilon_dp is not None:
        bundle = evaluation.dp_transform(args.epsilon_dp, args.dp_sensitivity, ds.n_case,
                                         derive_seed(args.seed, "laplace"))(bundle)
    out = Path(args.out)
    path = write_bundle(bundle, out, args.stem)
    with (out / f"{args.stem}.truth.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRUTH_FIELDS)
        c = record.correct
        for j, sid in enumerate(bundle.reported.snp_ids.tolist()):
            w.writerow([sid, record.labels[j], repr(float(c.odds_ratio[j])), repr(float(c.p_value[j])),
                        repr(float(c.maf[j]))])
    losses = {"scenario": scenario_text(record.scenario), "utility_loss": record.losses}
    if args.epsilon_dp is not None:
        losses["epsilon_dp"] = args.epsilon_dp
        losses["dp_sensitivity"] = args.dp_sensitivity
    (out / f"{args.stem}.losses.json").write_text(json.dumps(losses, indent=2, sort_keys=True) + "\n",
                                                  encoding="utf-8")
    print(path)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    f = load_dataset(args.calibration)
    public = load_dataset(args.public)
    splits = partition_dataset(f, args.splits, "snps", derive_seed(args.seed, "splits"))
    sweep = [ErrorScenario(CORRECT)] + [ErrorScenario("oversell", target_loss=u) for u in args.losses]
    cut = calibrate_cutoffs(splits, public, args.l, args.epsilon, sweep, args.seed, args.trials,
                            pairing=args.pairing, b=args.b)
    Path(args.out).write_text(cut.to_json(), encoding="utf-8")
    return EXIT_OK


def _read_truth(path: str) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([r["label"] in (CORRECT, METADATA_EPSILON) for r in rows])


def cmd_verify(args) -> int:
    bundle = read_bundle(args.bundle)
    public = load_dataset(args.public)
    cutoffs = CutoffSet.from_json(Path(args.cutoffs).read_text(encoding="utf-8"))
    report = verify_bundle(bundle, public, cutoffs, args.trials, args.seed)
    if args.truth:
        report = report.with_truth(_read_truth(args.truth))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.to_csv(out / "report.csv")
    (out / "summary.json").write_text(report.summary_json(), encoding="utf-8")
    verdicts = [r["verdict"] for r in report.rows]
    n_bad = verdicts.count(INCORRECT_VERDICT)
    print(f"{verdicts.count(CORRECT_VERDICT)} correct, {n_bad} incorrect, "
          f"{len(verdicts) - n_bad - verdicts.count(CORRECT_VERDICT)} unverified")
    return EXIT_NEGATIVE if n_bad else EXIT_OK


def cmd_audit(args) -> int:
    ds = load_dataset(args.input)
    outsiders = _aligned_panel(args.outsiders, ds.snp_ids)
    reference = _aligned_panel(args.reference, ds.snp_ids)
    settings = evaluation.AttackSettings(values=tuple(sorted(args.values)), epsilons=args.epsilon, reps=args.reps,
                                         cohort_size=args.cohort, per_allele=args.per_allele)
    attacks = {"lrt": (audit.LRT,), "ed": (audit.EDIT_DISTANCE,), "both": (audit.LRT, audit.EDIT_DISTANCE)}
    results = evaluation.attack_curves(ds, outsiders, reference, settings, derive_seed(args.seed, "attack"),
                                       attacks[args.attack])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    audit.write_power_csv(results, out / "power_curves.csv")
    from .plotting import plot_power
    plot_power(results, out / "power_curves.png")
    return EXIT_OK


def _aligned_panel(path: str, wanted) -> np.ndarray:
    ids, g = load_panel(path)
    pos = {s: i for i, s in enumerate(ids)}
    missing = [s for s in wanted if s not in pos]
    if missing:
        raise ValueError(f"{path} lacks {len(missing)} SNPs of the study")
    return g[:, [pos[s] for s in wanted]]


def cmd_experiment(args) -> int:
    cfg = evaluation.ExperimentConfig.from_file(args.config) if args.config else evaluation.ExperimentConfig()
    changes = {"seed": args.seed, "workers": args.threads}
    for key, value in (("trials", args.trials), ("epsilons", args.epsilon), ("epsilon_dp", args.epsilon_dp),
                       ("ls", args.l), ("b", args.b)):
        if value is not None:
            changes[key] = value
    cfg = cfg.replace(**changes)
    result = evaluation.run_experiment(cfg)
    for p in evaluation.write_report(result, args.out, figures=not args.no_figures):
        print(p)
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "gwas": cmd_gwas,
    "metadata": cmd_metadata,
    "calibrate": cmd_calibrate,
    "verify": cmd_verify,
    "audit": cmd_audit,
    "experiment": cmd_experiment,
}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except GwasVerifyError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
    except FileNotFoundError as exc:
        print(f"error[E_IO]: {exc.filename}: file not found", file=sys.stderr)
    except OSError as exc:
        print(f"error[E_IO]: {exc}", file=sys.stderr)
    except (ValueError, KeyError) as exc:
        print(f"error[E_VALUE]: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

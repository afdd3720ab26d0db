"""Small end-to-end CLI session shared by the CLI and acceptance tests."""

import json
from pathlib import Path

from gwasverify.cli import main

EXPERIMENT = {
    "name": "cli", "trials": 1, "re_trials": 2, "experiments": ["epsilon", "attack"], "ls": [40],
    "losses": [0.2], "calibration_losses": [0.1, 0.3], "splits": 3, "dataset": {"m": 600},
    "attack": {"values": [10, 20], "epsilons": [3.0], "reps": 2, "panel_size": 100, "outsiders": 60},
}


def run_pipeline(work: Path, seed: int = 5) -> dict[str, int]:
    """Run every subcommand once; returns exit codes by command."""
    work.mkdir(parents=True, exist_ok=True)
    w = str(work)
    (work / "exp.json").write_text(json.dumps(EXPERIMENT))
    s = str(seed)
    steps = {
        "synth": ["synth", "--seed", s, "--m", "600", "--out", f"{w}/D.tsv", "--panel", f"{w}/ref.tsv",
                  "--panel-size", "120", "--panel-seed", "100"],
        "synth-public": ["synth", "--seed", str(seed + 1), "--m", "600", "--random-labels", "--out", f"{w}/E.tsv"],
        "synth-calibration": ["synth", "--seed", str(seed + 2), "--m", "2000", "--n-associated", "60",
                              "--out", f"{w}/F.tsv"],
        "synth-outsiders": ["synth", "--seed", s, "--m", "600", "--out", f"{w}/D.tsv", "--panel",
                            f"{w}/out.tsv", "--panel-size", "80", "--panel-seed", "200"],
        "gwas": ["gwas", "--seed", s, "--input", f"{w}/D.tsv", "--l", "40", "--out", f"{w}/stats.csv"],
        "metadata": ["metadata", "--seed", s, "--input", f"{w}/D.tsv", "--l", "40", "--epsilon", "3",
                     "--out", f"{w}/bundle"],
        "metadata-oversell": ["metadata", "--seed", s, "--input", f"{w}/D.tsv", "--l", "40", "--epsilon", "3",
                              "--scenario", "oversell", "--loss", "0.3", "--out", f"{w}/oversold"],
        "calibrate": ["calibrate", "--seed", s, "--calibration", f"{w}/F.tsv", "--public", f"{w}/E.tsv",
                      "--splits", "3", "--l", "40", "--epsilon", "3", "--trials", "2", "--out", f"{w}/cut.json"],
        "verify": ["verify", "--seed", s, "--bundle", f"{w}/bundle/bundle.json", "--public", f"{w}/E.tsv",
                   "--cutoffs", f"{w}/cut.json", "--trials", "2", "--truth", f"{w}/bundle/bundle.truth.csv",
                   "--out", f"{w}/verify"],
        "verify-oversell": ["verify", "--seed", s, "--bundle", f"{w}/oversold/bundle.json", "--public",
                            f"{w}/E.tsv", "--cutoffs", f"{w}/cut.json", "--trials", "2", "--out", f"{w}/verify2"],
        "audit": ["audit", "--seed", s, "--input", f"{w}/D.tsv", "--outsiders", f"{w}/out.tsv", "--reference",
                  f"{w}/ref.tsv", "--values", "10,20", "--epsilon", "3", "--reps", "3", "--out", f"{w}/audit"],
        "experiment": ["experiment", "--seed", s, "--config", f"{w}/exp.json", "--out", f"{w}/experiment"],
    }
    return {name: main(argv) for name, argv in steps.items()}


def output_bytes(work: Path) -> dict[str, bytes]:
    return {str(p.relative_to(work)): p.read_bytes() for p in sorted(work.rglob("*")) if p.is_file()}

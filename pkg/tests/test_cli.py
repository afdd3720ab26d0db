import numpy as np
import pytest

from cli_pipeline import output_bytes, run_pipeline
from gwasverify.cli import main
from gwasverify.genotype import SynthesisConfig, load_dataset, synthesize_dataset, write_dataset
from gwasverify.gwas import rank_snps


@pytest.fixture(scope="module")
def session(tmp_path_factory):
    work = tmp_path_factory.mktemp("cli")
    return work, run_pipeline(work)


def test_pipeline_exit_codes(session):
    _, codes = session
    for name, code in codes.items():
        if name.startswith("verify"):
            assert code in (0, 1)
        else:
            assert code == 0, name


def test_verify_exit_code_tracks_verdicts(session):
    work, codes = session
    for name, out in (("verify", "verify"), ("verify-oversell", "verify2")):
        verdicts = [line.split(",")[4] for line in (work / out / "report.csv").read_text().splitlines()[1:]]
        assert codes[name] == (1 if "Incorrect" in verdicts else 0)


def test_outputs_written(session):
    work, _ = session
    for rel in ("stats.csv", "bundle/bundle.json", "bundle/bundle.truth.csv", "cut.json", "verify/report.csv",
                "verify/summary.json", "audit/power_curves.csv", "audit/power_curves.png",
                "experiment/tpr_tnr.csv", "experiment/summary.json", "experiment/tpr_vs_epsilon.png"):
        assert (work / rel).is_file(), rel


def test_cli_matches_library(tmp_path):
    ds = synthesize_dataset(SynthesisConfig(m=300, seed=4))
    write_dataset(ds, tmp_path / "ref.tsv")
    assert main(["synth", "--seed", "4", "--m", "300", "--out", str(tmp_path / "d.tsv")]) == 0
    assert (tmp_path / "d.tsv").read_bytes() == (tmp_path / "ref.tsv").read_bytes()
    assert main(["gwas", "--input", str(tmp_path / "d.tsv"), "--l", "25", "--out", str(tmp_path / "s.csv")]) == 0
    rank_snps(load_dataset(tmp_path / "d.tsv")).head(25).to_csv(tmp_path / "lib.csv")
    assert (tmp_path / "s.csv").read_bytes() == (tmp_path / "lib.csv").read_bytes()


def test_unknown_flag_rejected(tmp_path, capsys):
    assert main(["gwas", "--input", "x.tsv", "--out", "y.csv", "--frobnicate"]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error[E_USAGE]:") and "--frobnicate" in err


def test_every_command_requires_out(capsys):
    for cmd in ("synth", "gwas", "metadata", "calibrate", "verify", "audit", "experiment"):
        assert main([cmd]) == 2
        assert "--out" in capsys.readouterr().err


def test_operational_errors(tmp_path, capsys):
    assert main(["gwas", "--input", str(tmp_path / "missing.tsv"), "--out", str(tmp_path / "o.csv")]) == 2
    assert "error[E_IO]" in capsys.readouterr().err
    bad = tmp_path / "bad.tsv"
    bad.write_text("sample_id\tlabel\tr1\na\tcase\t5\nb\tcontrol\t0\n")
    assert main(["gwas", "--input", str(bad), "--out", str(tmp_path / "o.csv")]) == 2
    assert "error[E_DOMAIN]" in capsys.readouterr().err


def test_calibration_mismatch_exit_code(session, capsys):
    work, _ = session
    assert main(["metadata", "--input", str(work / "D.tsv"), "--l", "40", "--epsilon", "2",
                 "--out", str(work / "eps2")]) == 0
    code = main(["verify", "--bundle", str(work / "eps2" / "bundle.json"), "--public", str(work / "E.tsv"),
                 "--cutoffs", str(work / "cut.json"), "--out", str(work / "v3")])
    assert code == 2
    assert "error[E_CALIBRATION_MISMATCH]" in capsys.readouterr().err


def test_threads_do_not_change_experiment_outputs(session):
    work, _ = session
    assert main(["experiment", "--seed", "5", "--config", str(work / "exp.json"), "--threads", "2",
                 "--out", str(work / "experiment2")]) == 0
    a, b = output_bytes(work / "experiment"), output_bytes(work / "experiment2")
    assert a == b


def test_rerun_is_byte_identical(session, tmp_path):
    work, _ = session
    run_pipeline(tmp_path)
    first = {k: v for k, v in output_bytes(work).items() if k in output_bytes(tmp_path)}
    assert first == output_bytes(tmp_path)

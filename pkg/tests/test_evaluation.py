import json

import numpy as np
import pytest

from gwasverify.errors import SchemaError
from gwasverify.evaluation import (
    AttackSettings,
    ExperimentConfig,
    run_experiment,
    strong_selection,
    trial_data,
    write_report,
)
from gwasverify.genotype import SynthesisConfig
from gwasverify.gwas import rank_snps

TINY = ExperimentConfig(name="tiny", trials=2, re_trials=2, experiments=("epsilon", "metadata_epsilon"),
                        epsilons=(3.0,), ls=(50,), losses=(0.1, 0.3), calibration_losses=(0.1, 0.3),
                        dataset=SynthesisConfig(m=800), splits=3)


def test_config_json_roundtrip(tmp_path):
    cfg = TINY.replace(attack=AttackSettings(values=(10, 20), reps=3))
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg
    p = tmp_path / "c.json"
    p.write_text(cfg.to_json())
    assert ExperimentConfig.from_file(p) == cfg


def test_config_rejects_unknown_keys():
    doc = json.loads(TINY.to_json())
    doc["bogus"] = 1
    with pytest.raises(SchemaError):
        ExperimentConfig.from_dict(doc)
    doc = json.loads(TINY.to_json())
    doc["experiments"] = ["nope"]
    with pytest.raises(SchemaError):
        ExperimentConfig.from_dict(doc)


def test_trial_data_layout():
    data = trial_data(TINY, 0)
    assert data.research.n == data.public.n == 120
    assert data.public.n_case == 60
    assert len(data.splits) == 3
    assert sum(s.m for s in data.splits) == 800 * 3
    again = trial_data(TINY, 0)
    assert again.research.equals(data.research)
    assert not trial_data(TINY, 1).research.equals(data.research)


def test_strong_selection_windows():
    data = trial_data(TINY.replace(dataset=SynthesisConfig(m=3000)), 0)
    ranking = rank_snps(data.research)
    ranks, weak_start, sources = strong_selection(ranking, 20)
    assert len(ranks) == len(sources) == 20
    assert np.all(ranking.p_value[sources] < 0.05)
    assert np.all(np.diff(ranks) > 0)


def _text(rows):
    # NaN-safe comparison
    return json.dumps(rows, sort_keys=True)


@pytest.fixture(scope="module")
def tiny_result():
    return run_experiment(TINY)


def test_run_experiment_rows(tiny_result):
    r = tiny_result
    assert {row["experiment"] for row in r.rows} == {"epsilon", "metadata_epsilon"}
    assert all(row["status"] == "ok" for row in r.trial_rows)
    tpr = r.value("tpr", experiment="epsilon", scenario="correct", statistic="p_value", epsilon=3.0)
    assert 0 <= tpr <= 1
    assert len(r.trial_values("tpr", experiment="epsilon", scenario="correct", statistic="p_value")) == 2


def test_workers_do_not_change_results(tiny_result):
    two = run_experiment(TINY.replace(workers=2))
    assert _text(two.rows) == _text(tiny_result.rows)
    assert _text(two.trial_rows) == _text(tiny_result.trial_rows)


def test_dropping_a_cell_leaves_others_unchanged(tiny_result):
    only = run_experiment(TINY.replace(experiments=("epsilon",)))
    mine = [r for r in tiny_result.trial_rows if r["experiment"] == "epsilon"]
    assert _text(only.trial_rows) == _text(mine)


def test_write_report(tmp_path, tiny_result):
    paths = write_report(tiny_result, tmp_path)
    names = {p.name for p in paths}
    assert {"tpr_tnr.csv", "trials.csv", "utility_sweep.csv", "power_curves.csv", "summary.json"} <= names
    assert "tpr_vs_epsilon.png" in names
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["name"] == "tiny" and summary["failed_cells"] == []
    second = tmp_path / "again"
    write_report(tiny_result, second)
    for p in paths:
        assert p.read_bytes() == (second / p.name).read_bytes()


def test_failed_cell_is_recorded_not_fatal():
    cfg = TINY.replace(experiments=("epsilon",), ls=(5000,))
    res = run_experiment(cfg)
    assert all(r["status"].startswith("error:") for r in res.trial_rows)

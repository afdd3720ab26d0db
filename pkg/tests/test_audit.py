import math

import numpy as np
import pytest

from gwasverify.audit import (
    EDIT_DISTANCE,
    HIGHER,
    LOWER,
    LRT,
    ClampRecord,
    attack_power,
    draw_cohorts,
    edit_distance,
    edit_distance_score,
    lrt_scores,
    lrt_statistic,
    power_curve,
    write_power_csv,
)
from gwasverify.genotype import draw_population
from gwasverify.gwas import rank_snps
from gwasverify.ldp import build_partial_noisy_dataset


def test_lrt_examples():
    assert lrt_statistic([1], [0.3], [0.2]) == pytest.approx(math.log(1.5))
    assert lrt_statistic([0], [0.3], [0.2]) == pytest.approx(math.log(0.7 / 0.8))
    assert lrt_statistic([2, 0, 1], [0.1, 0.4, 0.3], [0.1, 0.4, 0.3]) == 0.0


def test_lrt_per_allele_differs_by_target_free_constant():
    rng = np.random.default_rng(0)
    a, p = rng.uniform(0.05, 0.5, 30), rng.uniform(0.05, 0.5, 30)
    x = rng.integers(0, 3, (10, 30))
    diff = lrt_scores(x, a, p, per_allele=True) - lrt_scores(x, a, p)
    assert np.allclose(diff, diff[0])


def test_lrt_clamps_and_validates():
    rec = ClampRecord()
    s = lrt_statistic([1, 0], [0.0, 1.0], [0.2, 0.2], record=rec)
    assert math.isfinite(s) and rec.clamped == 2
    with pytest.raises(ValueError):
        lrt_statistic([1], [1.2], [0.2])
    with pytest.raises(ValueError):
        lrt_statistic([1, 1], [0.2], [0.2])


def test_edit_distance_examples():
    assert edit_distance([0, 1, 2], [0, 1, 2]) == 0
    assert edit_distance([0, 1, 2], [0, 2, 2]) == 1
    assert edit_distance([0, 1, 2, 0], [1, 2, 0, 2]) == 4
    with pytest.raises(ValueError):
        edit_distance([0, 1], [0, 1, 2])


def test_edit_distance_score_minimizes_over_cases(research):
    ids = list(research.snp_ids[:25])
    partial = build_partial_noisy_dataset(research, ids, 1e6, seed=0)
    member = research.genotypes[0, :25]
    assert edit_distance_score(member, partial) == 0
    wide = research.genotypes[0]
    assert edit_distance_score(wide, partial, research.snp_ids) == 0


def test_attack_power_threshold_rule():
    a = np.arange(20, dtype=float)
    res = attack_power(a, [18.5, 19.5, 3.0], HIGHER, 0.05)
    # 19 of 20 outsiders stay at or below gamma
    assert res.gamma == 18.0
    assert res.power == pytest.approx(2 / 3)
    low = attack_power(a, [0.5, -1.0, 10.0], LOWER, 0.05)
    assert low.gamma == 1.0 and low.power == pytest.approx(2 / 3)


def test_attack_power_null_and_separated():
    rng = np.random.default_rng(1)
    null = np.mean([attack_power(rng.normal(size=200), rng.normal(size=200)).power for _ in range(200)])
    assert abs(null - 0.05) < 0.02
    assert attack_power([0, 1, 2], [10, 11]).power == 1.0


def test_power_curve_shapes(tmp_path, research, small_config):
    outsiders = draw_population(small_config, 100, seed=1)
    panel = draw_population(small_config, 300, seed=2)
    ranking = rank_snps(research)
    pos = research.snp_index

    class R:
        def __init__(self, reported=None, partial=None):
            self.reported, self.partial = reported, partial

    def cohorts(rs):
        return draw_cohorts(research, outsiders, 25, 25, rs)

    lrt = power_curve(research, lambda v, e, rs: R(reported=ranking.head(v)), LRT, [10, 30], [None], cohorts, 0,
                      reps=4, pop_freqs=lambda ids: panel[:, [pos[s] for s in ids]].mean(0) / 2)
    ed = power_curve(research, lambda v, e, rs: R(partial=build_partial_noisy_dataset(
        research, list(ranking.snp_ids[:v]), e, rs)), EDIT_DISTANCE, [10, 30], [1.0, 50.0], cohorts, 0, reps=4)
    assert [(r.axis, r.value) for r in lrt] == [("l", 10), ("l", 30)]
    assert len(ed) == 4 and all(len(r.per_rep) == 4 for r in ed)
    # noiseless partial: members are found exactly
    assert ed[-1].power == 1.0
    write_power_csv(lrt + ed, tmp_path / "p.csv")
    assert (tmp_path / "p.csv").read_text().splitlines()[0] == "attack,axis,value,epsilon,gamma,power"
    with pytest.raises(ValueError):
        power_curve(research, None, LRT, [30, 10], [None], cohorts, 0)
    with pytest.raises(ValueError):
        power_curve(research, None, LRT, [10], [None], cohorts, 0, pop_freqs=None)


def test_cohort_validation(research):
    with pytest.raises(ValueError):
        draw_cohorts(research, np.zeros((5, research.m), dtype=np.int8), 25, 25, 0)

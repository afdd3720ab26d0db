import math

import numpy as np
import pytest

from gwasverify._seeding import rng_for
from gwasverify.errors import UnidentifiableError
from gwasverify.gwas import rank_snps
from gwasverify.ldp import (
    PartialNoisyDataset,
    SensitivityModel,
    build_partial_noisy_dataset,
    estimate_counts,
    laplace_perturb_statistics,
    perturb_column,
    perturb_value,
    round_to_total,
    rr_probabilities,
    sample_partial_dataset,
)


def test_rr_probabilities_ln2():
    p = rr_probabilities(math.log(2))
    assert p.p_keep == pytest.approx(0.5, abs=1e-15)
    assert p.q_flip == pytest.approx(0.25, abs=1e-15)


def test_rr_limits():
    big = rr_probabilities(50)
    assert big.p_keep == pytest.approx(1.0) and big.q_flip < 1e-20
    tiny = rr_probabilities(1e-9)
    assert tiny.p_keep == pytest.approx(1 / 3, abs=1e-8) and tiny.q_flip == pytest.approx(1 / 3, abs=1e-8)
    huge = rr_probabilities(1e6)
    assert huge.p_keep == 1.0 and huge.q_flip == 0.0
    with pytest.raises(ValueError):
        rr_probabilities(0)


def test_perturb_value_domain():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        perturb_value(3, rr_probabilities(1), rng)
    assert all(perturb_value(v, rr_probabilities(1e6), rng) == v for v in (0, 1, 2))


def test_flip_targets_symmetric():
    x = np.zeros(200_000, dtype=np.int8)
    out = perturb_column(x, rr_probabilities(math.log(2)), rng_for(1, "sym"))
    n1, n2 = np.sum(out == 1), np.sum(out == 2)
    sigma = math.sqrt(x.size * 0.25 * 0.75)
    assert abs(n1 - n2) < 3 * math.sqrt(2) * sigma


def test_partial_dataset_identity_and_tag(research):
    ids = list(research.snp_ids[:100])
    same = build_partial_noisy_dataset(research, ids, 1e6, seed=1)
    assert np.array_equal(same.genotypes, research.genotypes[:, :100])
    p = build_partial_noisy_dataset(research, ids, 3, seed=1)
    assert p.mechanism.describe() == "RR{3}"
    assert np.array_equal(p.labels, research.labels)


def test_two_seeds_differ_at_expected_rate(research):
    ids = list(research.snp_ids[:200])
    a = build_partial_noisy_dataset(research, ids, 3, seed=1).genotypes
    b = build_partial_noisy_dataset(research, ids, 3, seed=2).genotypes
    pk = rr_probabilities(3).p_keep
    # P(differ) for two independent reports of the same value
    q = (1 - pk) / 2
    p_diff = 1 - (pk ** 2 + 2 * q ** 2)
    n = a.size
    assert abs(np.mean(a != b) - p_diff) < 3 * math.sqrt(p_diff * (1 - p_diff) / n)


def test_partial_roundtrip(tmp_path, research):
    p = build_partial_noisy_dataset(research, list(research.snp_ids[:20]), 2, seed=3)
    path = p.write(tmp_path / "part.tsv")
    assert PartialNoisyDataset.read(path).equals(p)


def test_estimate_counts_example():
    params = rr_probabilities(math.log(2))
    raw = estimate_counts(np.array([40, 30, 30]), params, postprocess=False)
    assert np.allclose(raw, [60, 20, 20])


def test_estimate_counts_identity():
    params = rr_probabilities(1e6)
    c = np.array([[5, 7, 0], [1, 1, 10]])
    assert np.allclose(estimate_counts(c, params), c)


def test_estimate_counts_postprocess():
    params = rr_probabilities(1.0)
    raw = estimate_counts(np.array([2, 50, 48]), params, postprocess=False)
    assert raw.min() < 0
    post = estimate_counts(np.array([2, 50, 48]), params)
    assert post.min() >= 0 and post.sum() == pytest.approx(100)


def test_estimate_counts_unidentifiable():
    params = rr_probabilities(1.0)
    flat = type(params)(params.epsilon, 3, 1 / 3, 1 / 3)
    with pytest.raises(UnidentifiableError):
        estimate_counts(np.array([1, 1, 1]), flat)


def test_round_to_total():
    r = round_to_total(np.array([[1.4, 1.3, 2.3], [0.5, 0.5, 0.0]]), np.array([5, 1]))
    assert r.sum(axis=1).tolist() == [5, 1]
    assert r[0].tolist() == [2, 1, 2]
    assert r[1].tolist() == [1, 0, 0]


def test_sampling_partial(research):
    ids = list(research.snp_ids[:50])
    p = sample_partial_dataset(research, ids, 3, seed=1)
    assert p.genotypes.shape == (40, 50)
    assert p.labels.sum() == 20
    assert p.mechanism.kind == "sampling"
    assert p.equals(sample_partial_dataset(research, ids, 3, seed=1))
    with pytest.raises(ValueError):
        sample_partial_dataset(research, ids, 61, seed=1)
    # each column comes from one partition's rows
    rows = {tuple(r) for r in research.genotypes[:, :50].T.tolist()}
    assert rows  # smoke: shapes aligned


def test_laplace_limits_and_scale(research):
    stats = rank_snps(research).head(5).records()
    model = SensitivityModel(n_case=60)
    same = laplace_perturb_statistics(stats, 1e12, model, seed=0)
    for a, b in zip(stats, same):
        assert b.p_value == pytest.approx(a.p_value, abs=1e-9)
        assert b.odds_ratio == pytest.approx(a.odds_ratio, abs=1e-9)
    scales = [1 / e for e in (1, 3, 5)]
    assert scales == sorted(scales, reverse=True)


def test_laplace_noise_moments():
    from gwasverify.gwas import SnpStatistics
    stats = [SnpStatistics(f"x{i}", 10.0, 0.5, 0.5) for i in range(100_000)]
    out = laplace_perturb_statistics(stats, 2.0, SensitivityModel(p_value=0.01, odds_ratio=1.0, maf=0.001), seed=4)
    noise = np.array([s.odds_ratio for s in out]) - 10.0
    b = 0.5
    se = math.sqrt(2) * b / math.sqrt(noise.size)
    assert abs(noise.mean()) < 3 * se
    assert np.mean(np.abs(noise)) == pytest.approx(b, rel=0.02)


def test_laplace_clamps_domains():
    from gwasverify.gwas import SnpStatistics
    stats = [SnpStatistics(f"x{i}", 0.5, 0.01, 0.02) for i in range(200)]
    out = laplace_perturb_statistics(stats, 0.1, SensitivityModel(n_case=60), seed=1)
    assert all(1e-300 <= s.p_value <= 1 and 0 <= s.maf <= 1 and s.odds_ratio > 0 for s in out)

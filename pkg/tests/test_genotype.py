import numpy as np
import pytest

from gwasverify.errors import DatasetFormatError, EmptyGroupError, GenotypeDomainError, InfeasibleConfigError
from gwasverify.genotype import (
    CaseControlDataset,
    SynthesisConfig,
    draw_population,
    load_dataset,
    load_panel,
    partition_dataset,
    random_label,
    snp_model,
    synthesize_dataset,
    write_dataset,
    write_panel,
)
from gwasverify.gwas import rank_snps

TSV = "sample_id\tlabel\tr1\tr2\tr3\na\tcase\t0\t1\t2\nb\tcase\t1\t1\t0\nc\tcontrol\t2\t0\t1\nd\tcontrol\t0\t2\t2\n"


def test_load_small_tsv(tmp_path):
    p = tmp_path / "d.tsv"
    p.write_text(TSV)
    ds = load_dataset(p)
    assert (ds.n, ds.m, ds.n_case, ds.n_control) == (4, 3, 2, 2)
    assert ds.snp_ids == ("r1", "r2", "r3")
    assert ds.genotypes.dtype == np.int8


def test_roundtrip(tmp_path, tiny):
    p = tmp_path / "d.tsv"
    write_dataset(tiny, p)
    assert load_dataset(p).equals(tiny)


@pytest.mark.parametrize("text,err", [
    (TSV.replace("\t2\n", "\t3\n", 1), GenotypeDomainError),
    (TSV.replace("control", "case"), EmptyGroupError),
    (TSV.replace("sample_id", "id"), DatasetFormatError),
    (TSV.replace("\t0\t1\t2\n", "\t0\t1\n", 1), DatasetFormatError),
    (TSV.replace("control", "ctrl", 1), DatasetFormatError),
])
def test_load_rejects(tmp_path, text, err):
    p = tmp_path / "bad.tsv"
    p.write_text(text)
    with pytest.raises(err):
        load_dataset(p)


def test_error_codes(tmp_path):
    p = tmp_path / "bad.tsv"
    p.write_text(TSV.replace("\t2\n", "\t7\n", 1))
    with pytest.raises(GenotypeDomainError) as info:
        load_dataset(p)
    assert info.value.code == "E_DOMAIN"


def test_dataset_is_immutable(tiny):
    with pytest.raises(ValueError):
        tiny.genotypes[0, 0] = 1


def test_duplicate_snp_ids_rejected():
    with pytest.raises(DatasetFormatError):
        CaseControlDataset(("a", "b"), [True, False], ("x", "x"), np.zeros((2, 2), dtype=np.int8))


def test_synthesis_deterministic():
    cfg = SynthesisConfig(m=200, seed=5)
    a, b = synthesize_dataset(cfg), synthesize_dataset(cfg)
    assert a.equals(b)
    assert not a.equals(synthesize_dataset(cfg.replace(seed=6)))
    assert (a.n_case, a.n_control) == (60, 60)


def test_synthesis_config_validation():
    with pytest.raises(InfeasibleConfigError):
        SynthesisConfig(n_associated=10, m=5)
    with pytest.raises(InfeasibleConfigError):
        SynthesisConfig(maf_spectrum="flat")
    with pytest.raises(InfeasibleConfigError):
        SynthesisConfig(baseline_maf_range=(0.2, 0.7))


def test_config_text_roundtrip(tmp_path):
    cfg = SynthesisConfig(m=300, n_associated=7, effect_range=(0.1, 0.3), maf_spectrum="neutral", seed=9)
    assert SynthesisConfig.from_text(cfg.to_text()) == cfg
    p = tmp_path / "c.cfg"
    p.write_text(cfg.to_text())
    assert SynthesisConfig.from_file(p) == cfg


def test_null_synthesis_has_nominal_false_positive_rate():
    rates = []
    for seed in range(20):
        ds = synthesize_dataset(SynthesisConfig(m=500, n_associated=0, seed=seed))
        rates.append(np.mean(rank_snps(ds).p_value < 0.05))
    # 2x2 Wald test on n=120 is close to nominal; allow Monte-Carlo margin
    assert 0.02 < np.mean(rates) < 0.08


def test_planted_strong_associations_reach_top100():
    hits = []
    for seed in range(20):
        cfg = SynthesisConfig(m=5000, n_associated=50, effect_range=(0.25, 0.25), seed=seed)
        ds = synthesize_dataset(cfg)
        top = set(rank_snps(ds).head(100).snp_ids.tolist())
        planted = {ds.snp_ids[j] for j in snp_model(cfg).associated}
        hits.append(len(top & planted))
    assert np.mean(hits) >= 40


def test_block_ld_keeps_blocks_correlated():
    ds = synthesize_dataset(SynthesisConfig(m=40, n_associated=2, ld_block_size=4, seed=3))
    g = ds.genotypes.astype(float)
    r = np.corrcoef(g[:, 0], g[:, 1])[0, 1]
    assert r ** 2 > 0.5


def test_partition_snps_disjoint(research):
    parts = partition_dataset(research, 5, "snps", seed=1)
    ids = [set(p.snp_ids) for p in parts]
    assert sum(len(s) for s in ids) == research.m
    assert set().union(*ids) == set(research.snp_ids)
    assert max(map(len, ids)) - min(map(len, ids)) <= 1


def test_partition_samples_balanced(research):
    parts = partition_dataset(research, 3, "samples", seed=1)
    assert [(p.n_case, p.n_control) for p in parts] == [(20, 20)] * 3


def test_partition_rejects_one_part(research):
    with pytest.raises(ValueError):
        partition_dataset(research, 1)


def test_random_label_balanced_and_null(research):
    a = random_label(research, 4)
    assert a.n_case == 60 and a.n_control == 60
    assert np.array_equal(a.labels, random_label(research, 4).labels)
    assert np.array_equal(a.genotypes, research.genotypes)


def test_random_label_fpr_near_nominal():
    rates = []
    for seed in range(20):
        ds = random_label(synthesize_dataset(SynthesisConfig(m=500, n_associated=20, seed=seed)), seed)
        rates.append(np.mean(rank_snps(ds).p_value < 0.05))
    assert 0.02 < np.mean(rates) < 0.08


def test_panel_roundtrip(tmp_path, small_config):
    g = draw_population(small_config, 30, seed=2)
    ids = [f"snp{i:06d}" for i in range(small_config.m)]
    write_panel(g, ids, tmp_path / "p.tsv")
    got_ids, got = load_panel(tmp_path / "p.tsv")
    assert got_ids == tuple(ids)
    assert np.array_equal(got, g)

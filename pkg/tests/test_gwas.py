import math

import mpmath
import numpy as np
import pytest

from gwasverify.errors import DegenerateTableError
from gwasverify.gwas import (
    ContingencyTable,
    GwasTable,
    compute_statistics,
    contingency_table,
    rank_snps,
    run_gwas,
)

mpmath.mp.dps = 40


def oracle(t: ContingencyTable) -> dict:
    """High-precision evaluation of the collapsed 2x2 statistics."""
    s0, s12, c0, c12 = (mpmath.mpf(x) for x in t.collapsed())
    o = c0 * s12 / (s0 * c12)
    se = mpmath.sqrt(1 / s12 + 1 / s0 + 1 / c12 + 1 / c0)
    z = mpmath.log(o) / se
    p = 2 * (1 - mpmath.ncdf(abs(z)))
    a = (mpmath.mpf(t.S1) + 2 * t.S2) / (2 * (mpmath.mpf(t.S)))
    lo = mpmath.exp(mpmath.log(o) - mpmath.mpf("1.96") * se)
    hi = mpmath.exp(mpmath.log(o) + mpmath.mpf("1.96") * se)
    return {"odds_ratio": o, "se": se, "z": z, "p_value": p, "maf": a, "ci_low": lo, "ci_high": hi}


def test_tally_example():
    t = contingency_table([0, 0, 1, 2, 0, 1, 1, 2], [True] * 4 + [False] * 4)
    assert (t.S0, t.S1, t.S2, t.C0, t.C1, t.C2) == (2, 1, 1, 1, 2, 1)


def test_tally_all_zero_and_empty():
    t = contingency_table([0] * 6, [True, True, True, False, False, False])
    assert (t.S0, t.C0, t.S1 + t.S2 + t.C1 + t.C2) == (3, 3, 0)
    with pytest.raises(ValueError):
        contingency_table([], [])


def test_worked_example():
    s = compute_statistics(ContingencyTable(2, 1, 1, 1, 2, 1))
    assert s.odds_ratio == pytest.approx(1 / 3, rel=1e-12)
    assert s.maf == 0.375
    assert s.se == pytest.approx(1.5275252316519468, rel=1e-12)
    assert s.p_value == pytest.approx(0.4720112, abs=5e-8)
    ref = oracle(ContingencyTable(2, 1, 1, 1, 2, 1))
    assert s.p_value == pytest.approx(float(ref["p_value"]), rel=1e-12)


def test_identical_groups():
    s = compute_statistics(ContingencyTable(3, 2, 1, 3, 2, 1))
    assert s.odds_ratio == 1.0 and s.z == 0.0 and s.p_value == 1.0


def test_zero_cell_correction_only_when_needed():
    corrected = compute_statistics(ContingencyTable(0, 3, 1, 2, 1, 1))
    # 2x2 view (0, 4, 2, 2) becomes (0.5, 4.5, 2.5, 2.5)
    assert corrected.odds_ratio == pytest.approx(2.5 * 4.5 / (0.5 * 2.5))
    plain = compute_statistics(ContingencyTable(1, 3, 1, 2, 1, 1))
    assert plain.odds_ratio == pytest.approx(2 * 4 / (1 * 2))
    with pytest.raises(DegenerateTableError):
        compute_statistics(ContingencyTable(0, 3, 1, 2, 1, 1), continuity_correction=False)


def test_p_floor():
    s = compute_statistics(ContingencyTable(10**6, 10**8, 0, 10**8, 10**6, 0))
    assert s.p_value == 1e-300


def test_ranking_contract(research):
    full = rank_snps(research)
    assert len(full) == research.m
    assert np.all(np.diff(full.p_value) >= 0)
    top = run_gwas(research, 100)
    assert len(top) == 100
    assert [s.snp_id for s in top] == full.snp_ids[:100].tolist()
    assert len(run_gwas(research, 1, full=True)) == research.m


def test_ranking_ties_broken_by_id(tiny):
    r = rank_snps(tiny)
    keys = list(zip(r.p_value, r.snp_ids))
    assert keys == sorted(keys)


def test_csv_roundtrip(tmp_path, research):
    t = rank_snps(research).head(30)
    t.to_csv(tmp_path / "s.csv")
    back = GwasTable.read_csv(tmp_path / "s.csv")
    assert back.snp_ids.tolist() == t.snp_ids.tolist()
    for col in ("odds_ratio", "p_value", "maf", "se", "ci_low", "ci_high", "z"):
        assert np.array_equal(getattr(back, col), getattr(t, col))


def test_records_roundtrip(research):
    t = rank_snps(research).head(10)
    back = GwasTable.from_records(t.records())
    assert np.array_equal(back.p_value, t.p_value)
    assert back.snp_ids.tolist() == t.snp_ids.tolist()


def test_swap_symmetry_example():
    t = ContingencyTable(5, 7, 2, 9, 3, 1)
    a, b = compute_statistics(t), compute_statistics(t.swapped())
    assert a.odds_ratio * b.odds_ratio == pytest.approx(1.0, rel=1e-12)
    assert a.p_value == pytest.approx(b.p_value, rel=1e-12)
    assert math.isclose(a.z, -b.z, rel_tol=1e-12)

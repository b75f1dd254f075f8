import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from isodiff.baselines import bh_adjust, center_spectra, mean_normalize, protein_ttest, welch_ttest
from isodiff.simulate import SimulationSpec, simulate_dataset


def test_welch_fixture():
    t, df, p = welch_ttest([1, 2, 3], [2, 3, 4])
    assert t == pytest.approx(-1.224744871391589)
    assert df == pytest.approx(4.0)
    assert p == pytest.approx(0.2878641347266908)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 12), st.integers(2, 12), st.floats(0.1, 5))
def test_welch_matches_scipy(seed, na, nb, scale):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(0, 1, na), rng.normal(0.3, scale, nb)
    ref = stats.ttest_ind(a, b, equal_var=False)
    t, df, p = welch_ttest(a, b)
    assert t == pytest.approx(ref.statistic, rel=1e-10)
    assert p == pytest.approx(ref.pvalue, rel=1e-8, abs=1e-300)


def test_welch_degenerate():
    assert welch_ttest([1, 1], [1, 1]) == (0.0, 2.0, 1.0)
    t, _, p = welch_ttest([2, 2], [1, 1])
    assert t == np.inf and p == 0.0
    with pytest.raises(ValueError):
        welch_ttest([1], [1, 2])


def test_bh_fixtures():
    assert bh_adjust([0.01, 0.02, 0.03, 0.04]) == pytest.approx([0.04] * 4)
    assert bh_adjust([0.04, 0.01, 0.03, 0.02]) == pytest.approx([0.04] * 4)
    assert bh_adjust([0.01, 0.04, 0.5]) == pytest.approx([0.03, 0.06, 0.5])
    assert bh_adjust([0.9, 0.95]) == pytest.approx([0.95, 0.95])
    assert bh_adjust([]).size == 0
    with pytest.raises(ValueError):
        bh_adjust([0.1, 1.5])


def bh_reference(p):
    n = len(p)
    ranks = stats.rankdata(p, method="max")
    return np.array([min(1.0, min(p[j] * n / ranks[j] for j in range(n) if p[j] >= p[i])) for i in range(n)])


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=40))
def test_bh_properties(pvals):
    p = np.asarray(pvals)
    q = bh_adjust(p)
    assert q == pytest.approx(bh_reference(p), abs=1e-12)
    assert np.all(q >= p - 1e-15) and np.all(q <= 1)
    order = np.argsort(p, kind="stable")
    assert np.all(np.diff(q[order]) >= -1e-15)
    perm = np.random.default_rng(len(p)).permutation(len(p))
    assert bh_adjust(p[perm]) == pytest.approx(q[perm])


def null_dataset(seed=0):
    spec = SimulationSpec(((3, 3), (3, 3)), (1, 1), 400, de_prob=(0.0,), seed=seed)
    return simulate_dataset(spec)[0]


def test_mean_normalize_zeroes_sample_means():
    ds = mean_normalize(null_dataset())
    means = np.bincount(ds.sample_index, weights=ds.y) / ds.count_per_sample
    assert means == pytest.approx(0, abs=1e-10)


def test_mean_normalize_is_idempotent():
    once = mean_normalize(null_dataset(1))
    assert mean_normalize(once).y == pytest.approx(once.y, abs=1e-12)


def test_center_spectra_removes_spectrum_level():
    ds = center_spectra(null_dataset())
    key = ds.experiment * ds.design.num_spectra + ds.spectrum_index
    sums = np.bincount(key, weights=ds.y)
    assert sums == pytest.approx(0, abs=1e-9)


def test_null_pvalues_are_uniform():
    table = protein_ttest(mean_normalize(null_dataset(2)))
    p = table["p"].dropna().to_numpy()
    assert len(p) == 400
    assert stats.kstest(p, "uniform").pvalue > 0.001
    assert table["significant"].sum() <= 2


def test_ttest_finds_shift_and_sign():
    spec = SimulationSpec(((3, 3), (3, 3)), (1, 1), 50, de_prob=(0.0,), seed=3,
                          fixed_effects={(2, 1): 1.0, (2, 2): -1.0}, fixed_spectra={1: 8, 2: 8})
    table = protein_ttest(mean_normalize(simulate_dataset(spec)[0]))
    assert table.loc[0, "t"] > 0 and table.loc[1, "t"] < 0
    assert table.loc[:1, "significant"].all()
    flipped = protein_ttest(mean_normalize(simulate_dataset(spec)[0]), group_a=1, group_b=2)
    assert flipped.loc[0, "t"] == pytest.approx(-table.loc[0, "t"])


def test_untestable_proteins_are_excluded():
    ds = null_dataset()
    # leave protein 1 with a single treatment observation
    treated = np.flatnonzero((ds.protein == 0) & (ds.group == 1))
    drop = np.zeros(len(ds), dtype=bool)
    drop[treated[1:]] = True
    table = protein_ttest(ds.subset(~drop))
    assert not table.loc[0, "testable"] and np.isnan(table.loc[0, "q"]) and not table.loc[0, "significant"]
    assert table["testable"].sum() == 399

"""Comparison pipeline: per-sample mean normalisation, per-protein Welch
t-tests on log intensities and Benjamini-Hochberg adjustment."""

from __future__ import annotations

import math

import numpy as np
import pandas as pd
from scipy import stats

from .data import Dataset

BASELINE_COLUMNS = ["protein", "t", "df", "p", "q", "significant"]


def mean_normalize(dataset: Dataset) -> Dataset:
    """Subtract each sample's mean log intensity from its observations."""
    d = dataset.design
    counts = dataset.count_per_sample
    if (counts == 0).any():
        empty = [tuple(int(v) for v in d.sample_coords[s]) for s in np.flatnonzero(counts == 0)]
        raise ValueError(f"samples without observations: {empty}")
    means = np.bincount(dataset.sample_index, weights=dataset.y, minlength=d.num_samples) / counts
    return dataset.with_intensities(dataset.y - means[dataset.sample_index])


def center_spectra(dataset: Dataset) -> Dataset:
    """Remove each spectrum's mean within each experiment, so the
    peptide-level intensity drops out and only between-sample differences remain."""
    d = dataset.design
    key = dataset.experiment * d.num_spectra + dataset.spectrum_index
    size = d.num_experiments * d.num_spectra
    means = np.bincount(key, weights=dataset.y, minlength=size) / np.maximum(np.bincount(key, minlength=size), 1)
    return dataset.with_intensities(dataset.y - means[key])


def welch_ttest(a, b) -> tuple[float, float, float]:
    """Two-sided Welch t-test of mean(a) - mean(b); returns (t, df, p)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise ValueError("each group needs at least two values")
    va, vb = a.var(ddof=1) / na, b.var(ddof=1) / nb
    diff = a.mean() - b.mean()
    se2 = va + vb
    if se2 == 0:
        if diff == 0:
            return 0.0, float(na + nb - 2), 1.0
        return math.copysign(math.inf, diff), float(na + nb - 2), 0.0
    t = diff / math.sqrt(se2)
    df = se2 ** 2 / (va ** 2 / (na - 1) + vb ** 2 / (nb - 1))
    p = 2.0 * stats.t.sf(abs(t), df)
    return float(t), float(df), float(min(p, 1.0))


def bh_adjust(pvalues) -> np.ndarray:
    """Benjamini-Hochberg step-up q-values, returned in input order."""
    p = np.asarray(pvalues, dtype=float)
    if p.size == 0:
        return p.copy()
    if ((p < 0) | (p > 1) | ~np.isfinite(p)).any():
        raise ValueError("p-values must lie in [0, 1]")
    n = len(p)
    order = np.argsort(p, kind="stable")
    scaled = p[order] * n / np.arange(1, n + 1)
    q_sorted = np.minimum.accumulate(scaled[::-1])[::-1]
    q = np.empty(n)
    q[order] = np.minimum(q_sorted, 1.0)
    return q


def protein_ttest(
    dataset: Dataset,
    group_a: int = 2,
    group_b: int = 1,
    level: float = 0.05,
    spectrum_centering: bool = True,
) -> pd.DataFrame:
    """Welch test per protein between two 1-based groups on pooled spectra.

    ``t`` is positive when ``group_a`` is higher. Proteins with fewer than two
    observations in either group are reported as untestable (NaN statistics)
    and left out of the BH adjustment. With ``spectrum_centering`` each
    spectrum's within-experiment mean is removed first, which cancels the
    spectrum-level intensity shared by both groups.
    """
    ds = center_spectra(dataset) if spectrum_centering else dataset
    P = ds.design.num_proteins
    ga, gb = group_a - 1, group_b - 1
    order = np.argsort(ds.protein, kind="stable")
    bounds = np.searchsorted(ds.protein[order], np.arange(P + 1))
    rows = []
    for j in range(P):
        idx = order[bounds[j]:bounds[j + 1]]
        ya = ds.y[idx][ds.group[idx] == ga]
        yb = ds.y[idx][ds.group[idx] == gb]
        if len(ya) < 2 or len(yb) < 2:
            rows.append((j + 1, np.nan, np.nan, np.nan))
        else:
            rows.append((j + 1, *welch_ttest(ya, yb)))
    table = pd.DataFrame(rows, columns=["protein", "t", "df", "p"])
    testable = table["p"].notna().to_numpy()
    q = np.full(P, np.nan)
    q[testable] = bh_adjust(table.loc[testable, "p"].to_numpy())
    table["q"] = q
    table["significant"] = testable & (np.nan_to_num(q, nan=1.0) <= level)
    table["testable"] = testable
    return table

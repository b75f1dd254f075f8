"""Scientific summaries of sampler output: DE calls, effect sizes, predictive checks."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
import pandas as pd
from scipy.special import ndtr

from .data import Dataset
from .diagnostics import DiagnosticsReport, diagnostics  # noqa: F401  (re-exported)

DE_COLUMNS = ["group", "protein", "prob_de", "mean_effect", "sd_effect", "q2.5", "q97.5", "classified"]
PPC_COLUMNS = ["experiment", "group", "sample", "protein", "spectrum", "observed", "lo95", "hi95", "covered", "pit"]


def _treatment_cells(output):
    G, P = output.beta.shape[1:]
    g, j = np.meshgrid(np.arange(1, G), np.arange(P), indexing="ij")
    return g.ravel(), j.ravel()


def effect_summaries(output) -> pd.DataFrame:
    """Mean, sd and central 95% interval of beta*gamma per (group, protein).

    Draws with beta = 0 contribute exact zeros, so a protein that is only
    sometimes called DE shows a point mass at zero.
    """
    if len(output) == 0:
        raise ValueError("empty chain output")
    g, j = _treatment_cells(output)
    eff = output.effect[:, g, j]
    lo, hi = np.quantile(eff, [0.025, 0.975], axis=0)
    return pd.DataFrame(
        {
            "group": g + 1,
            "protein": j + 1,
            "mean_effect": eff.mean(axis=0),
            "sd_effect": eff.std(axis=0, ddof=1) if len(output) > 1 else np.zeros(len(g)),
            "q2.5": lo,
            "q97.5": hi,
        }
    )


def de_probabilities(output, threshold: float = 0.5) -> pd.DataFrame:
    """Posterior probability of DE (fraction of draws with beta = 1) per
    treatment group and protein; ``classified`` is ``prob_de > threshold``."""
    if len(output) == 0:
        raise ValueError("empty chain output")
    g, j = _treatment_cells(output)
    prob = output.beta[:, g, j].mean(axis=0, dtype=float)
    table = effect_summaries(output)
    table.insert(2, "prob_de", prob)
    table["classified"] = prob > threshold
    return table[DE_COLUMNS]


def classification_counts(table: pd.DataFrame, truth_beta: np.ndarray) -> pd.DataFrame:
    """Confusion counts per treatment group against known DE indicators (G, P)."""
    rows = []
    for g, sub in table.groupby("group"):
        actual = truth_beta[g - 1, sub["protein"].to_numpy() - 1] == 1
        called = sub["classified"].to_numpy()
        tp, fp = int((called & actual).sum()), int((called & ~actual).sum())
        fn, tn = int((~called & actual).sum()), int((~called & ~actual).sum())
        rows.append(
            {"group": g, "tp": tp, "fp": fp, "fn": fn, "tn": tn,
             "sensitivity": tp / max(tp + fn, 1), "fpr": fp / max(fp + tn, 1)}
        )
    return pd.DataFrame(rows)


def _select_rows(dataset: Dataset, coords: Iterable[Sequence[int]] | None) -> np.ndarray:
    if coords is None:
        return np.arange(len(dataset))
    lookup = {
        (int(e) + 1, int(g) + 1, int(i) + 1, int(j) + 1, int(k) + 1): r
        for r, (e, g, i, j, k) in enumerate(
            zip(dataset.experiment, dataset.group, dataset.sample, dataset.protein, dataset.spectrum)
        )
    }
    rows = []
    for c in coords:
        key = tuple(int(v) for v in c)
        if key not in lookup:
            raise KeyError(f"no observation at coordinate (e,g,i,j,k)={key}")
        rows.append(lookup[key])
    return np.asarray(rows, dtype=np.int64)


def _predictive_params(output, dataset: Dataset, rows: np.ndarray):
    """Per-state means (N, len(rows)) and sds (N,)."""
    s = dataset.sample_index[rows]
    t = dataset.spectrum_index[rows]
    g, j = dataset.group[rows], dataset.protein[rows]
    mean = output.kappa[:, s] + output.alpha[:, t] + output.beta[:, g, j] * output.gamma[:, g, j]
    return mean, output.sigma


def posterior_predictive(
    output,
    dataset: Dataset,
    coords: Iterable[Sequence[int]] | None = None,
    rng: np.random.Generator | int | None = 0,
    level: float = 0.95,
    chunk: int = 2048,
) -> pd.DataFrame:
    """One predictive draw per stored state for each selected observation.

    Coordinates are 1-based (experiment, group, sample, protein, spectrum);
    ``None`` selects every observation. ``pit`` is the exact predictive CDF
    at the observed value (average of normal CDFs over states).
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    rows = _select_rows(dataset, coords)
    tail = (1.0 - level) / 2.0
    lo = np.empty(len(rows))
    hi = np.empty(len(rows))
    pit = np.empty(len(rows))
    sd = output.sigma[:, None]
    for start in range(0, len(rows), chunk):
        block = rows[start:start + chunk]
        mean, _ = _predictive_params(output, dataset, block)
        draws = mean + sd * rng.standard_normal(mean.shape)
        lo[start:start + len(block)], hi[start:start + len(block)] = np.quantile(draws, [tail, 1 - tail], axis=0)
        y = dataset.y[block]
        pit[start:start + len(block)] = ndtr((y - mean) / sd).mean(axis=0)
    y = dataset.y[rows]
    return pd.DataFrame(
        {
            "experiment": dataset.experiment[rows] + 1,
            "group": dataset.group[rows] + 1,
            "sample": dataset.sample[rows] + 1,
            "protein": dataset.protein[rows] + 1,
            "spectrum": dataset.spectrum[rows] + 1,
            "observed": y,
            "lo95": lo,
            "hi95": hi,
            "covered": (y >= lo) & (y <= hi),
            "pit": pit,
        }
    )


def predictive_density(output, dataset: Dataset, coords, grid: np.ndarray) -> np.ndarray:
    """Mixture-of-normals predictive density on ``grid`` for each selected
    observation; returns shape (len(coords), len(grid))."""
    rows = _select_rows(dataset, coords)
    mean, sigma = _predictive_params(output, dataset, rows)
    grid = np.asarray(grid, dtype=float)
    z = (grid[None, None, :] - mean[:, :, None]) / sigma[:, None, None]
    dens = np.exp(-0.5 * z ** 2) / (np.sqrt(2 * np.pi) * sigma[:, None, None])
    return dens.mean(axis=0)


def density_grid(output, dataset: Dataset, coords, points: int = 200) -> pd.DataFrame:
    """Plot-ready predictive densities: one row per (observation, grid point).

    Each grid spans the predictive mean +/- 5 predictive sds.
    """
    rows = _select_rows(dataset, coords)
    mean, sigma = _predictive_params(output, dataset, rows)
    centre = mean.mean(axis=0)
    spread = np.sqrt(mean.var(axis=0) + np.mean(sigma ** 2))
    frames = []
    for q, r in enumerate(rows):
        grid = np.linspace(centre[q] - 5 * spread[q], centre[q] + 5 * spread[q], points)
        frames.append(pd.DataFrame({
            "experiment": dataset.experiment[r] + 1, "group": dataset.group[r] + 1,
            "sample": dataset.sample[r] + 1, "protein": dataset.protein[r] + 1,
            "spectrum": dataset.spectrum[r] + 1, "observed": dataset.y[r],
            "x": grid, "density": predictive_density(output, dataset, [coords[q]], grid)[0],
        }))
    return pd.concat(frames, ignore_index=True)


def ma_plot_data(dataset: Dataset, sample_a: Sequence[int], sample_b: Sequence[int]) -> pd.DataFrame:
    """m = y_b - y_a and a = (y_a + y_b)/2 for spectra observed in both samples.

    Samples are 1-based (experiment, group, sample) coordinates.
    """
    d = dataset.design
    sa, sb = d.sample_id(*sample_a), d.sample_id(*sample_b)
    ya = pd.Series(dataset.y[dataset.sample_index == sa], index=dataset.spectrum_index[dataset.sample_index == sa])
    yb = pd.Series(dataset.y[dataset.sample_index == sb], index=dataset.spectrum_index[dataset.sample_index == sb])
    common = ya.index.intersection(yb.index).sort_values()
    if len(common) == 0:
        raise ValueError(f"samples {tuple(sample_a)} and {tuple(sample_b)} share no observed spectra")
    a_vals, b_vals = ya.loc[common].to_numpy(), yb.loc[common].to_numpy()
    jk = d.spectrum_coords[common.to_numpy()]
    return pd.DataFrame({"protein": jk[:, 0], "spectrum": jk[:, 1], "a": (a_vals + b_vals) / 2, "m": b_vals - a_vals})

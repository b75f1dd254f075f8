"""Autocorrelation, effective sample size and split-chain R-hat."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd


class InsufficientSamplesError(ValueError):
    pass


MIN_DRAWS = 50


def autocorrelation(x: np.ndarray, max_lag: int | None = None) -> np.ndarray:
    """Standard sample autocorrelation of a 1-D series at lags 0..max_lag (FFT based)."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    max_lag = n - 1 if max_lag is None else min(max_lag, n - 1)
    xc = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    acov = np.fft.irfft(f * np.conj(f), size)[: max_lag + 1] / n
    if acov[0] <= 0:
        out = np.full(max_lag + 1, np.nan)
        out[0] = 1.0
        return out
    return acov / acov[0]


def _autocovariance(x: np.ndarray) -> np.ndarray:
    n = len(x)
    xc = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    return np.fft.irfft(f * np.conj(f), size)[:n] / n


def effective_sample_size(chains: np.ndarray) -> float:
    """Multi-chain ESS with Geyer's initial positive sequence truncation.

    ``chains`` has shape (num_chains, num_draws). Returns NaN for constant
    input. The estimate is capped at the total number of draws.
    """
    chains = np.atleast_2d(np.asarray(chains, dtype=float))
    m, n = chains.shape
    if n < 4:
        raise InsufficientSamplesError("need at least 4 draws per chain")
    acov = np.stack([_autocovariance(c) for c in chains])
    chain_var = acov[:, 0] * n / (n - 1.0)
    within = chain_var.mean()
    var_plus = within * (n - 1.0) / n
    if m > 1:
        var_plus += chains.mean(axis=1).var(ddof=1)
    if not var_plus > 0:
        return float("nan")
    rho = 1.0 - (within - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # sum consecutive pairs until the first non-positive pair
    total = 0.0
    prev_pair = np.inf
    for t in range(0, n - 1, 2):
        pair = rho[t] + rho[t + 1]
        if pair <= 0:
            break
        pair = min(pair, prev_pair)  # initial monotone sequence
        total += pair
        prev_pair = pair
    tau = -1.0 + 2.0 * total
    ess = m * n / tau if tau > 0 else m * n
    return float(min(ess, m * n))


def split_rhat(chains: np.ndarray) -> float:
    """Split-chain potential scale reduction; NaN when undefined (constant chains)."""
    chains = np.atleast_2d(np.asarray(chains, dtype=float))
    m, n = chains.shape
    half = n // 2
    if half < 2:
        raise InsufficientSamplesError("need at least 4 draws per chain")
    split = np.concatenate([chains[:, :half], chains[:, n - half:]])
    within = split.var(axis=1, ddof=1).mean()
    between = half * split.mean(axis=1).var(ddof=1)
    if not within > 0:
        return float("nan")
    var_plus = (half - 1.0) / half * within + between / half
    return float(np.sqrt(var_plus / within))


@dataclass
class DiagnosticsReport:
    table: pd.DataFrame  # one row per scalar parameter
    chain_summaries: pd.DataFrame  # one row per (parameter, chain)
    notes: list[str] = field(default_factory=list)

    def __getitem__(self, parameter: str) -> pd.Series:
        return self.table.set_index("parameter").loc[parameter]


def parameter_series(output, selector=None) -> dict[str, np.ndarray]:
    """Named per-state scalar series from a ChainOutput.

    ``selector`` is an iterable of families (``sigma``, ``tau``, ``kappa``,
    ``alpha``, ``effect``, ``beta``, ``gamma``) or explicit names such as
    ``kappa[1,2,1]``. The default covers sigma, free kappas and the
    treatment-group effects beta*gamma.
    """
    d = output.design
    selector = ["sigma", "kappa", "effect"] if selector is None else list(selector)
    series: dict[str, np.ndarray] = {}
    ref = set(d.reference_samples.tolist())
    for item in selector:
        if item == "sigma":
            series["sigma"] = output.sigma
        elif item == "tau":
            series["tau"] = output.tau
        elif item == "kappa":
            for s, (e, g, i) in enumerate(d.sample_coords):
                if s not in ref:
                    series[f"kappa[{e},{g},{i}]"] = output.kappa[:, s]
        elif item == "alpha":
            for t, (j, k) in enumerate(d.spectrum_coords):
                series[f"alpha[{j},{k}]"] = output.alpha[:, t]
        elif item in ("effect", "beta", "gamma"):
            values = output.effect if item == "effect" else getattr(output, item)
            for g in range(1, d.num_groups):
                for j in range(d.num_proteins):
                    series[f"{item}[{g + 1},{j + 1}]"] = values[:, g, j].astype(float)
        else:
            name, _, rest = item.partition("[")
            idx = tuple(int(v) for v in rest.rstrip("]").split(",")) if rest else ()
            if name == "kappa":
                series[item] = output.kappa[:, d.sample_id(*idx)]
            elif name == "alpha":
                series[item] = output.alpha[:, d.spectrum_id(*idx)]
            elif name in ("effect", "beta", "gamma", "p"):
                arr = output.effect if name == "effect" else getattr(output, name)
                series[item] = arr[:, idx[0] - 1, idx[1] - 1].astype(float)
            else:
                raise KeyError(f"unknown parameter selector {item!r}")
    return series


def diagnostics(output, params=None, max_lag: int = 20) -> DiagnosticsReport:
    """Per-parameter ESS, split R-hat and autocorrelation at lags 1..max_lag.

    Table columns are ``parameter, ess, rhat, acf1..acfL, rhat_applicable``.
    """
    chain_ids = output.chain_ids()
    draws = [int((output.chain == c).sum()) for c in chain_ids]
    if min(draws) < MIN_DRAWS:
        raise InsufficientSamplesError(f"need >= {MIN_DRAWS} draws per chain, got {min(draws)}")
    series = parameter_series(output, params)
    rows, chain_rows = [], []
    notes = []
    if len(chain_ids) < 2:
        notes.append("R-hat needs at least two chains; reported as NaN")
    for name, values in series.items():
        chains = output.by_chain(values)
        acf = np.mean([autocorrelation(c, max_lag) for c in chains], axis=0)
        ess = effective_sample_size(chains)
        rhat = split_rhat(chains) if len(chain_ids) >= 2 else float("nan")
        row = {"parameter": name, "ess": ess, "rhat": rhat}
        for lag in range(1, len(acf)):
            row[f"acf{lag}"] = acf[lag]
        row["rhat_applicable"] = bool(np.isfinite(rhat))
        rows.append(row)
        for c, chain in zip(chain_ids, chains):
            chain_rows.append(
                {"parameter": name, "chain": c, "mean": chain.mean(), "sd": chain.std(ddof=1),
                 "min": chain.min(), "max": chain.max()}
            )
    return DiagnosticsReport(pd.DataFrame(rows), pd.DataFrame(chain_rows), notes)

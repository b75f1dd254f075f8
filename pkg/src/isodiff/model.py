"""Priors, model state and the joint log posterior density.

Model for the log intensity of sample (e, g, i), spectrum k of protein j::

    y = kappa[e,g,i] + alpha[j,k] + beta[g,j] * gamma[g,j] + eps,   eps ~ N(0, 1/tau)

with beta, gamma pinned to zero for the control group (group 1) and the
reference sample of each experiment pinned at kappa = 0.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields, replace

import numpy as np
from scipy.special import betaln, gammaln

from .data import Dataset, DesignInfo

LOG_2PI = math.log(2.0 * math.pi)
VARIANCE_FLOOR = 1e-6
INIT_STRATEGIES = ("neutral", "data-driven", "random")


@dataclass(frozen=True)
class Hyperparameters:
    """Prior constants. Normal priors are given as (mean, precision),
    the noise precision tau has a Gamma(shape a_sigma, rate b_sigma) prior."""

    a_kappa: float = 0.0
    b_kappa: float = 1.0 / 9.0
    a_alpha: float = 10.0
    b_alpha: float = 1.0 / 9.0
    a_p: float = 1.0
    b_p: float = 19.0
    a_gamma: float = 0.0
    b_gamma: float = 1.0
    a_sigma: float = 1.0 / 1000.0
    b_sigma: float = 1.0 / 1000.0

    def __post_init__(self):
        for name in ("b_kappa", "b_alpha", "b_gamma", "a_p", "b_p", "a_sigma", "b_sigma"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be > 0, got {value}")

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    def updated(self, **overrides) -> "Hyperparameters":
        return replace(self, **overrides)


def default_hyperparameters() -> Hyperparameters:
    return Hyperparameters()


@dataclass
class ModelState:
    """One full assignment of the model parameters in flat 0-based layout.

    ``kappa`` is indexed by flat sample (see ``DesignInfo.sample_offsets``),
    ``alpha`` by flat spectrum, and ``beta``/``gamma``/``p`` are (G, P) with
    row 0 (the control group) held at zero.
    """

    kappa: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    p: np.ndarray
    tau: float

    @property
    def sigma(self) -> float:
        return self.tau ** -0.5

    @property
    def effect(self) -> np.ndarray:
        return self.beta * self.gamma

    def copy(self) -> "ModelState":
        return ModelState(
            self.kappa.copy(), self.alpha.copy(), self.beta.copy(), self.gamma.copy(), self.p.copy(), float(self.tau)
        )

    def equals(self, other: "ModelState") -> bool:
        return all(
            np.array_equal(getattr(self, f.name), getattr(other, f.name)) for f in fields(self)
        )


def constraint_violations(state: ModelState, design: DesignInfo) -> list[str]:
    problems = []
    G, P = design.num_groups, design.num_proteins
    if state.kappa.shape != (design.num_samples,):
        problems.append(f"kappa has shape {state.kappa.shape}, expected ({design.num_samples},)")
    if state.alpha.shape != (design.num_spectra,):
        problems.append(f"alpha has shape {state.alpha.shape}, expected ({design.num_spectra},)")
    for name in ("beta", "gamma", "p"):
        if getattr(state, name).shape != (G, P):
            problems.append(f"{name} has shape {getattr(state, name).shape}, expected ({G}, {P})")
    if problems:
        return problems
    if np.any(state.beta[0] != 0) or np.any(state.gamma[0] != 0):
        problems.append("beta and gamma must be 0 for the control group")
    if np.any(state.kappa[design.reference_samples] != 0):
        problems.append("kappa must be 0 for reference samples")
    if not np.isin(state.beta, (0, 1)).all():
        problems.append("beta must be binary")
    p = state.p[1:]
    if p.size and not ((p > 0) & (p < 1)).all():
        problems.append("p must lie in (0, 1)")
    if not (np.isfinite(state.tau) and state.tau > 0):
        problems.append("tau must be positive")
    return problems


def check_state(state: ModelState, design: DesignInfo) -> None:
    problems = constraint_violations(state, design)
    if problems:
        raise ValueError("constraint violation: " + "; ".join(problems))


def fitted_means(state: ModelState, dataset: Dataset) -> np.ndarray:
    """kappa + alpha + beta*gamma for every observation."""
    return (
        state.kappa[dataset.sample_index]
        + state.alpha[dataset.spectrum_index]
        + state.effect.ravel()[dataset.cell_index]
    )


def _normal_logpdf(x, mean, precision):
    return 0.5 * (math.log(precision) - LOG_2PI) - 0.5 * precision * (np.asarray(x) - mean) ** 2


def log_prior(state: ModelState, design: DesignInfo, hyper: Hyperparameters) -> float:
    free = np.ones(design.num_samples, dtype=bool)
    free[design.reference_samples] = False
    total = _normal_logpdf(state.kappa[free], hyper.a_kappa, hyper.b_kappa).sum()
    total += _normal_logpdf(state.alpha, hyper.a_alpha, hyper.b_alpha).sum()
    p, beta, gamma = state.p[1:], state.beta[1:], state.gamma[1:]
    total += np.where(beta == 1, np.log(p), np.log1p(-p)).sum()
    total += ((hyper.a_p - 1) * np.log(p) + (hyper.b_p - 1) * np.log1p(-p) - betaln(hyper.a_p, hyper.b_p)).sum()
    total += _normal_logpdf(gamma, hyper.a_gamma, hyper.b_gamma).sum()
    a, b, tau = hyper.a_sigma, hyper.b_sigma, state.tau
    total += a * math.log(b) - gammaln(a) + (a - 1) * math.log(tau) - b * tau
    return float(total)


def log_likelihood(state: ModelState, dataset: Dataset) -> float:
    n = len(dataset)
    if n == 0:
        return 0.0
    resid = dataset.y - fitted_means(state, dataset)
    return float(0.5 * n * (math.log(state.tau) - LOG_2PI) - 0.5 * state.tau * np.dot(resid, resid))


def log_joint(state: ModelState, dataset: Dataset, hyper: Hyperparameters) -> float:
    """Unnormalised log posterior density (priors times Gaussian likelihood over observed entries)."""
    check_state(state, dataset.design)
    return log_prior(state, dataset.design, hyper) + log_likelihood(state, dataset)


def _group_means(values: np.ndarray, index: np.ndarray, size: int, fallback: float) -> np.ndarray:
    counts = np.bincount(index, minlength=size)
    sums = np.bincount(index, weights=values, minlength=size)
    out = np.full(size, fallback, dtype=float)
    seen = counts > 0
    out[seen] = sums[seen] / counts[seen]
    return out


def initialize_state(
    dataset: Dataset,
    hyper: Hyperparameters,
    strategy: str = "neutral",
    rng: np.random.Generator | int | None = None,
) -> ModelState:
    """Starting point for a chain.

    ``neutral`` sets every alpha to its spectrum's mean observed log
    intensity, kappa, beta and gamma to zero, p to its prior mean and tau to
    the inverse residual variance. ``data-driven`` additionally sets kappa to
    per-sample mean offsets relative to each experiment's reference sample.
    ``random`` draws every free parameter from its prior using ``rng``.
    """
    d = dataset.design
    G, P = d.num_groups, d.num_proteins
    ref = d.reference_samples

    if strategy == "random":
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        kappa = rng.normal(hyper.a_kappa, hyper.b_kappa ** -0.5, d.num_samples)
        kappa[ref] = 0.0
        alpha = rng.normal(hyper.a_alpha, hyper.b_alpha ** -0.5, d.num_spectra)
        p = np.zeros((G, P))
        p[1:] = rng.beta(hyper.a_p, hyper.b_p, (G - 1, P))
        # p can round to exactly 0 or 1 for extreme shapes
        p[1:] = np.clip(p[1:], 1e-12, 1 - 1e-12)
        beta = np.zeros((G, P), dtype=np.int8)
        beta[1:] = rng.random((G - 1, P)) < p[1:]
        gamma = np.zeros((G, P))
        gamma[1:] = rng.normal(hyper.a_gamma, hyper.b_gamma ** -0.5, (G - 1, P))
        # a diffuse Gamma prior routinely draws tau ~ 0 or inf
        tau = float(np.clip(rng.gamma(hyper.a_sigma, 1.0 / hyper.b_sigma), VARIANCE_FLOOR, 1.0 / VARIANCE_FLOOR))
        return ModelState(kappa, alpha, beta, gamma, p, tau)

    if strategy not in INIT_STRATEGIES:
        raise ValueError(f"unknown init strategy {strategy!r}; expected one of {INIT_STRATEGIES}")

    y = dataset.y
    alpha = _group_means(y, dataset.spectrum_index, d.num_spectra, hyper.a_alpha)
    kappa = np.zeros(d.num_samples)
    if strategy == "data-driven" and len(dataset):
        offsets = _group_means(y - alpha[dataset.spectrum_index], dataset.sample_index, d.num_samples, 0.0)
        exp_of_sample = d.sample_coords[:, 0] - 1
        kappa = offsets - offsets[ref][exp_of_sample]
        kappa[ref] = 0.0
        # re-centre alpha on the shifted samples
        alpha = _group_means(y - kappa[dataset.sample_index], dataset.spectrum_index, d.num_spectra, hyper.a_alpha)
    p = np.zeros((G, P))
    p[1:] = hyper.a_p / (hyper.a_p + hyper.b_p)
    resid = y - kappa[dataset.sample_index] - alpha[dataset.spectrum_index]
    var = float(resid.var(ddof=1)) if len(resid) > 1 else 0.0
    tau = 1.0 / max(var, VARIANCE_FLOOR)
    return ModelState(kappa, alpha, np.zeros((G, P), dtype=np.int8), np.zeros((G, P)), p, tau)

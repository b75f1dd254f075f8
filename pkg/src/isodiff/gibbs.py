"""Gibbs sampler: the six conditional updates, a full sweep and the chain runner.

Every sum and count below ranges over observed entries only, so missing
reporter ions are handled exactly without imputation. Within each block the
parameters are conditionally independent, so a block is drawn in one
vectorised step.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Iterator

import numpy as np

from .data import Dataset
from .model import INIT_STRATEGIES, Hyperparameters, ModelState, check_state, initialize_state

log = logging.getLogger(__name__)

BLOCKS = ("kappa", "alpha", "beta", "p", "gamma", "tau")
_P_LO = float(np.finfo(float).tiny)
_P_HI = float(1.0 - np.finfo(float).epsneg)


def chain_rngs(seed: int, num_chains: int) -> list[np.random.Generator]:
    """Independent Philox streams, one per chain, derived from a single seed."""
    children = np.random.SeedSequence(seed).spawn(num_chains)
    return [np.random.Generator(np.random.Philox(child)) for child in children]


def _effect_per_obs(state: ModelState, dataset: Dataset) -> np.ndarray:
    return (state.beta * state.gamma).ravel()[dataset.cell_index]


def _normal_block(sums, counts, tau, a, b, rng):
    prec = b + counts * tau
    mean = (a * b + tau * sums) / prec
    return mean + rng.standard_normal(len(mean)) / np.sqrt(prec)


def sample_kappa(state: ModelState, dataset: Dataset, hyper: Hyperparameters, rng: np.random.Generator) -> np.ndarray:
    """Draw every free normalisation constant; reference samples stay at 0."""
    d = dataset.design
    resid = dataset.y - state.alpha[dataset.spectrum_index] - _effect_per_obs(state, dataset)
    sums = np.bincount(dataset.sample_index, weights=resid, minlength=d.num_samples)
    kappa = _normal_block(sums, dataset.count_per_sample, state.tau, hyper.a_kappa, hyper.b_kappa, rng)
    kappa[d.reference_samples] = 0.0
    return kappa


def sample_alpha(state: ModelState, dataset: Dataset, hyper: Hyperparameters, rng: np.random.Generator) -> np.ndarray:
    d = dataset.design
    resid = dataset.y - state.kappa[dataset.sample_index] - _effect_per_obs(state, dataset)
    sums = np.bincount(dataset.spectrum_index, weights=resid, minlength=d.num_spectra)
    return _normal_block(sums, dataset.count_per_spectrum, state.tau, hyper.a_alpha, hyper.b_alpha, rng)


def cell_residual_sums(state: ModelState, dataset: Dataset) -> np.ndarray:
    """Sum over observations of y - kappa - alpha for each (g, j), shape (G, P)."""
    d = dataset.design
    resid = dataset.y - state.kappa[dataset.sample_index] - state.alpha[dataset.spectrum_index]
    sums = np.bincount(dataset.cell_index, weights=resid, minlength=d.num_groups * d.num_proteins)
    return sums.reshape(d.num_groups, d.num_proteins)


def beta_log_weights(state: ModelState, dataset: Dataset, sums: np.ndarray | None = None):
    """Unnormalised log conditional weights of beta=0 and beta=1 for treatment groups.

    The shared term -tau/2 * sum(r^2) is dropped from both.
    """
    if sums is None:
        sums = cell_residual_sums(state, dataset)
    n = dataset.count_per_cell[1:]
    gamma, p = state.gamma[1:], state.p[1:]
    lw0 = np.log1p(-p)
    lw1 = np.log(p) + state.tau * gamma * (sums[1:] - 0.5 * n * gamma)
    return lw0, lw1


def sample_beta(
    state: ModelState, dataset: Dataset, hyper: Hyperparameters, rng: np.random.Generator, sums=None
) -> np.ndarray:
    lw0, lw1 = beta_log_weights(state, dataset, sums)
    top = np.maximum(lw0, lw1)
    w0, w1 = np.exp(lw0 - top), np.exp(lw1 - top)
    prob = w1 / (w0 + w1)
    beta = np.zeros_like(state.beta)
    beta[1:] = rng.random(prob.shape) < prob
    return beta


def sample_p(state: ModelState, hyper: Hyperparameters, rng: np.random.Generator) -> np.ndarray:
    b = state.beta[1:]
    p = np.zeros(state.p.shape)
    draws = rng.beta(hyper.a_p + b, hyper.b_p + 1 - b)
    # keep p strictly inside (0, 1) when a draw rounds to the boundary
    if draws.size and (draws.min() <= 0.0 or draws.max() >= 1.0):
        draws = np.clip(draws, _P_LO, _P_HI)
    p[1:] = draws
    return p


def sample_gamma(
    state: ModelState, dataset: Dataset, hyper: Hyperparameters, rng: np.random.Generator, sums=None
) -> np.ndarray:
    """Prior draw where beta = 0, conjugate normal update where beta = 1."""
    if sums is None:
        sums = cell_residual_sums(state, dataset)
    on = state.beta[1:] == 1
    n = np.where(on, dataset.count_per_cell[1:], 0)
    s = np.where(on, sums[1:], 0.0)
    gamma = np.zeros_like(state.gamma)
    gamma[1:] = _normal_block(s.ravel(), n.ravel(), state.tau, hyper.a_gamma, hyper.b_gamma, rng).reshape(n.shape)
    return gamma


def sample_tau(state: ModelState, dataset: Dataset, hyper: Hyperparameters, rng: np.random.Generator) -> float:
    """Noise precision; n is the number of observed intensities."""
    resid = (
        dataset.y
        - state.kappa[dataset.sample_index]
        - state.alpha[dataset.spectrum_index]
        - _effect_per_obs(state, dataset)
    )
    shape = hyper.a_sigma + 0.5 * len(dataset)
    rate = hyper.b_sigma + 0.5 * float(np.dot(resid, resid))
    return float(rng.gamma(shape, 1.0 / rate))


def sweep(
    state: ModelState,
    dataset: Dataset,
    hyper: Hyperparameters,
    rng: np.random.Generator,
    fixed: Iterable[str] = (),
) -> ModelState:
    """One scan in the order kappa, alpha, beta, p, gamma, tau.

    Blocks named in ``fixed`` are left at their current values. The input
    state is not modified.
    """
    fixed = frozenset(fixed)
    s = state.copy()
    if "kappa" not in fixed:
        s.kappa = sample_kappa(s, dataset, hyper, rng)
    if "alpha" not in fixed:
        s.alpha = sample_alpha(s, dataset, hyper, rng)
    sums = cell_residual_sums(s, dataset) if not {"beta", "gamma"} <= fixed else None
    if "beta" not in fixed:
        s.beta = sample_beta(s, dataset, hyper, rng, sums)
    if "p" not in fixed:
        s.p = sample_p(s, hyper, rng)
    if "gamma" not in fixed:
        s.gamma = sample_gamma(s, dataset, hyper, rng, sums)
    if "tau" not in fixed:
        s.tau = sample_tau(s, dataset, hyper, rng)
    return s


@dataclass(frozen=True)
class ChainConfig:
    burn_in: int = 100_000
    keep: int = 100_000
    thin: int = 100
    num_chains: int = 5
    seed: int = 0
    init_strategy: str = "neutral"

    def __post_init__(self):
        for name in ("burn_in", "keep", "thin", "num_chains", "seed"):
            object.__setattr__(self, name, int(getattr(self, name)))
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.keep < 1 or self.thin < 1 or self.num_chains < 1:
            raise ValueError("keep, thin and num_chains must be >= 1")
        if self.keep < self.thin:
            raise ValueError(f"keep={self.keep} < thin={self.thin} stores no samples")
        if self.init_strategy not in INIT_STRATEGIES:
            raise ValueError(f"unknown init strategy {self.init_strategy!r}")

    @property
    def samples_per_chain(self) -> int:
        return self.keep // self.thin

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ChainOutput:
    """Stored states of all chains, stacked along the first axis in chain order."""

    kappa: np.ndarray  # (N, S)
    alpha: np.ndarray  # (N, K)
    beta: np.ndarray  # (N, G, P)
    gamma: np.ndarray  # (N, G, P)
    p: np.ndarray  # (N, G, P)
    tau: np.ndarray  # (N,)
    chain: np.ndarray  # (N,) chain id per stored state
    iteration: np.ndarray  # (N,) sweep number the state was stored at
    config: ChainConfig | None = None
    design: object = None
    wall_time: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.tau)

    @property
    def sigma(self) -> np.ndarray:
        return self.tau ** -0.5

    @property
    def effect(self) -> np.ndarray:
        return self.beta * self.gamma

    @property
    def num_chains(self) -> int:
        return len(np.unique(self.chain))

    def chain_ids(self) -> list[int]:
        return sorted(np.unique(self.chain).tolist())

    def chain_boundaries(self) -> list[tuple[int, int]]:
        """[start, stop) of each chain's block, in storage order."""
        out = []
        starts = np.flatnonzero(np.r_[True, self.chain[1:] != self.chain[:-1]])
        stops = np.r_[starts[1:], len(self.chain)]
        for a, b in zip(starts, stops):
            out.append((int(a), int(b)))
        return out

    def state(self, n: int) -> ModelState:
        return ModelState(
            self.kappa[n].copy(), self.alpha[n].copy(), self.beta[n].copy(),
            self.gamma[n].copy(), self.p[n].copy(), float(self.tau[n]),
        )

    def states(self) -> Iterator[ModelState]:
        for n in range(len(self)):
            yield self.state(n)

    def take(self, index) -> "ChainOutput":
        index = np.asarray(index)
        return ChainOutput(
            self.kappa[index], self.alpha[index], self.beta[index], self.gamma[index], self.p[index],
            self.tau[index], self.chain[index], self.iteration[index], self.config, self.design, dict(self.wall_time),
        )

    def by_chain(self, values: np.ndarray) -> np.ndarray:
        """Reshape a per-state array to (chains, draws, ...); chains must be equal length."""
        ids = self.chain_ids()
        blocks = [values[self.chain == c] for c in ids]
        lengths = {len(b) for b in blocks}
        if len(lengths) != 1:
            raise ValueError("chains have unequal lengths")
        return np.stack(blocks)

    @classmethod
    def concatenate(cls, parts: list["ChainOutput"]) -> "ChainOutput":
        cat = lambda name: np.concatenate([getattr(p, name) for p in parts])  # noqa: E731
        wall = {}
        for p in parts:
            wall.update(p.wall_time)
        return cls(
            cat("kappa"), cat("alpha"), cat("beta"), cat("gamma"), cat("p"), cat("tau"),
            cat("chain"), cat("iteration"), parts[0].config, parts[0].design, wall,
        )


def _run_one_chain(args) -> ChainOutput:
    chain_id, dataset, hyper, config, rng = args
    t0 = time.perf_counter()
    if config.init_strategy == "random":
        state = initialize_state(dataset, hyper, "random", rng)
    else:
        state = initialize_state(dataset, hyper, config.init_strategy)
    check_state(state, dataset.design)
    d = dataset.design
    n_keep = config.samples_per_chain
    out = ChainOutput(
        kappa=np.empty((n_keep, d.num_samples)),
        alpha=np.empty((n_keep, d.num_spectra)),
        beta=np.empty((n_keep, d.num_groups, d.num_proteins), dtype=np.int8),
        gamma=np.empty((n_keep, d.num_groups, d.num_proteins)),
        p=np.empty((n_keep, d.num_groups, d.num_proteins)),
        tau=np.empty(n_keep),
        chain=np.full(n_keep, chain_id, dtype=np.int64),
        iteration=np.empty(n_keep, dtype=np.int64),
        config=config,
        design=d,
    )
    for _ in range(config.burn_in):
        state = sweep(state, dataset, hyper, rng)
    stored = 0
    for it in range(1, n_keep * config.thin + 1):
        state = sweep(state, dataset, hyper, rng)
        if it % config.thin == 0:
            out.kappa[stored] = state.kappa
            out.alpha[stored] = state.alpha
            out.beta[stored] = state.beta
            out.gamma[stored] = state.gamma
            out.p[stored] = state.p
            out.tau[stored] = state.tau
            out.iteration[stored] = config.burn_in + it
            stored += 1
    out.wall_time = {chain_id: time.perf_counter() - t0}
    log.info("chain %d finished in %.1fs", chain_id, out.wall_time[chain_id])
    return out


def run_chains(
    dataset: Dataset,
    hyper: Hyperparameters,
    config: ChainConfig,
    workers: int = 1,
    chain_order: Iterable[int] | None = None,
) -> ChainOutput:
    """Run ``config.num_chains`` independent chains and stack the thinned draws.

    Each chain owns a stream derived from ``config.seed`` and its index, so the
    result does not depend on ``workers`` or on the order in which chains are
    executed (``chain_order`` exists to exercise exactly that). Output is
    always assembled in chain-index order.
    """
    rngs = chain_rngs(config.seed, config.num_chains)
    order = list(range(config.num_chains)) if chain_order is None else list(chain_order)
    if sorted(order) != list(range(config.num_chains)):
        raise ValueError("chain_order must be a permutation of the chain indices")
    jobs = [(c, dataset, hyper, config, rngs[c]) for c in order]
    if workers > 1 and config.num_chains > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one_chain, jobs))
    else:
        results = [_run_one_chain(job) for job in jobs]
    by_id = {int(r.chain[0]): r for r in results}
    return ChainOutput.concatenate([by_id[c] for c in range(config.num_chains)])


def iterate_sweeps(
    state: ModelState,
    dataset: Dataset,
    hyper: Hyperparameters,
    rng: np.random.Generator,
    n: int,
    fixed: Iterable[str] = (),
    callback: Callable[[int, ModelState], None] | None = None,
) -> ModelState:
    for it in range(n):
        state = sweep(state, dataset, hyper, rng, fixed)
        if callback is not None:
            callback(it, state)
    return state

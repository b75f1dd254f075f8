"""Synthetic datasets drawn from the model, with the generating values kept."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data import Dataset, DesignInfo
from .model import ModelState


@dataclass(frozen=True)
class SimulationSpec:
    """Generator settings.

    ``de_prob`` has one entry per treatment group (groups 2..G).
    ``fold_range`` gives fold-change bounds; effects are drawn uniformly on
    ``(-log hi, -log lo) U (log lo, log hi)``. ``fixed_effects`` maps 1-based
    (group, protein) to a log fold change that is always differentially
    expressed, and ``fixed_spectra`` maps 1-based proteins to a spectrum count;
    both override the random draws. ``sigma = 0`` gives noiseless data.
    """

    samples_per_cell: tuple[tuple[int, ...], ...]
    reference_group: tuple[int, ...]
    num_proteins: int
    mean_spectra: float = 6.0
    alpha_mean: float = 10.0
    alpha_sd: float = 3.0
    de_prob: tuple[float, ...] = (0.1, 0.2, 0.3)
    fold_range: tuple[float, float] = (1.5, 4.0)
    kappa_sd: float = 0.1
    sigma: float = 0.3
    missing_rate: float = 0.0
    seed: int = 0
    fixed_effects: Mapping[tuple[int, int], float] = field(default_factory=dict)
    fixed_spectra: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "samples_per_cell", tuple(tuple(int(v) for v in r) for r in self.samples_per_cell))
        object.__setattr__(self, "reference_group", tuple(int(v) for v in self.reference_group))
        object.__setattr__(self, "de_prob", tuple(float(v) for v in self.de_prob))
        object.__setattr__(self, "fold_range", tuple(float(v) for v in self.fold_range))
        G = len(self.samples_per_cell[0])
        if len(self.de_prob) != G - 1:
            raise ValueError(f"de_prob needs {G - 1} entries (one per treatment group)")
        if not all(0.0 <= q <= 1.0 for q in self.de_prob):
            raise ValueError("de_prob entries must lie in [0, 1]")
        lo, hi = self.fold_range
        if not 1.0 < lo <= hi:
            raise ValueError("fold bounds must satisfy 1 < lo <= hi")
        if not (self.alpha_sd > 0 and self.kappa_sd > 0 and self.sigma >= 0):
            raise ValueError("alpha_sd and kappa_sd must be > 0, sigma >= 0")
        if self.mean_spectra < 1:
            raise ValueError("mean_spectra must be >= 1")
        if not 0.0 <= self.missing_rate < 1.0:
            raise ValueError("missing_rate must lie in [0, 1)")

    @property
    def num_experiments(self) -> int:
        return len(self.samples_per_cell)

    @property
    def num_groups(self) -> int:
        return len(self.samples_per_cell[0])

    @property
    def log_fold_interval(self) -> tuple[float, float]:
        return math.log(self.fold_range[0]), math.log(self.fold_range[1])

    def to_config(self) -> dict:
        out = {
            "E": self.num_experiments,
            "G": self.num_groups,
            "P": self.num_proteins,
            "n": [list(r) for r in self.samples_per_cell],
            "g_ref": list(self.reference_group),
            "n_I": sum(self.samples_per_cell[0]),
        }
        for key, value in asdict(self).items():
            if key in ("samples_per_cell", "reference_group", "num_proteins", "fixed_effects", "fixed_spectra"):
                continue
            out[f"sim.{key}"] = list(value) if isinstance(value, tuple) else value
        if self.fixed_effects:
            out["sim.fixed_effects"] = [[g, j, v] for (g, j), v in sorted(self.fixed_effects.items())]
        if self.fixed_spectra:
            out["sim.fixed_spectra"] = [[j, m] for j, m in sorted(self.fixed_spectra.items())]
        return out

    @classmethod
    def from_config(cls, cfg: dict, base: "SimulationSpec | None" = None) -> "SimulationSpec":
        base = base or paper_scenario_spec()
        kwargs = asdict(base)
        kwargs["fixed_effects"] = dict(base.fixed_effects)
        kwargs["fixed_spectra"] = dict(base.fixed_spectra)
        if "n" in cfg:
            n = cfg["n"]
            kwargs["samples_per_cell"] = n if isinstance(n[0], list) else [n]
        if "g_ref" in cfg:
            g = cfg["g_ref"]
            kwargs["reference_group"] = g if isinstance(g, list) else [g]
        if "P" in cfg:
            kwargs["num_proteins"] = int(cfg["P"])
        if "seed" in cfg:
            kwargs["seed"] = int(cfg["seed"])
        for key, value in cfg.items():
            if not key.startswith("sim."):
                continue
            name = key[4:]
            if name == "fixed_effects":
                rows = value if isinstance(value[0], list) else [value]
                kwargs[name] = {(int(g), int(j)): float(v) for g, j, v in rows}
            elif name == "fixed_spectra":
                rows = value if isinstance(value[0], list) else [value]
                kwargs[name] = {int(j): int(m) for j, m in rows}
            elif name in kwargs:
                kwargs[name] = value if not isinstance(value, list) else tuple(value)
            else:
                raise ValueError(f"unknown simulation key {key}")
        if not isinstance(kwargs["de_prob"], (list, tuple)):
            kwargs["de_prob"] = (kwargs["de_prob"],)
        return cls(**kwargs)


@dataclass
class GroundTruth:
    spectra_per_protein: np.ndarray
    kappa: np.ndarray  # flat samples
    alpha: np.ndarray  # flat spectra
    beta: np.ndarray  # (G, P)
    gamma: np.ndarray  # (G, P); generating value, 0 where beta = 0
    sigma: float
    design: DesignInfo

    @property
    def de_counts(self) -> list[int]:
        """Realised number of DE proteins per treatment group."""
        return self.beta[1:].sum(axis=1).astype(int).tolist()

    def as_state(self) -> ModelState:
        p = np.zeros_like(self.gamma)
        p[1:] = 0.5
        tau = self.sigma ** -2 if self.sigma > 0 else np.inf
        return ModelState(self.kappa.copy(), self.alpha.copy(), self.beta.copy(), self.gamma.copy(), p, tau)

    def rows(self) -> list[tuple[str, str, float]]:
        """(parameter, indices, value) rows with 1-based ';'-joined indices."""
        d = self.design
        out = [("m", str(j + 1), int(m)) for j, m in enumerate(self.spectra_per_protein)]
        for s, (e, g, i) in enumerate(d.sample_coords):
            out.append(("kappa", f"{e};{g};{i}", float(self.kappa[s])))
        for t, (j, k) in enumerate(d.spectrum_coords):
            out.append(("alpha", f"{j};{k}", float(self.alpha[t])))
        for g in range(1, d.num_groups):
            for j in range(d.num_proteins):
                out.append(("beta", f"{g + 1};{j + 1}", int(self.beta[g, j])))
                out.append(("gamma", f"{g + 1};{j + 1}", float(self.gamma[g, j])))
        out.append(("sigma", "", float(self.sigma)))
        return out


def paper_scenario_spec(seed: int = 0) -> SimulationSpec:
    """Two experiments of six tags, four groups, 300 proteins.

    Tag patterns are (CTL, CTL, TRT1, TRT1, TRT2, TRT2) and
    (CTL, TRT1, TRT2, TRT3, TRT3, TRT3); the control group supplies the
    reference sample in both experiments.
    """
    return SimulationSpec(
        samples_per_cell=((2, 2, 2, 0), (1, 1, 1, 3)),
        reference_group=(1, 1),
        num_proteins=300,
        seed=seed,
    )


SPIKE_LOG_RATIOS = (0.4055, -0.9676, -0.6931, 1.6094)


def spike_in_scenario_spec(seed: int = 0, spiked_spectra: int = 10, nulls: int = 278) -> SimulationSpec:
    """Two experiments with three replicates of each of two portions; four
    spiked proteins (proteins 1..4) at fixed log ratios, everything else null."""
    effects = {(2, j + 1): r for j, r in enumerate(SPIKE_LOG_RATIOS)}
    return SimulationSpec(
        samples_per_cell=((3, 3), (3, 3)),
        reference_group=(1, 1),
        num_proteins=len(SPIKE_LOG_RATIOS) + nulls,
        de_prob=(0.0,),
        seed=seed,
        fixed_effects=effects,
        fixed_spectra={j + 1: spiked_spectra for j in range(len(SPIKE_LOG_RATIOS))},
    )


def simulate_dataset(spec: SimulationSpec) -> tuple[Dataset, GroundTruth]:
    """Draw one dataset; the result is a deterministic function of ``spec``."""
    rng = np.random.default_rng(spec.seed)
    E, G, P = spec.num_experiments, spec.num_groups, spec.num_proteins

    m = rng.geometric(1.0 / spec.mean_spectra, P).astype(np.int64)
    for j, mj in spec.fixed_spectra.items():
        m[j - 1] = mj
    design = DesignInfo(
        num_experiments=E,
        num_groups=G,
        num_proteins=P,
        spectra_per_protein=tuple(m.tolist()),
        samples_per_cell=spec.samples_per_cell,
        reference_group=spec.reference_group,
        tags_per_experiment=sum(spec.samples_per_cell[0]),
    )

    alpha = rng.normal(spec.alpha_mean, spec.alpha_sd, design.num_spectra)
    beta = np.zeros((G, P), dtype=np.int8)
    beta[1:] = rng.random((G - 1, P)) < np.asarray(spec.de_prob)[:, None]
    lo, hi = spec.log_fold_interval
    sign = np.where(rng.random((G - 1, P)) < 0.5, -1.0, 1.0)
    magnitude = rng.uniform(lo, hi, (G - 1, P))
    gamma = np.zeros((G, P))
    gamma[1:] = sign * magnitude
    for (g, j), value in spec.fixed_effects.items():
        beta[g - 1, j - 1] = 1
        gamma[g - 1, j - 1] = value
    gamma[beta == 0] = 0.0
    kappa = rng.normal(0.0, spec.kappa_sd, design.num_samples)
    kappa[design.reference_samples] = 0.0

    # every (sample, spectrum) pair, samples ordered (e, g, i) and spectra (j, k)
    S, K = design.num_samples, design.num_spectra
    s_idx = np.repeat(np.arange(S), K)
    t_idx = np.tile(np.arange(K), S)
    coords = design.sample_coords[s_idx] - 1
    protein = design.spectrum_protein[t_idx]
    spectrum = t_idx - design.spectrum_offsets[protein]
    group = coords[:, 1]
    mean = kappa[s_idx] + alpha[t_idx] + (beta * gamma)[group, protein]
    noise = rng.normal(0.0, 1.0, len(mean)) * spec.sigma
    y = mean + noise

    keep = np.ones(len(y), dtype=bool)
    if spec.missing_rate > 0:
        keep = rng.random(len(y)) >= spec.missing_rate

    ds = Dataset(design, coords[keep, 0], group[keep], coords[keep, 2], protein[keep], spectrum[keep], y[keep])
    truth = GroundTruth(m, kappa, alpha, beta, gamma, float(spec.sigma), design)
    return ds, truth

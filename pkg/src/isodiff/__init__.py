"""Bayesian differential protein expression for isobaric-labelled MS/MS data."""

__version__ = "0.1.0"

from .data import DesignInfo, Dataset, Observation, load_dataset, save_dataset, validate  # noqa: E402
from .model import Hyperparameters, ModelState, default_hyperparameters, initialize_state, log_joint  # noqa: E402
from .gibbs import ChainConfig, ChainOutput, run_chains, sweep  # noqa: E402
from .simulate import SimulationSpec, paper_scenario_spec, simulate_dataset, spike_in_scenario_spec  # noqa: E402
from .analysis import de_probabilities, effect_summaries, posterior_predictive, ma_plot_data  # noqa: E402
from .diagnostics import diagnostics  # noqa: E402
from .baselines import bh_adjust, mean_normalize, protein_ttest  # noqa: E402

import numpy as np
import pytest

from isodiff.model import (
    Hyperparameters,
    ModelState,
    check_state,
    constraint_violations,
    fitted_means,
    initialize_state,
    log_joint,
    log_likelihood,
)

from oracles import log_joint_reference


def random_state(dataset, seed=0):
    d = dataset.design
    rng = np.random.default_rng(seed)
    G, P = d.num_groups, d.num_proteins
    kappa = rng.normal(0, 0.2, d.num_samples)
    kappa[d.reference_samples] = 0.0
    beta = np.zeros((G, P), dtype=np.int8)
    beta[1:] = rng.random((G - 1, P)) < 0.5
    gamma = np.zeros((G, P))
    gamma[1:] = rng.normal(0, 1, (G - 1, P))
    p = np.zeros((G, P))
    p[1:] = rng.uniform(0.05, 0.95, (G - 1, P))
    return ModelState(kappa, rng.normal(10, 1, d.num_spectra), beta, gamma, p, float(rng.uniform(2, 20)))


def test_hyperparameter_defaults_and_validation():
    h = Hyperparameters()
    assert (h.a_kappa, h.b_kappa, h.a_alpha, h.b_alpha) == (0.0, 1 / 9, 10.0, 1 / 9)
    assert (h.a_p, h.b_p, h.a_gamma, h.b_gamma, h.a_sigma, h.b_sigma) == (1.0, 19.0, 0.0, 1.0, 0.001, 0.001)
    with pytest.raises(ValueError, match="b_gamma"):
        Hyperparameters(b_gamma=0.0)
    assert h.updated(b_p=3.0).b_p == 3.0


@pytest.mark.parametrize("seed", range(4))
def test_log_joint_matches_reference(two_exp_dataset, seed):
    hyper = Hyperparameters(a_sigma=2.0, b_sigma=0.5)
    state = random_state(two_exp_dataset, seed)
    assert log_joint(state, two_exp_dataset, hyper) == pytest.approx(
        log_joint_reference(state, two_exp_dataset, hyper), rel=1e-10, abs=1e-8
    )


def test_fitted_means_by_hand(tiny_dataset):
    state = random_state(tiny_dataset, 3)
    d = tiny_dataset.design
    for r, obs in enumerate(tiny_dataset.observations()):
        s = d.sample_id(obs.experiment, obs.group, obs.sample)
        t = d.spectrum_id(obs.protein, obs.spectrum)
        mu = state.kappa[s] + state.alpha[t] + state.beta[obs.group - 1, obs.protein - 1] * state.gamma[obs.group - 1, obs.protein - 1]
        assert fitted_means(state, tiny_dataset)[r] == pytest.approx(mu)


def test_log_likelihood_empty_dataset(tiny_dataset):
    empty = tiny_dataset.subset(np.zeros(len(tiny_dataset), dtype=bool))
    assert log_likelihood(random_state(tiny_dataset), empty) == 0.0


def test_constraints_enforced(tiny_dataset):
    d = tiny_dataset.design
    good = random_state(tiny_dataset)
    assert constraint_violations(good, d) == []
    bad = good.copy()
    bad.kappa[d.reference_samples[0]] = 0.1
    with pytest.raises(ValueError, match="reference"):
        check_state(bad, d)
    bad = good.copy()
    bad.beta[0, 0] = 1
    with pytest.raises(ValueError, match="control group"):
        log_joint(bad, tiny_dataset, Hyperparameters())
    bad = good.copy()
    bad.p[1, 0] = 1.0
    assert any("p must" in v for v in constraint_violations(bad, d))
    bad = good.copy()
    bad.tau = -1.0
    assert any("tau" in v for v in constraint_violations(bad, d))
    bad = good.copy()
    bad.alpha = bad.alpha[:-1]
    assert any("alpha has shape" in v for v in constraint_violations(bad, d))


@pytest.mark.parametrize("strategy", ["neutral", "data-driven", "random"])
def test_initial_states_are_valid(two_exp_dataset, strategy):
    state = initialize_state(two_exp_dataset, Hyperparameters(), strategy, rng=4)
    check_state(state, two_exp_dataset.design)
    assert np.isfinite(log_joint(state, two_exp_dataset, Hyperparameters()))


def test_neutral_init_uses_spectrum_means(tiny_dataset):
    state = initialize_state(tiny_dataset, Hyperparameters())
    for t in range(tiny_dataset.design.num_spectra):
        assert state.alpha[t] == pytest.approx(tiny_dataset.y[tiny_dataset.spectrum_index == t].mean())
    assert not state.beta.any() and not state.kappa.any()
    assert state.p[1:] == pytest.approx(0.05)


def test_data_driven_init_recovers_sample_offsets(tiny_design):
    from isodiff.data import Dataset
    from conftest import full_rows

    offsets = {(1, 1, 1): 0.0, (1, 1, 2): 0.3, (1, 2, 1): -0.2, (1, 2, 2): 0.5}
    rows = full_rows(tiny_design, lambda e, g, i, j, k: 5.0 + j + 0.1 * k + offsets[(e, g, i)])
    ds = Dataset.from_observations(tiny_design, rows)
    state = initialize_state(ds, Hyperparameters(), "data-driven")
    assert state.kappa == pytest.approx([0.0, 0.3, -0.2, 0.5])
    assert state.tau == pytest.approx(1e6)


def test_unknown_strategy(tiny_dataset):
    with pytest.raises(ValueError, match="unknown init"):
        initialize_state(tiny_dataset, Hyperparameters(), "bogus")

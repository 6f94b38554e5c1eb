import logging

import numpy as np
import pytest

from ecgseg.features import cwt
from ecgseg.hmm import (
    HmmModel,
    StateConfig,
    build_transition_matrix,
    uniform_initial,
    viterbi_decode,
    viterbi_train,
)
from ecgseg.synth import SynthParams, generate

from oracles import sample_hmm


@pytest.fixture(scope="module")
def synth_dataset():
    out = []
    for seed in (11, 12):
        rec, y = generate(SynthParams(beats=15, seed=seed, noise_sigma=0.03))
        out.append((cwt(rec.samples), y))
    return out


@pytest.fixture(scope="module")
def known_model():
    # well-separated sub-state means so the generating path is recoverable
    config = StateConfig()
    K = config.total
    means = np.array([[4.0 * k, (-1) ** k * 3.0, 0.0] for k in range(K)])
    covs = np.tile(np.eye(3), (K, 1, 1))
    return HmmModel(config, build_transition_matrix(config), uniform_initial(K), means, covs)


def test_zero_iterations_is_identity(synth_dataset):
    feats, ys = zip(*synth_dataset)
    m0 = HmmModel.from_labels(list(feats), list(ys), StateConfig.preset("16"))
    m1, diag = viterbi_train(m0, synth_dataset, max_iters=0)
    assert diag == []
    assert m1.dumps() == m0.dumps()


def test_log_probability_monotone(synth_dataset):
    feats, ys = zip(*synth_dataset)
    m0 = HmmModel.from_labels(list(feats), list(ys), StateConfig.preset("16"))
    _, diag = viterbi_train(m0, synth_dataset, max_iters=8, tol=0.0)
    lp = [d.log_prob for d in diag]
    for a, b in zip(lp, lp[1:]):
        assert b >= a - 1e-6 * abs(a)
    assert all(d.label_agreement is not None for d in diag)


def test_monotone_with_transition_reestimation(synth_dataset):
    feats, ys = zip(*synth_dataset)
    m0 = HmmModel.from_labels(list(feats), list(ys), StateConfig.preset("11"))
    m, diag = viterbi_train(m0, synth_dataset, max_iters=6, tol=0.0, reestimate_transitions=True)
    lp = [d.log_prob for d in diag]
    for a, b in zip(lp, lp[1:]):
        assert b >= a - 1e-6 * abs(a)
    np.testing.assert_allclose(m.transition.sum(axis=1), 1.0, atol=1e-12)
    # structural zeros survive count-based updates
    assert np.all(m.transition[m0.transition == 0] == 0)
    assert not np.array_equal(m.transition, m0.transition)


def test_transitions_fixed_by_default(synth_dataset):
    feats, ys = zip(*synth_dataset)
    m0 = HmmModel.from_labels(list(feats), list(ys), StateConfig())
    m, _ = viterbi_train(m0, synth_dataset, max_iters=3)
    np.testing.assert_array_equal(m.transition, m0.transition)


def test_recovers_known_model(known_model):
    rng = np.random.default_rng(7)
    states, X = sample_hmm(known_model, 3000, rng)
    perturbed = known_model.with_params(means=known_model.means + rng.normal(scale=0.8, size=known_model.means.shape))
    trained, diag = viterbi_train(perturbed, [(X, None)], max_iters=20)
    agree = np.mean(viterbi_decode(trained, X).states == states)
    assert agree >= 0.9
    np.testing.assert_allclose(trained.means, known_model.means, atol=0.3)
    assert diag[-1].label_agreement is None


def test_empty_state_is_frozen(known_model, caplog):
    rng = np.random.default_rng(3)
    _, X = sample_hmm(known_model, 200, rng)
    far = known_model.means.copy()
    far[2] = [1e3, 1e3, 1e3]
    m = known_model.with_params(means=far)
    with caplog.at_level(logging.WARNING, logger="ecgseg.hmm"):
        trained, diag = viterbi_train(m, [(X, None)], max_iters=1)
    assert 2 in diag[0].frozen_states
    np.testing.assert_array_equal(trained.means[2], far[2])
    np.testing.assert_array_equal(trained.covs[2], m.covs[2])
    assert "no samples" in caplog.text


def test_parallel_matches_serial(synth_dataset):
    feats, ys = zip(*synth_dataset)
    m0 = HmmModel.from_labels(list(feats), list(ys), StateConfig.preset("16"))
    a, da = viterbi_train(m0, synth_dataset, max_iters=3, n_jobs=1)
    b, db = viterbi_train(m0, synth_dataset, max_iters=3, n_jobs=2)
    assert a.dumps() == b.dumps()
    assert [d.log_prob for d in da] == [d.log_prob for d in db]


def test_convergence_stops_early(synth_dataset):
    feats, ys = zip(*synth_dataset)
    m0 = HmmModel.from_labels(list(feats), list(ys), StateConfig())
    _, diag = viterbi_train(m0, synth_dataset, max_iters=50, tol=1e-3)
    assert len(diag) < 50
    assert diag[0].changed_fraction == 1.0
    assert diag[-1].changed_fraction < 1e-3


def test_empty_dataset():
    config = StateConfig()
    m = HmmModel(config, build_transition_matrix(config), uniform_initial(6), np.zeros((6, 3)), np.tile(np.eye(3), (6, 1, 1)))
    with pytest.raises(ValueError):
        viterbi_train(m, [])

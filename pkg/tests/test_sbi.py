import json
import warnings

import numpy as np
import pytest
import scipy.stats

from stmix.errors import DataError, FeatureError, MarginTagError, ModelError, PriorError
from stmix.mixture import Dataset, MixtureParams, eta_to_theta, simulate_mixture, \
    transform_margins
from stmix.sbi.campaign import TrainingSet, run_campaign
from stmix.sbi.features import DEFAULT_SCHEMA, FeatureSchema, featurize, features_from_stats
from stmix.sbi.forest import ForestConfig, ForestModel, predict, train_forest
from stmix.sbi.inference import (ForestSet, bootstrap_ci, bootstrap_weights, estimate,
                                 train_forests)
from stmix.sbi.prior import PriorSpec, sample_prior
from stmix.simulators import Margin, SpaceTimeLayout
from stmix.taildep import replicate_bin_stats

SMALL = SpaceTimeLayout.grid(3, 3, 30)


def uniform_sim(p, layout, seed):
    return transform_margins(simulate_mixture(p, layout, seed), "uniform")


# --- prior -----------------------------------------------------------------

def test_prior_degenerate_spec():
    spec = PriorSpec((0.1, -0.2, 0.3, np.log(0.3), np.log(0.4)), (1e-9,) * 5)
    eta = sample_prior(spec, 1).as_array()
    np.testing.assert_allclose(eta, spec.means, atol=1e-7)


def test_prior_seeds_differ():
    assert sample_prior(PriorSpec(), 1) != sample_prior(PriorSpec(), 2)
    assert sample_prior(PriorSpec(), 1) == sample_prior(PriorSpec(), 1)


def test_prior_lambda1_median():
    # lambda_1 = 1 / (1 + sum exp(eta_k)); Monte Carlo over the raw normal draws
    rng = np.random.default_rng(0)
    eta = rng.normal(0, 1, (1_000_000, 3))
    l1 = 1 / (1 + np.exp(eta).sum(axis=1))
    ref = np.median(l1)
    draws = [eta_to_theta(sample_prior(PriorSpec(), s)).weights[0] for s in range(3000)]
    assert np.median(draws) == pytest.approx(ref, abs=0.02)
    # 0.25 is the weight at the prior mode, not the median of the weight
    assert 1 / (1 + 3 * np.exp(0.0)) == 0.25
    assert ref == pytest.approx(0.2014, abs=0.002)


def test_prior_rejects_inadmissible():
    # every draw lands on four equal weights
    spec = PriorSpec((0.0, 0.0, 0.0, 0.0, 0.0), (1e-12,) * 5)
    with pytest.raises(PriorError):
        sample_prior(spec, 0)


# --- features --------------------------------------------------------------

def test_feature_schema():
    assert DEFAULT_SCHEMA.n_features == 45
    names = DEFAULT_SCHEMA.names
    assert names[0] == "chi0.5_0_0" and names[15] == "chi0.9_0_0" and names[30] == "corr0.5_0_0"
    assert names[1 * 3 + 2] == "chi0.5_1_2"
    assert FeatureSchema(q0=0.6).hash != DEFAULT_SCHEMA.hash


def test_featurize_length_and_determinism():
    d = uniform_sim(MixtureParams((0.5, 0.15, 0.17, 0.18), 0.4, 0.4), SMALL, 1)
    a = featurize(d)
    b = featurize(d)
    assert a.values.shape == (45,)
    assert np.all(np.isfinite(a.values))
    assert a.values.tobytes() == b.values.tobytes()


def test_featurize_independent_data():
    lay = SpaceTimeLayout.grid(5, 5, 400)
    rng = np.random.default_rng(2)
    z = featurize(Dataset(lay, rng.random(lay.shape), Margin.UNIFORM)).values
    np.testing.assert_allclose(z[:15], 0.5, atol=0.03)
    np.testing.assert_allclose(z[15:30], 0.1, atol=0.03)
    np.testing.assert_allclose(z[30:], 0.0, atol=0.05)


def test_featurize_errors():
    far = SpaceTimeLayout(np.array([[0, 0], [5, 5.0]]), [0.0], 3)
    with pytest.raises(FeatureError):
        featurize(Dataset(far, np.full(far.shape, 0.5), Margin.UNIFORM))
    with pytest.raises(MarginTagError):
        featurize(Dataset(SMALL, np.zeros(SMALL.shape), Margin.GPD))


def test_weighted_features_match_resampled_dataset():
    d = uniform_sim(MixtureParams((0.15, 0.17, 0.18, 0.5), 0.4, 0.4), SMALL, 3)
    stats = replicate_bin_stats(d, DEFAULT_SCHEMA.grid, DEFAULT_SCHEMA.taus, DEFAULT_SCHEMA.q0)
    idx = np.random.default_rng(4).integers(0, 30, 30)
    w = np.bincount(idx, minlength=30)
    np.testing.assert_allclose(features_from_stats(stats, DEFAULT_SCHEMA, w[None])[0],
                               featurize(d.subset_replicates(idx)).values, rtol=1e-9, atol=1e-12)


# --- forest ----------------------------------------------------------------

def test_constant_target():
    X = np.random.default_rng(0).random((120, 6))
    with pytest.warns(RuntimeWarning):
        f = train_forest(X, np.full(120, 3.0), ForestConfig(n_trees=5))
    assert np.all(f.feature == -1)
    np.testing.assert_allclose(predict(f, X), 3.0)


def test_single_leaf_tree():
    f = ForestModel(np.array([0, 1]), np.array([-1]), np.zeros(1), np.array([-1]),
                    np.array([-1]), np.array([3.0]), 2, "")
    assert predict(f, np.array([0.1, 0.2])) == 3.0


def test_identity_task_oob():
    rng = np.random.default_rng(1)
    X = rng.random((2000, 45))
    f = train_forest(X, X[:, 0].copy(), ForestConfig(n_trees=100, seed=3))
    assert f.meta["oob_r2"] > 0.9


def test_forest_structure_invariants():
    rng = np.random.default_rng(2)
    X = rng.random((300, 10))
    y = X[:, 1] * 2 + rng.normal(0, 0.1, 300)
    cfg = ForestConfig(n_trees=20, seed=5)
    f = train_forest(X, y, cfg)
    assert f.meta["mtry"] == 3 and f.meta["min_leaf"] == 5
    internal = f.feature >= 0
    assert np.all(f.feature[internal] < 10)
    # replay the bootstrap sample of the first tree and count rows per leaf
    order = np.lexsort(np.column_stack([X, y[:, None]]).T[::-1])
    Xs = X[order]
    rows = np.random.default_rng(np.random.SeedSequence(5, spawn_key=(0, 0))).integers(0, 300, 300)
    first = ForestModel(f.offsets[:2], f.feature[:f.offsets[1]], f.threshold[:f.offsets[1]],
                        f.left[:f.offsets[1]], f.right[:f.offsets[1]], f.value[:f.offsets[1]],
                        10, "")
    leaves = _leaf_ids(first, Xs[rows])
    assert np.bincount(leaves)[np.unique(leaves)].min() >= 5
    # predictions stay within the training range
    p = predict(f, rng.random((200, 10)) * 3 - 1)
    assert p.min() >= y.min() and p.max() <= y.max()


def _leaf_ids(f, X):
    out = []
    for x in X:
        node = 0
        while f.feature[node] >= 0:
            node = f.left[node] if x[f.feature[node]] <= f.threshold[node] else f.right[node]
        out.append(node)
    return np.array(out)


def test_row_permutation_invariance():
    rng = np.random.default_rng(3)
    X = rng.random((200, 8))
    y = X[:, 0] + X[:, 1] ** 2
    perm = rng.permutation(200)
    a = train_forest(X, y, ForestConfig(n_trees=10, seed=1))
    b = train_forest(X[perm], y[perm], ForestConfig(n_trees=10, seed=1))
    Z = rng.random((50, 8))
    np.testing.assert_array_equal(predict(a, Z), predict(b, Z))


def test_thread_count_invariance():
    rng = np.random.default_rng(4)
    X = rng.random((200, 8))
    y = X[:, 2]
    a = train_forest(X, y, ForestConfig(n_trees=12, seed=1, n_jobs=1))
    b = train_forest(X, y, ForestConfig(n_trees=12, seed=1, n_jobs=3))
    np.testing.assert_array_equal(a.value, b.value)


def test_leaf_membership_replay():
    # a training row lands in a leaf whose mean lies within that leaf's targets
    rng = np.random.default_rng(5)
    X = rng.random((150, 4))
    y = rng.random(150)
    f = train_forest(X, y, ForestConfig(n_trees=1, seed=0))
    leaves = _leaf_ids(f, X)
    for leaf in np.unique(leaves):
        ys = y[leaves == leaf]
        assert ys.min() - 1e-12 <= f.value[leaf] <= ys.max() + 1e-12 or ys.size < 5


def test_persistence_roundtrip(tmp_path):
    rng = np.random.default_rng(6)
    X = rng.random((150, 5))
    f = train_forest(X, X[:, 0], ForestConfig(n_trees=5), schema_hash="abc")
    f.save(tmp_path / "m")
    g = ForestModel.load(tmp_path / "m")
    np.testing.assert_array_equal(predict(f, X), predict(g, X))
    meta = json.loads((tmp_path / "m.json").read_text())
    assert meta["schema_hash"] == "abc" and meta["n_trees"] == 5
    with pytest.raises(ModelError):
        predict(g, X, schema_hash="other")
    with pytest.raises(ModelError):
        predict(g, X[:, :3])
    with pytest.raises(ModelError):
        ForestModel.load(tmp_path / "missing")


def test_training_validation():
    with pytest.raises(DataError):
        train_forest(np.full((20, 2), np.nan), np.zeros(20))


# --- campaign and inference ------------------------------------------------

@pytest.fixture(scope="module")
def small_campaign():
    return run_campaign(PriorSpec(), SMALL, 100, seed=7)


def test_campaign_schema(small_campaign, tmp_path):
    ts = small_campaign
    assert ts.features.shape == (100, 45) and ts.targets.shape == (100, 5)
    ts.write_csv(tmp_path / "t.csv")
    back = TrainingSet.read_csv(tmp_path / "t.csv")
    np.testing.assert_array_equal(back.features, ts.features)
    np.testing.assert_array_equal(back.targets, ts.targets)


def test_campaign_deterministic_across_jobs(small_campaign):
    again = run_campaign(PriorSpec(), SMALL, 100, seed=7, n_jobs=2)
    np.testing.assert_array_equal(again.features, small_campaign.features)
    np.testing.assert_array_equal(again.targets, small_campaign.targets)


def test_campaign_minimum_size():
    with pytest.raises(DataError):
        run_campaign(PriorSpec(), SMALL, 50)


def test_estimate_and_bootstrap(small_campaign):
    fs = train_forests(small_campaign, ForestConfig(n_trees=20, seed=1))
    d = uniform_sim(MixtureParams((0.15, 0.17, 0.18, 0.5), 0.4, 0.4), SMALL, 8)
    theta = estimate(fs, d)
    assert np.all(np.isfinite(theta.as_array()))
    lo, hi = small_campaign.targets.min(0), small_campaign.targets.max(0)
    eta = fs.predict_eta(featurize(d, fs.schema).values)[0]
    assert np.all(eta >= lo - 1e-12) and np.all(eta <= hi + 1e-12)
    res = bootstrap_ci(fs, d, B=40, seed=2)
    assert res.vote_share.sum() == pytest.approx(1.0)
    assert np.all(res.lower <= res.upper)
    one = bootstrap_ci(fs, d, B=1, seed=2)
    np.testing.assert_array_equal(one.lower, one.upper)
    np.testing.assert_array_equal(one.lower, one.replicates[0])
    again = bootstrap_ci(fs, d, B=40, seed=2)
    np.testing.assert_array_equal(again.replicates, res.replicates)


def test_bootstrap_requires_replicates(small_campaign):
    fs = train_forests(small_campaign, ForestConfig(n_trees=3))
    d = uniform_sim(MixtureParams((0.15, 0.17, 0.18, 0.5), 0.4, 0.4),
                    SpaceTimeLayout.grid(3, 3, 10), 1)
    with pytest.raises(DataError):
        bootstrap_ci(fs, d, B=5)


def test_bootstrap_weights_nondegenerate():
    W = bootstrap_weights(20, 50, seed=3)
    assert W.shape == (50, 20)
    assert np.all(W.sum(1) == 20)
    assert np.all(W.max(1) < 20)


def test_forest_set_persistence(small_campaign, tmp_path):
    fs = train_forests(small_campaign, ForestConfig(n_trees=3))
    fs.save(tmp_path / "model")
    back = ForestSet.load(tmp_path / "model")
    z = small_campaign.features[:5]
    np.testing.assert_array_equal(back.predict_eta(z), fs.predict_eta(z))
    with pytest.raises(ModelError):
        ForestSet(fs.forests, FeatureSchema(q0=0.7))

import math

import numpy as np
import pytest

from stridesense.errors import ConfigError
from stridesense.features import FeatureVector, KeyUniverse
from stridesense.models import (
    AdaptiveRandomForest,
    ArfcConfig,
    GaussianNaiveBayes,
    HatcConfig,
    HoeffdingAdaptiveTree,
    KMeansConfig,
    OnlineKMeans,
)
from stridesense.streams import ClassLabel, NWGTI_LABELS, generate_synthetic

C0, C1, C2 = NWGTI_LABELS
TWO = (C0, C1)


@pytest.fixture(scope="module")
def universe():
    stream = generate_synthetic(seed=1, class_schedule=[("c0", 2.0)])
    return KeyUniverse(stream.descriptor, None, "raw")


def fv_of(universe, n=0, **values):
    """Build a FeatureVector keyed by raw channel shorthand k0, k1, ..."""
    mapping = {}
    for name, v in values.items():
        idx = int(name[1:])
        mapping[universe.strings[idx]] = v
    return FeatureVector.from_dict(n, mapping, universe)


def proba_list(proba, labels):
    return [proba[lab] for lab in labels]


# ---------------------------------------------------------------------------
# Gaussian naive Bayes


def test_gnb_cold_start_uniform(universe):
    gnb = GaussianNaiveBayes(NWGTI_LABELS, universe)
    proba = gnb.predict_proba_one(fv_of(universe, k0=1.0))
    assert proba_list(proba, NWGTI_LABELS) == pytest.approx([1 / 3] * 3)


def test_gnb_single_class(universe):
    gnb = GaussianNaiveBayes(NWGTI_LABELS, universe)
    rng = np.random.default_rng(0)
    for _ in range(50):
        gnb.learn_one(fv_of(universe, k0=float(rng.normal())), C0)
    proba = gnb.predict_proba_one(fv_of(universe, k0=0.2))
    assert proba[C0] == pytest.approx(1.0)
    assert gnb.predict_one(fv_of(universe, k0=0.2)) == C0


def test_gnb_symmetric_midpoint(universe):
    gnb = GaussianNaiveBayes(TWO, universe)
    rng = np.random.default_rng(1)
    # exactly mirrored unit-variance samples around +-2: posterior at 0 is 1/2
    for e in rng.normal(size=200):
        gnb.learn_one(fv_of(universe, k0=-2.0 + float(e)), C0)
        gnb.learn_one(fv_of(universe, k0=2.0 - float(e)), C1)
    proba = gnb.predict_proba_one(fv_of(universe, k0=0.0))
    assert proba[C0] == pytest.approx(0.5, abs=1e-6)


def test_gnb_matches_closed_form_posterior(universe):
    gnb = GaussianNaiveBayes(TWO, universe)
    rng = np.random.default_rng(7)
    xs0 = rng.normal(0.0, 1.0, size=100)
    xs1 = rng.normal(10.0, 1.0, size=100)
    for a, b in zip(xs0, xs1):
        gnb.learn_one(fv_of(universe, k0=float(a)), C0)
        gnb.learn_one(fv_of(universe, k0=float(b)), C1)

    def closed_form(x):
        # Bayes rule with the learned sample moments (population variance)
        out = []
        for xs in (xs0, xs1):
            mu, var = xs.mean(), xs.var()
            out.append(0.5 * math.exp(-((x - mu) ** 2) / (2 * var)) / math.sqrt(2 * math.pi * var))
        return out[0] / (out[0] + out[1])

    for q in (2.0, 4.0, 5.0, 6.5):
        proba = gnb.predict_proba_one(fv_of(universe, k0=q))
        assert proba[C0] == pytest.approx(closed_form(q), abs=1e-6)


def test_gnb_skips_keys_unseen_in_class(universe):
    gnb = GaussianNaiveBayes(TWO, universe)
    for i in range(20):
        gnb.learn_one(fv_of(universe, k0=0.0 + i * 0.01), C0)
        gnb.learn_one(fv_of(universe, k1=5.0 + i * 0.01), C1)
    # k2 never seen anywhere: posterior falls back to priors, no crash
    proba = gnb.predict_proba_one(fv_of(universe, k2=123.0))
    assert sum(proba_list(proba, TWO)) == pytest.approx(1.0)


def test_gnb_probabilities_sum_to_one(universe):
    gnb = GaussianNaiveBayes(NWGTI_LABELS, universe)
    rng = np.random.default_rng(3)
    for i in range(300):
        lab = NWGTI_LABELS[int(rng.integers(3))]
        keys = {f"k{int(k)}": float(rng.normal()) for k in rng.integers(0, 8, size=4)}
        gnb.learn_one(fv_of(universe, **keys), lab)
        proba = gnb.predict_proba_one(fv_of(universe, **keys))
        assert sum(proba_list(proba, NWGTI_LABELS)) == pytest.approx(1.0, abs=1e-9)


# ---------------------------------------------------------------------------
# Hoeffding adaptive tree


def threshold_stream(universe, n, rng, flip=False):
    for _ in range(n):
        x = float(rng.uniform(0.0, 10.0))
        above = x > 5.0
        label = C1 if (above != flip) else C0
        yield fv_of(universe, k0=x, k1=float(rng.normal())), label


def test_tree_learns_threshold_concept(universe):
    tree = HoeffdingAdaptiveTree(TWO, universe)
    rng = np.random.default_rng(11)
    for fv, label in threshold_stream(universe, 5000, rng):
        tree.learn_one(fv, label)
    hits = 0
    for fv, label in threshold_stream(universe, 1000, rng):
        hits += tree.predict_one(fv) == label
    assert hits / 1000 >= 0.95
    assert tree.node_count > 1


def test_tree_single_label_stays_single_leaf(universe):
    tree = HoeffdingAdaptiveTree(TWO, universe)
    rng = np.random.default_rng(12)
    for _ in range(3000):
        tree.learn_one(fv_of(universe, k0=float(rng.normal())), C0)
    assert tree.node_count == 1
    assert tree.predict_one(fv_of(universe, k0=0.0)) == C0


def test_tree_recovers_after_concept_flip(universe):
    tree = HoeffdingAdaptiveTree(TWO, universe)
    rng = np.random.default_rng(13)
    for fv, label in threshold_stream(universe, 10_000, rng, flip=False):
        tree.learn_one(fv, label)
    # abrupt flip: learn 5,000 post-drift samples, then measure
    for fv, label in threshold_stream(universe, 5000, rng, flip=True):
        tree.learn_one(fv, label)
    hits = 0
    for fv, label in threshold_stream(universe, 1000, rng, flip=True):
        hits += tree.predict_one(fv) == label
    assert hits / 1000 >= 0.9


def test_tree_depth_budget(universe):
    tree = HoeffdingAdaptiveTree(TWO, universe, HatcConfig(depth=1, grace_period=50))
    rng = np.random.default_rng(14)
    for fv, label in threshold_stream(universe, 3000, rng):
        tree.learn_one(fv, label)

    def max_depth(node, d=0):
        if node.is_terminal:
            return d
        return max(max_depth(node.left, d + 1), max_depth(node.right, d + 1))

    assert max_depth(tree.root) <= 1


def test_tree_proba_support(universe):
    tree = HoeffdingAdaptiveTree(NWGTI_LABELS, universe)
    rng = np.random.default_rng(15)
    for _ in range(500):
        lab = NWGTI_LABELS[int(rng.integers(3))]
        tree.learn_one(fv_of(universe, k0=float(rng.normal(loc=3 * int(lab.symbol[1])))), lab)
    proba = tree.predict_proba_one(fv_of(universe, k0=3.0))
    vals = proba_list(proba, NWGTI_LABELS)
    assert all(v >= 0 for v in vals)
    assert sum(vals) == pytest.approx(1.0, abs=1e-9)


def test_tree_handles_missing_keys(universe):
    tree = HoeffdingAdaptiveTree(TWO, universe)
    rng = np.random.default_rng(16)
    for fv, label in threshold_stream(universe, 2000, rng):
        tree.learn_one(fv, label)
    # a vector missing the split key routes left and still predicts
    proba = tree.predict_proba_one(fv_of(universe, k1=0.0))
    assert sum(proba_list(proba, TWO)) == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# Adaptive random forest


def test_single_tree_forest_equals_tree(universe):
    config = ArfcConfig(models=1, features=len(universe), lam=0.0, seed=5)
    forest = AdaptiveRandomForest(TWO, universe, config)
    tree = HoeffdingAdaptiveTree(TWO, universe)
    rng = np.random.default_rng(17)
    mismatches = 0
    for fv, label in threshold_stream(universe, 4000, rng):
        if forest.predict_one(fv) != tree.predict_one(fv):
            mismatches += 1
        forest.learn_one(fv, label)
        tree.learn_one(fv, label)
    assert mismatches == 0


def test_forest_not_much_worse_than_tree(universe):
    rng_f, rng_t, rng_eval = (np.random.default_rng(s) for s in (18, 18, 19))
    forest = AdaptiveRandomForest(TWO, universe, ArfcConfig(models=10, features=len(universe), lam=50.0, seed=1))
    tree = HoeffdingAdaptiveTree(TWO, universe)
    for (fv, label), (fv_t, label_t) in zip(
        threshold_stream(universe, 4000, rng_f), threshold_stream(universe, 4000, rng_t)
    ):
        forest.learn_one(fv, label)
        tree.learn_one(fv_t, label_t)
    forest_hits = tree_hits = 0
    eval_set = list(threshold_stream(universe, 1000, rng_eval))
    for fv, label in eval_set:
        forest_hits += forest.predict_one(fv) == label
        tree_hits += tree.predict_one(fv) == label
    assert forest_hits / 1000 >= tree_hits / 1000 - 0.02


def test_forest_deterministic_under_seed(universe):
    def run():
        forest = AdaptiveRandomForest(TWO, universe, ArfcConfig(models=5, features=4, lam=50.0, seed=9))
        rng = np.random.default_rng(20)
        preds = []
        for fv, label in threshold_stream(universe, 1500, rng):
            preds.append(forest.predict_one(fv).symbol)
            forest.learn_one(fv, label)
        return preds, forest.digest()

    first, second = run(), run()
    assert first[0] == second[0]
    assert first[1] == second[1]


def test_forest_feature_subsets_differ(universe):
    forest = AdaptiveRandomForest(TWO, universe, ArfcConfig(models=8, features=5, lam=50.0, seed=2))
    assert any(
        not np.array_equal(forest.subsets[0], forest.subsets[i]) for i in range(1, 8)
    )
    assert all(len(s) == 5 for s in forest.subsets)


# ---------------------------------------------------------------------------
# Online K-means


def test_kmeans_rejects_single_cluster(universe):
    with pytest.raises(ConfigError):
        OnlineKMeans(universe, KMeansConfig(n_clusters=1))


def test_kmeans_zero_update_at_centroid(universe):
    km = OnlineKMeans(universe, KMeansConfig(n_clusters=2, halflife=0.5, mu=0.0, sigma=0.0, seed=3))
    fv = fv_of(universe, k0=0.0, k1=0.0)
    cluster = km.learn_predict_one(fv)
    assert cluster == 0  # tie at identical centroids resolves to lowest id
    np.testing.assert_allclose(km.centroids[0, fv.key_ids], 0.0)


def test_kmeans_one_step_update(universe):
    km = OnlineKMeans(universe, KMeansConfig(n_clusters=2, halflife=0.075, mu=0.0, sigma=0.0, seed=3))
    fv = fv_of(universe, k0=10.0)
    cluster = km.learn_predict_one(fv)
    assert km.centroids[cluster, fv.key_ids[0]] == pytest.approx(0.75)


def test_kmeans_separates_blobs(universe):
    km = OnlineKMeans(universe, KMeansConfig(n_clusters=2, halflife=0.075, mu=0.01, sigma=0.001, seed=4))
    rng = np.random.default_rng(23)
    assignments = []
    truths = []
    for i in range(2000):
        truth = int(rng.integers(2))
        center = 10.0 if truth else -10.0
        fv = fv_of(
            universe,
            k0=center + float(rng.normal(scale=0.5)),
            k1=center + float(rng.normal(scale=0.5)),
        )
        assignments.append(km.learn_predict_one(fv))
        truths.append(truth)
    # after burn-in, purity against the true means must be near-perfect
    tail_a, tail_t = assignments[200:], truths[200:]
    agree = sum(a == t for a, t in zip(tail_a, tail_t))
    purity = max(agree, len(tail_a) - agree) / len(tail_a)
    assert purity >= 0.99


def test_kmeans_contraction(universe):
    km = OnlineKMeans(universe, KMeansConfig(n_clusters=2, halflife=0.2, mu=0.0, sigma=0.5, seed=6))
    fv = fv_of(universe, k0=4.0, k1=-2.0)
    target = fv.values
    last_gap = None
    cluster = km.assign(fv)
    for _ in range(30):
        assert km.learn_predict_one(fv) == cluster
        gap = np.abs(km.centroids[cluster, fv.key_ids] - target)
        if last_gap is not None:
            assert (gap <= last_gap + 1e-12).all()
        last_gap = gap


def test_kmeans_lazy_init_is_order_independent(universe):
    config = KMeansConfig(n_clusters=2, halflife=0.1, mu=0.01, sigma=0.1, seed=8)
    a = OnlineKMeans(universe, config)
    b = OnlineKMeans(universe, config)
    a.assign(fv_of(universe, k0=1.0))
    a.assign(fv_of(universe, k1=1.0))
    b.assign(fv_of(universe, k1=1.0))  # reversed first-sight order
    b.assign(fv_of(universe, k0=1.0))
    np.testing.assert_array_equal(a.centroids, b.centroids)

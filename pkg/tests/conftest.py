import pytest

from facetouch import dataset, ensemble
from facetouch.features import FEATURE_ORDER_HASH, N_FEATURES
from facetouch.forest import DecisionTree, Hyperparams, RandomForest


@pytest.fixture(scope="session")
def gen_cfg():
    return dataset.GenConfig()


@pytest.fixture(scope="session")
def trials366(gen_cfg):
    """One participant's full synthetic protocol (366 trials)."""
    stubs = dataset.protocol_manifest(11, "u01")
    return dataset.synth_trials(stubs, 11, gen_cfg)


@pytest.fixture(scope="session")
def small_trials(trials366):
    # every third trial keeps both classes well above the 10-fold floor
    return trials366[::3]


@pytest.fixture(scope="session")
def tiny_hp():
    hp = Hyperparams(n_estimators=15, max_depth=25)
    return {t: hp for t in ensemble.DEFAULT_PREFIX_INSTANTS}


@pytest.fixture(scope="session")
def tiny_ensemble(small_trials, tiny_hp):
    """Small but real ensemble, shared across tests that only read it."""
    return ensemble.train_ensemble(small_trials, seed=7, hp_by_t=tiny_hp)


def leaf_forest(label):
    """A one-leaf forest that always answers `label`."""
    tree = DecisionTree([-1], [0.0], [-1], [-1], [1], [1], [label])
    return RandomForest([tree], Hyperparams(n_estimators=1, max_depth=1),
                        seed=0, n_features=N_FEATURES,
                        feature_order_hash=FEATURE_ORDER_HASH)


@pytest.fixture
def make_constant_ensemble():
    """Factory for ensembles with fixed per-instant answers (logic tests)."""

    def build(labels_by_t, weights=None, lam=0.0):
        instants = tuple(sorted(labels_by_t))
        return ensemble.TemporalEnsemble(
            instants=instants,
            models={t: leaf_forest(labels_by_t[t]) for t in instants},
            f1_by_t={t: 0.5 for t in instants},
            weights=dict(weights) if weights else {t: 1.0 for t in instants},
            lam=lam,
        )

    return build

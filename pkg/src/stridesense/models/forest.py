"""Adaptive random forest: Hoeffding trees over random key subsets.

Each member tree sees only its own random subset of the key universe and
learns every sample a Poisson-drawn number of times (as a weight). Votes are
hard: the ensemble probability of a class is its share of member votes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ConfigError
from ..features import FeatureVector, KeyUniverse
from .base import argmax_proba, digest_arrays
from .hoeffding import HatcConfig, HoeffdingAdaptiveTree


@dataclass(frozen=True)
class ArfcConfig:
    models: int = 50
    features: int = 50
    lam: float = 50.0
    # The configured lambda is divided by 10 for the actual Poisson rate
    # unless raw_lambda is set; a rate of 50 would train every sample ~50
    # times per tree, which defeats streaming budgets.
    raw_lambda: bool = False
    seed: int = 1
    tree: HatcConfig = field(default_factory=HatcConfig)

    @property
    def effective_lambda(self) -> float:
        return self.lam if self.raw_lambda else self.lam / 10.0


class AdaptiveRandomForest:
    def __init__(self, labels: tuple, universe: KeyUniverse, config: ArfcConfig = ArfcConfig()):
        if config.models < 1:
            raise ConfigError("forest needs at least one tree")
        self.labels = tuple(labels)
        self.universe = universe
        self.config = config
        rng = np.random.default_rng(config.seed)
        n_keys = len(universe)
        subset_size = min(config.features, n_keys)
        self.subsets = [
            np.sort(rng.choice(n_keys, size=subset_size, replace=False)) for _ in range(config.models)
        ]
        streams = np.random.SeedSequence(config.seed).spawn(config.models)
        self._poisson = [np.random.default_rng(s) for s in streams]
        self.trees = [HoeffdingAdaptiveTree(labels, universe, config.tree) for _ in range(config.models)]

    def _project(self, fv: FeatureVector, tree_index: int) -> FeatureVector:
        subset = self.subsets[tree_index]
        ids = np.intersect1d(fv.key_ids, subset, assume_unique=True)
        if len(ids) == len(fv.key_ids):
            return fv
        pos = np.searchsorted(fv.key_ids, ids)
        return FeatureVector(n=fv.n, key_ids=ids, values=fv.values[pos], universe=fv.universe)

    def learn_one(self, fv: FeatureVector, label) -> None:
        lam = self.config.effective_lambda
        for i, tree in enumerate(self.trees):
            weight = self._poisson[i].poisson(lam) if lam > 0 else 1
            if weight > 0:
                tree.learn_one(self._project(fv, i), label, weight=float(weight))

    def tree_predict(self, tree_index: int, fv: FeatureVector):
        return self.trees[tree_index].predict_one(self._project(fv, tree_index))

    def predict_proba_one(self, fv: FeatureVector) -> dict:
        votes = np.zeros(len(self.labels))
        index = {lab.symbol: i for i, lab in enumerate(self.labels)}
        for i in range(len(self.trees)):
            votes[index[self.tree_predict(i, fv).symbol]] += 1.0
        votes /= votes.sum()
        return {lab: float(votes[i]) for i, lab in enumerate(self.labels)}

    def predict_one(self, fv: FeatureVector):
        return argmax_proba(self.predict_proba_one(fv))

    def digest(self) -> str:
        parts = [t.digest() for t in self.trees] + [s for s in map(tuple, self.subsets)]
        return digest_arrays(parts)

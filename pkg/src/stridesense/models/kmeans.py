"""Online K-means over sparse feature vectors with lazy centroid coordinates.

Centroid coordinates spring into existence the first time a key shows up in
any feature vector, drawn from a Gaussian prior whose seed is derived from
(seed, cluster, key), so the draw does not depend on the order in which keys
are first seen. Distances use only the keys present in the incoming vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..features import FeatureVector, KeyUniverse
from .base import digest_arrays


@dataclass(frozen=True)
class KMeansConfig:
    n_clusters: int = 3
    halflife: float = 0.075
    mu: float = 0.01
    sigma: float = 0.001
    p: int = 1
    seed: int = 1


PAMAP2_KMEANS = KMeansConfig(n_clusters=2, halflife=0.77, mu=0.01, sigma=10.0, p=1)


class OnlineKMeans:
    def __init__(self, universe: KeyUniverse, config: KMeansConfig = KMeansConfig()):
        if config.n_clusters < 2:
            raise ConfigError("need at least two clusters")
        self.universe = universe
        self.config = config
        self.centroids = np.zeros((config.n_clusters, len(universe)))
        self._materialized = np.zeros(len(universe), dtype=bool)

    def _materialize(self, ids: np.ndarray) -> None:
        fresh = ids[~self._materialized[ids]]
        for key_id in fresh:
            for cluster in range(self.config.n_clusters):
                rng = np.random.default_rng(
                    np.random.SeedSequence((self.config.seed, cluster, int(key_id)))
                )
                self.centroids[cluster, key_id] = rng.normal(self.config.mu, self.config.sigma)
        self._materialized[fresh] = True

    def assign(self, fv: FeatureVector) -> int:
        """Nearest centroid under Minkowski-p over the present keys (no update)."""
        ids = fv.key_ids
        if len(ids) == 0:
            return 0
        self._materialize(ids)
        diffs = np.abs(self.centroids[:, ids] - fv.values[None, :])
        distances = (diffs ** self.config.p).sum(axis=1)
        return int(np.argmin(distances))

    def learn_predict_one(self, fv: FeatureVector) -> int:
        """Assign first, then pull the winning centroid toward the sample."""
        cluster = self.assign(fv)
        ids = fv.key_ids
        if len(ids):
            row = self.centroids[cluster, ids]
            self.centroids[cluster, ids] = row + self.config.halflife * (fv.values - row)
        return cluster

    def predict_proba_one(self, fv: FeatureVector) -> dict:
        winner = self.assign(fv)
        return {c: 1.0 if c == winner else 0.0 for c in range(self.config.n_clusters)}

    def digest(self) -> str:
        return digest_arrays([self.centroids, self._materialized])

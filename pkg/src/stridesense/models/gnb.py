"""Streaming Gaussian naive Bayes over sparse feature vectors."""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from ..features import FeatureVector, KeyUniverse
from .base import argmax_proba, digest_arrays

VARIANCE_FLOOR = 1e-9


class GaussianNaiveBayes:
    """Per-class running Gaussians per key; keys unseen in a class are skipped.

    Skipping (likelihood one) rather than penalizing is what keeps multi-rate
    streams from zeroing out posteriors whenever a slow sensor is absent.
    """

    def __init__(self, labels: tuple, universe: KeyUniverse):
        self.labels = tuple(labels)
        self.universe = universe
        m, u = len(labels), len(universe)
        self.class_counts = np.zeros(m, dtype=np.int64)
        self.key_counts = np.zeros((m, u), dtype=np.int64)
        self.mean = np.zeros((m, u))
        self.m2 = np.zeros((m, u))
        self._index = {lab.symbol: i for i, lab in enumerate(labels)}

    def learn_one(self, fv: FeatureVector, label) -> None:
        li = self._index[label.symbol]
        self.class_counts[li] += 1
        ids, x = fv.key_ids, fv.values
        if len(ids) == 0:
            return
        kc = self.key_counts[li, ids] + 1
        delta = x - self.mean[li, ids]
        new_mean = self.mean[li, ids] + delta / kc
        self.m2[li, ids] += delta * (x - new_mean)
        self.mean[li, ids] = new_mean
        self.key_counts[li, ids] = kc

    def predict_proba_one(self, fv: FeatureVector) -> dict:
        total = int(self.class_counts.sum())
        if total == 0:
            p = 1.0 / len(self.labels)
            return {lab: p for lab in self.labels}
        ids, x = fv.key_ids, fv.values
        log_posts = np.full(len(self.labels), -np.inf)
        for li in range(len(self.labels)):
            if self.class_counts[li] == 0:
                continue
            logp = math.log(self.class_counts[li] / total)
            if len(ids):
                kc = self.key_counts[li, ids]
                seen = kc > 0
                if seen.any():
                    mean = self.mean[li, ids][seen]
                    var = np.maximum(self.m2[li, ids][seen] / kc[seen], VARIANCE_FLOOR)
                    diff = x[seen] - mean
                    logp += float(np.sum(-0.5 * (math.log(2.0 * math.pi) + np.log(var)) - diff * diff / (2.0 * var)))
            log_posts[li] = logp
        shift = log_posts.max()
        weights = np.exp(log_posts - shift)
        probs = weights / weights.sum()
        return {lab: float(probs[i]) for i, lab in enumerate(self.labels)}

    def predict_one(self, fv: FeatureVector):
        return argmax_proba(self.predict_proba_one(fv))

    def digest(self) -> str:
        return digest_arrays([self.class_counts, self.key_counts, self.mean, self.m2])

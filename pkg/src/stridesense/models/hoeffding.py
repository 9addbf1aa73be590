"""Incremental Hoeffding tree with per-branch drift monitors.

Leaves keep per-class Gaussian summaries per key and split once the
Hoeffding bound separates the two best candidate gains (or declares a tie).
Every internal node watches the error of the subtree below it on a sliding
window; when the recent window is significantly worse than the node's
pre-window history, an alternate subtree starts training in parallel and
replaces the branch as soon as it proves significantly better.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import ConfigError
from ..features import FeatureVector, KeyUniverse
from .base import argmax_proba, digest_arrays

_VAR_FLOOR = 1e-12


@dataclass(frozen=True)
class HatcConfig:
    depth: int = 50
    tie_threshold: float = 0.05
    max_size: int = 50  # node budget in thousands of nodes
    grace_period: int = 200
    split_confidence: float = 1e-7
    drift_window: int = 1000
    drift_z: float = 2.326  # one-sided 99%
    min_alternate: int = 300
    split_candidates: int = 10

    @property
    def node_budget(self) -> int:
        return self.max_size * 1000


def _entropy(masses: np.ndarray) -> float:
    total = masses.sum()
    if total <= 0:
        return 0.0
    p = masses[masses > 0] / total
    return float(-(p * np.log2(p)).sum())


def _z_score(err_a: int, n_a: int, err_b: int, n_b: int) -> float:
    """One-sided two-proportion z for rate(a) > rate(b)."""
    if n_a == 0 or n_b == 0:
        return 0.0
    pa, pb = err_a / n_a, err_b / n_b
    pooled = (err_a + err_b) / (n_a + n_b)
    denom = pooled * (1.0 - pooled) * (1.0 / n_a + 1.0 / n_b)
    if denom <= 0:
        return 0.0
    return (pa - pb) / math.sqrt(denom)


class _Leaf:
    """Learning leaf with adaptive majority-class / naive-Bayes prediction.

    The leaf tracks which of the two predictors has been right more often on
    the samples it has seen and answers with that one. Naive Bayes over the
    leaf's own Gaussian summaries is what makes a young tree competitive
    before any split has fired.
    """

    __slots__ = ("counts", "attrs", "weight_since_split", "depth", "mc_correct", "nb_correct")

    def __init__(self, n_classes: int, depth: int, counts: Optional[np.ndarray] = None):
        self.counts = counts if counts is not None else np.zeros(n_classes)
        self.attrs: dict = {}  # key_id -> [count, mean, m2, lo, hi] (arrays over classes)
        self.weight_since_split = 0.0
        self.depth = depth
        self.mc_correct = 0.0
        self.nb_correct = 0.0

    is_terminal = True

    def learn(self, fv: FeatureVector, li: int, weight: float) -> None:
        # Score both predictors on this sample before absorbing it.
        if self.counts.sum() > 0:
            if int(np.argmax(self.counts)) == li:
                self.mc_correct += weight
            if int(np.argmax(self._nb_log_scores(fv))) == li:
                self.nb_correct += weight
        self.counts[li] += weight
        self.weight_since_split += weight
        n_classes = len(self.counts)
        for key_id, x in zip(fv.key_ids, fv.values):
            st = self.attrs.get(key_id)
            if st is None:
                st = [np.zeros(n_classes), np.zeros(n_classes), np.zeros(n_classes), x, x]
                self.attrs[key_id] = st
            cnt, mean, m2, lo, hi = st
            cnt[li] += weight
            delta = x - mean[li]
            mean[li] += weight * delta / cnt[li]
            m2[li] += weight * delta * (x - mean[li])
            st[3] = min(lo, x)
            st[4] = max(hi, x)

    def _nb_log_scores(self, fv: FeatureVector) -> np.ndarray:
        total = self.counts.sum()
        m = len(self.counts)
        scores = np.full(m, -np.inf)
        seen_classes = self.counts > 0
        scores[seen_classes] = np.log(self.counts[seen_classes] / total)
        for key_id, x in zip(fv.key_ids, fv.values):
            st = self.attrs.get(key_id)
            if st is None:
                continue
            cnt, mean, m2 = st[0], st[1], st[2]
            has = seen_classes & (cnt > 0)
            if not has.any():
                continue
            var = np.maximum(m2[has] / cnt[has], 1e-9)
            diff = x - mean[has]
            scores[has] += -0.5 * (math.log(2.0 * math.pi) + np.log(var)) - diff * diff / (2.0 * var)
        return scores

    def proba(self, fv: FeatureVector) -> np.ndarray:
        total = self.counts.sum()
        m = len(self.counts)
        if total <= 0:
            return np.full(m, 1.0 / m)
        if self.nb_correct > self.mc_correct:
            scores = self._nb_log_scores(fv)
            weights = np.exp(scores - scores.max())
            return weights / weights.sum()
        return self.counts / total


class _Split:
    __slots__ = (
        "key_id", "threshold", "left", "right",
        "window", "window_errors", "prefix_errors", "prefix_total",
        "alternate", "alt_window", "alt_window_errors",
    )

    def __init__(self, key_id: int, threshold: float, left, right, window: int):
        self.key_id = key_id
        self.threshold = threshold
        self.left = left
        self.right = right
        self.window: deque = deque(maxlen=window)
        self.window_errors = 0
        self.prefix_errors = 0
        self.prefix_total = 0
        self.alternate = None
        self.alt_window: deque = deque(maxlen=window)
        self.alt_window_errors = 0

    is_terminal = False

    def child_for(self, fv: FeatureVector):
        v = fv.get_id(self.key_id)
        if v is None or v <= self.threshold:
            return self.left
        return self.right

    def record(self, err: bool) -> None:
        if len(self.window) == self.window.maxlen:
            evicted = self.window.popleft()
            self.window_errors -= evicted
            self.prefix_errors += evicted
            self.prefix_total += 1
        self.window.append(1 if err else 0)
        self.window_errors += 1 if err else 0

    def record_alt(self, err: bool) -> None:
        if len(self.alt_window) == self.alt_window.maxlen:
            self.alt_window_errors -= self.alt_window.popleft()
        self.alt_window.append(1 if err else 0)
        self.alt_window_errors += 1 if err else 0


class HoeffdingAdaptiveTree:
    """learn/predict over sparse feature vectors; see module docstring."""

    def __init__(self, labels: tuple, universe: KeyUniverse, config: HatcConfig = HatcConfig()):
        self.labels = tuple(labels)
        self.universe = universe
        self.config = config
        self._index = {lab.symbol: i for i, lab in enumerate(labels)}
        self.root = _Leaf(len(labels), depth=0)
        self.node_count = 1

    # ---- prediction -----------------------------------------------------

    def _route(self, node, fv: FeatureVector):
        while not node.is_terminal:
            node = node.child_for(fv)
        return node

    def predict_proba_one(self, fv: FeatureVector) -> dict:
        leaf = self._route(self.root, fv)
        proba = leaf.proba(fv)
        return {lab: float(proba[i]) for i, lab in enumerate(self.labels)}

    def predict_one(self, fv: FeatureVector):
        return argmax_proba(self.predict_proba_one(fv))

    # ---- learning -------------------------------------------------------

    def learn_one(self, fv: FeatureVector, label, weight: float = 1.0) -> None:
        li = self._index[label.symbol]
        main_leaf = self._route(self.root, fv)
        err = int(np.argmax(main_leaf.proba(fv))) != li
        self.root = self._learn(self.root, fv, li, weight, err, allow_alternates=True)

    def _learn(self, node, fv: FeatureVector, li: int, weight: float, err: bool, allow_alternates: bool):
        if node.is_terminal:
            node.learn(fv, li, weight)
            if node.weight_since_split >= self.config.grace_period:
                node = self._attempt_split(node)
            return node

        node.record(err)
        if allow_alternates:
            self._manage_alternate(node, fv, li, weight)
            if node.alternate is not None and self._should_promote(node):
                replacement = node.alternate
                self.node_count += self._count(replacement) - self._count(node)
                return replacement

        if node.child_for(fv) is node.left:
            node.left = self._learn(node.left, fv, li, weight, err, allow_alternates)
        else:
            node.right = self._learn(node.right, fv, li, weight, err, allow_alternates)
        return node

    def _manage_alternate(self, node: _Split, fv: FeatureVector, li: int, weight: float) -> None:
        cfg = self.config
        if node.alternate is None:
            drifted = (
                len(node.window) == cfg.drift_window
                and node.prefix_total >= cfg.drift_window
                and _z_score(node.window_errors, len(node.window), node.prefix_errors, node.prefix_total)
                > cfg.drift_z
            )
            if drifted and self.node_count + 1 <= cfg.node_budget:
                node.alternate = _Leaf(len(self.labels), depth=node_depth(node))
                self.node_count += 1
                node.alt_window.clear()
                node.alt_window_errors = 0
            else:
                return
        alt_leaf = self._route(node.alternate, fv)
        alt_pred = int(np.argmax(alt_leaf.proba(fv)))
        node.record_alt(alt_pred != li)
        before = self._count(node.alternate)
        # Alternates grow like normal subtrees but do not nest monitors.
        node.alternate = self._learn(node.alternate, fv, li, weight, alt_pred != li, allow_alternates=False)
        self.node_count += self._count(node.alternate) - before
        if self._should_discard(node):
            self.node_count -= self._count(node.alternate)
            node.alternate = None

    def _should_promote(self, node: _Split) -> bool:
        n_alt = len(node.alt_window)
        if n_alt < self.config.min_alternate:
            return False
        z = _z_score(node.window_errors, len(node.window), node.alt_window_errors, n_alt)
        return z > self.config.drift_z

    def _should_discard(self, node: _Split) -> bool:
        n_alt = len(node.alt_window)
        if n_alt < self.config.min_alternate:
            return False
        z = _z_score(node.alt_window_errors, n_alt, node.window_errors, len(node.window))
        return z > self.config.drift_z

    def _count(self, node) -> int:
        if node is None:
            return 0
        if node.is_terminal:
            return 1
        return 1 + self._count(node.left) + self._count(node.right) + self._count(node.alternate)

    # ---- splitting ------------------------------------------------------

    def _attempt_split(self, leaf: _Leaf):
        leaf.weight_since_split = 0.0
        counts = leaf.counts
        total = counts.sum()
        if total <= 0 or (counts > 0).sum() < 2:
            return leaf
        if leaf.depth >= self.config.depth or self.node_count + 2 > self.config.node_budget:
            return leaf

        h0 = _entropy(counts)
        best = (-math.inf, None, None, None)  # gain, key, threshold, left_masses
        second_gain = -math.inf
        for key_id in sorted(leaf.attrs):
            cnt, mean, m2, lo, hi = leaf.attrs[key_id]
            if not lo < hi:
                continue
            gain, thr, left_masses = self._best_cut(counts, cnt, mean, m2, lo, hi, h0)
            if gain > best[0]:
                second_gain = best[0]
                best = (gain, key_id, thr, left_masses)
            elif gain > second_gain:
                second_gain = gain
        if best[1] is None:
            return leaf

        r = math.log2(len(self.labels))
        epsilon = math.sqrt(r * r * math.log(1.0 / self.config.split_confidence) / (2.0 * total))
        gain_margin = best[0] - (second_gain if second_gain > -math.inf else 0.0)
        if best[0] <= 0 or not (gain_margin > epsilon or epsilon < self.config.tie_threshold):
            return leaf

        _, key_id, threshold, left_masses = best
        right_masses = np.maximum(counts - left_masses, 0.0)
        # Children start with the projected split distribution scaled to unit
        # mass: enough to predict sensibly right away, too light to distort
        # the gain math of their own future splits.
        left = _Leaf(len(self.labels), depth=leaf.depth + 1, counts=_unit(left_masses))
        right = _Leaf(len(self.labels), depth=leaf.depth + 1, counts=_unit(right_masses))
        self.node_count += 2
        return _Split(key_id, float(threshold), left, right, self.config.drift_window)

    def _best_cut(self, counts, cnt, mean, m2, lo, hi, h0):
        """Best information gain over evenly spaced cuts of one key's range."""
        cands = self.config.split_candidates
        thresholds = lo + (hi - lo) * np.arange(1, cands + 1) / (cands + 1.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            var = np.maximum(m2 / np.maximum(cnt, 1e-300), _VAR_FLOOR)
        sd = np.sqrt(var)
        # Mass each class sends left of each cut, via its Gaussian CDF.
        z = (thresholds[None, :] - mean[:, None]) / sd[:, None]
        cdf = 0.5 * (1.0 + _erf_vec(z / math.sqrt(2.0)))
        seen = cnt > 0
        left = np.zeros_like(cdf)
        left[seen] = cnt[seen, None] * cdf[seen]
        # Classes observed only at a constant value are a point mass.
        point = seen & (m2 <= _VAR_FLOOR)
        if point.any():
            left[point] = np.where(mean[point, None] <= thresholds[None, :], cnt[point, None], 0.0)

        n_left = left.sum(axis=0)
        total = counts.sum()
        n_right = total - n_left
        best_gain, best_i = -math.inf, 0
        for i in range(len(thresholds)):
            if n_left[i] <= 0 or n_right[i] <= 0:
                continue
            h_left = _entropy(left[:, i])
            h_right = _entropy(np.maximum(counts - left[:, i], 0.0))
            gain = h0 - (n_left[i] / total) * h_left - (n_right[i] / total) * h_right
            if gain > best_gain:
                best_gain, best_i = gain, i
        return best_gain, thresholds[best_i], np.maximum(left[:, best_i], 0.0)

    # ---- reporting ------------------------------------------------------

    def digest(self) -> str:
        parts: list = []

        def walk(node):
            if node is None:
                parts.append("nil")
                return
            if node.is_terminal:
                parts.append("leaf")
                parts.append(node.counts)
                parts.extend([node.mc_correct, node.nb_correct])
                for key_id in sorted(node.attrs):
                    cnt, mean, m2, lo, hi = node.attrs[key_id]
                    parts.extend([key_id, cnt, mean, m2, lo, hi])
                return
            parts.extend(["split", node.key_id, node.threshold])
            walk(node.left)
            walk(node.right)
            walk(node.alternate)

        walk(self.root)
        return digest_arrays(parts)


def node_depth(node) -> int:
    if node.is_terminal:
        return node.depth
    return node_depth(node.left) - 1


def _unit(masses: np.ndarray) -> np.ndarray:
    total = masses.sum()
    return masses / total if total > 0 else masses


def _erf_vec(x: np.ndarray) -> np.ndarray:
    """Vectorized erf via Abramowitz-Stegun 7.1.26 (|err| < 1.5e-7)."""
    sign = np.sign(x)
    ax = np.abs(x)
    t = 1.0 / (1.0 + 0.3275911 * ax)
    poly = t * (0.254829592 + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))))
    return sign * (1.0 - poly * np.exp(-ax * ax))

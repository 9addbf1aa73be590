"""Turning sparse judge tags into full labels via cluster membership.

Two routes exist and are kept deliberately separate: ``best_mapping`` is the
scoring oracle (the cluster-to-class assignment that maximizes accuracy
against ground truth), while ``expand_tags`` is the field procedure (each
cluster takes the majority label of the judge tags that landed in it, and
every slot inherits its cluster's label).
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass
from itertools import permutations
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, CoverageError
from .streams import ClassLabel


@dataclass(frozen=True)
class JudgeTag:
    slot: int
    label: ClassLabel
    source: str = "judge"


@dataclass(frozen=True)
class ClusterLabelMap:
    mapping: tuple  # label index per cluster id; -1 = anonymous violation
    provenance: str  # "judge_tags" or "best_mapping_oracle"

    def label_index(self, cluster: int) -> int:
        return self.mapping[cluster]


def best_mapping(confusion: np.ndarray) -> tuple:
    """Exhaustive cluster-to-class assignment maximizing accuracy.

    ``confusion[cluster, class]`` counts co-occurrences. Requires a square
    matrix (cluster count == class count) small enough to brute-force.
    Ties resolve to the lexicographically smallest permutation.
    """
    confusion = np.asarray(confusion)
    if confusion.ndim != 2 or confusion.shape[0] != confusion.shape[1]:
        raise ConfigError(f"confusion matrix must be square, got {confusion.shape}")
    k = confusion.shape[0]
    if k > 8:
        raise ConfigError("brute-force mapping limited to 8 clusters")
    total = confusion.sum()
    best_perm, best_hits = None, -1
    for perm in permutations(range(k)):
        hits = sum(confusion[c, perm[c]] for c in range(k))
        if hits > best_hits:
            best_perm, best_hits = perm, hits
    accuracy = float(best_hits) / total if total > 0 else 0.0
    return ClusterLabelMap(mapping=tuple(best_perm), provenance="best_mapping_oracle"), accuracy


def nearest_assessed_slot(slots: Sequence[int], target: int) -> int:
    """Assessed slot closest to ``target`` (earlier one on a distance tie)."""
    pos = bisect_left(slots, target)
    if pos == 0:
        return slots[0]
    if pos == len(slots):
        return slots[-1]
    before, after = slots[pos - 1], slots[pos]
    return before if target - before <= after - target else after


def expand_tags(
    assignments: Mapping[int, int],
    tags: Sequence[JudgeTag],
    n_clusters: int,
    labels: tuple,
    correct_only: bool = False,
) -> tuple:
    """Label every assessed slot with its cluster's majority tag.

    ``assignments`` maps master slot -> cluster for the assessed slots. A tag
    lands in the cluster of the assessed slot nearest to where the judge
    clicked. In ``correct_only`` mode (competition judging) only the
    correct-practice cluster is named; the remaining clusters stay anonymous
    violations (label index -1, rendered downstream as "violation").

    Returns (ClusterLabelMap, {slot: label_index}). Raises CoverageError when
    a cluster received no tag (unless correct_only).
    """
    if not assignments:
        raise CoverageError("no assessed slots to expand tags over")
    label_index = {lab.symbol: i for i, lab in enumerate(labels)}
    ordered_slots = sorted(assignments)
    per_cluster: list = [[] for _ in range(n_clusters)]
    for order, tag in enumerate(sorted(tags, key=lambda t: (t.slot, t.source))):
        if correct_only and tag.label.symbol != labels[0].symbol:
            continue
        slot = nearest_assessed_slot(ordered_slots, tag.slot)
        per_cluster[assignments[slot]].append((order, label_index[tag.label.symbol]))

    mapping = []
    untagged = [c for c in range(n_clusters) if not per_cluster[c]]
    if correct_only:
        if all(not votes for votes in per_cluster):
            raise CoverageError("correct-only mode received no correct-practice tags")
        for c in range(n_clusters):
            mapping.append(_majority(per_cluster[c]) if per_cluster[c] else -1)
    else:
        if untagged:
            raise CoverageError(f"clusters without any tag: {untagged}")
        for c in range(n_clusters):
            mapping.append(_majority(per_cluster[c]))

    cluster_map = ClusterLabelMap(mapping=tuple(mapping), provenance="judge_tags")
    per_slot = {slot: cluster_map.label_index(cluster) for slot, cluster in assignments.items()}
    return cluster_map, per_slot


def _majority(votes: list) -> int:
    """Majority label index; ties go to the earliest tag among the tied."""
    counts: dict = {}
    first_seen: dict = {}
    for order, li in votes:
        counts[li] = counts.get(li, 0) + 1
        first_seen.setdefault(li, order)
    top = max(counts.values())
    tied = [li for li, c in counts.items() if c == top]
    return min(tied, key=lambda li: first_seen[li])


def load_tag_file(fp, labels: tuple) -> list:
    """Parse newline-delimited `slot,label,source` records."""
    by_symbol = {lab.symbol: lab for lab in labels}
    tags = []
    for lineno, line in enumerate(fp, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ConfigError(f"tag file line {lineno}: expected slot,label,source")
        slot, symbol, source = parts
        if symbol not in by_symbol:
            raise ConfigError(f"tag file line {lineno}: unknown label {symbol!r}")
        tags.append(JudgeTag(slot=int(slot), label=by_symbol[symbol], source=source))
    return tags


def simulate_judge_tags(
    truth_by_slot: Mapping[int, int],
    labels: tuple,
    per_class: int = 5,
    seed: int = 1,
    noise_rate: float = 0.0,
) -> list:
    """Seeded stand-in for live judges: per_class tags at random slots.

    Tags carry the true class unless flipped by ``noise_rate``.
    """
    rng = np.random.default_rng(seed)
    by_class: dict = {}
    for slot, li in truth_by_slot.items():
        by_class.setdefault(li, []).append(slot)
    tags = []
    for li in sorted(by_class):
        slots = sorted(by_class[li])
        chosen = rng.choice(len(slots), size=min(per_class, len(slots)), replace=False)
        for j, pick in enumerate(sorted(chosen)):
            label = labels[li]
            if noise_rate > 0 and rng.random() < noise_rate:
                label = labels[(li + 1) % len(labels)]
            tags.append(JudgeTag(slot=slots[pick], label=label, source=f"judge-{j % 3 + 1}"))
    return tags

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from stridesense.errors import ConfigError, CoverageError
from stridesense.labeling import (
    JudgeTag,
    best_mapping,
    expand_tags,
    load_tag_file,
    nearest_assessed_slot,
    simulate_judge_tags,
)
from stridesense.streams import NWGTI_LABELS

C0, C1, C2 = NWGTI_LABELS


def hungarian_accuracy(confusion):
    """Independent oracle: Hungarian assignment maximizing the trace."""
    confusion = np.asarray(confusion)
    rows, cols = linear_sum_assignment(-confusion)
    return confusion[rows, cols].sum() / confusion.sum() if confusion.sum() else 0.0


def test_identity_dominant():
    cmap, acc = best_mapping(np.array([[10, 0], [0, 10]]))
    assert cmap.mapping == (0, 1)
    assert acc == 1.0


def test_anti_diagonal():
    cmap, acc = best_mapping(np.array([[0, 10], [10, 0]]))
    assert cmap.mapping == (1, 0)
    assert acc == 1.0


def test_mixed_matrix():
    cmap, acc = best_mapping(np.array([[5, 3], [2, 6]]))
    assert cmap.mapping == (0, 1)
    assert acc == pytest.approx(11 / 16)


def test_non_square_rejected():
    with pytest.raises(ConfigError):
        best_mapping(np.ones((2, 3)))


def test_best_mapping_beats_random_mappings():
    rng = np.random.default_rng(4)
    for _ in range(50):
        confusion = rng.integers(0, 20, size=(3, 3))
        _, acc = best_mapping(confusion)
        total = confusion.sum()
        for _ in range(10):
            perm = rng.permutation(3)
            fixed = sum(confusion[c, perm[c]] for c in range(3)) / total
            assert acc >= fixed - 1e-12


def test_relabeling_invariance():
    rng = np.random.default_rng(5)
    for _ in range(50):
        confusion = rng.integers(0, 9, size=(3, 3))
        if confusion.sum() == 0:
            continue
        _, acc = best_mapping(confusion)
        perm = rng.permutation(3)
        _, acc_permuted = best_mapping(confusion[perm])
        assert acc == pytest.approx(acc_permuted)


def test_matches_hungarian_oracle():
    rng = np.random.default_rng(6)
    for _ in range(300):
        confusion = rng.integers(0, 7, size=(3, 3))
        if confusion.sum() == 0:
            continue
        _, acc = best_mapping(confusion)
        assert acc == pytest.approx(hungarian_accuracy(confusion))


def test_tie_break_lexicographic():
    # permutations (0,1) and (1,0) both give 10 hits; smaller one wins
    cmap, _ = best_mapping(np.array([[5, 5], [5, 5]]))
    assert cmap.mapping == (0, 1)


# ---------------------------------------------------------------------------
# Tag expansion


def test_one_tag_per_cluster():
    assignments = {0: 0, 10: 1, 20: 2}
    tags = [JudgeTag(0, C2), JudgeTag(10, C0), JudgeTag(20, C1)]
    cmap, per_slot = expand_tags(assignments, tags, 3, NWGTI_LABELS)
    assert cmap.mapping == (2, 0, 1)
    assert cmap.provenance == "judge_tags"
    assert per_slot == {0: 2, 10: 0, 20: 1}


def test_majority_vote():
    assignments = {i: 0 for i in range(5)} | {9: 1, 10: 2}
    tags = [JudgeTag(0, C0), JudgeTag(1, C0), JudgeTag(2, C1), JudgeTag(9, C1), JudgeTag(10, C2)]
    cmap, _ = expand_tags(assignments, tags, 3, NWGTI_LABELS)
    assert cmap.mapping[0] == 0


def test_tie_goes_to_earliest_tag():
    assignments = {0: 0, 1: 0, 5: 1, 6: 2}
    tags = [JudgeTag(0, C1), JudgeTag(1, C0), JudgeTag(5, C0), JudgeTag(6, C2)]
    cmap, _ = expand_tags(assignments, tags, 3, NWGTI_LABELS)
    assert cmap.mapping[0] == 1  # c1 tagged first


def test_untagged_cluster_raises():
    assignments = {0: 0, 1: 1, 2: 2}
    tags = [JudgeTag(0, C0)]
    with pytest.raises(CoverageError) as err:
        expand_tags(assignments, tags, 3, NWGTI_LABELS)
    assert "1" in str(err.value) and "2" in str(err.value)


def test_correct_only_mode():
    assignments = {0: 0, 1: 1, 2: 2}
    tags = [JudgeTag(0, C0), JudgeTag(1, C1)]  # non-correct tags ignored
    cmap, per_slot = expand_tags(assignments, tags, 3, NWGTI_LABELS, correct_only=True)
    assert cmap.mapping == (0, -1, -1)
    assert per_slot == {0: 0, 1: -1, 2: -1}


def test_nearest_assessed_slot():
    slots = [0, 10, 20]
    assert nearest_assessed_slot(slots, -5) == 0
    assert nearest_assessed_slot(slots, 4) == 0
    assert nearest_assessed_slot(slots, 5) == 0  # earlier wins the tie
    assert nearest_assessed_slot(slots, 6) == 10
    assert nearest_assessed_slot(slots, 99) == 20


def test_expansion_tracks_clustering_quality():
    # 1,000 slots, imperfect clustering; expanded accuracy within 0.01 of
    # the best-mapping accuracy for the same assignment
    rng = np.random.default_rng(11)
    truth = rng.integers(0, 3, size=1000)
    clusters = truth.copy()
    flip = rng.random(1000) < 0.08
    clusters[flip] = (clusters[flip] + 1) % 3
    assignments = {i: int(c) for i, c in enumerate(clusters)}
    truth_by_slot = {i: int(t) for i, t in enumerate(truth)}
    tags = simulate_judge_tags(truth_by_slot, NWGTI_LABELS, per_class=5, seed=3)
    cmap, per_slot = expand_tags(assignments, tags, 3, NWGTI_LABELS)
    expanded_acc = np.mean([per_slot[i] == truth[i] for i in range(1000)])
    confusion = np.zeros((3, 3), dtype=int)
    for i in range(1000):
        confusion[clusters[i], truth[i]] += 1
    _, mapped_acc = best_mapping(confusion)
    assert expanded_acc >= mapped_acc - 0.01


def test_tag_file_roundtrip(tmp_path):
    path = tmp_path / "tags.csv"
    path.write_text("# judge tags\n120,c0,judge-1\n400,c1,judge-2\n")
    tags = load_tag_file(path.open(), NWGTI_LABELS)
    assert tags == [JudgeTag(120, C0, "judge-1"), JudgeTag(400, C1, "judge-2")]


def test_tag_file_unknown_label(tmp_path):
    path = tmp_path / "tags.csv"
    path.write_text("5,c9,judge-1\n")
    with pytest.raises(ConfigError):
        load_tag_file(path.open(), NWGTI_LABELS)

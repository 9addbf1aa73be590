"""Shared helpers for the online models.

Every model exposes learn_one / predict_one / predict_proba_one over sparse
FeatureVectors whose key sets may differ slot to slot, plus a digest() of its
sufficient statistics used for determinism checks in run reports.
"""

from __future__ import annotations

import hashlib
from typing import Iterable

import numpy as np


def digest_arrays(parts: Iterable) -> str:
    """Stable hex digest of a sequence of arrays / scalars / strings."""
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, np.ndarray):
            h.update(np.ascontiguousarray(part).tobytes())
        else:
            h.update(repr(part).encode())
    return h.hexdigest()


def argmax_proba(proba: dict):
    """Highest-probability label; ties go to the earliest declared label."""
    best, best_p = None, -1.0
    for label, p in proba.items():
        if p > best_p:
            best, best_p = label, p
    return best

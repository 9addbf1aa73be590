import numpy as np
import pytest

from stridesense.streams import ClassLabel, NWGTI_LABELS, generate_synthetic


@pytest.fixture(scope="session")
def short_stream():
    """3-class synthetic stream long enough to calibrate, tune and assess."""
    schedule = [("c0", 80.0), ("c1", 80.0), ("c2", 80.0), ("c0", 60.0), ("c1", 60.0), ("c2", 60.0)]
    return generate_synthetic(seed=42, class_schedule=schedule)


@pytest.fixture(scope="session")
def labels3():
    return NWGTI_LABELS

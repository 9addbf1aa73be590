"""Window-length calibration from the first seconds of a stream.

Each channel's spacing between its first two strict local minima estimates
one movement period. The sorted spacings across channels become quartile
picks, scaled by the rate ratio into the four global sliding-window lengths.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import CalibrationError
from .streams import SensorAddress, Stream


def nint(x: float) -> int:
    """Nearest integer, halves rounded away from zero."""
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


@dataclass(frozen=True)
class CalibrationConfig:
    duration_s: float = 90.0

    def k_slots(self, master_rate: float) -> int:
        k = int(round(self.duration_s * master_rate))
        if k < 3:
            raise CalibrationError("calibration interval shorter than 3 slots")
        return k


@dataclass(frozen=True)
class WindowSet:
    """The four global sliding-window lengths, in slots."""

    w_q1: int
    w_q2: int
    w_q3: int
    w_avg: int

    def __post_init__(self):
        if min(self.w_q1, self.w_q2, self.w_q3, self.w_avg) < 2:
            raise CalibrationError("window lengths must be >= 2")
        if not (self.w_q1 <= self.w_q2 <= self.w_q3):
            raise CalibrationError("quartile windows must be ordered")

    @property
    def lengths(self) -> tuple:
        return (self.w_q1, self.w_q2, self.w_q3, self.w_avg)

    @property
    def names(self) -> tuple:
        return ("wQ1", "wQ2", "wQ3", "wavg")

    @property
    def n_init(self) -> int:
        return max(self.lengths)

    def as_dict(self) -> dict:
        return {"wQ1": self.w_q1, "wQ2": self.w_q2, "wQ3": self.w_q3, "wavg": self.w_avg}


@dataclass(frozen=True)
class MinimaSpacing:
    address: SensorAddress
    v: int


def find_minima_spacing(signal: Sequence[float], k: Optional[int] = None) -> int:
    """Spacing between the first two strict interior minima of ``signal``.

    ``signal`` holds a channel's present samples only; ``k`` restricts the
    scan to the first k samples. Plateaus do not count (comparisons strict).
    """
    x = np.asarray(signal, dtype=float)
    if k is not None:
        x = x[:k]
    if len(x) < 3:
        raise CalibrationError("too few samples for minima detection")
    first = None
    for n in range(1, len(x) - 1):
        if x[n - 1] > x[n] < x[n + 1]:
            if first is None:
                first = n
            else:
                return n - first
    raise CalibrationError("fewer than two strict local minima in calibration interval")


def derive_windows(spacings: Sequence[int], r_min: float, r_max: float) -> WindowSet:
    """Combine per-channel minima spacings into the four window lengths.

    The quartile subscripts are clamped to the last element, and the average
    is the plain arithmetic mean of the sorted spacings.
    """
    if len(spacings) < 4:
        raise CalibrationError(f"need at least 4 channel spacings, got {len(spacings)}")
    if r_min > r_max:
        raise CalibrationError("r_min must not exceed r_max")
    v_sorted = sorted(int(v) for v in spacings)
    size = len(v_sorted)
    m = nint(2.0 * r_max / r_min)

    def pick(j: int) -> int:
        return v_sorted[min(nint(j * size / 4.0), size - 1)]

    w_q1 = m * pick(1)
    w_q2 = m * pick(2)
    w_q3 = m * pick(3)
    w_avg = m * nint(sum(v_sorted) / size)
    return WindowSet(w_q1=w_q1, w_q2=w_q2, w_q3=w_q3, w_avg=w_avg)


@dataclass
class CalibrationResult:
    windows: WindowSet
    spacings: list  # MinimaSpacing per contributing channel
    k: int
    skipped: list  # addresses excluded for lacking two strict minima


def calibrate_stream(stream: Stream, config: CalibrationConfig = CalibrationConfig()) -> CalibrationResult:
    """Run Eq.-style calibration over the first ``config.duration_s`` seconds.

    Minima are found over each channel's own present samples. Channels
    without two strict minima are skipped, provided at least four remain.
    The rate ratio multiplier uses the rates of contributing sensors only,
    so a sparse slow channel that fails calibration cannot distort the
    window scale.
    """
    descriptor = stream.descriptor
    master = descriptor.master_rate
    k = config.k_slots(master)
    window = stream.slots[:k]
    if len(window) < k:
        raise CalibrationError(
            f"stream shorter ({len(window)} slots) than calibration interval ({k} slots)"
        )

    values = np.stack([slot.values for slot in window])  # (k, channels)
    spacings, skipped = [], []
    for idx, addr in enumerate(descriptor.addresses):
        channel = values[:, idx]
        channel = channel[~np.isnan(channel)]
        try:
            v = find_minima_spacing(channel)
        except CalibrationError:
            skipped.append(addr)
            continue
        spacings.append(MinimaSpacing(address=addr, v=v))

    if len(spacings) < 4:
        names = ", ".join(str(a) for a in skipped[:6])
        raise CalibrationError(
            f"only {len(spacings)} channels produced two strict minima (skipped: {names}...)"
        )

    contributing = {s.address.sensor for s in spacings}
    rates = [descriptor.sensor_rates[s] for s in contributing]
    windows = derive_windows([s.v for s in spacings], r_min=min(rates), r_max=max(rates))
    return CalibrationResult(windows=windows, spacings=spacings, k=k, skipped=skipped)

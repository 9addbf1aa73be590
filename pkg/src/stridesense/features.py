"""Incremental sliding-window feature engineering and variance-gated selection.

For every channel and every calibrated window the engine maintains the last
w present samples and derives six metrics per update: the three quartiles,
mean, population standard deviation and the maximum modulus of the DFT bins.
A key survives selection only while its online variance stays above the
threshold tuned over the first minute after calibration.

Two implementations of the window statistics live here on purpose:
``WindowState`` is the single-channel reference with explicit running sums,
used by tests and anywhere clarity beats speed; ``_WindowBank`` batches all
channels of one window length through numpy and is what the engine runs.
Equivalence between the two is pinned by tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .calibration import WindowSet, nint
from .errors import ConfigError
from .streams import RawSlot, SensorAddress, StreamDescriptor

METRIC_NAMES = ("Q1", "Q2", "Q3", "avg", "std", "F")
RAW_WINDOW_NAME = "w0"


def quartile_indices(w: int) -> tuple:
    """Sorted-buffer subscripts for Q1..Q3, clamped to the last element."""
    return tuple(min(nint(j * w / 4.0), w - 1) for j in (1, 2, 3))


class WindowState:
    """Reference sliding window over one channel's present values."""

    def __init__(self, w: int):
        if w < 2:
            raise ConfigError("window length must be >= 2")
        self.w = w
        self.buffer: list = []
        self.total = 0.0
        self.total_sq = 0.0
        self._updates = 0

    @property
    def full(self) -> bool:
        return len(self.buffer) == self.w

    def update(self, value: Optional[float]) -> None:
        """Append a present value, evict the oldest when full; absent is a no-op."""
        if value is None or (isinstance(value, float) and math.isnan(value)):
            return
        if self.full:
            old = self.buffer.pop(0)
            self.total -= old
            self.total_sq -= old * old
        self.buffer.append(float(value))
        self.total += value
        self.total_sq += value * value
        self._updates += 1
        # Re-anchor the running sums occasionally so float drift stays
        # within the 1e-9 consistency contract on long streams.
        if self._updates % 4096 == 0:
            self.total = float(sum(self.buffer))
            self.total_sq = float(sum(v * v for v in self.buffer))

    def metrics(self) -> tuple:
        """(Q1, Q2, Q3, avg, std, F); requires a full buffer."""
        if not self.full:
            raise ConfigError("metrics undefined until the window is full")
        return compute_metrics(self.buffer)


def compute_metrics(buffer: Sequence[float]) -> tuple:
    """Six metrics of one full window: quartiles, mean, population std, max |DFT|."""
    x = np.asarray(buffer, dtype=float)
    w = len(x)
    y = np.sort(x)
    i1, i2, i3 = quartile_indices(w)
    spectrum = np.abs(np.fft.rfft(x))
    return (
        float(y[i1]),
        float(y[i2]),
        float(y[i3]),
        float(x.mean()),
        float(x.std()),
        float(spectrum.max()),
    )


class _WindowBank:
    """All channels' ring buffers for one window length, updated in batch.

    Rows are circular; sorting, mean and std ignore order, and the modulus of
    the DFT is invariant under circular shifts, so metrics computed on the
    rotated row equal those of the time-ordered window.
    """

    def __init__(self, w: int, channels: int):
        self.w = w
        self.values = np.zeros((channels, w))
        self.fill = np.zeros(channels, dtype=np.int64)
        self.head = np.zeros(channels, dtype=np.int64)
        self.metrics = np.full((channels, 6), np.nan)
        self.qidx = np.array(quartile_indices(w))

    def update(self, idx: np.ndarray, x: np.ndarray) -> None:
        if len(idx) == 0:
            return
        self.values[idx, self.head[idx]] = x
        self.head[idx] = (self.head[idx] + 1) % self.w
        self.fill[idx] = np.minimum(self.fill[idx] + 1, self.w)
        touched = idx[self.fill[idx] >= self.w]
        if len(touched) == 0:
            return
        sub = self.values[touched]
        ysort = np.sort(sub, axis=1)
        self.metrics[touched, 0:3] = ysort[:, self.qidx]
        self.metrics[touched, 3] = sub.mean(axis=1)
        self.metrics[touched, 4] = sub.std(axis=1)
        self.metrics[touched, 5] = np.abs(np.fft.rfft(sub, axis=1)).max(axis=1)

    def window_snapshot(self, channel: int) -> np.ndarray:
        """Time-ordered copy of one full row (oldest first), for oracles."""
        h = self.head[channel]
        return np.concatenate([self.values[channel, h:], self.values[channel, :h]])


class KeyUniverse:
    """Stable integer ids and string forms for every feature key.

    String form: ``{metric}:{window}:{position}-{location}-{sensor}-{axis}``;
    the raw channel value uses metric ``raw`` and window ``w0``.
    """

    def __init__(self, descriptor: StreamDescriptor, windows: Optional[WindowSet], data_kind: str):
        if data_kind not in ("raw", "engineered"):
            raise ConfigError(f"unknown data kind {data_kind!r}")
        self.data_kind = data_kind
        self.descriptor = descriptor
        self.windows = windows
        strings, metrics, window_names, addresses = [], [], [], []
        if data_kind == "engineered":
            if windows is None:
                raise ConfigError("engineered keys need a window set")
            for addr in descriptor.addresses:
                for wname in windows.names:
                    for mname in METRIC_NAMES:
                        strings.append(f"{mname}:{wname}:{addr}")
                        metrics.append(mname)
                        window_names.append(wname)
                        addresses.append(addr)
        for addr in descriptor.addresses:
            strings.append(f"raw:{RAW_WINDOW_NAME}:{addr}")
            metrics.append("raw")
            window_names.append(RAW_WINDOW_NAME)
            addresses.append(addr)
        self.strings = tuple(strings)
        self.metric_names = tuple(metrics)
        self.window_names = tuple(window_names)
        self.addresses = tuple(addresses)
        self._id_of = {s: i for i, s in enumerate(strings)}

    def __len__(self) -> int:
        return len(self.strings)

    def id_of(self, key: str) -> int:
        return self._id_of[key]

    def address_of(self, key_id: int) -> SensorAddress:
        return self.addresses[key_id]


@dataclass
class FeatureVector:
    """Sparse selected features at one slot: parallel (key id, value) arrays."""

    n: int
    key_ids: np.ndarray
    values: np.ndarray
    universe: KeyUniverse

    def __len__(self) -> int:
        return len(self.key_ids)

    def as_dict(self) -> dict:
        return {self.universe.strings[k]: float(v) for k, v in zip(self.key_ids, self.values)}

    def get_id(self, key_id: int) -> Optional[float]:
        pos = np.searchsorted(self.key_ids, key_id)
        if pos < len(self.key_ids) and self.key_ids[pos] == key_id:
            return float(self.values[pos])
        return None

    @classmethod
    def from_dict(cls, n: int, mapping: dict, universe: KeyUniverse) -> "FeatureVector":
        ids = np.array(sorted(universe.id_of(k) for k in mapping), dtype=np.int64)
        vals = np.array([mapping[universe.strings[i]] for i in ids])
        return cls(n=n, key_ids=ids, values=vals, universe=universe)


class SelectionState:
    """Vectorized single-pass mean/variance per key plus the frozen threshold."""

    def __init__(self, n_keys: int):
        self.count = np.zeros(n_keys, dtype=np.int64)
        self.mean = np.zeros(n_keys)
        self.m2 = np.zeros(n_keys)
        self.t2: Optional[float] = None

    def update(self, values: np.ndarray, defined: np.ndarray) -> None:
        idx = np.nonzero(defined)[0]
        if len(idx) == 0:
            return
        x = values[idx]
        self.count[idx] += 1
        delta = x - self.mean[idx]
        self.mean[idx] += delta / self.count[idx]
        self.m2[idx] += delta * (x - self.mean[idx])

    def variances(self) -> np.ndarray:
        """Population variance per key; NaN where nothing was observed."""
        with np.errstate(invalid="ignore", divide="ignore"):
            var = self.m2 / self.count
        var[self.count == 0] = np.nan
        return var

    def freeze(self) -> float:
        var = self.variances()
        observed = var[~np.isnan(var)]
        if len(observed) == 0:
            raise ConfigError("no keys observed during the tuning interval")
        self.t2 = float(np.median(observed))
        return self.t2

    def selected(self, defined: np.ndarray) -> np.ndarray:
        if self.t2 is None:
            raise ConfigError("selection threshold not frozen yet")
        var = self.variances()
        with np.errstate(invalid="ignore"):
            return defined & (var > self.t2)


class FeatureEngine:
    """Streaming front end: slots in, selected FeatureVectors out.

    Feed every slot from n = 0. Nothing is emitted until the calibration
    interval has passed, the tuning interval has frozen the variance
    threshold, and (for engineered data) the slot index has cleared the
    longest window's warm-up.
    """

    def __init__(
        self,
        descriptor: StreamDescriptor,
        windows: Optional[WindowSet],
        data_kind: str,
        calibration_k: int,
        tuning_s: float = 60.0,
    ):
        self.descriptor = descriptor
        self.data_kind = data_kind
        self.windows = windows
        self.universe = KeyUniverse(descriptor, windows, data_kind)
        self.k = calibration_k
        master = descriptor.master_rate
        self.tuning_end = calibration_k + int(round(tuning_s * master))
        self.n_init = windows.n_init if (windows and data_kind == "engineered") else 0
        self.selection = SelectionState(len(self.universe))
        channels = len(descriptor.addresses)
        self.banks = []
        if data_kind == "engineered":
            self.banks = [_WindowBank(w, channels) for w in windows.lengths]
        self._n_eng = channels * 24 if data_kind == "engineered" else 0
        self._channels = channels

    @property
    def emitting_from(self) -> int:
        return max(self.n_init + 1, self.tuning_end)

    def threshold(self) -> Optional[float]:
        return self.selection.t2

    def key_std(self, key_id: int) -> float:
        """Current online standard deviation of one key (render-time view)."""
        var = self.selection.variances()[key_id]
        return float(math.sqrt(var)) if not math.isnan(var) else float("nan")

    def _assemble(self, slot: RawSlot) -> tuple:
        """Flat (values, defined) arrays across the whole key universe."""
        x = slot.values
        present = ~np.isnan(x)
        if self.data_kind == "engineered":
            idx = np.nonzero(present)[0]
            for bank in self.banks:
                bank.update(idx, x[idx])
            eng_vals = np.stack([b.metrics for b in self.banks], axis=1).reshape(-1)
            eng_def = np.stack([b.fill >= b.w for b in self.banks], axis=1)
            eng_def = np.repeat(eng_def.reshape(-1), 6)
            values = np.concatenate([eng_vals, x])
            defined = np.concatenate([eng_def, present])
        else:
            values = x.copy()
            defined = present.copy()
        return values, defined

    def process_slot(self, slot: RawSlot) -> Optional[FeatureVector]:
        values, defined = self._assemble(slot)
        n = slot.n
        if n < self.k:
            return None
        if self.data_kind == "engineered" and n <= self.n_init:
            # The paper's cold-start guard: no feature exists before the
            # longest window could have filled, so variances wait too.
            defined_for_stats = defined.copy()
            defined_for_stats[: self._n_eng] = False
            self.selection.update(values, defined_for_stats)
        else:
            self.selection.update(values, defined)
        if n + 1 == self.tuning_end and self.selection.t2 is None:
            self.selection.freeze()
        if self.selection.t2 is None or n < self.emitting_from:
            return None
        mask = self.selection.selected(defined)
        ids = np.nonzero(mask)[0]
        return FeatureVector(n=n, key_ids=ids, values=values[ids], universe=self.universe)

    def window_snapshot(self, address: SensorAddress, window_index: int) -> np.ndarray:
        channel = self.descriptor.index_of(address)
        return self.banks[window_index].window_snapshot(channel)

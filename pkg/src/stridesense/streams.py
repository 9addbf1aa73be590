"""Sensor data model, multi-rate synchronization, parsing and synthesis.

A stream is a sequence of slots ticking at the rate of the fastest sensor
(the master rate). Slower sensors contribute values only on the slots where
they actually produced a sample; everywhere else their entry is absent
(stored as NaN). Feature code downstream skips absent entries, so no
interpolation happens anywhere.
"""

from __future__ import annotations

import io
import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Optional, Sequence

import numpy as np

from .errors import ConfigError, EmptyStreamError, ParseError

POSITIONS = ("left", "right", "none")
LOCATIONS = ("wrist", "ankle", "pole", "hand", "chest")
SENSORS = (
    "accelerometer16g",
    "accelerometer6g",
    "gyroscope",
    "magnetometer",
    "heart_rate",
    "temperature",
)
AXES = ("x", "y", "z", "scalar")

# Sensors that report a single value per sample rather than one per axis.
SCALAR_SENSORS = ("heart_rate", "temperature")


@dataclass(frozen=True, order=True)
class SensorAddress:
    """Identifies one channel: body side, placement, sensor type and axis."""

    position: str
    location: str
    sensor: str
    axis: str

    def __post_init__(self):
        if self.position not in POSITIONS:
            raise ConfigError(f"unknown position {self.position!r}")
        if self.location not in LOCATIONS:
            raise ConfigError(f"unknown location {self.location!r}")
        if self.sensor not in SENSORS:
            raise ConfigError(f"unknown sensor {self.sensor!r}")
        if self.axis not in AXES:
            raise ConfigError(f"unknown axis {self.axis!r}")
        if self.sensor in SCALAR_SENSORS and self.axis != "scalar":
            raise ConfigError(f"{self.sensor} must use the scalar axis")

    def __str__(self) -> str:
        return f"{self.position}-{self.location}-{self.sensor}-{self.axis}"

    @classmethod
    def parse(cls, text: str) -> "SensorAddress":
        parts = text.split("-")
        if len(parts) != 4:
            raise ConfigError(f"bad address {text!r}")
        return cls(*parts)


@dataclass(frozen=True)
class ClassLabel:
    """Class symbol (c0/c1/c2) plus a dataset-specific display name."""

    symbol: str
    display: str

    def __str__(self) -> str:
        return self.symbol


NWGTI_LABELS = (
    ClassLabel("c0", "correct"),
    ClassLabel("c1", "cheating"),
    ClassLabel("c2", "incorrect"),
)
PAMAP2_LABELS = (
    ClassLabel("c0", "nordic walking"),
    ClassLabel("c1", "climbing stairs"),
)


@dataclass(frozen=True)
class StreamDescriptor:
    """Static shape of a stream: channels, rates and class set."""

    addresses: tuple
    sensor_rates: dict  # sensor name -> Hz
    labels: tuple
    total_slots: int = 0

    @property
    def master_rate(self) -> float:
        return max(self.sensor_rates.values())

    @property
    def r_max(self) -> float:
        return max(self.sensor_rates.values())

    @property
    def r_min(self) -> float:
        return min(self.sensor_rates.values())

    def index_of(self, address: SensorAddress) -> int:
        return self.addresses.index(address)

    def label_for(self, symbol: str) -> ClassLabel:
        for lab in self.labels:
            if lab.symbol == symbol:
                return lab
        raise ConfigError(f"unknown class symbol {symbol!r}")


@dataclass
class RawSlot:
    """One tick of the master clock.

    ``values`` is aligned with the descriptor's address tuple; NaN marks a
    channel that produced nothing at this slot. ``ground_truth`` is carried
    for evaluation only and is never visible to the unsupervised path.
    """

    n: int
    timestamp: float
    values: np.ndarray
    ground_truth: Optional[ClassLabel] = None

    def value(self, descriptor: StreamDescriptor, address: SensorAddress) -> Optional[float]:
        v = self.values[descriptor.index_of(address)]
        return None if math.isnan(v) else float(v)

    def present_mask(self) -> np.ndarray:
        return ~np.isnan(self.values)

    def as_dict(self, descriptor: StreamDescriptor) -> dict:
        out = {}
        for i, addr in enumerate(descriptor.addresses):
            v = self.values[i]
            if not math.isnan(v):
                out[addr] = float(v)
        return out


@dataclass
class Stream:
    descriptor: StreamDescriptor
    slots: list

    def __len__(self) -> int:
        return len(self.slots)


def nwgti_addresses() -> tuple:
    """The 54-channel layout: 2 sides x 3 placements x 3 IMU sensors x 3 axes."""
    addrs = []
    for position in ("left", "right"):
        for location in ("wrist", "ankle", "pole"):
            for sensor in ("accelerometer16g", "gyroscope", "magnetometer"):
                for axis in ("x", "y", "z"):
                    addrs.append(SensorAddress(position, location, sensor, axis))
    return tuple(addrs)


def pamap2_addresses() -> tuple:
    """The 40-channel layout: heart rate plus 13 channels per IMU placement."""
    addrs = [SensorAddress("none", "chest", "heart_rate", "scalar")]
    for location in ("hand", "chest", "ankle"):
        addrs.append(SensorAddress("none", location, "temperature", "scalar"))
        for sensor in ("accelerometer16g", "accelerometer6g", "gyroscope", "magnetometer"):
            for axis in ("x", "y", "z"):
                addrs.append(SensorAddress("none", location, sensor, axis))
    return tuple(addrs)


NWGTI_RATES = {"accelerometer16g": 12.5, "gyroscope": 25.0, "magnetometer": 10.0}
PAMAP2_RATES = {
    "heart_rate": 9.0,
    "temperature": 100.0,
    "accelerometer16g": 100.0,
    "accelerometer6g": 100.0,
    "gyroscope": 100.0,
    "magnetometer": 100.0,
}


def present_at_slot(n: int, rate: float, master_rate: float) -> bool:
    """A sensor at ``rate`` emits on slot n when its sample counter advances.

    Counting floor crossings of n*rate/master_rate guarantees rate*T +- 1
    present values over any T seconds of slots.
    """
    return math.floor((n + 1) * rate / master_rate) > math.floor(n * rate / master_rate)


# Per-class motion regimes for the synthetic generator. These constants are
# configuration, not contract: classes are told apart by arm-swing frequency
# and a multiplicative energy scale (cheating moves the body ~3x harder while
# barely loading the poles; incorrect practice is sluggish). The scale
# multiplies amplitude and bias alike so every engineered metric of a class
# sits on its own magnitude tier, which keeps slow-moving online clustering
# anchored one-cluster-per-class.
SYNTHETIC_REGIMES = {
    "c0": {"freq": 0.9, "scale": 1.0, "pole_factor": 1.0, "bias": 0.3},
    "c1": {"freq": 1.7, "scale": 3.0, "pole_factor": 0.35, "bias": 0.3},
    "c2": {"freq": 0.55, "scale": 0.33, "pole_factor": 1.0, "bias": 0.3},
}
LOCATION_AMPLITUDE = {"wrist": 1.0, "ankle": 1.1, "pole": 1.2}
SENSOR_GAIN = {"accelerometer16g": 1.0, "gyroscope": 2.2, "magnetometer": 0.35}


def _rotation_matrix(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random 3D rotation from three Euler angles."""
    a, b, c = rng.uniform(0.0, 2.0 * math.pi, size=3)
    ca, sa = math.cos(a), math.sin(a)
    cb, sb = math.cos(b), math.sin(b)
    cc, sc = math.cos(c), math.sin(c)
    rz = np.array([[ca, -sa, 0], [sa, ca, 0], [0, 0, 1]])
    ry = np.array([[cb, 0, sb], [0, 1, 0], [-sb, 0, cb]])
    rx = np.array([[1, 0, 0], [0, cc, -sc], [0, sc, cc]])
    return rz @ ry @ rx


def generate_synthetic(
    seed: int,
    class_schedule: Sequence,
    noise_sigma: float = 0.05,
    regimes: Optional[dict] = None,
    rates: Optional[dict] = None,
) -> Stream:
    """Deterministic 54-channel three-class stream.

    ``class_schedule`` is a sequence of (ClassLabel or symbol, duration_s).
    Identical (seed, schedule) produce bit-identical streams. Each IMU gets a
    random (seeded) axis rotation per session, so no feature can rely on
    precise sensor mounting.
    """
    if not class_schedule:
        raise ConfigError("class schedule must not be empty")
    regimes = regimes or SYNTHETIC_REGIMES
    rates = rates or NWGTI_RATES
    addresses = nwgti_addresses()
    master = max(rates.values())

    schedule = []
    for label, duration in class_schedule:
        if duration <= 0:
            raise ConfigError(f"zero-duration segment for {label}")
        if isinstance(label, ClassLabel):
            label = label.symbol
        if label not in regimes:
            raise ConfigError(f"no regime for class {label!r}")
        schedule.append((label, float(duration)))

    labels = tuple(lab for lab in NWGTI_LABELS if any(lab.symbol == s for s, _ in schedule)) or NWGTI_LABELS
    label_by_symbol = {lab.symbol: lab for lab in NWGTI_LABELS}

    rng = np.random.default_rng(seed)
    # One rotation per physical IMU (side, placement, sensor), one phase per
    # channel per class; draw order is fixed so the stream is reproducible.
    imus = sorted({(a.position, a.location, a.sensor) for a in addresses})
    rotations = {imu: _rotation_matrix(rng) for imu in imus}
    phases = {
        (a.position, a.location, a.sensor, a.axis, sym): rng.uniform(0.0, 2.0 * math.pi)
        for a in addresses
        for sym in regimes
    }

    # Segment boundaries in slots; cumulative rounding keeps each class count
    # within one slot of duration * master rate.
    boundaries = [0]
    acc = 0.0
    for _, duration in schedule:
        acc += duration
        boundaries.append(round(acc * master))
    total_slots = boundaries[-1]

    slot_symbols = np.empty(total_slots, dtype=object)
    for (sym, _), lo, hi in zip(schedule, boundaries, boundaries[1:]):
        slot_symbols[lo:hi] = sym

    n_addr = len(addresses)
    t = np.arange(total_slots) / master
    values = np.full((total_slots, n_addr), np.nan)

    # Clean per-channel signals in body frame, then rotate per IMU.
    for imu in imus:
        position, location, sensor = imu
        gain = SENSOR_GAIN[sensor]
        body = np.zeros((total_slots, 3))
        for ai, axis in enumerate(("x", "y", "z")):
            sig = np.zeros(total_slots)
            for sym in regimes:
                mask = slot_symbols == sym
                if not mask.any():
                    continue
                reg = regimes[sym]
                scale = reg["scale"] * (reg["pole_factor"] if location == "pole" else 1.0)
                amp = gain * scale * LOCATION_AMPLITUDE[location] * (1.0 - 0.18 * ai)
                phase = phases[(position, location, sensor, axis, sym)]
                sig[mask] = amp * np.sin(2.0 * math.pi * reg["freq"] * t[mask] + phase) + gain * scale * reg["bias"]
            body[:, ai] = sig
        rotated = body @ rotations[imu].T
        rotated += rng.normal(0.0, noise_sigma * gain, size=rotated.shape)
        rate = rates[sensor]
        present = np.array([present_at_slot(n, rate, master) for n in range(total_slots)])
        for ai, axis in enumerate(("x", "y", "z")):
            col = addresses.index(SensorAddress(position, location, sensor, axis))
            values[present, col] = rotated[present, ai]

    slots = [
        RawSlot(n=n, timestamp=t[n], values=values[n], ground_truth=label_by_symbol[slot_symbols[n]])
        for n in range(total_slots)
    ]
    descriptor = StreamDescriptor(
        addresses=addresses, sensor_rates=dict(rates), labels=labels, total_slots=total_slots
    )
    return Stream(descriptor=descriptor, slots=slots)


# --------------------------------------------------------------------------
# PAMAP2 parsing

PAMAP2_NORDIC_WALKING = 7
PAMAP2_ASCENDING_STAIRS = 12
PAMAP2_COLUMNS = 54
# Per-IMU column offsets inside a 17-column block: temperature, 16g
# accelerometer, 6g accelerometer, gyroscope, magnetometer (orientation
# columns 13-16 of the block are invalid in this dataset and are skipped).
_IMU_BLOCK = [("temperature", 0, 1), ("accelerometer16g", 1, 3), ("accelerometer6g", 4, 3),
              ("gyroscope", 7, 3), ("magnetometer", 10, 3)]
_IMU_START = {"hand": 3, "chest": 20, "ankle": 37}


@dataclass(frozen=True)
class Pamap2Filter:
    """Keep an activity block only if the subject sustained it long enough."""

    min_walk_s: float = 250.0
    min_stairs_s: float = 150.0


def _pamap2_column_map(addresses: tuple) -> list:
    """Column index in the .dat layout for every address, in address order."""
    cols = []
    for addr in addresses:
        if addr.sensor == "heart_rate":
            cols.append(2)
            continue
        start = _IMU_START[addr.location]
        for sensor, offset, width in _IMU_BLOCK:
            if sensor != addr.sensor:
                continue
            if width == 1:
                cols.append(start + offset)
            else:
                cols.append(start + offset + ("x", "y", "z").index(addr.axis))
            break
    return cols


def parse_pamap2(data, filter: Pamap2Filter = Pamap2Filter()) -> Stream:
    """Parse one PAMAP2 protocol file into a two-class stream.

    Only Nordic-walking (activity 7) and ascending-stairs (activity 12) rows
    are kept, and only when the activity lasted at least the filter's minimum
    duration. Raises ParseError on malformed lines, EmptyStreamError when no
    rows qualify.
    """
    if isinstance(data, bytes):
        text = data.decode("ascii")
    elif isinstance(data, str):
        text = data
    else:
        text = data.read()
        if isinstance(text, bytes):
            text = text.decode("ascii")

    addresses = pamap2_addresses()
    cols = _pamap2_column_map(addresses)
    rows = []  # (timestamp, activity, values)
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != PAMAP2_COLUMNS:
            raise ParseError(lineno, f"expected {PAMAP2_COLUMNS} columns, got {len(parts)}")
        try:
            fields = [float(p) for p in parts]
        except ValueError as exc:
            raise ParseError(lineno, str(exc)) from None
        activity = int(fields[1])
        if activity not in (PAMAP2_NORDIC_WALKING, PAMAP2_ASCENDING_STAIRS):
            continue
        rows.append((fields[0], activity, np.array([fields[c] for c in cols])))

    rate = PAMAP2_RATES["accelerometer16g"]
    min_rows = {
        PAMAP2_NORDIC_WALKING: filter.min_walk_s * rate,
        PAMAP2_ASCENDING_STAIRS: filter.min_stairs_s * rate,
    }
    counts = {PAMAP2_NORDIC_WALKING: 0, PAMAP2_ASCENDING_STAIRS: 0}
    for _, activity, _ in rows:
        counts[activity] += 1
    keep = {a for a, c in counts.items() if c >= min_rows[a]}
    rows = [r for r in rows if r[1] in keep]
    if not rows:
        raise EmptyStreamError("no qualifying activity rows in PAMAP2 input")

    label_by_activity = {PAMAP2_NORDIC_WALKING: PAMAP2_LABELS[0], PAMAP2_ASCENDING_STAIRS: PAMAP2_LABELS[1]}
    present_symbols = {label_by_activity[a].symbol for _, a, _ in rows}
    labels = tuple(lab for lab in PAMAP2_LABELS if lab.symbol in present_symbols)
    slots = [
        RawSlot(n=i, timestamp=ts, values=vals, ground_truth=label_by_activity[activity])
        for i, (ts, activity, vals) in enumerate(rows)
    ]
    descriptor = StreamDescriptor(
        addresses=addresses, sensor_rates=dict(PAMAP2_RATES), labels=labels, total_slots=len(slots)
    )
    return Stream(descriptor=descriptor, slots=slots)


def serialize_pamap2(stream: Stream) -> str:
    """Render slots back into the 54-column PAMAP2 layout (orientation NaN)."""
    addresses = stream.descriptor.addresses
    cols = _pamap2_column_map(addresses)
    activity_by_symbol = {"c0": PAMAP2_NORDIC_WALKING, "c1": PAMAP2_ASCENDING_STAIRS}
    lines = []
    for slot in stream.slots:
        fields = ["NaN"] * PAMAP2_COLUMNS
        fields[0] = repr(float(slot.timestamp))
        fields[1] = str(activity_by_symbol[slot.ground_truth.symbol])
        for ai, col in enumerate(cols):
            v = slot.values[ai]
            if not math.isnan(v):
                fields[col] = repr(float(v))
        lines.append(" ".join(fields))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Stream dump / load (one slot per line) and timed replay

def dump_stream(stream: Stream, fp) -> None:
    """Write `n timestamp label addr=v ...` records, absent values omitted."""
    header = {
        "addresses": [str(a) for a in stream.descriptor.addresses],
        "rates": stream.descriptor.sensor_rates,
        "labels": [[lab.symbol, lab.display] for lab in stream.descriptor.labels],
    }
    fp.write("#descriptor " + json.dumps(header) + "\n")
    for slot in stream.slots:
        label = slot.ground_truth.symbol if slot.ground_truth else "-"
        pairs = []
        for i, addr in enumerate(stream.descriptor.addresses):
            v = slot.values[i]
            if not math.isnan(v):
                pairs.append(f"{addr}={float(v)!r}")
        fp.write(f"{slot.n} {float(slot.timestamp)!r} {label} " + " ".join(pairs) + "\n")


def load_stream(fp) -> Stream:
    first = fp.readline()
    if not first.startswith("#descriptor "):
        raise ParseError(1, "missing descriptor header")
    header = json.loads(first[len("#descriptor "):])
    addresses = tuple(SensorAddress.parse(a) for a in header["addresses"])
    labels = tuple(ClassLabel(sym, disp) for sym, disp in header["labels"])
    label_by_symbol = {lab.symbol: lab for lab in labels}
    index = {str(a): i for i, a in enumerate(addresses)}

    slots = []
    for lineno, line in enumerate(fp, start=2):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) < 3:
            raise ParseError(lineno, "short record")
        n, ts, label = int(parts[0]), float(parts[1]), parts[2]
        values = np.full(len(addresses), np.nan)
        for pair in parts[3:]:
            addr, _, val = pair.partition("=")
            values[index[addr]] = float(val)
        truth = None if label == "-" else label_by_symbol[label]
        slots.append(RawSlot(n=n, timestamp=ts, values=values, ground_truth=truth))
    descriptor = StreamDescriptor(
        addresses=addresses, sensor_rates=header["rates"], labels=labels, total_slots=len(slots)
    )
    return Stream(descriptor=descriptor, slots=slots)


def replay(stream: Stream, speed: float, sleep: Callable = time.sleep, max_gap_s: float = 1.0) -> Iterator[RawSlot]:
    """Yield slots paced by their timestamps divided by ``speed``.

    math.inf replays as fast as possible. Gaps larger than ``max_gap_s``
    (activity-block joins in filtered datasets) are clamped.
    """
    if not speed > 0:
        raise ConfigError("replay speed must be positive")
    prev_ts = None
    for slot in stream.slots:
        if prev_ts is not None and not math.isinf(speed):
            delay = min(max(slot.timestamp - prev_ts, 0.0), max_gap_s) / speed
            if delay > 0:
                sleep(delay)
        prev_ts = slot.timestamp
        yield slot

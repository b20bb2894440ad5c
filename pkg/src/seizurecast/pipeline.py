"""From annotated multichannel recordings to labelled 20 s windows.

Time is measured in seconds from the recording start and every interval is
half-open ``[start, end)``.  States are assigned with the precedence
ictal > sph > preictal > interictal > excluded:

* ictal      ``[onset, offset)`` of every seizure
* sph        ``[onset - sph, onset)`` of every lead seizure
* preictal   ``[onset - sph - pil, onset - sph)`` of every lead seizure
* interictal ``t < onset - margin`` or ``t >= offset + margin`` for all seizures
* excluded   everything else (postictal, non-lead preictal zones, ...)
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.signal import lfilter

INTERICTAL = 0
PREICTAL = 1

INTERICTAL_STATE = "interictal"
PREICTAL_STATE = "preictal"
SPH_STATE = "sph"
ICTAL_STATE = "ictal"
EXCLUDED_STATE = "excluded"

_PRECEDENCE = (ICTAL_STATE, SPH_STATE, PREICTAL_STATE, INTERICTAL_STATE)

HOUR = 3600.0


class RecordingError(ValueError):
    """Recording metadata, payload or seizure schedule is invalid."""


class DataError(ValueError):
    """A sample set cannot support the requested operation (e.g. an empty class)."""


@dataclass
class Recording:
    subject_id: str
    sample_rate_hz: float
    channels: list[str]
    signal: np.ndarray  # (channels, samples), float64 microvolts
    seizures: list[tuple[float, float]] = field(default_factory=list)

    def __post_init__(self):
        self.signal = np.ascontiguousarray(self.signal, dtype=np.float64)
        self.seizures = [(float(a), float(b)) for a, b in self.seizures]
        self.validate()

    @property
    def n_samples(self) -> int:
        return self.signal.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz

    def validate(self) -> None:
        if not self.sample_rate_hz > 0:
            raise RecordingError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if self.signal.ndim != 2 or self.signal.shape[0] != len(self.channels):
            raise RecordingError(
                f"signal shape {self.signal.shape} does not match {len(self.channels)} channels"
            )
        validate_seizures(self.seizures, self.duration_s)


def validate_seizures(seizures: Sequence[tuple[float, float]], duration_s: float) -> None:
    prev_off = -math.inf
    for i, (on, off) in enumerate(seizures):
        if not off > on:
            raise RecordingError(f"seizure {i}: offset {off} must exceed onset {on}")
        if on < 0 or off > duration_s + 1e-9:
            raise RecordingError(
                f"seizure {i}: [{on}, {off}] outside recording of {duration_s} s"
            )
        if on <= prev_off:
            raise RecordingError(f"seizure {i}: onsets must be sorted and seizures non-overlapping")
        prev_off = off


@dataclass(frozen=True)
class TimingPolicy:
    pil_s: float = 1800.0
    sph_s: float = 300.0
    window_s: float = 20.0
    preictal_overlap_s: float = 5.0
    lead_gap_s: float = 4 * HOUR
    interictal_margin_s: float = 4 * HOUR

    def __post_init__(self):
        if not self.pil_s > 0:
            raise ValueError("pil_s must be positive")
        if self.sph_s < 0:
            raise ValueError("sph_s must be non-negative")
        if not self.window_s > 0:
            raise ValueError("window_s must be positive")
        if not 0 <= self.preictal_overlap_s < self.window_s:
            raise ValueError("preictal_overlap_s must be in [0, window_s)")

    @property
    def preictal_stride_s(self) -> float:
        return self.window_s - self.preictal_overlap_s

    @classmethod
    def chbmit(cls, **kw) -> "TimingPolicy":
        return cls(pil_s=1800.0, sph_s=300.0, **kw)

    @classmethod
    def kaggle(cls, **kw) -> "TimingPolicy":
        return cls(pil_s=3600.0, sph_s=300.0, **kw)


@dataclass
class WindowSample:
    data: np.ndarray  # (channels, window_points)
    label: int
    source_time_s: float
    subject_id: str = ""


@dataclass(frozen=True)
class Interval:
    start_s: float
    end_s: float
    state: str

    @property
    def length_s(self) -> float:
        return self.end_s - self.start_s


# --------------------------------------------------------------------------
# labelling
# --------------------------------------------------------------------------

def find_lead_seizures(rec: Recording, policy: TimingPolicy) -> list[int]:
    """Indices of seizures that get a preictal interval.

    A seizure leads when at least ``lead_gap_s`` separates it from the
    previous seizure's offset (the first seizure has no predecessor) and the
    whole PIL + SPH stretch before its onset lies inside the recording.
    """
    leads = []
    for i, (onset, _) in enumerate(rec.seizures):
        if onset < policy.pil_s + policy.sph_s:
            continue
        if i > 0 and onset - rec.seizures[i - 1][1] < policy.lead_gap_s:
            continue
        leads.append(i)
    return leads


def _state_spans(rec: Recording, policy: TimingPolicy) -> dict[str, list[tuple[float, float]]]:
    spans: dict[str, list[tuple[float, float]]] = {s: [] for s in _PRECEDENCE}
    for on, off in rec.seizures:
        spans[ICTAL_STATE].append((on, off))
    for i in find_lead_seizures(rec, policy):
        on = rec.seizures[i][0]
        spans[SPH_STATE].append((on - policy.sph_s, on))
        spans[PREICTAL_STATE].append((on - policy.sph_s - policy.pil_s, on - policy.sph_s))
    # interictal = complement of the margin-expanded seizures
    cursor = 0.0
    for on, off in rec.seizures:
        lo = on - policy.interictal_margin_s
        if lo > cursor:
            spans[INTERICTAL_STATE].append((cursor, lo))
        cursor = max(cursor, off + policy.interictal_margin_s)
    if cursor < rec.duration_s:
        spans[INTERICTAL_STATE].append((cursor, rec.duration_s))
    return spans


def label_intervals(rec: Recording, policy: TimingPolicy) -> list[Interval]:
    """Disjoint, sorted intervals covering ``[0, duration)`` exactly."""
    duration = rec.duration_s
    spans = _state_spans(rec, policy)
    cuts = {0.0, duration}
    for items in spans.values():
        for a, b in items:
            cuts.update(t for t in (a, b) if 0.0 < t < duration)
    edges = sorted(cuts)

    def state_at(t: float) -> str:
        for state in _PRECEDENCE:
            if any(a <= t < b for a, b in spans[state]):
                return state
        return EXCLUDED_STATE

    out: list[Interval] = []
    for a, b in zip(edges[:-1], edges[1:]):
        state = state_at(0.5 * (a + b))
        if out and out[-1].state == state:
            out[-1] = Interval(out[-1].start_s, b, state)
        else:
            out.append(Interval(a, b, state))
    return out


# --------------------------------------------------------------------------
# windowing
# --------------------------------------------------------------------------

def window_points(policy: TimingPolicy, sample_rate_hz: float) -> int:
    return int(round(policy.window_s * sample_rate_hz))


def window_count(length_s: float, state: str, policy: TimingPolicy) -> int:
    """Closed-form number of windows one interval of ``state`` yields."""
    if length_s < policy.window_s:
        return 0
    if state == INTERICTAL_STATE:
        return int(math.floor(length_s / policy.window_s + 1e-9))
    if state == PREICTAL_STATE:
        return int(math.floor((length_s - policy.window_s) / policy.preictal_stride_s + 1e-9)) + 1
    return 0


def window_starts(intervals: Sequence[Interval], policy: TimingPolicy) -> list[tuple[float, int]]:
    """``(start_s, label)`` for every window, in time order."""
    starts = []
    for iv in intervals:
        if iv.state == INTERICTAL_STATE:
            stride, label = policy.window_s, INTERICTAL
        elif iv.state == PREICTAL_STATE:
            stride, label = policy.preictal_stride_s, PREICTAL
        else:
            continue
        for k in range(window_count(iv.length_s, iv.state, policy)):
            starts.append((iv.start_s + k * stride, label))
    return starts


def extract_windows(
    rec: Recording, intervals: Sequence[Interval], policy: TimingPolicy
) -> list[WindowSample]:
    """Cut interictal (stride = window) and preictal (stride = window - overlap) windows."""
    wp = window_points(policy, rec.sample_rate_hz)
    samples = []
    for start_s, label in window_starts(intervals, policy):
        i0 = int(round(start_s * rec.sample_rate_hz))
        i0 = min(i0, rec.n_samples - wp)
        data = rec.signal[:, i0:i0 + wp]
        samples.append(WindowSample(data, label, start_s, rec.subject_id))
    return samples


def windows_from_recording(rec: Recording, policy: TimingPolicy) -> list[WindowSample]:
    return extract_windows(rec, label_intervals(rec, policy), policy)


def stack(samples: Sequence[WindowSample]) -> tuple[np.ndarray, np.ndarray]:
    """Samples -> ``(X, y)`` with ``X`` shaped ``(N, 1, channels, points)``."""
    if not samples:
        raise DataError("no samples to stack")
    x = np.stack([s.data for s in samples])[:, None]
    y = np.array([s.label for s in samples], dtype=np.int64)
    return x, y


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_train_validation(
    samples: Sequence[WindowSample], fraction: float = 0.2, rng=None
) -> tuple[list[WindowSample], list[WindowSample]]:
    """Stratified random split; each class sends round(fraction * n) (at least 1) to validation."""
    rng = np.random.default_rng(rng)
    train: list[WindowSample] = []
    val: list[WindowSample] = []
    by_class = {INTERICTAL: [], PREICTAL: []}
    for s in samples:
        by_class[s.label].append(s)
    for label, pool in by_class.items():
        if not pool:
            name = "preictal" if label == PREICTAL else "interictal"
            raise DataError(f"no {name} samples to split")
        n_val = max(1, _round_half_up(fraction * len(pool)))
        order = rng.permutation(len(pool))
        chosen = set(order[:n_val].tolist())
        for i, s in enumerate(pool):
            (val if i in chosen else train).append(s)
    return train, val


# --------------------------------------------------------------------------
# synthetic recordings
# --------------------------------------------------------------------------

@dataclass
class SyntheticProfile:
    """Recipe for a desk-scale recording.

    Background is approximately pink noise with standard deviation
    ``noise_std`` on every channel.  Inside each lead seizure's preictal
    interval an oscillation of amplitude ``delta`` around ``osc_hz`` is added to
    the first ``ceil(affected_fraction * channels)`` channels.
    """

    n_channels: int = 4
    sample_rate_hz: float = 100.0
    duration_s: float = 7200.0
    seizures: list[tuple[float, float]] = field(default_factory=list)
    delta: float = 0.0
    noise_std: float = 1.0
    osc_hz: float = 10.0
    affected_fraction: float = 0.5
    policy: TimingPolicy = field(default_factory=TimingPolicy)
    subject_id: str = "synthetic"


# poles of the cascaded first-order filters and their relative weights
_PINK_POLES = (0.99886, 0.99332, 0.96900, 0.86650, 0.55000)
_PINK_GAINS = (0.0555179, 0.0750759, 0.1538520, 0.3104856, 0.5329522)


def pink_noise(n_channels: int, n_samples: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance approximate 1/f noise: white noise through parallel one-pole filters."""
    white = rng.standard_normal((n_channels, n_samples))
    out = 0.1848 * white
    for pole, gain in zip(_PINK_POLES, _PINK_GAINS):
        out += lfilter([gain], [1.0, -pole], white, axis=1)
    out -= out.mean(axis=1, keepdims=True)
    out /= out.std(axis=1, keepdims=True)
    return out


def generate_synthetic(profile: SyntheticProfile, rng=None) -> Recording:
    rng = np.random.default_rng(rng)
    if profile.delta < 0:
        raise RecordingError("delta must be non-negative")
    n = int(round(profile.duration_s * profile.sample_rate_hz))
    validate_seizures(profile.seizures, n / profile.sample_rate_hz)
    channels = [f"ch{i:02d}" for i in range(profile.n_channels)]
    signal = profile.noise_std * pink_noise(profile.n_channels, n, rng)

    rec = Recording(profile.subject_id, profile.sample_rate_hz, channels, signal, profile.seizures)
    if profile.delta > 0:
        affected = max(1, math.ceil(profile.affected_fraction * profile.n_channels))
        for iv in label_intervals(rec, profile.policy):
            if iv.state != PREICTAL_STATE:
                continue
            i0 = int(round(iv.start_s * profile.sample_rate_hz))
            i1 = int(round(iv.end_s * profile.sample_rate_hz))
            t = np.arange(i1 - i0) / profile.sample_rate_hz
            for ch in range(affected):
                # slow phase random walk keeps the oscillation narrow-band
                phase = rng.uniform(0, 2 * np.pi) + np.cumsum(rng.normal(0, 0.05, i1 - i0))
                rec.signal[ch, i0:i1] += profile.delta * np.sin(2 * np.pi * profile.osc_hz * t + phase)
    return rec


# --------------------------------------------------------------------------
# bundle I/O: <dir>/meta.json + <dir>/signal.bin (or signal.csv)
# --------------------------------------------------------------------------

META_NAME = "meta.json"
BIN_NAME = "signal.bin"
CSV_NAME = "signal.csv"
_META_FIELDS = ("subject_id", "sample_rate_hz", "channels", "duration_s", "seizures", "dtype", "layout")


def write_recording(rec: Recording, path, fmt: str = "bin") -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = {
        "subject_id": rec.subject_id,
        "sample_rate_hz": rec.sample_rate_hz,
        "channels": list(rec.channels),
        "duration_s": rec.duration_s,
        "seizures": [{"onset_s": a, "offset_s": b} for a, b in rec.seizures],
        "dtype": "f64le",
        "layout": "channel-major",
    }
    (path / META_NAME).write_text(json.dumps(meta, indent=2) + "\n")
    if fmt == "bin":
        (path / BIN_NAME).write_bytes(rec.signal.astype("<f8").tobytes())
    elif fmt == "csv":
        with open(path / CSV_NAME, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(rec.channels)
            for row in rec.signal.T:
                writer.writerow([repr(float(v)) for v in row])
    else:
        raise ValueError(f"unknown bundle format {fmt!r}")
    return path


def read_recording(path) -> Recording:
    path = Path(path)
    meta_path = path / META_NAME
    if not meta_path.is_file():
        raise RecordingError(f"{path}: missing {META_NAME}")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise RecordingError(f"{meta_path}: invalid JSON: {exc}") from exc
    missing = [k for k in _META_FIELDS if k not in meta]
    if missing:
        raise RecordingError(f"{meta_path}: missing fields {missing}")
    if meta["dtype"] != "f64le" or meta["layout"] != "channel-major":
        raise RecordingError(f"{meta_path}: unsupported dtype/layout {meta['dtype']}/{meta['layout']}")
    rate = float(meta["sample_rate_hz"])
    channels = list(meta["channels"])
    n_samples = int(round(float(meta["duration_s"]) * rate))
    try:
        seizures = [(float(s["onset_s"]), float(s["offset_s"])) for s in meta["seizures"]]
    except (KeyError, TypeError) as exc:
        raise RecordingError(f"{meta_path}: malformed seizure entry") from exc

    if (path / BIN_NAME).is_file():
        raw = (path / BIN_NAME).read_bytes()
        expected = 8 * len(channels) * n_samples
        if len(raw) != expected:
            kind = "truncated" if len(raw) < expected else "oversized"
            raise RecordingError(
                f"{path / BIN_NAME}: {kind} payload, expected {expected} bytes, got {len(raw)}"
            )
        signal = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(len(channels), n_samples)
    elif (path / CSV_NAME).is_file():
        with open(path / CSV_NAME, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != channels:
                raise RecordingError(f"{path / CSV_NAME}: header does not match channel list")
            rows = [[float(v) for v in row] for row in reader]
        signal = np.array(rows, dtype=np.float64).T.reshape(len(channels), -1)
        if signal.shape[1] != n_samples:
            raise RecordingError(
                f"{path / CSV_NAME}: {signal.shape[1]} rows, expected {n_samples} samples"
            )
    else:
        raise RecordingError(f"{path}: no {BIN_NAME} or {CSV_NAME} payload")
    return Recording(str(meta["subject_id"]), rate, channels, signal, seizures)


def read_bundles(path) -> list[Recording]:
    """A bundle directory, or a directory whose subdirectories are bundles."""
    path = Path(path)
    if (path / META_NAME).is_file():
        return [read_recording(path)]
    subdirs = sorted(p for p in path.iterdir() if (p / META_NAME).is_file()) if path.is_dir() else []
    if not subdirs:
        raise RecordingError(f"{path}: no recording bundles found")
    return [read_recording(p) for p in subdirs]

"""Bump-intensity extraction and goosebump event detection.

A preprocessed frame goes through a difference-of-Gaussians band-pass that
isolates texture at the follicle scale; the RMS of the filtered image is the
scalar bump intensity. Intensities are robustly z-scored against a baseline
window, then events are cut by hysteresis thresholds with a merge gap and a
minimum duration, either offline over a full trace or online sample by
sample.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .frames import Frame, Roi, gaussian_blur, preprocess_stack


class CalibrationError(ValueError):
    """Baseline calibration could not be computed."""


@dataclass(frozen=True)
class DetectorConfig:
    """Thresholds and band edges of the event detector.

    theta_on/theta_off are hysteresis levels in z units; durations are in
    seconds; band sigmas are the DoG scales in pixels.
    """

    theta_on: float = 3.0
    theta_off: float = 1.5
    min_duration: float = 1.0
    merge_gap: float = 0.5
    band_sigma_lo: float = 2.0
    band_sigma_hi: float = 8.0

    def validate(self) -> None:
        if not self.theta_off < self.theta_on:
            raise ValueError("theta_off must be below theta_on")
        if self.min_duration <= 0:
            raise ValueError("min_duration must be > 0")
        if not 0 < self.band_sigma_lo < self.band_sigma_hi:
            raise ValueError("band sigmas must satisfy 0 < lo < hi")
        if self.merge_gap < 0:
            raise ValueError("merge_gap must be >= 0")


@dataclass(frozen=True)
class IntensitySample:
    """One point of the intensity trace: raw band energy, z after calibration."""

    t_us: int
    raw: float
    z: float | None = None


@dataclass(frozen=True)
class CalibrationProfile:
    """Per-session baseline: median and robust scale of the raw energy."""

    mu: float
    sigma: float
    calib_window: float


@dataclass(frozen=True)
class GoosebumpEvent:
    """A detected goosebump interval with its peak and mean z-score."""

    onset_us: int
    offset_us: int
    severity: float
    mean_z: float

    @property
    def duration_s(self) -> float:
        return (self.offset_us - self.onset_us) / 1e6


@dataclass(frozen=True)
class Edge:
    """Streaming detector output: an ON or OFF transition.

    ``t_us`` is the candidate onset for ON and the offset for OFF; ``value``
    is the running peak z for ON and the final severity for OFF.
    """

    kind: str
    t_us: int
    value: float


def bandpass_stack(
    stack: np.ndarray, sigma_lo: float = 2.0, sigma_hi: float = 8.0
) -> np.ndarray:
    """Difference-of-Gaussians band-pass over an image or an (n, h, w) stack."""
    if not 0 < sigma_lo < sigma_hi:
        raise ValueError("band sigmas must satisfy 0 < sigma_lo < sigma_hi")
    arr = np.asarray(stack, dtype=np.float64)
    return gaussian_blur(arr, sigma_lo) - gaussian_blur(arr, sigma_hi)


def bandpass_frame(
    frame: Frame, sigma_lo: float = 2.0, sigma_hi: float = 8.0
) -> np.ndarray:
    """Band-pass one preprocessed frame; returns a signed image of equal size."""
    return bandpass_stack(frame.pixels, sigma_lo, sigma_hi)


def frame_intensity(filtered: np.ndarray) -> float:
    """RMS of a band-passed image: sqrt(mean(v^2))."""
    v = np.asarray(filtered, dtype=np.float64)
    return float(np.sqrt(np.mean(v * v)))


def stack_intensity(filtered_stack: np.ndarray) -> np.ndarray:
    """Per-frame RMS over an (n, h, w) stack of band-passed images."""
    v = np.asarray(filtered_stack, dtype=np.float64)
    return np.sqrt(np.mean(v * v, axis=(1, 2)))


def calibrate(
    samples: list[IntensitySample], calib_window: float
) -> CalibrationProfile:
    """Fit the baseline from samples inside the opening calibration window.

    mu is the median raw energy, sigma is 1.4826 * MAD floored at 1e-6 so a
    dead-flat baseline cannot divide by zero.
    """
    window_us = int(round(calib_window * 1e6))
    raw = np.array([s.raw for s in samples if s.t_us < window_us])
    if raw.size < 30:
        raise CalibrationError(
            f"need >= 30 samples inside the {calib_window}s calibration window, "
            f"got {raw.size}"
        )
    mu = float(np.median(raw))
    mad = float(np.median(np.abs(raw - mu)))
    sigma = max(1.4826 * mad, 1e-6)
    return CalibrationProfile(mu=mu, sigma=sigma, calib_window=calib_window)


def apply_zscore(
    samples: list[IntensitySample], profile: CalibrationProfile
) -> list[IntensitySample]:
    """Attach z = (raw - mu) / sigma to every sample, preserving order."""
    return [replace(s, z=(s.raw - profile.mu) / profile.sigma) for s in samples]


def _check_order(samples: list[IntensitySample]) -> None:
    for a, b in zip(samples, samples[1:]):
        if b.t_us <= a.t_us:
            raise ValueError(f"unordered timestamps: {b.t_us} after {a.t_us}")


def detect_events(
    samples: list[IntensitySample], config: DetectorConfig = DetectorConfig()
) -> list[GoosebumpEvent]:
    """Cut goosebump events from a z-scored intensity trace.

    A candidate opens at the first sample with z >= theta_on and closes at
    the first later sample with z < theta_off (that sample's timestamp is the
    offset). Candidates closer than merge_gap are merged, candidates shorter
    than min_duration are dropped, and a candidate still open at the end of
    the stream closes at the final timestamp.
    """
    config.validate()
    _check_order(samples)
    z = np.array([s.z if s.z is not None else np.nan for s in samples])
    if np.any(np.isnan(z)):
        raise ValueError("samples must be z-scored before detection")
    t = np.array([s.t_us for s in samples], dtype=np.int64)

    # raw candidates: (onset_us, offset_us, start index, stop index for stats)
    candidates: list[tuple[int, int, int, int]] = []
    open_idx: int | None = None
    for i in range(len(samples)):
        if open_idx is None:
            if z[i] >= config.theta_on:
                open_idx = i
        elif z[i] < config.theta_off:
            candidates.append((int(t[open_idx]), int(t[i]), open_idx, i))
            open_idx = None
    if open_idx is not None:
        # still open at end of stream: close at (and include) the last sample
        candidates.append((int(t[open_idx]), int(t[-1]), open_idx, len(samples)))

    merge_gap_us = int(round(config.merge_gap * 1e6))
    merged: list[list[int]] = []
    for cand in candidates:
        if merged and cand[0] - merged[-1][1] < merge_gap_us:
            merged[-1][1] = cand[1]
            merged[-1][3] = cand[3]
        else:
            merged.append(list(cand))

    min_dur_us = int(round(config.min_duration * 1e6))
    events = []
    for onset, offset, i0, i1 in merged:
        if offset - onset < min_dur_us:
            continue
        span = z[i0:i1]
        events.append(
            GoosebumpEvent(
                onset_us=onset,
                offset_us=offset,
                severity=float(span.max()),
                mean_z=float(span.mean()),
            )
        )
    return events


class StreamingDetector:
    """Online form of ``detect_events``: push samples, receive ON/OFF edges.

    ON fires once a candidate's span reaches min_duration (latency >=
    min_duration); OFF fires once a closed candidate can no longer be merged
    (latency >= merge_gap). Replaying a finite stream through ``push`` plus a
    final ``finish`` yields exactly the offline event list.
    """

    def __init__(self, config: DetectorConfig = DetectorConfig()):
        config.validate()
        self.config = config
        self._min_dur_us = int(round(config.min_duration * 1e6))
        self._merge_gap_us = int(round(config.merge_gap * 1e6))
        self._last_t: int | None = None
        self._cand_onset: int | None = None
        self._cand_offset: int | None = None  # set while pending merge
        self._peak = 0.0
        self._zsum = 0.0
        self._zcount = 0
        self._pend_peak = 0.0
        self._pend_sum = 0.0
        self._pend_count = 0
        self._on_emitted = False
        self.events: list[GoosebumpEvent] = []

    def _commit(self, z: float) -> None:
        self._peak = max(self._peak, z)
        self._zsum += z
        self._zcount += 1

    def _maybe_on(self, t_us: int) -> Edge | None:
        if not self._on_emitted and t_us - self._cand_onset >= self._min_dur_us:
            self._on_emitted = True
            return Edge("ON", self._cand_onset, self._peak)
        return None

    def _finalize(self) -> Edge | None:
        onset, offset = self._cand_onset, self._cand_offset
        duration = offset - onset
        keep = duration >= self._min_dur_us
        edge = None
        if keep:
            # a kept candidate always got its ON at or before close time
            assert self._on_emitted
            severity = self._peak
            self.events.append(
                GoosebumpEvent(
                    onset_us=onset,
                    offset_us=offset,
                    severity=severity,
                    mean_z=self._zsum / self._zcount,
                )
            )
            edge = Edge("OFF", offset, severity)
        self._cand_onset = None
        self._cand_offset = None
        self._peak = self._zsum = 0.0
        self._zcount = 0
        self._pend_peak = self._pend_sum = 0.0
        self._pend_count = 0
        self._on_emitted = False
        return edge

    def push(self, sample: IntensitySample) -> Edge | None:
        if sample.z is None:
            raise ValueError("streaming detector needs z-scored samples")
        t, z = sample.t_us, sample.z
        if self._last_t is not None and t <= self._last_t:
            raise ValueError(f"out-of-order sample: {t} after {self._last_t}")
        self._last_t = t

        if self._cand_onset is None:
            if z >= self.config.theta_on:
                self._cand_onset = t
                self._commit(z)
            return None

        if self._cand_offset is None:  # candidate open
            if z >= self.config.theta_off:
                self._commit(z)
                return self._maybe_on(t)
            # close: the closing sample is not part of the open span unless
            # a later merge swallows the gap
            self._cand_offset = t
            self._pend_peak, self._pend_sum, self._pend_count = z, z, 1
            return self._maybe_on(t)

        # candidate pending merge
        if t - self._cand_offset >= self._merge_gap_us:
            edge = self._finalize()
            if z >= self.config.theta_on:
                self._cand_onset = t
                self._commit(z)
            return edge
        if z >= self.config.theta_on:
            # merged: the gap samples become interior
            self._peak = max(self._peak, self._pend_peak)
            self._zsum += self._pend_sum
            self._zcount += self._pend_count
            self._pend_peak = self._pend_sum = 0.0
            self._pend_count = 0
            self._cand_offset = None
            self._commit(z)
            return self._maybe_on(t)
        self._pend_peak = max(self._pend_peak, z)
        self._pend_sum += z
        self._pend_count += 1
        return None

    def finish(self) -> Edge | None:
        """Close the stream; a still-open candidate closes at the last timestamp."""
        if self._cand_onset is None:
            return None
        if self._cand_offset is None:
            self._cand_offset = self._last_t
        return self._finalize()


def replay_streaming(
    samples: list[IntensitySample], config: DetectorConfig = DetectorConfig()
) -> list[Edge]:
    """Run the streaming detector over a full trace and collect its edges."""
    det = StreamingDetector(config)
    edges = [e for s in samples if (e := det.push(s)) is not None]
    tail = det.finish()
    if tail is not None:
        edges.append(tail)
    return edges


def events_from_edges(edges: list[Edge]) -> list[tuple[int, int, float]]:
    """Pair ON/OFF edges into (onset_us, offset_us, severity) triples."""
    out = []
    pending_on: Edge | None = None
    for e in edges:
        if e.kind == "ON":
            if pending_on is not None:
                raise ValueError("two ON edges without an OFF between them")
            pending_on = e
        elif e.kind == "OFF":
            if pending_on is None:
                raise ValueError("OFF edge without a preceding ON")
            out.append((pending_on.t_us, e.t_us, e.value))
            pending_on = None
    if pending_on is not None:
        raise ValueError("stream ended with an unmatched ON edge")
    return out


# ---------------------------------------------------------------------------
# Full-trace pipeline

@dataclass
class DetectionResult:
    samples: list[IntensitySample]
    profile: CalibrationProfile
    events: list[GoosebumpEvent]


def compute_intensity(
    frames: list[Frame],
    roi: Roi | None = None,
    config: DetectorConfig = DetectorConfig(),
    chunk: int = 256,
) -> list[IntensitySample]:
    """Preprocess, band-pass, and reduce frames to an intensity trace."""
    samples: list[IntensitySample] = []
    for start in range(0, len(frames), chunk):
        batch = frames[start : start + chunk]
        stack = np.stack([f.pixels for f in batch])
        pre = preprocess_stack(stack, roi)
        filtered = bandpass_stack(pre, config.band_sigma_lo, config.band_sigma_hi)
        for f, raw in zip(batch, stack_intensity(filtered)):
            samples.append(IntensitySample(t_us=f.t_us, raw=float(raw)))
    return samples


def run_detection(
    frames: list[Frame],
    roi: Roi | None = None,
    config: DetectorConfig = DetectorConfig(),
    calib_window: float = 5.0,
) -> DetectionResult:
    """frames -> intensity trace -> calibration -> z-scores -> event list."""
    samples = compute_intensity(frames, roi, config)
    profile = calibrate(samples, calib_window)
    samples = apply_zscore(samples, profile)
    events = detect_events(samples, config)
    return DetectionResult(samples=samples, profile=profile, events=events)


# ---------------------------------------------------------------------------
# Serialization

def events_to_json_dict(events: list[GoosebumpEvent]) -> dict:
    return {
        "events": [
            {
                "onset_us": e.onset_us,
                "offset_us": e.offset_us,
                "severity": e.severity,
                "mean_z": e.mean_z,
            }
            for e in events
        ]
    }


def events_from_json_dict(d: dict) -> list[GoosebumpEvent]:
    return [
        GoosebumpEvent(
            onset_us=int(e["onset_us"]),
            offset_us=int(e["offset_us"]),
            severity=float(e["severity"]),
            mean_z=float(e["mean_z"]),
        )
        for e in d["events"]
    ]


def write_events_json(path: str | Path, events: list[GoosebumpEvent]) -> None:
    Path(path).write_text(
        json.dumps(events_to_json_dict(events), indent=2, sort_keys=True) + "\n"
    )


def read_events_json(path: str | Path) -> list[GoosebumpEvent]:
    return events_from_json_dict(json.loads(Path(path).read_text()))


def write_trace_csv(path: str | Path, samples: list[IntensitySample]) -> None:
    """Intensity trace as CSV with header ``t_us,raw,z``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_us", "raw", "z"])
        for s in samples:
            writer.writerow(
                [s.t_us, f"{s.raw:.10g}", "" if s.z is None else f"{s.z:.10g}"]
            )

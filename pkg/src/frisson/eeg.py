"""EEG loading, synthesis, filtering, epoching, ERP averaging, and band power.

The recording lives as a CSV (``t_s,<ch1>,...``) plus a JSON sidecar carrying
the sampling rate, channel names, receiver-clock start time, and subject id.
Analysis follows the event-locked scheme: zero-phase band-pass, epochs cut
around goosebump onsets with baseline correction, amplitude-based artifact
rejection, ERP averages, and Welch band power summarized per scalp region for
the pre/during/post phases of each event.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import butter, sosfiltfilt, welch

BANDS: dict[str, tuple[float, float]] = {
    "theta": (4.0, 8.0),
    "alpha": (8.0, 13.0),
    "beta": (13.0, 30.0),
    "gamma": (30.0, 45.0),
}

GROUP_NAMES = ("frontal", "central", "posterior")

PHASES = ("pre", "during", "post")

BASELINE_RMS_UV = 10.0


class RecordingFormatError(ValueError):
    """The EEG CSV or its sidecar violates the expected format."""


def channel_group(name: str) -> str | None:
    """Scalp region of a 10-20 channel name, by prefix.

    frontal: Fp/AF/F (but not FC/FT); central: C/FC/CP; posterior: P/PO/O.
    Temporal and other unmatched names belong to no group.
    """
    if name.startswith(("Fp", "AF")):
        return "frontal"
    if name.startswith("F"):
        return None if name.startswith(("FC", "FT")) else "frontal"
    if name.startswith(("C", "FC", "CP")):
        return "central"
    if name.startswith(("P", "O")):
        return "posterior"
    return None


def group_channel_indices(channel_names: list[str]) -> dict[str, list[int]]:
    groups: dict[str, list[int]] = {g: [] for g in GROUP_NAMES}
    for i, name in enumerate(channel_names):
        g = channel_group(name)
        if g is not None:
            groups[g].append(i)
    return groups


@dataclass
class EegRecording:
    """Multichannel EEG: (channels, samples) microvolts at a fixed rate.

    ``t0_us`` is the receiver-clock time of the first sample.
    """

    sampling_rate: float
    channel_names: list[str]
    samples: np.ndarray
    t0_us: int
    subject_id: str

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sampling_rate


@dataclass
class Epoch:
    """Baseline-corrected event-locked window of EEG."""

    event_index: int
    window: tuple[float, float]
    data: np.ndarray
    rejected: str | None = None


@dataclass
class PhaseSummary:
    """Mean band power per phase/band/scalp group, with usable-event counts."""

    power: dict[str, dict[str, dict[str, float]]]
    n_events: dict[str, int]
    n_rejected: dict[str, int]

    def to_json_dict(self) -> dict:
        return {
            "phases": {
                phase: {
                    "n_events": self.n_events[phase],
                    "n_rejected": self.n_rejected[phase],
                    "bands": {
                        band: {
                            group: self.power[phase][band][group]
                            for group in sorted(self.power[phase][band])
                        }
                        for band in sorted(self.power[phase])
                    },
                }
                for phase in PHASES
            }
        }


# ---------------------------------------------------------------------------
# I/O

def load_recording(csv_path: str | Path, sidecar_path: str | Path) -> EegRecording:
    """Load an EEG CSV plus JSON sidecar, verifying names and uniform sampling."""
    csv_path, sidecar_path = Path(csv_path), Path(sidecar_path)
    try:
        meta = json.loads(sidecar_path.read_text())
    except FileNotFoundError:
        raise RecordingFormatError(f"missing sidecar {sidecar_path}") from None
    try:
        fs = float(meta["sampling_rate_hz"])
        names = [str(n) for n in meta["channel_names"]]
        t0_us = int(meta["t0_us"])
        subject_id = str(meta["subject_id"])
    except KeyError as missing:
        raise RecordingFormatError(f"sidecar missing key {missing}") from None
    if fs <= 0:
        raise RecordingFormatError("sampling_rate_hz must be > 0")

    try:
        with open(csv_path) as fh:
            header = fh.readline().rstrip("\n").split(",")
            if header[:1] != ["t_s"]:
                raise RecordingFormatError(
                    f"{csv_path}: first CSV column must be t_s, got {header[:1]}"
                )
            if header[1:] != names:
                raise RecordingFormatError(
                    f"{csv_path}: CSV channel columns do not match sidecar "
                    f"channel_names ({len(header) - 1} vs {len(names)})"
                )
            try:
                data = np.loadtxt(fh, delimiter=",", ndmin=2)
            except ValueError:
                fh.seek(0)
                fh.readline()
                _locate_bad_cell(fh, len(header))
                raise  # unreachable: _locate_bad_cell always raises
    except FileNotFoundError:
        raise RecordingFormatError(f"missing recording {csv_path}") from None

    if data.shape[0] == 0:
        raise RecordingFormatError(f"{csv_path}: no samples")
    if data.shape[1] != len(names) + 1:
        raise RecordingFormatError(
            f"{csv_path}: rows have {data.shape[1]} columns, expected {len(names) + 1}"
        )
    t = data[:, 0]
    if len(t) > 1:
        dev = np.abs(np.diff(t) - 1.0 / fs)
        worst = int(np.argmax(dev))
        if dev[worst] >= 1e-6:
            raise RecordingFormatError(
                f"{csv_path}: non-uniform sampling at row {worst + 2}: "
                f"dt={t[worst + 1] - t[worst]:.9f}s vs 1/fs={1.0 / fs:.9f}s"
            )
    return EegRecording(
        sampling_rate=fs,
        channel_names=names,
        samples=np.ascontiguousarray(data[:, 1:].T),
        t0_us=t0_us,
        subject_id=subject_id,
    )


def _locate_bad_cell(fh, n_cols: int) -> None:
    """Scan a CSV body for the first non-numeric cell and report row/col."""
    for row, line in enumerate(fh, start=2):  # header was row 1
        cells = line.rstrip("\n").split(",")
        if len(cells) != n_cols:
            raise RecordingFormatError(
                f"row {row}: {len(cells)} columns, expected {n_cols}"
            )
        for col, cell in enumerate(cells, start=1):
            try:
                float(cell)
            except ValueError:
                raise RecordingFormatError(
                    f"non-numeric cell at row {row}, column {col}: {cell!r}"
                ) from None
    raise RecordingFormatError("CSV rejected by parser but no bad cell found")


def write_recording(
    csv_path: str | Path, sidecar_path: str | Path, rec: EegRecording
) -> None:
    """Write an EEG recording in the CSV + sidecar format ``load_recording`` reads."""
    with open(csv_path, "w") as fh:
        fh.write("t_s," + ",".join(rec.channel_names) + "\n")
        t = np.arange(rec.n_samples) / rec.sampling_rate
        cols = rec.samples.T
        for i in range(rec.n_samples):
            fh.write(
                f"{t[i]:.9f}," + ",".join(f"{v:.6f}" for v in cols[i]) + "\n"
            )
    sidecar = {
        "sampling_rate_hz": rec.sampling_rate,
        "channel_names": rec.channel_names,
        "t0_us": rec.t0_us,
        "subject_id": rec.subject_id,
    }
    Path(sidecar_path).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Synthesis

def synth_recording(
    fs: float,
    duration: float,
    channel_names: list[str],
    events: list[tuple[float, float]],
    burst: tuple[str, float, list[str]] = ("alpha", 3.0, ["frontal"]),
    rng_seed: int = 0,
    t0_us: int = 0,
    subject_id: str = "synthetic",
) -> EegRecording:
    """Synthesize an EEG record with band-limited bursts during events.

    Each channel is cumulatively filtered white noise normalized to 10 uV
    RMS; channels of the burst groups additionally get a sinusoid at the
    band's center frequency, amplitude gain x 10 uV, gated to the event
    intervals (seconds relative to the first sample). Deterministic by seed.
    """
    band_name, gain, groups = burst
    if band_name not in BANDS:
        raise ValueError(f"unknown band {band_name!r}")
    if gain < 0:
        raise ValueError("burst gain must be >= 0")
    for g in groups:
        if g not in GROUP_NAMES:
            raise ValueError(f"unknown channel group {g!r}")
    group_idx = group_channel_indices(channel_names)
    burst_channels = sorted({i for g in groups for i in group_idx[g]})

    rng = np.random.default_rng(rng_seed)
    n = int(round(duration * fs))
    t = np.arange(n) / fs
    gate = np.zeros(n)
    for on, off in events:
        gate[(t >= on) & (t < off)] = 1.0
    lo, hi = BANDS[band_name]
    carrier = np.sin(2.0 * math.pi * 0.5 * (lo + hi) * t) * gate

    samples = np.empty((len(channel_names), n))
    for ch in range(len(channel_names)):
        x = np.cumsum(rng.standard_normal(n))
        x -= x.mean()
        rms = np.sqrt(np.mean(x * x))
        if rms > 0:
            x *= BASELINE_RMS_UV / rms
        samples[ch] = x
    for ch in burst_channels:
        samples[ch] = samples[ch] + gain * BASELINE_RMS_UV * carrier

    return EegRecording(
        sampling_rate=fs,
        channel_names=list(channel_names),
        samples=samples,
        t0_us=t0_us,
        subject_id=subject_id,
    )


# ---------------------------------------------------------------------------
# Filtering

def bandpass_filter(rec: EegRecording, lo: float = 1.0, hi: float = 45.0) -> EegRecording:
    """Zero-phase 4th-order Butterworth band-pass, applied per channel."""
    nyquist = rec.sampling_rate / 2.0
    if not 0 < lo < hi < nyquist:
        raise ValueError(
            f"band ({lo}, {hi}) Hz must lie strictly inside (0, {nyquist}) Hz"
        )
    sos = butter(4, [lo, hi], btype="bandpass", fs=rec.sampling_rate, output="sos")
    filtered = sosfiltfilt(sos, rec.samples, axis=1)
    return EegRecording(
        sampling_rate=rec.sampling_rate,
        channel_names=list(rec.channel_names),
        samples=filtered,
        t0_us=rec.t0_us,
        subject_id=rec.subject_id,
    )


# ---------------------------------------------------------------------------
# Epoching and averaging

def epoch_events(
    rec: EegRecording,
    events_onset_us: list[int],
    window: tuple[float, float] = (-5.0, 5.0),
    baseline: tuple[float, float] = (-5.0, -4.0),
) -> tuple[list[Epoch], list[dict]]:
    """Cut one baseline-corrected epoch per event onset (receiver clock).

    Events whose full window falls outside the recording are skipped, not
    fatal; the second return value lists ``{"event_index", "reason"}`` for
    each skip.
    """
    w0, w1 = window
    b0, b1 = baseline
    if not (w0 <= b0 < b1 <= w1):
        raise ValueError("window must cover the baseline interval")
    fs = rec.sampling_rate
    n_window = int(round((w1 - w0) * fs))
    i_b0 = int(round((b0 - w0) * fs))
    i_b1 = int(round((b1 - w0) * fs))

    epochs: list[Epoch] = []
    skipped: list[dict] = []
    for idx, onset_us in enumerate(events_onset_us):
        center = int(round((onset_us - rec.t0_us) * 1e-6 * fs))
        start = center + int(round(w0 * fs))
        stop = start + n_window
        if start < 0 or stop > rec.n_samples:
            skipped.append({"event_index": idx, "reason": "window_out_of_bounds"})
            continue
        data = rec.samples[:, start:stop].astype(np.float64).copy()
        data -= data[:, i_b0:i_b1].mean(axis=1, keepdims=True)
        epochs.append(Epoch(event_index=idx, window=(w0, w1), data=data))
    return epochs, skipped


def reject_artifacts(epochs: list[Epoch], amp_limit: float = 100.0) -> list[Epoch]:
    """Flag epochs containing any sample beyond +/- amp_limit microvolts."""
    for e in epochs:
        if np.any(np.abs(e.data) > amp_limit):
            e.rejected = "amplitude"
    return epochs


def erp_average(epochs: list[Epoch]) -> tuple[np.ndarray, np.ndarray]:
    """Mean over unrejected epochs plus per-sample standard error (sd/sqrt(N))."""
    kept = [e.data for e in epochs if e.rejected is None]
    if not kept:
        raise ValueError("zero unrejected epochs")
    shapes = {k.shape for k in kept}
    if len(shapes) != 1:
        raise ValueError(f"epochs have mismatched shapes: {shapes}")
    stack = np.stack(kept)
    erp = stack.mean(axis=0)
    if len(kept) == 1:
        return erp, np.zeros_like(erp)
    sem = stack.std(axis=0, ddof=1) / math.sqrt(len(kept))
    return erp, sem


# ---------------------------------------------------------------------------
# Spectra

def band_power(
    segment: np.ndarray, fs: float, band: tuple[float, float]
) -> float:
    """Mean Welch PSD (uV^2/Hz) over the bins whose centers fall in [lo, hi).

    Welch settings are pinned: 1 s Hann segments, 50% overlap, constant
    detrend. The segment must be at least 2 s long.
    """
    x = np.asarray(segment, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("band_power takes one channel at a time")
    if x.size < 2 * fs:
        raise ValueError(
            f"segment too short: {x.size} samples < 2 s at {fs} Hz"
        )
    nperseg = int(round(fs))
    f, psd = welch(
        x, fs=fs, window="hann", nperseg=nperseg, noverlap=nperseg // 2,
        detrend="constant",
    )
    lo, hi = band
    sel = (f >= lo) & (f < hi)
    if not np.any(sel):
        raise ValueError(f"no PSD bins inside band {band}")
    return float(psd[sel].mean())


def welch_psd(segment: np.ndarray, fs: float) -> tuple[np.ndarray, np.ndarray]:
    """Full Welch PSD with the same pinned settings as ``band_power``."""
    x = np.asarray(segment, dtype=np.float64)
    nperseg = int(round(fs))
    return welch(
        x, fs=fs, window="hann", nperseg=nperseg, noverlap=nperseg // 2,
        detrend="constant",
    )


# ---------------------------------------------------------------------------
# Phase summary (the pre/during/post figure)

def phase_summary(
    rec: EegRecording,
    events_us: list[tuple[int, int]],
    bands: dict[str, tuple[float, float]] | None = None,
    amp_limit: float = 100.0,
    during_cap_s: float = 5.0,
    phase_pad_s: float = 5.0,
) -> PhaseSummary:
    """Band power per scalp group for the pre/during/post phase of each event.

    Phases per event (onset_us, offset_us), in receiver-clock seconds
    relative to onset: pre = [-5, 0), during = [0, min(duration, 5)), post =
    [offset, offset + 5). Segments out of bounds, shorter than 2 s (Welch
    needs that much), or exceeding the amplitude limit on any channel are
    rejected and counted.
    """
    bands = dict(BANDS) if bands is None else bands
    groups = group_channel_indices(rec.channel_names)
    for g, idx in groups.items():
        if not idx:
            raise ValueError(f"empty channel group {g!r}: no matching channels")
    fs = rec.sampling_rate

    power: dict[str, dict[str, dict[str, list[float]]]] = {
        ph: {b: {g: [] for g in groups} for b in bands} for ph in PHASES
    }
    n_events = {ph: 0 for ph in PHASES}
    n_rejected = {ph: 0 for ph in PHASES}

    for onset_us, offset_us in events_us:
        on_s = (onset_us - rec.t0_us) / 1e6
        off_s = (offset_us - rec.t0_us) / 1e6
        duration = off_s - on_s
        spans = {
            "pre": (on_s - phase_pad_s, on_s),
            "during": (on_s, on_s + min(duration, during_cap_s)),
            "post": (off_s, off_s + phase_pad_s),
        }
        for phase, (t0, t1) in spans.items():
            i0 = int(round(t0 * fs))
            i1 = int(round(t1 * fs))
            if i0 < 0 or i1 > rec.n_samples:
                n_rejected[phase] += 1
                continue
            if i1 - i0 < 2 * fs:
                n_rejected[phase] += 1
                continue
            seg = rec.samples[:, i0:i1]
            if np.any(np.abs(seg) > amp_limit):
                n_rejected[phase] += 1
                continue
            n_events[phase] += 1
            # one PSD per channel, then the same [lo, hi) bin means band_power uses
            grouped = sorted({ch for idx in groups.values() for ch in idx})
            psd_by_ch = {}
            f = None
            for ch in grouped:
                f, psd_by_ch[ch] = welch_psd(seg[ch], fs)
            for b_name, (lo, hi) in bands.items():
                sel = (f >= lo) & (f < hi)
                if not np.any(sel):
                    raise ValueError(f"no PSD bins inside band {b_name}")
                for g_name, idx in groups.items():
                    p = np.mean([psd_by_ch[ch][sel].mean() for ch in idx])
                    power[phase][b_name][g_name].append(float(p))

    mean_power = {
        ph: {
            b: {g: (float(np.mean(v)) if v else 0.0) for g, v in by_group.items()}
            for b, by_group in by_band.items()
        }
        for ph, by_band in power.items()
    }
    return PhaseSummary(power=mean_power, n_events=n_events, n_rejected=n_rejected)


# ---------------------------------------------------------------------------
# Report writers

def write_erp_csv(
    path: str | Path,
    erp: np.ndarray,
    channel_names: list[str],
    window: tuple[float, float],
    fs: float,
) -> None:
    """ERP matrix as CSV: a time header row, then one row per channel."""
    n = erp.shape[1]
    times = window[0] + np.arange(n) / fs
    with open(path, "w") as fh:
        fh.write("channel," + ",".join(f"{t:.6f}" for t in times) + "\n")
        for name, row in zip(channel_names, erp):
            fh.write(name + "," + ",".join(f"{v:.6f}" for v in row) + "\n")


def write_phase_summary_json(path: str | Path, summary: PhaseSummary) -> None:
    Path(path).write_text(
        json.dumps(summary.to_json_dict(), indent=2, sort_keys=True) + "\n"
    )


def write_epochs_report_json(
    path: str | Path, epochs: list[Epoch], skipped: list[dict]
) -> None:
    """Kept/rejected/skipped status per event index."""
    entries = [
        {
            "event_index": e.event_index,
            "status": "rejected" if e.rejected else "kept",
            "reason": e.rejected,
        }
        for e in epochs
    ]
    entries.extend(
        {"event_index": s["event_index"], "status": "skipped", "reason": s["reason"]}
        for s in skipped
    )
    entries.sort(key=lambda d: d["event_index"])
    Path(path).write_text(
        json.dumps({"epochs": entries}, indent=2, sort_keys=True) + "\n"
    )

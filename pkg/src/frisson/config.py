"""Session configuration: one JSON document driving every CLI stage."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .detect import DetectorConfig
from .frames import Roi, SynthConfig

# Standard 64-channel 10-10 montage (easycap-style); the frontal/central/
# posterior prefix groups pick their members out of this list.
DEFAULT_CHANNELS_64 = [
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "FC5", "FC1", "FC2", "FC6",
    "T7", "C3", "Cz", "C4", "T8", "TP9", "CP5", "CP1", "CP2", "CP6", "TP10",
    "P7", "P3", "Pz", "P4", "P8", "PO9", "O1", "Oz", "O2", "PO10", "AF7",
    "AF3", "AF4", "AF8", "F5", "F1", "F2", "F6", "FT9", "FT7", "FC3", "FC4",
    "FT8", "FT10", "C5", "C1", "C2", "C6", "TP7", "CP3", "CPz", "CP4", "TP8",
    "P5", "P1", "P2", "P6", "PO7", "PO3", "POz", "PO4", "PO8",
]


@dataclass
class EegSynthConfig:
    """Synthetic EEG parameters, including the sender->receiver clock model.

    Ground-truth event times arrive on the sender (camera) clock; the clock
    fields place them on the receiver timeline where the EEG lives.
    """

    sampling_rate_hz: float = 256.0
    duration_s: float = 60.0
    channel_names: list[str] = field(default_factory=lambda: list(DEFAULT_CHANNELS_64))
    burst_band: str = "alpha"
    burst_gain: float = 3.0
    burst_groups: list[str] = field(default_factory=lambda: ["frontal"])
    t0_us: int = 0
    clock_alpha_us: float = 0.0
    clock_beta: float = 1.0
    rng_seed: int = 77
    subject_id: str = "synthetic"


@dataclass
class SessionConfig:
    """Everything a session needs: ROI, detector, epoching, synth generators."""

    roi: Roi | None = None  # None = full frame
    calib_window_s: float = 5.0
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    epoch_window_s: tuple[float, float] = (-5.0, 5.0)
    baseline_s: tuple[float, float] = (-5.0, -4.0)
    amp_limit_uv: float = 100.0
    filter_band_hz: tuple[float, float] = (1.0, 45.0)
    synth_frames: SynthConfig = field(default_factory=SynthConfig)
    synth_eeg: EegSynthConfig = field(default_factory=EegSynthConfig)

    def to_json_dict(self) -> dict:
        d = asdict(self)
        d["roi"] = None if self.roi is None else asdict(self.roi)
        d["synth_frames"]["events"] = [list(e) for e in self.synth_frames.events]
        d["epoch_window_s"] = list(self.epoch_window_s)
        d["baseline_s"] = list(self.baseline_s)
        d["filter_band_hz"] = list(self.filter_band_hz)
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "SessionConfig":
        cfg = cls()
        known = set(cfg.to_json_dict())
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if d.get("roi") is not None:
            cfg.roi = Roi(**d["roi"])
        if "calib_window_s" in d:
            cfg.calib_window_s = float(d["calib_window_s"])
        if "detector" in d:
            cfg.detector = DetectorConfig(**d["detector"])
        if "epoch_window_s" in d:
            cfg.epoch_window_s = tuple(float(v) for v in d["epoch_window_s"])
        if "baseline_s" in d:
            cfg.baseline_s = tuple(float(v) for v in d["baseline_s"])
        if "amp_limit_uv" in d:
            cfg.amp_limit_uv = float(d["amp_limit_uv"])
        if "filter_band_hz" in d:
            cfg.filter_band_hz = tuple(float(v) for v in d["filter_band_hz"])
        if "synth_frames" in d:
            sf = dict(d["synth_frames"])
            if "events" in sf:
                sf["events"] = [tuple(e) for e in sf["events"]]
            cfg.synth_frames = SynthConfig(**sf)
        if "synth_eeg" in d:
            cfg.synth_eeg = EegSynthConfig(**d["synth_eeg"])
        return cfg

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n"
        )

    @classmethod
    def load(cls, path: str | Path) -> "SessionConfig":
        return cls.from_json_dict(json.loads(Path(path).read_text()))

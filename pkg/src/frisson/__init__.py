"""frisson: goosebump detection from skin imagery with EEG event marking.

The chain mirrors a wearable piloerection sensor feeding an EEG rig:
skin frames -> band-pass texture energy -> robust z-scores -> hysteresis
events -> timestamped markers over TCP -> clock-mapped epochs, ERPs, and
pre/during/post band power.
"""

from .config import DEFAULT_CHANNELS_64, EegSynthConfig, SessionConfig
from .detect import (
    CalibrationError,
    CalibrationProfile,
    DetectionResult,
    DetectorConfig,
    Edge,
    GoosebumpEvent,
    IntensitySample,
    StreamingDetector,
    apply_zscore,
    bandpass_frame,
    bandpass_stack,
    calibrate,
    compute_intensity,
    detect_events,
    events_from_edges,
    frame_intensity,
    read_events_json,
    replay_streaming,
    run_detection,
    write_events_json,
    write_trace_csv,
)
from .eeg import (
    BANDS,
    EegRecording,
    Epoch,
    PhaseSummary,
    RecordingFormatError,
    band_power,
    bandpass_filter,
    channel_group,
    epoch_events,
    erp_average,
    group_channel_indices,
    load_recording,
    phase_summary,
    reject_artifacts,
    synth_recording,
    write_recording,
)
from .frames import (
    Frame,
    FrameError,
    GroundTruth,
    Roi,
    SynthConfig,
    gaussian_blur,
    gaussian_kernel1d,
    load_frames,
    preprocess,
    read_pgm,
    synth_frames,
    write_frames,
    write_pgm,
)
from .markers import (
    ClockFitError,
    ClockMap,
    MarkerMessage,
    MarkerParseError,
    MarkerReceiver,
    MarkerScheduler,
    MarkerSender,
    SimulatedArrivalClock,
    clock_map_from_log,
    decode_marker,
    edge_events_from_log,
    encode_marker,
    fit_clock_map,
    map_time,
    parse_marker_log,
    sync_pairs,
    unmap_time,
)

__version__ = "0.1.0"

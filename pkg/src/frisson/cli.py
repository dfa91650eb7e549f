"""frisson CLI: synth-frames | detect | stream | synth-eeg | analyze.

Every command is deterministic given its inputs and config. Exit codes are a
stable contract: 0 success, 2 input error, 3 transport error, 4 analysis had
zero usable epochs.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

from . import detect as det
from . import eeg as eegmod
from . import markers as mk
from . import svg as svgmod
from .config import SessionConfig
from .frames import (
    FrameError,
    GroundTruth,
    load_frames,
    synth_frames,
    write_frames,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_TRANSPORT = 3
EXIT_EMPTY_ANALYSIS = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="frisson",
        description="Goosebump detection, marker streaming, and EEG analysis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", type=Path, help="session config JSON")
        p.add_argument("--dump-config", type=Path, metavar="PATH",
                       help="write the effective config JSON and continue")
        p.add_argument("--seed", type=int, help="override both synth seeds")
        p.add_argument("--calib-window", type=float, dest="calib_window")
        p.add_argument("--theta-on", type=float, dest="theta_on")
        p.add_argument("--theta-off", type=float, dest="theta_off")
        p.add_argument("--min-duration", type=float, dest="min_duration")
        p.add_argument("--merge-gap", type=float, dest="merge_gap")

    p = sub.add_parser("synth-frames", help="generate a synthetic skin session")
    add_common(p)
    p.add_argument("--out", type=Path, required=True, help="output frame directory")

    p = sub.add_parser("detect", help="detect goosebump events in a frame directory")
    add_common(p)
    p.add_argument("--frames", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("stream", help="replay a frame directory as live markers")
    add_common(p)
    p.add_argument("--frames", type=Path, required=True)
    p.add_argument("--connect", required=True, metavar="HOST:PORT")
    p.add_argument("--out", type=Path, help="directory for the local sent-line log")
    p.add_argument("--pace", action="store_true",
                   help="sleep to follow frame timestamps (live-speed replay)")

    p = sub.add_parser("synth-eeg", help="generate a synthetic EEG record")
    add_common(p)
    p.add_argument("--ground-truth", type=Path, required=True,
                   help="ground_truth.json with event intervals (sender clock)")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("analyze", help="event-locked EEG analysis report")
    add_common(p)
    p.add_argument("--eeg", type=Path, required=True, help="EEG CSV")
    p.add_argument("--sidecar", type=Path, required=True, help="EEG JSON sidecar")
    p.add_argument("--events", type=Path, required=True, help="events.json")
    p.add_argument("--marker-log", type=Path, required=True,
                   help="receiver marker log (for the clock fit)")
    p.add_argument("--out", type=Path, required=True)
    return parser


def effective_config(args: argparse.Namespace) -> SessionConfig:
    """config file < FRISSON_SEED env < explicit flags."""
    cfg = SessionConfig.load(args.config) if args.config else SessionConfig()
    env_seed = os.environ.get("FRISSON_SEED")
    if env_seed is not None:
        cfg.synth_frames.rng_seed = int(env_seed)
        cfg.synth_eeg.rng_seed = int(env_seed)
    if args.seed is not None:
        cfg.synth_frames.rng_seed = args.seed
        cfg.synth_eeg.rng_seed = args.seed
    if args.calib_window is not None:
        cfg.calib_window_s = args.calib_window
    det_overrides = {
        name: getattr(args, name)
        for name in ("theta_on", "theta_off", "min_duration", "merge_gap")
        if getattr(args, name) is not None
    }
    if det_overrides:
        cfg.detector = dataclasses.replace(cfg.detector, **det_overrides)
    if args.dump_config is not None:
        cfg.dump(args.dump_config)
    return cfg


# ---------------------------------------------------------------------------
# Commands

def cmd_synth_frames(cfg: SessionConfig, out_dir: Path) -> int:
    frames, truth = synth_frames(cfg.synth_frames)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_frames(out_dir, frames)
    (out_dir / "ground_truth.json").write_text(
        json.dumps(truth.to_json_dict(), indent=2, sort_keys=True) + "\n"
    )
    print(f"wrote {len(frames)} frames and ground_truth.json to {out_dir}")
    return EXIT_OK


def cmd_detect(cfg: SessionConfig, frames_dir: Path, out_dir: Path) -> int:
    frames = load_frames(frames_dir)
    result = det.run_detection(
        frames, roi=cfg.roi, config=cfg.detector, calib_window=cfg.calib_window_s
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    det.write_events_json(out_dir / "events.json", result.events)
    det.write_trace_csv(out_dir / "intensity.csv", result.samples)
    (out_dir / "intensity.svg").write_text(
        svgmod.intensity_trace_svg(
            result.samples, result.events, cfg.detector.theta_on
        )
    )
    print(f"{len(result.events)} event(s); report in {out_dir}")
    return EXIT_OK


def cmd_stream(
    cfg: SessionConfig,
    frames_dir: Path,
    address: tuple[str, int],
    out_dir: Path | None,
    pace: bool = False,
) -> int:
    frames = load_frames(frames_dir)
    samples = det.compute_intensity(frames, cfg.roi, cfg.detector)
    profile = det.calibrate(samples, cfg.calib_window_s)
    samples = det.apply_zscore(samples, profile)

    detector = det.StreamingDetector(cfg.detector)
    scheduler = mk.MarkerScheduler(cfg.detector)
    sender: mk.MarkerSender | None = None
    try:
        sender = mk.MarkerSender(address)
        t_prev: int | None = None
        for sample in samples:
            if pace and t_prev is not None:
                time.sleep(max(0.0, (sample.t_us - t_prev) / 1e6))
            t_prev = sample.t_us
            edge = detector.push(sample)
            if edge is not None:
                scheduler.add_edge(edge.kind, edge.t_us, edge.value)
            for message in scheduler.advance(sample.t_us):
                sender.send(message)
        tail = detector.finish()
        if tail is not None:
            scheduler.add_edge(tail.kind, tail.t_us, tail.value)
        for message in scheduler.finish(samples[-1].t_us if samples else 0):
            sender.send(message)
        sender.close()
        print(f"streamed {len(sender.sent_lines)} marker lines to "
              f"{address[0]}:{address[1]}")
        return EXIT_OK
    except (ConnectionError, TimeoutError) as exc:
        print(f"transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    finally:
        if sender is not None and out_dir is not None:
            out_dir.mkdir(parents=True, exist_ok=True)
            with open(out_dir / "sent_markers.log", "wb") as fh:
                fh.writelines(sender.sent_lines)


def cmd_synth_eeg(cfg: SessionConfig, ground_truth_path: Path, out_dir: Path) -> int:
    truth = GroundTruth.from_json_dict(json.loads(ground_truth_path.read_text()))
    ec = cfg.synth_eeg
    # ground-truth events live on the sender clock; place them on the
    # receiver timeline relative to the first EEG sample
    events_rel = [
        (
            (ec.clock_alpha_us + ec.clock_beta * on * 1e6 - ec.t0_us) / 1e6,
            (ec.clock_alpha_us + ec.clock_beta * off * 1e6 - ec.t0_us) / 1e6,
        )
        for on, off in truth.events
    ]
    rec = eegmod.synth_recording(
        fs=ec.sampling_rate_hz,
        duration=ec.duration_s,
        channel_names=ec.channel_names,
        events=events_rel,
        burst=(ec.burst_band, ec.burst_gain, list(ec.burst_groups)),
        rng_seed=ec.rng_seed,
        t0_us=ec.t0_us,
        subject_id=ec.subject_id,
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    eegmod.write_recording(out_dir / "eeg.csv", out_dir / "eeg_sidecar.json", rec)
    print(f"wrote {rec.n_samples} samples x {len(rec.channel_names)} channels "
          f"to {out_dir}")
    return EXIT_OK


def cmd_analyze(
    cfg: SessionConfig,
    eeg_csv: Path,
    sidecar: Path,
    events_path: Path,
    marker_log: Path,
    out_dir: Path,
) -> int:
    rec = eegmod.load_recording(eeg_csv, sidecar)
    events = det.read_events_json(events_path)
    clock_map = mk.clock_map_from_log(marker_log)
    mapped = [
        (mk.map_time(clock_map, e.onset_us), mk.map_time(clock_map, e.offset_us))
        for e in events
    ]

    lo, hi = cfg.filter_band_hz
    filtered = eegmod.bandpass_filter(rec, lo, hi)
    epochs, skipped = eegmod.epoch_events(
        filtered,
        [on for on, _ in mapped],
        window=cfg.epoch_window_s,
        baseline=cfg.baseline_s,
    )
    epochs = eegmod.reject_artifacts(epochs, cfg.amp_limit_uv)
    kept = [e for e in epochs if e.rejected is None]

    out_dir.mkdir(parents=True, exist_ok=True)
    eegmod.write_epochs_report_json(out_dir / "epochs_report.json", epochs, skipped)
    if not kept:
        print(
            f"zero usable epochs ({len(skipped)} out of bounds, "
            f"{len(epochs) - len(kept)} rejected)",
            file=sys.stderr,
        )
        return EXIT_EMPTY_ANALYSIS

    erp, _sem = eegmod.erp_average(epochs)
    eegmod.write_erp_csv(
        out_dir / "erp.csv", erp, rec.channel_names, cfg.epoch_window_s,
        rec.sampling_rate,
    )
    summary = eegmod.phase_summary(filtered, mapped, amp_limit=cfg.amp_limit_uv)
    eegmod.write_phase_summary_json(out_dir / "phase_summary.json", summary)
    (out_dir / "summary.svg").write_text(svgmod.phase_summary_svg(summary))
    print(f"analyzed {len(kept)} epoch(s); report in {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def _parse_address(text: str) -> tuple[str, int]:
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"bad address {text!r}, expected HOST:PORT")
    return host, int(port)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = effective_config(args)
        if args.command == "synth-frames":
            return cmd_synth_frames(cfg, args.out)
        if args.command == "detect":
            return cmd_detect(cfg, args.frames, args.out)
        if args.command == "stream":
            return cmd_stream(cfg, args.frames, _parse_address(args.connect),
                              args.out, pace=args.pace)
        if args.command == "synth-eeg":
            return cmd_synth_eeg(cfg, args.ground_truth, args.out)
        if args.command == "analyze":
            return cmd_analyze(cfg, args.eeg, args.sidecar, args.events,
                               args.marker_log, args.out)
        raise AssertionError(f"unhandled command {args.command}")
    except (
        FrameError,
        eegmod.RecordingFormatError,
        det.CalibrationError,
        mk.MarkerParseError,
        mk.ClockFitError,
        ValueError,
        OSError,
        json.JSONDecodeError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()

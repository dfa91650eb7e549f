import numpy as np
import pytest

from frisson.frames import (
    Frame,
    FrameError,
    Roi,
    SynthConfig,
    load_frames,
    preprocess,
    read_pgm,
    synth_frames,
    write_frames,
    write_pgm,
)


def write_raw_pgm(path, width, height, maxval=255, payload=None):
    header = f"P5\n{width} {height}\n{maxval}\n".encode()
    if payload is None:
        payload = bytes(width * height * (1 if maxval == 255 else 2))
    path.write_bytes(header + payload)


class TestPgmIo:
    def test_two_frames_load_in_timestamp_order(self, tmp_path):
        write_raw_pgm(tmp_path / "frame_33333.pgm", 64, 64)
        write_raw_pgm(tmp_path / "frame_0.pgm", 64, 64)
        frames = load_frames(tmp_path)
        assert [f.t_us for f in frames] == [0, 33333]
        assert frames[0].width == 64 and frames[0].height == 64

    def test_all_black_is_all_zero(self, tmp_path):
        write_raw_pgm(tmp_path / "frame_0.pgm", 8, 8)
        frames = load_frames(tmp_path)
        assert np.all(frames[0].pixels == 0.0)

    def test_dimension_mismatch_names_offender(self, tmp_path):
        write_raw_pgm(tmp_path / "frame_0.pgm", 64, 64)
        write_raw_pgm(tmp_path / "frame_10.pgm", 32, 32)
        with pytest.raises(FrameError, match="frame_10.pgm"):
            load_frames(tmp_path)

    def test_duplicate_timestamp_rejected(self, tmp_path):
        write_raw_pgm(tmp_path / "frame_7.pgm", 8, 8)
        write_raw_pgm(tmp_path / "frame_007.pgm", 8, 8)
        with pytest.raises(FrameError, match="duplicate timestamp 7"):
            load_frames(tmp_path)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(FrameError, match="missing frame directory"):
            load_frames(tmp_path / "nope")

    def test_empty_directory(self, tmp_path):
        with pytest.raises(FrameError, match="no frame"):
            load_frames(tmp_path)

    def test_malformed_pgm_names_file(self, tmp_path):
        p = tmp_path / "frame_0.pgm"
        p.write_bytes(b"P2\n4 4\n255\n" + bytes(16))
        with pytest.raises(FrameError, match="frame_0.pgm"):
            load_frames(tmp_path)

    def test_truncated_raster(self, tmp_path):
        p = tmp_path / "frame_0.pgm"
        write_raw_pgm(p, 8, 8, payload=bytes(10))
        with pytest.raises(FrameError, match="raster"):
            read_pgm(p)

    def test_unsupported_maxval(self, tmp_path):
        p = tmp_path / "frame_0.pgm"
        p.write_bytes(b"P5\n2 2\n100\n" + bytes(4))
        with pytest.raises(FrameError, match="maxval"):
            read_pgm(p)

    def test_header_comments_are_skipped(self, tmp_path):
        p = tmp_path / "frame_0.pgm"
        p.write_bytes(b"P5\n# a comment\n2 2\n255\n" + bytes([0, 128, 255, 64]))
        img = read_pgm(p)
        assert img.shape == (2, 2)
        assert img[0, 1] == 128 / 255

    def test_16bit_scaling(self, tmp_path):
        p = tmp_path / "frame_0.pgm"
        payload = np.array([0, 32768, 65535, 1], dtype=">u2").tobytes()
        write_raw_pgm(p, 2, 2, maxval=65535, payload=payload)
        img = read_pgm(p)
        assert img[0, 0] == 0.0
        assert img[0, 1] == 32768 / 65535
        assert img[1, 0] == 1.0

    def test_roundtrip_within_half_quantum(self, tmp_path):
        rng = np.random.default_rng(3)
        frames = [Frame(pixels=rng.random((16, 16)), t_us=i * 1000) for i in range(4)]
        write_frames(tmp_path, frames)
        loaded = load_frames(tmp_path)
        for orig, back in zip(frames, loaded):
            assert np.abs(orig.pixels - back.pixels).max() <= 1.0 / (2 * 255) + 1e-12

    def test_write_pgm_rounds_rather_than_truncates(self, tmp_path):
        p = tmp_path / "x.pgm"
        write_pgm(p, np.array([[0.999 / 255 * 255]]) * 0 + np.array([[254.6 / 255]]))
        assert read_pgm(p)[0, 0] == 255 / 255


class TestSynthFrames:
    def test_frame_count_and_determinism(self):
        cfg = SynthConfig(width=32, height=32, frame_rate=30.0, duration=20.0,
                          events=[(8.0, 12.0)], rng_seed=7)
        frames_a, truth_a = synth_frames(cfg)
        frames_b, truth_b = synth_frames(cfg)
        assert len(frames_a) == 600
        assert truth_a.events == [(8.0, 12.0)]
        assert len(truth_a.bump_centers) == cfg.bump_count
        for a, b in zip(frames_a, frames_b):
            assert a.t_us == b.t_us
            assert np.array_equal(a.pixels, b.pixels)

    def test_timestamps_strictly_increase(self):
        cfg = SynthConfig(width=16, height=16, duration=2.0, events=[], rng_seed=0)
        frames, _ = synth_frames(cfg)
        ts = [f.t_us for f in frames]
        assert all(b > a for a, b in zip(ts, ts[1:]))

    def test_full_amplitude_inside_ramped_interval(self):
        # noise-free so the blob contribution is exact
        cfg = SynthConfig(width=48, height=48, frame_rate=30.0, duration=16.0,
                          bump_count=6, bump_amplitude=0.2, ramp=0.5,
                          events=[(8.0, 12.0)], noise_sigma=0.0, rng_seed=11)
        frames, truth = synth_frames(cfg)
        by_time = {f.t_us: f.pixels for f in frames}
        base = by_time[0]
        mid = by_time[10_000_000]  # t=10s, inside [8+ramp, 12-ramp]
        diff = mid - base
        assert diff.min() >= -1e-12
        cx, cy = truth.bump_centers[0]
        assert diff[cy, cx] >= 0.9 * cfg.bump_amplitude
        # frames before onset carry no blob at all
        pre = by_time[4_000_000]
        assert np.array_equal(pre, base)

    def test_zero_amplitude_matches_eventless_run(self):
        base_kwargs = dict(width=24, height=24, duration=4.0, bump_amplitude=0.0,
                           noise_sigma=0.01, rng_seed=5)
        with_events, _ = synth_frames(SynthConfig(events=[(1.0, 2.0)], **base_kwargs))
        without, _ = synth_frames(SynthConfig(events=[], **base_kwargs))
        for a, b in zip(with_events, without):
            assert np.array_equal(a.pixels, b.pixels)

    def test_event_validation(self):
        with pytest.raises(ValueError):
            SynthConfig(events=[(2.0, 1.0)]).validate()
        with pytest.raises(ValueError):
            SynthConfig(events=[(1.0, 3.0), (2.0, 4.0)]).validate()
        with pytest.raises(ValueError):
            SynthConfig(bump_amplitude=0.9).validate()


class TestPreprocess:
    def test_flat_field_stays_at_half(self):
        frame = Frame(pixels=np.full((32, 32), 0.5), t_us=0)
        out = preprocess(frame, Roi(4, 4, 24, 24))
        assert np.abs(out.pixels - 0.5).max() < 1e-12
        assert out.pixels.shape == (24, 24)

    def test_multiplicative_brightness_invariance(self):
        rng = np.random.default_rng(2)
        base = 0.2 + 0.5 * rng.random((40, 40))
        out1 = preprocess(Frame(base, 0)).pixels
        for c in (0.5, 1.5, 2.0):
            outc = preprocess(Frame(c * base, 0)).pixels
            assert np.abs(out1 - outc).max() <= 1e-6

    def test_output_depends_only_on_roi_pixels(self):
        rng = np.random.default_rng(4)
        img = rng.random((40, 40))
        roi = Roi(8, 8, 20, 20)
        out1 = preprocess(Frame(img.copy(), 0), roi).pixels
        img[0:5, 0:5] = 0.0  # outside the roi
        out2 = preprocess(Frame(img, 0), roi).pixels
        assert np.array_equal(out1, out2)

    def test_roi_out_of_bounds(self):
        frame = Frame(np.zeros((32, 32)), 0)
        with pytest.raises(ValueError, match="out of bounds"):
            preprocess(frame, Roi(20, 20, 20, 20))

    def test_roi_too_small(self):
        frame = Frame(np.zeros((32, 32)), 0)
        with pytest.raises(ValueError, match="too small"):
            preprocess(frame, Roi(0, 0, 8, 8))

    def test_output_range(self):
        rng = np.random.default_rng(9)
        out = preprocess(Frame(rng.random((32, 32)), 0)).pixels
        assert out.min() >= 0.0 and out.max() <= 1.0

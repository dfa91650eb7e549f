"""Skin-image frames: PGM directory I/O, synthetic sequences, illumination normalization.

Frames are grayscale luminance images in [0, 1] stamped with microseconds
since session start. Directories of ``frame_<t_us>.pgm`` files (binary P5,
8- or 16-bit) stand in for the live camera.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate1d

_FRAME_NAME = re.compile(r"^frame_(\d+)\.pgm$")

# Above this edge length the dense blur-operator matrices get too big and we
# fall back to per-axis convolution.
_MATRIX_BLUR_MAX_DIM = 2048


class FrameError(Exception):
    """A frame directory or PGM file violates the expected format."""

    def __init__(self, message: str, filename: str | Path | None = None):
        self.filename = str(filename) if filename is not None else None
        if self.filename:
            message = f"{self.filename}: {message}"
        super().__init__(message)


@dataclass
class Frame:
    """One timestamped grayscale skin image.

    ``pixels`` is a (height, width) float array of luminance in [0, 1];
    ``t_us`` is microseconds since session start.
    """

    pixels: np.ndarray
    t_us: int

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class Roi:
    """Rectangle in pixel coordinates; (x, y) is the top-left corner."""

    x: int
    y: int
    width: int
    height: int


@dataclass
class SynthConfig:
    """Parameters of a synthetic skin session with known goosebump intervals."""

    width: int = 128
    height: int = 128
    frame_rate: float = 30.0
    duration: float = 20.0
    base_texture_scale: float = 12.0
    base_texture_amplitude: float = 0.06
    bump_count: int = 40
    bump_sigma: float = 4.0
    bump_amplitude: float = 0.12
    ramp: float = 0.25
    events: list[tuple[float, float]] = field(default_factory=lambda: [(8.0, 12.0)])
    noise_sigma: float = 0.01
    rng_seed: int = 1234

    def validate(self) -> None:
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be > 0")
        if self.bump_sigma <= 0:
            raise ValueError("bump_sigma must be > 0")
        if not 0.0 <= self.bump_amplitude <= 0.5:
            raise ValueError("bump_amplitude must be in [0, 0.5]")
        if self.width < 1 or self.height < 1:
            raise ValueError("frame dimensions must be positive")
        validate_events(self.events)


@dataclass
class GroundTruth:
    """Event intervals (seconds) and bump centers of a synthetic session."""

    events: list[tuple[float, float]]
    bump_centers: list[tuple[int, int]]

    def to_json_dict(self) -> dict:
        return {
            "events": [{"onset_s": on, "offset_s": off} for on, off in self.events],
            "bump_centers": [[int(x), int(y)] for x, y in self.bump_centers],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "GroundTruth":
        events = [(float(e["onset_s"]), float(e["offset_s"])) for e in d["events"]]
        centers = [(int(c[0]), int(c[1])) for c in d.get("bump_centers", [])]
        return cls(events=events, bump_centers=centers)


def validate_events(events: list[tuple[float, float]]) -> None:
    """Check that event intervals are ordered, non-overlapping, and non-empty."""
    prev_off = -math.inf
    for on, off in events:
        if off <= on:
            raise ValueError(f"event offset {off} must exceed onset {on}")
        if on < prev_off:
            raise ValueError(f"event at {on}s overlaps or precedes the previous one")
        prev_off = off


# ---------------------------------------------------------------------------
# Gaussian blur machinery (shared with the band-pass detector)

def gaussian_kernel1d(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian sampled on integers and truncated at 3*sigma."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def mirror_index(i: int, n: int) -> int:
    """Reflect an out-of-range index about the edge samples (no edge repeat)."""
    if n == 1:
        return 0
    period = 2 * n - 2
    i %= period
    return period - i if i >= n else i


@lru_cache(maxsize=32)
def _blur_operator(n: int, sigma: float) -> np.ndarray:
    """Dense n x n matrix applying the truncated Gaussian with mirrored edges.

    Row i holds the kernel centered at i with out-of-range taps folded back
    by reflection; applying it to an axis is identical to direct mirrored
    convolution but runs through BLAS, which matters for frame batches.
    """
    k = gaussian_kernel1d(sigma)
    radius = len(k) // 2
    op = np.zeros((n, n), dtype=np.float64)
    for off in range(-radius, radius + 1):
        w = k[off + radius]
        for i in range(n):
            op[i, mirror_index(i + off, n)] += w
    return op


def gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur (3-sigma truncation, mirror-reflected edges).

    Accepts one (h, w) image or an (n, h, w) stack; returns float64 output of
    the same shape.
    """
    arr = np.asarray(image, dtype=np.float64)
    h, w = arr.shape[-2], arr.shape[-1]
    if max(h, w) <= _MATRIX_BLUR_MAX_DIM:
        op_h = _blur_operator(h, float(sigma))
        op_w = _blur_operator(w, float(sigma))
        return op_h @ arr @ op_w.T if arr.ndim == 2 else op_h[None] @ arr @ op_w.T[None]
    k = gaussian_kernel1d(sigma)
    out = correlate1d(arr, k, axis=-2, mode="mirror")
    return correlate1d(out, k, axis=-1, mode="mirror")


# ---------------------------------------------------------------------------
# PGM I/O

def read_pgm(path: str | Path) -> np.ndarray:
    """Read a binary (P5) PGM with maxval 255 or 65535 into a [0, 1] float image."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise FrameError("file not found", path) from None

    pos = 0

    def next_token() -> bytes:
        nonlocal pos
        # skip whitespace and '#' comments
        while pos < len(data):
            c = data[pos : pos + 1]
            if c == b"#":
                nl = data.find(b"\n", pos)
                pos = len(data) if nl < 0 else nl + 1
            elif c.isspace():
                pos += 1
            else:
                break
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FrameError("truncated header", path)
        return data[start:pos]

    if next_token() != b"P5":
        raise FrameError("not a binary PGM (missing P5 magic)", path)
    try:
        width = int(next_token())
        height = int(next_token())
        maxval = int(next_token())
    except ValueError:
        raise FrameError("non-numeric header field", path) from None
    if width < 1 or height < 1:
        raise FrameError(f"bad dimensions {width}x{height}", path)
    if maxval not in (255, 65535):
        raise FrameError(f"unsupported maxval {maxval} (expected 255 or 65535)", path)
    pos += 1  # exactly one whitespace byte separates header and raster
    raster = data[pos:]
    bytes_per = 1 if maxval == 255 else 2
    expected = width * height * bytes_per
    if len(raster) != expected:
        raise FrameError(
            f"raster has {len(raster)} bytes, expected {expected}", path
        )
    if maxval == 255:
        gray = np.frombuffer(raster, dtype=np.uint8)
    else:
        gray = np.frombuffer(raster, dtype=">u2")
    return gray.reshape(height, width).astype(np.float64) / maxval


def write_pgm(path: str | Path, pixels: np.ndarray, maxval: int = 255) -> None:
    """Write a [0, 1] float image as a binary PGM (rounded, 8- or 16-bit)."""
    if maxval not in (255, 65535):
        raise ValueError("maxval must be 255 or 65535")
    arr = np.clip(np.asarray(pixels, dtype=np.float64), 0.0, 1.0)
    q = np.rint(arr * maxval)
    raster = q.astype(np.uint8) if maxval == 255 else q.astype(">u2")
    header = f"P5\n{arr.shape[1]} {arr.shape[0]}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + raster.tobytes())


def load_frames(path: str | Path) -> list[Frame]:
    """Load every ``frame_<t_us>.pgm`` in a directory, ordered by timestamp.

    Raises FrameError naming the offending file for malformed PGMs, duplicate
    timestamps, or dimension mismatches.
    """
    directory = Path(path)
    if not directory.is_dir():
        raise FrameError("missing frame directory", directory)
    entries = []
    for p in sorted(directory.iterdir()):
        m = _FRAME_NAME.match(p.name)
        if m:
            entries.append((int(m.group(1)), p))
    if not entries:
        raise FrameError("no frame_<t_us>.pgm files found", directory)
    entries.sort(key=lambda e: (e[0], e[1].name))
    frames: list[Frame] = []
    seen_t: int | None = None
    dims: tuple[int, int] | None = None
    for t_us, p in entries:
        pixels = read_pgm(p)
        if seen_t is not None and t_us == seen_t:
            raise FrameError(f"duplicate timestamp {t_us}", p)
        if dims is None:
            dims = pixels.shape
        elif pixels.shape != dims:
            raise FrameError(
                f"dimension mismatch: {pixels.shape[1]}x{pixels.shape[0]} "
                f"after {dims[1]}x{dims[0]}",
                p,
            )
        frames.append(Frame(pixels=pixels, t_us=t_us))
        seen_t = t_us
    return frames


def write_frames(path: str | Path, frames: list[Frame], maxval: int = 255) -> None:
    """Write frames as ``frame_<t_us>.pgm`` files into a directory."""
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    for f in frames:
        write_pgm(directory / f"frame_{f.t_us}.pgm", f.pixels, maxval=maxval)


# ---------------------------------------------------------------------------
# Synthetic sessions

def _ramp_gain(t: float, events: list[tuple[float, float]], ramp: float) -> float:
    """Blob amplitude fraction at time t: 0 outside events, linear ramps inside."""
    for on, off in events:
        if on <= t <= off:
            if ramp <= 0:
                return 1.0
            return max(0.0, min(1.0, (t - on) / ramp, (off - t) / ramp))
    return 0.0


def synth_frames(config: SynthConfig) -> tuple[list[Frame], GroundTruth]:
    """Generate a synthetic skin sequence with Gaussian-blob goosebumps.

    Deterministic given ``rng_seed``: a fixed low-pass noise texture around
    0.5, plus blob fields ramping in and out during each event, plus
    per-frame white noise, clamped to [0, 1].
    """
    config.validate()
    rng = np.random.default_rng(config.rng_seed)
    h, w = config.height, config.width

    texture = gaussian_blur(rng.standard_normal((h, w)), config.base_texture_scale)
    peak = np.abs(texture).max()
    if peak > 0:
        texture *= config.base_texture_amplitude / peak
    base = 0.5 + texture

    centers_x = rng.integers(0, w, size=config.bump_count)
    centers_y = rng.integers(0, h, size=config.bump_count)
    yy, xx = np.mgrid[0:h, 0:w]
    blob = np.zeros((h, w), dtype=np.float64)
    for cx, cy in zip(centers_x, centers_y):
        blob += np.exp(
            -((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * config.bump_sigma**2)
        )

    n_frames = int(round(config.duration * config.frame_rate))
    times = np.arange(n_frames) / config.frame_rate
    gains = np.array(
        [_ramp_gain(t, config.events, config.ramp) for t in times], dtype=np.float64
    )

    frames: list[Frame] = []
    chunk = 256
    for start in range(0, n_frames, chunk):
        stop = min(start + chunk, n_frames)
        stack = base[None] + (config.bump_amplitude * gains[start:stop])[
            :, None, None
        ] * blob[None]
        if config.noise_sigma > 0:
            stack = stack + config.noise_sigma * rng.standard_normal(
                (stop - start, h, w)
            )
        np.clip(stack, 0.0, 1.0, out=stack)
        for i in range(stop - start):
            t_us = int(round(times[start + i] * 1e6))
            frames.append(Frame(pixels=stack[i], t_us=t_us))

    truth = GroundTruth(
        events=list(config.events),
        bump_centers=[(int(x), int(y)) for x, y in zip(centers_x, centers_y)],
    )
    return frames, truth


# ---------------------------------------------------------------------------
# Illumination normalization

def preprocess_stack(stack: np.ndarray, roi: Roi | None = None) -> np.ndarray:
    """Vectorized preprocess over an (n, h, w) stack; see ``preprocess``."""
    arr = np.asarray(stack, dtype=np.float64)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[None]
    h, w = arr.shape[1], arr.shape[2]
    if roi is None:
        roi = Roi(0, 0, w, h)
    if roi.width < 16 or roi.height < 16:
        raise ValueError(f"roi too small: {roi.width}x{roi.height} (minimum 16x16)")
    if roi.x < 0 or roi.y < 0 or roi.x + roi.width > w or roi.y + roi.height > h:
        raise ValueError(
            f"roi out of bounds: {roi} does not fit inside {w}x{h} frame"
        )
    crop = arr[:, roi.y : roi.y + roi.height, roi.x : roi.x + roi.width]
    blur = gaussian_blur(crop, roi.width / 4.0)
    # Scale-free local normalization: the ratio cancels illumination, the
    # mean(blur)/mean(crop) factor keeps a flat field fixed, and the final
    # clamp-and-halve maps the neutral level to 0.5.
    blur_mean = blur.mean(axis=(1, 2), keepdims=True)
    crop_mean = crop.mean(axis=(1, 2), keepdims=True)
    denom = np.maximum(blur, 1e-12) * np.maximum(crop_mean, 1e-12)
    ratio = crop * blur_mean / denom
    out = 0.5 * np.clip(ratio, 0.0, 2.0)
    return out[0] if squeeze else out


def preprocess(frame: Frame, roi: Roi | None = None) -> Frame:
    """Crop to the ROI and normalize away illumination.

    Divides the crop by its own heavy Gaussian blur (sigma = ROI width / 4)
    and rescales by the blur's global mean, so the output only depends on
    local contrast: multiplying every input pixel by a constant changes
    nothing, and a flat field comes back unchanged at 0.5 neutral level.
    """
    return Frame(pixels=preprocess_stack(frame.pixels, roi), t_us=frame.t_us)

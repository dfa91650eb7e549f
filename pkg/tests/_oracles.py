"""Independent oracles and generators shared by the test suite.

These deliberately avoid the library's own convolution/energy paths: dense
2-D convolution with explicit reflected indexing, analytic filter responses,
and seeded stream generators.
"""
from __future__ import annotations

import math

import numpy as np

from frisson.detect import IntensitySample
from frisson.frames import SynthConfig


def reflect_index(i: int, n: int) -> int:
    if n == 1:
        return 0
    period = 2 * n - 2
    i %= period
    return period - i if i >= n else i


def gaussian_kernel_2d(sigma: float) -> np.ndarray:
    """Truncated-at-3-sigma 2-D Gaussian, normalized over its square support."""
    radius = int(math.ceil(3.0 * sigma))
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    g2 = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma**2))
    return g2 / g2.sum()


def dense_convolve_mirror(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Direct dense 2-D convolution with mirror-reflected edges."""
    r = kernel.shape[0] // 2
    h, w = img.shape
    ys = np.array([[reflect_index(y + dy, h) for y in range(h)] for dy in range(-r, r + 1)])
    xs = np.array([[reflect_index(x + dx, w) for x in range(w)] for dx in range(-r, r + 1)])
    out = np.zeros_like(img, dtype=np.float64)
    for iy in range(kernel.shape[0]):
        row = img[ys[iy], :]
        for ix in range(kernel.shape[1]):
            out += kernel[iy, ix] * row[:, xs[ix]]
    return out


def dense_dog(img: np.ndarray, sigma_lo: float, sigma_hi: float) -> np.ndarray:
    return dense_convolve_mirror(img, gaussian_kernel_2d(sigma_lo)) - dense_convolve_mirror(
        img, gaussian_kernel_2d(sigma_hi)
    )


def butter_filtfilt_gain(f: float, lo: float, hi: float, fs: float, order: int = 4) -> float:
    """Squared (forward+backward) magnitude of the digital Butterworth band-pass.

    Uses the bilinear prewarp so the analytic value matches the discrete
    filter at fs.
    """

    def warp(freq: float) -> float:
        return (fs / math.pi) * math.tan(math.pi * freq / fs)

    fw, lw, hw = warp(f), warp(lo), warp(hi)
    w = abs(fw * fw - lw * hw) / (fw * (hw - lw))
    return 1.0 / (1.0 + w ** (2 * order))


def random_z_stream(seed: int, fs: float = 20.0, duration: float = 60.0) -> list[IntensitySample]:
    """A z-scored sample stream exercising hysteresis corner cases.

    Mix of correlated noise plus square pulses whose amplitudes straddle the
    hysteresis thresholds and whose durations/gaps straddle min_duration and
    merge_gap.
    """
    rng = np.random.default_rng(seed)
    n = int(duration * fs)
    z = rng.standard_normal(n) * 0.8
    # smooth a little so values linger near thresholds
    z = np.convolve(z, np.ones(3) / 3.0, mode="same")
    t = 2.0 + rng.uniform(0.0, 2.0)
    while t < duration - 4.0:
        dur = rng.choice([0.2, 0.45, 0.8, 1.1, 2.5]) + rng.uniform(0.0, 0.3)
        amp = rng.choice([1.6, 2.4, 3.2, 5.0, 8.0])
        i0, i1 = int(t * fs), min(int((t + dur) * fs), n)
        z[i0:i1] += amp
        t = t + dur + rng.choice([0.15, 0.4, 0.55, 0.7, 2.0]) + rng.uniform(0.0, 0.2)
    times = (np.arange(n) * (1e6 / fs)).astype(np.int64)
    return [IntensitySample(t_us=int(tu), raw=0.0, z=float(v)) for tu, v in zip(times, z)]


def acceptance_events(rng: np.random.Generator, n_events: int) -> list[tuple[float, float]]:
    """2-4 well-separated events of 2-4 s inside a 60 s session."""
    events = []
    t = 9.0 + rng.uniform(0.0, 2.0)
    for _ in range(n_events):
        dur = rng.uniform(2.0, 4.0)
        if t + dur > 55.0:
            break
        events.append((round(t, 3), round(t + dur, 3)))
        t += dur + 6.0 + rng.uniform(0.0, 2.0)
    return events


def acceptance_synth_config(seed: int, events: list[tuple[float, float]]) -> SynthConfig:
    """128x128 @ 30 Hz, 60 s, bump amplitude 12x the noise sigma."""
    return SynthConfig(
        width=128,
        height=128,
        frame_rate=30.0,
        duration=60.0,
        base_texture_scale=12.0,
        base_texture_amplitude=0.06,
        bump_count=35,
        bump_sigma=4.0,
        bump_amplitude=0.12,
        ramp=0.1,
        events=events,
        noise_sigma=0.01,
        rng_seed=seed,
    )

"""Minimal hand-rolled SVG plots, byte-deterministic for reproducible runs."""
from __future__ import annotations

import math

from .detect import GoosebumpEvent, IntensitySample
from .eeg import GROUP_NAMES, PHASES, PhaseSummary

_GROUP_FILL = {"frontal": "#c0392b", "central": "#2980b9", "posterior": "#27ae60"}


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def intensity_trace_svg(
    samples: list[IntensitySample],
    events: list[GoosebumpEvent],
    theta_on: float,
    width: int = 960,
    height: int = 320,
) -> str:
    """z(t) polyline with the onset threshold line and shaded event spans."""
    margin_l, margin_r, margin_t, margin_b = 50, 15, 15, 35
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b

    zs = [s.z if s.z is not None else 0.0 for s in samples]
    t0 = samples[0].t_us if samples else 0
    t1 = samples[-1].t_us if samples else 1
    t_span = max(t1 - t0, 1)
    z_lo = min(min(zs, default=0.0), 0.0)
    z_hi = max(max(zs, default=1.0), theta_on) * 1.1 + 1e-9

    def sx(t_us: int) -> float:
        return margin_l + plot_w * (t_us - t0) / t_span

    def sy(z: float) -> float:
        return margin_t + plot_h * (1.0 - (z - z_lo) / (z_hi - z_lo))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    for e in events:
        x0, x1 = sx(e.onset_us), sx(e.offset_us)
        parts.append(
            f'<rect class="event-span" x="{_fmt(x0)}" y="{margin_t}" '
            f'width="{_fmt(max(x1 - x0, 1.0))}" height="{plot_h}" '
            f'fill="#f5b7b1" fill-opacity="0.6"/>'
        )
    y_thr = sy(theta_on)
    parts.append(
        f'<line class="threshold" x1="{margin_l}" y1="{_fmt(y_thr)}" '
        f'x2="{margin_l + plot_w}" y2="{_fmt(y_thr)}" '
        f'stroke="#888888" stroke-dasharray="6,4"/>'
    )
    if samples:
        points = " ".join(f"{_fmt(sx(s.t_us))},{_fmt(sy(z))}" for s, z in zip(samples, zs))
        parts.append(
            f'<polyline class="z-trace" points="{points}" '
            f'fill="none" stroke="#1a5276" stroke-width="1.2"/>'
        )
    # axes and sparse time ticks
    parts.append(
        f'<line x1="{margin_l}" y1="{margin_t + plot_h}" x2="{margin_l + plot_w}" '
        f'y2="{margin_t + plot_h}" stroke="black"/>'
    )
    parts.append(
        f'<line x1="{margin_l}" y1="{margin_t}" x2="{margin_l}" '
        f'y2="{margin_t + plot_h}" stroke="black"/>'
    )
    span_s = t_span / 1e6
    tick_step = max(1, int(span_s // 8) or 1)
    tick = 0
    while tick * 1e6 <= t_span:
        x = sx(t0 + int(tick * 1e6))
        parts.append(
            f'<text x="{_fmt(x)}" y="{height - 12}" font-size="11" '
            f'text-anchor="middle">{tick}s</text>'
        )
        tick += tick_step
    parts.append(
        f'<text x="12" y="{_fmt(y_thr - 4)}" font-size="11">z={theta_on:g}</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def phase_summary_svg(
    summary: PhaseSummary, width: int = 960, height: int = 340
) -> str:
    """Three-panel grouped bar chart of band power for pre/during/post phases.

    Bars use a log scale because burst power dwarfs baseline power.
    """
    margin, panel_gap, label_h = 40, 25, 40
    panel_w = (width - 2 * margin - 2 * panel_gap) / 3
    plot_h = height - margin - label_h

    bands = sorted(summary.power["pre"].keys())
    values = [
        summary.power[ph][b][g]
        for ph in PHASES
        for b in bands
        for g in GROUP_NAMES
    ]
    positive = [v for v in values if v > 0]
    v_hi = max(positive, default=1.0)
    v_lo = min(positive, default=0.1)
    log_lo = math.floor(math.log10(v_lo)) if positive else -1
    log_hi = math.ceil(math.log10(v_hi)) + 0.2 if positive else 1

    def bar_h(v: float) -> float:
        if v <= 0:
            return 0.0
        frac = (math.log10(v) - log_lo) / max(log_hi - log_lo, 1e-9)
        return max(plot_h * min(max(frac, 0.0), 1.0), 1.0)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    for p_i, phase in enumerate(PHASES):
        x_panel = margin + p_i * (panel_w + panel_gap)
        parts.append(
            f'<text x="{_fmt(x_panel + panel_w / 2)}" y="{margin - 14}" '
            f'font-size="13" text-anchor="middle" font-weight="bold">'
            f"{phase} (n={summary.n_events[phase]})</text>"
        )
        cluster_w = panel_w / len(bands)
        bar_w = cluster_w / (len(GROUP_NAMES) + 1)
        for b_i, band in enumerate(bands):
            x_cluster = x_panel + b_i * cluster_w
            for g_i, group in enumerate(GROUP_NAMES):
                v = summary.power[phase][band][group]
                h = bar_h(v)
                x = x_cluster + (g_i + 0.5) * bar_w
                parts.append(
                    f'<rect class="power-bar" x="{_fmt(x)}" '
                    f'y="{_fmt(margin + plot_h - h)}" width="{_fmt(bar_w)}" '
                    f'height="{_fmt(h)}" fill="{_GROUP_FILL[group]}"/>'
                )
            parts.append(
                f'<text x="{_fmt(x_cluster + cluster_w / 2)}" y="{height - 22}" '
                f'font-size="11" text-anchor="middle">{band}</text>'
            )
        parts.append(
            f'<line x1="{_fmt(x_panel)}" y1="{margin + plot_h}" '
            f'x2="{_fmt(x_panel + panel_w)}" y2="{margin + plot_h}" stroke="black"/>'
        )
    legend_x = margin
    for g_i, group in enumerate(GROUP_NAMES):
        x = legend_x + g_i * 110
        parts.append(
            f'<rect x="{x}" y="{height - 14}" width="10" height="10" '
            f'fill="{_GROUP_FILL[group]}"/>'
        )
        parts.append(
            f'<text x="{x + 14}" y="{height - 5}" font-size="11">{group}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

# confinement/artifacts.py

from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.12e'

PALETTE = ('#1f77b4', '#d62728', '#2ca02c', '#9467bd', '#ff7f0e', '#8c564b')


def run_directory(config, subcommand):
    """ <output_dir>/<subcommand>-<config hash>, created on demand. """
    path = Path(config.output_dir) / f"{subcommand}-{config.config_hash()}"
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_csv(path, frame, config, subcommand):
    """ CSV with one comment line naming the generating command and config hash. """
    path = Path(path)
    with open(path, 'w', encoding='utf-8', newline='') as handle:
        handle.write(f"# {subcommand} config_hash={config.config_hash()}\n")
        frame.to_csv(handle, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    logger.debug("wrote %s (%d rows)", path, len(frame))
    return path


def read_csv(path):
    return pd.read_csv(path, comment='#')


def format_value(value):
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def report_text(report):
    return ''.join(f"{key} = {format_value(value)}\n" for key, value in report.items())


def write_report(path, report):
    path = Path(path)
    path.write_text(report_text(report), encoding='utf-8')
    return path


def json_ready(report):
    """ The report with numpy scalars and non-finite floats made JSON-safe. """
    out = {}
    for key, value in report.items():
        if isinstance(value, (bool, np.bool_)):
            out[key] = bool(value)
        elif isinstance(value, (float, np.floating)):
            out[key] = float(value) if math.isfinite(value) else repr(float(value))
        elif isinstance(value, (int, np.integer)):
            out[key] = int(value)
        else:
            out[key] = str(value)
    return out


# --- SVG ---

def log_plot_svg(series, title='', xlabel='x', ylabel='', width=640, height=400):
    """
    Line plot with a log10 y-axis. `series` maps a label to (x, y); points
    with y <= 0 are dropped.
    """
    left, right, top, bottom = 70, 20, 30, 50
    cleaned = {}
    for label, (x, y) in series.items():
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        keep = np.isfinite(x) & np.isfinite(y) & (y > 0)
        if keep.any():
            cleaned[label] = (x[keep], np.log10(y[keep]))
    if not cleaned:
        xs, ys = np.array([0.0, 1.0]), np.array([0.0, 1.0])
    else:
        xs = np.concatenate([c[0] for c in cleaned.values()])
        ys = np.concatenate([c[1] for c in cleaned.values()])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = math.floor(float(ys.min())), math.ceil(float(ys.max()))
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1

    def px(x):
        return left + (x - x0) / (x1 - x0) * (width - left - right)

    def py(y):
        return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{left}" y1="{height - bottom}" x2="{width - right}" y2="{height - bottom}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{height - bottom}" stroke="black"/>',
    ]
    step = max(1, (y1 - y0) // 8)
    for k in range(y0, y1 + 1, step):
        parts.append(f'<text x="{left - 6}" y="{py(k) + 4:.1f}" text-anchor="end" font-size="11">1e{k}</text>')
        parts.append(f'<line x1="{left}" y1="{py(k):.1f}" x2="{width - right}" y2="{py(k):.1f}" '
                     f'stroke="#dddddd"/>')
    for frac in (0.0, 0.5, 1.0):
        xv = x0 + frac * (x1 - x0)
        parts.append(f'<text x="{px(xv):.1f}" y="{height - bottom + 16}" text-anchor="middle" '
                     f'font-size="11">{xv:.4g}</text>')
    parts.append(f'<text x="{width / 2:.1f}" y="{height - 10}" text-anchor="middle" font-size="12">{xlabel}</text>')
    parts.append(f'<text x="14" y="{height / 2:.1f}" text-anchor="middle" font-size="12" '
                 f'transform="rotate(-90 14 {height / 2:.1f})">{ylabel}</text>')

    for n, (label, (x, y)) in enumerate(cleaned.items()):
        colour = PALETTE[n % len(PALETTE)]
        points = ' '.join(f'{px(a):.2f},{py(b):.2f}' for a, b in zip(x, y))
        parts.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{points}"/>')
        parts.append(f'<text x="{width - right - 4}" y="{top + 14 * (n + 1)}" text-anchor="end" '
                     f'font-size="11" fill="{colour}">{label}</text>')
    parts.append('</svg>')
    return '\n'.join(parts) + '\n'


def write_svg(path, series, **kwargs):
    path = Path(path)
    path.write_text(log_plot_svg(series, **kwargs), encoding='utf-8')
    return path

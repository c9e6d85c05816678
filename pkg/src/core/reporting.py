"""
Reporting - CSV rows and text tables for the command-line front end.

Headers are fixed per file kind; bump ``artifacts.SCHEMA_VERSION`` when one
changes.
"""

import logging
from typing import Iterable, Optional

import numpy as np

from src.core.security import Attack, SecurityContext, boundary
from src.processors.distillation import PostSelection, SiftedBatch, StageReport

logger = logging.getLogger(__name__)

POINTS_HEADER = ("index", "basis", "Y_A", "Y_B", "kept", "class", "p", "f", "net_rate")
BOUNDARY_HEADER = ("y_A", "y_B_threshold_collective", "y_B_threshold_individual")
STAGE_HEADER = ("stage", "attack", "i_ab", "eve_info", "net", "retained_fraction", "rate_kbps")

BOUNDARY_GRID = np.round(np.arange(1, 61) * 0.05, 10)


def fmt(x: Optional[float]) -> str:
    """Stable float text: 10 significant digits, empty for missing values."""
    if x is None:
        return ""
    return f"{float(x):.10g}"


def point_rows(pairs: SiftedBatch, selection: PostSelection, classes: np.ndarray) -> Iterable[tuple]:
    a = selection.assessments
    kept = selection.mask
    net = a.net(selection.attack)
    for i in range(len(pairs)):
        yield (
            int(pairs.index[i]),
            "X" if pairs.basis[i] == 0 else "Y",
            fmt(pairs.y_a[i]),
            fmt(pairs.y_b[i]),
            int(kept[i]),
            classes[i],
            fmt(a.p[i]),
            fmt(a.f[i]),
            fmt(net[i]),
        )


def boundary_rows(ctx: SecurityContext, grid: Optional[np.ndarray] = None) -> list[tuple]:
    """Threshold |y_B| for both attacks along a grid of |y_A| values."""
    grid = BOUNDARY_GRID if grid is None else np.asarray(grid, dtype=float)
    rows = []
    for y_a in grid:
        rows.append((
            fmt(y_a),
            fmt(boundary(float(y_a), ctx, Attack.COLLECTIVE)),
            fmt(boundary(float(y_a), ctx, Attack.INDIVIDUAL)),
        ))
    return rows


def stage_rows(report: StageReport) -> list[tuple]:
    return [
        (r.stage.value, report.attack.value, fmt(r.i_ab), fmt(r.eve_info), fmt(r.net),
         fmt(r.retained_fraction), fmt(r.rate_kbps))
        for r in report.rows
    ]


def format_stage_table(report: StageReport, title: str = "") -> str:
    """Human-readable stage table."""
    eve = "chi" if report.attack is Attack.COLLECTIVE else "I_AE"
    net = "K" if report.attack is Attack.COLLECTIVE else "dI"
    lines = []
    if title:
        lines.append(title)
    lines.append(f"{'Stage':<15}{'I_AB':>9}{eve:>9}{net:>9}{'Kept':>9}{'kbit/s':>11}")
    lines.append("-" * 62)
    for r in report.rows:
        lines.append(
            f"{r.stage.value:<15}{r.i_ab:>9.3f}{r.eve_info:>9.3f}{r.net:>9.3f}"
            f"{r.retained_fraction:>9.4f}{r.rate_kbps:>11.1f}"
        )
    return "\n".join(lines) + "\n"


def key_hex(bits: np.ndarray) -> str:
    """Key as '<bit length>:<hex>' with the last byte zero-padded."""
    bits = np.asarray(bits, dtype=np.uint8)
    return f"{len(bits)}:{np.packbits(bits).tobytes().hex()}\n"

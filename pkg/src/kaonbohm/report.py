"""Spreading tables and plot-ready data files (gnuplot: whitespace columns, '#' header)."""

from __future__ import annotations

import csv
from collections.abc import Mapping, Sequence
from pathlib import Path

import numpy as np

from kaonbohm.packet import GaussianPacket, spread_at


def spread_sweep(packet: GaussianPacket, t_max: float, n_points: int) -> list[tuple[float, float, float]]:
    """(t, sigma(t), tau) rows on an even grid from t0 to t0 + t_max."""
    ts = packet.t0 + np.linspace(0.0, t_max, n_points)
    return [(float(t), float(spread_at(packet, t)), float(packet.tau(t))) for t in ts]


def flight_spread_table(sigma0s: Sequence[float], speeds: Sequence[float], distance: float, mass: float, hbar: float):
    """Width after covering ``distance`` at each speed, for each initial width.

    Used to document how far the spreading law lands from a quoted
    post-flight width once the kinematics are fixed.
    """
    rows = []
    for s0 in sigma0s:
        for v in speeds:
            t = distance / v
            pk = GaussianPacket(0.0, v, s0, mass, 0.0, hbar)
            rows.append({"sigma0_m": s0, "speed_m_per_s": v, "flight_time_s": t, "tau": pk.tau(t), "sigma_m": spread_at(pk, t)})
    return rows


def write_csv(path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def write_gnuplot(path: str | Path, columns: Mapping[str, Sequence[float]]) -> None:
    names = list(columns)
    data = np.column_stack([np.asarray(columns[n], dtype=float) for n in names]) if names else np.empty((0, 0))
    with open(path, "w") as fh:
        fh.write("# " + " ".join(names) + "\n")
        for row in data:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")

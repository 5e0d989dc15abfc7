"""CSV, gnuplot script and matplotlib figure output."""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def fmt(x) -> str:
    """Shortest round-trip text for numbers; stable across runs."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def write_json(path, data) -> Path:
    path = Path(path)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path


SWEEP_GP = """\
# gnuplot script: key rate and QBER versus distance
set datafile separator ","
set terminal pngcairo size 1100,450
set output "sweep_gnuplot.png"
set multiplot layout 1,2
set xlabel "distance (km)"
set ylabel "secret key rate (bits per pulse)"
set logscale y
set key top right
plot {rate_plots}
unset logscale y
set ylabel "QBER (%)"
plot {qber_plots}
unset multiplot
"""

CROSSTALK_GP = """\
# gnuplot script: key rate and QBER versus set of transmitting users
set datafile separator ","
set terminal pngcairo size 1100,450
set output "crosstalk_gnuplot.png"
set multiplot layout 1,2
set style data linespoints
set xlabel "scenario"
set ylabel "secret key rate (bits per pulse)"
plot "{csv}" using 0:2:xtic(1) every ::1 title "key rate"
set ylabel "QBER (%)"
plot "{csv}" using 0:($3*100):xtic(1) every ::1 title "QBER"
unset multiplot
"""


def write_sweep_gnuplot(path, csv_names: dict[int, str]) -> Path:
    rate = ", ".join(f'"{name}" using 2:7 every ::1 with linespoints title "user {u}"' for u, name in csv_names.items())
    qber = ", ".join(f'"{name}" using 2:($4*100) every ::1 with linespoints title "user {u}"' for u, name in csv_names.items())
    path = Path(path)
    path.write_text(SWEEP_GP.format(rate_plots=rate, qber_plots=qber), encoding="utf-8")
    return path


def write_crosstalk_gnuplot(path, csv_name: str) -> Path:
    path = Path(path)
    path.write_text(CROSSTALK_GP.format(csv=csv_name), encoding="utf-8")
    return path


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_sweep_figure(path, series: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]],
                        reference: dict[int, tuple[float, float, float]] | None = None) -> Path:
    """Rate (log) and QBER versus distance, one line per user.

    ``series[u] = (distance_km, R_per_pulse, qber)``; ``reference[u]`` adds a
    marker at ``(length_km, rate, qber)``.
    """
    plt = _pyplot()
    fig, (ax_r, ax_q) = plt.subplots(1, 2, figsize=(10, 4), constrained_layout=True)
    for u, (d, r, q) in sorted(series.items()):
        line, = ax_r.semilogy(d, np.where(np.asarray(r) > 0, r, np.nan), label=f"user {u}")
        ax_q.plot(d, 100 * np.asarray(q), color=line.get_color(), label=f"user {u}")
        if reference and u in reference:
            L, rr, qq = reference[u]
            ax_r.plot([L], [rr], "o", mfc="none", color=line.get_color())
            ax_q.plot([L], [100 * qq], "o", mfc="none", color=line.get_color())
    ax_r.set_xlabel("distance (km)")
    ax_r.set_ylabel("key rate (bits per pulse)")
    ax_q.set_xlabel("distance (km)")
    ax_q.set_ylabel("QBER (%)")
    ax_r.legend(frameon=False)
    for ax in (ax_r, ax_q):
        ax.grid(alpha=0.3)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def render_crosstalk_figure(path, labels: Sequence[str], rates, qbers,
                            reference: tuple[Sequence[float], Sequence[float]] | None = None) -> Path:
    plt = _pyplot()
    x = np.arange(len(labels))
    fig, (ax_r, ax_q) = plt.subplots(1, 2, figsize=(10, 4), constrained_layout=True)
    ax_r.plot(x, rates, "s-", label="model")
    ax_q.plot(x, 100 * np.asarray(qbers), "s-", label="model")
    if reference is not None:
        ax_r.plot(x, reference[0], "o", mfc="none", label="measured")
        ax_q.plot(x, 100 * np.asarray(reference[1]), "o", mfc="none", label="measured")
    for ax in (ax_r, ax_q):
        ax.set_xticks(x, labels)
        ax.set_xlabel("transmitting users")
        ax.grid(alpha=0.3)
    ax_r.set_ylabel("key rate (bits per pulse)")
    ax_q.set_ylabel("QBER (%)")
    ax_r.legend(frameon=False)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


class RunDirLock:
    """Exclusive lock file so two invocations never write the same directory."""

    def __init__(self, directory):
        self.path = Path(directory) / ".tdmqkd.lock"
        self._fd = None

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            self._fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise RuntimeError(f"output directory {self.path.parent} is locked by another run ({self.path})") from None
        os.write(self._fd, str(os.getpid()).encode())
        return self

    def __exit__(self, *exc):
        os.close(self._fd)
        self.path.unlink(missing_ok=True)
        return False

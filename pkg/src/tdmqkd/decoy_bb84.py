"""Asymptotic vacuum + weak decoy BB84 analysis."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .link_model import LinkParams, system_transmittance

F_EC = 1.16
Q_SIFT = 0.5
E0 = 0.5


class InfeasibleTarget(ValueError):
    """Requested QBER cannot be produced by any misalignment in [0, 0.5]."""


@dataclass(frozen=True)
class DecoyObservables:
    Q_mu: float
    Q_nu: float
    Q_vac: float
    E_mu: float
    E_nu: float
    E_vac: float = E0


@dataclass(frozen=True)
class DecoyBounds:
    Y0: float
    Y1_lower: float
    e1_upper: float
    Q1_lower: float

    @property
    def secure(self) -> bool:
        return self.Y1_lower > 0


@dataclass(frozen=True)
class KeyRateReport:
    user: int
    length_km: float
    observables: DecoyObservables
    bounds: DecoyBounds
    qber: float
    R_per_pulse: float
    R_bps: float
    f_ec: float = F_EC
    q_sift: float = Q_SIFT

    CSV_HEADER = ("user", "length_km", "Q_mu", "E_mu", "Y1_lower", "e1_upper", "R_per_pulse", "R_bps")

    def csv_row(self) -> tuple:
        return (
            self.user,
            self.length_km,
            self.observables.Q_mu,
            self.observables.E_mu,
            self.bounds.Y1_lower,
            self.bounds.e1_upper,
            self.R_per_pulse,
            self.R_bps,
        )


def binary_entropy(x: float) -> float:
    if not 0 <= x <= 1:
        raise ValueError(f"binary entropy needs x in [0, 1], got {x!r}")
    if x == 0 or x == 1:
        return 0.0
    return -x * math.log2(x) - (1 - x) * math.log2(1 - x)


def predict_observables(p: LinkParams, background: float = 0.0) -> DecoyObservables:
    """Gains and QBERs of the three classes.

    ``background`` is extra click probability per gate carrying random bits
    (inter-user leakage); it adds to the dark-count yield.
    """
    eta = system_transmittance(p)
    y0 = p.y0 + background
    mu, nu, _ = p.source.intensities

    def gain_err(k):
        signal = -math.expm1(-eta * k)
        q = y0 + signal
        e = (E0 * y0 + p.e_misalign * signal) / q if q > 0 else E0
        return q, e

    q_mu, e_mu = gain_err(mu)
    q_nu, e_nu = gain_err(nu)
    q_vac, _ = gain_err(p.source.vacuum)
    return DecoyObservables(q_mu, q_nu, q_vac, e_mu, e_nu, E0)


def decoy_bounds(obs: DecoyObservables, mu: float, nu: float) -> DecoyBounds:
    """Lower bound on Y1 and upper bound on e1 from vacuum + weak decoy."""
    if not mu > nu > 0:
        raise ValueError("need mu > nu > 0")
    y0 = obs.Q_vac
    y1 = (mu / (mu * nu - nu * nu)) * (
        obs.Q_nu * math.exp(nu)
        - obs.Q_mu * math.exp(mu) * (nu * nu) / (mu * mu)
        - ((mu * mu - nu * nu) / (mu * mu)) * y0
    )
    y1 = min(max(y1, 0.0), 1.0)
    if y1 <= 0:
        return DecoyBounds(y0, 0.0, E0, 0.0)
    e1 = (obs.E_nu * obs.Q_nu * math.exp(nu) - E0 * y0) / (y1 * nu)
    e1 = min(max(e1, 0.0), E0)
    return DecoyBounds(y0, y1, e1, y1 * mu * math.exp(-mu))


def secret_key_rate(
    obs: DecoyObservables,
    b: DecoyBounds,
    f_ec: float = F_EC,
    q_sift: float = Q_SIFT,
    p_signal: float = 0.5,
) -> float:
    """Key bits per emitted pulse (any class), clamped at zero."""
    if not b.secure:
        return 0.0
    r = p_signal * q_sift * (
        -obs.Q_mu * f_ec * binary_entropy(obs.E_mu) + b.Q1_lower * (1 - binary_entropy(b.e1_upper))
    )
    return max(r, 0.0)


def report_from_observables(
    p: LinkParams, obs: DecoyObservables, f_ec: float = F_EC, q_sift: float = Q_SIFT
) -> KeyRateReport:
    src = p.source
    bounds = decoy_bounds(obs, src.mu, src.nu)
    r = secret_key_rate(obs, bounds, f_ec, q_sift, src.probs[0])
    return KeyRateReport(
        user=p.user,
        length_km=p.channel.length_km,
        observables=obs,
        bounds=bounds,
        qber=obs.E_mu,
        R_per_pulse=r,
        R_bps=r * src.rep_rate_hz,
        f_ec=f_ec,
        q_sift=q_sift,
    )


def key_rate_report(p: LinkParams, background: float = 0.0, f_ec: float = F_EC) -> KeyRateReport:
    return report_from_observables(p, predict_observables(p, background), f_ec)


def dark_floor_qber(p: LinkParams) -> float:
    return predict_observables(replace(p, e_misalign=0.0)).E_mu


def calibrate_misalignment(target_qber: float, p: LinkParams, tol: float = 1e-12) -> float:
    """Misalignment that makes the signal-class QBER equal ``target_qber``."""
    if not 0 < target_qber <= 0.5:
        raise InfeasibleTarget(f"target QBER {target_qber!r} outside (0, 0.5]")

    def excess(e_d):
        return predict_observables(replace(p, e_misalign=e_d)).E_mu - target_qber

    lo, hi = excess(0.0), excess(0.5)
    if lo > 0:
        raise InfeasibleTarget(
            f"target QBER {target_qber:.6g} is below the dark-count floor {lo + target_qber:.6g}"
        )
    if lo == 0:
        return 0.0
    if hi < 0:
        raise InfeasibleTarget(f"target QBER {target_qber:.6g} exceeds the maximum {hi + target_qber:.6g}")
    return brentq(excess, 0.0, 0.5, xtol=tol, rtol=4 * np.finfo(float).eps)


def rate_vs_distance(p: LinkParams, distances_km) -> np.ndarray:
    return np.array([key_rate_report(p.at_length(float(L))).R_per_pulse for L in distances_km])


def optimize_intensities(p: LinkParams, mu_grid, nu_grid) -> tuple[float, float, float]:
    """Grid search for the (mu, nu) pair with the highest key rate."""
    best = (float("nan"), float("nan"), -1.0)
    for mu in mu_grid:
        for nu in nu_grid:
            if not mu > nu > 0:
                continue
            q = replace(p, source=replace(p.source, mu=float(mu), nu=float(nu)))
            r = key_rate_report(q).R_per_pulse
            if r > best[2]:
                best = (float(mu), float(nu), r)
    return best

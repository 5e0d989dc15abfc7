"""Four-user time-division-multiplexed receiver chip.

Each user's 2D grating coupler turns polarization into a pair of rails
(H -> upper, V -> lower). Eight MZI switches route exactly one user's rail
pair onto the passive BB84 measurement stage:

* MZI1/MZI2 merge the upper/lower rails of users 1 and 2 onto bank A,
  MZI3/MZI4 do the same for users 3 and 4 onto bank B. Phase pi (bar) passes
  the odd user, phase 0 (cross) the even one.
* MZI7/MZI8 gate bank B (pass at phase 0), MZI5/MZI6 merge bank A and the
  gated bank B onto the measurement rails (bank A at pi, bank B at 0).
* MMI1/MMI2 split each rail into a Z path and an X path; MMI3 interferes the
  two X paths after a fixed -pi/2 trim so that D exits at "+" and A at "-".

Register layout used for the full 12-mode network::

    0..7   user rails U1u U1l U2u U2l U3u U3l U4u U4l
    8, 9   vacuum inputs of MZI7 / MZI8 (their through ports)
    10, 11 vacuum inputs of MMI1 / MMI2 (become the X-basis paths)

Detector ports are modes 0 ("0"), 1 ("1"), 10 ("+") and 11 ("-").
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Sequence

import numpy as np

from .linear_optics import (
    TransferMatrix,
    cascade,
    db_to_linear,
    embed,
    mmi_matrix,
    phase_shifter,
    uniform_loss,
)

N_USERS = 4
N_MZI = 8
N_MODES = 12
DEFAULT_ER_DB = 30.0

_USER_RAILS = {1: (0, 1), 2: (2, 3), 3: (4, 5), 4: (6, 7)}
_DETECTOR_MODES = (0, 1, 10, 11)


class Polarization(enum.Enum):
    H = "H"
    V = "V"
    D = "D"
    A = "A"

    @property
    def amplitudes(self) -> tuple[complex, complex]:
        """(aH, aV) qubit amplitudes; the 2DGC sends these to (upper, lower)."""
        r = 1 / math.sqrt(2)
        return {"H": (1, 0), "V": (0, 1), "D": (r, r), "A": (r, -r)}[self.value]

    @classmethod
    def from_basis_bit(cls, basis: int, bit: int) -> "Polarization":
        """Basis 0 is Z (H/V), basis 1 is X (D/A); bit 0 is H or D."""
        return (cls.H, cls.V, cls.D, cls.A)[2 * basis + bit]


# index order matches Polarization.from_basis_bit
POLARIZATIONS = (Polarization.H, Polarization.V, Polarization.D, Polarization.A)


class DetectorOutcome(enum.IntEnum):
    ZERO = 1
    ONE = 2
    PLUS = 3
    MINUS = 4

    @property
    def basis(self) -> int:
        return 0 if self in (DetectorOutcome.ZERO, DetectorOutcome.ONE) else 1

    @property
    def bit(self) -> int:
        return 0 if self in (DetectorOutcome.ZERO, DetectorOutcome.PLUS) else 1

    @property
    def meaning(self) -> str:
        return {1: "0", 2: "1", 3: "+", 4: "-"}[int(self)]


@dataclass(frozen=True)
class MziSetting:
    phase: float = 0.0
    extinction_ratio_db: float = DEFAULT_ER_DB

    def __post_init__(self):
        if not math.isfinite(self.phase):
            raise ValueError("MZI phase must be finite")
        if not self.extinction_ratio_db >= 0:
            raise ValueError("extinction ratio must be >= 0 dB")


@dataclass(frozen=True)
class VoltagePhaseCal:
    """Thermo-optic heater calibration, phase = alpha * V**2."""

    alpha: float = math.pi / 4

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")


@dataclass(frozen=True)
class ReceiverConfig:
    mzi: tuple[MziSetting, ...] = field(default_factory=lambda: tuple(MziSetting() for _ in range(N_MZI)))
    loss_2dgc_db: float = 6.0
    loss_output_gc_db: float = 5.0
    loss_waveguide_db: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "mzi", tuple(self.mzi))
        if len(self.mzi) != N_MZI:
            raise ValueError(f"need {N_MZI} MZI settings, got {len(self.mzi)}")
        for name in ("loss_2dgc_db", "loss_output_gc_db", "loss_waveguide_db"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def total_loss_db(self) -> float:
        return self.loss_2dgc_db + self.loss_output_gc_db + self.loss_waveguide_db

    @property
    def phases(self) -> tuple[float, ...]:
        return tuple(s.phase for s in self.mzi)

    def with_extinction(self, er_db: float | Sequence[float]) -> "ReceiverConfig":
        ers = [er_db] * N_MZI if np.isscalar(er_db) else list(er_db)
        return replace(self, mzi=tuple(replace(s, extinction_ratio_db=float(e)) for s, e in zip(self.mzi, ers)))


def mzi_matrix(s: MziSetting) -> TransferMatrix:
    """MMI . diag(exp(i phi), 1) . MMI with a finite-extinction power floor.

    The ideal device is ``i exp(i phi/2) [[s, c], [c, -s]]`` with
    ``s = sin(phi/2)``, ``c = cos(phi/2)``: phi = pi is the bar state,
    phi = 0 the cross state. The weaker of the two split powers is floored at
    ``10**(-ER/10)``; the real reflection form keeps the matrix unitary.
    """
    half = s.phase / 2
    sn, cs = math.sin(half), math.cos(half)
    floor = db_to_linear(s.extinction_ratio_db)
    bar_power = min(max(sn * sn, floor), 1 - floor)
    sn = math.copysign(math.sqrt(bar_power), sn)
    cs = math.copysign(math.sqrt(1 - bar_power), cs)
    g = 1j * np.exp(1j * half)
    return TransferMatrix(g * np.array([[sn, cs], [cs, -sn]]))


def mzi_bar_transmission(s: MziSetting) -> float:
    return float(abs(mzi_matrix(s).entries[0, 0]) ** 2)


def phase_from_voltage(cal: VoltagePhaseCal, v: float) -> float:
    if v < 0:
        raise ValueError("heater voltage must be >= 0")
    return (cal.alpha * v * v) % (2 * math.pi)


def transmission_curve(cal: VoltagePhaseCal, voltages, er_db: float = DEFAULT_ER_DB) -> np.ndarray:
    """Bar-port power of one MZI across a heater-voltage sweep."""
    return np.array(
        [mzi_bar_transmission(MziSetting(phase_from_voltage(cal, v), er_db)) for v in voltages]
    )


# phase of MZI1..MZI8 that routes each user to the measurement stage;
# the idle stage-1 pair sits at pi (passes the odd user of that bank, which
# stage 2 then blocks)
_ROUTING_PHASES = {
    1: (math.pi, math.pi, math.pi, math.pi, math.pi, math.pi, math.pi, math.pi),
    2: (0.0, 0.0, math.pi, math.pi, math.pi, math.pi, math.pi, math.pi),
    3: (math.pi, math.pi, math.pi, math.pi, 0.0, 0.0, 0.0, 0.0),
    4: (math.pi, math.pi, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0),
}


def _check_user(user: int) -> int:
    if user not in _USER_RAILS:
        raise ValueError(f"user must be one of 1..{N_USERS}, got {user!r}")
    return user


def routing_config(user: int, er_db: float | Sequence[float] = DEFAULT_ER_DB, **losses) -> ReceiverConfig:
    """Switch table selecting ``user``; ``er_db`` may be per-MZI."""
    phases = _ROUTING_PHASES[_check_user(user)]
    ers = [er_db] * N_MZI if np.isscalar(er_db) else list(er_db)
    if len(ers) != N_MZI:
        raise ValueError("per-MZI extinction list must have 8 entries")
    return ReceiverConfig(mzi=tuple(MziSetting(p, float(e)) for p, e in zip(phases, ers)), **losses)


def selected_user(cfg: ReceiverConfig) -> int:
    """User with the largest power transmission under ``cfg``."""
    return 1 + int(np.argmax([user_transmission(cfg, u) for u in range(1, N_USERS + 1)]))


@lru_cache(maxsize=256)
def network_matrix(cfg: ReceiverConfig) -> TransferMatrix:
    """4x8 map from all user rails to the four detector ports."""
    n = N_MODES
    mzi = [mzi_matrix(s) for s in cfg.mzi]
    mmi = mmi_matrix()
    full = cascade(
        uniform_loss(n, cfg.loss_2dgc_db),
        embed(mzi[0], (0, 2), n),
        embed(mzi[1], (1, 3), n),
        embed(mzi[2], (4, 6), n),
        embed(mzi[3], (5, 7), n),
        embed(mzi[6], (4, 8), n),
        embed(mzi[7], (5, 9), n),
        embed(mzi[4], (0, 8), n),
        embed(mzi[5], (1, 9), n),
        uniform_loss(n, cfg.loss_waveguide_db),
        embed(mmi, (0, 10), n),
        embed(mmi, (1, 11), n),
        embed(phase_shifter([0.0, -math.pi / 2]), (10, 11), n),
        embed(mmi, (10, 11), n),
        uniform_loss(n, cfg.loss_output_gc_db),
    )
    return TransferMatrix(full.entries[np.ix_(_DETECTOR_MODES, range(8))])


def chip_transfer(cfg: ReceiverConfig, input_user: int) -> TransferMatrix:
    """4x2 map from one user's (upper, lower) rails to detectors 1..4."""
    rails = _USER_RAILS[_check_user(input_user)]
    return TransferMatrix(network_matrix(cfg).entries[:, rails])


def user_transmission(cfg: ReceiverConfig, user: int) -> float:
    """Polarization-averaged power reaching any detector from ``user``."""
    return float(np.mean(chip_transfer(cfg, user).column_powers()))


def detection_distribution(cfg: ReceiverConfig, user: int, pol: Polarization) -> np.ndarray:
    """Single-photon outcome probabilities ``[det1, det2, det3, det4, no-click]``."""
    out = chip_transfer(cfg, user).entries @ np.asarray(pol.amplitudes, dtype=complex)
    p = np.abs(out) ** 2
    return np.append(p, max(0.0, 1.0 - p.sum()))


@lru_cache(maxsize=256)
def detection_table(cfg: ReceiverConfig, user: int) -> np.ndarray:
    """4x5 array of :func:`detection_distribution` rows in H, V, D, A order."""
    table = np.array([detection_distribution(cfg, user, pol) for pol in POLARIZATIONS])
    table.setflags(write=False)
    return table


def voltage_for_phase(cal: VoltagePhaseCal, phase: float) -> float:
    """Smallest heater voltage giving ``phase`` (mod 2 pi)."""
    return math.sqrt((phase % (2 * math.pi)) / cal.alpha)


def heater_voltages(cfg: ReceiverConfig, cals: Sequence[VoltagePhaseCal]) -> tuple[float, ...]:
    if len(cals) != N_MZI:
        raise ValueError(f"need {N_MZI} calibrations")
    return tuple(voltage_for_phase(c, s.phase) for c, s in zip(cals, cfg.mzi))

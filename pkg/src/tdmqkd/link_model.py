"""Off-chip link: decoy source, attenuator channel, detectors."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from .chip_model import ReceiverConfig, routing_config, user_transmission
from .linear_optics import db_to_linear

INTENSITY_CLASSES = ("signal", "decoy", "vacuum")
N_DETECTORS = 4


@dataclass(frozen=True)
class SourceParams:
    rep_rate_hz: float = 1e7
    mu: float = 0.6
    nu: float = 0.15
    vacuum: float = 0.0
    probs: tuple[float, float, float] = (0.5, 0.25, 0.25)

    def __post_init__(self):
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        if len(self.probs) != 3 or any(p < 0 for p in self.probs):
            raise ValueError("need three non-negative class probabilities")
        if abs(sum(self.probs) - 1) > 1e-9:
            raise ValueError(f"class probabilities sum to {sum(self.probs)}, not 1")
        if not (self.mu > self.nu >= self.vacuum >= 0):
            raise ValueError("need mu > nu >= vacuum >= 0")
        if not self.rep_rate_hz > 0:
            raise ValueError("rep_rate_hz must be positive")

    @property
    def intensities(self) -> tuple[float, float, float]:
        return (self.mu, self.nu, self.vacuum)

    @property
    def mean_intensity(self) -> float:
        """Class-averaged mean photon number (0.3375 at defaults)."""
        return sum(p * k for p, k in zip(self.probs, self.intensities))


@dataclass(frozen=True)
class ChannelParams:
    length_km: float = 0.0
    atten_db_per_km: float = 0.2

    def __post_init__(self):
        if self.length_km < 0 or self.atten_db_per_km < 0:
            raise ValueError("channel length and attenuation must be >= 0")

    @property
    def loss_db(self) -> float:
        return self.length_km * self.atten_db_per_km

    @property
    def transmittance(self) -> float:
        return db_to_linear(self.loss_db)


@dataclass(frozen=True)
class DetectorParams:
    """Threshold SPD bank.

    ``dark_rate_cps`` is per detector. The default 30 cps per SPD reproduces
    the ~120 counts/s of the four-detector set.
    """

    efficiency: float = 0.8
    dark_rate_cps: float = 30.0
    gate_s: float = 1e-7

    def __post_init__(self):
        if not 0 <= self.efficiency <= 1:
            raise ValueError("efficiency must lie in [0, 1]")
        if self.dark_rate_cps < 0 or self.gate_s <= 0:
            raise ValueError("dark rate must be >= 0 and gate > 0")
        if self.dark_prob >= 1:
            raise ValueError("dark count probability per gate must be < 1")

    @property
    def dark_prob(self) -> float:
        return self.dark_rate_cps * self.gate_s


def dark_prob_per_gate(d: DetectorParams, n_detectors: int = N_DETECTORS) -> float:
    """Probability that at least one of ``n_detectors`` fires a dark count."""
    if n_detectors < 1:
        raise ValueError("need at least one detector")
    p = d.dark_rate_cps * d.gate_s
    if p >= 1:
        raise ValueError(f"dark probability per gate {p} >= 1")
    return 1 - (1 - p) ** n_detectors


@dataclass(frozen=True)
class LinkParams:
    """One transmitter-to-receiver link with the chip routed to ``user``.

    ``receiver`` defaults to ``routing_config(user)``; ``extra_loss_db`` is an
    optional per-user path loss on top of the chip budget.
    """

    source: SourceParams = field(default_factory=SourceParams)
    channel: ChannelParams = field(default_factory=ChannelParams)
    receiver: ReceiverConfig | None = None
    detectors: DetectorParams = field(default_factory=DetectorParams)
    e_misalign: float = 0.0
    user: int = 1
    extra_loss_db: float = 0.0

    def __post_init__(self):
        if self.receiver is None:
            object.__setattr__(self, "receiver", routing_config(self.user))
        if not 0 <= self.e_misalign <= 0.5:
            raise ValueError("e_misalign must lie in [0, 0.5]")
        if self.extra_loss_db < 0:
            raise ValueError("extra_loss_db must be >= 0")

    def at_length(self, length_km: float) -> "LinkParams":
        return replace(self, channel=replace(self.channel, length_km=length_km))

    def routed(self, user: int, er_db: float | None = None) -> "LinkParams":
        """Same link, chip re-routed to ``user`` keeping losses (and ER unless given)."""
        r = self.receiver
        cfg = routing_config(
            user,
            [s.extinction_ratio_db for s in r.mzi] if er_db is None else er_db,
            loss_2dgc_db=r.loss_2dgc_db,
            loss_output_gc_db=r.loss_output_gc_db,
            loss_waveguide_db=r.loss_waveguide_db,
        )
        return replace(self, user=user, receiver=cfg)

    @property
    def y0(self) -> float:
        return dark_prob_per_gate(self.detectors, N_DETECTORS)


def off_chip_transmittance(p: LinkParams) -> float:
    """Channel, per-user extra loss and detector efficiency (no chip)."""
    return p.channel.transmittance * db_to_linear(p.extra_loss_db) * p.detectors.efficiency


def system_transmittance(p: LinkParams, user: int | None = None) -> float:
    """Overall single-photon detection probability for ``user`` (default: the link's)."""
    u = p.user if user is None else user
    return off_chip_transmittance(p) * user_transmission(p.receiver, u)


def click_probability(p: LinkParams, intensity: float, background: float = 0.0) -> float:
    """Gain ``Y0 + 1 - exp(-eta*intensity)`` for a Poissonian pulse."""
    if intensity < 0:
        raise ValueError("intensity must be >= 0")
    eta = system_transmittance(p)
    return p.y0 + background - math.expm1(-eta * intensity)

"""One receiver shared by four users in time slots, plus the crosstalk study."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .chip_model import DEFAULT_ER_DB, N_USERS
from .decoy_bb84 import F_EC, KeyRateReport, calibrate_misalignment, key_rate_report, report_from_observables
from .link_model import LinkParams, system_transmittance
from .linear_optics import db_to_linear
from .sim_engine import simulate, tallies_to_observables

MODES = ("analytic", "montecarlo")


@dataclass(frozen=True)
class Schedule:
    """Repeating cycle of ``(user, duration_pulses)`` slots.

    Every change of user between consecutive slots (cyclically) costs
    ``reconfig_dead_pulses`` clock cycles while the heaters settle.
    """

    slots: tuple[tuple[int, int], ...]
    reconfig_dead_pulses: int = 0

    def __post_init__(self):
        slots = tuple((int(u), int(d)) for u, d in self.slots)
        object.__setattr__(self, "slots", slots)
        if not slots:
            raise ValueError("schedule needs at least one slot")
        for u, d in slots:
            if u not in range(1, N_USERS + 1):
                raise ValueError(f"slot user {u} outside 1..{N_USERS}")
            if d < 1:
                raise ValueError("slot durations must be >= 1 pulse")
        if self.reconfig_dead_pulses < 0:
            raise ValueError("reconfig_dead_pulses must be >= 0")

    @classmethod
    def round_robin(cls, users: Sequence[int] = (1, 2, 3, 4), duration: int = 1_000_000, dead: int = 0):
        return cls(tuple((u, duration) for u in users), dead)

    @property
    def n_switches(self) -> int:
        if len(self.slots) == 1:
            return 0
        users = [u for u, _ in self.slots]
        return sum(a != b for a, b in zip(users, users[1:] + users[:1]))

    @property
    def cycle_pulses(self) -> int:
        return sum(d for _, d in self.slots) + self.n_switches * self.reconfig_dead_pulses

    def pulses_for(self, user: int) -> int:
        return sum(d for u, d in self.slots if u == user)

    def time_share(self, user: int) -> float:
        return self.pulses_for(user) / self.cycle_pulses

    @property
    def dead_share(self) -> float:
        return self.n_switches * self.reconfig_dead_pulses / self.cycle_pulses

    @property
    def users(self) -> tuple[int, ...]:
        return tuple(sorted({u for u, _ in self.slots}))


@dataclass(frozen=True)
class CrosstalkScenario:
    selected_user: int
    active_users: frozenset[int]

    def __post_init__(self):
        active = frozenset(int(u) for u in self.active_users)
        object.__setattr__(self, "active_users", active)
        if self.selected_user not in active:
            raise ValueError("selected user must be active")
        if not active <= set(range(1, N_USERS + 1)):
            raise ValueError(f"active users must lie in 1..{N_USERS}")

    @property
    def interferers(self) -> tuple[int, ...]:
        return tuple(sorted(self.active_users - {self.selected_user}))

    @property
    def label(self) -> str:
        return "{" + ",".join(str(u) for u in sorted(self.active_users)) + "}"


@dataclass
class NetworkReport:
    reports: dict[int, KeyRateReport] = field(default_factory=dict)
    time_shares: dict[int, float] = field(default_factory=dict)
    effective_bps: dict[int, float] = field(default_factory=dict)
    schedule_efficiency: float = 1.0
    crosstalk: dict[frozenset, tuple[float, float]] = field(default_factory=dict)

    @property
    def total_bps(self) -> float:
        return sum(self.effective_bps.values())


def _standalone(p: LinkParams, mode: str, n_pulses: int, seed: int, stream_key=(), workers: int = 1):
    if mode == "analytic":
        return key_rate_report(p)
    if mode == "montecarlo":
        t = simulate(p, n_pulses, seed, stream_key=stream_key, workers=workers)
        return report_from_observables(p, tallies_to_observables(t, p.user))
    raise ValueError(f"mode must be one of {MODES}, got {mode!r}")


def run_schedule(
    s: Schedule,
    params: Mapping[int, LinkParams],
    mode: str = "analytic",
    *,
    cycles: int = 1,
    seed: int = 0,
    workers: int = 1,
) -> NetworkReport:
    """Per-user key rates with each user's per-second rate scaled by its time share.

    In Monte Carlo mode user ``u`` is simulated for ``cycles * pulses_for(u)``
    pulses on stream key ``(u,)``.
    """
    out = NetworkReport(schedule_efficiency=1.0 - s.dead_share)
    for u in s.users:
        p = params[u]
        if p.user != u:
            p = p.routed(u)
        rep = _standalone(p, mode, cycles * s.pulses_for(u), seed, (u,), workers)
        share = s.time_share(u)
        out.reports[u] = rep
        out.time_shares[u] = share
        out.effective_bps[u] = rep.R_bps * share
    return out


def leakage_yield(p: LinkParams, n_interferers: int, er_db: float) -> float:
    """Background click probability from ``n_interferers`` leaking users."""
    eps = db_to_linear(er_db)
    eta = system_transmittance(p)
    return n_interferers * -math.expm1(-eta * eps * p.source.mean_intensity)


def crosstalk_run(
    sc: CrosstalkScenario,
    params: LinkParams,
    er_db: float = DEFAULT_ER_DB,
    mode: str = "analytic",
    *,
    n_pulses: int = 10**7,
    seed: int = 0,
    stream_key: Sequence[int] = (),
    workers: int = 1,
    f_ec: float = F_EC,
) -> tuple[float, float]:
    """``(R_per_pulse, qber)`` for the selected user while others also transmit."""
    p = params.routed(sc.selected_user, er_db)
    if mode == "analytic":
        rep = key_rate_report(p, background=leakage_yield(p, len(sc.interferers), er_db), f_ec=f_ec)
    elif mode == "montecarlo":
        t = simulate(p, n_pulses, seed, interferers=sc.interferers, stream_key=stream_key, workers=workers)
        rep = report_from_observables(p, tallies_to_observables(t, sc.selected_user), f_ec)
    else:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return rep.R_per_pulse, rep.qber


def interferer_order(selected: int) -> list[int]:
    """Other users, nearest index first (4 -> 3, 2, 1)."""
    return sorted((u for u in range(1, N_USERS + 1) if u != selected), key=lambda u: (abs(u - selected), u))


def crosstalk_scenarios(selected: int = 4) -> list[CrosstalkScenario]:
    active = [selected]
    out = [CrosstalkScenario(selected, frozenset(active))]
    for u in interferer_order(selected):
        active.append(u)
        out.append(CrosstalkScenario(selected, frozenset(active)))
    return out


def crosstalk_table(
    params: LinkParams, selected: int = 4, er_db: float = DEFAULT_ER_DB, mode: str = "analytic", **kw
) -> list[tuple[CrosstalkScenario, float, float]]:
    rows = []
    for i, sc in enumerate(crosstalk_scenarios(selected)):
        extra = {"stream_key": (i,)} if mode == "montecarlo" else {}
        r, q = crosstalk_run(sc, params, er_db, mode, **kw, **extra)
        rows.append((sc, r, q))
    return rows


def calibrated(params: LinkParams, target_qber: float) -> LinkParams:
    return replace(params, e_misalign=calibrate_misalignment(target_qber, params))

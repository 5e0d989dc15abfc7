"""Run configuration: YAML file <-> :class:`RunConfig`."""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any

import numpy as np
import yaml

from .chip_model import DEFAULT_ER_DB, N_MZI, N_USERS, routing_config
from .link_model import ChannelParams, DetectorParams, LinkParams, SourceParams

# measured per-user values at 20 km, users 1..4 (QBER, key bits per pulse)
MEASURED_QBER_20KM = {1: 0.005205, 2: 0.005353, 3: 0.006185, 4: 0.003559}
MEASURED_RATE_20KM = {1: 0.001205, 2: 0.001397, 3: 0.001339, 4: 0.001529}
CROSSTALK_QBER = (0.0036, 0.0050, 0.0053, 0.0056)
CROSSTALK_RATE = (0.001489, 0.001443, 0.001426, 0.001417)
AVERAGE_RATE_BPS = 13.68e3

OUT_ENV = "TDMQKD_OUT"

PROVENANCE = {
    "source.rep_rate_hz": "reported: pulsed laser repetition rate, 10 MHz",
    "source.mu": "reported: signal mean photon number 0.6",
    "source.nu": "reported: weak decoy mean photon number 0.15",
    "source.vacuum": "reported: vacuum decoy",
    "source.probs": "reported: class probabilities 0.5 / 0.25 / 0.25",
    "channel.atten_db_per_km": "reported: standard fiber 0.2 dB/km emulated by an attenuator",
    "detectors.efficiency": "reported: SNSPD efficiency ~80% at 1550 nm",
    "detectors.dark_rate_cps": "reported ~120 counts/s for the detector set, split over 4 SPDs",
    "detectors.gate_s": "assumption: full 100 ns clock period as the dark-count window",
    "chip.loss_2dgc_db": "reported: 2D grating coupler loss 6 dB",
    "chip.loss_output_gc_db": "reported: output grating coupler loss 5 dB",
    "chip.loss_waveguide_db": "reported: on-chip waveguide loss 2 dB",
    "chip.er_db": "reported: MZI extinction ratios above 30 dB",
    "analysis.f_ec": "reported: error-correction efficiency 1.16",
    "users.target_qber": "reported: per-user QBER at 20 km",
    "crosstalk.baseline_qber": "reported: single-user QBER 0.36% in the crosstalk series",
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ChipSpec:
    loss_2dgc_db: float = 6.0
    loss_output_gc_db: float = 5.0
    loss_waveguide_db: float = 2.0
    er_db: float = DEFAULT_ER_DB
    er_db_per_mzi: tuple[float, ...] | None = None
    alpha_rad_per_v2: tuple[float, ...] | None = None

    def extinction(self, er_db: float | None = None):
        if er_db is not None:
            return er_db
        return self.er_db_per_mzi if self.er_db_per_mzi is not None else self.er_db


@dataclass(frozen=True)
class UserSpec:
    target_qber: float | None = None
    e_misalign: float | None = None
    loss_offset_db: float = 0.0


@dataclass(frozen=True)
class SweepSpec:
    distances_km: tuple[float, ...] | None = None
    min_km: float | None = None
    max_km: float | None = None
    step_km: float | None = None

    def distances(self) -> list[float]:
        if self.distances_km is not None:
            return [float(d) for d in self.distances_km]
        n = int(math.floor((self.max_km - self.min_km) / self.step_km + 1e-9))
        return [float(x) for x in np.round(self.min_km + self.step_km * np.arange(n + 1), 12)]


@dataclass(frozen=True)
class ModeSpec:
    kind: str = "analytic"
    n_pulses: int = 10**7
    seed: int = 1
    workers: int = 1


@dataclass(frozen=True)
class CrosstalkSpec:
    selected_user: int = 4
    length_km: float = 20.0
    er_db: float = DEFAULT_ER_DB
    baseline_qber: float | None = 0.0036


@dataclass(frozen=True)
class RunConfig:
    source: SourceParams = field(default_factory=SourceParams)
    atten_db_per_km: float = 0.2
    detectors: DetectorParams = field(default_factory=DetectorParams)
    chip: ChipSpec = field(default_factory=ChipSpec)
    f_ec: float = 1.16
    users: dict[int, UserSpec] = field(
        default_factory=lambda: {u: UserSpec(target_qber=q) for u, q in MEASURED_QBER_20KM.items()}
    )
    calibration_length_km: float = 20.0
    sweep: SweepSpec = field(default_factory=lambda: SweepSpec(min_km=0.0, max_km=150.0, step_km=5.0))
    crosstalk: CrosstalkSpec = field(default_factory=CrosstalkSpec)
    mode: ModeSpec = field(default_factory=ModeSpec)
    output_dir: str = "tdmqkd_out"

    def link_params(self, user: int, length_km: float = 0.0, e_misalign: float = 0.0,
                    er_db: float | None = None) -> LinkParams:
        c = self.chip
        receiver = routing_config(
            user,
            c.extinction(er_db),
            loss_2dgc_db=c.loss_2dgc_db,
            loss_output_gc_db=c.loss_output_gc_db,
            loss_waveguide_db=c.loss_waveguide_db,
        )
        spec = self.users.get(user, UserSpec())
        return LinkParams(
            source=self.source,
            channel=ChannelParams(length_km, self.atten_db_per_km),
            receiver=receiver,
            detectors=self.detectors,
            e_misalign=e_misalign,
            user=user,
            extra_loss_db=spec.loss_offset_db,
        )

    def config_hash(self) -> str:
        return hashlib.sha256(dump_config(self).encode()).hexdigest()[:16]


def _tuple_or_none(x):
    return None if x is None else tuple(float(v) for v in x)


def _section(data: dict, name: str) -> dict:
    sec = data.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"section '{name}' must be a mapping")
    return sec


def _build(cls, values: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(sorted(map(str, unknown)))}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def config_from_dict(data: dict[str, Any]) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at top level")
    allowed = {"link", "analysis", "users", "calibration_length_km", "sweep", "crosstalk", "mode", "output_dir"}
    extra = set(data) - allowed
    if extra:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(map(str, extra)))}")
    link = _section(data, "link")
    src = dict(_section(link, "source"))
    if "probs" in src:
        src["probs"] = tuple(src["probs"])
    source = _build(SourceParams, src, "link.source")
    channel = _section(link, "channel")
    atten = float(channel.get("atten_db_per_km", 0.2))
    if set(channel) - {"atten_db_per_km"}:
        raise ConfigError("link.channel only accepts atten_db_per_km (lengths come from the sweep)")
    detectors = _build(DetectorParams, _section(link, "detectors"), "link.detectors")
    chip_d = dict(_section(link, "chip"))
    for key in ("er_db_per_mzi", "alpha_rad_per_v2"):
        if key in chip_d:
            chip_d[key] = _tuple_or_none(chip_d[key])
            if chip_d[key] is not None and len(chip_d[key]) != N_MZI:
                raise ConfigError(f"link.chip.{key} needs {N_MZI} entries")
    chip = _build(ChipSpec, chip_d, "link.chip")
    if min(chip.loss_2dgc_db, chip.loss_output_gc_db, chip.loss_waveguide_db, chip.er_db) < 0:
        raise ConfigError("chip losses and extinction ratio must be >= 0")

    analysis = _section(data, "analysis")
    f_ec = float(analysis.get("f_ec", 1.16))
    if f_ec < 1:
        raise ConfigError("analysis.f_ec must be >= 1")

    users = {}
    raw_users = data.get("users")
    if raw_users is None:
        users = RunConfig().users
    else:
        if not isinstance(raw_users, dict):
            raise ConfigError("users must map user index to overrides")
        for k, v in raw_users.items():
            u = int(k)
            if u not in range(1, N_USERS + 1):
                raise ConfigError(f"users: index {k} outside 1..{N_USERS}")
            spec = _build(UserSpec, v or {}, f"users.{u}")
            if spec.e_misalign is not None and not 0 <= spec.e_misalign <= 0.5:
                raise ConfigError(f"users.{u}.e_misalign must lie in [0, 0.5]")
            if spec.loss_offset_db < 0:
                raise ConfigError(f"users.{u}.loss_offset_db must be >= 0")
            users[u] = spec
        if not users:
            raise ConfigError("users must list at least one user")

    sw = dict(_section(data, "sweep")) or asdict(RunConfig().sweep)
    if sw.get("distances_km") is not None:
        sw["distances_km"] = _tuple_or_none(sw["distances_km"])
    sweep = _build(SweepSpec, sw, "sweep")
    _validate_sweep(sweep)

    crosstalk = _build(CrosstalkSpec, _section(data, "crosstalk"), "crosstalk")
    if crosstalk.selected_user not in range(1, N_USERS + 1):
        raise ConfigError("crosstalk.selected_user must be 1..4")
    if crosstalk.length_km < 0 or crosstalk.er_db < 0:
        raise ConfigError("crosstalk.length_km and crosstalk.er_db must be >= 0")

    mode = _build(ModeSpec, _section(data, "mode"), "mode")
    if mode.kind not in ("analytic", "montecarlo"):
        raise ConfigError("mode.kind must be 'analytic' or 'montecarlo'")
    if mode.n_pulses < 1 or mode.workers < 1 or not 0 <= mode.seed < 2**64:
        raise ConfigError("mode needs n_pulses >= 1, workers >= 1 and 0 <= seed < 2**64")

    cal_len = float(data.get("calibration_length_km", 20.0))
    if cal_len < 0:
        raise ConfigError("calibration_length_km must be >= 0")
    return RunConfig(
        source=source,
        atten_db_per_km=atten,
        detectors=detectors,
        chip=chip,
        f_ec=f_ec,
        users=users,
        calibration_length_km=cal_len,
        sweep=sweep,
        crosstalk=crosstalk,
        mode=mode,
        output_dir=str(data.get("output_dir", "tdmqkd_out")),
    )


def _validate_sweep(s: SweepSpec):
    if s.distances_km is not None:
        if len(s.distances_km) == 0:
            raise ConfigError("sweep.distances_km is empty")
        if any(d < 0 for d in s.distances_km):
            raise ConfigError("sweep distances must be >= 0")
        return
    if None in (s.min_km, s.max_km, s.step_km):
        raise ConfigError("sweep needs distances_km or all of min_km/max_km/step_km")
    if s.step_km <= 0:
        raise ConfigError("sweep.step_km must be > 0")
    if s.min_km < 0 or s.max_km < s.min_km:
        raise ConfigError("sweep needs 0 <= min_km <= max_km")


def config_to_dict(cfg: RunConfig) -> dict[str, Any]:
    def listify(x):
        return None if x is None else list(x)

    src = asdict(cfg.source)
    src["probs"] = list(cfg.source.probs)
    chip = asdict(cfg.chip)
    chip["er_db_per_mzi"] = listify(cfg.chip.er_db_per_mzi)
    chip["alpha_rad_per_v2"] = listify(cfg.chip.alpha_rad_per_v2)
    sweep = asdict(cfg.sweep)
    sweep["distances_km"] = listify(cfg.sweep.distances_km)
    return {
        "link": {
            "source": src,
            "channel": {"atten_db_per_km": cfg.atten_db_per_km},
            "detectors": asdict(cfg.detectors),
            "chip": chip,
        },
        "analysis": {"f_ec": cfg.f_ec},
        "users": {u: asdict(s) for u, s in sorted(cfg.users.items())},
        "calibration_length_km": cfg.calibration_length_km,
        "sweep": sweep,
        "crosstalk": asdict(cfg.crosstalk),
        "mode": asdict(cfg.mode),
        "output_dir": cfg.output_dir,
    }


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False, default_flow_style=False)


def parse_config(text: str) -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    return config_from_dict(data or {})


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None


def with_overrides(cfg: RunConfig, *, seed=None, pulses=None, workers=None, kind=None) -> RunConfig:
    mode = cfg.mode
    if seed is not None:
        mode = replace(mode, seed=int(seed))
    if pulses is not None:
        mode = replace(mode, n_pulses=int(pulses))
    if workers is not None:
        mode = replace(mode, workers=int(workers))
    if kind is not None:
        mode = replace(mode, kind=kind)
    if mode.n_pulses < 1 or mode.workers < 1 or not 0 <= mode.seed < 2**64:
        raise ConfigError("need pulses >= 1, workers >= 1 and 0 <= seed < 2**64")
    return replace(cfg, mode=mode)

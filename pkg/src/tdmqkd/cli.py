"""Command-line front end.

Subcommands ``sweep``, ``montecarlo`` (sweep with Monte Carlo mode),
``crosstalk``, ``calibrate`` and ``init-config``.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .chip_model import VoltagePhaseCal, heater_voltages
from .config import (
    CROSSTALK_QBER,
    CROSSTALK_RATE,
    MEASURED_RATE_20KM,
    OUT_ENV,
    PROVENANCE,
    ConfigError,
    RunConfig,
    dump_config,
    load_config,
    with_overrides,
)
from .decoy_bb84 import (
    InfeasibleTarget,
    KeyRateReport,
    calibrate_misalignment,
    key_rate_report,
    predict_observables,
    report_from_observables,
)
from .reporting import (
    RunDirLock,
    render_crosstalk_figure,
    render_sweep_figure,
    write_crosstalk_gnuplot,
    write_csv,
    write_json,
    write_sweep_gnuplot,
)
from .sim_engine import RNG_NAME, DEFAULT_BATCH, simulate, tallies_to_observables
from .tdm_network import crosstalk_table

log = logging.getLogger("tdmqkd")

CROSSTALK_HEADER = ("active_set", "R_per_pulse", "qber")
CALIBRATION_HEADER = ("user", "target_qber", "e_misalign", "forward_qber", "status")
STREAM_KEYS = {
    "sweep": "(user, distance_index, batch)",
    "crosstalk": "(scenario_index, batch)",
    "calibrate": "unused",
}


def _misalignments(cfg: RunConfig) -> dict[int, float]:
    """Configured e_misalign, or calibrated to the user's target QBER."""
    out = {}
    for u, spec in sorted(cfg.users.items()):
        if spec.e_misalign is not None:
            out[u] = spec.e_misalign
        elif spec.target_qber is not None:
            p = cfg.link_params(u, cfg.calibration_length_km)
            try:
                out[u] = calibrate_misalignment(spec.target_qber, p)
            except InfeasibleTarget as exc:
                raise ConfigError(f"user {u}: {exc}") from None
        else:
            out[u] = 0.0
    return out


def _metadata(cfg: RunConfig, command: str, extra: dict) -> dict:
    meta = {
        "command": command,
        "tdmqkd_version": __version__,
        "config_hash": cfg.config_hash(),
        "mode": cfg.mode.kind,
        "parameters": {
            "source": vars(cfg.source),
            "atten_db_per_km": cfg.atten_db_per_km,
            "detectors": vars(cfg.detectors),
            "chip": vars(cfg.chip),
            "f_ec": cfg.f_ec,
        },
        "provenance": PROVENANCE,
    }
    if cfg.mode.kind == "montecarlo":
        meta["montecarlo"] = {
            "seed": cfg.mode.seed,
            "n_pulses": cfg.mode.n_pulses,
            "batch_size": DEFAULT_BATCH,
            "rng": RNG_NAME,
            "stream_key": STREAM_KEYS[command],
        }
    if cfg.chip.alpha_rad_per_v2 is not None:
        cals = [VoltagePhaseCal(a) for a in cfg.chip.alpha_rad_per_v2]
        meta["heater_voltages"] = {
            u: list(heater_voltages(cfg.link_params(u).receiver, cals)) for u in range(1, 5)
        }
    meta.update(extra)
    return meta


def _mc_point(args) -> KeyRateReport:
    p, n, seed, key, f_ec = args
    t = simulate(p, n, seed, stream_key=key)
    return report_from_observables(p, tallies_to_observables(t, p.user), f_ec)


def sweep_reports(cfg: RunConfig) -> dict[int, list[KeyRateReport]]:
    """Key-rate reports per user over the configured distances."""
    distances = cfg.sweep.distances()
    e_d = _misalignments(cfg)
    out: dict[int, list[KeyRateReport]] = {}
    if cfg.mode.kind == "analytic":
        for u in sorted(cfg.users):
            base = cfg.link_params(u, e_misalign=e_d[u])
            out[u] = [key_rate_report(base.at_length(L), f_ec=cfg.f_ec) for L in distances]
        return out
    jobs = []
    for u in sorted(cfg.users):
        base = cfg.link_params(u, e_misalign=e_d[u])
        for i, L in enumerate(distances):
            jobs.append((base.at_length(L), cfg.mode.n_pulses, cfg.mode.seed, (u, i), cfg.f_ec))
    if cfg.mode.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.mode.workers) as pool:
            results = list(pool.map(_mc_point, jobs))
    else:
        results = [_mc_point(j) for j in jobs]
    for job, rep in zip(jobs, results):
        out.setdefault(job[3][0], []).append(rep)
    return out


def cmd_sweep(cfg: RunConfig, out_dir: Path, figures: bool = True) -> dict:
    reports = sweep_reports(cfg)
    names = {}
    for u, reps in reports.items():
        names[u] = f"sweep_user{u}.csv"
        write_csv(out_dir / names[u], KeyRateReport.CSV_HEADER, [r.csv_row() for r in reps])
    write_sweep_gnuplot(out_dir / "sweep.gp", names)
    if figures:
        series = {
            u: (np.array([r.length_km for r in reps]), np.array([r.R_per_pulse for r in reps]),
                np.array([r.qber for r in reps]))
            for u, reps in reports.items()
        }
        cal_L = cfg.calibration_length_km
        ref = {u: (cal_L, MEASURED_RATE_20KM[u], cfg.users[u].target_qber) for u in reports
               if cfg.users[u].target_qber is not None}
        render_sweep_figure(out_dir / "sweep.png", series, ref)
    write_json(out_dir / "sweep_metadata.json", _metadata(cfg, "sweep", {
        "outputs": sorted(names.values()) + ["sweep.gp"] + (["sweep.png"] if figures else []),
        "e_misalign": _misalignments(cfg),
        "distances_km": cfg.sweep.distances(),
    }))
    return reports


def crosstalk_rows(cfg: RunConfig):
    xt = cfg.crosstalk
    p = cfg.link_params(xt.selected_user, xt.length_km, er_db=xt.er_db)
    if xt.baseline_qber is not None:
        e_d = calibrate_misalignment(xt.baseline_qber, p)
    else:
        e_d = _misalignments(cfg).get(xt.selected_user, 0.0)
    p = replace(p, e_misalign=e_d)
    kw = {"f_ec": cfg.f_ec}
    if cfg.mode.kind == "montecarlo":
        kw |= {"n_pulses": cfg.mode.n_pulses, "seed": cfg.mode.seed, "workers": cfg.mode.workers}
    return e_d, crosstalk_table(p, xt.selected_user, xt.er_db, cfg.mode.kind, **kw)


def cmd_crosstalk(cfg: RunConfig, out_dir: Path, figures: bool = True):
    e_d, rows = crosstalk_rows(cfg)
    labels = ["+".join(str(u) for u in sorted(sc.active_users)) for sc, _, _ in rows]
    write_csv(out_dir / "crosstalk.csv", CROSSTALK_HEADER, [(lab, r, q) for lab, (_, r, q) in zip(labels, rows)])
    write_crosstalk_gnuplot(out_dir / "crosstalk.gp", "crosstalk.csv")
    if figures:
        ref = (CROSSTALK_RATE, CROSSTALK_QBER) if cfg.crosstalk.selected_user == 4 else None
        render_crosstalk_figure(out_dir / "crosstalk.png", labels, [r for _, r, _ in rows],
                                [q for _, _, q in rows], ref)
    write_json(out_dir / "crosstalk_metadata.json", _metadata(cfg, "crosstalk", {
        "outputs": ["crosstalk.csv", "crosstalk.gp"] + (["crosstalk.png"] if figures else []),
        "crosstalk": vars(cfg.crosstalk),
        "e_misalign_selected": e_d,
    }))
    return rows


def calibration_rows(cfg: RunConfig):
    rows = []
    for u, spec in sorted(cfg.users.items()):
        if spec.target_qber is None:
            continue
        p = cfg.link_params(u, cfg.calibration_length_km)
        try:
            e_d = calibrate_misalignment(spec.target_qber, p)
            fwd = predict_observables(replace(p, e_misalign=e_d)).E_mu
            rows.append((u, spec.target_qber, e_d, fwd, "ok"))
        except InfeasibleTarget as exc:
            rows.append((u, spec.target_qber, "", "", f"infeasible: {exc}"))
    return rows


def cmd_calibrate(cfg: RunConfig, out_dir: Path) -> list:
    rows = calibration_rows(cfg)
    if not rows:
        raise ConfigError("no user has a target_qber to calibrate against")
    write_csv(out_dir / "calibration.csv", CALIBRATION_HEADER, rows)
    write_json(out_dir / "calibration_metadata.json", _metadata(cfg, "calibrate", {
        "outputs": ["calibration.csv"],
        "calibration_length_km": cfg.calibration_length_km,
    }))
    return rows


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tdmqkd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML run configuration (defaults reproduce the experiment)")
        p.add_argument("--out", help=f"output directory (overrides ${OUT_ENV} and the config)")
        p.add_argument("--seed", type=int, help="Monte Carlo seed (unsigned 64-bit)")
        p.add_argument("--pulses", type=int, help="Monte Carlo pulses per point")
        p.add_argument("--workers", type=int, help="parallel worker processes")
        p.add_argument("--no-figures", action="store_true", help="skip matplotlib PNG rendering")
        p.add_argument("-v", "--verbose", action="store_true")

    for name, help_ in (
        ("sweep", "key rate and QBER versus distance for every user"),
        ("montecarlo", "sweep with pulse-level Monte Carlo"),
        ("crosstalk", "selected user's rate and QBER as other users start transmitting"),
        ("calibrate", "misalignment per user matching the target QBERs"),
    ):
        common(sub.add_parser(name, help=help_))
    init = sub.add_parser("init-config", help="print the default configuration")
    init.add_argument("path", nargs="?", help="write to this file instead of stdout")
    return parser


def _resolve_out(args, cfg: RunConfig) -> Path:
    if args.out:
        return Path(args.out)
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV])
    return Path(cfg.output_dir)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "init-config":
        text = dump_config(RunConfig())
        if args.path:
            Path(args.path).write_text(text, encoding="utf-8")
        else:
            sys.stdout.write(text)
        return 0

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(message)s")
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        kind = "montecarlo" if args.command == "montecarlo" else None
        cfg = with_overrides(cfg, seed=args.seed, pulses=args.pulses, workers=args.workers, kind=kind)
        out_dir = _resolve_out(args, cfg)
        t0 = time.perf_counter()
        with RunDirLock(out_dir):
            if args.command in ("sweep", "montecarlo"):
                reports = cmd_sweep(cfg, out_dir, not args.no_figures)
                for u, reps in reports.items():
                    ref = next((r for r in reps if r.length_km == cfg.calibration_length_km), None)
                    if ref is not None:
                        log.info("user %d @ %g km: R = %.6g /pulse (%.4g bps), QBER = %.4f%%",
                                 u, ref.length_km, ref.R_per_pulse, ref.R_bps, 100 * ref.qber)
            elif args.command == "crosstalk":
                for sc, r, q in cmd_crosstalk(cfg, out_dir, not args.no_figures):
                    log.info("%-10s R = %.6g /pulse  QBER = %.4f%%", sc.label, r, 100 * q)
            else:
                rows = cmd_calibrate(cfg, out_dir)
                for row in rows:
                    log.info("user %d: target %.4f%% -> e_misalign %s (%s)", row[0], 100 * row[1],
                             row[2] if row[2] == "" else f"{row[2]:.6g}", row[4])
                if all(row[4] != "ok" for row in rows):
                    log.error("every calibration target was infeasible")
                    return 2
        log.info("wrote %s in %.2f s", out_dir, time.perf_counter() - t0)
    except (ConfigError, RuntimeError, ValueError) as exc:
        log.error("error: %s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

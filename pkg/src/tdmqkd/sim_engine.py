"""Pulse-level Monte Carlo of the multi-user link.

Randomness: every batch of ``batch_size`` pulses owns an independent
``numpy.random.PCG64`` stream seeded by
``SeedSequence(entropy=seed, spawn_key=stream_key + (batch_index,))``.
Tallies of the batches are summed, so the result depends only on
``(params, n_pulses, seed, stream_key, batch_size, interferers)`` and not on
how many worker processes evaluated the batches.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .chip_model import N_USERS, detection_table
from .decoy_bb84 import E0, DecoyObservables
from .link_model import INTENSITY_CLASSES, LinkParams, off_chip_transmittance

RNG_NAME = f"numpy.random.PCG64 via SeedSequence(seed, spawn_key=(*stream_key, batch)) [numpy {np.__version__}]"
DEFAULT_BATCH = 1 << 18

SIGNAL, DECOY, VACUUM = range(3)


@dataclass(frozen=True)
class PulseRecord:
    index: int
    user: int
    intensity_class: str
    basis: str
    bit: int
    outcome: str  # "0", "1", "+", "-", "none" or "double"


def _zeros():
    return np.zeros((N_USERS, len(INTENSITY_CLASSES)), dtype=np.int64)


@dataclass
class TallyCounts:
    """Event counters indexed ``[user - 1, class]``.

    Interfering users only accumulate ``sent``; every click is attributed to
    the user the chip is routed to.
    """

    sent: np.ndarray = field(default_factory=_zeros)
    clicks: np.ndarray = field(default_factory=_zeros)
    double_clicks: np.ndarray = field(default_factory=_zeros)
    sifted: np.ndarray = field(default_factory=_zeros)
    errors: np.ndarray = field(default_factory=_zeros)

    FIELDS = ("sent", "clicks", "double_clicks", "sifted", "errors")

    def __add__(self, other: "TallyCounts") -> "TallyCounts":
        return TallyCounts(*(getattr(self, f) + getattr(other, f) for f in self.FIELDS))

    def __eq__(self, other):
        if not isinstance(other, TallyCounts):
            return NotImplemented
        return all(np.array_equal(getattr(self, f), getattr(other, f)) for f in self.FIELDS)

    def check(self):
        if not (np.all(self.errors <= self.sifted) and np.all(self.sifted <= self.clicks)
                and np.all(self.clicks <= self.sent)):
            raise AssertionError("tally ordering errors <= sifted <= clicks <= sent violated")

    def rows(self):
        """(user, class, sent, clicks, double_clicks, sifted, errors) per cell."""
        for u in range(N_USERS):
            for k, name in enumerate(INTENSITY_CLASSES):
                yield (u + 1, name) + tuple(int(getattr(self, f)[u, k]) for f in self.FIELDS)


@dataclass(frozen=True)
class SimRun:
    seed: int
    n_pulses: int
    params: LinkParams
    tallies: TallyCounts
    interferers: tuple[int, ...] = ()
    batch_size: int = DEFAULT_BATCH

    def metadata(self) -> dict:
        return {
            "seed": self.seed,
            "n_pulses": self.n_pulses,
            "batch_size": self.batch_size,
            "interferers": list(self.interferers),
            "rng": RNG_NAME,
            "param_hash": param_hash(self.params),
        }


def param_hash(params) -> str:
    blob = json.dumps(asdict(params), sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _draw_states(rng, n, probs, e_misalign):
    cls = np.minimum(np.searchsorted(np.cumsum(probs), rng.random(n), side="right"), 2)
    basis = rng.integers(0, 2, n, dtype=np.int8)
    bit = rng.integers(0, 2, n, dtype=np.int8)
    sent_bit = bit ^ (rng.random(n) < e_misalign).astype(np.int8) if e_misalign > 0 else bit
    return cls, basis, bit, 2 * basis + sent_bit


def _photon_clicks(rng, clicks, n_photons, pol, table, off_chip):
    """Thin each pulse's photons and mark the detector of the first arrival.

    Photons of one pulse are i.i.d., so the first surviving photon lands on
    detector j with the single-photon conditional probability; later photons
    of the same pulse do not add clicks.
    """
    to_det = table[:, :4]
    reach = to_det.sum(axis=1)
    survivors = rng.binomial(n_photons, off_chip * reach[pol])
    hit = np.flatnonzero(survivors)
    if hit.size == 0:
        return
    cum = np.cumsum(to_det / np.where(reach > 0, reach, 1)[:, None], axis=1)
    u = rng.random(hit.size)
    det = np.minimum((u[:, None] >= cum[pol[hit]]).sum(axis=1), 3)
    clicks[hit, det] = True


def _simulate_batch(params: LinkParams, n: int, seq: np.random.SeedSequence, interferers: tuple[int, ...]):
    rng = np.random.Generator(np.random.PCG64(seq))
    src = params.source
    intens = np.asarray(src.intensities)
    off_chip = off_chip_transmittance(params)
    t = TallyCounts()

    cls, basis, bit, pol = _draw_states(rng, n, src.probs, params.e_misalign)
    clicks = rng.random((n, 4)) < params.detectors.dark_prob
    _photon_clicks(rng, clicks, rng.poisson(intens[cls]), pol, detection_table(params.receiver, params.user), off_chip)

    for j in interferers:
        # leaked light carries its own random states; misalignment is irrelevant to it
        cls_j, _, _, pol_j = _draw_states(rng, n, src.probs, 0.0)
        table_j = detection_table(params.receiver, j)
        _photon_clicks(rng, clicks, rng.poisson(intens[cls_j]), pol_j, table_j, off_chip)
        t.sent[j - 1] += np.bincount(cls_j, minlength=3)

    n_click = clicks.sum(axis=1)
    fired = np.flatnonzero(n_click)
    c = clicks[fired]
    det = np.argmax(c, axis=1)
    basis_r = (det >= 2).astype(np.int8)
    bit_r = (det % 2).astype(np.int8)
    multi = np.flatnonzero(n_click[fired] > 1)
    if multi.size:
        cm = c[multi]
        in_z, in_x = cm[:, :2].any(axis=1), cm[:, 2:].any(axis=1)
        coin = rng.integers(0, 2, (multi.size, 2), dtype=np.int8)
        basis_r[multi] = np.where(in_z & in_x, coin[:, 0], in_x.astype(np.int8))
        bit_r[multi] = coin[:, 1]

    fired_cls = cls[fired]
    keep = basis_r == basis[fired]
    wrong = keep & (bit_r != bit[fired])
    row = params.user - 1
    t.sent[row] += np.bincount(cls, minlength=3)
    t.clicks[row] += np.bincount(fired_cls, minlength=3)
    t.double_clicks[row] += np.bincount(fired_cls[n_click[fired] > 1], minlength=3)
    t.sifted[row] += np.bincount(fired_cls[keep], minlength=3)
    t.errors[row] += np.bincount(fired_cls[wrong], minlength=3)
    return t


def _batch_job(args):
    params, n, seed, key, interferers = args
    return _simulate_batch(params, n, np.random.SeedSequence(entropy=seed, spawn_key=key), interferers)


def simulate(
    params: LinkParams,
    n_pulses: int,
    seed: int,
    *,
    interferers: Sequence[int] = (),
    stream_key: Sequence[int] = (),
    batch_size: int = DEFAULT_BATCH,
    workers: int = 1,
) -> TallyCounts:
    """Monte Carlo tallies for ``n_pulses`` clock cycles of ``params.user``.

    ``interferers`` are other users transmitting in the same clock cycles;
    their photons reach the detectors only through the chip's leakage.
    """
    if n_pulses < 1:
        raise ValueError("n_pulses must be >= 1")
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    interferers = tuple(sorted(set(interferers) - {params.user}))
    if any(j not in range(1, N_USERS + 1) for j in interferers):
        raise ValueError(f"interferers must be users 1..{N_USERS}")
    jobs = []
    for b, start in enumerate(range(0, n_pulses, batch_size)):
        n = min(batch_size, n_pulses - start)
        jobs.append((params, n, int(seed), tuple(stream_key) + (b,), interferers))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_batch_job, jobs))
    else:
        parts = [_batch_job(j) for j in jobs]
    total = TallyCounts()
    for part in parts:
        total = total + part
    return total


def run(params: LinkParams, n_pulses: int, seed: int, **kw) -> SimRun:
    tallies = simulate(params, n_pulses, seed, **kw)
    return SimRun(
        seed=seed,
        n_pulses=n_pulses,
        params=params,
        tallies=tallies,
        interferers=tuple(sorted(set(kw.get("interferers", ())) - {params.user})),
        batch_size=kw.get("batch_size", DEFAULT_BATCH),
    )


def tallies_to_observables(t: TallyCounts, user: int) -> DecoyObservables:
    """Per-pulse gains and QBERs from the tallies of ``user``.

    Passive 50:50 basis choice keeps half of all clicks after sifting, so the
    gain estimate is ``2 * sifted / sent``.
    """
    row = user - 1
    sent, sifted, errors = t.sent[row], t.sifted[row], t.errors[row]
    if np.any(sent == 0):
        raise ValueError(f"user {user} has an intensity class with no pulses sent")
    q = 2.0 * sifted / sent
    e = [errors[k] / sifted[k] if sifted[k] > 0 else E0 for k in range(3)]
    return DecoyObservables(
        Q_mu=float(q[SIGNAL]),
        Q_nu=float(q[DECOY]),
        Q_vac=float(q[VACUUM]),
        E_mu=float(e[SIGNAL]),
        E_nu=float(e[DECOY]),
        E_vac=float(e[VACUUM]),
    )


def binomial_sigma(p: float, n: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / n)


def sample_pulses(params: LinkParams, n: int, seed: int) -> list[PulseRecord]:
    """Pulse-by-pulse records of a short run, for inspection and debugging."""
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed)))
    src = params.source
    cls, basis, bit, pol = _draw_states(rng, n, src.probs, params.e_misalign)
    clicks = rng.random((n, 4)) < params.detectors.dark_prob
    n_ph = rng.poisson(np.asarray(src.intensities)[cls])
    _photon_clicks(rng, clicks, n_ph, pol, detection_table(params.receiver, params.user),
                   off_chip_transmittance(params))
    names = ("0", "1", "+", "-")
    out = []
    for i in range(n):
        k = int(clicks[i].sum())
        outcome = "none" if k == 0 else ("double" if k > 1 else names[int(np.argmax(clicks[i]))])
        out.append(PulseRecord(i, params.user, INTENSITY_CLASSES[cls[i]], "ZX"[basis[i]], int(bit[i]), outcome))
    return out

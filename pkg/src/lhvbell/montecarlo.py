"""Event-level simulation of photon-pair polarization-correlation experiments.

The local-model mode plays the source: each emitted pair carries a hidden
polarization angle chi1 (uniform over the period) and a partner angle
chi2 = chi1 - y with the difference y drawn from the pair density; each
arm then detects with probability P(chi - phi) for its analyzer setting.
The quantum mode draws detection outcomes directly from the quantum
single and coincidence probabilities at each angle.

Reproducibility contract: counts are a deterministic function of
(config, seed) only.  Pairs are processed in fixed-size chunks and every
(angle, chunk) pair owns a counter-derived substream of a counter-based
generator, so results are bit-identical no matter how many workers
process the chunks.

Each mode also has an exact aggregate path ("method='aggregate'") that
draws the per-angle outcome counts from the multinomial distribution the
per-event process induces; it is distribution-identical to the event path
and runs in constant time per angle, which matters for statistical studies
with billions of pairs.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .lhv_model import (
    DetectionFn,
    LhvModel,
    PairDensity,
    ck_moment,
    coincidence_prob,
    singles_prob,
)
from .periodic_math import PERIOD, PeriodicFn, grid, wrap_angle

_ACCIDENTAL_SALT = np.uint64(0xACC1D << 40)
_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)

MODE_LHV = "lhv"
MODE_QM = "qm"


def _substream(seed: int, angle_idx: int, chunk_idx: int) -> np.random.Generator:
    key = np.array(
        [np.uint64(seed) & _MASK64,
         (np.uint64(angle_idx + 1) << np.uint64(32)) ^ np.uint64(chunk_idx)],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))


def _accidental_stream(seed: int, angle_idx: int, chunk_idx: int) -> np.random.Generator:
    key = np.array(
        [np.uint64(seed) & _MASK64,
         _ACCIDENTAL_SALT ^ (np.uint64(angle_idx + 1) << np.uint64(20)) ^ np.uint64(chunk_idx)],
        dtype=np.uint64,
    )
    return np.random.Generator(np.random.Philox(key=key))


class _DensitySampler:
    """Inverse-CDF sampler for the angle difference, piecewise constant per cell.

    Cells with zero density carry zero mass and are never selected, so
    clipped regions of the density produce no draws at all.  The in-cell
    position is linear in the uniform variate; the distribution error of
    the piecewise-constant view is O(1/N).
    """

    def __init__(self, rho: PairDensity):
        n = rho.n
        h = PERIOD / n
        masses = rho.samples * (PERIOD * h)  # pi * rho * h sums to ~1
        total = masses.sum()
        if total <= 0:
            raise ValueError("density carries no mass")
        masses = masses / total
        self.h = h
        self.lo = grid(n) - h / 2
        self.masses = masses
        self.cum0 = np.concatenate(([0.0], np.cumsum(masses)))
        self.cum0[-1] = 1.0

    def sample(self, u: np.ndarray) -> np.ndarray:
        idx = np.searchsorted(self.cum0, u, side="right") - 1
        idx = np.clip(idx, 0, self.masses.size - 1)
        frac = (u - self.cum0[idx]) / self.masses[idx]
        return self.lo[idx] + frac * self.h


def sample_pair(rho: PairDensity, rng: np.random.Generator, size: int = 1):
    """Draw hidden polarization angles (chi1, chi2) of `size` photon pairs.

    chi1 is uniform over the period; the difference chi1 - chi2 follows the
    density pi*rho (normalized to one over the period).
    """
    sampler = _DensitySampler(rho)
    u = rng.random((2, size))
    chi1 = -PERIOD / 2 + PERIOD * u[0]
    y = sampler.sample(u[1])
    chi2 = wrap_angle(chi1 - y)
    return chi1, chi2


def _minus_channel(p: DetectionFn) -> DetectionFn:
    """The opposite output port: P_minus(x) = P_plus(x + pi/2)."""
    shifted = np.roll(p.samples, -(p.n // 2))
    return DetectionFn(PeriodicFn(shifted), check_monotone=False)


@dataclass(frozen=True)
class SimConfig:
    """Simulation settings: mode, statistics, angles, seed, channel layout.

    angles are analyzer-angle differences phi = phi1 - phi2 (the simulation
    fixes phi2 = 0).  pairs is the emitted-pair budget per angle.
    """

    mode: str
    pairs: int
    angles: np.ndarray
    seed: int
    model: LhvModel | None = None
    eta: float | None = None
    v: float | None = None
    two_channel: bool = False
    method: str = "event"
    accidental_rate: float = 0.0
    chunk_pairs: int = 1 << 21

    def __post_init__(self):
        angles = np.atleast_1d(np.asarray(self.angles, dtype=float)).copy()
        if angles.size == 0:
            raise ValueError("angles must be non-empty")
        angles.flags.writeable = False
        object.__setattr__(self, "angles", angles)
        if self.pairs < 1:
            raise ValueError("pair count must be >= 1")
        if self.chunk_pairs < 1:
            raise ValueError("chunk size must be >= 1")
        if self.method not in ("event", "aggregate"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.mode == MODE_LHV:
            if self.model is None:
                raise ValueError("local-model mode needs a model")
            if self.two_channel:
                for p in (self.model.p1, self.model.p2):
                    overlap = p.samples + _minus_channel(p).samples
                    if np.max(overlap) > 1 + 1e-9:
                        raise ValueError("channel functions overlap")
        elif self.mode == MODE_QM:
            if self.eta is None or self.v is None:
                raise ValueError("quantum mode needs eta and v")
            if not 0 < self.eta <= 1:
                raise ValueError("efficiency out of range")
            if not 0 <= self.v <= 1:
                raise ValueError("visibility out of range")
        else:
            raise ValueError(f"unknown mode {self.mode!r}")

    @classmethod
    def qm(cls, eta: float, v: float, pairs: int, n_angles: int = 16,
           seed: int = 0, **kw) -> "SimConfig":
        angles = PERIOD * np.arange(1, n_angles + 1) / n_angles
        return cls(mode=MODE_QM, pairs=pairs, angles=angles, seed=seed,
                   eta=eta, v=v, **kw)

    @classmethod
    def lhv(cls, model: LhvModel, pairs: int, n_angles: int = 16,
            seed: int = 0, **kw) -> "SimConfig":
        angles = PERIOD * np.arange(1, n_angles + 1) / n_angles
        return cls(mode=MODE_LHV, pairs=pairs, angles=angles, seed=seed,
                   model=model, **kw)

    def describe(self) -> dict:
        """The effective settings, JSON-ready, for report echoes."""
        out = {
            "mode": self.mode,
            "pairs": self.pairs,
            "angles": [float(a) for a in self.angles],
            "seed": self.seed,
            "two_channel": self.two_channel,
            "method": self.method,
            "accidental_rate": self.accidental_rate,
            "chunk_pairs": self.chunk_pairs,
        }
        if self.mode == MODE_QM:
            out["eta"] = self.eta
            out["v"] = self.v
        else:
            out["grid_n"] = self.model.n
        return out


@dataclass
class CountData:
    """Per-angle detection counts plus the settings that produced them."""

    angles: np.ndarray
    pairs: int
    two_channel: bool
    singles1: np.ndarray
    singles2: np.ndarray
    coincidences: np.ndarray | None = None
    channels: dict = field(default_factory=dict)
    arm_channel_singles: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.two_channel:
            if set(self.channels) != {"pp", "pm", "mp", "mm"}:
                raise ValueError("two-channel data needs the four channel count arrays")
        else:
            if self.coincidences is None:
                raise ValueError("single-channel data needs coincidence counts")
            if np.any(self.coincidences > np.minimum(self.singles1, self.singles2)):
                raise ValueError("coincidences cannot exceed singles")
        if np.any(self.singles1 > self.pairs) or np.any(self.singles2 > self.pairs):
            raise ValueError("counts cannot exceed the pair budget")

    def _grid_n(self) -> int:
        n = self.angles.size
        expected = PERIOD * np.arange(1, n + 1) / n
        if not np.allclose(self.angles, expected, atol=1e-9):
            raise ValueError("angles are not the uniform grid j*pi/n")
        return n

    def to_rate_series(self):
        """Coincidence counts as a RateSeries with Poisson uncertainties."""
        from .inequalities import RateSeries

        self._grid_n()
        counts = self.coincidences if not self.two_channel else self.channels["pp"]
        return RateSeries.from_counts(counts)

    def to_two_channel(self):
        from .inequalities import RateSeries, TwoChannelRates

        if not self.two_channel:
            raise ValueError("single-channel data has no channel split")
        self._grid_n()
        return TwoChannelRates(
            pp=RateSeries.from_counts(self.channels["pp"]),
            pm=RateSeries.from_counts(self.channels["pm"]),
            mp=RateSeries.from_counts(self.channels["mp"]),
            mm=RateSeries.from_counts(self.channels["mm"]),
        )


def _chunk_sizes(pairs: int, chunk_pairs: int) -> list:
    sizes = [chunk_pairs] * (pairs // chunk_pairs)
    if pairs % chunk_pairs:
        sizes.append(pairs % chunk_pairs)
    return sizes


def _nearest_probs(samples: np.ndarray, x: np.ndarray) -> np.ndarray:
    n = samples.size
    idx = np.rint((x + PERIOD / 2) / (PERIOD / n)).astype(np.int64) % n
    return samples[idx]


def _is_boolean(samples: np.ndarray) -> bool:
    return bool(np.all((samples < 1e-12) | (samples > 1 - 1e-12)))


def _detect(rng, samples: np.ndarray, boolean: bool, x: np.ndarray) -> np.ndarray:
    p = _nearest_probs(samples, x)
    if boolean:
        return p > 0.5
    return rng.random(x.size) < p


def _lhv_single_chunk(cfg: SimConfig, sampler, booleans, angle_idx: int,
                      chunk_idx: int, m: int):
    rng = _substream(cfg.seed, angle_idx, chunk_idx)
    phi = cfg.angles[angle_idx]
    u = rng.random((2, m))
    chi1 = -PERIOD / 2 + PERIOD * u[0]
    y = sampler.sample(u[1])
    det1 = _detect(rng, cfg.model.p1.samples, booleans[0], chi1 - phi)
    det2 = _detect(rng, cfg.model.p2.samples, booleans[1], chi1 - y)
    c1 = int(np.count_nonzero(det1))
    c2 = int(np.count_nonzero(det2))
    c12 = int(np.count_nonzero(det1 & det2))
    return c1, c2, c12


def _category_counts(u: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Counts per outcome category from one uniform per event."""
    edges = np.cumsum(probs)
    edges[-1] = max(edges[-1], 1.0)
    cat = np.searchsorted(edges, u, side="right")
    return np.bincount(cat, minlength=probs.size)


def _lhv_two_channel_chunk(cfg: SimConfig, sampler, angle_idx: int,
                           chunk_idx: int, m: int):
    rng = _substream(cfg.seed, angle_idx, chunk_idx)
    phi = cfg.angles[angle_idx]
    u = rng.random((4, m))
    chi1 = -PERIOD / 2 + PERIOD * u[0]
    y = sampler.sample(u[1])
    x1 = chi1 - phi
    x2 = chi1 - y
    p1p = _nearest_probs(cfg.model.p1.samples, x1)
    p1m = _nearest_probs(_minus_channel(cfg.model.p1).samples, x1)
    p2p = _nearest_probs(cfg.model.p2.samples, x2)
    p2m = _nearest_probs(_minus_channel(cfg.model.p2).samples, x2)
    plus1 = u[2] < p1p
    minus1 = (~plus1) & (u[2] < p1p + p1m)
    plus2 = u[3] < p2p
    minus2 = (~plus2) & (u[3] < p2p + p2m)
    return (
        int(np.count_nonzero(plus1 & plus2)),
        int(np.count_nonzero(plus1 & minus2)),
        int(np.count_nonzero(minus1 & plus2)),
        int(np.count_nonzero(minus1 & minus2)),
        int(np.count_nonzero(plus1)),
        int(np.count_nonzero(minus1)),
        int(np.count_nonzero(plus2)),
        int(np.count_nonzero(minus2)),
    )


def _qm_probs_single(eta: float, v: float, phi: float) -> np.ndarray:
    p11 = eta**2 / 4 * (1 + v * math.cos(2 * phi))
    p1only = eta / 2 - p11
    return np.array([p11, p1only, p1only, 1 - eta + p11])


def _qm_probs_two_channel(eta: float, v: float, phi: float) -> np.ndarray:
    qp = eta**2 / 4 * (1 + v * math.cos(2 * phi))
    qm_ = eta**2 / 4 * (1 - v * math.cos(2 * phi))
    single = eta / 2 * (1 - eta)
    none = (1 - eta) ** 2
    # order: pp, pm, mp, mm, p0, m0, 0p, 0m, 00
    return np.array([qp, qm_, qm_, qp, single, single, single, single, none])


def _lhv_probs_single(model: LhvModel, phi: float) -> np.ndarray:
    p11 = float(coincidence_prob(model, phi))
    p1 = singles_prob(model, 1)
    p2 = singles_prob(model, 2)
    probs = np.array([p11, p1 - p11, p2 - p11, 1 - p1 - p2 + p11])
    return np.clip(probs, 0.0, None)


def _lhv_probs_two_channel(model: LhvModel, phi: float) -> np.ndarray:
    p1p, p1m = model.p1, _minus_channel(model.p1)
    p2p, p2m = model.p2, _minus_channel(model.p2)

    def joint(a: DetectionFn, b: DetectionFn) -> float:
        return float(coincidence_prob(LhvModel(model.rho, a, b), phi))

    pp, pm = joint(p1p, p2p), joint(p1p, p2m)
    mp, mm = joint(p1m, p2p), joint(p1m, p2m)
    s1p = ck_moment(p1p, 0) / PERIOD
    s1m = ck_moment(p1m, 0) / PERIOD
    s2p = ck_moment(p2p, 0) / PERIOD
    s2m = ck_moment(p2m, 0) / PERIOD
    p0 = s1p - pp - pm
    m0 = s1m - mp - mm
    zp = s2p - pp - mp
    zm = s2m - pm - mm
    none = 1.0 - (pp + pm + mp + mm + p0 + m0 + zp + zm)
    probs = np.array([pp, pm, mp, mm, p0, m0, zp, zm, none])
    return np.clip(probs, 0.0, None)


def simulate(config: SimConfig, workers: int = 1) -> CountData:
    """Run the experiment and return per-angle counts.

    The outcome counts of each (angle, chunk) block come from that block's
    own substream; merging is plain integer addition, so the result is
    independent of worker count and identical across reruns with the same
    config and seed.
    """
    n_angles = config.angles.size
    sizes = _chunk_sizes(config.pairs, config.chunk_pairs)

    singles1 = np.zeros(n_angles, dtype=np.int64)
    singles2 = np.zeros(n_angles, dtype=np.int64)
    coinc = np.zeros(n_angles, dtype=np.int64)
    channels = {k: np.zeros(n_angles, dtype=np.int64) for k in ("pp", "pm", "mp", "mm")}
    arm = {k: np.zeros(n_angles, dtype=np.int64) for k in ("p1", "m1", "p2", "m2")}

    sampler = None
    booleans = (False, False)
    if config.mode == MODE_LHV and config.method == "event":
        sampler = _DensitySampler(config.model.rho)
        booleans = (_is_boolean(config.model.p1.samples),
                    _is_boolean(config.model.p2.samples))

    agg_probs = None
    if config.method == "aggregate":
        agg_probs = []
        for a in range(n_angles):
            phi = config.angles[a]
            if config.mode == MODE_QM:
                probs = (_qm_probs_two_channel(config.eta, config.v, phi)
                         if config.two_channel
                         else _qm_probs_single(config.eta, config.v, phi))
            else:
                probs = (_lhv_probs_two_channel(config.model, phi)
                         if config.two_channel
                         else _lhv_probs_single(config.model, phi))
            probs = np.clip(probs, 0.0, None)
            probs[-1] += max(0.0, 1.0 - probs.sum())
            agg_probs.append(probs / probs.sum())

    def run_chunk(task):
        angle_idx, chunk_idx, m = task
        if config.method == "aggregate":
            rng = _substream(config.seed, angle_idx, chunk_idx)
            counts = rng.multinomial(m, agg_probs[angle_idx])
            return ("agg", angle_idx, counts)
        if config.mode == MODE_QM:
            rng = _substream(config.seed, angle_idx, chunk_idx)
            u = rng.random(m)
            probs = (_qm_probs_two_channel(config.eta, config.v, config.angles[angle_idx])
                     if config.two_channel
                     else _qm_probs_single(config.eta, config.v, config.angles[angle_idx]))
            counts = _category_counts(u, probs)
            return ("agg", angle_idx, counts)
        if config.two_channel:
            return ("tc", angle_idx, _lhv_two_channel_chunk(config, sampler, angle_idx,
                                                            chunk_idx, m))
        return ("sc", angle_idx, _lhv_single_chunk(config, sampler, booleans,
                                                   angle_idx, chunk_idx, m))

    tasks = [(a, c, m) for a in range(n_angles) for c, m in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_chunk, tasks))
    else:
        results = [run_chunk(t) for t in tasks]

    for kind, a, payload in results:
        if kind == "sc":
            c1, c2, c12 = payload
            singles1[a] += c1
            singles2[a] += c2
            coinc[a] += c12
        elif kind == "tc":
            pp, pm, mp, mm, p1, m1, p2, m2 = payload
            channels["pp"][a] += pp
            channels["pm"][a] += pm
            channels["mp"][a] += mp
            channels["mm"][a] += mm
            arm["p1"][a] += p1
            arm["m1"][a] += m1
            arm["p2"][a] += p2
            arm["m2"][a] += m2
        else:
            counts = payload
            if config.two_channel:
                pp, pm, mp, mm, p0, m0, zp, zm = counts[:8]
                channels["pp"][a] += pp
                channels["pm"][a] += pm
                channels["mp"][a] += mp
                channels["mm"][a] += mm
                arm["p1"][a] += pp + pm + p0
                arm["m1"][a] += mp + mm + m0
                arm["p2"][a] += pp + mp + zp
                arm["m2"][a] += pm + mm + zm
            else:
                c11, c10, c01, _ = counts
                singles1[a] += c11 + c10
                singles2[a] += c11 + c01
                coinc[a] += c11

    if config.accidental_rate > 0:
        for a in range(n_angles):
            for c, m in enumerate(sizes):
                rng = _accidental_stream(config.seed, a, c)
                if config.two_channel:
                    for key in ("pp", "pm", "mp", "mm"):
                        channels[key][a] += rng.poisson(config.accidental_rate * m)
                else:
                    coinc[a] += rng.poisson(config.accidental_rate * m)

    if config.two_channel:
        singles1 = arm["p1"] + arm["m1"]
        singles2 = arm["p2"] + arm["m2"]
        return CountData(
            angles=config.angles, pairs=config.pairs, two_channel=True,
            singles1=singles1, singles2=singles2, channels=channels,
            arm_channel_singles=arm,
        )
    return CountData(
        angles=config.angles, pairs=config.pairs, two_channel=False,
        singles1=singles1, singles2=singles2, coincidences=coinc,
    )

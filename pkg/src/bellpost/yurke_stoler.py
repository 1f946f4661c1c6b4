"""N-partite Yurke-Stoler ring: allocation statistics and conditional efficiency.

N single-particle sources sit on a ring between neighbouring parties. Source
s (0-based) sends its particle left, to party (s - 1) mod N, or right, to
party s, with probability 1/2 each. Only the allocation probabilities enter
the detection statistics, so path superpositions are not modelled.
"""

from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .detection import DetectionBehavior, DetectorModel, apply_detector_model, conditional_efficiency
from .exceptions import NoSolutionError, UnsupportedOperationError
from .scenario import BellScenario, uniform_behavior

THREADS_ENV = "BELLPOST_THREADS"
PRESETS = ("independent", "on_off", "fixed")


def source_targets(num_parties: int) -> list[tuple[int, int]]:
    """(left party, right party) for every source."""
    return [((s - 1) % num_parties, s) for s in range(num_parties)]


def allocation_distribution(num_parties: int) -> dict[tuple[int, ...], float]:
    """Exact distribution of per-party particle counts over the 2^N left/right configurations."""
    if num_parties < 2:
        raise ValueError("the ring needs at least two parties")
    targets = source_targets(num_parties)
    dist: dict[tuple[int, ...], float] = {}
    w = 0.5**num_parties
    for config in itertools.product((0, 1), repeat=num_parties):
        counts = [0] * num_parties
        for s, side in enumerate(config):
            counts[targets[s][side]] += 1
        key = tuple(counts)
        dist[key] = dist.get(key, 0.0) + w
    return dist


def coincidence_probability(num_parties: int) -> float:
    return allocation_distribution(num_parties).get((1,) * num_parties, 0.0)


def double_empty_probability(num_parties: int, double: int, empty: int) -> float:
    """Probability that ``double`` gets two particles, ``empty`` none, the rest one each."""
    counts = [1] * num_parties
    counts[double] = 2
    counts[empty] = 0
    return allocation_distribution(num_parties).get(tuple(counts), 0.0)


@dataclass(frozen=True)
class YSConfig:
    num_parties: int
    detector: DetectorModel | tuple[DetectorModel, ...] = field(default_factory=DetectorModel)
    independent_detection: bool = False

    def __post_init__(self):
        if self.num_parties < 2:
            raise ValueError("the ring needs at least two parties")
        if not isinstance(self.detector, DetectorModel):
            dets = tuple(self.detector)
            if len(dets) != self.num_parties:
                raise ValueError("one detector model per party")
            object.__setattr__(self, "detector", dets)

    @property
    def detectors(self) -> tuple[DetectorModel, ...]:
        dets = (self.detector,) * self.num_parties if isinstance(self.detector, DetectorModel) else self.detector
        if self.independent_detection:
            dets = tuple(DetectorModel.independent(d.eta_det, d.eta_tra) for d in dets)
        return dets

    @property
    def homogeneous(self) -> bool:
        return len(set(self.detectors)) == 1

    def to_dict(self) -> dict:
        return {
            "num_parties": self.num_parties,
            "independent_detection": self.independent_detection,
            "detectors": [d.to_dict() for d in self.detectors],
        }


def eta_c_analytic(cfg: YSConfig) -> float:
    """2 eta_det eta_tra / (2 + (N-1) [eta_tra eta_1|2 / eta_det + 2 (1 - eta_tra)])."""
    if not cfg.homogeneous:
        raise UnsupportedOperationError("the closed form assumes identical detectors")
    d = cfg.detectors[0]
    if d.eta_det == 0.0:
        raise ZeroDivisionError("eta_c is undefined for eta_det = 0")
    n = cfg.num_parties
    return 2 * d.eta_det * d.eta_tra / (2 + (n - 1) * (d.eta_tra * d.eta_1of2 / d.eta_det + 2 * (1 - d.eta_tra)))


def detection_behavior(cfg: YSConfig, behavior=None) -> DetectionBehavior:
    """Exact p(a, d | x) for the ring; outcomes default to uniform."""
    if behavior is None:
        behavior = uniform_behavior(BellScenario.dichotomic(cfg.num_parties))
    return apply_detector_model(allocation_distribution(cfg.num_parties), cfg.detectors, behavior)


def eta_c_exact(cfg: YSConfig) -> float:
    """eta_c by exact enumeration of allocations and detector channels."""
    return conditional_efficiency(detection_behavior(cfg))[0]


# --- Monte Carlo ------------------------------------------------------------


@dataclass
class MonteCarloResult:
    estimate: float
    std_error: float
    party: int
    per_party: list[float]
    per_party_std_error: list[float]
    coincidences: int
    conditioning_counts: list[int]
    samples: int
    seed: int
    shards: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _simulate_counts(cfg: YSConfig, samples: int, rng: np.random.Generator, batch: int = 1 << 18):
    """Count coincidences and 'all but k single' events over ``samples`` runs."""
    n = cfg.num_parties
    dets = cfg.detectors
    eta_tra = np.array([d.eta_tra for d in dets])
    eta_det = np.array([d.eta_det for d in dets])
    p_one_of_two = np.array([d.eta_1of2 for d in dets])
    p_two_of_two = np.array([d.eta_det**2 if d.number_resolving else 0.0 for d in dets])
    left = np.array([t[0] for t in source_targets(n)])
    right = np.array([t[1] for t in source_targets(n)])
    n_all = 0
    n_others = np.zeros(n, dtype=np.int64)
    done = 0
    while done < samples:
        m = min(batch, samples - done)
        side = rng.random((m, n)) < 0.5
        dest = np.where(side, right, left)
        survive = rng.random((m, n)) < eta_tra[dest]
        arrivals = np.zeros((m, n), dtype=np.int64)
        for s in range(n):
            np.add.at(arrivals, (np.nonzero(survive[:, s])[0], dest[survive[:, s], s]), 1)
        if arrivals.max(initial=0) > 2:
            raise AssertionError("ring geometry cannot deliver three particles to one party")
        u = rng.random((m, n))
        reg = np.zeros((m, n), dtype=np.int64)
        one = arrivals == 1
        reg[one & (u < eta_det)] = 1
        two = arrivals == 2
        reg[two & (u < p_one_of_two)] = 1
        reg[two & (u >= p_one_of_two) & (u < p_one_of_two + p_two_of_two)] = 2
        single = reg == 1
        n_single = single.sum(axis=1)
        n_all += int(np.sum(n_single == n))
        for k in range(n):
            n_others[k] += int(np.sum((n_single - single[:, k]) == n - 1))
        done += m
    return n_all, n_others


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def eta_c_monte_carlo(cfg: YSConfig, samples: int, seed: int = 0, shards: int = 1) -> MonteCarloResult:
    """Estimate eta_c by simulating sources, transmission and detectors.

    Each ratio p(all single)/p(all but k single) is a binomial proportion
    among the conditioning events, so its standard error is
    sqrt(r (1 - r) / n_k). The reported estimate is the minimum over k with
    the standard error of the minimising party. Results depend only on
    (seed, shards), not on the thread count.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    shards = max(1, int(shards))
    seqs = np.random.SeedSequence(seed).spawn(shards)
    sizes = [samples // shards + (1 if i < samples % shards else 0) for i in range(shards)]

    def run(i):
        return _simulate_counts(cfg, sizes[i], np.random.default_rng(seqs[i]))

    threads = min(_thread_count(), shards)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(run, range(shards)))
    else:
        parts = [run(i) for i in range(shards)]
    n_all = sum(p[0] for p in parts)
    n_others = np.sum([p[1] for p in parts], axis=0)
    ratios, errs = [], []
    for k in range(cfg.num_parties):
        if n_others[k] == 0:
            ratios.append(math.nan)
            errs.append(math.nan)
            continue
        r = n_all / n_others[k]
        ratios.append(r)
        errs.append(math.sqrt(r * (1 - r) / n_others[k]))
    k_min = int(np.nanargmin(ratios))
    return MonteCarloResult(
        estimate=ratios[k_min],
        std_error=errs[k_min],
        party=k_min,
        per_party=ratios,
        per_party_std_error=errs,
        coincidences=int(n_all),
        conditioning_counts=[int(v) for v in n_others],
        samples=samples,
        seed=seed,
        shards=shards,
    )


# --- threshold detection efficiency ----------------------------------------


def _family(preset: str, eta_tra: float, eta_1of2: float):
    if preset == "independent":
        return lambda e: DetectorModel.independent(e, eta_tra)
    if preset == "on_off":
        return lambda e: DetectorModel.on_off(e, eta_tra)
    if preset == "fixed":
        return lambda e: DetectorModel(e, eta_tra, eta_1of2, number_resolving=True)
    raise ValueError(f"preset must be one of {PRESETS}")


def eta_c_curve(num_parties: int, preset: str = "independent", eta_tra: float = 1.0, eta_1of2: float = 0.0):
    fam = _family(preset, eta_tra, eta_1of2)

    def curve(eta_det):
        if preset == "fixed":
            # the number-resolving validity check does not matter for the closed form
            d = DetectorModel(eta_det, eta_tra, eta_1of2, number_resolving=False)
        else:
            d = fam(eta_det)
        return eta_c_analytic(YSConfig(num_parties, d))

    return curve


def threshold_eta_det(
    num_parties: int,
    eta_c_star: float,
    preset: str = "independent",
    eta_tra: float = 1.0,
    eta_1of2: float = 0.0,
    tol: float = 1e-12,
) -> float:
    """Smallest eta_det with eta_c(eta_det) = eta_c_star, by bisection.

    Raises :class:`NoSolutionError` when even perfect detectors stay below
    the target.
    """
    curve = eta_c_curve(num_parties, preset, eta_tra, eta_1of2)
    top = curve(1.0)
    if top < eta_c_star:
        raise NoSolutionError(
            f"eta_c at eta_det = 1 is {top:.6g} < {eta_c_star:.6g} for the {preset} detector family"
        )
    lo, hi = 1e-15, 1.0
    if curve(lo) >= eta_c_star:
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if curve(mid) < eta_c_star:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def grid_points(
    etas_det: Sequence[float], etas_tra: Sequence[float], num_parties: int, preset: str = "independent"
) -> list[YSConfig]:
    fam = _family(preset, 1.0, 0.0)
    out = []
    for ed in etas_det:
        for et in etas_tra:
            d = fam(ed)
            out.append(YSConfig(num_parties, DetectorModel(d.eta_det, et, d.eta_1of2, d.number_resolving)))
    return out

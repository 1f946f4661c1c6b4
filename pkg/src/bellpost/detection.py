"""Detection-extended behaviors p(a, d | x) and coincidence postselection.

Tables have axes ``(x_1..x_N, a_1..a_N, d_1..d_N)``. Each outcome axis has
one extra trailing slot, the null outcome, used when a party registers no
particle. Count axes run over ``0..max_count``; index 1 is always "exactly one
particle". After :func:`coarse_grain` the count axes have size two with index
0 meaning "anything but one".
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .exceptions import DegeneratePostselectionError, StructuralError, UnsupportedOperationError
from .scenario import NORM_TOL, Behavior, BellScenario

SINGLE = 1
OTHER = 0


@dataclass(frozen=True)
class DetectionBehavior:
    scenario: BellScenario
    max_count: int
    table: np.ndarray = field(repr=False)
    coarse: bool = False

    def __post_init__(self):
        table = np.array(self.table, dtype=float)
        if table.shape != self.shape_for(self.scenario, self.max_count):
            raise StructuralError(
                f"table shape {table.shape} does not match {self.shape_for(self.scenario, self.max_count)}"
            )
        if self.coarse and self.max_count != 1:
            raise StructuralError("coarse-grained behaviors have two count classes")
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    @staticmethod
    def shape_for(scenario: BellScenario, max_count: int) -> tuple[int, ...]:
        n = scenario.num_parties
        return scenario.settings + tuple(s + 1 for s in scenario.outcome_sizes) + (max_count + 1,) * n

    @property
    def num_parties(self) -> int:
        return self.scenario.num_parties

    def count_marginal(self) -> np.ndarray:
        """p(d|x), axes (x_1..x_N, d_1..d_N)."""
        n = self.num_parties
        return self.table.sum(axis=tuple(range(n, 2 * n)))

    def null_index(self, k: int) -> int:
        return self.scenario.outcome_sizes[k]


def validate_detection_behavior(db: DetectionBehavior, tol: float = NORM_TOL) -> list[str]:
    problems = []
    n = db.num_parties
    if np.any(db.table < -tol):
        problems.append(f"negative entry {db.table.min():.3g}")
    sums = db.table.reshape(db.scenario.settings + (-1,)).sum(axis=-1)
    for x in db.scenario.joint_settings():
        if abs(sums[x] - 1.0) > tol:
            problems.append(f"p(a,d|x={x}) sums to {sums[x]!r}")
    if not db.coarse:
        for k in range(n):
            # d_k = 0 must carry the null outcome, d_k >= 1 must not
            t = np.moveaxis(db.table, (n + k, 2 * n + k), (0, 1))
            null = db.null_index(k)
            bad = float(np.abs(t[:null, 0]).sum() + np.abs(t[null, 1:]).sum())
            if bad > tol:
                problems.append(f"party {k}: outcome/null mismatch with count, mass {bad:.3g}")
    return problems


def coarse_grain(db: DetectionBehavior) -> DetectionBehavior:
    """Merge every count other than one into a single class."""
    if db.coarse:
        return db
    n = db.num_parties
    t = db.table
    for k in range(n):
        ax = 2 * n + k
        single = np.take(t, [SINGLE], axis=ax) if db.max_count >= 1 else np.zeros_like(np.take(t, [0], axis=ax))
        other = t.sum(axis=ax, keepdims=True) - single
        t = np.concatenate([other, single], axis=ax)
    return DetectionBehavior(db.scenario, 1, t, coarse=True)


def _single_index(n: int) -> tuple:
    return (SINGLE,) * n


def coincidence_probability(db: DetectionBehavior) -> np.ndarray:
    """p(d = all single | x) for every joint setting."""
    return db.count_marginal()[(Ellipsis,) + _single_index(db.num_parties)]


def postselect_coincidence(db: DetectionBehavior) -> Behavior:
    """p(a | d = all single, x), dropping the null outcome."""
    n = db.num_parties
    sl = db.table[(Ellipsis,) + _single_index(n)]
    keep = tuple(slice(0, s) for s in db.scenario.outcome_sizes)
    sub = sl[(slice(None),) * n + keep]
    norm = coincidence_probability(db)
    for x in db.scenario.joint_settings():
        if norm[x] <= 0.0:
            raise DegeneratePostselectionError(f"zero coincidence probability at x={x}", setting=x)
    return Behavior(db.scenario, sub / norm.reshape(norm.shape + (1,) * n))


def others_single_probability(db: DetectionBehavior, k: int) -> np.ndarray:
    """p(d_j = single for all j != k | x)."""
    n = db.num_parties
    marg = db.count_marginal().sum(axis=n + k)
    return marg[(Ellipsis,) + (SINGLE,) * (n - 1)]


def conditional_efficiency(db: DetectionBehavior) -> tuple[float, int, tuple[int, ...]]:
    """min over parties k and settings x of p(all single | x) / p(all but k single | x).

    Returns the minimum together with the minimising (k, x); ties resolve to
    the smallest k, then the first x in lexicographic order.
    """
    n = db.num_parties
    num = coincidence_probability(db)
    best, arg = np.inf, None
    for k in range(n):
        den = others_single_probability(db, k)
        for x in db.scenario.joint_settings():
            if den[x] <= 0.0:
                raise DegeneratePostselectionError(
                    f"parties other than {k} never all register one particle at x={x}", setting=x, party=k
                )
            r = num[x] / den[x]
            if r < best:
                best, arg = r, (k, x)
    return float(min(best, 1.0)), arg[0], arg[1]


def embed_behavior(b: Behavior) -> DetectionBehavior:
    """Ideal detection: every party registers exactly one particle."""
    n = b.scenario.num_parties
    table = np.zeros(DetectionBehavior.shape_for(b.scenario, 1))
    keep = tuple(slice(0, s) for s in b.scenario.outcome_sizes)
    table[(slice(None),) * n + keep + _single_index(n)] = b.table
    return DetectionBehavior(b.scenario, 1, table)


# --- detector models --------------------------------------------------------


@dataclass(frozen=True)
class DetectorModel:
    """Per-party transmission and detection.

    With two arriving particles a number-resolving detector reports one count
    with probability ``eta_1of2``, two counts with ``eta_det**2`` and none
    otherwise. An on-off detector reports a click (count 1) with probability
    ``eta_1of2`` and nothing otherwise.
    """

    eta_det: float = 1.0
    eta_tra: float = 1.0
    eta_1of2: float = 0.0
    number_resolving: bool = True

    def __post_init__(self):
        for name in ("eta_det", "eta_tra", "eta_1of2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} = {v} outside [0, 1]")
        if self.number_resolving and self.eta_1of2 + self.eta_det**2 > 1.0 + 1e-12:
            raise ValueError("eta_1of2 + eta_det^2 exceeds one for a number-resolving detector")

    @classmethod
    def independent(cls, eta_det: float, eta_tra: float = 1.0) -> "DetectorModel":
        """Both particles detected independently: eta_1of2 = 2 eta (1 - eta)."""
        return cls(eta_det, eta_tra, 2 * eta_det * (1 - eta_det), True)

    @classmethod
    def on_off(cls, eta_det: float, eta_tra: float = 1.0) -> "DetectorModel":
        """Click detector; two arrivals click unless both particles are missed."""
        return cls(eta_det, eta_tra, 1 - (1 - eta_det) ** 2, False)

    def detection_matrix(self) -> np.ndarray:
        """P(register m | arrive n) for n, m in 0..2."""
        d = np.zeros((3, 3))
        d[0, 0] = 1.0
        d[1, 1] = self.eta_det
        d[1, 0] = 1.0 - self.eta_det
        if self.number_resolving:
            d[2, 1] = self.eta_1of2
            d[2, 2] = self.eta_det**2
        else:
            d[2, 1] = self.eta_1of2
        d[2, 0] = 1.0 - d[2, 1] - d[2, 2]
        return d

    def count_channel(self) -> np.ndarray:
        """P(register m | sent n) including transmission loss, n, m in 0..2."""
        t = np.zeros((3, 3))
        for sent in range(3):
            for arr in range(sent + 1):
                t[sent, arr] = math.comb(sent, arr) * self.eta_tra**arr * (1 - self.eta_tra) ** (sent - arr)
        return t @ self.detection_matrix()

    def to_dict(self) -> dict:
        return {
            "eta_det": self.eta_det,
            "eta_tra": self.eta_tra,
            "eta_1of2": self.eta_1of2,
            "number_resolving": self.number_resolving,
        }


Allocation = Mapping[tuple, float]


def apply_detector_model(
    allocation: Allocation | Callable[[tuple], Allocation],
    detectors: DetectorModel | Sequence[DetectorModel],
    behavior: Behavior | None = None,
    scenario: BellScenario | None = None,
) -> DetectionBehavior:
    """Exact p(a, d | x) from a particle allocation and per-party detectors.

    ``allocation`` maps per-party particle counts to probabilities, either
    once for all settings or per setting vector. When every party was sent
    exactly one particle the registered parties' outcomes follow
    ``behavior`` (marginalised over silent parties); all other registered
    events get uniformly random outcomes.
    """
    if behavior is not None:
        scenario = behavior.scenario
    if scenario is None:
        raise StructuralError("need a behavior or a scenario")
    n = scenario.num_parties
    if isinstance(detectors, DetectorModel):
        detectors = [detectors] * n
    if len(detectors) != n:
        raise StructuralError("one detector model per party")
    channels = [dm.count_channel() for dm in detectors]
    alloc_for = allocation if callable(allocation) else (lambda x, _a=allocation: _a)

    # find the largest count so the table can be sized up front
    max_total = 1
    for x in scenario.joint_settings():
        for counts in alloc_for(x):
            if len(counts) != n:
                raise StructuralError(f"allocation {counts} has wrong length")
            if max(counts) > 2:
                raise UnsupportedOperationError(
                    f"{max(counts)} particles at one detector; only up to two are modelled"
                )
            max_total = max(max_total, max(counts))
    table = np.zeros(DetectionBehavior.shape_for(scenario, max_total))
    sizes = scenario.outcome_sizes
    ones = (1,) * n
    for x in scenario.joint_settings():
        for counts, w in alloc_for(x).items():
            if w == 0.0:
                continue
            for reg in itertools.product(*(range(c + 1) for c in counts)):
                p_reg = w * np.prod([channels[k][counts[k], reg[k]] for k in range(n)])
                if p_reg == 0.0:
                    continue
                seen = [k for k in range(n) if reg[k] > 0]
                if tuple(counts) == ones and behavior is not None:
                    joint = behavior.at(x).sum(axis=tuple(k for k in range(n) if reg[k] == 0))
                else:
                    joint = np.full(tuple(sizes[k] for k in seen), 1.0 / np.prod([sizes[k] for k in seen]))
                for a_seen in itertools.product(*(range(sizes[k]) for k in seen)):
                    a = [sizes[k] for k in range(n)]  # null slots
                    for k, ak in zip(seen, a_seen):
                        a[k] = ak
                    table[tuple(x) + tuple(a) + tuple(reg)] += p_reg * joint[a_seen]
    return DetectionBehavior(scenario, max_total, table)

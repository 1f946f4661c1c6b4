"""Bell scenarios and behaviors p(a|x).

A behavior is stored as a dense array with axes
``(x_1, ..., x_N, a_1, ..., a_N)``; outcome axes index into each party's
alphabet. Settings are 0-based.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import StructuralError, UnsupportedOperationError

NORM_TOL = 1e-12
DICHOTOMIC = (1, -1)


@dataclass(frozen=True)
class BellScenario:
    """N parties, M_k settings each, finite outcome alphabet per party."""

    settings: tuple[int, ...]
    outcomes: tuple[tuple, ...] = None

    def __post_init__(self):
        settings = tuple(int(m) for m in self.settings)
        if len(settings) < 1:
            raise StructuralError("need at least one party")
        if any(m < 1 for m in settings):
            raise StructuralError(f"every party needs at least one setting, got {settings}")
        outcomes = self.outcomes
        if outcomes is None:
            outcomes = tuple(DICHOTOMIC for _ in settings)
        outcomes = tuple(tuple(alpha) for alpha in outcomes)
        if len(outcomes) != len(settings):
            raise StructuralError("one outcome alphabet per party required")
        if any(len(alpha) == 0 for alpha in outcomes):
            raise StructuralError("outcome alphabets must be nonempty")
        object.__setattr__(self, "settings", settings)
        object.__setattr__(self, "outcomes", outcomes)

    @classmethod
    def dichotomic(cls, num_parties: int, num_settings: int = 2) -> "BellScenario":
        return cls(settings=(num_settings,) * num_parties)

    @property
    def num_parties(self) -> int:
        return len(self.settings)

    @property
    def outcome_sizes(self) -> tuple[int, ...]:
        return tuple(len(alpha) for alpha in self.outcomes)

    @property
    def table_shape(self) -> tuple[int, ...]:
        return self.settings + self.outcome_sizes

    @property
    def num_joint_settings(self) -> int:
        return int(np.prod(self.settings))

    @property
    def num_joint_outcomes(self) -> int:
        return int(np.prod(self.outcome_sizes))

    @property
    def is_dichotomic(self) -> bool:
        return all(sorted(alpha) == [-1, 1] for alpha in self.outcomes)

    def joint_settings(self):
        """All setting vectors x, last party varying fastest."""
        return itertools.product(*(range(m) for m in self.settings))

    def joint_outcomes(self):
        return itertools.product(*(range(n) for n in self.outcome_sizes))

    def check_setting(self, x: Sequence[int]) -> tuple[int, ...]:
        x = tuple(int(v) for v in x)
        if len(x) != self.num_parties:
            raise StructuralError(f"setting vector {x} has wrong length for {self.num_parties} parties")
        for k, (xk, m) in enumerate(zip(x, self.settings)):
            if not 0 <= xk < m:
                raise StructuralError(f"setting {xk} of party {k} outside range 0..{m - 1}")
        return x

    def to_dict(self) -> dict:
        return {
            "parties": self.num_parties,
            "settings": list(self.settings),
            "outcomes": [list(alpha) for alpha in self.outcomes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BellScenario":
        scen = cls(settings=tuple(d["settings"]), outcomes=tuple(tuple(a) for a in d["outcomes"]))
        if "parties" in d and d["parties"] != scen.num_parties:
            raise StructuralError("'parties' disagrees with the settings list")
        return scen


def parity_signs(scenario: BellScenario) -> np.ndarray:
    """Array over joint outcomes holding a_1 * ... * a_N."""
    if not scenario.is_dichotomic:
        raise UnsupportedOperationError("parity products need {-1,+1} alphabets")
    out = np.ones(scenario.outcome_sizes)
    for k, alpha in enumerate(scenario.outcomes):
        shape = [1] * scenario.num_parties
        shape[k] = len(alpha)
        out = out * np.asarray(alpha, dtype=float).reshape(shape)
    return out


def _freeze(arr) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Behavior:
    """Conditional probability table p(a|x)."""

    scenario: BellScenario
    table: np.ndarray = field(repr=False)

    def __post_init__(self):
        table = _freeze(self.table)
        if table.shape != self.scenario.table_shape:
            raise StructuralError(
                f"table shape {table.shape} does not match scenario shape {self.scenario.table_shape}"
            )
        object.__setattr__(self, "table", table)

    def prob(self, a, x) -> float:
        return float(self.table[tuple(x) + tuple(a)])

    def at(self, x) -> np.ndarray:
        """Joint-outcome table for setting vector x."""
        return self.table[tuple(x)]

    def to_dict(self) -> dict:
        n = self.scenario.num_parties
        # reverse party order so that a C-order reshape puts party 1 fastest
        rev = self.table.transpose(tuple(range(n - 1, -1, -1)) + tuple(range(2 * n - 1, n - 1, -1)))
        flat = rev.reshape(self.scenario.num_joint_settings, self.scenario.num_joint_outcomes)
        return {"scenario": self.scenario.to_dict(), "table": flat.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Behavior":
        scen = BellScenario.from_dict(d["scenario"])
        n = scen.num_parties
        flat = np.asarray(d["table"], dtype=float)
        if flat.shape != (scen.num_joint_settings, scen.num_joint_outcomes):
            raise StructuralError(f"serialized table has shape {flat.shape}")
        rev_shape = scen.settings[::-1] + scen.outcome_sizes[::-1]
        rev = flat.reshape(rev_shape)
        table = rev.transpose(tuple(range(n - 1, -1, -1)) + tuple(range(2 * n - 1, n - 1, -1)))
        return cls(scen, table)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "Behavior":
        return cls.from_dict(json.loads(s))


def uniform_behavior(scenario: BellScenario) -> Behavior:
    return Behavior(scenario, np.full(scenario.table_shape, 1.0 / scenario.num_joint_outcomes))


def product_behavior(scenario: BellScenario, local_tables: Sequence[np.ndarray]) -> Behavior:
    """p(a|x) = prod_k q_k(a_k|x_k); ``local_tables[k]`` has shape (M_k, |A_k|)."""
    n = scenario.num_parties
    table = np.ones(scenario.table_shape)
    for k, q in enumerate(local_tables):
        q = np.asarray(q, dtype=float)
        if q.shape != (scenario.settings[k], scenario.outcome_sizes[k]):
            raise StructuralError(f"local table {k} has shape {q.shape}")
        shape = [1] * (2 * n)
        shape[k] = q.shape[0]
        shape[n + k] = q.shape[1]
        table = table * q.reshape(shape)
    return Behavior(scenario, table)


def deterministic_behavior(scenario: BellScenario, responses: Sequence[Sequence[int]]) -> Behavior:
    """Behavior where party k outputs outcome index ``responses[k][x_k]``."""
    tables = []
    for k, resp in enumerate(responses):
        q = np.zeros((scenario.settings[k], scenario.outcome_sizes[k]))
        q[np.arange(scenario.settings[k]), list(resp)] = 1.0
        tables.append(q)
    return product_behavior(scenario, tables)


def validate_behavior(b: Behavior, tol: float = NORM_TOL) -> list[str]:
    """Constraint violations of ``b``; empty list means valid."""
    problems = []
    n = b.scenario.num_parties
    neg = np.argwhere(b.table < -tol)
    for idx in neg:
        idx = tuple(int(i) for i in idx)
        problems.append(
            f"negative probability {b.table[idx]:.3g} at x={idx[:n]}, a={idx[n:]}"
        )
    sums = b.table.reshape(b.scenario.settings + (-1,)).sum(axis=-1)
    for x in b.scenario.joint_settings():
        if abs(sums[x] - 1.0) > tol:
            problems.append(f"outcomes for x={x} sum to {float(sums[x])!r}")
    return problems


def no_signaling_violation(table: np.ndarray, num_parties: int) -> float:
    """Largest change of any (N-1)-party marginal under the removed party's setting."""
    n = num_parties
    worst = 0.0
    for k in range(n):
        marg = table.sum(axis=n + k)
        ref = np.take(marg, [0], axis=k)
        worst = max(worst, float(np.max(np.abs(marg - ref))))
    return worst


def check_no_signaling(b: Behavior, tol: float = NORM_TOL) -> tuple[bool, float]:
    """Operational no-signaling: each party's setting leaves the others' marginal unchanged."""
    worst = no_signaling_violation(b.table, b.scenario.num_parties)
    return worst <= tol, worst


def full_correlator(b: Behavior, x: Sequence[int]) -> float:
    """<A_1 ... A_N>_x for dichotomic alphabets."""
    x = b.scenario.check_setting(x)
    return float(np.sum(parity_signs(b.scenario) * b.at(x)))


def parity_moments(b: Behavior, x: Sequence[int]) -> dict[frozenset, float]:
    """<prod_{k in S} A_k>_x for every subset S of parties (S empty gives the norm)."""
    x = b.scenario.check_setting(x)
    if not b.scenario.is_dichotomic:
        raise UnsupportedOperationError("parity moments need {-1,+1} alphabets")
    n = b.scenario.num_parties
    p = b.at(x)
    moments = {}
    for r in range(n + 1):
        for subset in itertools.combinations(range(n), r):
            w = np.ones(b.scenario.outcome_sizes)
            for k in subset:
                shape = [1] * n
                shape[k] = 2
                w = w * np.asarray(b.scenario.outcomes[k], dtype=float).reshape(shape)
            moments[frozenset(subset)] = float(np.sum(w * p))
    return moments


def table_from_moments(scenario: BellScenario, moments: dict[frozenset, float]) -> np.ndarray:
    """Invert ``parity_moments`` for one setting: p(a) = 2^-N sum_S prod_{k in S} a_k m_S."""
    n = scenario.num_parties
    out = np.zeros(scenario.outcome_sizes)
    for subset, m in moments.items():
        w = np.ones(scenario.outcome_sizes)
        for k in subset:
            shape = [1] * n
            shape[k] = 2
            w = w * np.asarray(scenario.outcomes[k], dtype=float).reshape(shape)
        out += m * w
    return out / 2**n

"""Classical bounds by exhaustive enumeration.

The LHV bound is the maximum over deterministic strategies. The HLNHV bound
for three parties is the maximum over the three bipartitions {k | rest} of
(deterministic strategy of k) x (vertex of the two-party no-signaling
polytope); a linear functional is maximised at a vertex of the convex hull,
and these products are its vertices.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .exceptions import SearchSpaceError, UnsupportedOperationError
from .inequalities import BellFunctional
from .scenario import Behavior, BellScenario, check_no_signaling, deterministic_behavior

MAX_STRATEGIES = 10**7


@dataclass(frozen=True)
class DeterministicStrategy:
    """``responses[k][x_k]`` is the outcome index party k returns for setting x_k."""

    responses: tuple[tuple[int, ...], ...]

    def behavior(self, scenario: BellScenario) -> Behavior:
        return deterministic_behavior(scenario, self.responses)

    def outcomes(self, scenario: BellScenario) -> list[list]:
        return [[scenario.outcomes[k][a] for a in resp] for k, resp in enumerate(self.responses)]


def local_strategies(num_settings: int, num_outcomes: int) -> np.ndarray:
    """Rows are response maps x -> a in lexicographic order."""
    return np.array(list(itertools.product(range(num_outcomes), repeat=num_settings)), dtype=int).reshape(
        -1, num_settings
    )


def strategy_count(scenario: BellScenario) -> int:
    return int(np.prod([a**m for a, m in zip(scenario.outcome_sizes, scenario.settings)], dtype=object))


def lhv_bound(f: BellFunctional, limit: int = MAX_STRATEGIES) -> tuple[float, DeterministicStrategy]:
    """Maximum of ``f`` over deterministic local strategies.

    Ties go to the lexicographically smallest strategy encoding.
    """
    scen = f.scenario
    total = strategy_count(scen)
    if total > limit:
        raise SearchSpaceError(total, limit)
    n = scen.num_parties
    tables = [local_strategies(m, a) for m, a in zip(scen.settings, scen.outcome_sizes)]
    values = np.zeros(tuple(len(t) for t in tables))
    for x in scen.joint_settings():
        cx = f.coefficients[x]
        values += cx[np.ix_(*(tables[k][:, x[k]] for k in range(n)))]
    flat = int(np.argmax(values))
    idx = np.unravel_index(flat, values.shape)
    strat = DeterministicStrategy(tuple(tuple(int(v) for v in tables[k][i]) for k, i in enumerate(idx)))
    return float(values[idx]), strat


# --- two-party no-signaling polytope ----------------------------------------


@dataclass(frozen=True)
class NSVertex:
    """Extreme point of the 2-setting / 2-outcome two-party no-signaling polytope.

    ``table`` has axes (x, y, a, b).
    """

    table: np.ndarray = field(repr=False)
    deterministic: bool

    def behavior(self) -> Behavior:
        return Behavior(BellScenario.dichotomic(2), self.table)


def _ns_equalities() -> np.ndarray:
    rows = []

    def idx(x, y, a, b):
        return ((x * 2 + y) * 2 + a) * 2 + b

    for x, y in itertools.product(range(2), repeat=2):
        r = np.zeros(16)
        for a, b in itertools.product(range(2), repeat=2):
            r[idx(x, y, a, b)] = 1
        rows.append(r)
    for x in range(2):
        r = np.zeros(16)
        for b in range(2):
            r[idx(x, 0, 0, b)] += 1
            r[idx(x, 1, 0, b)] -= 1
        rows.append(r)
    for y in range(2):
        r = np.zeros(16)
        for a in range(2):
            r[idx(0, y, a, 0)] += 1
            r[idx(1, y, a, 0)] -= 1
        rows.append(r)
    return np.array(rows)


def _grid_blocks():
    """2x2 tables with entries in {0, 1/2, 1} summing to one."""
    blocks = []
    for cells in itertools.product((0.0, 0.5, 1.0), repeat=4):
        if abs(sum(cells) - 1.0) < 1e-12:
            blocks.append(np.array(cells).reshape(2, 2))
    return blocks


def enumerate_ns_vertices() -> list[NSVertex]:
    """All vertices of the 2-2-2 no-signaling polytope.

    Candidates are normalised tables on the {0, 1/2, 1} grid that satisfy
    no-signaling; a candidate is a vertex when the equality constraints plus
    its active nonnegativity constraints have full rank 16.
    """
    eq = _ns_equalities()
    blocks = _grid_blocks()
    out = []
    for choice in itertools.product(blocks, repeat=4):
        table = np.array(choice).reshape(2, 2, 2, 2)
        flat = table.reshape(-1)
        if np.max(np.abs(eq[4:] @ flat)) > 1e-12:
            continue
        active = np.eye(16)[flat == 0.0]
        if np.linalg.matrix_rank(np.vstack([eq, active])) == 16:
            out.append(NSVertex(table, deterministic=bool(np.all((flat == 0.0) | (flat == 1.0)))))
    return out


_VERTEX_CACHE: list[NSVertex] = []


def ns_vertices() -> list[NSVertex]:
    if not _VERTEX_CACHE:
        _VERTEX_CACHE.extend(enumerate_ns_vertices())
    return list(_VERTEX_CACHE)


def assert_vertices_no_signaling(vertices, tol=1e-12) -> float:
    worst = 0.0
    for v in vertices:
        ok, gap = check_no_signaling(v.behavior(), tol)
        worst = max(worst, gap)
        if not ok:
            raise AssertionError(f"vertex violates no-signaling by {gap}")
    return worst


# --- HLNHV bound for three parties ------------------------------------------


@dataclass(frozen=True)
class HybridWitness:
    """Optimal product of a deterministic lone party and a no-signaling pair."""

    lone_party: int
    pair: tuple[int, int]
    lone_response: tuple[int, ...]
    pair_vertex: int

    def to_dict(self) -> dict:
        return {
            "lone_party": self.lone_party,
            "pair": list(self.pair),
            "lone_response": list(self.lone_response),
            "pair_vertex": self.pair_vertex,
        }


def hybrid_table(lone_party: int, lone_response, pair_table: np.ndarray) -> np.ndarray:
    """Three-party table p(a|x) = [a_k = r(x_k)] * P(a_i, a_j | x_i, x_j)."""
    pair = [k for k in range(3) if k != lone_party]
    lone = np.zeros((2, 2))
    lone[np.arange(2), list(lone_response)] = 1.0
    # axes of the einsum output: x0 x1 x2 a0 a1 a2
    letters_x, letters_a = "uvw", "def"
    lone_sub = letters_x[lone_party] + letters_a[lone_party]
    pair_sub = letters_x[pair[0]] + letters_x[pair[1]] + letters_a[pair[0]] + letters_a[pair[1]]
    return np.einsum(f"{lone_sub},{pair_sub}->{letters_x}{letters_a}", lone, pair_table)


def hlnhv_bound(f: BellFunctional) -> tuple[float, HybridWitness]:
    scen = f.scenario
    if scen.num_parties != 3:
        raise UnsupportedOperationError(
            "exact HLNHV bounds are only enumerated for three parties; register literature bounds in the catalog"
        )
    if scen.settings != (2, 2, 2) or not scen.is_dichotomic:
        raise UnsupportedOperationError("HLNHV enumeration needs two settings and two outcomes per party")
    vertices = ns_vertices()
    best, witness = -np.inf, None
    for lone in range(3):
        pair = tuple(k for k in range(3) if k != lone)
        for resp in itertools.product(range(2), repeat=2):
            for vi, v in enumerate(vertices):
                val = float(np.sum(f.coefficients * hybrid_table(lone, resp, v.table)))
                if val > best + 1e-12:
                    best, witness = val, HybridWitness(lone, pair, resp, vi)
    return best, witness


def signaling_hybrid_bound(f: BellFunctional) -> float:
    """Three-party hybrid bound when the pair may share arbitrary (even signaling) correlations.

    Postselection can make a pair's conditional box signaling, so this is the
    bound that actually constrains postselected hybrid mixtures.
    """
    scen = f.scenario
    if scen.num_parties != 3 or scen.settings != (2, 2, 2) or not scen.is_dichotomic:
        raise UnsupportedOperationError("needs three dichotomic two-setting parties")
    best = -np.inf
    pair_settings = list(itertools.product(range(2), repeat=2))
    for lone in range(3):
        for resp in itertools.product(range(2), repeat=2):
            for g in itertools.product(range(4), repeat=4):
                pt = np.zeros((2, 2, 2, 2))
                for (xi, xj), o in zip(pair_settings, g):
                    pt[xi, xj, o // 2, o % 2] = 1.0
                best = max(best, float(np.sum(f.coefficients * hybrid_table(lone, resp, pt))))
    return best

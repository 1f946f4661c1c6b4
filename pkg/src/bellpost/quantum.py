"""Qubit state vectors, dichotomic projective measurements and setting search."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import StructuralError, UnsupportedOperationError
from .inequalities import BellFunctional
from .scenario import Behavior, BellScenario

MAX_QUBITS = 12


@dataclass(frozen=True)
class PureState:
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        amp = np.array(self.amplitudes, dtype=complex).reshape(-1)
        n = int(round(math.log2(amp.size))) if amp.size else 0
        if amp.size == 0 or 2**n != amp.size:
            raise StructuralError(f"state dimension {amp.size} is not a power of two")
        if abs(np.linalg.norm(amp) - 1.0) > 1e-12:
            raise ValueError(f"state norm {np.linalg.norm(amp)} differs from 1")
        amp.setflags(write=False)
        object.__setattr__(self, "amplitudes", amp)

    @property
    def num_qubits(self) -> int:
        return int(round(math.log2(self.amplitudes.size)))


def ghz_state(num_parties: int) -> PureState:
    """(|0...0> + |1...1>)/sqrt(2)."""
    if not 1 <= num_parties <= MAX_QUBITS:
        raise ValueError(f"GHZ state supported for 1 <= N <= {MAX_QUBITS}")
    amp = np.zeros(2**num_parties, dtype=complex)
    amp[0] = amp[-1] = 1 / math.sqrt(2)
    return PureState(amp)


@dataclass(frozen=True)
class MeasurementSetting:
    """Bloch angles ``angles[k][x_k] = (theta, phi)`` of the observable n.sigma.

    Outcome index 0 is eigenvalue +1, index 1 is -1.
    """

    angles: tuple[tuple[tuple[float, float], ...], ...]

    def __post_init__(self):
        angles = tuple(tuple((float(t), float(p)) for t, p in party) for party in self.angles)
        object.__setattr__(self, "angles", angles)

    @classmethod
    def from_array(cls, arr, settings) -> "MeasurementSetting":
        arr = np.asarray(arr, dtype=float).reshape(-1, 2)
        out, i = [], 0
        for m in settings:
            out.append(tuple(map(tuple, arr[i : i + m])))
            i += m
        return cls(tuple(out))

    def to_array(self) -> np.ndarray:
        return np.array([ang for party in self.angles for ang in party], dtype=float)

    @property
    def settings(self) -> tuple[int, ...]:
        return tuple(len(p) for p in self.angles)

    def bloch_vectors(self) -> list[np.ndarray]:
        return [
            np.array([[math.sin(t) * math.cos(p), math.sin(t) * math.sin(p), math.cos(t)] for t, p in party])
            for party in self.angles
        ]

    def scenario(self) -> BellScenario:
        return BellScenario(self.settings)


def eigenbasis(theta: float, phi: float) -> np.ndarray:
    """Rows are <+n| and <-n| for n = (sin t cos p, sin t sin p, cos t)."""
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    e = complex(math.cos(phi), math.sin(phi))
    plus = np.array([c, e * s])
    minus = np.array([s, -e * c])
    return np.array([plus.conj(), minus.conj()])


def observable(theta: float, phi: float) -> np.ndarray:
    n = [math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta)]
    return np.array([[n[2], n[0] - 1j * n[1]], [n[0] + 1j * n[1], -n[2]]])


def _outcome_amplitudes(psi: np.ndarray, bases: list[np.ndarray]) -> np.ndarray:
    """Axes (x_1..x_N, a_1..a_N) of <a|_x psi, with ``bases[k]`` shaped (M_k, 2, 2)."""
    n = len(bases)
    t = psi.reshape((2,) * n)
    # contract the qubit axis of party k; new (M_k, 2) axes go to the end
    for k in range(n):
        t = np.tensordot(t, bases[k], axes=([0], [2]))
    # axes are now (M_1, a_1, M_2, a_2, ...)
    order = [2 * k for k in range(n)] + [2 * k + 1 for k in range(n)]
    return t.transpose(order)


def quantum_table(state: PureState, settings: MeasurementSetting) -> np.ndarray:
    if state.num_qubits != len(settings.angles):
        raise StructuralError(f"{state.num_qubits}-qubit state measured by {len(settings.angles)} parties")
    bases = [np.array([eigenbasis(t, p) for t, p in party]) for party in settings.angles]
    amp = _outcome_amplitudes(state.amplitudes, bases)
    return np.abs(amp) ** 2


def quantum_behavior(state: PureState, settings: MeasurementSetting) -> Behavior:
    """Born-rule behavior; outcome order (+1, -1) per party."""
    return Behavior(settings.scenario(), quantum_table(state, settings))


# --- setting optimisation ---------------------------------------------------


@dataclass
class OptimizationResult:
    value: float
    settings: MeasurementSetting
    seed: int
    restarts: int
    evaluations: int
    best_restart: int
    restart_values: list[float]

    def to_dict(self) -> dict:
        return {
            "value": self.value,
            "angles": [[list(a) for a in party] for party in self.settings.angles],
            "seed": self.seed,
            "restarts": self.restarts,
            "evaluations": self.evaluations,
            "best_restart": self.best_restart,
        }


def _coordinate_ascent(objective, x0, step, halvings, min_step):
    x = np.array(x0, dtype=float)
    best = objective(x)
    evals = 1
    level = 0
    while True:
        improved = True
        while improved:
            improved = False
            for i in range(x.size):
                for sign in (1.0, -1.0):
                    trial = x.copy()
                    trial[i] += sign * step
                    v = objective(trial)
                    evals += 1
                    if v > best:
                        x, best, improved = trial, v, True
                        break
        level += 1
        if level > halvings and step <= min_step:
            break
        step /= 2
    return best, x, evals


def optimize_settings(
    f: BellFunctional,
    state: PureState,
    restarts: int = 32,
    seed: int = 0,
    initial_step: float = math.pi / 8,
    halvings: int = 12,
    min_step: float = math.inf,
    start=None,
) -> OptimizationResult:
    """Maximise ``evaluate(f, quantum_behavior(state, angles))`` over Bloch angles.

    Multi-start coordinate ascent: each coordinate is moved by +-step until no
    move improves, then the step is halved ``halvings`` times. A finite
    ``min_step`` keeps halving beyond that until the step is below it.
    """
    scen = f.scenario
    if not scen.is_dichotomic:
        raise UnsupportedOperationError("setting search needs dichotomic outcomes")
    if state.num_qubits != scen.num_parties:
        raise StructuralError("state and functional have different party counts")
    # functional is stored on alphabet order; quantum tables use (+1, -1)
    coeffs = f.coefficients
    for k, alpha in enumerate(scen.outcomes):
        if tuple(alpha) != (1, -1):
            coeffs = np.flip(coeffs, axis=scen.num_parties + k)
    dim = 2 * sum(scen.settings)

    def objective(params):
        ms = MeasurementSetting.from_array(params, scen.settings)
        return float(np.sum(coeffs * quantum_table(state, ms)))

    rng = np.random.default_rng(seed)
    results, total_evals = [], 0
    for r in range(restarts):
        if r == 0 and start is not None:
            x0 = np.asarray(start, dtype=float).reshape(-1)
        else:
            x0 = rng.uniform(0.0, 2 * math.pi, size=dim)
        val, x, evals = _coordinate_ascent(objective, x0, initial_step, halvings, min_step)
        total_evals += evals
        results.append((val, x))
    values = [v for v, _ in results]
    best_i = int(np.argmax(values))
    best_val, best_x = results[best_i]
    return OptimizationResult(
        value=best_val,
        settings=MeasurementSetting.from_array(best_x, scen.settings),
        seed=seed,
        restarts=restarts,
        evaluations=total_evals,
        best_restart=best_i,
        restart_values=values,
    )


def chsh_optimal_settings() -> MeasurementSetting:
    """Equatorial angles reaching 2*sqrt(2) on the two-qubit GHZ state for the catalog CHSH."""
    h = math.pi / 2
    return MeasurementSetting(((( h, 0.0), (h, math.pi / 2)), ((h, -math.pi / 4), (h, math.pi / 4))))

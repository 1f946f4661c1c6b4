"""Linear Bell functionals sum_{a,x} c_{a,x} p(a|x) <= I and their constants.

``C`` is sum_x max_a |c_{a,x}|. ``C_opt`` replaces the constant weight N of
every setting with its Hamming distance to a reference setting y, minimised
over y and divided by N.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence

import numpy as np

from .exceptions import StructuralError, UnsupportedOperationError
from .scenario import Behavior, BellScenario, parity_signs

LHV = "LHV"
HLNHV = "HLNHV"
MODEL_CLASSES = (LHV, HLNHV)


@dataclass(frozen=True)
class BellFunctional:
    scenario: BellScenario
    coefficients: np.ndarray = field(repr=False)
    classical_bound: float
    model_class: str = LHV
    name: str = ""
    quantum_value: float | None = None

    def __post_init__(self):
        coeffs = np.array(self.coefficients, dtype=float)
        if coeffs.shape != self.scenario.table_shape:
            raise StructuralError(
                f"coefficient shape {coeffs.shape} does not match scenario {self.scenario.table_shape}"
            )
        coeffs.setflags(write=False)
        object.__setattr__(self, "coefficients", coeffs)
        if self.model_class not in MODEL_CLASSES:
            raise ValueError(f"model_class must be one of {MODEL_CLASSES}")
        c = constant_C(self)
        if c < self.classical_bound - 1e-12:
            raise ValueError(f"classical bound {self.classical_bound} exceeds C = {c}")

    @property
    def settings_excess(self) -> int:
        """sum_k M_k - N, the number of 'other' settings entering the LHV sharpening."""
        return sum(self.scenario.settings) - self.scenario.num_parties


@dataclass(frozen=True)
class CorrelatorFunctional:
    """sum_x c~_x <A_1...A_N>_x on dichotomic alphabets."""

    scenario: BellScenario
    coefficients: np.ndarray

    def __post_init__(self):
        coeffs = np.array(self.coefficients, dtype=float)
        if coeffs.shape != self.scenario.settings:
            raise StructuralError(f"need one correlator coefficient per joint setting, got {coeffs.shape}")
        object.__setattr__(self, "coefficients", coeffs)

    def expand(self) -> np.ndarray:
        """Full table c_{a,x} = a_1...a_N c~_x."""
        n = self.scenario.num_parties
        signs = parity_signs(self.scenario)
        return self.coefficients.reshape(self.scenario.settings + (1,) * n) * signs

    def to_functional(self, classical_bound, model_class=LHV, name="", quantum_value=None) -> BellFunctional:
        return BellFunctional(self.scenario, self.expand(), classical_bound, model_class, name, quantum_value)


def _check_same(f: BellFunctional, b: Behavior):
    if f.scenario != b.scenario:
        raise StructuralError("functional and behavior live on different scenarios")


def evaluate(f: BellFunctional, b: Behavior) -> float:
    _check_same(f, b)
    return float(np.sum(f.coefficients * b.table))


def setting_weights(f: BellFunctional) -> np.ndarray:
    """max_a |c_{a,x}| for every joint setting x."""
    n = f.scenario.num_parties
    return np.abs(f.coefficients).max(axis=tuple(range(n, 2 * n)))


def constant_C(f: BellFunctional) -> float:
    return float(setting_weights(f).sum())


def setting_distance(x: Sequence[int], y: Sequence[int]) -> int:
    """Number of parties whose settings differ."""
    if len(x) != len(y):
        raise StructuralError(f"setting vectors of lengths {len(x)} and {len(y)}")
    return sum(1 for a, b in zip(x, y) if a != b)


def constant_C_opt(f: BellFunctional) -> tuple[float, tuple[int, ...]]:
    """min_y sum_x max_a|c_{a,x}| D(x,y) / N and the first minimising y."""
    w = setting_weights(f)
    n = f.scenario.num_parties
    xs = list(f.scenario.joint_settings())
    best, best_y = math.inf, None
    for y in xs:
        total = sum(w[x] * setting_distance(x, y) for x in xs) / n
        if total < best - 1e-15:
            best, best_y = total, y
    return float(best), best_y


def lift(f: BellFunctional, parties: Sequence[int], num_parties: int, name: str = "") -> BellFunctional:
    """Embed ``f`` on ``parties`` of a larger dichotomic scenario.

    Remaining parties are fixed to setting 0 and their outcomes summed over,
    so the lifted value equals ``f`` on the marginal of ``parties``.
    """
    parties = list(parties)
    if len(parties) != f.scenario.num_parties or len(set(parties)) != len(parties):
        raise StructuralError("need one distinct target party per functional party")
    big_settings, big_outcomes = [2] * num_parties, [(1, -1)] * num_parties
    for j, k in enumerate(parties):
        big_settings[k] = f.scenario.settings[j]
        big_outcomes[k] = f.scenario.outcomes[j]
    scen = BellScenario(tuple(big_settings), tuple(big_outcomes))
    coeffs = np.zeros(scen.table_shape)
    others = [k for k in range(num_parties) if k not in parties]
    n_small = f.scenario.num_parties
    for idx in itertools.product(*(range(s) for s in f.scenario.table_shape)):
        xs, as_ = idx[:n_small], idx[n_small:]
        x_full, a_full = [0] * num_parties, [slice(None)] * num_parties
        for j, k in enumerate(parties):
            x_full[k] = xs[j]
            a_full[k] = as_[j]
        for k in others:
            x_full[k] = 0
        coeffs[tuple(x_full) + tuple(a_full)] = f.coefficients[idx]
    return BellFunctional(scen, coeffs, f.classical_bound, f.model_class, name or f"{f.name}-lifted", None)


# --- catalog -------------------------------------------------------------


def mermin_correlator(num_parties: int) -> np.ndarray:
    """c~_x = Im(i^m), m the number of parties using their second setting."""
    out = np.zeros((2,) * num_parties)
    for x in itertools.product((0, 1), repeat=num_parties):
        out[x] = (1j ** sum(x)).imag
    return np.rint(out)


def svetlichny_correlator(num_parties: int = 3) -> np.ndarray:
    """c~_x = Re(i^m) + Im(i^m); for two parties this is CHSH."""
    out = np.zeros((2,) * num_parties)
    for x in itertools.product((0, 1), repeat=num_parties):
        z = 1j ** sum(x)
        out[x] = z.real + z.imag
    return np.rint(out)


_REGISTRY: dict[str, dict] = {}


def functional_from_record(rec: dict) -> BellFunctional:
    settings = tuple(rec["settings"])
    outcomes = tuple(tuple(a) for a in rec["outcomes"]) if "outcomes" in rec else None
    scen = BellScenario(settings, outcomes)
    if scen.num_parties != rec["parties"]:
        raise StructuralError(f"record {rec['name']!r}: parties disagrees with settings")
    if "correlator_coeffs" in rec:
        coeffs = CorrelatorFunctional(scen, np.asarray(rec["correlator_coeffs"], dtype=float)).expand()
    elif "full_coeffs" in rec:
        coeffs = np.asarray(rec["full_coeffs"], dtype=float)
    else:
        raise StructuralError(f"record {rec['name']!r} has no coefficients")
    return BellFunctional(
        scen,
        coeffs,
        float(rec["classical_bound"]),
        rec.get("model_class", LHV),
        rec["name"],
        rec.get("quantum_value"),
    )


def register(rec: dict, key: str | None = None) -> None:
    """Add a catalog record (validated by building the functional once)."""
    functional_from_record(rec)
    _REGISTRY[key or f"{rec['name']}:{rec['parties']}"] = dict(rec)


def load_catalog_file(path) -> None:
    with open(path) as fh:
        for rec in json.load(fh):
            register(rec)


def _load_builtin():
    text = resources.files("bellpost").joinpath("catalog.json").read_text()
    for rec in json.loads(text):
        register(rec)


def catalog_records() -> list[dict]:
    if not _REGISTRY:
        _load_builtin()
    return [dict(r) for r in _REGISTRY.values()]


def mermin_record(num_parties: int) -> dict:
    n = num_parties
    return {
        "name": "mermin",
        "parties": n,
        "settings": [2] * n,
        "correlator_coeffs": mermin_correlator(n).tolist(),
        "classical_bound": 2.0 ** ((n - 1) / 2),
        "model_class": LHV,
        "quantum_value": 2.0 ** (n - 1),
    }


def catalog(name: str, num_parties: int | None = None) -> BellFunctional:
    """Named inequality: chsh (N=2), mermin (odd N >= 3), svetlichny (N=3)."""
    if not _REGISTRY:
        _load_builtin()
    name = name.lower()
    default_n = {"chsh": 2, "mermin": 3, "svetlichny": 3}
    n = num_parties if num_parties is not None else default_n.get(name)
    if name == "chsh" and n != 2:
        raise ValueError("CHSH is bipartite")
    if name == "mermin" and (n is None or n < 3 or n % 2 == 0):
        raise ValueError("Mermin inequality is catalogued for odd N >= 3")
    if name == "svetlichny" and n != 3:
        raise ValueError("Svetlichny inequality is catalogued for N = 3")
    key = f"{name}:{n}"
    if key in _REGISTRY:
        return functional_from_record(_REGISTRY[key])
    if name == "mermin":
        return functional_from_record(mermin_record(n))
    raise KeyError(f"no catalog entry {name!r} for N={n}")

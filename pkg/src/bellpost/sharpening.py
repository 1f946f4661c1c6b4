"""Bell bounds that stay valid after coincidence postselection.

With conditional detection efficiency eta_c and t = (1 - eta_c) / eta_c:

* local models:  C + (I - C) [1 - t (sum_k M_k - N)]
* hybrid models: I + 4 C' N t, where C' is C or C_opt

Both reduce to I at eta_c = 1. Setting either bound equal to a quantum value
I_Q gives eta* = 1 / (1 + t*) in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

from .exceptions import NoThresholdError
from .inequalities import HLNHV, LHV, BellFunctional, catalog, constant_C, constant_C_opt


def _check_eta(eta_c: float) -> float:
    if not 0.0 < eta_c <= 1.0:
        raise ValueError(f"eta_c = {eta_c} outside (0, 1]")
    return float(eta_c)


def sharpened_bound_lhv(f: BellFunctional, eta_c: float) -> float:
    eta_c = _check_eta(eta_c)
    c, i = constant_C(f), f.classical_bound
    t = (1.0 - eta_c) / eta_c
    return c + (i - c) * (1.0 - t * f.settings_excess)


def effective_constant(f: BellFunctional, use_c_opt: bool = True) -> float:
    return constant_C_opt(f)[0] if use_c_opt else constant_C(f)


def sharpened_bound_hlnhv(f: BellFunctional, eta_c: float, use_c_opt: bool = True) -> float:
    eta_c = _check_eta(eta_c)
    n = f.scenario.num_parties
    return f.classical_bound + 4.0 * effective_constant(f, use_c_opt) * n * (1.0 - eta_c) / eta_c


@dataclass(frozen=True)
class SharpenedBound:
    functional: BellFunctional
    eta_c: float
    model_class: str
    use_c_opt: bool
    bound: float

    @property
    def vacuous(self) -> bool:
        """True when the bound exceeds C, which no behavior can."""
        return self.bound > constant_C(self.functional) + 1e-12

    def to_dict(self) -> dict:
        return {
            "inequality": self.functional.name,
            "eta_c": self.eta_c,
            "model_class": self.model_class,
            "use_c_opt": self.use_c_opt,
            "bound": self.bound,
            "vacuous": self.vacuous,
        }


def sharpen(f: BellFunctional, eta_c: float, model_class: str | None = None, use_c_opt: bool = True) -> SharpenedBound:
    model_class = model_class or f.model_class
    if model_class == LHV:
        bound = sharpened_bound_lhv(f, eta_c)
        use_c_opt = False
    elif model_class == HLNHV:
        bound = sharpened_bound_hlnhv(f, eta_c, use_c_opt)
    else:
        raise ValueError(f"unknown model class {model_class!r}")
    return SharpenedBound(f, float(eta_c), model_class, use_c_opt, bound)


def threshold_eta_c(
    f: BellFunctional, quantum_value: float | None = None, model_class: str | None = None, use_c_opt: bool = True
) -> float:
    """Conditional efficiency at which the sharpened bound equals the quantum value."""
    model_class = model_class or f.model_class
    iq = f.quantum_value if quantum_value is None else quantum_value
    if iq is None:
        raise ValueError(f"no quantum value known for {f.name!r}")
    i = f.classical_bound
    if iq <= i:
        raise NoThresholdError(f"quantum value {iq} does not exceed the classical bound {i}")
    if model_class == LHV:
        c = constant_C(f)
        t = (iq - i) / ((c - i) * f.settings_excess)
    elif model_class == HLNHV:
        t = (iq - i) / (4.0 * effective_constant(f, use_c_opt) * f.scenario.num_parties)
    else:
        raise ValueError(f"unknown model class {model_class!r}")
    return 1.0 / (1.0 + t)


def threshold_by_bisection(
    f: BellFunctional,
    quantum_value: float | None = None,
    model_class: str | None = None,
    use_c_opt: bool = True,
    tol: float = 1e-14,
) -> float:
    """Root of bound(eta_c) = I_Q for the decreasing sharpened bound."""
    model_class = model_class or f.model_class
    iq = f.quantum_value if quantum_value is None else quantum_value
    if iq <= f.classical_bound:
        raise NoThresholdError(f"quantum value {iq} does not exceed the classical bound")

    def bound(eta):
        return sharpen(f, eta, model_class, use_c_opt).bound

    lo, hi = 1e-9, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if bound(mid) > iq:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def mermin_family_threshold(num_parties: int) -> float:
    """Threshold detection efficiency for the N-party Mermin inequality, one particle per party."""
    if num_parties < 3 or num_parties % 2 == 0:
        raise ValueError("Mermin family threshold is defined for odd N >= 3")
    return threshold_eta_c(catalog("mermin", num_parties), model_class=LHV)


TABLE1_ROWS = (("chsh", 2, LHV), ("mermin", 3, LHV), ("svetlichny", 3, HLNHV))


def table1() -> list[dict]:
    """Threshold conditional efficiencies and Yurke-Stoler detector thresholds."""
    from .yurke_stoler import threshold_eta_det

    rows = []
    for name, n, cls in TABLE1_ROWS:
        f = catalog(name, n)
        eta_c_star = threshold_eta_c(f, model_class=cls, use_c_opt=True)
        rows.append(
            {
                "inequality": name,
                "parties": n,
                "model_class": cls,
                "eta_c_star": eta_c_star,
                "eta_det_star_ys": threshold_eta_det(n, eta_c_star, preset="independent"),
            }
        )
    return rows


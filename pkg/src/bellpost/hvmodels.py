"""Finite hidden-variable models with detection, and numerical oracles for
the postselection lemmas.

A model is a mixture over a finite hidden variable lambda. Every component
is stored as a full detection table p(a, d | x, lambda) (the layout of
:class:`~bellpost.detection.DetectionBehavior`). Local (LHV) and hybrid
(HLNHV) models additionally keep their factors.

Compact response tables used by the generators have a trailing null slot:
``r[x, a]`` for a < |A| means "one particle registered, outcome a" and
``r[x, |A|]`` means "nothing registered".
"""

from __future__ import annotations

import itertools
import string
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .classical_bounds import ns_vertices
from .detection import (
    DetectionBehavior,
    coincidence_probability,
    conditional_efficiency,
    postselect_coincidence,
)
from .exceptions import DegeneratePostselectionError, PreconditionError, UnsupportedOperationError
from .inequalities import BellFunctional, constant_C, evaluate, setting_distance, setting_weights
from .scenario import Behavior, BellScenario, no_signaling_violation
from .sharpening import sharpened_bound_hlnhv, sharpened_bound_lhv

KINDS = ("lhv", "hlnhv", "general")
DEFAULT_SUPPORT = 8


def _null_indicator(num_outcomes: int) -> np.ndarray:
    """E[a', d]: null slot <-> count 0, real outcomes <-> count 1."""
    e = np.zeros((num_outcomes + 1, 2))
    e[:num_outcomes, 1] = 1.0
    e[num_outcomes, 0] = 1.0
    return e


def expand_compact(compact: np.ndarray, parties: Sequence[int], scenario: BellScenario) -> np.ndarray:
    """Add count axes to a compact table with axes (x_g..., a'_g...) for group ``parties``."""
    g = len(parties)
    xs = string.ascii_lowercase[:g]
    as_ = string.ascii_lowercase[g : 2 * g]
    ds = string.ascii_lowercase[2 * g : 3 * g]
    subs = [xs + as_] + [as_[i] + ds[i] for i in range(g)]
    ops = [compact] + [_null_indicator(scenario.outcome_sizes[k]) for k in parties]
    return np.einsum(",".join(subs) + "->" + xs + as_ + ds, *ops)


def _place(tables: Sequence[tuple[Sequence[int], np.ndarray]], n: int) -> np.ndarray:
    """Outer product of group tables, each with axes (x_g, a_g, d_g), onto the full layout."""
    letters = string.ascii_letters
    x_l, a_l, d_l = letters[:n], letters[n : 2 * n], letters[2 * n : 3 * n]
    subs, ops = [], []
    for parties, t in tables:
        subs.append("".join(x_l[k] for k in parties) + "".join(a_l[k] for k in parties) + "".join(d_l[k] for k in parties))
        ops.append(t)
    return np.einsum(",".join(subs) + "->" + x_l + a_l + d_l, *ops)


@dataclass(frozen=True)
class HiddenVariableModel:
    scenario: BellScenario
    weights: np.ndarray = field(repr=False)
    components: np.ndarray = field(repr=False)
    kind: str = "general"
    max_count: int = 1
    # lhv: one compact table per party, shape (L, M_k, |A_k| + 1)
    local_tables: tuple | None = field(default=None, repr=False)
    # hlnhv: the party that factorizes off, per lambda
    lone_parties: tuple | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        comp = np.asarray(self.components, dtype=float)
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if comp.shape != (w.size,) + DetectionBehavior.shape_for(self.scenario, self.max_count):
            raise ValueError(f"component shape {comp.shape} does not match the scenario")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be a probability vector")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "components", comp)

    @property
    def support(self) -> int:
        return self.weights.size

    def component_behavior(self, lam: int) -> DetectionBehavior:
        return DetectionBehavior(self.scenario, self.max_count, self.components[lam])

    def count_tables(self) -> np.ndarray:
        """p(d | x, lambda), axes (lambda, x..., d...)."""
        n = self.scenario.num_parties
        return self.components.sum(axis=tuple(range(1 + n, 1 + 2 * n)))

    def coincidence_by_lambda(self) -> np.ndarray:
        """p(d = all single | x, lambda), axes (lambda, x...)."""
        n = self.scenario.num_parties
        return self.count_tables()[(Ellipsis,) + (1,) * n]


def lhv_model(scenario: BellScenario, weights, local_tables: Sequence[np.ndarray]) -> HiddenVariableModel:
    """Product model from compact per-party tables shaped (L, M_k, |A_k| + 1)."""
    n = scenario.num_parties
    weights = np.asarray(weights, dtype=float)
    local_tables = tuple(np.asarray(t, dtype=float) for t in local_tables)
    comps = []
    for lam in range(weights.size):
        parts = [((k,), expand_compact(local_tables[k][lam], (k,), scenario)) for k in range(n)]
        comps.append(_place(parts, n))
    return HiddenVariableModel(scenario, weights, np.array(comps), "lhv", 1, local_tables, None)


def hlnhv_model(
    scenario: BellScenario, weights, lone_parties, lone_tables, group_tables
) -> HiddenVariableModel:
    """Bipartition model: for component lambda, party ``lone_parties[lam]`` factorizes off.

    ``lone_tables[lam]`` is compact (M, |A| + 1); ``group_tables[lam]`` is a
    compact table over the remaining parties in increasing order.
    """
    n = scenario.num_parties
    weights = np.asarray(weights, dtype=float)
    comps = []
    for lam in range(weights.size):
        k = int(lone_parties[lam])
        rest = tuple(j for j in range(n) if j != k)
        lone = expand_compact(np.asarray(lone_tables[lam], dtype=float), (k,), scenario)
        grp = expand_compact(np.asarray(group_tables[lam], dtype=float), rest, scenario)
        comps.append(_place([((k,), lone), (rest, grp)], n))
    return HiddenVariableModel(
        scenario, weights, np.array(comps), "hlnhv", 1, None, tuple(int(k) for k in lone_parties)
    )


def general_model(scenario: BellScenario, weights, components, max_count: int) -> HiddenVariableModel:
    return HiddenVariableModel(scenario, np.asarray(weights, float), np.asarray(components, float), "general", max_count)


def model_to_detection_behavior(m: HiddenVariableModel) -> DetectionBehavior:
    """p(a, d | x) = sum_lambda p_lambda p(a, d | x, lambda)."""
    return DetectionBehavior(m.scenario, m.max_count, np.tensordot(m.weights, m.components, axes=1))


def outcome_behavior(m: HiddenVariableModel) -> Behavior:
    """Behavior with every null outcome relabelled as the first outcome, before any postselection.

    The relabelling is local, so a local model stays local.
    """
    if m.max_count != 1:
        raise UnsupportedOperationError("relabelling assumes at most one count per party")
    n = m.scenario.num_parties
    t = m.components.sum(axis=tuple(range(1 + 2 * n, 1 + 3 * n)))
    for k in range(n):
        ax = 1 + n + k
        null = m.scenario.outcome_sizes[k]
        t = np.moveaxis(t, ax, 0).copy()
        t[0] += t[null]
        t = np.moveaxis(t[:null], 0, ax)
    return Behavior(m.scenario, np.tensordot(m.weights, t, axes=1))


def component_no_signaling(m: HiddenVariableModel) -> float:
    """Worst per-lambda violation of no-signaling (with counts treated as outcomes)."""
    n = m.scenario.num_parties
    worst = 0.0
    for lam in range(m.support):
        t = m.components[lam]
        # merge (a_k, d_k) into one outcome axis per party
        perm = list(range(n))
        for k in range(n):
            perm += [n + k, 2 * n + k]
        t = t.transpose(perm)
        shape = t.shape[:n] + tuple(t.shape[n + 2 * k] * t.shape[n + 2 * k + 1] for k in range(n))
        worst = max(worst, no_signaling_violation(t.reshape(shape), n))
    return worst


# --- random generators ------------------------------------------------------


def _dirichlet(rng: np.random.Generator, size: int, alpha: float, shape=()) -> np.ndarray:
    g = rng.gamma(alpha, size=tuple(shape) + (size,))
    g = np.maximum(g, 1e-300)
    return g / g.sum(axis=-1, keepdims=True)


def _random_compact(rng, settings: int, outcomes: int, support: int, eta_min: float, fair: bool, alpha: float):
    """Compact tables (L, M, |A| + 1) with detection probability in [eta_min, 1]."""
    if fair:
        det = rng.uniform(eta_min, 1.0, size=(support, 1)).repeat(settings, axis=1)
    else:
        det = rng.uniform(eta_min, 1.0, size=(support, settings))
    outs = _dirichlet(rng, outcomes, alpha, (support, settings))
    t = np.empty((support, settings, outcomes + 1))
    t[..., :outcomes] = outs * det[..., None]
    t[..., outcomes] = 1.0 - det
    return t


def _random_ns_pair(rng, outcomes: int, eta_min: float, alpha: float) -> np.ndarray:
    """No-signaling compact pair table (x_i, x_j, a'_i, a'_j).

    A mixture of 2-2-2 no-signaling vertices whose outputs are locally
    post-processed into (outcome, detected) with setting-dependent maps; local
    post-processing keeps the box no-signaling.
    """
    verts = ns_vertices()
    mix = _dirichlet(rng, len(verts), 0.3)
    box = np.tensordot(mix, np.array([v.table for v in verts]), axes=1)  # (x, y, a, b)
    wires = []
    for _ in range(2):
        det = rng.uniform(eta_min, 1.0, size=(2, 2))  # (x, vertex output)
        w = np.zeros((2, 2, outcomes + 1))
        keep = rng.uniform() < 0.5
        for x in range(2):
            for o in range(2):
                if keep and outcomes == 2:
                    dist = np.zeros(outcomes)
                    dist[o] = 1.0
                else:
                    dist = _dirichlet(rng, outcomes, alpha)
                w[x, o, :outcomes] = det[x, o] * dist
                w[x, o, outcomes] = 1.0 - det[x, o]
        wires.append(w)
    return np.einsum("xyab,xap,ybq->xypq", box, wires[0], wires[1])


def random_model(
    scenario: BellScenario,
    kind: str = "lhv",
    support: int = DEFAULT_SUPPORT,
    seed: int = 0,
    eta_min: float | None = None,
    fair_sampling: bool = False,
    alpha: float = 0.3,
) -> HiddenVariableModel:
    """Seeded random LHV or HLNHV model with detection.

    Weights and outcome tables are symmetric-Dirichlet draws; detection
    probabilities are uniform on [eta_min, 1]; unless given, eta_min is
    1 - 0.4 u^2 with u uniform, which keeps many draws near ideal detection
    where the sharpened bounds are tight. ``fair_sampling`` makes detection independent of
    the setting. HLNHV pair tables are mixtures of no-signaling vertices with
    local post-processing.
    """
    if support < 1:
        raise ValueError("support must be positive")
    rng = np.random.default_rng(seed)
    if eta_min is None:
        eta_min = 1.0 - 0.4 * float(rng.uniform()) ** 2
    weights = _dirichlet(rng, support, 1.0)
    n = scenario.num_parties
    if kind == "lhv":
        tables = [
            _random_compact(rng, scenario.settings[k], scenario.outcome_sizes[k], support, eta_min, fair_sampling, alpha)
            for k in range(n)
        ]
        return lhv_model(scenario, weights, tables)
    if kind == "hlnhv":
        if scenario.settings != (2, 2, 2) or scenario.outcome_sizes != (2, 2, 2):
            raise UnsupportedOperationError("random hybrid models need three two-setting, two-outcome parties")
        lone_parties = rng.integers(0, 3, size=support)
        lone_tables, pair_tables = [], []
        for _ in range(support):
            lone_tables.append(_random_compact(rng, 2, 2, 1, eta_min, fair_sampling, alpha)[0])
            pair_tables.append(_random_ns_pair(rng, 2, eta_min, alpha))
        return hlnhv_model(scenario, weights, lone_parties, lone_tables, pair_tables)
    raise ValueError(f"kind must be 'lhv' or 'hlnhv', got {kind!r}")


# --- postselected statistics ----------------------------------------------


def postselected_components(m: HiddenVariableModel) -> np.ndarray:
    """p(a | d = all single, x, lambda), axes (lambda, x..., a...).

    Components that never register a coincidence at some x get a uniform
    table there; they carry zero weight in every postselected mixture.
    """
    n = m.scenario.num_parties
    sizes = m.scenario.outcome_sizes
    sl = m.components[(Ellipsis,) + (1,) * n]
    sl = sl[(slice(None),) * (1 + n) + tuple(slice(0, s) for s in sizes)]
    norm = sl.sum(axis=tuple(range(1 + n, 1 + 2 * n)), keepdims=True)
    uniform = np.full_like(sl, 1.0 / np.prod(sizes))
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(norm > 0, sl / np.where(norm > 0, norm, 1.0), uniform)
    return out


def mixture_behavior(m: HiddenVariableModel, q: np.ndarray) -> Behavior:
    """Postselected components mixed with a setting-independent distribution q."""
    return Behavior(m.scenario, np.tensordot(q, postselected_components(m), axes=1))


def postselected_value(f: BellFunctional, m: HiddenVariableModel) -> float:
    return evaluate(f, postselect_coincidence(model_to_detection_behavior(m)))


def factorization_gap(m: HiddenVariableModel) -> float:
    """Largest deviation of p(a|d,x,lambda) from the product of its group factors.

    Hybrid components should factorize as lone party x remaining group after
    postselection, local components fully.
    """
    n = m.scenario.num_parties
    post = postselected_components(m)
    coinc = m.coincidence_by_lambda()
    worst = 0.0
    for lam in range(m.support):
        if m.kind == "lhv":
            groups = [(k,) for k in range(n)]
        elif m.kind == "hlnhv":
            k = m.lone_parties[lam]
            groups = [(k,), tuple(j for j in range(n) if j != k)]
        else:
            raise UnsupportedOperationError("general models have no declared factorization")
        p = post[lam]
        prod = np.ones_like(p)
        for g in groups:
            others = tuple(n + j for j in range(n) if j not in g)
            prod = prod * p.sum(axis=others, keepdims=True)
        mask = (coinc[lam] > 0).reshape(coinc[lam].shape + (1,) * n)
        worst = max(worst, float(np.max(np.abs(np.where(mask, p - prod, 0.0)))))
    return worst


# --- derivation oracles ------------------------------------------------------


@dataclass
class AppendixDiagnostics:
    """Intermediate quantities of a sharpened-bound derivation and its checks.

    ``margins`` maps each checked inequality to rhs - lhs; a check holds when
    its margin is at least ``-tol``.
    """

    kind: str
    eta_c: float
    postselected_value: float
    q: np.ndarray = field(repr=False)
    q_value: float
    margins: dict[str, float]
    delta: float | None = None
    p_prod: float | None = None
    p_prod_by_lambda: np.ndarray | None = field(default=None, repr=False)
    reference_setting: tuple | None = None
    l1_by_setting: dict | None = field(default=None, repr=False)
    tol: float = 1e-9

    @property
    def worst_margin(self) -> float:
        return min(self.margins.values())

    @property
    def passed(self) -> bool:
        return self.worst_margin >= -self.tol

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "eta_c": self.eta_c,
            "postselected_value": self.postselected_value,
            "q_value": self.q_value,
            "delta": self.delta,
            "p_prod": self.p_prod,
            "reference_setting": list(self.reference_setting) if self.reference_setting else None,
            "margins": self.margins,
            "passed": self.passed,
        }


def appendix_b_diagnostics(m: HiddenVariableModel, f: BellFunctional, tol: float = 1e-9) -> AppendixDiagnostics:
    """Checks the local-model chain: value <= C + (I - C) delta and the lower bound on delta.

    delta = min_x p_prod / p(d|x) with p_prod the lambda-average of
    prod_k prod_{x_k} p(d_k = 1 | x_k, lambda).
    """
    if m.kind != "lhv":
        raise PreconditionError("the local-model chain needs a local model")
    n = m.scenario.num_parties
    db = model_to_detection_behavior(m)
    coinc = coincidence_probability(db)
    if np.any(coinc <= 0):
        raise DegeneratePostselectionError("zero coincidence probability")
    eta_c = conditional_efficiency(db)[0]
    value = evaluate(f, postselect_coincidence(db))

    p_prod_lam = np.ones(m.support)
    for k in range(n):
        detected = 1.0 - m.local_tables[k][:, :, -1]  # (L, M_k)
        p_prod_lam = p_prod_lam * detected.prod(axis=1)
    p_prod = float(m.weights @ p_prod_lam)
    delta = float(np.min(p_prod / coinc))
    c, i = constant_C(f), f.classical_bound
    t = (1.0 - eta_c) / eta_c
    delta_lower = 1.0 - t * f.settings_excess

    margins = {
        "value <= C + (I-C) delta": c + (i - c) * delta - value,
        "delta >= 1 - t (sum M - N)": delta - delta_lower,
        "value <= sharpened LHV bound": sharpened_bound_lhv(f, eta_c) - value,
    }
    q = np.zeros(m.support)
    q_value = float("nan")
    if p_prod > 0:
        q = m.weights * p_prod_lam / p_prod
        q_value = evaluate(f, mixture_behavior(m, q))
        margins["q-mixture obeys I"] = i - q_value
    return AppendixDiagnostics(
        kind="B",
        eta_c=eta_c,
        postselected_value=value,
        q=q,
        q_value=q_value,
        margins=margins,
        delta=delta,
        p_prod=p_prod,
        p_prod_by_lambda=p_prod_lam,
        tol=tol,
    )


def appendix_c_diagnostics(
    m: HiddenVariableModel, f: BellFunctional, y: Sequence[int] | None = None, tol: float = 1e-9
) -> AppendixDiagnostics:
    """Checks the hybrid-model chain with reference setting y.

    For every x: sum_lambda p_lambda |p(d|x,lambda)/p(d|x) - p(d|y,lambda)/p(d|y)|
    <= 4 D(x, y) (1 - eta_c) / eta_c, followed by the resulting bound on the
    postselected value.
    """
    if m.kind == "general":
        raise PreconditionError("the hybrid chain needs a local or hybrid model")
    scen = m.scenario
    if y is None:
        y = (0,) * scen.num_parties
    y = scen.check_setting(y)
    db = model_to_detection_behavior(m)
    coinc = coincidence_probability(db)
    if np.any(coinc <= 0):
        raise DegeneratePostselectionError("zero coincidence probability")
    eta_c = conditional_efficiency(db)[0]
    value = evaluate(f, postselect_coincidence(db))
    t = (1.0 - eta_c) / eta_c
    lam_coinc = m.coincidence_by_lambda()  # (L, x...)
    ref = lam_coinc[(slice(None),) + y] / coinc[y]
    q = m.weights * ref
    q_value = evaluate(f, mixture_behavior(m, q))
    weights = setting_weights(f)

    l1 = {}
    margins = {}
    worst_l1 = np.inf
    chain = 0.0
    for x in scen.joint_settings():
        dist = setting_distance(x, y)
        gap = float(m.weights @ np.abs(lam_coinc[(slice(None),) + x] / coinc[x] - ref))
        l1[x] = gap
        worst_l1 = min(worst_l1, 4 * dist * t - gap)
        chain += weights[x] * gap
    margins["L1 gap <= 4 D(x,y) t for all x"] = worst_l1
    margins["value - q value <= sum_x w_x L1_x"] = chain - (value - q_value)
    margins["q-mixture obeys I"] = f.classical_bound - q_value
    dist_sum = sum(weights[x] * setting_distance(x, y) for x in scen.joint_settings())
    margins["value <= I + 4 t sum_x w_x D(x,y)"] = f.classical_bound + 4 * t * dist_sum - value
    margins["value <= sharpened hybrid bound (C_opt)"] = sharpened_bound_hlnhv(f, eta_c, True) - value
    margins["value <= sharpened hybrid bound (C)"] = sharpened_bound_hlnhv(f, eta_c, False) - value
    return AppendixDiagnostics(
        kind="C",
        eta_c=eta_c,
        postselected_value=value,
        q=q,
        q_value=q_value,
        margins=margins,
        reference_setting=y,
        l1_by_setting=l1,
        tol=tol,
    )


# --- ideal detectors: conservation of particle number ------------------------


def count_vectors(num_parties: int, total: int) -> list[tuple[int, ...]]:
    return [d for d in itertools.product(range(total + 1), repeat=num_parties) if sum(d) == total]


def conservation_violation(m: HiddenVariableModel, total: int) -> float:
    """Mass of every component on count vectors not summing to ``total``."""
    n = m.scenario.num_parties
    counts = m.count_tables()
    bad = 0.0
    for d in itertools.product(range(m.max_count + 1), repeat=n):
        if sum(d) != total:
            bad = max(bad, float(np.max(counts[(Ellipsis,) + d])))
    return bad


def posterior_deviation(m: HiddenVariableModel) -> tuple[float, np.ndarray]:
    """max over lambda, x of |p(lambda | coincidence, x) - p(lambda | coincidence, x_0)|."""
    lam_coinc = m.coincidence_by_lambda()
    joint = m.weights.reshape((-1,) + (1,) * (lam_coinc.ndim - 1)) * lam_coinc
    marg = joint.sum(axis=0)
    if np.any(marg <= 0):
        raise DegeneratePostselectionError("zero coincidence probability for some setting")
    post = joint / marg
    ref = post[(slice(None),) + (0,) * (post.ndim - 1)]
    dev = np.abs(post - ref.reshape((-1,) + (1,) * (post.ndim - 1)))
    return float(dev.max()), post


@dataclass
class ConservationReport:
    deviation: float
    no_signaling_violation: float
    tol: float
    posterior: np.ndarray = field(repr=False)

    @property
    def passed(self) -> bool:
        return self.deviation < self.tol

    def to_dict(self) -> dict:
        return {
            "deviation": self.deviation,
            "no_signaling_violation": self.no_signaling_violation,
            "tol": self.tol,
            "passed": self.passed,
        }


def conservation_posterior_check(m: HiddenVariableModel, total: int, tol: float = 1e-8) -> ConservationReport:
    """Posterior of lambda given a coincidence should not depend on the settings.

    Requires every component to put all mass on count vectors summing to
    ``total``. No-signaling of the components is reported, not required, so
    that a signaling negative control shows up as a failed check.
    """
    bad = conservation_violation(m, total)
    if bad > 1e-12:
        raise PreconditionError(f"model puts mass {bad:.3g} outside sum(d) = {total}")
    dev, post = posterior_deviation(m)
    return ConservationReport(dev, component_no_signaling(m), tol, post)


def _local_outcome_tables(rng, scenario: BellScenario, max_count: int, alpha: float):
    """p(a'_k | d_k, x_k) per party: null iff d_k = 0."""
    out = []
    for k in range(scenario.num_parties):
        a = scenario.outcome_sizes[k]
        t = np.zeros((max_count + 1, scenario.settings[k], a + 1))
        t[0, :, a] = 1.0
        for d in range(1, max_count + 1):
            t[d, :, :a] = _dirichlet(rng, a, alpha, (scenario.settings[k],))
        out.append(t)
    return out


def conserving_model(
    scenario: BellScenario, total: int | None = None, support: int = DEFAULT_SUPPORT, seed: int = 0, alpha: float = 0.5
) -> HiddenVariableModel:
    """Setting-independent count allocation per lambda with local setting-dependent outcomes."""
    n = scenario.num_parties
    total = n if total is None else total
    rng = np.random.default_rng(seed)
    vecs = count_vectors(n, total)
    weights = _dirichlet(rng, support, 1.0)
    comps = np.zeros((support,) + DetectionBehavior.shape_for(scenario, total))
    for lam in range(support):
        alloc = _dirichlet(rng, len(vecs), alpha)
        outs = _local_outcome_tables(rng, scenario, total, alpha)
        for d, pd in zip(vecs, alloc):
            for x in scenario.joint_settings():
                per_party = [outs[k][d[k], x[k]] for k in range(n)]
                joint = per_party[0]
                for t in per_party[1:]:
                    joint = np.multiply.outer(joint, t)
                comps[(lam,) + x + (Ellipsis,) + d] += pd * joint
    return general_model(scenario, weights, comps, total)


def signaling_conserving_model(scenario: BellScenario | None = None) -> HiddenVariableModel:
    """Two parties, two particles; party 1's setting shifts where the particles go.

    Conservation holds but the count statistics signal, so the coincidence
    posterior of lambda moves with x_1.
    """
    scen = scenario or BellScenario.dichotomic(2)
    if scen.num_parties != 2:
        raise ValueError("negative control is bipartite")
    total = 2
    comps = np.zeros((2,) + DetectionBehavior.shape_for(scen, total))
    single_prob = [lambda x: 0.9 if x[0] == 0 else 0.3, lambda x: 0.5]
    for lam in range(2):
        for x in scen.joint_settings():
            p11 = single_prob[lam](x)
            # one particle each: outcome +1 for both; doubles land on party 0 or 1 evenly
            comps[(lam,) + x + (0, 0, 1, 1)] = p11
            comps[(lam,) + x + (0, 2, 2, 0)] = (1 - p11) / 2
            comps[(lam,) + x + (2, 0, 0, 2)] = (1 - p11) / 2
    return general_model(scen, [0.5, 0.5], comps, total)


def ys_allocation_model(num_parties: int) -> HiddenVariableModel:
    """Ring source with ideal detectors; lambda is the left/right configuration of all sources."""
    from .yurke_stoler import source_targets

    scen = BellScenario.dichotomic(num_parties)
    targets = source_targets(num_parties)
    configs = list(itertools.product((0, 1), repeat=num_parties))
    comps = np.zeros((len(configs),) + DetectionBehavior.shape_for(scen, 2))
    for lam, config in enumerate(configs):
        counts = [0] * num_parties
        for s, side in enumerate(config):
            counts[targets[s][side]] += 1
        outs = []
        for c in counts:
            v = np.zeros(3)
            if c == 0:
                v[2] = 1.0
            else:
                v[:2] = 0.5
            outs.append(v)
        joint = outs[0]
        for v in outs[1:]:
            joint = np.multiply.outer(joint, v)
        for x in scen.joint_settings():
            comps[(lam,) + x + (Ellipsis,) + tuple(counts)] = joint
    weights = np.full(len(configs), 1.0 / len(configs))
    return general_model(scen, weights, comps, 2)


def lossy_local_model(seed: int = 0) -> HiddenVariableModel:
    """Bipartite local model whose detection depends on the setting (no conservation)."""
    scen = BellScenario.dichotomic(2)
    rng = np.random.default_rng(seed)
    tables = []
    for _ in range(2):
        t = np.zeros((2, 2, 3))
        for lam in range(2):
            det = [0.95, 0.4] if lam == 0 else [0.4, 0.95]
            for x in range(2):
                t[lam, x, :2] = det[x] * _dirichlet(rng, 2, 1.0)
                t[lam, x, 2] = 1 - det[x]
        tables.append(t)
    return lhv_model(scen, [0.5, 0.5], tables)


# --- alternating projections onto no-signaling + conservation ---------------


@dataclass
class ProjectionStats:
    iterations: int
    residual: float
    min_entry: float
    zero_fraction: float
    converged: bool


def _support_mask(scenario: BellScenario, total: int) -> np.ndarray:
    n = scenario.num_parties
    shape = DetectionBehavior.shape_for(scenario, total)
    mask = np.zeros(shape, dtype=bool)
    for d in count_vectors(n, total):
        for a in itertools.product(*(range(s + 1) for s in scenario.outcome_sizes)):
            ok = all((a[k] == scenario.outcome_sizes[k]) == (d[k] == 0) for k in range(n))
            if ok:
                mask[(Ellipsis,) + a + d] = True
    return mask


def _constraint_matrix(scenario: BellScenario, total: int, mask: np.ndarray) -> np.ndarray:
    """Rows: normalization per x and per-party no-signaling, on the masked variables."""
    n = scenario.num_parties
    idx = np.argwhere(mask)
    rows = []
    for x in scenario.joint_settings():
        rows.append(np.array([float(tuple(i[:n]) == x) for i in idx]))
    for k in range(n):
        other_axes = [j for j in range(n) if j != k]
        # marginal over (a_k, d_k) at x_k = 0 equals the one at x_k = xk
        for xk in range(1, scenario.settings[k]):
            for x_rest in itertools.product(*(range(scenario.settings[j]) for j in other_axes)):
                for out_rest in itertools.product(
                    *(range(scenario.outcome_sizes[j] + 1) for j in other_axes),
                    *(range(total + 1) for j in other_axes),
                ):
                    a_rest = out_rest[: n - 1]
                    d_rest = out_rest[n - 1 :]
                    row = np.zeros(len(idx))
                    hit = False
                    for v, i in enumerate(idx):
                        if tuple(i[j] for j in other_axes) != x_rest:
                            continue
                        if tuple(i[n + j] for j in other_axes) != a_rest:
                            continue
                        if tuple(i[2 * n + j] for j in other_axes) != d_rest:
                            continue
                        if i[k] == 0:
                            row[v] += 1.0
                            hit = True
                        elif i[k] == xk:
                            row[v] -= 1.0
                            hit = True
                    if hit:
                        rows.append(row)
    return np.array(rows)


def projected_conserving_model(
    scenario: BellScenario,
    total: int | None = None,
    support: int = 4,
    seed: int = 0,
    tol: float = 1e-10,
    max_iter: int = 20000,
) -> tuple[HiddenVariableModel, list[ProjectionStats]]:
    """Random components pushed onto no-signaling + conservation by alternating projections.

    Each component starts as a random nonnegative table on the
    conservation support and alternates between the affine set
    (normalization, no-signaling) and the nonnegative orthant until both
    residuals are below ``tol``.
    """
    n = scenario.num_parties
    total = n if total is None else total
    rng = np.random.default_rng(seed)
    mask = _support_mask(scenario, total)
    a_mat = _constraint_matrix(scenario, total, mask)
    b_vec = np.zeros(a_mat.shape[0])
    b_vec[: scenario.num_joint_settings] = 1.0
    pinv = np.linalg.pinv(a_mat)
    comps, stats = [], []
    for _ in range(support):
        v = rng.exponential(size=int(mask.sum()))
        it, res = 0, np.inf
        for it in range(1, max_iter + 1):
            v = v - pinv @ (a_mat @ v - b_vec)
            neg = float(max(0.0, -v.min()))
            v = np.maximum(v, 0.0)
            res = max(neg, float(np.max(np.abs(a_mat @ v - b_vec))))
            if res < tol:
                break
        full = np.zeros(mask.shape)
        full[mask] = v
        comps.append(full)
        stats.append(
            ProjectionStats(it, res, float(v.min()), float(np.mean(v < 1e-12)), res < tol)
        )
    weights = _dirichlet(rng, support, 1.0)
    return general_model(scenario, weights, np.array(comps), total), stats


# --- detection loophole -----------------------------------------------------


@dataclass
class LoopholeResult:
    found: bool
    value: float
    target: float
    eta_c: float | None
    sharpened_bound: float | None
    model: HiddenVariableModel | None = field(repr=False)
    iterations: int
    seed: int

    @property
    def satisfies_sharpened_bound(self) -> bool:
        return self.sharpened_bound is not None and self.value <= self.sharpened_bound + 1e-9

    def to_dict(self) -> dict:
        return {
            "found": self.found,
            "value": self.value,
            "target": self.target,
            "eta_c": self.eta_c,
            "sharpened_bound": self.sharpened_bound,
            "satisfies_sharpened_bound": self.satisfies_sharpened_bound,
            "iterations": self.iterations,
            "seed": self.seed,
        }


def _fast_postselected(f_coeffs, weights, tables, n, min_coinc=1e-9):
    """Postselected value of a compact local model; -inf when a setting never coincides."""
    letters = string.ascii_lowercase
    lam = "z"
    subs = [lam] + [lam + letters[k] + letters[n + k] for k in range(n)]
    out = lam + "".join(letters[:n]) + "".join(letters[n : 2 * n])
    detected = [t[:, :, :-1] for t in tables]
    num = np.einsum(",".join(subs[:1] + subs[1:]) + "->" + out[1:], weights, *detected)
    coinc = num.reshape(num.shape[:n] + (-1,)).sum(axis=-1)
    if np.any(coinc < min_coinc):
        return -np.inf
    post = num / coinc.reshape(coinc.shape + (1,) * n)
    return float(np.sum(f_coeffs * post))


def loophole_search(
    f: BellFunctional,
    target: float | None = None,
    seed: int = 0,
    iterations: int = 4000,
    restarts: int = 4,
    support: int = 4,
    step: float = 0.3,
) -> LoopholeResult:
    """Hill-climb over local models with setting-dependent detection.

    Mutation blends one compact response table (or the weights) with a fresh
    Dirichlet draw; a move is kept when the postselected value increases.
    The best model over all restarts is returned; it counts as found when
    its value exceeds ``target`` (default: the classical bound).
    """
    scen = f.scenario
    n = scen.num_parties
    target = f.classical_bound if target is None else target
    rng = np.random.default_rng(seed)
    best_val, best_model = -np.inf, None
    per_restart = max(1, iterations // max(1, restarts))
    for _ in range(restarts):
        weights = _dirichlet(rng, support, 1.0)
        tables = [
            _dirichlet(rng, scen.outcome_sizes[k] + 1, 1.0, (support, scen.settings[k])) for k in range(n)
        ]
        val = _fast_postselected(f.coefficients, weights, tables, n)
        for _ in range(per_restart):
            which = int(rng.integers(0, n + 1))
            eps = step * rng.uniform()
            if which == n:
                new_w = (1 - eps) * weights + eps * _dirichlet(rng, support, 0.5)
                cand = _fast_postselected(f.coefficients, new_w, tables, n)
                if cand > val:
                    weights, val = new_w, cand
            else:
                lam = int(rng.integers(0, support))
                xk = int(rng.integers(0, scen.settings[which]))
                new_t = [t.copy() for t in tables]
                fresh = _dirichlet(rng, scen.outcome_sizes[which] + 1, 0.3)
                new_t[which][lam, xk] = (1 - eps) * new_t[which][lam, xk] + eps * fresh
                cand = _fast_postselected(f.coefficients, weights, new_t, n)
                if cand > val:
                    tables, val = new_t, cand
        if val > best_val:
            best_val, best_model = val, (weights, tables)
    model = lhv_model(scen, best_model[0], best_model[1])
    db = model_to_detection_behavior(model)
    eta_c = conditional_efficiency(db)[0]
    value = evaluate(f, postselect_coincidence(db))
    return LoopholeResult(
        found=value > target + 1e-12,
        value=value,
        target=target,
        eta_c=eta_c,
        sharpened_bound=sharpened_bound_lhv(f, eta_c),
        model=model,
        iterations=per_restart * restarts,
        seed=seed,
    )

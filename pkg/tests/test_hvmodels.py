import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bellpost.classical_bounds import lhv_bound
from bellpost.detection import conditional_efficiency
from bellpost.exceptions import PreconditionError, UnsupportedOperationError
from bellpost.hvmodels import (
    appendix_b_diagnostics,
    appendix_c_diagnostics,
    component_no_signaling,
    conservation_posterior_check,
    conserving_model,
    factorization_gap,
    hlnhv_model,
    lhv_model,
    loophole_search,
    lossy_local_model,
    model_to_detection_behavior,
    outcome_behavior,
    postselected_value,
    projected_conserving_model,
    random_model,
    signaling_conserving_model,
    ys_allocation_model,
)
from bellpost.inequalities import catalog, evaluate
from bellpost.scenario import BellScenario
from bellpost.sharpening import sharpened_bound_lhv

from .conftest import SQRT2

S2 = BellScenario.dichotomic(2)
S3 = BellScenario.dichotomic(3)


def _deterministic(outcome, detected=True):
    t = np.zeros((1, 2, 3))
    t[0, :, outcome if detected else 2] = 1.0
    return t


def _postselected_oracle(f, weights, tables):
    """Loop oracle: sum over lambda of the detected products, normalised per setting."""
    n = len(tables)
    total = 0.0
    for x in itertools.product(range(2), repeat=n):
        num = np.zeros((2,) * n)
        for lam, w in enumerate(weights):
            for a in itertools.product(range(2), repeat=n):
                p = w
                for k in range(n):
                    p *= tables[k][lam, x[k], a[k]]
                num[a] += p
        total += float(np.sum(f.coefficients[x] * num / num.sum()))
    return total


def test_random_model_is_seeded():
    a = random_model(S2, seed=4)
    b = random_model(S2, seed=4)
    assert np.array_equal(a.components, b.components)
    assert not np.array_equal(a.components, random_model(S2, seed=5).components)


def test_single_deterministic_component(chsh):
    m = lhv_model(S2, [1.0], [_deterministic(0), _deterministic(0)])
    db = model_to_detection_behavior(m)
    assert conditional_efficiency(db)[0] == 1.0
    # every correlator is +1 -> CHSH = 2
    assert postselected_value(chsh, m) == pytest.approx(2.0, abs=1e-15)


def test_mixture_matches_loop_oracle(chsh):
    rng = np.random.default_rng(0)
    tables = [rng.dirichlet(np.ones(3), size=(3, 2)) for _ in range(2)]
    w = np.array([0.2, 0.5, 0.3])
    m = lhv_model(S2, w, tables)
    assert postselected_value(chsh, m) == pytest.approx(_postselected_oracle(chsh, w, tables), abs=1e-13)


def test_mixture_matches_loop_oracle_tripartite(mermin3):
    rng = np.random.default_rng(1)
    tables = [rng.dirichlet(np.ones(3), size=(4, 2)) for _ in range(3)]
    w = rng.dirichlet(np.ones(4))
    m = lhv_model(S3, w, tables)
    assert postselected_value(mermin3, m) == pytest.approx(_postselected_oracle(mermin3, w, tables), abs=1e-13)


@settings(max_examples=200)
@given(st.integers(0, 2**31 - 1))
def test_unpostselected_lhv_obeys_bound(seed):
    # relabelling nulls is a local operation, so the plain behavior is local
    f = catalog("chsh")
    m = random_model(S2, seed=seed, support=3)
    assert evaluate(f, outcome_behavior(m)) <= lhv_bound(f)[0] + 1e-12


def test_many_unpostselected_lhv_models(chsh, mermin3):
    for f, scen in ((chsh, S2), (mermin3, S3)):
        for seed in range(2000):
            m = random_model(scen, seed=seed, support=4)
            assert evaluate(f, outcome_behavior(m)) <= f.classical_bound + 1e-12


def test_hybrid_components_are_pairwise_no_signaling():
    for seed in range(50):
        m = random_model(S3, kind="hlnhv", seed=seed, support=3)
        assert component_no_signaling(m) < 1e-12
        assert factorization_gap(m) < 1e-12


def test_hybrid_rejects_other_scenarios():
    with pytest.raises(UnsupportedOperationError):
        random_model(S2, kind="hlnhv")


def test_lhv_factorization_gap():
    for seed in range(50):
        assert factorization_gap(random_model(S3, seed=seed)) < 1e-12


def test_perfect_detection_has_delta_one(chsh):
    m = lhv_model(S2, [0.5, 0.5], [np.concatenate([_deterministic(0), _deterministic(1)])] * 2)
    diag = appendix_b_diagnostics(m, chsh)
    assert diag.delta == 1.0
    assert diag.eta_c == 1.0
    assert diag.passed


def test_single_lambda_has_zero_l1_gap(svetlichny):
    rng = np.random.default_rng(3)
    lone = rng.dirichlet(np.ones(3), size=2)
    # product-form pair, trivially no-signaling
    pa = rng.dirichlet(np.ones(3), size=2)
    pb = rng.dirichlet(np.ones(3), size=2)
    pair = np.einsum("xa,yb->xyab", pa, pb)
    m = hlnhv_model(S3, [1.0], [0], [lone], [pair])
    diag = appendix_c_diagnostics(m, svetlichny)
    assert all(v == pytest.approx(0.0, abs=1e-14) for v in diag.l1_by_setting.values())
    assert diag.passed


@pytest.mark.parametrize("name, scen", [("chsh", S2), ("mermin", S3)])
def test_local_chain_holds(name, scen):
    f = catalog(name)
    for seed in range(200):
        diag = appendix_b_diagnostics(random_model(scen, seed=seed), f)
        assert diag.passed, (seed, diag.margins)


def test_hybrid_chain_holds(svetlichny):
    for seed in range(200):
        diag = appendix_c_diagnostics(random_model(S3, kind="hlnhv", seed=seed), svetlichny)
        assert diag.passed, (seed, diag.margins)


def test_local_chain_requires_lhv(svetlichny):
    with pytest.raises(PreconditionError):
        appendix_b_diagnostics(random_model(S3, kind="hlnhv"), svetlichny)


@settings(max_examples=300)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=12))
def test_product_inequality(ps):
    # prod p_i >= sum p_i - L + 1 for p_i in [0, 1]
    assert np.prod(ps) >= sum(ps) - len(ps) + 1 - 1e-12


def test_product_inequality_bulk():
    rng = np.random.default_rng(8)
    p = rng.uniform(size=(100_000, 6)) ** 0.1
    assert np.all(p.prod(axis=1) >= p.sum(axis=1) - 6 + 1 - 1e-12)


def test_fair_sampling_never_violates(chsh):
    for seed in range(300):
        m = random_model(S2, seed=seed, fair_sampling=True, support=4)
        assert postselected_value(chsh, m) <= 2 + 1e-12


@pytest.mark.parametrize("n", [2, 3])
def test_conserving_models_pass(n):
    scen = BellScenario.dichotomic(n)
    for seed in range(10):
        rep = conservation_posterior_check(conserving_model(scen, seed=seed), n)
        assert rep.passed
        assert rep.no_signaling_violation < 1e-12


def test_negative_control_fails():
    rep = conservation_posterior_check(signaling_conserving_model(), 2)
    assert not rep.passed
    assert rep.deviation > 0.1
    assert rep.no_signaling_violation > 0.1


@pytest.mark.parametrize("n", [2, 3, 4])
def test_ring_allocation_posterior(n):
    rep = conservation_posterior_check(ys_allocation_model(n), n)
    assert rep.deviation == 0.0


def test_conservation_precondition():
    with pytest.raises(PreconditionError):
        conservation_posterior_check(lossy_local_model(), 2)


def test_projection_reaches_constraints():
    model, stats = projected_conserving_model(S2, support=3, seed=2)
    assert all(s.converged for s in stats)
    assert component_no_signaling(model) < 1e-8
    rep = conservation_posterior_check(model, 2)
    assert rep.deviation < 1e-7


def test_loophole_search_finds_violation(chsh):
    res = loophole_search(chsh, seed=0, iterations=3000)
    assert res.found
    assert res.value > 2
    assert res.eta_c < 2 * (SQRT2 - 1)
    assert res.satisfies_sharpened_bound
    assert res.value <= sharpened_bound_lhv(chsh, res.eta_c) + 1e-9
    assert appendix_b_diagnostics(res.model, chsh).passed


def test_loophole_search_cannot_beat_algebraic_limit(chsh):
    res = loophole_search(chsh, target=4.0, seed=1, iterations=1000)
    assert not res.found
    assert res.value <= 4.0 + 1e-12

import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bellpost.classical_bounds import lhv_bound
from bellpost.exceptions import StructuralError
from bellpost.inequalities import (
    BellFunctional,
    CorrelatorFunctional,
    catalog,
    constant_C,
    constant_C_opt,
    evaluate,
    load_catalog_file,
    setting_distance,
)
from bellpost.quantum import MeasurementSetting, chsh_optimal_settings, ghz_state, quantum_behavior
from bellpost.scenario import Behavior, BellScenario, full_correlator, uniform_behavior

from .conftest import SQRT2, brute_evaluate, random_table


def _mermin3_terms():
    # <A2 B1 C1> + <A1 B2 C1> + <A1 B1 C2> - <A2 B2 C2>, settings counted from 1
    return {(1, 0, 0): 1, (0, 1, 0): 1, (0, 0, 1): 1, (1, 1, 1): -1}


def test_mermin3_matches_written_terms(mermin3):
    scen = mermin3.scenario
    expected = np.zeros(scen.table_shape)
    for x, c in _mermin3_terms().items():
        for a in itertools.product(range(2), repeat=3):
            expected[x + a] = c * np.prod([(1, -1)[i] for i in a])
    assert np.array_equal(mermin3.coefficients, expected)


def test_chsh_on_uniform_is_zero(chsh):
    assert evaluate(chsh, uniform_behavior(chsh.scenario)) == 0.0


def test_chsh_quantum_value(chsh):
    b = quantum_behavior(ghz_state(2), chsh_optimal_settings())
    assert evaluate(chsh, b) == pytest.approx(2 * SQRT2, abs=1e-9)


def _svetlichny_optimal():
    # correlator cos(sum phi) on GHZ(3); phi_1 shifted by -pi/4 maximises Re + Im of i^m
    h = math.pi / 2
    party1 = ((h, -math.pi / 4), (h, math.pi / 4))
    rest = ((h, 0.0), (h, math.pi / 2))
    return MeasurementSetting((party1, rest, rest))


def test_svetlichny_quantum_value(svetlichny):
    b = quantum_behavior(ghz_state(3), _svetlichny_optimal())
    assert evaluate(svetlichny, b) == pytest.approx(4 * SQRT2, abs=1e-9)


def test_constants_quoted(chsh, mermin3, svetlichny):
    assert constant_C(chsh) == 4
    assert constant_C(mermin3) == 4
    assert constant_C(svetlichny) == 8
    assert chsh.classical_bound == 2 and chsh.quantum_value == pytest.approx(2 * SQRT2)
    assert mermin3.classical_bound == 2 and mermin3.quantum_value == 4
    assert svetlichny.classical_bound == 4 and svetlichny.quantum_value == pytest.approx(4 * SQRT2)


def _c_opt_oracle(f):
    n = f.scenario.num_parties
    w = {x: max(abs(f.coefficients[x + a]) for a in f.scenario.joint_outcomes()) for x in f.scenario.joint_settings()}
    return min(sum(w[x] * sum(xi != yi for xi, yi in zip(x, y)) for x in w) / n for y in w)


def test_c_opt_values(chsh, mermin3, svetlichny):
    assert constant_C_opt(svetlichny)[0] == 4
    assert constant_C_opt(chsh)[0] == 2
    assert constant_C_opt(mermin3)[0] == 2
    for f in (chsh, mermin3, svetlichny):
        assert constant_C_opt(f)[0] == pytest.approx(_c_opt_oracle(f), abs=1e-15)


def test_svetlichny_distance_sum():
    # weights are all one, so C_opt is min_y sum_x D(x, y) / 3
    xs = list(itertools.product(range(2), repeat=3))
    assert min(sum(setting_distance(x, y) for x in xs) / 3 for y in xs) == 4


@pytest.mark.parametrize("n", [3, 5, 7])
def test_mermin_family(n):
    f = catalog("mermin", n)
    assert f.classical_bound == pytest.approx(2 ** ((n - 1) / 2))
    assert constant_C(f) == 2 ** (n - 1)
    # equatorial GHZ settings: correlator cos(sum phi); shifting party 1 by -pi/2 turns Re(i^m) into Im(i^m)
    h = math.pi / 2
    first = ((h, -math.pi / 2), (h, 0.0))
    rest = ((h, 0.0), (h, math.pi / 2))
    ms = MeasurementSetting((first,) + (rest,) * (n - 1))
    assert evaluate(f, quantum_behavior(ghz_state(n), ms)) == pytest.approx(2 ** (n - 1), abs=1e-9)


@pytest.mark.parametrize("n", [3, 5])
def test_mermin_bound_by_enumeration(n):
    f = catalog("mermin", n)
    assert lhv_bound(f)[0] == pytest.approx(f.classical_bound, abs=1e-12)


@pytest.mark.parametrize(
    "name, n",
    [("chsh", 3), ("mermin", 4), ("mermin", 1), ("svetlichny", 4)],
)
def test_catalog_rejects_bad_party_counts(name, n):
    with pytest.raises(ValueError):
        catalog(name, n)


def test_catalog_unknown_name():
    with pytest.raises((KeyError, ValueError)):
        catalog("bogus", 2)


def test_bound_above_c_rejected():
    scen = BellScenario.dichotomic(2)
    with pytest.raises(ValueError):
        BellFunctional(scen, np.zeros(scen.table_shape), 1.0)


def test_evaluate_scenario_mismatch(chsh):
    with pytest.raises(StructuralError):
        evaluate(chsh, uniform_behavior(BellScenario.dichotomic(3)))


def test_distance_examples():
    assert setting_distance((0, 1, 0), (0, 1, 0)) == 0
    assert setting_distance((0, 0, 0), (1, 1, 1)) == 3
    with pytest.raises(StructuralError):
        setting_distance((0, 1), (0, 1, 0))


vec = st.lists(st.integers(0, 2), min_size=3, max_size=3)


@given(vec, vec, vec)
def test_distance_is_a_metric(x, y, z):
    assert setting_distance(x, y) == setting_distance(y, x)
    assert setting_distance(x, z) <= setting_distance(x, y) + setting_distance(y, z)
    assert (setting_distance(x, y) == 0) == (x == y)
    assert 0 <= setting_distance(x, y) <= 3


@given(st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_c_opt_never_exceeds_c(n, seed):
    rng = np.random.default_rng(seed)
    scen = BellScenario.dichotomic(n)
    coeffs = rng.normal(size=scen.table_shape)
    f = BellFunctional(scen, coeffs, 0.0)
    c_opt, y = constant_C_opt(f)
    assert c_opt <= constant_C(f) + 1e-12
    assert c_opt == pytest.approx(_c_opt_oracle(f), abs=1e-12)
    assert len(y) == n


@given(st.integers(2, 3), st.integers(0, 2**31 - 1))
def test_correlator_expansion_matches_correlators(n, seed):
    rng = np.random.default_rng(seed)
    scen = BellScenario.dichotomic(n)
    ct = rng.normal(size=scen.settings)
    f = CorrelatorFunctional(scen, ct).to_functional(0.0)
    b = Behavior(scen, random_table(rng, scen.table_shape, n))
    direct = sum(ct[x] * full_correlator(b, x) for x in scen.joint_settings())
    assert evaluate(f, b) == pytest.approx(direct, abs=1e-12)
    assert evaluate(f, b) == pytest.approx(brute_evaluate(f, b), abs=1e-12)


def test_catalog_file_registration(tmp_path):
    rec = {
        "name": "chsh-variant",
        "parties": 2,
        "settings": [2, 2],
        "correlator_coeffs": [[1, -1], [1, 1]],
        "classical_bound": 2,
        "model_class": "LHV",
        "quantum_value": 2 * SQRT2,
    }
    path = tmp_path / "extra.json"
    path.write_text(json.dumps([rec]))
    load_catalog_file(path)
    f = catalog("chsh-variant", 2)
    assert lhv_bound(f)[0] == 2
    assert f.quantum_value == pytest.approx(2 * SQRT2)

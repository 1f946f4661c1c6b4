import math
from functools import reduce

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bellpost.classical_bounds import lhv_bound
from bellpost.exceptions import StructuralError
from bellpost.inequalities import constant_C, evaluate
from bellpost.quantum import (
    MAX_QUBITS,
    MeasurementSetting,
    PureState,
    chsh_optimal_settings,
    ghz_state,
    observable,
    optimize_settings,
    quantum_behavior,
)
from bellpost.scenario import check_no_signaling, full_correlator, validate_behavior

from .conftest import SQRT2

PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]]),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def _projector(theta, phi, sign):
    n = (math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta))
    obs = sum(c * p for c, p in zip(n, PAULI))
    return (np.eye(2) + sign * obs) / 2


def _kron_oracle(state, ms):
    """Born rule with explicit Kronecker products of projectors."""
    n = state.num_qubits
    scen = ms.scenario()
    out = np.zeros(scen.table_shape)
    psi = state.amplitudes
    for x in scen.joint_settings():
        for a in scen.joint_outcomes():
            ops = [_projector(*ms.angles[k][x[k]], (1, -1)[a[k]]) for k in range(n)]
            proj = reduce(np.kron, ops)
            out[x + a] = float(np.real(np.conj(psi) @ proj @ psi))
    return out


def test_ghz_amplitudes():
    s = 1 / math.sqrt(2)
    assert np.allclose(ghz_state(2).amplitudes, [s, 0, 0, s], atol=0)
    for n in range(1, MAX_QUBITS + 1):
        assert np.linalg.norm(ghz_state(n).amplitudes) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("n", [0, MAX_QUBITS + 1])
def test_ghz_range(n):
    with pytest.raises(ValueError):
        ghz_state(n)


def test_state_norm_checked():
    with pytest.raises(ValueError):
        PureState(np.array([1.0, 1.0]))


def test_observable_eigenvalues():
    ev = np.linalg.eigvalsh(observable(0.7, 1.9))
    assert np.allclose(ev, [-1, 1], atol=1e-14)


def test_z_measurements_on_ghz3():
    z = ((0.0, 0.0), (0.0, 0.0))
    b = quantum_behavior(ghz_state(3), MeasurementSetting((z, z, z)))
    for x in b.scenario.joint_settings():
        t = b.at(x)
        assert t[0, 0, 0] == pytest.approx(0.5, abs=1e-15)
        assert t[1, 1, 1] == pytest.approx(0.5, abs=1e-15)
        assert t.sum() - t[0, 0, 0] - t[1, 1, 1] == pytest.approx(0.0, abs=1e-15)


def test_chsh_standard_settings(chsh):
    assert evaluate(chsh, quantum_behavior(ghz_state(2), chsh_optimal_settings())) == pytest.approx(2 * SQRT2, abs=1e-12)


def test_equatorial_identity_grid():
    grid = np.linspace(0, 2 * math.pi, 10, endpoint=False)
    h = math.pi / 2
    state = ghz_state(3)
    worst = 0.0
    for p1 in grid:
        for p2 in grid:
            ms = MeasurementSetting((((h, p1),), ((h, p2),), tuple((h, p3) for p3 in grid)))
            b = quantum_behavior(state, ms)
            for i, p3 in enumerate(grid):
                worst = max(worst, abs(full_correlator(b, (0, 0, i)) - math.cos(p1 + p2 + p3)))
    assert worst < 1e-10


@given(st.integers(1, 3), st.integers(0, 2**31 - 1))
def test_born_rule_matches_kron_oracle(n, seed):
    rng = np.random.default_rng(seed)
    amp = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    state = PureState(amp / np.linalg.norm(amp))
    ms = MeasurementSetting.from_array(rng.uniform(0, 2 * math.pi, size=4 * n), (2,) * n)
    b = quantum_behavior(state, ms)
    assert np.allclose(b.table, _kron_oracle(state, ms), atol=1e-12)
    assert validate_behavior(b) == []
    assert check_no_signaling(b)[1] < 1e-12


def test_dimension_mismatch(chsh):
    with pytest.raises(StructuralError):
        optimize_settings(chsh, ghz_state(3), restarts=1)


def test_optimizer_is_seeded(chsh):
    a = optimize_settings(chsh, ghz_state(2), restarts=2, seed=5, halvings=4)
    b = optimize_settings(chsh, ghz_state(2), restarts=2, seed=5, halvings=4)
    assert a.value == b.value
    assert np.array_equal(a.settings.to_array(), b.settings.to_array())


def test_optimizer_bracketed_from_good_start(chsh):
    start = chsh_optimal_settings().to_array()
    res = optimize_settings(chsh, ghz_state(2), restarts=1, start=start, halvings=3)
    assert lhv_bound(chsh)[0] <= res.value <= constant_C(chsh)
    assert res.value == pytest.approx(2 * SQRT2, abs=1e-12)


@pytest.mark.parametrize(
    "name, n, target",
    [("chsh", 2, 2 * SQRT2), ("mermin", 3, 4.0), ("svetlichny", 3, 4 * SQRT2)],
)
def test_optimizer_reaches_quantum_value(name, n, target, request):
    from bellpost.inequalities import catalog

    f = catalog(name, n)
    res = optimize_settings(f, ghz_state(n), seed=0)
    assert abs(res.value - target) < 1e-6
    assert res.value <= constant_C(f)

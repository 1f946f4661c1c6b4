import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bellpost.detection import (
    DetectionBehavior,
    DetectorModel,
    apply_detector_model,
    coarse_grain,
    coincidence_probability,
    conditional_efficiency,
    embed_behavior,
    postselect_coincidence,
    validate_detection_behavior,
)
from bellpost.exceptions import DegeneratePostselectionError, UnsupportedOperationError
from bellpost.scenario import Behavior, BellScenario, uniform_behavior
from bellpost.yurke_stoler import YSConfig, allocation_distribution, detection_behavior

from .conftest import random_table


def _point_mass(scen, max_count, d, a=None):
    t = np.zeros(DetectionBehavior.shape_for(scen, max_count))
    n = scen.num_parties
    if a is None:
        a = tuple(0 if dk > 0 else scen.outcome_sizes[k] for k, dk in enumerate(d))
    t[(slice(None),) * n + tuple(a) + tuple(d)] = 1.0
    return DetectionBehavior(scen, max_count, t)


def _eta_c_oracle(db):
    """Direct sums over the table for every (k, x)."""
    n = db.num_parties
    scen = db.scenario
    best = np.inf
    for x in scen.joint_settings():
        num = den = None
        for k in range(n):
            num, den = 0.0, 0.0
            for idx in itertools.product(*(range(s) for s in db.table.shape[n:])):
                d = idx[n:]
                p = db.table[x + idx]
                if all(dk == 1 for dk in d):
                    num += p
                if all(d[j] == 1 for j in range(n) if j != k):
                    den += p
            best = min(best, num / den)
    return best


def test_coarse_grain_keeps_coincidences():
    scen = BellScenario.dichotomic(3)
    db = coarse_grain(_point_mass(scen, 2, (1, 1, 1)))
    assert db.coarse
    assert coincidence_probability(db).min() == 1.0


def test_coarse_grain_merges_other_counts():
    scen = BellScenario.dichotomic(2)
    t = 0.5 * _point_mass(scen, 2, (0, 2)).table + 0.5 * _point_mass(scen, 2, (2, 0)).table
    cg = coarse_grain(DetectionBehavior(scen, 2, t))
    assert cg.count_marginal()[..., 0, 0].min() == 1.0


def test_coarse_grain_ys_three_parties():
    db = coarse_grain(detection_behavior(YSConfig(3)))
    assert coincidence_probability(db) == pytest.approx(np.full((2, 2, 2), 0.25), abs=1e-15)


def test_postselect_ideal_is_identity(rng):
    scen = BellScenario.dichotomic(3)
    b = Behavior(scen, random_table(rng, scen.table_shape, 3))
    assert np.allclose(postselect_coincidence(embed_behavior(b)).table, b.table, atol=1e-15)


@given(st.integers(2, 3), st.integers(0, 2**31 - 1))
def test_x_independent_losses_are_harmless(n, seed):
    rng = np.random.default_rng(seed)
    scen = BellScenario.dichotomic(n)
    b = Behavior(scen, random_table(rng, scen.table_shape, n))
    dets = [DetectorModel(rng.uniform(0.2, 1), rng.uniform(0.2, 1)) for _ in range(n)]
    db = apply_detector_model({(1,) * n: 1.0}, dets, b)
    assert validate_detection_behavior(db, 1e-12) == []
    assert np.allclose(postselect_coincidence(db).table, b.table, atol=1e-12)


def test_zero_coincidence_names_setting():
    scen = BellScenario.dichotomic(2)
    t = embed_behavior(uniform_behavior(scen)).table.copy()
    t[1, 0] = 0.0
    t[(1, 0) + (2, 2) + (0, 0)] = 1.0  # nobody registers at x = (1, 0)
    with pytest.raises(DegeneratePostselectionError) as err:
        postselect_coincidence(DetectionBehavior(scen, 1, t))
    assert err.value.setting == (1, 0)


@pytest.mark.parametrize("n", [2, 3])
@pytest.mark.parametrize("eta_det, eta_tra", [(0.8, 1.0), (0.9, 0.7)])
def test_one_particle_each_gives_product_efficiency(n, eta_det, eta_tra):
    db = apply_detector_model({(1,) * n: 1.0}, DetectorModel(eta_det, eta_tra), uniform_behavior(BellScenario.dichotomic(n)))
    eta, _, _ = conditional_efficiency(db)
    assert eta == pytest.approx(eta_det * eta_tra, abs=1e-14)
    assert eta == pytest.approx(_eta_c_oracle(db), abs=1e-14)


def test_ideal_ys_is_one():
    assert conditional_efficiency(detection_behavior(YSConfig(4)))[0] == 1.0


def test_on_off_bipartite_two_thirds():
    db = detection_behavior(YSConfig(2, DetectorModel.on_off(1.0)))
    assert conditional_efficiency(db)[0] == pytest.approx(2 / 3, abs=1e-15)


def test_total_transmission_loss():
    db = apply_detector_model(allocation_distribution(3), DetectorModel(1.0, 0.0), scenario=BellScenario.dichotomic(3))
    assert db.count_marginal()[(Ellipsis, 0, 0, 0)].min() == 1.0


def test_ideal_ys_coincidence_mass():
    for n in (2, 3, 4):
        db = detection_behavior(YSConfig(n))
        assert coincidence_probability(db) == pytest.approx(np.full((2,) * n, 2 / 2**n), abs=1e-15)


@pytest.mark.parametrize("eta", [0.5, 0.8, 0.95, 1.0])
def test_ys3_independent_closed_form(eta):
    db = detection_behavior(YSConfig(3, DetectorModel.independent(eta)))
    assert conditional_efficiency(db)[0] == pytest.approx(eta / (3 - 2 * eta), abs=1e-14)
    assert _eta_c_oracle(db) == pytest.approx(eta / (3 - 2 * eta), abs=1e-14)


def test_three_particles_unsupported():
    with pytest.raises(UnsupportedOperationError):
        apply_detector_model({(3, 0): 1.0}, DetectorModel(), scenario=BellScenario.dichotomic(2))


def test_monotone_on_grid():
    grid = np.linspace(0.3, 1.0, 8)
    for n in (2, 3):
        for et in grid:
            vals = [conditional_efficiency(detection_behavior(YSConfig(n, DetectorModel.independent(e, et))))[0] for e in grid]
            assert all(b >= a - 1e-15 for a, b in zip(vals, vals[1:]))
        for e in grid:
            vals = [conditional_efficiency(detection_behavior(YSConfig(n, DetectorModel.independent(e, et))))[0] for et in grid]
            assert all(b >= a - 1e-15 for a, b in zip(vals, vals[1:]))


def test_deterministic_all_single_gives_one(rng):
    scen = BellScenario.dichotomic(2)
    assert conditional_efficiency(embed_behavior(Behavior(scen, random_table(rng, scen.table_shape, 2))))[0] == 1.0


@pytest.mark.parametrize("kwargs", [{"eta_det": 1.2}, {"eta_tra": -0.1}, {"eta_1of2": 0.5, "eta_det": 0.9}])
def test_detector_validation(kwargs):
    with pytest.raises(ValueError):
        DetectorModel(**kwargs)


@given(st.floats(0, 1), st.floats(0, 1), st.booleans())
def test_count_channel_oracle(eta_det, eta_tra, on_off):
    dm = DetectorModel.on_off(eta_det, eta_tra) if on_off else DetectorModel.independent(eta_det, eta_tra)
    ch = dm.count_channel()
    assert np.allclose(ch.sum(axis=1), 1.0, atol=1e-14)
    # one sent particle: registered iff it survives and is detected
    assert ch[1, 1] == pytest.approx(eta_det * eta_tra, abs=1e-14)
    # two sent, independent detection: each particle survives and clicks independently
    p = eta_det * eta_tra
    if not on_off:
        assert ch[2, 1] == pytest.approx(2 * p * (1 - p), abs=1e-12)
        assert ch[2, 2] == pytest.approx(p * p, abs=1e-12)
    else:
        assert ch[2, 1] == pytest.approx(1 - (1 - p) ** 2, abs=1e-12)
        assert ch[2, 2] == 0.0


def test_null_mismatch_reported():
    scen = BellScenario.dichotomic(2)
    t = np.zeros(DetectionBehavior.shape_for(scen, 1))
    t[..., 0, 0, 0, 0] = 1.0  # real outcomes with zero counts
    problems = validate_detection_behavior(DetectionBehavior(scen, 1, t))
    assert any("null" in p for p in problems)

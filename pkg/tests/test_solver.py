import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import assert_binary_partition, random_instance
from threshseg.energy import EMPTY_PHASE_FIDELITY, fidelity, phase_stats
from threshseg.field import Grid, ImageField, Partition
from threshseg.oracle import lloyd_assign, make_phantom, misclassification_rate
from threshseg.solver import (DECAY_ABORT, MAX_ITER, TOLERANCE_MET, DecayViolation, SolverConfig,
                              compute_scores, initialize, scores_for, solve, threshold)
from threshseg.spectral import ConvolutionPlan, convolve_direct


@pytest.mark.parametrize("kwargs", [dict(n=1), dict(dt=0), dict(lam=-1), dict(max_iter=0),
                                    dict(tau=-0.1), dict(init="spiral")])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)


def test_stripes_init():
    u = initialize(Grid(4, 4), SolverConfig(n=2, init="stripes"))
    np.testing.assert_array_equal(u.labels[:2], 0)
    np.testing.assert_array_equal(u.labels[2:], 1)


def test_random_init_deterministic():
    cfg = SolverConfig(n=3, init="random", seed=9)
    a, b = initialize(Grid(20, 20), cfg), initialize(Grid(20, 20), cfg)
    assert a == b
    assert set(np.unique(a.labels)) == {0, 1, 2}


def test_circles_init_two_phase_is_centered_disk():
    u = initialize(Grid(64, 64), SolverConfig(n=2, init="circles"))
    assert u.labels[32, 32] == 0 and u.labels[0, 0] == 1
    inside = np.count_nonzero(u.labels == 0)
    assert inside == pytest.approx(math.pi * (0.3 * 64) ** 2, rel=0.05)


@pytest.mark.parametrize("n", [3, 4, 6])
def test_circles_init_uses_every_phase(n):
    u = initialize(Grid(96, 80), SolverConfig(n=n, init="circles"))
    assert set(np.unique(u.labels)) == set(range(n))


def test_kmeans_init_needs_image_and_is_seeded():
    ph = make_phantom("four-quadrant", 32, 0.1, seed=2)
    cfg = SolverConfig(n=4, init="kmeans", seed=3)
    with pytest.raises(ValueError):
        initialize(ph.image.grid, cfg)
    a = initialize(ph.image.grid, cfg, ph.image)
    assert a == initialize(ph.image.grid, cfg, ph.image)
    assert misclassification_rate(a.labels, ph.truth) < 0.05


def test_scores_lambda_zero_is_fidelity(rng):
    f, u = random_instance(rng, 16, 3)
    plan = ConvolutionPlan.create(f.grid, 0.02)
    cfg = SolverConfig(n=3, dt=0.02, lam=0.0)
    np.testing.assert_array_equal(scores_for(f, u, plan, cfg), fidelity(f, phase_stats(f, u)))


def test_scores_full_phase_equals_fidelity(rng):
    f, _ = random_instance(rng, 16, 2)
    u = Partition(f.grid, 2, np.zeros((16, 16), dtype=int))
    cfg = SolverConfig(n=2, dt=0.02, lam=0.1)
    phi = scores_for(f, u, ConvolutionPlan.create(f.grid, 0.02), cfg)
    g = fidelity(f, phase_stats(f, u))
    np.testing.assert_allclose(phi[0], g[0], atol=1e-10)


def test_scores_match_direct_linearization(rng):
    f, u = random_instance(rng, 8, 3, d=2)
    dt, lam = 0.04, 0.03
    cfg = SolverConfig(n=3, dt=dt, lam=lam)
    phi = scores_for(f, u, ConvolutionPlan.create(f.grid, dt), cfg)
    g = fidelity(f, phase_stats(f, u))
    # coefficient of u_i in the linearized functional, summed over j != i
    coef = 2 * lam * math.sqrt(math.pi) / math.sqrt(dt)
    for i in range(3):
        ref = g[i] + sum(coef * convolve_direct(f.grid, dt, u.indicator(j))
                         for j in range(3) if j != i)
        np.testing.assert_allclose(phi[i], ref, atol=1e-9)


def test_threshold_strict_argmin_and_ties():
    assert threshold(np.array([0.2, 0.1, 0.5]).reshape(3, 1, 1) * np.ones((3, 2, 2))).labels[0, 0] == 1
    assert threshold(np.full((2, 2, 2), 0.3)).labels[0, 0] == 0
    phi = np.full((3, 2, 2), EMPTY_PHASE_FIDELITY)
    phi[2] = 5.0
    np.testing.assert_array_equal(threshold(phi).labels, 2)


def test_fixed_point_two_level_stripes():
    lab = np.zeros((16, 16), dtype=int)
    lab[8:] = 1
    f = ImageField.from_array(lab.astype(float))
    res = solve(f, SolverConfig(n=2, dt=0.03, lam=0.0, init="stripes"))
    assert res.converged and res.stop_reason == TOLERANCE_MET
    assert res.iterations == 1 and res.reports[-1].e_k == 0.0
    np.testing.assert_array_equal(res.final.labels, lab)


def test_noisy_two_phase_recovery():
    ph = make_phantom("two-level", 128, 0.2, seed=4)
    res = solve(ph.image, SolverConfig(n=2, dt=0.03, lam=0.01))
    assert res.converged and res.iterations <= 50
    assert misclassification_rate(res.final.labels, ph.truth) < 0.01


def test_max_iter_stop():
    ph = make_phantom("two-level", 64, 0.3, seed=1)
    res = solve(ph.image, SolverConfig(n=2, dt=0.03, lam=0.01, max_iter=1))
    assert not res.converged and res.stop_reason == MAX_ITER
    assert len(res.reports) == 2


def test_rerun_from_fixed_point_changes_nothing():
    ph = make_phantom("disks", 64, 0.15, seed=3)
    cfg = SolverConfig(n=4, dt=0.01, lam=0.003, init="kmeans")
    res = solve(ph.image, cfg)
    again = solve(ph.image, cfg, init=res.final)
    assert again.iterations == 1 and again.reports[-1].changed_pixels == 0
    assert again.final == res.final


def test_sink_receives_every_report():
    ph = make_phantom("two-level", 32, 0.2, seed=0)
    seen = []
    res = solve(ph.image, SolverConfig(n=2, dt=0.03, lam=0.01), sink=seen.append)
    assert [r.k for r in seen] == list(range(len(res.reports)))
    assert math.isnan(seen[0].e_k)


def test_determinism():
    ph = make_phantom("four-quadrant", 48, 0.2, seed=8)
    cfg = SolverConfig(n=4, init="random", seed=5, dt=0.01, lam=0.003)
    a, b = solve(ph.image, cfg), solve(ph.image, cfg)
    assert a.final == b.final
    assert [r.energy.total for r in a.reports] == [r.energy.total for r in b.reports]


def test_empty_phase_drops_out(caplog):
    f = ImageField.from_array(np.full((16, 16), 0.5))
    u = Partition(f.grid, 3, np.zeros((16, 16), dtype=int))
    u.labels[:8] = 1
    res = solve(f, SolverConfig(n=3, dt=0.05, lam=0.01), init=u)
    assert res.converged
    assert np.count_nonzero(res.final.labels == 2) == 0
    assert "empty phases" in caplog.text


def test_decay_violation_is_reported(monkeypatch):
    import threshseg.solver as solver_mod

    ph = make_phantom("two-level", 32, 0.2, seed=0)
    noise = np.random.default_rng(0)
    # random scores make thresholding pick arbitrary phases
    monkeypatch.setattr(solver_mod, "compute_scores",
                        lambda g, smoothed, config: noise.random(g.shape))
    with pytest.raises(DecayViolation) as info:
        solve(ph.image, SolverConfig(n=2, dt=0.03, lam=0.01))
    assert info.value.result.stop_reason == DECAY_ABORT
    assert info.value.after.total > info.value.before.total


def test_lambda_zero_step_equals_lloyd(rng):
    f, u = random_instance(rng, 16, 3)
    means = rng.random((3, 1))
    stats = phase_stats(f, u)
    stats.means[:] = means
    phi = compute_scores(fidelity(f, stats), np.zeros((3, 16, 16)), SolverConfig(n=3, lam=0.0))
    np.testing.assert_array_equal(threshold(phi).labels, lloyd_assign(f, means))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 4), st.floats(0.005, 0.1),
       st.floats(0.0, 0.05))
def test_energy_decays_and_partitions_stay_binary(seed, n, dt, lam):
    rng = np.random.default_rng(seed)
    f = ImageField.from_array(rng.random((24, 24)) + (rng.random((24, 24)) < 0.5))
    res = solve(f, SolverConfig(n=n, dt=dt, lam=lam, init="random", seed=seed, max_iter=200),
                keep_partitions=True)
    e = res.energies
    assert np.all(e[1:] <= e[:-1] + 1e-9 * (1 + np.abs(e[:-1])))
    for u in res.partitions:
        assert_binary_partition(u)
    assert all(r.e_k >= 0 for r in res.reports[1:])


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_relabeling_equivariance(seed):
    rng = np.random.default_rng(seed)
    n = 3
    f = ImageField.from_array(rng.random((20, 20, 2)))
    init = Partition(f.grid, n, rng.integers(0, n, size=(20, 20)))
    perm = rng.permutation(n)
    cfg = SolverConfig(n=n, dt=0.02, lam=0.005, max_iter=100)
    a = solve(f, cfg, init=init)
    b = solve(f, cfg, init=Partition(f.grid, n, perm[init.labels]))
    np.testing.assert_array_equal(perm[a.final.labels], b.final.labels)

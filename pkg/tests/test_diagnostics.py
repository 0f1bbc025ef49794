import logging
import math

import numpy as np
import pytest

from kernel_infer.basis import SplineSpace, interpolate
from kernel_infer.diagnostics import (DegenerateMisfit, Misfit, as_kernel, coercivity_snapshot,
                                      discrete_coercivity, estimate_cT, random_matrix_mc,
                                      trajectory_bound_check)
from kernel_infer.dynamics import (Trajectory, constant, model_velocities,
                                   sample_initial, simulate, trunc_lj)
from kernel_infer.learn import learn_kernel
from oracles import coercivity_brute

# frozen from coercivity_brute over random pair configurations and misfits
N2_RATIO = 0.5


def random_misfit(rng):
    c = rng.normal(size=4)
    return lambda r: c[0] * np.sin(c[1] * r) + c[2] * r + c[3] * r * r


def polygon(n, side, rng):
    rad = side / (2 * math.sin(math.pi / n))
    ang = rng.uniform(0, 2 * math.pi) + 2 * math.pi * np.arange(n) / n
    return rad * np.stack([np.cos(ang), np.sin(ang)], 1) + rng.uniform(-3, 3, size=2)


def test_misfit_vanishes_at_zero():
    K = Misfit(trunc_lj(), constant(5.0))
    assert K(np.array([0.0]))[0] == 0.0
    assert K(np.array(2.0)) == pytest.approx((trunc_lj()(2.0) - 5.0) * 2.0)


def test_zero_misfit():
    X = np.random.default_rng(0).normal(size=(6, 2))
    rep = coercivity_snapshot(X, lambda r: np.zeros_like(r))
    assert (rep.lhs, rep.rhs_unscaled, rep.ratio) == (0.0, 0.0, 0.0)


def test_triangle_identity():
    rng = np.random.default_rng(1)
    for _ in range(100):
        r = rng.uniform(0.1, 4)
        K = random_misfit(rng)
        rep = coercivity_snapshot(polygon(3, r, rng), K)
        k = K(np.array(r))
        assert rep.lhs == pytest.approx(k * k / 3, rel=1e-12)
        assert rep.lhs == pytest.approx(rep.rhs_unscaled * 9 / 18, rel=1e-12)


def test_square_identity():
    rng = np.random.default_rng(2)
    for _ in range(100):
        r = rng.uniform(0.1, 4)
        K = random_misfit(rng)
        # square of side sqrt(2) r: diagonals 2r
        rep = coercivity_snapshot(polygon(4, math.sqrt(2) * r, rng), K)
        expected = (K(np.array(2 * r)) + math.sqrt(2) * K(np.array(math.sqrt(2) * r))) ** 2 / 16
        assert rep.lhs == pytest.approx(expected, rel=1e-12)


def test_pair_ratio_is_constant():
    rng = np.random.default_rng(3)
    for _ in range(100):
        d = int(rng.integers(1, 4))
        X = rng.uniform(-3, 3, size=(2, d))
        K = random_misfit(rng)
        rep = coercivity_snapshot(X, K)
        lhs, rhs = coercivity_brute(X, K)
        assert lhs / rhs == pytest.approx(N2_RATIO, rel=1e-12)
        assert rep.ratio == pytest.approx(N2_RATIO, rel=1e-12)


def test_matches_loop_oracle():
    rng = np.random.default_rng(4)
    for _ in range(20):
        X = rng.normal(size=(int(rng.integers(2, 9)), 2))
        K = random_misfit(rng)
        rep = coercivity_snapshot(X, K)
        lhs, rhs = coercivity_brute(X, K)
        assert rep.lhs == pytest.approx(lhs, rel=1e-12)
        assert rep.rhs_unscaled == pytest.approx(rhs, rel=1e-12)


def test_rigid_motion_and_scaling():
    rng = np.random.default_rng(5)
    for _ in range(20):
        X = rng.normal(size=(7, 2))
        K = random_misfit(rng)
        th = rng.uniform(0, 2 * math.pi)
        Q = np.array([[math.cos(th), -math.sin(th)], [math.sin(th), math.cos(th)]])
        base = coercivity_snapshot(X, K)
        moved = coercivity_snapshot(X @ Q.T + rng.normal(size=2), K)
        assert moved.lhs == pytest.approx(base.lhs, rel=1e-12, abs=1e-14)
        assert moved.rhs_unscaled == pytest.approx(base.rhs_unscaled, rel=1e-12)
        for c in (2.0, -0.5, 3.7):
            scaled = coercivity_snapshot(X, lambda r: c * K(r))
            assert scaled.lhs == pytest.approx(c * c * base.lhs, rel=1e-14)
            assert scaled.rhs_unscaled == pytest.approx(c * c * base.rhs_unscaled, rel=1e-14)
            assert scaled.ratio == pytest.approx(base.ratio, rel=1e-14)


def test_trajectory_average_and_coincident_pairs(caplog):
    pos = np.array([[[0.0, 0.0], [1.0, 0.0], [1.0, 0.0]]] * 3)
    traj = Trajectory(pos, np.array([0.0, 0.5, 1.0]))
    with caplog.at_level(logging.WARNING):
        rep = discrete_coercivity(traj, lambda r: np.ones_like(r))
    assert "coincident" in caplog.text
    assert np.isfinite(rep.ratio)
    with pytest.raises(ValueError):
        discrete_coercivity(Trajectory(pos[:, :1], traj.times), lambda r: r)


def test_estimate_cT_degenerate():
    k = constant(0.7)
    traj = simulate(k, sample_initial(2, 5, 1.0, 0), 0.3, 4)
    model = interpolate(k, SplineSpace(traj.max_pairwise_distance() / 2, 6))
    with pytest.raises(DegenerateMisfit):
        estimate_cT(traj, k, model, model_velocities(k, traj))


def test_estimate_cT_upper_bound_exact_velocities():
    rng = np.random.default_rng(6)
    for t in range(20):
        k = trunc_lj(G=rng.uniform(0.5, 2), r0=rng.uniform(0.7, 1.3), M_cap=rng.uniform(5, 30))
        traj = simulate(k, sample_initial(2, int(rng.integers(4, 12)), 3.0, t), 0.5, 20)
        vel = model_velocities(k, traj)
        rep = learn_kernel(traj, int(rng.integers(4, 30)), float(rng.uniform(5, 100)), vel, k)
        assert estimate_cT(traj, k, rep.model, vel) <= 1.0 + 1e-9


def test_random_matrix_model():
    assert random_matrix_mc(10, 2, 100, zero_matrix=True) == (0.0, 0.0)
    mean, se = random_matrix_mc(50, 2, 10_000, seed=0)
    assert abs(mean - 1.0) <= 5 * se
    assert random_matrix_mc(50, 2, 200, seed=3) == random_matrix_mc(50, 2, 200, seed=3)


def test_bound_check_identical_kernels():
    k = trunc_lj(M_cap=20)
    b = trajectory_bound_check(k, k, sample_initial(2, 5, 2.0, 0), 0.5, 10)
    assert b.lhs == 0.0 and b.bound == 0.0 and b.holds


def test_bound_check_constant_shift():
    x0 = sample_initial(1, 4, 1.0, 0)
    b = trajectory_bound_check(constant(1.0), constant(1.1), x0, 1.0, 20)
    assert math.isfinite(b.bound) and b.holds and b.slack > 0
    assert b.lipschitz == 0.0 and b.sup_norm == pytest.approx(1.1)


def test_bound_check_with_spline_candidate():
    k = trunc_lj(G=0.2, M_cap=1.0)
    x0 = sample_initial(2, 6, 1.0, 1)
    cand = interpolate(k, SplineSpace(3.0, 25))
    b = trajectory_bound_check(k, cand, x0, 0.25, 10)
    assert b.holds
    assert as_kernel(cand).sup_bound == pytest.approx(np.abs(cand.coeffs).max())
    with pytest.raises(TypeError):
        as_kernel(object())

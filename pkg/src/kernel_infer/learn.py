"""Least-squares kernel estimation over constrained hat-function spaces.

For a trajectory with snapshots t_1..t_m the discrete error functional of a
candidate kernel with nodal coefficients ``a`` is

    E(a) = 1/(m N) |C a - v|^2,

where row block (k, j) of C holds (1/N) sum_i phi_l(|x_j - x_i|)(x_i - x_j)
and v stacks the observed velocities. ``minimize`` solves

    min E(a)   s.t.   2 |a|_inf + |D a|_inf <= M

through its epigraph form with two auxiliary scalars.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .basis import SplineModel, SplineSpace, constraint_value, difference_matrix
from .config import ExperimentConfig, parallel_map
from .dynamics import (Kernel, Trajectory, finite_difference_velocities,
                       model_velocities, sample_initial, simulate)
from .measures import empirical_rho, l2_rho_norm
from .qp import solve_qp

log = logging.getLogger(__name__)

M_FLOOR = 1e-12
TIKHONOV = 1e-12


class AssemblyError(ValueError):
    pass


@dataclass
class LearnProblem:
    C: np.ndarray
    v: np.ndarray
    scale: float
    diff: np.ndarray
    M: float
    space: SplineSpace

    def with_M(self, M: float) -> "LearnProblem":
        return LearnProblem(self.C, self.v, self.scale, self.diff, M, self.space)


@dataclass
class LearnReport:
    model: SplineModel
    objective: float
    kkt_residual: float
    iterations: int
    converged: bool = True
    l2_rho_error: float | None = None

    def to_json(self) -> dict:
        return dict(model=self.model.to_json(), objective=self.objective,
                    kkt_residual=self.kkt_residual, iterations=self.iterations,
                    converged=self.converged, l2_rho_error=self.l2_rho_error)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")


def assemble(traj: Trajectory, space: SplineSpace, M: float = 100.0,
             velocities=None) -> LearnProblem:
    """Build (C, v) from snapshots t_1..t_m.

    ``velocities`` replaces the backward differences (shape (m, N, d)); it
    exists for closed-loop checks with exact model velocities.
    """
    m, N, d, D = traj.m, traj.N, traj.d, space.D
    if velocities is None:
        velocities = finite_difference_velocities(traj)
    velocities = np.asarray(velocities, dtype=float)
    if velocities.shape != (m, N, d):
        raise ValueError(f"velocities must have shape {(m, N, d)}")

    C = np.zeros((m, N, d, D))
    rows = np.repeat(np.arange(N), N)
    for k in range(m):
        X = traj.positions[k + 1]
        diff = X[None, :, :] - X[:, None, :]  # diff[j, i] = x_i - x_j
        dist = np.sqrt(np.sum(diff * diff, axis=-1)).ravel()
        top = dist.max() if dist.size else 0.0
        if top > space.upper * (1 + 1e-12):
            raise AssemblyError(
                f"distance {top!r} at t={traj.times[k + 1]:g} lies outside "
                f"the spline domain [0, {space.upper!r}]")
        idx, frac, _ = space.locate(dist)
        lo = rows * D + idx
        for l in range(d):
            comp = diff[..., l].ravel()
            C[k, :, l, :] = (
                np.bincount(lo, comp * (1.0 - frac), minlength=N * D)
                + np.bincount(lo + 1, comp * frac, minlength=N * D)
            ).reshape(N, D)
    C /= N
    return LearnProblem(C.reshape(m * N * d, D), velocities.reshape(-1),
                        1.0 / (m * N), difference_matrix(space), float(M), space)


def error_functional(problem: LearnProblem, coeffs) -> float:
    r = problem.C @ np.asarray(coeffs, dtype=float) - problem.v
    return float(problem.scale * (r @ r))


def _epigraph_qp(problem: LearnProblem, M: float):
    D = problem.space.D
    C, v, sc = problem.C, problem.v, problem.scale
    P = np.zeros((D + 2, D + 2))
    P[:D, :D] = 2.0 * sc * (C.T @ C) + 2.0 * TIKHONOV * np.eye(D)
    q = np.zeros(D + 2)
    q[:D] = -2.0 * sc * (C.T @ v)

    I = np.eye(D)
    Dm = problem.diff[:-1]
    one = np.ones((D, 1))
    one_d = np.ones((D - 1, 1))
    zero = np.zeros((D, 1))
    zero_d = np.zeros((D - 1, 1))
    G = np.vstack([
        np.hstack([I, -one, zero]),  # a_l <= u
        np.hstack([-I, -one, zero]),  # -a_l <= u
        np.hstack([Dm, zero_d, -one_d]),  # (Da)_l <= w
        np.hstack([-Dm, zero_d, -one_d]),  # -(Da)_l <= w
        np.concatenate([np.zeros(D), [2.0, 1.0]])[None, :],  # 2u + w <= M
    ])
    h = np.zeros(len(G))
    h[-1] = M
    return P, q, G, h


def minimize(problem: LearnProblem, tol: float = 1e-9, max_iter: int = 20_000) -> LearnReport:
    D = problem.space.D
    M = max(problem.M, M_FLOOR)
    P, q, G, h = _epigraph_qp(problem, M)
    x0 = np.concatenate([np.zeros(D), [M / 8, M / 8]])
    res = solve_qp(P, q, G, h, x0=x0, tol=tol, max_iter=max_iter)
    a = res.x[:D].copy()
    cv = constraint_value(a)
    if cv > M:
        # remove the O(tol) overshoot; the constraint is positively homogeneous
        a *= M / cv
    if not res.converged:
        log.warning("QP stopped after %d iterations with KKT residual %.3g",
                    res.iterations, res.kkt_residual)
    model = SplineModel(problem.space, a, problem.M)
    return LearnReport(model, error_functional(problem, a), res.kkt_residual,
                       res.iterations, res.converged)


def observed_radius(traj: Trajectory) -> float:
    """Half the largest pairwise distance seen on [0, T]."""
    top = traj.max_pairwise_distance()
    return top / 2.0 if top > 0 else 0.5


def l2_rho_error(traj: Trajectory, reference, model: SplineModel) -> float:
    rho = empirical_rho(traj).rho
    return l2_rho_norm(lambda s: reference(s) - model(s), rho)


def learn_kernel(traj: Trajectory, D: int, M: float, velocities=None,
                 reference: Kernel | None = None, R: float | None = None) -> LearnReport:
    """Fit a kernel to ``traj`` on [0, 2R] with R = observed radius unless given."""
    space = SplineSpace(observed_radius(traj) if R is None else R, D)
    report = minimize(assemble(traj, space, M, velocities))
    reference = reference if reference is not None else traj.kernel
    if reference is not None:
        report.model = SplineModel(space, report.model.coeffs, M, reference.name)
        report.l2_rho_error = l2_rho_error(traj, reference, report.model)
    return report


# ---------------------------------------------------------------------------
# protocols


@dataclass
class SweepResult:
    rows: list  # (M, objective, report)
    m_star: float

    def pairs(self):
        return [(M, obj) for M, obj, _ in self.rows]


def plateau_onset(Ms, objectives, tol: float = 1e-6) -> float:
    final = objectives[-1]
    for M, obj in zip(Ms, objectives):
        if abs(obj - final) <= tol:
            return M
    return Ms[-1]


def m_sweep(traj: Trajectory, D: int, M_list, velocities=None, R=None) -> SweepResult:
    M_list = [float(M) for M in M_list]
    if not M_list or any(b < a for a, b in zip(M_list, M_list[1:])):
        raise ValueError("M_list must be a nonempty ascending list")
    space = SplineSpace(observed_radius(traj) if R is None else R, D)
    base = assemble(traj, space, M_list[0], velocities)
    reports = parallel_map(lambda M: minimize(base.with_M(M)), M_list)
    objs = [r.objective for r in reports]
    return SweepResult([(M, o, r) for M, o, r in zip(M_list, objs, reports)],
                       plateau_onset(M_list, objs))


@dataclass
class MonteCarloResult:
    space: SplineSpace
    mean: SplineModel
    std: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    reports: list = field(default_factory=list)

    def band_rows(self):
        return list(zip(self.space.knots, self.mean.coeffs, self.lo, self.hi))


def summarize_runs(coeffs):
    """Mean, unbiased stdev and normal 95% band of stacked run coefficients."""
    coeffs = np.asarray(coeffs, dtype=float)
    # centred on the first run so identical runs give exactly zero spread
    dev = coeffs - coeffs[0]
    mean = coeffs[0] + dev.mean(axis=0)
    std = dev.std(axis=0, ddof=1)
    half = 1.96 * std / np.sqrt(len(coeffs))
    return mean, std, mean - half, mean + half


def montecarlo_average(kernel: Kernel, config: ExperimentConfig, theta: int | None = None,
                       seed: int | None = None, runs=None, exact_velocities=False) -> MonteCarloResult:
    """Average Theta independent reconstructions on one shared spline space.

    Run k draws its initial condition from the Philox stream (seed, runs[k]);
    repeating a run id repeats the run. All trajectories are simulated first,
    the common R is the largest observed radius, and every run is then fit
    on that space.
    """
    theta = config.theta if theta is None else theta
    seed = config.seed if seed is None else seed
    runs = list(range(theta)) if runs is None else list(runs)
    if len(runs) < 2:
        raise ValueError("Monte Carlo averaging needs at least two runs")
    N = config.N if config.N is not None else config.N_values()[0]
    D = config.D_for(N)

    def run(rid):
        x0 = sample_initial(config.d, N, config.L, seed, run=rid)
        return simulate(kernel, x0, config.T, config.m, config.substeps, seed)

    trajs = parallel_map(run, runs)
    space = SplineSpace(max(observed_radius(t) for t in trajs), D)

    def fit(traj):
        vel = model_velocities(kernel, traj) if exact_velocities else None
        return learn_kernel(traj, D, config.M, vel, kernel, R=space.R)

    reports = parallel_map(fit, trajs)
    mean, std, lo, hi = summarize_runs([r.model.coeffs for r in reports])
    return MonteCarloResult(space, SplineModel(space, mean, config.M, kernel.name),
                            std, lo, hi, reports)

"""Numerical checks of coercivity, stability and Lipschitz estimates."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

from .basis import SplineModel
from .dynamics import Kernel, Trajectory, simulate
from .learn import assemble, error_functional
from .measures import DiscreteMeasure, empirical_rho, l2_rho_norm, wasserstein1
from .rng import stream

log = logging.getLogger(__name__)


class DegenerateMisfit(ValueError):
    """The learned kernel agrees with the reference on the support of rho."""


class ContractViolation(AssertionError):
    pass


class Misfit:
    """K(r) = (a(r) - a_hat(r)) r for two evaluable kernels."""

    def __init__(self, reference, candidate):
        self.reference = reference
        self.candidate = candidate

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        pos = r > 0
        out = np.zeros(r.shape)
        if pos.any():
            rp = r[pos]
            out[pos] = (np.asarray(self.reference(rp)) - np.asarray(self.candidate(rp))) * rp
        return out


def as_kernel(obj, name: str | None = None) -> Kernel:
    """Wrap a SplineModel (or any callable) so it can drive a simulation."""
    if isinstance(obj, Kernel):
        return obj
    if isinstance(obj, SplineModel):
        return Kernel(name or obj.kernel_name or "spline", obj,
                      float(np.max(np.abs(obj.coeffs))))
    raise TypeError(f"cannot use {type(obj).__name__} as a kernel")


@dataclass
class CoercivityReport:
    lhs: float
    rhs_unscaled: float
    ratio: float

    def to_json(self):
        return asdict(self)


def _coercivity_terms(X, K):
    N = X.shape[0]
    diff = X[:, None, :] - X[None, :, :]  # diff[i, j] = x_i - x_j
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    off = ~np.eye(N, dtype=bool)
    coincident = off & (dist == 0)
    if coincident.any():
        log.warning("%d coincident particle pairs; their unit vectors are taken as zero",
                    int(coincident.sum()) // 2)
    unit = np.zeros_like(diff)
    pos = dist > 0
    unit[pos] = diff[pos] / dist[pos][:, None]
    Kmat = K(dist)
    inner = (Kmat[:, :, None] * unit).sum(axis=1) / N
    lhs = float(np.mean(np.sum(inner * inner, axis=1)))
    rhs = float(np.sum(Kmat * Kmat)) / N ** 2
    return lhs, rhs


def coercivity_snapshot(X, K) -> CoercivityReport:
    lhs, rhs = _coercivity_terms(np.asarray(X, dtype=float), K)
    return CoercivityReport(lhs, rhs, lhs / rhs if rhs > 0 else 0.0)


def discrete_coercivity(traj: Trajectory, K) -> CoercivityReport:
    """Time averages (over t_1..t_m) of both sides of the coercivity inequality."""
    if traj.N < 2:
        raise ValueError("coercivity needs at least two particles")
    terms = np.array([_coercivity_terms(X, K) for X in traj.positions[1:]])
    lhs, rhs = terms.mean(axis=0)
    return CoercivityReport(float(lhs), float(rhs), float(lhs / rhs) if rhs > 0 else 0.0)


def estimate_cT(traj: Trajectory, reference, learned: SplineModel, velocities=None) -> float:
    """E(a_hat) / |a - a_hat|^2_{L2(rho)}; at most 1 with exact velocities."""
    problem = assemble(traj, learned.space, learned.constraint_M, velocities)
    energy = error_functional(problem, learned.coeffs)
    rho = empirical_rho(traj).rho
    denom = l2_rho_norm(lambda s: reference(s) - learned(s), rho) ** 2
    if denom < 1e-14:
        raise DegenerateMisfit(
            f"|a - a_hat|^2 in L2(rho) is {denom:.3g}; the misfit vanishes on the data")
    return energy / denom


def random_matrix_mc(N: int, d: int, trials: int, seed: int = 0,
                     zero_matrix: bool = False) -> tuple[float, float]:
    """Monte Carlo mean and standard error of |K(i,:) X_i|^2 / N.

    K(i,:) has i.i.d. standard normal entries, the rows of X_i are random unit
    vectors in R^d. The expectation is |X_i|_F^2 / N = 1.
    """
    rng = stream(seed)
    vals = np.empty(trials)
    for t in range(trials):
        krow = np.zeros(N) if zero_matrix else rng.standard_normal(N)
        U = rng.standard_normal((N, d))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        w = krow @ U
        vals[t] = (w @ w) / N
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(trials))


def _sup_and_lip(kernel, upper, n=10_000):
    s = np.linspace(0.0, upper, n)
    model = getattr(kernel, "fn", kernel)
    if isinstance(model, SplineModel):
        # the knots make the estimate exact for the spline part
        s = np.union1d(s, model.space.knots[model.space.knots <= upper])
    vals = np.asarray(kernel(s), dtype=float)
    lip = float(np.max(np.abs(np.diff(vals)) / np.diff(s))) if n > 1 else 0.0
    return float(np.max(np.abs(vals))), lip


def continuous_energy(traj: Trajectory, reference, candidate) -> float:
    """(1/T) int_0^T (1/N) sum_i |(1/N) sum_j (F[a_hat] - F[a])(x_i - x_j)|^2 dt.

    Direct double sums at every snapshot, trapezoidal rule in time.
    """
    N = traj.N
    vals = []
    for X in traj.positions:
        diff = X[None, :, :] - X[:, None, :]  # x_j - x_i
        dist = np.sqrt(np.sum(diff * diff, axis=-1))
        gap = np.zeros_like(dist)
        pos = dist > 0
        if pos.any():
            gap[pos] = np.asarray(candidate(dist[pos])) - np.asarray(reference(dist[pos]))
        res = (gap[:, :, None] * diff).sum(axis=1) / N
        vals.append(np.mean(np.sum(res * res, axis=1)))
    vals = np.asarray(vals)
    dt = np.diff(traj.times)
    return float(np.sum(0.5 * (vals[1:] + vals[:-1]) * dt) / traj.T)


@dataclass
class BoundCheck:
    lhs: float
    bound: float
    log_constant: float
    energy: float
    R: float
    sup_norm: float
    lipschitz: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.bound * (1 + 1e-12) + 1e-300

    @property
    def slack(self) -> float:
        return self.bound - self.lhs

    def to_json(self):
        out = asdict(self)
        out["holds"] = self.holds
        return out


def trajectory_bound_check(reference: Kernel, candidate, x0, T: float, m: int,
                           substeps: int = 10) -> BoundCheck:
    """sup_t |x(t) - x_hat(t)|^2 against C * E(a_hat) with the Gronwall constant

        C = 2 T^2 exp(8 T^2 (|a_hat|_inf^2 + (R Lip(a_hat))^2))

    on K = [0, 2R], R the radius bound of the candidate system.
    """
    cand = as_kernel(candidate)
    x0 = np.asarray(x0, dtype=float)
    true = simulate(reference, x0, T, m, substeps)
    approx = simulate(cand, x0, T, m, substeps)
    gap = true.positions - approx.positions
    lhs = float(np.max(np.mean(np.sum(gap * gap, axis=-1), axis=1)))

    c0 = float(np.max(np.linalg.norm(x0, axis=-1)))
    R = c0 * math.exp(2.0 * cand.sup_bound * T)
    sup, lip = _sup_and_lip(cand, 2.0 * R if R > 0 else 1.0)
    log_c = math.log(2.0 * T * T) + 8.0 * T * T * (sup ** 2 + (R * lip) ** 2)
    energy = continuous_energy(true, reference, cand)
    if energy == 0.0:
        bound = 0.0
    else:
        log_b = log_c + math.log(energy)
        bound = math.exp(log_b) if log_b < 700 else math.inf
    return BoundCheck(lhs, bound, log_c, energy, R, sup, lip)


def lipschitz_of_force(kernel, radius: float, n: int = 10_000) -> float:
    """Dense-grid estimate of Lip(F[a]) on the ball B(0, radius).

    For the radial field F[a](z) = -a(|z|) z the Jacobian has eigenvalues
    -a(s) (tangential) and -(a(s) s)' (radial), so the estimate is the larger
    of max|a| and the largest difference quotient of s -> a(s) s.
    """
    s = np.linspace(0.0, radius, n)
    a = np.asarray(kernel(s), dtype=float)
    g = a * s
    return float(max(np.max(np.abs(a)), np.max(np.abs(np.diff(g)) / np.diff(s))))


def convolve_force(kernel, mu: DiscreteMeasure, x) -> np.ndarray:
    """(F[a] * mu)(x) = -sum_y w_y a(|x - y|)(x - y), for points x of shape (n, d)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    Y = mu.points()
    z = x[:, None, :] - Y[None, :, :]
    dist = np.sqrt(np.sum(z * z, axis=-1))
    A = np.zeros_like(dist)
    pos = dist > 0
    if pos.any():
        A[pos] = kernel(dist[pos])
    return -np.einsum("ij,ij,ijd->id", A, np.broadcast_to(mu.weights, A.shape), z)


def convolution_lipschitz_check(kernel, mu: DiscreteMeasure, nu: DiscreteMeasure,
                                r: float, R: float, samples: int = 200,
                                seed: int = 0) -> tuple[float, float]:
    """Largest observed |F*mu - F*nu|(x) / W1(mu, nu) over x sampled in B(0, r).

    Returns ``(ratio, lip)`` and raises if the ratio exceeds the dense-grid
    estimate of Lip(F[a]) on B(0, R + r).
    """
    d = mu.dim
    rng = stream(seed)
    dirs = rng.standard_normal((samples, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    x = dirs * (r * rng.uniform(size=(samples, 1)) ** (1.0 / d))
    gap = np.linalg.norm(convolve_force(kernel, mu, x) - convolve_force(kernel, nu, x), axis=1)
    top = float(gap.max())
    w1 = wasserstein1(mu, nu)
    lip = lipschitz_of_force(kernel, R + r)
    if w1 == 0.0:
        if top > 1e-12:
            raise ContractViolation(
                f"W1 is zero but the convolutions differ by {top:.3g}")
        return 0.0, lip
    ratio = top / w1
    if ratio > lip * (1 + 1e-9):
        raise ContractViolation(f"observed ratio {ratio:.6g} exceeds Lipschitz estimate {lip:.6g}")
    return ratio, lip

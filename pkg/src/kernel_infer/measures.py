"""Discrete measures, Wasserstein-1 distances and pairwise-distance measures.

``empirical_rho`` builds the time-averaged law of pairwise distances along a
trajectory (``rho_bar``) and its s^2-reweighted version (``rho``); squared
``L2(rho)`` norms of kernel differences are what the learning error is
compared against.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import Trajectory, get_kernel, sample_initial, simulate
from .transport import solve_transport

MAX_OT_ATOMS = 2000


class SupportSizeError(ValueError):
    pass


@dataclass(frozen=True)
class DiscreteMeasure:
    locations: np.ndarray  # (n,) on the line, or (n, d)
    weights: np.ndarray

    def __post_init__(self):
        loc = np.asarray(self.locations, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if loc.shape[0] != w.shape[0] or w.ndim != 1:
            raise ValueError("locations and weights must have matching length")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "weights", w)

    @classmethod
    def empirical(cls, points) -> "DiscreteMeasure":
        points = np.asarray(points, dtype=float)
        n = points.shape[0]
        return cls(points, np.full(n, 1.0 / n))

    @property
    def dim(self) -> int:
        return 1 if self.locations.ndim == 1 else self.locations.shape[1]

    def points(self) -> np.ndarray:
        """Locations as an (n, dim) array."""
        return self.locations.reshape(len(self.weights), -1)

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))

    def is_probability(self, tol: float = 1e-12) -> bool:
        return abs(self.mass - 1.0) <= tol


@dataclass(frozen=True)
class RhoPair:
    rho_bar: DiscreteMeasure
    rho: DiscreteMeasure

    def save_csv(self, path):
        order = np.argsort(self.rho_bar.locations, kind="stable")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "weight_bar", "weight_rho"])
            for k in order:
                w.writerow([f"{self.rho_bar.locations[k]:.17g}",
                            f"{self.rho_bar.weights[k]:.17g}",
                            f"{self.rho.weights[k]:.17g}"])


def _w1_line(x, wx, y, wy):
    support = np.concatenate([x, y])
    order = np.argsort(support, kind="stable")
    signed = np.concatenate([wx, -wy])[order]
    gaps = np.diff(support[order])
    return float(np.sum(np.abs(np.cumsum(signed)[:-1]) * gaps))


def wasserstein1(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Exact W1 with Euclidean ground cost.

    On the line this integrates |F_mu - F_nu| (the monotone coupling); in
    higher dimension it solves the transportation LP exactly.
    """
    if mu.dim != nu.dim:
        raise ValueError("measures live in different dimensions")
    for name, m in (("mu", mu), ("nu", nu)):
        if not m.is_probability(1e-9):
            raise ValueError(f"{name} is not a probability measure (mass {m.mass!r})")
    if mu.dim == 1:
        return _w1_line(mu.points()[:, 0], mu.weights, nu.points()[:, 0], nu.weights)

    keep_mu = mu.weights > 0
    keep_nu = nu.weights > 0
    P, wp = mu.points()[keep_mu], mu.weights[keep_mu]
    Q, wq = nu.points()[keep_nu], nu.weights[keep_nu]
    if len(wp) + len(wq) > MAX_OT_ATOMS:
        raise SupportSizeError(
            f"combined support of {len(wp) + len(wq)} atoms exceeds {MAX_OT_ATOMS}; "
            "project to 1D or subsample before computing W1")
    C = np.sqrt(np.sum((P[:, None, :] - Q[None, :, :]) ** 2, axis=-1))
    cost, _ = solve_transport(wp, wq / wq.sum() * wp.sum(), C)
    return cost


def w1_to_uniform(samples, lo: float, hi: float) -> float:
    """Exact W1 between the empirical law of 1D ``samples`` and U[lo, hi].

    Integrates |F_N^{-1}(u) - F^{-1}(u)| piecewise in closed form.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = len(x)
    slope = hi - lo
    u0 = np.arange(n) / n
    u1 = np.arange(1, n + 1) / n
    g0 = x - (lo + slope * u0)
    g1 = x - (lo + slope * u1)
    same_sign = g0 * g1 >= 0
    straight = np.abs(g0 + g1) / 2.0 * (u1 - u0)
    crossing = (g0 * g0 + g1 * g1) / (2.0 * slope)
    return float(np.sum(np.where(same_sign, straight, crossing)))


def empirical_rho(traj: Trajectory) -> RhoPair:
    """Pairwise-distance measures over snapshots k = 1..m, all ordered pairs."""
    if traj.m < 1:
        raise ValueError("need at least two snapshots")
    X = traj.positions[1:]
    diff = X[:, :, None, :] - X[:, None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1)).ravel()
    s, inverse = np.unique(dist, return_inverse=True)
    counts = np.bincount(inverse.ravel(), minlength=len(s))
    w_bar = counts / dist.size
    return RhoPair(DiscreteMeasure(s, w_bar), DiscreteMeasure(s, s * s * w_bar))


def l2_rho_norm(f, rho: DiscreteMeasure) -> float:
    vals = np.asarray(f(rho.locations), dtype=float)
    vals = np.broadcast_to(vals, rho.weights.shape)
    bad = ~np.isfinite(vals) & (rho.weights > 0)
    if bad.any():
        raise ValueError(
            f"function is not finite at atom s={rho.locations[bad][0]!r}")
    vals = np.where(rho.weights > 0, vals, 0.0)
    return float(np.sqrt(np.sum(rho.weights * vals * vals)))


def meanfield_convergence(kernel, L: float, d: int, N_list, T: float, m: int,
                          seed: int, substeps: int = 10) -> dict:
    """W1 at time T between each N-particle run and the largest-N run.

    Runs use independent Philox streams (seed, k). For d = 1 the exact
    distance of each initial empirical measure to U[-L, L] is reported too.
    """
    N_list = [int(n) for n in N_list]
    if any(b <= a for a, b in zip(N_list, N_list[1:])):
        raise ValueError("N_list must be strictly increasing")
    if isinstance(kernel, str):
        kernel = get_kernel(kernel)
    finals, initials = [], []
    for k, N in enumerate(N_list):
        x0 = sample_initial(d, N, L, seed, run=k)
        traj = simulate(kernel, x0, T, m, substeps, seed)
        finals.append(DiscreteMeasure.empirical(traj.positions[-1]))
        initials.append(w1_to_uniform(x0[:, 0], -L, L) if d == 1 else None)
    ref = finals[-1]
    return dict(
        N=N_list,
        w1_final=[wasserstein1(mu, ref) for mu in finals],
        w1_initial=initials,
    )


def save_rows(path, header, rows):
    """Write a plain CSV with 17-significant-digit floats."""
    fmt = lambda x: f"{x:.17g}" if isinstance(x, float) else str(x)
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) for x in row])
